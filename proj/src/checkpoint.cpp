#include "rgan/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace rgan {

namespace {

constexpr char kMagic[4] = {'A', 'R', 'G', 'N'};

void put_u16(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, const float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &data[i], 4);
    put_u32(out, bits);
  }
}

void need(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw TruncatedError(std::string("checkpoint truncated while reading ") + what);
  }
}

std::uint16_t get_u16(std::istream& in, const char* what) {
  unsigned char b[2];
  need(in, reinterpret_cast<char*>(b), 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  need(in, reinterpret_cast<char*>(b), 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");

  out.write(kMagic, 4);
  put_u32(out, Checkpoint::kVersion);

  std::string block;
  for (const auto& [k, v] : c.config.to_kv()) block += k + "=" + v + "\n";
  for (const auto& [k, v] : c.state) {
    if (k.empty() || k[0] != '_') throw ValueError("checkpoint state keys must start with '_'");
    block += k + "=" + v + "\n";
  }
  put_u32(out, static_cast<std::uint32_t>(block.size()));
  out.write(block.data(), static_cast<std::streamsize>(block.size()));

  put_u32(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    if (name.size() > 0xffff) throw ValueError("tensor name too long: " + name);
    if (t.rank() > 0xff) throw ValueError("tensor rank too large");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(static_cast<char>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(out, static_cast<std::uint32_t>(t.dim(i)));
    put_f32(out, t.data(), t.size());
  }
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");

  char magic[4];
  need(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw BadMagicError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  std::uint32_t version = get_u32(in, "version");
  if (version != Checkpoint::kVersion) {
    throw BadVersionError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(Checkpoint::kVersion) + ")");
  }

  std::uint32_t block_len = get_u32(in, "config block length");
  std::string block(block_len, '\0');
  need(in, block.data(), block_len, "config block");

  std::map<std::string, std::string> config_kv;
  std::map<std::string, std::string> state;
  std::size_t pos = 0;
  while (pos < block.size()) {
    std::size_t nl = block.find('\n', pos);
    if (nl == std::string::npos) nl = block.size();
    std::string line = block.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed config line '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (!key.empty() && key[0] == '_') {
      state[key] = value;
    } else {
      config_kv[key] = value;
    }
  }

  Checkpoint c;
  c.config = TrainConfig::from_kv(config_kv);
  c.state = std::move(state);

  std::uint32_t count = get_u32(in, "tensor count");
  c.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t name_len = get_u16(in, "tensor name length");
    std::string name(name_len, '\0');
    need(in, name.data(), name_len, "tensor name");
    char rank_c;
    need(in, &rank_c, 1, "tensor rank");
    int rank = static_cast<unsigned char>(rank_c);
    if (rank < 1 || rank > 8) throw CheckpointError("implausible rank for tensor '" + name + "'");
    Shape shape(static_cast<std::size_t>(rank));
    for (int d = 0; d < rank; ++d) {
      std::uint32_t dim = get_u32(in, "tensor dims");
      if (dim == 0 || dim > (1u << 28)) throw CheckpointError("implausible dim for tensor '" + name + "'");
      shape[static_cast<std::size_t>(d)] = static_cast<int>(dim);
    }
    std::size_t n = shape_numel(shape);
    std::vector<float> values(n);
    for (std::size_t j = 0; j < n; ++j) {
      std::uint32_t bits = get_u32(in, "tensor payload");
      float f;
      std::memcpy(&f, &bits, 4);
      values[j] = f;
    }
    c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return c;
}

}  // namespace rgan
