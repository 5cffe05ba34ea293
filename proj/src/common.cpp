#include "rgan/common.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace rgan {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& w : s_) w = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

float Rng::uniform(float lo, float hi) {
  // 24-bit mantissa so the unit sample has exact float spacing in [0, 1).
  float u = static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
  float r = lo + u * (hi - lo);
  if (r >= hi) r = std::nextafter(hi, lo);
  return r;
}

float Rng::normal(float mean, float stddev) {
  double u1 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  double r = std::sqrt(-2.0 * std::log(u1));
  double z = r * std::cos(2.0 * 3.14159265358979323846 * u2);
  return mean + stddev * static_cast<float>(z);
}

std::uint64_t Rng::below(std::uint64_t n) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

Rng Rng::fork() { return Rng(next_u64() ^ 0xa02bdbf7bb3c0a7ull); }

std::string Rng::state_string() const {
  std::ostringstream out;
  out << std::hex;
  for (std::size_t i = 0; i < s_.size(); ++i) {
    if (i) out << ' ';
    out << s_[i];
  }
  return out.str();
}

Rng Rng::from_state(const std::string& text) {
  Rng r;
  std::istringstream in(text);
  in >> std::hex;
  for (auto& w : r.s_) {
    if (!(in >> w)) throw ValueError("bad rng state string: '" + text + "'");
  }
  return r;
}

int worker_threads() {
  static int cached = [] {
    if (const char* env = std::getenv("ROSETTE_GAN_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    return static_cast<int>(hw > 8 ? 8 : hw);
  }();
  return cached;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  int threads = worker_threads();
  if (threads > n) threads = static_cast<int>(n);
  if (threads <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    std::int64_t begin = t * chunk;
    std::int64_t end = begin + chunk < n ? begin + chunk : n;
    if (begin >= end) break;
    pool.emplace_back(fn, begin, end);
  }
  for (auto& th : pool) th.join();
}

}  // namespace rgan
