#include "rgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace rgan {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

Tensor gray8_to_plane(const Image8& img) {
  Tensor t({1, img.height, img.width});
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      t.data()[static_cast<std::size_t>(y) * img.width + x] =
          static_cast<float>(img.at(y, x, 0)) / 255.0f;
    }
  }
  return t;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    long v = std::stol(s, &pos);
    if (pos != s.size()) return false;
    out = static_cast<int>(v);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

Tensor preprocess(const Image8& raw, int target, const Image8* mask) {
  if (target < 8) throw ValueError("preprocess target must be >= 8");
  if (raw.width < 1 || raw.height < 1 || raw.data.empty()) throw ValueError("preprocess: empty image");
  if (raw.channels != 3) throw ValueError("preprocess expects an RGB image");
  if (mask) {
    if (mask->width != raw.width || mask->height != raw.height) {
      throw ValueError("mask size " + std::to_string(mask->width) + "x" +
                       std::to_string(mask->height) + " does not match image " +
                       std::to_string(raw.width) + "x" + std::to_string(raw.height));
    }
  }

  Tensor img = center_crop_square(rgb8_to_unit(raw));
  if (mask) {
    Tensor m = center_crop_square(gray8_to_plane(*mask));
    int side = img.dim(1);
    std::size_t plane = static_cast<std::size_t>(side) * side;
    for (std::size_t i = 0; i < plane; ++i) {
      if (m.data()[i] < 0.5f) {
        img.data()[i] = -1.0f;
        img.data()[plane + i] = -1.0f;
        img.data()[2 * plane + i] = -1.0f;
      }
    }
  }
  return resize_bilinear(img, target, target);
}

Tensor apply_augment_variant(const Tensor& pixels, int variant) {
  if (variant < 0 || variant >= kAugmentFactor) {
    throw ValueError("augment variant must be in [0,30), got " + std::to_string(variant));
  }
  int k = variant / 3;
  int flip = variant % 3;
  Tensor out = k == 0 ? pixels.clone() : rotate_bilinear(pixels, kTau * k / kAugmentRotations, -1.0f);
  if (flip == 1) out = flip_horizontal(out);
  if (flip == 2) out = flip_vertical(out);
  return out;
}

std::vector<ImageSample> augment(const std::vector<ImageSample>& samples) {
  if (samples.empty()) throw ValueError("augment: empty input");
  std::vector<ImageSample> out;
  out.reserve(samples.size() * kAugmentFactor);
  for (const auto& s : samples) {
    for (int v = 0; v < kAugmentFactor; ++v) {
      ImageSample a;
      a.pixels = apply_augment_variant(s.pixels, v);
      a.leaf_count = s.leaf_count;
      a.source_id = s.source_id;
      a.is_synthetic = s.is_synthetic;
      out.push_back(std::move(a));
    }
  }
  return out;
}

ImageSample AugmentedDataset::at(std::size_t i) const {
  const ImageSample& src = sources_[i / kAugmentFactor];
  ImageSample a;
  a.pixels = apply_augment_variant(src.pixels, static_cast<int>(i % kAugmentFactor));
  a.leaf_count = src.leaf_count;
  a.source_id = src.source_id;
  a.is_synthetic = src.is_synthetic;
  return a;
}

std::unique_ptr<Dataset> make_augmented_dataset(std::vector<ImageSample> sources,
                                                std::size_t memory_budget_mb) {
  std::size_t bytes = 0;
  for (const auto& s : sources) bytes += s.pixels.size() * sizeof(float);
  bytes *= kAugmentFactor;
  if (bytes <= memory_budget_mb * 1024 * 1024) {
    return std::make_unique<VectorDataset>(augment(sources));
  }
  return std::make_unique<AugmentedDataset>(std::move(sources));
}

std::pair<DatasetManifest, std::vector<ImageSample>> load_dataset(
    const std::filesystem::path& root, const std::filesystem::path& csv,
    const LoadOptions& options) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open CSV '" + csv.string() + "'");

  DatasetManifest manifest;
  manifest.root = root;
  std::vector<std::string> problems;
  std::set<std::string> seen;

  std::string line;
  int line_no = 0;
  bool first_data_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    std::string row = trim(line);
    if (row.empty()) continue;
    std::size_t comma = row.find(',');
    if (comma == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'filename,count', got '" + row + "'");
      continue;
    }
    std::string name = trim(row.substr(0, comma));
    std::string count_field = trim(row.substr(comma + 1));
    if (count_field.find(',') != std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": too many columns in '" + row + "'");
      continue;
    }
    int count = 0;
    if (!parse_int(count_field, count)) {
      if (first_data_line) {  // optional header row
        first_data_line = false;
        continue;
      }
      problems.push_back("line " + std::to_string(line_no) + ": count '" + count_field + "' is not an integer");
      continue;
    }
    first_data_line = false;
    if (count < 1) {
      problems.push_back("line " + std::to_string(line_no) + ": count must be >= 1, got " + count_field);
      continue;
    }
    if (!seen.insert(name).second) {
      problems.push_back("line " + std::to_string(line_no) + ": duplicate filename '" + name + "'");
      continue;
    }
    manifest.entries.emplace_back(name, count);
  }

  std::vector<ImageSample> samples;
  manifest.mask_files.resize(manifest.entries.size());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& [name, count] = manifest.entries[i];
    std::filesystem::path img_path = root / name;
    if (!std::filesystem::exists(img_path)) {
      problems.push_back("missing file '" + img_path.string() + "'");
      continue;
    }
    std::optional<Image8> mask;
    if (options.use_masks) {
      std::string mask_name = name;
      std::size_t tag = mask_name.rfind("_rgb.png");
      if (tag != std::string::npos) {
        mask_name.replace(tag, 8, "_fg.png");
        std::filesystem::path mask_path = root / mask_name;
        if (std::filesystem::exists(mask_path)) {
          try {
            mask = read_png_gray(mask_path);
            manifest.mask_files[i] = mask_name;
          } catch (const Error& e) {
            problems.push_back(std::string("bad mask: ") + e.what());
            continue;
          }
        }
      }
    }
    try {
      Image8 raw = read_png_rgb(img_path);
      ImageSample s;
      s.pixels = preprocess(raw, options.target, mask ? &*mask : nullptr);
      s.leaf_count = count;
      s.source_id = name;
      samples.push_back(std::move(s));
    } catch (const Error& e) {
      problems.push_back("'" + name + "': " + e.what());
    }
  }

  if (!problems.empty()) {
    std::string msg = "dataset '" + csv.string() + "' has " + std::to_string(problems.size()) +
                      " problem(s):";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw DatasetError(msg);
  }
  if (samples.empty()) {
    std::cerr << "warning: dataset '" << csv.string() << "' is empty\n";
  }
  return {std::move(manifest), std::move(samples)};
}

DatasetManifest export_ax(const std::vector<Tensor>& images, const std::vector<int>& counts,
                          const std::filesystem::path& dir) {
  if (images.size() != counts.size()) {
    throw ValueError("export_ax: " + std::to_string(images.size()) + " images but " +
                     std::to_string(counts.size()) + " counts");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());

  int width = 3;
  for (std::size_t digits = images.size(); digits >= 1000; digits /= 10) ++width;

  DatasetManifest manifest;
  manifest.root = dir;
  std::ofstream csv(dir / "counts.csv");
  if (!csv) throw IoError("cannot open '" + (dir / "counts.csv").string() + "' for writing");
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::ostringstream name;
    name << "plant";
    std::string num = std::to_string(i + 1);
    for (int pad = width - static_cast<int>(num.size()); pad > 0; --pad) name << '0';
    name << num << "_rgb.png";
    write_png(dir / name.str(), unit_to_rgb8(images[i]));
    csv << name.str() << "," << counts[i] << "\n";
    manifest.entries.emplace_back(name.str(), counts[i]);
  }
  csv.flush();
  if (!csv) throw IoError("write failed for '" + (dir / "counts.csv").string() + "'");
  manifest.mask_files.resize(manifest.entries.size());
  return manifest;
}

ImageSample synth_rosette(int leaf_count, int size, Rng& rng) {
  if (leaf_count < 1 || leaf_count > 16) {
    throw ValueError("synth_rosette leaf count must be in [1,16], got " + std::to_string(leaf_count));
  }
  if (size < 16) throw ValueError("synth_rosette size must be >= 16, got " + std::to_string(size));

  float s = static_cast<float>(size);
  double phase = rng.uniform(0.0f, static_cast<float>(kTau));
  float radius = s * rng.uniform(0.27f, 0.33f);
  float min_inner = std::max(1.5f, s * 0.05f);

  struct Leaf {
    double cx, cy, dirx, diry;
    float a, b;          // semi axes (along / across the leaf direction)
    float r, g, bch;     // color in [-1,1]
  };
  std::vector<Leaf> leaves;
  // half the chord between adjacent leaf centers is r*sin(pi/n)
  float gap_half = static_cast<float>(std::sin(kTau / 2.0 / std::max(2, leaf_count)));
  for (int i = 0; i < leaf_count; ++i) {
    double ang = phase + kTau * i / leaf_count;
    Leaf lf;
    float r_i = radius * rng.uniform(0.92f, 1.08f);
    lf.a = std::min(s * rng.uniform(0.15f, 0.19f), r_i - min_inner);
    lf.a = std::max(lf.a, 1.2f);
    float max_b = leaf_count == 1 ? s * 0.12f : r_i * gap_half * 0.55f;
    lf.b = std::max(1.0f, std::min(s * rng.uniform(0.075f, 0.095f), max_b));
    lf.dirx = std::cos(ang);
    lf.diry = std::sin(ang);
    lf.cx = (size - 1) / 2.0 + lf.dirx * r_i;
    lf.cy = (size - 1) / 2.0 + lf.diry * r_i;
    lf.r = rng.uniform(-0.75f, -0.45f);
    lf.g = rng.uniform(0.30f, 0.85f);
    lf.bch = rng.uniform(-0.80f, -0.50f);
    leaves.push_back(lf);
  }

  ImageSample sample;
  sample.pixels = Tensor({3, size, size});
  sample.leaf_count = leaf_count;
  sample.source_id = "synthetic";
  sample.is_synthetic = true;

  std::size_t plane = static_cast<std::size_t>(size) * size;
  float* red = sample.pixels.data();
  float* green = red + plane;
  float* blue = green + plane;

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * size + x;
      float noise = rng.uniform(-0.03f, 0.03f);
      red[i] = -0.94f + noise;
      green[i] = -0.90f + noise;
      blue[i] = -0.95f + noise;
      float best_cov = 0.0f;
      const Leaf* best = nullptr;
      for (const Leaf& lf : leaves) {
        double dx = x - lf.cx, dy = y - lf.cy;
        double u = dx * lf.dirx + dy * lf.diry;
        double v = -dx * lf.diry + dy * lf.dirx;
        double rho2 = (u * u) / (static_cast<double>(lf.a) * lf.a) +
                      (v * v) / (static_cast<double>(lf.b) * lf.b);
        if (rho2 >= 1.0) continue;
        // soft edge and a slight falloff towards the tip for texture
        float cov = static_cast<float>(std::min(1.0, (1.0 - rho2) * 3.0));
        if (cov > best_cov) {
          best_cov = cov;
          best = &lf;
        }
      }
      if (best) {
        float shade = 1.0f - 0.15f * (1.0f - best_cov);
        red[i] += best_cov * (best->r * shade - red[i]);
        green[i] += best_cov * (best->g * shade - green[i]);
        blue[i] += best_cov * (best->bch * shade - blue[i]);
      }
    }
  }
  return sample;
}

std::pair<int, int> count_range(const std::vector<ImageSample>& samples) {
  if (samples.empty()) throw ValueError("count_range: empty sample list");
  int lo = samples.front().leaf_count, hi = lo;
  for (const auto& s : samples) {
    lo = std::min(lo, s.leaf_count);
    hi = std::max(hi, s.leaf_count);
  }
  return {lo, hi};
}

}  // namespace rgan
