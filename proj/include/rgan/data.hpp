#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rgan/image.hpp"
#include "rgan/tensor.hpp"

namespace rgan {

/// Aggregated per-row dataset problems (missing files, malformed rows, ...).
class DatasetError : public ValueError {
 public:
  using ValueError::ValueError;
};

struct ImageSample {
  Tensor pixels;  // [3,H,W] in [-1,1], square
  int leaf_count = 0;
  std::string source_id;
  bool is_synthetic = false;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::pair<std::string, int>> entries;  // filename, leaf count
  std::vector<std::string> mask_files;               // aligned; empty when absent
};

/// Center-crop to a square, apply the optional binary mask (background to
/// black), rescale bilinearly to target x target and map [0,255] -> [-1,1].
Tensor preprocess(const Image8& raw, int target, const Image8* mask = nullptr);

inline constexpr int kAugmentRotations = 10;
inline constexpr int kAugmentFactor = 30;  // 10 rotations x {none, hflip, vflip}

/// One of the 30 augmentation variants of an image: variant / 3 selects the
/// rotation angle 2*pi*k/10, variant % 3 selects {identity, hflip, vflip}.
/// Variant 0 is the identity and returns a bit-identical copy.
Tensor apply_augment_variant(const Tensor& pixels, int variant);

/// The full 30-fold expansion, labels preserved, in variant order per input.
std::vector<ImageSample> augment(const std::vector<ImageSample>& samples);

struct LoadOptions {
  int target = 128;
  bool use_masks = true;
};

/// Reads a directory of PNGs listed in a CSV of "filename,count" rows
/// (optional header detected). Masks named *_fg.png are applied when
/// present. Per-row problems are aggregated into one DatasetError.
std::pair<DatasetManifest, std::vector<ImageSample>> load_dataset(
    const std::filesystem::path& root, const std::filesystem::path& csv,
    const LoadOptions& options = {});

/// Writes plantXXX_rgb.png files plus a counts.csv of "filename,count" rows.
/// No masks are emitted. Returns the manifest of what was written.
DatasetManifest export_ax(const std::vector<Tensor>& images, const std::vector<int>& counts,
                          const std::filesystem::path& dir);

/// Procedurally rendered rosette: leaf_count elliptical leaves at equidistant
/// angles with jittered size and green hue on a dark background.
ImageSample synth_rosette(int leaf_count, int size, Rng& rng);

std::pair<int, int> count_range(const std::vector<ImageSample>& samples);

/// What the training loop consumes. Implementations may materialize samples
/// or render them on demand.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  virtual ImageSample at(std::size_t i) const = 0;
};

class VectorDataset final : public Dataset {
 public:
  explicit VectorDataset(std::vector<ImageSample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  ImageSample at(std::size_t i) const override { return samples_[i]; }

 private:
  std::vector<ImageSample> samples_;
};

/// Lazy 30x augmentation view: sample i is variant i%30 of source i/30.
class AugmentedDataset final : public Dataset {
 public:
  explicit AugmentedDataset(std::vector<ImageSample> sources) : sources_(std::move(sources)) {}
  std::size_t size() const override { return sources_.size() * kAugmentFactor; }
  ImageSample at(std::size_t i) const override;

 private:
  std::vector<ImageSample> sources_;
};

/// Eagerly materializes the 30x expansion when it fits the memory budget,
/// otherwise returns the lazy view.
std::unique_ptr<Dataset> make_augmented_dataset(std::vector<ImageSample> sources,
                                                std::size_t memory_budget_mb = 512);

}  // namespace rgan
