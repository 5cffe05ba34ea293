#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rgan/models.hpp"

namespace rgan {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_nonsmooth = 0;  // kink-straddling coordinates (networks only)
};

/// Tiny 16x16 architecture small enough for full-coordinate finite
/// differencing over every parameter tensor.
TrainConfig gradcheck_config();

/// Central finite-difference check of every differentiable primitive on
/// `seeds` random inputs away from the non-smooth points.
std::vector<GradCheckEntry> gradcheck_primitives(int seeds = 10, std::uint64_t seed = 7);

/// Checks every generator parameter through a full forward pass at the
/// gradcheck architecture (batch 2). Returns the worst coordinate error.
GradCheckEntry gradcheck_generator(const TrainConfig& cfg, std::uint64_t seed = 7);
/// Same for the discriminator.
GradCheckEntry gradcheck_discriminator(const TrainConfig& cfg, std::uint64_t seed = 7);

/// Primitives plus both full networks; the `gradcheck` CLI prints this.
std::vector<GradCheckEntry> gradcheck_report(std::uint64_t seed = 7);

}  // namespace rgan
