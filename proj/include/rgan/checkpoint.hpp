#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rgan/config.hpp"
#include "rgan/tensor.hpp"

namespace rgan {

class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};
class BadMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class BadVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// On-disk training snapshot.
///
/// Layout: magic "ARGN", u32 version, u32 block length + UTF-8 "key=value\n"
/// lines (the TrainConfig plus underscore-prefixed state keys: rng state and
/// epoch/step counters), u32 tensor count, then per tensor: u16 name length,
/// name bytes, u8 rank, u32 dims, raw little-endian float32 payload.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainConfig config;
  std::map<std::string, std::string> state;  // "_rng", "_epoch", "_global_step", ...
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rgan
