#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "rgan/common.hpp"

namespace rgan {

enum class OptimizerKind { adam, sgd };
enum class GenLossKind { non_saturating, minimax };
enum class ConditionSampling { uniform, empirical };

/// Full hyperparameter record for one training run. Everything needed to
/// rebuild both networks and resume training lives here (plus the tensor
/// table in a checkpoint).
struct TrainConfig {
  int resolution = 128;
  int z_dim = 100;
  int fc1_width = 1024;
  int base_width = 64;
  int class_count = 0;  // 0: derive from the training set
  int min_count = 1;
  int kernel_size = 5;
  int stride = 2;
  float leaky_alpha = 0.2f;
  float bn_momentum = 0.9f;
  float bn_epsilon = 1e-5f;
  // Batch norm is skipped on the generator output layer and the
  // discriminator input layer unless this is set.
  bool bn_edge_layers = false;

  int batch_size = 0;  // 0: 32 at resolution >= 128, 64 below
  int epochs = 30;
  float learning_rate = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float adam_epsilon = 1e-8f;
  OptimizerKind optimizer = OptimizerKind::adam;
  GenLossKind gen_loss = GenLossKind::non_saturating;
  ConditionSampling condition_sampling = ConditionSampling::uniform;
  int d_steps = 1;  // discriminator updates per generator update

  std::uint64_t seed = 1;
  int checkpoint_interval = 5;  // epochs between checkpoints
  int sample_grid = 4;          // side of the fixed-noise sample grid

  /// Number of stride-2 stages between 4x4 and the output resolution.
  int num_layers() const;
  int effective_batch_size() const;

  void validate() const;

  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

}  // namespace rgan
