#pragma once

#include <utility>
#include <vector>

#include "rgan/config.hpp"
#include "rgan/layers.hpp"

namespace rgan {

/// One-hot leaf-count class over C classes: class_index = count - min_count.
struct ConditionVector {
  int class_index = 0;
  int num_classes = 1;
  std::vector<float> one_hot() const;
};

ConditionVector make_condition(int leaf_count, int min_count, int num_classes);

/// [C, h, w] tensor whose channel c is a constant plane equal to y[c].
Tensor spatial_replicate(const ConditionVector& y, int h, int w);

/// Stacks a batch of conditions as one-hot rows [B, C].
Tensor condition_rows(const std::vector<ConditionVector>& ys);
/// Stacks a batch of conditions as replicated channel planes [B, C, h, w].
Tensor condition_planes(const std::vector<ConditionVector>& ys, int h, int w);

/// Channel plan shared by both networks. The generator starts from a
/// base_width * 2^min(L-2,3) by 4x4 block and halves channels per stage
/// (never below base_width) down to the 3-channel image; the discriminator
/// mirrors the chain in reverse. Condition channels are added on top of
/// these counts at every stage.
struct GanArch {
  int layers = 0;
  int start_channels = 0;
  std::vector<int> g_in, g_out;  // deconv stages, 4x4 -> resolution
  std::vector<int> d_in, d_out;  // conv stages, resolution -> 4x4
};

GanArch derive_arch(const TrainConfig& cfg);

struct GeneratorParams {
  FcParams fc1, fc2;
  BatchNormParams bn_fc1, bn_fc2;
  std::vector<Conv2dParams> deconv;
  std::vector<BatchNormParams> bn_deconv;  // one per normalized deconv stage
};

struct DiscriminatorParams {
  std::vector<Conv2dParams> conv;
  std::vector<BatchNormParams> bn_conv;  // one per normalized conv stage
  FcParams fc_out;
};

template <class F>
void visit_params(GeneratorParams& p, const std::string& prefix, F&& f) {
  visit_params(p.fc1, prefix + "/fc1", f);
  visit_params(p.bn_fc1, prefix + "/bn_fc1", f);
  visit_params(p.fc2, prefix + "/fc2", f);
  visit_params(p.bn_fc2, prefix + "/bn_fc2", f);
  for (std::size_t i = 0; i < p.deconv.size(); ++i) {
    visit_params(p.deconv[i], prefix + "/deconv" + std::to_string(i + 1), f);
  }
  for (std::size_t i = 0; i < p.bn_deconv.size(); ++i) {
    visit_params(p.bn_deconv[i], prefix + "/bn_deconv" + std::to_string(i + 1), f);
  }
}

template <class F>
void visit_params(DiscriminatorParams& p, const std::string& prefix, F&& f) {
  for (std::size_t i = 0; i < p.conv.size(); ++i) {
    visit_params(p.conv[i], prefix + "/conv" + std::to_string(i + 1), f);
  }
  for (std::size_t i = 0; i < p.bn_conv.size(); ++i) {
    visit_params(p.bn_conv[i], prefix + "/bn_conv" + std::to_string(i + 1), f);
  }
  visit_params(p.fc_out, prefix + "/fc_out", f);
}

/// Fresh parameters: weights ~ N(0, 0.02), biases zero, batch-norm gamma 1 /
/// beta 0, running stats (0, 1). Deterministic for a fixed generator state.
std::pair<GeneratorParams, DiscriminatorParams> init_params(const TrainConfig& cfg, Rng& rng);

/// z [B, z_dim] with values in [-1, 1] -> images [B, 3, res, res] in [-1, 1].
/// The condition is concatenated to z, appended to each fully connected
/// output, and stacked as replicated channels onto every deconv input.
Tensor generator_forward(const Tensor& z, const std::vector<ConditionVector>& y,
                         GeneratorParams& p, const TrainConfig& cfg, Mode mode,
                         bool update_stats = true);

/// x [B, 3, res, res] in [-1, 1] -> probabilities [B, 1] in (0, 1). The
/// condition enters as replicated input channels and at every later stage,
/// mirroring the generator.
Tensor discriminator_forward(const Tensor& x, const std::vector<ConditionVector>& y,
                             DiscriminatorParams& p, const TrainConfig& cfg, Mode mode,
                             bool update_stats = true);

/// Copy of the parameter struct whose learnable tensors are registered as
/// named leaves on the tape (running statistics stay plain).
GeneratorParams attach(const GeneratorParams& p, Tape& tape, const std::string& prefix = "g");
DiscriminatorParams attach(const DiscriminatorParams& p, Tape& tape,
                           const std::string& prefix = "d");

}  // namespace rgan
