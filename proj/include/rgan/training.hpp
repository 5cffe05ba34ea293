#pragma once

#include <filesystem>
#include <optional>

#include "rgan/checkpoint.hpp"
#include "rgan/data.hpp"
#include "rgan/models.hpp"
#include "rgan/optimizer.hpp"

namespace rgan {

/// Probabilities are clamped to [kProbEps, 1-kProbEps] before any log.
inline constexpr float kProbEps = 1e-7f;

/// Scalar loss tensors (graph nodes when the inputs are on a tape).
/// d_loss: binary cross-entropy of D with real as 1 and fake as 0.
/// g_loss: cross-entropy of D(G(z|y)|y) against 1 (the non-saturating form).
struct GanLosses {
  Tensor d_loss;
  Tensor g_loss;
};

/// Builds both losses from discriminator probabilities [batch,1].
GanLosses gan_losses(const Tensor& d_real, const Tensor& d_fake);

/// mean(log(1 - D(G(z)))) — the literal minimax generator objective,
/// selectable via TrainConfig::gen_loss. Its value can be negative; the
/// reported g_loss metric stays the cross-entropy form either way.
Tensor minimax_generator_objective(const Tensor& d_fake);

/// Named handles to the learnable tensors of a parameter struct (shared
/// buffers, so updates through them mutate the model in place).
template <class Params>
std::vector<std::pair<std::string, Tensor>> learnables(Params& p, const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor>> out;
  visit_params(p, prefix, [&out](const std::string& name, Tensor& t, ParamKind kind) {
    if (kind == ParamKind::learnable) out.emplace_back(name, t);
  });
  return out;
}

/// Noise z ~ U[-1,1) [n, z_dim] plus one-hot conditions with classes drawn
/// uniformly over [0, C), or from `class_weights` when given (empirical
/// sampling). Draw order: all of z first, then the classes.
std::pair<Tensor, std::vector<ConditionVector>> sample_noise_and_condition(
    int n, const TrainConfig& cfg, Rng& rng,
    const std::vector<std::int64_t>* class_weights = nullptr);

/// Everything that evolves during training. Checkpoints capture it exactly.
struct TrainState {
  TrainConfig cfg;
  GeneratorParams gen;
  DiscriminatorParams disc;
  OptimizerState opt_g, opt_d;
  Rng rng;
  int epoch = 0;
  std::int64_t global_step = 0;
  std::vector<std::int64_t> label_histogram;  // per class, for empirical sampling

  explicit TrainState(const TrainConfig& config);
};

/// One alternating update: cfg.d_steps discriminator phases (real batch with
/// ground-truth conditions, fresh fakes with sampled conditions) followed by
/// one generator phase on a fresh sample. Only the phase's own parameters
/// and batch-norm statistics change. Returns the last D-phase d_loss and the
/// G-phase g_loss values.
struct StepLosses {
  float d_loss = 0.0f;
  float g_loss = 0.0f;
};
StepLosses train_step(TrainState& ts, const Tensor& real_images,
                      const std::vector<int>& real_counts);

/// Phase 1 alone: one discriminator update on the real batch (ground-truth
/// conditions) and a fresh fake batch (sampled conditions). The generator is
/// treated as data; nothing of it changes, including batch-norm statistics.
float discriminator_phase(TrainState& ts, const Tensor& real_images,
                          const std::vector<ConditionVector>& y_real);

/// Phase 2 alone: one generator update through the frozen discriminator
/// (no discriminator parameter or statistic changes). Returns the reported
/// g_loss (cross-entropy of D(G(z|y)|y) against 1).
float generator_phase(TrainState& ts, int batch);

struct EpochRecord {
  int epoch = 0;  // 1-based
  float d_loss = 0.0f;
  float g_loss = 0.0f;
  std::string sample_path;
  std::string checkpoint_path;  // empty when no checkpoint was written
};

struct TrainingHistory {
  std::string initial_checkpoint;
  std::vector<EpochRecord> epochs;
};

/// Runs cfg.epochs epochs of shuffled minibatches over the dataset, writing
/// a fixed-noise sample grid per epoch, checkpoints every
/// cfg.checkpoint_interval epochs (plus the initial and final state) and a
/// history.csv, all under out_dir. Resuming from a checkpoint with the same
/// config reproduces the uninterrupted run exactly.
TrainingHistory train(const Dataset& data, const TrainConfig& cfg,
                      const std::filesystem::path& out_dir,
                      const std::optional<std::filesystem::path>& resume = std::nullopt);

Checkpoint make_checkpoint(TrainState& ts);
TrainState restore_checkpoint(const Checkpoint& c);

/// Tiles [B,3,H,W] into a roughly square grid image.
Tensor tile_grid(const Tensor& batch);

}  // namespace rgan
