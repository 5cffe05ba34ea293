#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rgan/data.hpp"
#include "rgan/layers.hpp"

namespace rgan {

/// Leaf-count agreement statistics. DiC/|DiC| use predictions rounded half
/// away from zero; MSE and R^2 use the raw predictions. Std is the
/// population standard deviation.
struct CountMetrics {
  double dic_mean = 0.0;
  double dic_std = 0.0;
  double abs_dic_mean = 0.0;
  double abs_dic_std = 0.0;
  double mse = 0.0;          // raw predictions (primary)
  double mse_rounded = 0.0;  // rounded predictions, emitted alongside
  std::optional<double> r2;  // empty when the truth is constant
};

CountMetrics count_metrics(const std::vector<double>& pred, const std::vector<int>& truth);

struct FoldSplit {
  std::vector<int> train, test;
};

/// k disjoint shuffled test folds covering [0, n), sizes differing by at
/// most one. n=624, k=4 gives 468 train / 156 test per fold.
std::vector<FoldSplit> kfold_split(int n, int k, Rng& rng);

struct RegressorConfig {
  int input_size = 32;
  int width = 8;      // channels of the first conv block
  int fc_hidden = 32;
  int epochs = 30;
  int batch = 32;
  float learning_rate = 1e-3f;
  float leaky_alpha = 0.2f;
  std::uint64_t seed = 1;
};

/// Small convolutional count regressor: three stride-2 conv blocks and a
/// scalar head whose bias starts at the training-set mean count.
struct RegressorModel {
  RegressorConfig cfg;
  std::vector<Conv2dParams> conv;
  FcParams fc_hidden;
  FcParams fc_out;
};

RegressorModel baseline_regressor_train(const std::vector<ImageSample>& samples,
                                        const RegressorConfig& cfg);
std::vector<double> baseline_regressor_predict(const RegressorModel& model,
                                               const std::vector<ImageSample>& samples);

struct ConditionResult {
  std::string label;
  std::vector<CountMetrics> fold_train, fold_test;
  CountMetrics train_mean, test_mean;
};

struct ExperimentReport {
  std::vector<FoldSplit> splits;
  bool has_synthetic = false;
  ConditionResult real_only;
  ConditionResult with_synthetic;  // valid when has_synthetic

  std::string to_table() const;
  std::string to_csv() const;
};

/// For each fold, trains the baseline regressor on the real training split
/// alone and on the split plus all synthetic images, and evaluates both on
/// the same real test split. Synthetic images never enter a test fold.
ExperimentReport augmentation_experiment(const std::vector<ImageSample>& real,
                                         const std::vector<ImageSample>& synthetic, int k,
                                         const RegressorConfig& cfg, Rng& rng,
                                         const std::string& real_name = "real",
                                         const std::string& synthetic_name = "synthetic");

}  // namespace rgan
