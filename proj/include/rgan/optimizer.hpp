#pragma once

#include <map>
#include <utility>
#include <vector>

#include "rgan/config.hpp"
#include "rgan/tensor.hpp"

namespace rgan {

/// Per-model first/second moment buffers for the adaptive-moment optimizer.
struct OptimizerState {
  std::map<std::string, Tensor> m, v;
  std::int64_t step = 0;
};

/// One optimizer step over named parameter handles with the given gradient
/// map. Adam with bias correction, or plain SGD per the config. Parameter
/// buffers are updated in place.
void apply_updates(const std::vector<std::pair<std::string, Tensor>>& params,
                   const GradientMap& grads, OptimizerState& state, const TrainConfig& cfg);

}  // namespace rgan
