#include "rgan/optimizer.hpp"

#include <cmath>

namespace rgan {

void apply_updates(const std::vector<std::pair<std::string, Tensor>>& params,
                   const GradientMap& grads, OptimizerState& state, const TrainConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::sgd) {
    for (const auto& [name, t] : params) {
      auto it = grads.find(name);
      if (it == grads.end()) throw ValueError("no gradient for parameter '" + name + "'");
      Tensor param = t;
      const float* g = it->second.data();
      float* p = param.data();
      for (std::size_t i = 0; i < param.size(); ++i) p[i] -= cfg.learning_rate * g[i];
    }
    ++state.step;
    return;
  }

  std::int64_t t_step = ++state.step;
  double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(t_step));
  double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(t_step));
  for (const auto& [name, t] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ValueError("no gradient for parameter '" + name + "'");
    Tensor param = t;
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      mit = state.m.emplace(name, Tensor(param.shape())).first;
      state.v.emplace(name, Tensor(param.shape()));
    }
    Tensor& m = mit->second;
    Tensor& v = state.v.at(name);
    const float* g = it->second.data();
    float* pm = m.data();
    float* pv = v.data();
    float* p = param.data();
    for (std::size_t i = 0; i < param.size(); ++i) {
      pm[i] = cfg.beta1 * pm[i] + (1.0f - cfg.beta1) * g[i];
      pv[i] = cfg.beta2 * pv[i] + (1.0f - cfg.beta2) * g[i] * g[i];
      double mhat = pm[i] / bc1;
      double vhat = pv[i] / bc2;
      p[i] -= static_cast<float>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon));
    }
  }
}

}  // namespace rgan
