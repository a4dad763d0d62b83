#include "fedbcs/optimizer.hpp"

#include <cmath>

#include "fedbcs/errors.hpp"

namespace fedbcs {

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  if (!(config_.learning_rate > 0)) throw ContractError("optimizer: learning rate must be positive");
  if (config_.weight_decay < 0) throw ContractError("optimizer: weight decay must be nonnegative");
}

void Optimizer::step(ParameterStore& params) {
  ++steps_;
  const Real lr = config_.learning_rate;
  const Real wd = config_.weight_decay;
  if (config_.kind == OptimizerKind::kSgd) {
    for (auto& [id, p] : params) {
      auto w = p.value.data();
      auto g = p.gradient.data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (g[i] + wd * w[i]);
    }
    return;
  }
  const Real b1 = config_.beta1, b2 = config_.beta2;
  const Real c1 = Real{1} - std::pow(b1, static_cast<Real>(steps_));
  const Real c2 = Real{1} - std::pow(b2, static_cast<Real>(steps_));
  for (auto& [id, p] : params) {
    auto [it, fresh] = moments_.try_emplace(id);
    if (fresh) it->second = Moments{Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())};
    auto w = p.value.data();
    auto g = p.gradient.data();
    auto m = it->second.m.data();
    auto v = it->second.v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      w[i] -= lr * wd * w[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

}  // namespace fedbcs
