#pragma once

#include <map>
#include <string>

#include "fedbcs/autodiff.hpp"

namespace fedbcs {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  Real learning_rate = Real(0.01);
  Real weight_decay = Real(1e-4);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// SGD: w -= lr * (g + wd * w), no momentum.
/// Adam: bias-corrected moments, decoupled decay w -= lr * wd * w.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  /// One update from the gradients currently held by `params`.
  void step(ParameterStore& params);
  std::size_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace fedbcs
