#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "loft/nn/network.hpp"

namespace loft::nn {

enum class OptimMethod { sgd, adam };

struct OptimizerConfig {
  OptimMethod method = OptimMethod::adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// In-place first-order updates. Adam keeps per-parameter moment estimates keyed by name.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update from the stored gradients, then clears them.
  /// Throws StateError if any parameter has no gradient.
  void step(ParamStore& params);

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::uint64_t steps() const noexcept { return t_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  OptimizerConfig cfg_;
  std::map<std::string, Moments> moments_;
  std::uint64_t t_ = 0;
};

/// Stateless SGD step (p -= lr * grad) for every parameter.
void sgd_step(ParamStore& params, double lr);

}  // namespace loft::nn
