#include "loft/nn/optim.hpp"

#include <cmath>

#include "loft/error.hpp"

namespace loft::nn {

namespace {

void require_grads(const ParamStore& params) {
  for (const auto& [name, p] : params) {
    if (!p.has_grad) throw StateError("optimizer step: parameter " + name + " has no gradient");
  }
}

}  // namespace

void sgd_step(ParamStore& params, double lr) {
  require_grads(params);
  for (auto& [name, p] : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
    p.value.check_finite("sgd update of " + name);
  }
  params.clear_grads();
}

void Optimizer::step(ParamStore& params) {
  if (cfg_.method == OptimMethod::sgd) {
    sgd_step(params, cfg_.lr);
    ++t_;
    return;
  }
  require_grads(params);
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto it = moments_.find(name);
    if (it == moments_.end()) {
      it = moments_.emplace(name, Moments{Tensor(p.value.shape()), Tensor(p.value.shape())}).first;
    }
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
    p.value.check_finite("adam update of " + name);
  }
  params.clear_grads();
}

}  // namespace loft::nn
