#pragma once

// Adam with bias correction. Parameters update in place from their
// accumulated gradients; moment buffers live in AdamState so they can be
// checkpointed alongside the parameters.

#include <cmath>
#include <vector>

#include "alto/tensor.hpp"

namespace alto {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  static AdamState init(const std::vector<Tensor<T>>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.emplace_back(p.size(), T(0));
      s.v.emplace_back(p.size(), T(0));
    }
    return s;
  }
};

// One update step; aborts with a numeric error on non-finite gradients.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, const AdamConfig& cfg) {
  require(params.size() == state.m.size(), ErrorKind::Contract, "adam_step: state does not match parameter list");
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = params[pi].values_mut();
    const auto& grad = params[pi].grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    require(value.size() == m.size(), ErrorKind::Contract, "adam_step: moment buffer size mismatch");
    for (std::size_t i = 0; i < value.size(); ++i) {
      double g = static_cast<double>(grad[i]);
      if (!std::isfinite(g)) fail(ErrorKind::Numeric, "adam_step: non-finite gradient encountered");
      double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
      double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double update = cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      value[i] = static_cast<T>(static_cast<double>(value[i]) - update);
    }
  }
}

}  // namespace alto
