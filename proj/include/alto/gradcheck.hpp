#pragma once

// Central finite-difference verification of reverse-mode gradients.
//
// For a scalar-valued builder f over leaf tensors, compares each analytic
// gradient coordinate against (f(x + e) - f(x - e)) / 2e with relative error
// |ad - fd| / max(|ad|, |fd|, 1e-8). Large inputs can be spot-checked by
// capping the coordinates probed per tensor (evenly strided, deterministic).

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "alto/tensor.hpp"

namespace alto {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
};

template <class T>
GradCheckReport grad_check(const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& f,
                           std::vector<Tensor<T>> inputs, double eps = 1e-6,
                           std::size_t max_coords_per_input = 0) {
  if (sizeof(T) < sizeof(double))
    std::fprintf(stderr, "grad_check: input precision below f64; expect loose finite differences\n");
  require(eps > 0, ErrorKind::Contract, "grad_check: eps must be positive");
  for (auto& in : inputs) in.set_requires_grad(true);

  Tensor<T> loss = f(inputs);
  require(loss.size() == 1, ErrorKind::Contract, "grad_check: f must produce a scalar");
  backward(loss);
  std::vector<std::vector<T>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) analytic.push_back(in.grad());

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& value = inputs[t].values_mut();
    std::size_t n = value.size();
    std::size_t stride = 1;
    if (max_coords_per_input > 0 && n > max_coords_per_input)
      stride = (n + max_coords_per_input - 1) / max_coords_per_input;
    for (std::size_t i = 0; i < n; i += stride) {
      T saved = value[i];
      value[i] = static_cast<T>(static_cast<double>(saved) + eps);
      double up = static_cast<double>(f(inputs).item());
      value[i] = static_cast<T>(static_cast<double>(saved) - eps);
      double down = static_cast<double>(f(inputs).item());
      value[i] = saved;
      double fd = (up - down) / (2.0 * eps);
      double ad = static_cast<double>(analytic[t][i]);
      double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = t;
        report.worst_coord = i;
      }
      report.coords_checked++;
    }
  }
  return report;
}

}  // namespace alto
