#pragma once

#include <cmath>
#include <cstdint>

#include "tsat/error.hpp"
#include "tsat/tensor.hpp"

namespace tsat {

/// Per-parameter Adam moments. Moments take the parameter's shape on the
/// first step.
struct AdamState {
  Tensor first_moment;
  Tensor second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-4;
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(AdamState& state, Tensor& params, const Tensor& grads) {
  if (!params.same_shape(grads)) {
    throw DimensionError("adam_step: gradient shape " + shape_string(grads.shape()) + " differs from parameter " +
                         shape_string(params.shape()));
  }
  if (state.first_moment.empty() && !params.empty()) {
    state.first_moment = Tensor(params.shape());
    state.second_moment = Tensor(params.shape());
  }
  if (!state.first_moment.same_shape(params)) {
    throw DimensionError("adam_step: optimizer state does not match parameter shape");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  auto p = params.values();
  auto g = grads.values();
  auto m = state.first_moment.values();
  auto v = state.second_moment.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

/// lr0 * exp(-gamma * epoch)
inline double decay_learning_rate(double initial_lr, int epoch, double gamma = 5e-3) {
  if (epoch < 0) throw ParameterError("decay_learning_rate: epoch must be non-negative");
  return initial_lr * std::exp(-gamma * static_cast<double>(epoch));
}

}  // namespace tsat
