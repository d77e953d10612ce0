#pragma once

#include <cmath>
#include <cstddef>

#include "vimf/core/tensor.hpp"

namespace vimf {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-array Adam moments. Moments are lazily shaped on the first update.
struct AdamState {
  std::size_t step_count = 0;
  Tensor first_moment;
  Tensor second_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(const AdamConfig& c)
      : learning_rate(c.learning_rate), beta1(c.beta1), beta2(c.beta2), epsilon(c.epsilon) {}
};

/// One bias-corrected Adam descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_update(AdamState& state, Tensor& params, const Tensor& grads) {
  require_same_shape(params, grads, "adam_update");
  if (state.step_count == 0 && !state.first_moment.same_shape(params)) {
    state.first_moment = Tensor(params.shape());
    state.second_moment = Tensor(params.shape());
  }
  require_same_shape(params, state.first_moment, "adam_update (first moment)");
  require_same_shape(params, state.second_moment, "adam_update (second moment)");

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto p = params.data();
  auto g = grads.data();
  auto m = state.first_moment.data();
  auto v = state.second_moment.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
    p[i] -= state.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
  }
}

/// Scalar convenience used for hyperparameters (e.g. log concentration).
inline void adam_update(AdamState& state, double& param, double grad) {
  Tensor p = Tensor::scalar(param);
  adam_update(state, p, Tensor::scalar(grad));
  param = p[0];
}

}  // namespace vimf
