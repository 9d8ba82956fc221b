#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "msvl/error.hpp"
#include "msvl/nn/tensor.hpp"

namespace msvl::nn {

/// Adaptive-moment (Adam) optimizer state.
struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(OptimizerState& state, std::span<Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw InvalidInput("adam_step: parameter and gradient counts differ");
  if (state.first_moment.empty()) {
    for (const Tensor& p : params) {
      state.first_moment.emplace_back(p.shape());
      state.second_moment.emplace_back(p.shape());
    }
  }
  if (state.first_moment.size() != params.size()) throw InvalidInput("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.first_moment[i].shape())
      throw InvalidInput("adam_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                         shape_str(params[i].shape()) + " vs " + shape_str(grads[i].shape()));

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace msvl::nn
