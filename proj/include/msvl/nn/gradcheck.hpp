#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>

#include "msvl/error.hpp"
#include "msvl/nn/tensor.hpp"

namespace msvl::nn {

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("finite_diff_grad: eps must be positive");
  Tensor probe = x;
  Tensor grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

/// Scalar evaluation together with the rectifier branch signature of the run.
struct Probe {
  double value = 0.0;
  std::uint64_t kink_signature = 0;
};

/// Central differences that skip coordinates whose perturbation flips any
/// rectifier branch; skipped entries are left empty.
inline std::vector<std::optional<double>> finite_diff_grad_smooth(const std::function<Probe(const Tensor&)>& f,
                                                                  const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("finite_diff_grad: eps must be positive");
  const std::uint64_t base = f(x).kink_signature;
  Tensor probe = x;
  std::vector<std::optional<double>> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const Probe up = f(probe);
    probe[i] = orig - eps;
    const Probe down = f(probe);
    probe[i] = orig;
    if (up.kink_signature != base || down.kink_signature != base) continue;
    grad[i] = (up.value - down.value) / (2.0 * eps);
  }
  return grad;
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradients from
/// turning rounding noise into large relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

inline GradCheckResult compare_gradients(const Tensor& analytic, const std::vector<std::optional<double>>& numeric,
                                         double floor = 1e-6) {
  GradCheckResult r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (!numeric[i]) {
      ++r.skipped;
      continue;
    }
    ++r.checked;
    r.max_relative_error = std::max(r.max_relative_error, relative_error(analytic[i], *numeric[i], floor));
  }
  return r;
}

}  // namespace msvl::nn
