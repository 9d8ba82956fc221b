#pragma once

#include <cmath>
#include <random>

#include "msvl/nn/tensor.hpp"
#include "msvl/util.hpp"

namespace msvl::nn {

/// U(-sqrt(6/fan_in), +sqrt(6/fan_in)); for weights feeding a rectifier.
inline Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(rng, -bound, bound);
  return t;
}

/// U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))).
inline Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(rng, -bound, bound);
  return t;
}

}  // namespace msvl::nn
