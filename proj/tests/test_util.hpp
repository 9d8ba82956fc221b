#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "msvl/spectral.hpp"
#include "msvl/util.hpp"

namespace testutil {

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("msvl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline msvl::SpectralCube random_cube(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  msvl::SpectralCube c(w, h);
  for (auto& v : c.data()) v = static_cast<float>(msvl::uniform01(rng));
  return c;
}

inline msvl::ReflectanceSpectrum random_spectrum(std::mt19937_64& rng) {
  msvl::ReflectanceSpectrum s;
  for (auto& v : s.values) v = msvl::uniform01(rng);
  return s;
}

}  // namespace testutil
