#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msvl/calibration.hpp"
#include "msvl/error.hpp"
#include "msvl/spectral.hpp"
#include "msvl/util.hpp"

namespace msvl {

/// 8-bit interleaved RGB image, row-major.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image8() = default;
  Image8(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}

  void check() const {
    if (rgb.size() != width * height * 3) throw InvalidInput("image buffer does not match its dimensions");
  }
  bool operator==(const Image8&) const = default;
};

/// Linear-light RGB in [0,1], 3 values per pixel, row-major.
struct LinearRgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;

  LinearRgbImage() = default;
  LinearRgbImage(std::size_t w, std::size_t h) : width(w), height(h), data(w * h * 3, 0.0) {}

  Rgb pixel(std::size_t y, std::size_t x) const {
    const double* p = data.data() + (y * width + x) * 3;
    return {p[0], p[1], p[2]};
  }
};

/// One spectral band as a single-channel image.
struct BandImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;
};

/// sRGB electro-optical transfer function for one 8-bit code value.
inline double srgb_to_linear(std::uint8_t code) {
  const double v = code / 255.0;
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

/// Inverse transfer, rounded to the nearest 8-bit code value.
inline std::uint8_t linear_to_srgb8(double linear) {
  const double v = std::clamp(linear, 0.0, 1.0);
  const double e = v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
  return static_cast<std::uint8_t>(std::lround(std::clamp(e, 0.0, 1.0) * 255.0));
}

inline LinearRgbImage srgb_decode(const Image8& image) {
  image.check();
  double table[256];
  for (int c = 0; c < 256; ++c) table[c] = srgb_to_linear(static_cast<std::uint8_t>(c));
  LinearRgbImage out(image.width, image.height);
  for (std::size_t i = 0; i < image.rgb.size(); ++i) out.data[i] = table[image.rgb[i]];
  return out;
}

/// Plain c/255 scaling, for inputs that are already linear.
inline LinearRgbImage scale_to_unit(const Image8& image) {
  image.check();
  LinearRgbImage out(image.width, image.height);
  for (std::size_t i = 0; i < image.rgb.size(); ++i) out.data[i] = image.rgb[i] / 255.0;
  return out;
}

inline LinearRgbImage to_linear(const Image8& image, bool srgb_decoded) {
  return srgb_decoded ? srgb_decode(image) : scale_to_unit(image);
}

struct ReconstructionMeta {
  double clamped_fraction = 0.0;
  std::string matrix_id;
  bool srgb_decoded = true;
};

inline nlohmann::ordered_json meta_to_json(const ReconstructionMeta& meta) {
  nlohmann::ordered_json j;
  j["clamped_fraction"] = meta.clamped_fraction;
  j["matrix_id"] = meta.matrix_id;
  j["srgb_decoded"] = meta.srgb_decoded;
  return j;
}

/// Applies the matrix to every pixel. Rows are split across `threads`
/// workers; each pixel is computed independently, so the cube is identical
/// for every partitioning.
inline std::pair<SpectralCube, ReconstructionMeta> reconstruct_cube(const TransformationMatrix& m,
                                                                    const LinearRgbImage& img,
                                                                    bool srgb_decoded = true,
                                                                    std::size_t threads = 1) {
  if (img.width == 0 || img.height == 0) throw InvalidInput("reconstruct_cube: image is empty");
  if (img.data.size() != img.width * img.height * 3)
    throw InvalidInput("reconstruct_cube: image buffer does not match its dimensions");
  m.validate();

  SpectralCube cube(img.width, img.height);
  std::vector<std::size_t> clamped_per_row(img.height, 0);
  std::vector<std::string> row_errors(img.height);
  parallel_for(img.height, threads, [&](std::size_t y) {
    std::size_t clamped = 0;
    for (std::size_t x = 0; x < img.width; ++x) {
      const Rgb rgb = img.pixel(y, x);
      if (!std::isfinite(rgb[0]) || !std::isfinite(rgb[1]) || !std::isfinite(rgb[2])) {
        row_errors[y] = "reconstruct_cube: non-finite pixel at (x=" + std::to_string(x) +
                        ", y=" + std::to_string(y) + ")";
        return;
      }
      const auto raw = m.apply(rgb);
      for (std::size_t k = 0; k < kBands; ++k) {
        if (raw[k] < 0.0 || raw[k] > 1.0) ++clamped;
        cube.at(k, y, x) = static_cast<float>(clamp01(raw[k]));
      }
    }
    clamped_per_row[y] = clamped;
  });
  for (const auto& e : row_errors)
    if (!e.empty()) throw InvalidInput(e);

  std::size_t clamped = 0;
  for (std::size_t c : clamped_per_row) clamped += c;
  ReconstructionMeta meta;
  meta.clamped_fraction = static_cast<double>(clamped) / static_cast<double>(img.width * img.height * kBands);
  meta.matrix_id = m.checksum();
  meta.srgb_decoded = srgb_decoded;
  return {std::move(cube), std::move(meta)};
}

inline BandImage extract_view(const SpectralCube& cube, std::size_t band) {
  if (band >= kBands)
    throw InvalidInput("extract_view: band index " + std::to_string(band) + " is outside 0..23");
  const auto plane = cube.band_plane(band);
  return {cube.width(), cube.height(), std::vector<float>(plane.begin(), plane.end())};
}

/// Inverse of extracting all 24 views.
inline SpectralCube assemble_views(std::span<const BandImage> views) {
  if (views.size() != kBands) throw InvalidInput("assemble_views: need exactly 24 views");
  const std::size_t w = views[0].width, h = views[0].height;
  std::vector<float> data;
  data.reserve(w * h * kBands);
  for (const auto& v : views) {
    if (v.width != w || v.height != h || v.data.size() != w * h)
      throw InvalidInput("assemble_views: views differ in size");
    data.insert(data.end(), v.data.begin(), v.data.end());
  }
  return SpectralCube(w, h, std::move(data));
}

}  // namespace msvl
