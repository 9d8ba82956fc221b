#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "msvl/error.hpp"
#include "msvl/util.hpp"

namespace msvl {

inline constexpr std::size_t kBands = 24;
inline constexpr double kFirstWavelengthNm = 450.0;
inline constexpr double kWavelengthStepNm = 10.0;

/// The fixed 450-680 nm grid at 10 nm spacing shared by every spectrum and cube.
class SpectrumGrid {
 public:
  static constexpr std::size_t size() { return kBands; }

  static constexpr double wavelength(std::size_t band) {
    return kFirstWavelengthNm + kWavelengthStepNm * static_cast<double>(band);
  }

  static std::vector<double> wavelengths() {
    std::vector<double> out(kBands);
    for (std::size_t k = 0; k < kBands; ++k) out[k] = wavelength(k);
    return out;
  }

  /// True when `nm` lists exactly the grid wavelengths.
  static bool matches(std::span<const double> nm) {
    if (nm.size() != kBands) return false;
    for (std::size_t k = 0; k < kBands; ++k)
      if (nm[k] != wavelength(k)) return false;
    return true;
  }

  /// Index of the band at `nm`; throws if `nm` is not a grid point.
  static std::size_t band_of(double nm) {
    const double idx = (nm - kFirstWavelengthNm) / kWavelengthStepNm;
    const double rounded = std::round(idx);
    if (rounded < 0 || rounded >= static_cast<double>(kBands) || std::abs(idx - rounded) > 1e-9)
      throw InvalidInput("wavelength " + std::to_string(nm) + " nm is not on the 450-680/10 nm grid");
    return static_cast<std::size_t>(rounded);
  }
};

/// 24 reflectance values on the standard grid.
struct ReflectanceSpectrum {
  std::array<double, kBands> values{};

  static ReflectanceSpectrum from(std::span<const double> v) {
    if (v.size() != kBands)
      throw InvalidInput("spectrum needs " + std::to_string(kBands) + " values, got " +
                         std::to_string(v.size()));
    ReflectanceSpectrum s;
    for (std::size_t k = 0; k < kBands; ++k) {
      if (!std::isfinite(v[k])) throw InvalidInput("spectrum value at band " + std::to_string(k) + " is not finite");
      s.values[k] = v[k];
    }
    return s;
  }

  double operator[](std::size_t k) const { return values[k]; }
  double& operator[](std::size_t k) { return values[k]; }
  bool operator==(const ReflectanceSpectrum&) const = default;
};

/// Root-mean-square difference of two equally sampled spectra.
inline double rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw InvalidInput("rmse: sample grids differ (" + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()) + " values)");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

inline double rmse(const ReflectanceSpectrum& a, const ReflectanceSpectrum& b) {
  return rmse(std::span<const double>(a.values), std::span<const double>(b.values));
}

/// Band-sequential reflectance cube: data[(band * height + y) * width + x].
class SpectralCube {
 public:
  SpectralCube() = default;

  SpectralCube(std::size_t width, std::size_t height, float fill = 0.0f)
      : width_(width), height_(height), data_(width * height * kBands, fill) {}

  SpectralCube(std::size_t width, std::size_t height, std::vector<float> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_ * kBands)
      throw InvalidInput("cube payload has " + std::to_string(data_.size()) + " values, expected " +
                         std::to_string(width_ * height_ * kBands));
    validate();
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  static constexpr std::size_t bands() { return kBands; }
  std::size_t plane_size() const { return width_ * height_; }

  float at(std::size_t band, std::size_t y, std::size_t x) const {
    return data_[(band * height_ + y) * width_ + x];
  }
  float& at(std::size_t band, std::size_t y, std::size_t x) {
    return data_[(band * height_ + y) * width_ + x];
  }

  std::span<const float> band_plane(std::size_t band) const {
    return std::span(data_).subspan(band * plane_size(), plane_size());
  }
  std::span<float> band_plane(std::size_t band) {
    return std::span(data_).subspan(band * plane_size(), plane_size());
  }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  /// Spectrum of one pixel.
  ReflectanceSpectrum pixel(std::size_t y, std::size_t x) const {
    ReflectanceSpectrum s;
    for (std::size_t k = 0; k < kBands; ++k) s.values[k] = at(k, y, x);
    return s;
  }

  /// Throws CorruptionError unless every value is finite and in [0,1].
  void validate() const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const float v = data_[i];
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
        throw CorruptionError("cube value " + std::to_string(i) + " is outside [0,1] or not finite");
    }
  }

  /// Bitwise equality, including negative zero and NaN payloads.
  bool bit_equal(const SpectralCube& other) const {
    return width_ == other.width_ && height_ == other.height_ && data_.size() == other.data_.size() &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
  }

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// .msc file format
//
//   "MSCUBE01" | u32le header length | JSON header | f32le payload (BSQ)
// ---------------------------------------------------------------------------

inline constexpr char kCubeMagic[8] = {'M', 'S', 'C', 'U', 'B', 'E', '0', '1'};

inline std::vector<unsigned char> encode_cube(const SpectralCube& cube) {
  cube.validate();
  nlohmann::ordered_json header;
  header["width"] = cube.width();
  header["height"] = cube.height();
  header["bands"] = kBands;
  header["wavelengths_nm"] = SpectrumGrid::wavelengths();
  header["dtype"] = "f32le";
  header["layout"] = "bsq";
  const std::string text = header.dump();

  std::vector<unsigned char> out(std::begin(kCubeMagic), std::end(kCubeMagic));
  append_u32le(out, static_cast<std::uint32_t>(text.size()));
  const std::size_t head = out.size() + text.size();
  out.resize(head + cube.data().size_bytes());
  std::memcpy(out.data() + 12, text.data(), text.size());
  std::memcpy(out.data() + head, cube.data().data(), cube.data().size_bytes());
  return out;
}

inline SpectralCube decode_cube(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCubeMagic, 8) != 0)
    throw FormatError("not a spectral cube: missing MSCUBE01 magic");
  const std::uint32_t header_len = load_u32le(bytes.data() + 8);
  if (bytes.size() - 12 < header_len) throw CorruptionError("cube header is truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cube header is not valid JSON: ") + e.what());
  }
  std::size_t width = 0, height = 0, bands = 0;
  std::vector<double> wavelengths;
  try {
    width = header.at("width").get<std::size_t>();
    height = header.at("height").get<std::size_t>();
    bands = header.at("bands").get<std::size_t>();
    wavelengths = header.at("wavelengths_nm").get<std::vector<double>>();
    if (header.at("dtype").get<std::string>() != "f32le" || header.at("layout").get<std::string>() != "bsq")
      throw FormatError("unsupported cube dtype/layout");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cube header is missing fields: ") + e.what());
  }
  if (bands != kBands) throw FormatError("cube declares " + std::to_string(bands) + " bands, expected 24");
  if (!SpectrumGrid::matches(wavelengths)) throw FormatError("cube wavelengths differ from the 450-680/10 nm grid");

  const std::size_t payload = bytes.size() - 12 - header_len;
  const std::size_t expected = width * height * bands * sizeof(float);
  if (payload != expected)
    throw CorruptionError("cube payload is " + std::to_string(payload) + " bytes, header implies " +
                          std::to_string(expected));
  std::vector<float> data(width * height * bands);
  std::memcpy(data.data(), bytes.data() + 12 + header_len, expected);
  return SpectralCube(width, height, std::move(data));
}

/// Writes `cube` to `path`; returns the number of bytes written.
inline std::size_t write_cube(const SpectralCube& cube, const std::string& path) {
  const auto bytes = encode_cube(cube);
  write_file_bytes(path, bytes);
  return bytes.size();
}

inline SpectralCube read_cube(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_cube(bytes);
  } catch (const CorruptionError& e) {
    throw CorruptionError(path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace msvl
