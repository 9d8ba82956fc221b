#pragma once

#include <cstring>
#include <string>
#include <vector>

#include <png.h>

#include "msvl/error.hpp"
#include "msvl/reconstruction.hpp"
#include "msvl/util.hpp"

namespace msvl {

// PNG goes through libpng's simplified API; PPM (binary P6, maxval 255) is
// parsed here.

inline Image8 decode_png(std::span<const unsigned char> bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
    throw FormatError(std::string("PNG decode failed: ") + png.message);
  png.format = PNG_FORMAT_RGB;
  Image8 img(png.width, png.height);
  if (!png_image_finish_read(&png, nullptr, img.rgb.data(), 0, nullptr)) {
    png_image_free(&png);
    throw FormatError(std::string("PNG decode failed: ") + png.message);
  }
  return img;
}

inline void write_png(const Image8& img, const std::string& path) {
  img.check();
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.rgb.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + png.message);
}

inline Image8 decode_ppm(std::span<const unsigned char> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw FormatError("PPM header is malformed");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (P6) image");
  pos = 2;
  const std::size_t w = read_int(), h = read_int(), maxval = read_int();
  if (maxval != 255) throw FormatError("only 8-bit PPM images are supported");
  ++pos;  // single whitespace before the raster
  Image8 img(w, h);
  if (bytes.size() < pos + img.rgb.size()) throw CorruptionError("PPM raster is truncated");
  std::memcpy(img.rgb.data(), bytes.data() + pos, img.rgb.size());
  return img;
}

inline void write_ppm(const Image8& img, const std::string& path) {
  img.check();
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  write_file_bytes(path, out);
}

/// Reads a PNG or PPM file, chosen by its leading bytes.
inline Image8 read_image(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  try {
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
  throw FormatError(path + ": unsupported image format (expected PNG or binary PPM)");
}

}  // namespace msvl
