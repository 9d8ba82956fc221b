#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "msvl/calibration.hpp"
#include "msvl/image_io.hpp"
#include "msvl/phantom.hpp"
#include "msvl/reconstruction.hpp"
#include "test_util.hpp"

using namespace msvl;

namespace {

TransformationMatrix fixture_matrix() {
  SyntheticCamera cam;
  return wiener_fit(synth_patch_set(6, 24, 1, cam, 42).first, false);
}

LinearRgbImage random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LinearRgbImage img(w, h);
  for (auto& v : img.data) v = uniform01(rng);
  return img;
}

Image8 random_image8(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image8 img(w, h);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(uniform_index(rng, 256));
  return img;
}

}  // namespace

TEST(SrgbDecode, EndpointsAndMidpoint) {
  EXPECT_EQ(srgb_to_linear(0), 0.0);
  EXPECT_DOUBLE_EQ(srgb_to_linear(255), 1.0);
  const double v = 128.0 / 255.0;
  EXPECT_NEAR(srgb_to_linear(128), std::pow((v + 0.055) / 1.055, 2.4), 1e-15);
  EXPECT_NEAR(srgb_to_linear(128), 0.21586, 1e-5);
  EXPECT_NEAR(srgb_to_linear(10), 10.0 / 255.0 / 12.92, 1e-15);
}

TEST(SrgbDecode, Monotone) {
  for (int c = 1; c < 256; ++c)
    EXPECT_LT(srgb_to_linear(static_cast<std::uint8_t>(c - 1)), srgb_to_linear(static_cast<std::uint8_t>(c)));
}

TEST(SrgbDecode, EncodeInvertsDecodeOnCodes) {
  for (int c = 0; c < 256; ++c)
    EXPECT_EQ(linear_to_srgb8(srgb_to_linear(static_cast<std::uint8_t>(c))), c);
}

TEST(SrgbDecode, ImageMapsPerChannelAndChecksDimensions) {
  Image8 img(2, 1);
  img.rgb = {0, 128, 255, 10, 20, 30};
  const auto lin = srgb_decode(img);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(lin.data[i], srgb_to_linear(img.rgb[i]));
  img.rgb.pop_back();
  EXPECT_THROW(srgb_decode(img), InvalidInput);
}

TEST(ReconstructCube, SinglePixelMatchesSpectrum) {
  const auto m = fixture_matrix();
  const auto img = random_image(1, 1, 1);
  const auto [cube, meta] = reconstruct_cube(m, img);
  const auto s = reconstruct_spectrum(m, img.pixel(0, 0));
  for (int k = 0; k < 24; ++k) EXPECT_EQ(cube.at(k, 0, 0), static_cast<float>(s[k]));
}

TEST(ReconstructCube, MatchesPerPixelLoop) {
  const auto m = fixture_matrix();
  const auto img = random_image(8, 8, 2);
  const auto [cube, meta] = reconstruct_cube(m, img);
  std::size_t clamped = 0;
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      const double* p = img.data.data() + (y * 8 + x) * 3;
      for (int k = 0; k < 24; ++k) {
        const double raw = m.coeffs[k * 3] * p[0] + m.coeffs[k * 3 + 1] * p[1] + m.coeffs[k * 3 + 2] * p[2];
        EXPECT_NEAR(m.apply({p[0], p[1], p[2]})[k], raw, 1e-12);
        if (raw < 0.0 || raw > 1.0) ++clamped;
        EXPECT_EQ(cube.at(k, y, x), static_cast<float>(std::clamp(raw, 0.0, 1.0)));
      }
    }
  EXPECT_DOUBLE_EQ(meta.clamped_fraction, clamped / (64.0 * 24.0));
  EXPECT_EQ(meta.matrix_id, m.checksum());
}

TEST(ReconstructCube, DeclaresStandardGrid) {
  const auto [cube, meta] = reconstruct_cube(fixture_matrix(), random_image(3, 2, 3));
  EXPECT_EQ(cube.bands(), 24u);
  EXPECT_EQ(cube.width(), 3u);
  EXPECT_EQ(cube.height(), 2u);
  const auto bytes = encode_cube(cube);
  const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + load_u32le(bytes.data() + 8));
  EXPECT_EQ(header["wavelengths_nm"].get<std::vector<double>>(), SpectrumGrid::wavelengths());
}

TEST(ReconstructCube, SubRectangleEqualsCropOfFull) {
  const auto m = fixture_matrix();
  const auto img = random_image(9, 7, 4);
  const auto full = reconstruct_cube(m, img).first;
  LinearRgbImage crop(4, 3);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) crop.data[(y * 4 + x) * 3 + c] = img.data[((y + 2) * 9 + x + 3) * 3 + c];
  const auto part = reconstruct_cube(m, crop).first;
  for (int k = 0; k < 24; ++k)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(part.at(k, y, x), full.at(k, y + 2, x + 3));
}

TEST(ReconstructCube, ThreadCountDoesNotChangeResult) {
  const auto m = fixture_matrix();
  const auto img = random_image(17, 13, 5);
  const auto [a, ma] = reconstruct_cube(m, img, true, 1);
  for (std::size_t t : {2, 3, 8}) {
    const auto [b, mb] = reconstruct_cube(m, img, true, t);
    EXPECT_TRUE(a.bit_equal(b));
    EXPECT_EQ(ma.clamped_fraction, mb.clamped_fraction);
  }
}

TEST(ReconstructCube, NoClampingOnInRangeLinearData) {
  // Exact linear camera and fit: reconstructions stay inside [0,1].
  SyntheticCamera cam;
  cam.noise_sigma = 0.0;
  auto [train, holdout] = synth_patch_set(3, 24, 16, cam, 5);
  const auto m = wiener_fit(train, 0.0, false);
  LinearRgbImage img(4, 4);
  for (std::size_t i = 0; i < 16; ++i)
    for (int c = 0; c < 3; ++c) img.data[i * 3 + c] = holdout[i].rgb[c];
  EXPECT_EQ(reconstruct_cube(m, img).second.clamped_fraction, 0.0);
}

TEST(ReconstructCube, NonFinitePixelNamesCoordinates) {
  auto img = random_image(4, 3, 6);
  img.data[(2 * 4 + 1) * 3 + 1] = NAN;
  try {
    reconstruct_cube(fixture_matrix(), img);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("x=1, y=2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(reconstruct_cube(fixture_matrix(), LinearRgbImage(0, 0)), InvalidInput);
}

TEST(ExtractView, PartitionIdentity) {
  const auto cube = testutil::random_cube(5, 4, 7);
  std::vector<BandImage> views;
  for (std::size_t k = 0; k < 24; ++k) views.push_back(extract_view(cube, k));
  EXPECT_TRUE(assemble_views(views).bit_equal(cube));
}

TEST(ExtractView, ConstantBand) {
  SpectralCube cube(3, 3, 0.1f);
  for (auto& v : cube.band_plane(0)) v = 0.5f;
  const auto view = extract_view(cube, 0);
  for (float v : view.data) EXPECT_EQ(v, 0.5f);
}

TEST(ExtractView, MeanMatchesIndependentReduction) {
  const auto cube = testutil::random_cube(6, 5, 8);
  for (std::size_t k : {0u, 11u, 23u}) {
    const auto view = extract_view(cube, k);
    double a = 0.0;
    for (float v : view.data) a += v;
    double b = 0.0;
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 6; ++x) b += cube.at(k, y, x);
    EXPECT_NEAR(a / 30.0, b / 30.0, 1e-12);
  }
}

TEST(ExtractView, OutOfRangeRejected) {
  EXPECT_THROW(extract_view(SpectralCube(2, 2), 24), InvalidInput);
}

TEST(ImageIo, PngAndPpmRoundtrip) {
  const auto dir = testutil::scratch_dir("image_io");
  const auto img = random_image8(7, 5, 9);
  write_png(img, (dir / "a.png").string());
  write_ppm(img, (dir / "a.ppm").string());
  EXPECT_EQ(read_image((dir / "a.png").string()), img);
  EXPECT_EQ(read_image((dir / "a.ppm").string()), img);
}

TEST(ImageIo, UnsupportedFormatRejected) {
  const auto dir = testutil::scratch_dir("image_bad");
  write_file_text((dir / "x.bmp").string(), "BM not really an image");
  EXPECT_THROW(read_image((dir / "x.bmp").string()), FormatError);
  EXPECT_THROW(decode_ppm(std::vector<unsigned char>{'P', '6', '\n', '2', ' ', '2', '\n', '6', '5', '5', '3', '5', '\n'}),
               FormatError);
}
