#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msvl/calibration.hpp"
#include "msvl/error.hpp"
#include "msvl/image_io.hpp"
#include "msvl/reconstruction.hpp"
#include "msvl/spectral.hpp"
#include "msvl/util.hpp"

namespace msvl {

/// Three Gaussian spectral sensitivities on the grid, each summing to 1.
struct SyntheticCamera {
  std::array<double, 3> centers_nm{460.0, 540.0, 610.0};
  std::array<double, 3> widths_nm{25.0, 30.0, 30.0};  // Gaussian sigma
  double noise_sigma = 0.01;

  std::array<std::array<double, kBands>, 3> sensitivities() const {
    std::array<std::array<double, kBands>, 3> s{};
    for (std::size_t c = 0; c < 3; ++c) {
      if (!(widths_nm[c] > 0.0)) throw InvalidInput("camera sensitivity widths must be positive");
      double total = 0.0;
      for (std::size_t k = 0; k < kBands; ++k) {
        const double d = (SpectrumGrid::wavelength(k) - centers_nm[c]) / widths_nm[c];
        total += s[c][k] = std::exp(-0.5 * d * d);
      }
      for (auto& v : s[c]) v /= total;
    }
    return s;
  }

  /// Noise-free camera response to a reflectance spectrum.
  template <class Spectrum>
  static Rgb respond(const std::array<std::array<double, kBands>, 3>& sens, const Spectrum& r) {
    Rgb rgb{};
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kBands; ++k) acc += sens[c][k] * r[k];
      rgb[c] = acc;
    }
    return rgb;
  }
};

inline nlohmann::ordered_json camera_to_json(const SyntheticCamera& c) {
  return {{"centers_nm", c.centers_nm}, {"widths_nm", c.widths_nm}, {"noise_sigma", c.noise_sigma}};
}

inline SyntheticCamera camera_from_json(const nlohmann::json& j, SyntheticCamera c = {}) {
  try {
    if (j.contains("centers_nm")) c.centers_nm = j["centers_nm"].get<std::array<double, 3>>();
    if (j.contains("widths_nm")) c.widths_nm = j["widths_nm"].get<std::array<double, 3>>();
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed camera config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Color-checker style patches
// ---------------------------------------------------------------------------

/// Smooth spectral basis: constant, then cos(j*pi*t) with t = (nm - 450) / 230.
inline double spectral_basis(std::size_t j, std::size_t band) {
  if (j == 0) return 1.0;
  const double t = (SpectrumGrid::wavelength(band) - 450.0) / 230.0;
  return std::cos(static_cast<double>(j) * std::numbers::pi * t);
}

/// Reflectances are c_0 + sum_j c_j phi_j with c_0 in [0.3, 0.7] and
/// |c_j| <= 0.15 / 2^(j-1); the amplitudes keep every value inside [0,1],
/// so the clip is a no-op for this generator.
inline std::pair<std::vector<ColorPatch>, std::vector<ColorPatch>> synth_patch_set(std::size_t basis_dim,
                                                                                   std::size_t n_train,
                                                                                   std::size_t n_holdout,
                                                                                   const SyntheticCamera& camera,
                                                                                   std::uint64_t seed) {
  if (basis_dim < 1 || basis_dim > kBands) throw InvalidInput("basis_dim must be in 1..24");
  if (n_train < 1 || n_holdout < 1) throw InvalidInput("patch counts must be >= 1");
  const auto sens = camera.sensitivities();
  std::mt19937_64 rng(seed);
  auto make = [&](const std::string& id) {
    ColorPatch p;
    p.id = id;
    std::vector<double> coef(basis_dim);
    coef[0] = uniform(rng, 0.3, 0.7);
    for (std::size_t j = 1; j < basis_dim; ++j) {
      const double amp = 0.15 / std::ldexp(1.0, static_cast<int>(j) - 1);
      coef[j] = uniform(rng, -amp, amp);
    }
    for (std::size_t k = 0; k < kBands; ++k) {
      double r = 0.0;
      for (std::size_t j = 0; j < basis_dim; ++j) r += coef[j] * spectral_basis(j, k);
      p.reference.values[k] = clamp01(r);
    }
    p.rgb = SyntheticCamera::respond(sens, p.reference.values);
    for (double& c : p.rgb) {
      if (camera.noise_sigma > 0.0) c += camera.noise_sigma * standard_normal(rng);
      c = clamp01(c);
    }
    return p;
  };
  auto label = [](const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i + 1);
    return std::string(buf);
  };
  std::vector<ColorPatch> train, holdout;
  for (std::size_t i = 0; i < n_train; ++i) train.push_back(make(label("T", i)));
  for (std::size_t i = 0; i < n_holdout; ++i) holdout.push_back(make(label("H", i)));
  return {std::move(train), std::move(holdout)};
}

// ---------------------------------------------------------------------------
// Fundus-like two-class phantom
// ---------------------------------------------------------------------------

struct PhantomConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t n_train = 400;
  std::size_t n_val = 50;
  std::size_t n_test = 150;
  double effect_lo_nm = 520.0;
  double effect_hi_nm = 600.0;
  double effect_magnitude = 0.05;
  double disk_radius = 0.2;       // fraction of the image size
  std::size_t vessel_count = 6;   // strokes per image
  double noise_sigma = 0.01;      // per-pixel, per-band reflectance noise
  double blob_probability = 0.0;  // broadband bright blob anywhere, either class
  double blob_magnitude = 0.05;
  double vignette = 0.0;          // peak radial illumination falloff
  SyntheticCamera camera;
  std::uint64_t seed = 42;

  void validate() const {
    if (width < 8 || height < 8) throw InvalidInput("phantom images must be at least 8x8");
    const bool test_only = n_train == 0 && n_val == 0;
    if (!test_only && (n_train == 0 || n_val == 0))
      throw InvalidInput("phantom train and validation splits must both be non-empty (or both empty for test-only)");
    if (!(effect_lo_nm >= SpectrumGrid::wavelength(0) && effect_hi_nm <= SpectrumGrid::wavelength(kBands - 1) &&
          effect_lo_nm <= effect_hi_nm))
      throw InvalidInput("phantom effect window must lie inside 450-680 nm");
    if (effect_magnitude < 0.0 || noise_sigma < 0.0 || blob_magnitude < 0.0)
      throw InvalidInput("phantom magnitudes must be non-negative");
    if (!(blob_probability >= 0.0 && blob_probability <= 1.0)) throw InvalidInput("blob_probability must be in [0,1]");
    if (!(vignette >= 0.0 && vignette <= 1.0)) throw InvalidInput("vignette must be in [0,1]");
  }

  bool in_effect_window(std::size_t band) const {
    const double nm = SpectrumGrid::wavelength(band);
    return nm >= effect_lo_nm - 1e-9 && nm <= effect_hi_nm + 1e-9;
  }
};

inline PhantomConfig phantom_config_from_json(const nlohmann::json& j, PhantomConfig c = {}) {
  try {
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.n_train = j.value("n_train", c.n_train);
    c.n_val = j.value("n_val", c.n_val);
    c.n_test = j.value("n_test", c.n_test);
    c.effect_lo_nm = j.value("effect_lo_nm", c.effect_lo_nm);
    c.effect_hi_nm = j.value("effect_hi_nm", c.effect_hi_nm);
    c.effect_magnitude = j.value("effect_magnitude", c.effect_magnitude);
    c.disk_radius = j.value("disk_radius", c.disk_radius);
    c.vessel_count = j.value("vessel_count", c.vessel_count);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.blob_probability = j.value("blob_probability", c.blob_probability);
    c.blob_magnitude = j.value("blob_magnitude", c.blob_magnitude);
    c.vignette = j.value("vignette", c.vignette);
    if (j.contains("camera")) c.camera = camera_from_json(j["camera"]);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed phantom config: ") + e.what());
  }
  return c;
}

/// Hemoglobin-like absorption shape in [0,1]: Q-band peaks near 542 and
/// 577 nm over a tail that falls off toward the red.
inline double hemoglobin_absorption(double nm) {
  auto g = [](double x, double mu, double s) { return std::exp(-0.5 * ((x - mu) / s) * ((x - mu) / s)); };
  const double v = 0.55 * g(nm, 542.0, 14.0) + 0.6 * g(nm, 577.0, 12.0) + 0.45 * std::exp(-(nm - 450.0) / 45.0);
  return std::min(1.0, v);
}

/// Per-image background reflectance: base + slope * t^gamma, t = (nm-450)/230.
/// Non-decreasing in wavelength for every draw.
inline std::array<double, kBands> phantom_background(std::mt19937_64& rng) {
  const double base = uniform(rng, 0.12, 0.28);
  const double slope = uniform(rng, 0.2, 0.4);
  const double gamma = uniform(rng, 0.7, 1.5);
  std::array<double, kBands> b{};
  for (std::size_t k = 0; k < kBands; ++k) {
    const double t = (SpectrumGrid::wavelength(k) - 450.0) / 230.0;
    b[k] = base + slope * std::pow(t, gamma);
  }
  return b;
}

struct PhantomImage {
  std::string id;
  std::string split;  // "train" | "val" | "test"
  int label = 0;
  int group = 0;  // 0..4 severity-like tag
  Image8 image;
  std::optional<SpectralCube> truth;
};

/// Renders one phantom. Every random draw depends only on `image_seed`, the
/// label only switches the disk effect on, so equal seeds give images that
/// differ solely inside the effect window and central disk.
inline PhantomImage render_phantom(const PhantomConfig& cfg, std::uint64_t image_seed, int label, bool keep_truth) {
  std::mt19937_64 rng(image_seed);
  const std::size_t W = cfg.width, H = cfg.height;
  const auto background = phantom_background(rng);
  const int group = static_cast<int>(uniform_index(rng, 5));
  const double vignette = cfg.vignette * uniform(rng, 1.0 / 3.0, 1.0);
  const double gx = uniform(rng, -0.1, 0.1), gy = uniform(rng, -0.1, 0.1);

  std::array<double, kBands> hb{};
  for (std::size_t k = 0; k < kBands; ++k) hb[k] = hemoglobin_absorption(SpectrumGrid::wavelength(k));

  // Vessel strokes: quadratic Bezier curves, rendered as a per-pixel depth map.
  std::vector<double> vessel(W * H, 0.0);
  for (std::size_t v = 0; v < cfg.vessel_count; ++v) {
    const double x0 = uniform(rng, 0, W), y0 = uniform(rng, 0, H);
    const double x1 = uniform(rng, 0, W), y1 = uniform(rng, 0, H);
    const double x2 = uniform(rng, 0, W), y2 = uniform(rng, 0, H);
    const double width = uniform(rng, 0.8, 2.2);
    const double depth = uniform(rng, 0.3, 0.6);
    const std::size_t steps = 4 * (W + H);
    for (std::size_t s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / static_cast<double>(steps);
      const double px = (1 - t) * (1 - t) * x0 + 2 * (1 - t) * t * x1 + t * t * x2;
      const double py = (1 - t) * (1 - t) * y0 + 2 * (1 - t) * t * y1 + t * t * y2;
      const long r = static_cast<long>(std::ceil(2 * width));
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) {
          const long ix = static_cast<long>(px) + dx, iy = static_cast<long>(py) + dy;
          if (ix < 0 || iy < 0 || ix >= static_cast<long>(W) || iy >= static_cast<long>(H)) continue;
          const double ddx = ix + 0.5 - px, ddy = iy + 0.5 - py;
          const double prof = depth * std::exp(-(ddx * ddx + ddy * ddy) / (2 * width * width));
          double& cell = vessel[static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)];
          cell = std::max(cell, prof);
        }
    }
  }

  // Broadband blob (either class): raises every band equally.
  const bool blob = uniform01(rng) < cfg.blob_probability;
  const double bx = uniform(rng, 0.3, 0.7) * W, by = uniform(rng, 0.3, 0.7) * H;
  const double br = uniform(rng, 0.1, 0.25) * std::min(W, H);
  const double bmag = cfg.blob_magnitude * uniform(rng, 0.5, 1.5);

  const double effect = cfg.effect_magnitude * (0.6 + 0.1 * group);
  const double cx = 0.5 * W, cy = 0.5 * H, radius = cfg.disk_radius * std::min(W, H);

  PhantomImage out;
  out.label = label;
  out.group = group;
  out.image = Image8(W, H);
  SpectralCube truth(W, H);
  const auto sens = cfg.camera.sensitivities();
  std::array<double, kBands> refl{};
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double u = (x + 0.5) / W - 0.5, v = (y + 0.5) / H - 0.5;
      const double illum = (1.0 - vignette * 2.0 * (u * u + v * v)) * (1.0 + gx * u + gy * v);
      const double ves = vessel[y * W + x];
      const double dc = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      const double disk = 1.0 / (1.0 + std::exp((dc - radius) / 1.5));
      const double db = std::hypot(x + 0.5 - bx, y + 0.5 - by);
      const double blob_w = blob ? bmag / (1.0 + std::exp((db - br) / 1.5)) : 0.0;
      for (std::size_t k = 0; k < kBands; ++k) {
        double r = background[k] * illum * (1.0 - ves * hb[k]) + blob_w;
        if (label == 1 && cfg.in_effect_window(k)) r += effect * disk;
        if (cfg.noise_sigma > 0.0) r += cfg.noise_sigma * standard_normal(rng);
        refl[k] = clamp01(r);
        truth.at(k, y, x) = static_cast<float>(refl[k]);
      }
      Rgb rgb = SyntheticCamera::respond(sens, refl);
      std::uint8_t* px = out.image.rgb.data() + (y * W + x) * 3;
      for (std::size_t c = 0; c < 3; ++c) {
        if (cfg.camera.noise_sigma > 0.0) rgb[c] += cfg.camera.noise_sigma * standard_normal(rng);
        px[c] = linear_to_srgb8(rgb[c]);
      }
    }
  if (keep_truth) out.truth = std::move(truth);
  return out;
}

/// All phantoms of a config, in split order train, val, test. Labels
/// alternate within each split so every split is balanced.
inline std::vector<PhantomImage> synth_fundus_images(const PhantomConfig& cfg, bool keep_truth = false,
                                                     std::size_t threads = 1) {
  cfg.validate();
  struct Slot {
    std::string split;
    std::size_t index;
  };
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < cfg.n_train; ++i) slots.push_back({"train", i});
  for (std::size_t i = 0; i < cfg.n_val; ++i) slots.push_back({"val", i});
  for (std::size_t i = 0; i < cfg.n_test; ++i) slots.push_back({"test", i});
  std::vector<PhantomImage> images(slots.size());
  parallel_for(slots.size(), threads, [&](std::size_t i) {
    const int label = static_cast<int>(slots[i].index % 2);
    images[i] = render_phantom(cfg, derive_seed(cfg.seed, i), label, keep_truth);
    images[i].split = slots[i].split;
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s_%05zu", slots[i].split.c_str(), slots[i].index);
    images[i].id = buf;
  });
  return images;
}

struct ManifestRecord {
  std::string path;
  int label = 0;
  std::string split;
  std::string group;
  std::string cube;  // optional ground-truth cube path
};

inline std::string manifest_line(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["path"] = r.path;
  j["label"] = r.label;
  j["split"] = r.split;
  j["group"] = r.group;
  if (!r.cube.empty()) j["cube"] = r.cube;
  return j.dump();
}

inline std::vector<ManifestRecord> parse_manifest(const std::string& text, const std::string& source = "manifest") {
  std::vector<ManifestRecord> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.path = j.at("path").get<std::string>();
      r.label = j.at("label").get<int>();
      r.split = j.at("split").get<std::string>();
      r.group = j.value("group", std::string());
      r.cube = j.value("cube", std::string());
      if (r.label != 0 && r.label != 1) throw FormatError("label must be 0 or 1");
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Checksum over manifest text and raw pixels; independent of PNG encoder details.
inline std::string dataset_checksum(std::span<const PhantomImage> images, const std::string& manifest_text) {
  std::uint64_t h = fnv1a(manifest_text);
  for (const auto& im : images) h = fnv1a(std::span<const unsigned char>(im.image.rgb), h);
  return to_hex(h);
}

/// Writes images/<id>.png (and cubes/<id>.msc when requested) plus
/// manifest.jsonl under `dir`; returns the manifest text.
inline std::string write_fundus_dataset(const std::vector<PhantomImage>& images, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  std::string manifest;
  if (!images.empty()) {
    fs::create_directories(fs::path(dir) / "images", ec);
    if (ec) throw IoError("cannot create image directory: " + ec.message());
  }
  for (const auto& im : images) {
    ManifestRecord r;
    r.path = "images/" + im.id + ".png";
    r.label = im.label;
    r.split = im.split;
    r.group = std::to_string(im.group);
    write_png(im.image, (fs::path(dir) / r.path).string());
    if (im.truth) {
      fs::create_directories(fs::path(dir) / "cubes", ec);
      r.cube = "cubes/" + im.id + ".msc";
      write_cube(*im.truth, (fs::path(dir) / r.cube).string());
    }
    manifest += manifest_line(r) + "\n";
  }
  write_file_text((fs::path(dir) / "manifest.jsonl").string(), manifest);
  return manifest;
}

}  // namespace msvl
