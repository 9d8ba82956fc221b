#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "msvl/error.hpp"
#include "msvl/spectral.hpp"
#include "msvl/util.hpp"

namespace msvl {

using Rgb = std::array<double, 3>;

struct ColorPatch {
  std::string id;
  Rgb rgb{};
  ReflectanceSpectrum reference;
};

inline void validate_patch(const ColorPatch& p) {
  for (double c : p.rgb)
    if (!std::isfinite(c) || c < 0.0 || c > 1.0)
      throw InvalidInput("patch '" + p.id + "': rgb components must be finite and in [0,1]");
  for (double r : p.reference.values)
    if (!std::isfinite(r) || r < 0.0 || r > 1.0)
      throw InvalidInput("patch '" + p.id + "': reference reflectance must be finite and in [0,1]");
}

/// Linear map from (optionally 1-augmented) camera rgb to a 24-band spectrum.
struct TransformationMatrix {
  bool bias = false;
  double lambda = 0.0;
  double training_rmse = 0.0;
  std::vector<double> coeffs;  // kBands x cols, row-major

  std::size_t cols() const { return bias ? 4 : 3; }
  double at(std::size_t row, std::size_t col) const { return coeffs[row * cols() + col]; }
  double& at(std::size_t row, std::size_t col) { return coeffs[row * cols() + col]; }

  /// M * augment(rgb), without clamping.
  std::array<double, kBands> apply(const Rgb& rgb) const {
    std::array<double, kBands> out{};
    const std::size_t n = cols();
    for (std::size_t r = 0; r < kBands; ++r) {
      const double* row = coeffs.data() + r * n;
      double acc = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
      if (bias) acc += row[3];
      out[r] = acc;
    }
    return out;
  }

  double frobenius_norm() const {
    double acc = 0.0;
    for (double c : coeffs) acc += c * c;
    return std::sqrt(acc);
  }

  /// Stable identifier of the coefficients; reconstruction metadata carries it.
  std::string checksum() const {
    std::uint64_t h = fnv1a_values(std::span<const double>(coeffs));
    const double flags[2] = {bias ? 1.0 : 0.0, lambda};
    h = fnv1a_values(std::span<const double>(flags), h);
    return to_hex(h);
  }

  void validate() const {
    if (coeffs.size() != kBands * cols())
      throw InvalidInput("transformation matrix must have 24 rows of " + std::to_string(cols()) + " columns");
    for (double c : coeffs)
      if (!std::isfinite(c)) throw InvalidInput("transformation matrix has non-finite entries");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be finite and >= 0");
  }
};

namespace detail {

inline std::array<double, 4> augment(const Rgb& rgb, bool bias) {
  return {rgb[0], rgb[1], rgb[2], bias ? 1.0 : 0.0};
}

// Lexicographic order on (id, rgb, reference). Sorting before accumulation
// makes the fit independent of input order, bit for bit.
inline bool patch_less(const ColorPatch& a, const ColorPatch& b) {
  if (a.id != b.id) return a.id < b.id;
  if (a.rgb != b.rgb) return a.rgb < b.rgb;
  return a.reference.values < b.reference.values;
}

}  // namespace detail

/// Correlation matrices accumulated over a patch set.
struct WienerMoments {
  std::size_t cols = 3;
  std::vector<double> r_rc;  // kBands x cols
  std::vector<double> r_cc;  // cols x cols

  double trace_cc() const {
    double t = 0.0;
    for (std::size_t i = 0; i < cols; ++i) t += r_cc[i * cols + i];
    return t;
  }
};

inline WienerMoments wiener_moments(std::span<const ColorPatch> patches, bool bias) {
  std::vector<const ColorPatch*> order;
  order.reserve(patches.size());
  for (const auto& p : patches) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(),
                   [](const ColorPatch* a, const ColorPatch* b) { return detail::patch_less(*a, *b); });

  WienerMoments m;
  m.cols = bias ? 4 : 3;
  m.r_rc.assign(kBands * m.cols, 0.0);
  m.r_cc.assign(m.cols * m.cols, 0.0);
  for (const ColorPatch* p : order) {
    const auto c = detail::augment(p->rgb, bias);
    for (std::size_t i = 0; i < m.cols; ++i)
      for (std::size_t j = 0; j < m.cols; ++j) m.r_cc[i * m.cols + j] += c[i] * c[j];
    for (std::size_t r = 0; r < kBands; ++r)
      for (std::size_t j = 0; j < m.cols; ++j) m.r_rc[r * m.cols + j] += p->reference.values[r] * c[j];
  }
  return m;
}

/// Default ridge weight: 1e-6 * trace(R_cc) / cols.
inline double default_lambda(std::span<const ColorPatch> patches, bool bias) {
  const auto m = wiener_moments(patches, bias);
  return 1e-6 * m.trace_cc() / static_cast<double>(m.cols);
}

/// Wiener (regularized least-squares) estimate M = R_rc (R_cc + lambda I)^-1.
///
/// The symmetric system is factored by Cholesky; a pivot that collapses
/// relative to the matrix scale is reported as degenerate input.
inline TransformationMatrix wiener_fit(std::span<const ColorPatch> train, double lambda, bool bias) {
  const std::size_t n = bias ? 4 : 3;
  if (train.size() < n)
    throw InvalidInput("wiener_fit needs at least " + std::to_string(n) + " patches, got " +
                       std::to_string(train.size()));
  if (!std::isfinite(lambda) || lambda < 0.0) throw InvalidInput("lambda must be finite and >= 0");
  for (const auto& p : train) validate_patch(p);

  const WienerMoments mom = wiener_moments(train, bias);
  std::vector<double> a = mom.r_cc;
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] += lambda;

  const double scale = std::max(mom.trace_cc() + static_cast<double>(n) * lambda, 1e-300);
  std::vector<double> l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
    if (!(d > 1e-13 * scale))
      throw DegenerateInput("calibration system is singular to machine precision; use a larger lambda");
    l[j * n + j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = s / l[j * n + j];
    }
  }

  TransformationMatrix m;
  m.bias = bias;
  m.lambda = lambda;
  m.coeffs.assign(kBands * n, 0.0);
  // Row r of M solves (R_cc + lambda I) m_r = r_rc_r.
  std::vector<double> y(n);
  for (std::size_t r = 0; r < kBands; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = mom.r_rc[r * n + i];
      for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * y[k];
      y[i] = s / l[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= l[k * n + ii] * m.coeffs[r * n + k];
      m.coeffs[r * n + ii] = s / l[ii * n + ii];
    }
  }
  m.validate();

  double acc = 0.0;
  for (const auto& p : train) {
    const auto est = m.apply(p.rgb);
    acc += rmse(std::span<const double>(est), std::span<const double>(p.reference.values));
  }
  m.training_rmse = acc / static_cast<double>(train.size());
  return m;
}

inline TransformationMatrix wiener_fit(std::span<const ColorPatch> train, bool bias = false) {
  return wiener_fit(train, default_lambda(train, bias), bias);
}

/// Regularized fit objective sum_k |r_k - M c_k|^2 + lambda |M|_F^2.
inline double wiener_objective(const TransformationMatrix& m, std::span<const ColorPatch> patches) {
  double acc = 0.0;
  for (const auto& p : patches) {
    const auto est = m.apply(p.rgb);
    for (std::size_t k = 0; k < kBands; ++k) {
      const double d = p.reference.values[k] - est[k];
      acc += d * d;
    }
  }
  const double f = m.frobenius_norm();
  return acc + m.lambda * f * f;
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

inline ReflectanceSpectrum reconstruct_spectrum(const TransformationMatrix& m, const Rgb& rgb) {
  for (double c : rgb)
    if (!std::isfinite(c)) throw InvalidInput("reconstruct_spectrum: rgb must be finite");
  const auto raw = m.apply(rgb);
  ReflectanceSpectrum s;
  for (std::size_t k = 0; k < kBands; ++k) s.values[k] = clamp01(raw[k]);
  return s;
}

struct PatchError {
  std::string id;
  double rmse = 0.0;
  bool in_training = false;
};

struct CalibrationReport {
  std::vector<PatchError> per_patch;
  double mean_rmse = 0.0;
  double max_rmse = 0.0;
};

/// Per-patch RMSE between reconstructed and reference spectra. Patches whose
/// id appears in `training_ids` are labelled as training members.
inline CalibrationReport validate_calibration(const TransformationMatrix& m,
                                              std::span<const ColorPatch> holdout,
                                              const std::unordered_set<std::string>& training_ids = {}) {
  if (holdout.empty()) throw InvalidInput("validate_calibration: holdout set is empty");
  m.validate();
  CalibrationReport report;
  double acc = 0.0;
  for (const auto& p : holdout) {
    const auto est = reconstruct_spectrum(m, p.rgb);
    const double e = rmse(est, p.reference);
    report.per_patch.push_back({p.id, e, training_ids.contains(p.id)});
    acc += e;
    report.max_rmse = std::max(report.max_rmse, e);
  }
  report.mean_rmse = acc / static_cast<double>(holdout.size());
  return report;
}

// ---------------------------------------------------------------------------
// Patch CSV: id,r,g,b,R450,...,R680
// ---------------------------------------------------------------------------

inline std::string patch_csv_header() {
  std::string h = "id,r,g,b";
  for (std::size_t k = 0; k < kBands; ++k)
    h += ",R" + std::to_string(static_cast<int>(SpectrumGrid::wavelength(k)));
  return h;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": '" + text + "' is not a number");
  }
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace detail

inline std::vector<ColorPatch> parse_patch_csv(const std::string& text, const std::string& source = "patch csv") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != patch_csv_header())
    throw FormatError(source + ": header must be '" + patch_csv_header() + "'");
  std::vector<ColorPatch> patches;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (cells.size() != 4 + kBands)
      throw FormatError(where + ": expected " + std::to_string(4 + kBands) + " columns, got " +
                        std::to_string(cells.size()));
    ColorPatch p;
    p.id = cells[0];
    for (std::size_t c = 0; c < 3; ++c) p.rgb[c] = detail::parse_double(cells[1 + c], where);
    for (std::size_t k = 0; k < kBands; ++k) p.reference.values[k] = detail::parse_double(cells[4 + k], where);
    try {
      validate_patch(p);
    } catch (const InvalidInput& e) {
      throw FormatError(where + ": " + e.what());
    }
    patches.push_back(std::move(p));
  }
  return patches;
}

inline std::vector<ColorPatch> read_patch_csv(const std::string& path) {
  return parse_patch_csv(read_file_text(path), path);
}

inline std::string format_patch_csv(std::span<const ColorPatch> patches) {
  std::string out = patch_csv_header() + "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    out += buf;
  };
  for (const auto& p : patches) {
    out += p.id;
    for (double c : p.rgb) put(c);
    for (double r : p.reference.values) put(r);
    out += "\n";
  }
  return out;
}

inline void write_patch_csv(std::span<const ColorPatch> patches, const std::string& path) {
  write_file_text(path, format_patch_csv(patches));
}

// ---------------------------------------------------------------------------
// Matrix JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json matrix_to_json(const TransformationMatrix& m) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["bias"] = m.bias;
  j["lambda"] = m.lambda;
  j["wavelengths_nm"] = SpectrumGrid::wavelengths();
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < kBands; ++r) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m.at(r, c));
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  j["training_rmse"] = m.training_rmse;
  return j;
}

inline TransformationMatrix matrix_from_json(const nlohmann::json& j) {
  TransformationMatrix m;
  try {
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported matrix version");
    m.bias = j.at("bias").get<bool>();
    m.lambda = j.at("lambda").get<double>();
    if (!SpectrumGrid::matches(j.at("wavelengths_nm").get<std::vector<double>>()))
      throw FormatError("matrix wavelengths differ from the 450-680/10 nm grid");
    const auto& rows = j.at("rows");
    if (!rows.is_array() || rows.size() != kBands) throw FormatError("matrix must have 24 rows");
    for (const auto& row : rows) {
      const auto values = row.get<std::vector<double>>();
      if (values.size() != m.cols()) throw FormatError("matrix row has the wrong number of columns");
      m.coeffs.insert(m.coeffs.end(), values.begin(), values.end());
    }
    m.training_rmse = j.at("training_rmse").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed matrix JSON: ") + e.what());
  }
  try {
    m.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(e.what());
  }
  return m;
}

inline void write_matrix(const TransformationMatrix& m, const std::string& path) {
  write_file_text(path, matrix_to_json(m).dump(2) + "\n");
}

inline TransformationMatrix read_matrix(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  return matrix_from_json(j);
}

}  // namespace msvl
