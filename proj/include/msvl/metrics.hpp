#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msvl/error.hpp"
#include "msvl/util.hpp"

namespace msvl {

struct ScoredSample {
  double score = 0.0;
  int label = 0;  // 1 = positive
  std::optional<std::string> group;
  std::string id;
};

namespace detail {

inline void class_counts(std::span<const ScoredSample> s, std::size_t& pos, std::size_t& neg) {
  pos = neg = 0;
  for (const auto& x : s) {
    if (!std::isfinite(x.score)) throw InvalidInput("scores must be finite");
    if (x.label != 0 && x.label != 1) throw InvalidInput("labels must be 0 or 1");
    (x.label == 1 ? pos : neg) += 1;
  }
}

inline void require_both_classes(std::span<const ScoredSample> s, const char* op) {
  std::size_t pos, neg;
  class_counts(s, pos, neg);
  if (pos == 0 || neg == 0)
    throw DegenerateInput(std::string(op) + ": needs at least one positive and one negative sample");
}

// Mann-Whitney statistic from sorted midranks: the number of (pos, neg)
// pairs where the positive scores higher, plus one half per tie.
inline double concordance_count(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        rank_sum += mid;
        ++pos;
      }
    i = j;
  }
  return rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
}

}  // namespace detail

/// Probability that a random positive outscores a random negative; ties count 1/2.
inline double auroc(std::span<const ScoredSample> samples) {
  std::size_t pos, neg;
  detail::class_counts(samples, pos, neg);
  if (pos == 0 || neg == 0) throw DegenerateInput("auroc: needs at least one positive and one negative sample");
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : samples) {
    scores.push_back(s.score);
    labels.push_back(s.label);
  }
  return detail::concordance_count(scores, labels) / (static_cast<double>(pos) * static_cast<double>(neg));
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // positive iff score >= threshold; +inf for the origin
};

/// Staircase from (0,0) to (1,1); one point per distinct score, descending.
inline std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples) {
  std::size_t pos, neg;
  detail::class_counts(samples, pos, neg);
  if (pos == 0 || neg == 0) throw DegenerateInput("roc_curve: needs at least one positive and one negative sample");
  std::vector<const ScoredSample*> order;
  for (const auto& s : samples) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->score > b->score; });
  std::vector<RocPoint> pts{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = order[i]->score;
    while (i < order.size() && order[i]->score == thr) {
      (order[i]->label == 1 ? tp : fp) += 1;
      ++i;
    }
    pts.push_back({static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos), thr});
  }
  return pts;
}

inline double trapezoid_area(std::span<const RocPoint> pts) {
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].fpr - pts[i - 1].fpr) * 0.5 * (pts[i].tpr + pts[i - 1].tpr);
  return area;
}

/// Linear-interpolated percentile (q in [0,1]) of sorted values.
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidInput("percentile of an empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
};

/// Stratified percentile bootstrap of AUROC: positives and negatives are
/// resampled separately, so every resample keeps both classes. Resample b
/// draws from its own seed derived from (seed, b).
inline ConfidenceInterval bootstrap_ci(std::span<const ScoredSample> samples, std::size_t resamples,
                                       std::uint64_t seed, double level = 0.95, std::size_t threads = 1) {
  detail::require_both_classes(samples, "bootstrap_ci");
  if (resamples < 100) throw InvalidInput("bootstrap_ci: needs at least 100 resamples");
  std::vector<double> pos, neg;
  for (const auto& s : samples) (s.label == 1 ? pos : neg).push_back(s.score);
  std::vector<double> aucs(resamples);
  parallel_for(resamples, threads, [&](std::size_t b) {
    std::mt19937_64 rng(derive_seed(seed, b));
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(samples.size());
    for (std::size_t i = 0; i < pos.size(); ++i) {
      scores.push_back(pos[uniform_index(rng, pos.size())]);
      labels.push_back(1);
    }
    for (std::size_t i = 0; i < neg.size(); ++i) {
      scores.push_back(neg[uniform_index(rng, neg.size())]);
      labels.push_back(0);
    }
    aucs[b] = detail::concordance_count(scores, labels) /
              (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
  });
  std::sort(aucs.begin(), aucs.end());
  const double tail = (1.0 - level) / 2.0;
  return {percentile_sorted(aucs, tail), percentile_sorted(aucs, 1.0 - tail)};
}

struct DeLongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // zero variance with a nonzero AUC difference
};

/// DeLong's test for two correlated AUROCs on the same samples, two-sided.
inline DeLongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                                std::span<const int> labels) {
  if (scores_a.size() != labels.size() || scores_b.size() != labels.size())
    throw InvalidInput("delong_test: score vectors must align with the labels");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw InvalidInput("labels must be 0 or 1");
    if (!std::isfinite(scores_a[i]) || !std::isfinite(scores_b[i])) throw InvalidInput("scores must be finite");
    (labels[i] == 1 ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty())
    throw DegenerateInput("delong_test: needs at least one positive and one negative sample");
  const double m = static_cast<double>(pos.size()), n = static_cast<double>(neg.size());

  auto psi = [](double x, double y) { return x > y ? 1.0 : (x == y ? 0.5 : 0.0); };
  // Structural components (placements) for each model.
  std::array<std::vector<double>, 2> v10, v01;
  std::array<double, 2> auc{};
  const std::array<std::span<const double>, 2> sc{scores_a, scores_b};
  for (int r = 0; r < 2; ++r) {
    v10[r].assign(pos.size(), 0.0);
    v01[r].assign(neg.size(), 0.0);
    for (std::size_t i = 0; i < pos.size(); ++i)
      for (std::size_t j = 0; j < neg.size(); ++j) {
        const double k = psi(sc[r][pos[i]], sc[r][neg[j]]);
        v10[r][i] += k;
        v01[r][j] += k;
      }
    double total = 0.0;
    for (auto& v : v10[r]) {
      total += v;
      v /= n;
    }
    for (auto& v : v01[r]) v /= m;
    auc[r] = total / (m * n);
  }
  auto cov = [](const std::vector<double>& x, const std::vector<double>& y, double mx, double my) {
    if (x.size() < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - mx) * (y[i] - my);
    return acc / static_cast<double>(x.size() - 1);
  };
  const double s10_aa = cov(v10[0], v10[0], auc[0], auc[0]), s10_bb = cov(v10[1], v10[1], auc[1], auc[1]),
               s10_ab = cov(v10[0], v10[1], auc[0], auc[1]);
  const double s01_aa = cov(v01[0], v01[0], auc[0], auc[0]), s01_bb = cov(v01[1], v01[1], auc[1], auc[1]),
               s01_ab = cov(v01[0], v01[1], auc[0], auc[1]);
  const double var = (s10_aa + s10_bb - 2.0 * s10_ab) / m + (s01_aa + s01_bb - 2.0 * s01_ab) / n;

  DeLongResult res;
  res.auc_a = auc[0];
  res.auc_b = auc[1];
  const double diff = auc[0] - auc[1];
  if (diff == 0.0) {
    res.p_value = 1.0;
    return res;
  }
  if (!(var > 1e-18)) {
    res.degenerate = true;
    res.z = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    res.p_value = std::numeric_limits<double>::min();
    return res;
  }
  res.z = diff / std::sqrt(var);
  res.p_value = std::clamp(std::erfc(std::abs(res.z) / std::sqrt(2.0)), std::numeric_limits<double>::min(), 1.0);
  return res;
}

/// Youden's J = sensitivity + specificity - 1 at threshold t (positive iff score >= t).
inline double youden_j(std::span<const ScoredSample> samples, double threshold) {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (const auto& s : samples) {
    const bool predicted = s.score >= threshold;
    if (s.label == 1)
      (predicted ? tp : fn) += 1;
    else
      (predicted ? fp : tn) += 1;
  }
  return static_cast<double>(tp) / static_cast<double>(tp + fn) + static_cast<double>(tn) / static_cast<double>(tn + fp) - 1.0;
}

/// Candidates: -inf, midpoints of adjacent distinct sorted scores, +inf.
inline std::vector<double> youden_candidates(std::span<const ScoredSample> samples) {
  std::vector<double> distinct;
  for (const auto& s : samples) distinct.push_back(s.score);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> cands{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 1; i < distinct.size(); ++i) cands.push_back(0.5 * (distinct[i - 1] + distinct[i]));
  cands.push_back(std::numeric_limits<double>::infinity());
  return cands;
}

/// Youden-optimal operating threshold; ties resolve to the smallest threshold.
/// Sweeps candidates in ascending order with running confusion counts.
inline double youden_cutoff(std::span<const ScoredSample> samples) {
  std::size_t pos, neg;
  detail::class_counts(samples, pos, neg);
  if (pos == 0 || neg == 0) throw DegenerateInput("youden_cutoff: needs both classes");
  std::vector<std::pair<double, int>> sorted;
  for (const auto& s : samples) sorted.emplace_back(s.score, s.label);
  std::sort(sorted.begin(), sorted.end());
  const auto cands = youden_candidates(samples);
  // At threshold -inf everything is predicted positive.
  std::size_t tp = pos, fp = neg, idx = 0;
  double best = -std::numeric_limits<double>::infinity(), best_t = cands.front();
  for (double t : cands) {
    while (idx < sorted.size() && sorted[idx].first < t) {
      (sorted[idx].second == 1 ? tp : fp) -= 1;
      ++idx;
    }
    const double j = static_cast<double>(tp) / static_cast<double>(pos) +
                     static_cast<double>(neg - fp) / static_cast<double>(neg) - 1.0;
    if (j > best) {
      best = j;
      best_t = t;
    }
  }
  return best_t;
}

struct ConfusionMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0, sensitivity = 0.0, specificity = 0.0, precision = 0.0, f1 = 0.0;
};

inline double safe_ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

/// Predicts positive iff score >= cutoff. F1 is 0 when precision + recall is 0.
inline ConfusionMetrics confusion_metrics(std::span<const ScoredSample> samples, double cutoff) {
  if (std::isnan(cutoff)) throw InvalidInput("confusion_metrics: cutoff is NaN");
  ConfusionMetrics c;
  for (const auto& s : samples) {
    const bool predicted = s.score >= cutoff;
    if (s.label == 1)
      (predicted ? c.tp : c.fn) += 1;
    else
      (predicted ? c.fp : c.tn) += 1;
  }
  c.accuracy = safe_ratio(c.tp + c.tn, samples.size());
  c.sensitivity = safe_ratio(c.tp, c.tp + c.fn);
  c.specificity = safe_ratio(c.tn, c.tn + c.fp);
  c.precision = safe_ratio(c.tp, c.tp + c.fp);
  const double pr = c.precision + c.sensitivity;
  c.f1 = pr == 0.0 ? 0.0 : 2.0 * c.precision * c.sensitivity / pr;
  return c;
}

struct GroupAccuracy {
  std::string group;
  std::size_t n = 0;
  double accuracy = 0.0;
};

/// Accuracy per group tag at `cutoff`, sorted by tag, followed by an "overall" row.
inline std::vector<GroupAccuracy> stratified_report(std::span<const ScoredSample> samples, double cutoff) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // group -> (correct, total)
  std::size_t correct = 0;
  for (const auto& s : samples) {
    if (!s.group || s.group->empty()) throw InvalidInput("stratified_report: sample '" + s.id + "' has no group tag");
    const bool ok = (s.score >= cutoff) == (s.label == 1);
    auto& [c, t] = tally[*s.group];
    c += ok;
    t += 1;
    correct += ok;
  }
  std::vector<GroupAccuracy> rows;
  for (const auto& [g, ct] : tally) rows.push_back({g, ct.second, safe_ratio(ct.first, ct.second)});
  rows.push_back({"overall", samples.size(), safe_ratio(correct, samples.size())});
  return rows;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct EvalReport {
  std::string model;
  double accuracy = 0.0, sensitivity = 0.0, specificity = 0.0, f1 = 0.0;
  double auroc = 0.0, ci_low = 0.0, ci_high = 0.0;
  double cutoff = 0.0;
  std::optional<double> p_value;
  bool p_value_degenerate = false;
  std::size_t n_pos = 0, n_neg = 0;
  std::vector<GroupAccuracy> stratified;
  std::vector<RocPoint> roc;

  /// Percentile intervals can exclude the point estimate on tiny samples.
  bool ci_contains_point() const { return ci_low <= auroc && auroc <= ci_high; }
};

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string format_percent(double rate) { return format_fixed(100.0 * rate, 1) + "%"; }

inline std::string format_p_value(double p) {
  if (p < 0.001) return "P < 0.001";
  if (p < 0.01) return "P < 0.01";
  return "P = " + format_fixed(p, 3);
}

/// Table row: accuracy, sensitivity, specificity, F1, AUROC, CI, cutoff, P value.
inline std::vector<std::string> table_row(const EvalReport& r) {
  return {format_percent(r.accuracy),
          format_percent(r.sensitivity),
          format_percent(r.specificity),
          format_fixed(r.f1, 3),
          format_fixed(r.auroc, 3),
          format_fixed(r.ci_low, 3) + " - " + format_fixed(r.ci_high, 3),
          format_fixed(r.cutoff, 3),
          r.p_value ? format_p_value(*r.p_value) : "Ref"};
}

inline const std::vector<std::string>& table_header() {
  static const std::vector<std::string> h{"Accuracy", "Sensitivity", "Specificity", "F1Score",
                                          "AUROC",    "AUROC-95%CI", "Cut-off",     "P value"};
  return h;
}

namespace detail {
inline nlohmann::ordered_json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}
inline double null_as(const nlohmann::json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }
}  // namespace detail

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["accuracy"] = r.accuracy;
  j["sensitivity"] = r.sensitivity;
  j["specificity"] = r.specificity;
  j["f1"] = r.f1;
  j["auroc"] = r.auroc;
  j["ci_low"] = r.ci_low;
  j["ci_high"] = r.ci_high;
  j["cutoff"] = detail::finite_or_null(r.cutoff);
  j["p_value"] = r.p_value ? nlohmann::ordered_json(*r.p_value) : nlohmann::ordered_json(nullptr);
  j["p_value_degenerate"] = r.p_value_degenerate;
  j["n_pos"] = r.n_pos;
  j["n_neg"] = r.n_neg;
  j["ci_contains_point"] = r.ci_contains_point();
  nlohmann::ordered_json display;
  const auto row = table_row(r);
  const auto& head = table_header();
  for (std::size_t i = 0; i < row.size(); ++i) display[head[i]] = row[i];
  j["display"] = std::move(display);
  auto strat = nlohmann::ordered_json::array();
  for (const auto& g : r.stratified) strat.push_back({{"group", g.group}, {"n", g.n}, {"accuracy", g.accuracy}});
  j["stratified"] = std::move(strat);
  auto roc = nlohmann::ordered_json::array();
  for (const auto& p : r.roc) roc.push_back({p.fpr, p.tpr, detail::finite_or_null(p.threshold)});
  j["roc"] = std::move(roc);
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.model = j.value("model", std::string());
    r.accuracy = j.at("accuracy").get<double>();
    r.sensitivity = j.at("sensitivity").get<double>();
    r.specificity = j.at("specificity").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.auroc = j.at("auroc").get<double>();
    r.ci_low = j.at("ci_low").get<double>();
    r.ci_high = j.at("ci_high").get<double>();
    r.cutoff = detail::null_as(j.at("cutoff"), std::numeric_limits<double>::infinity());
    if (!j.at("p_value").is_null()) r.p_value = j.at("p_value").get<double>();
    r.p_value_degenerate = j.value("p_value_degenerate", false);
    r.n_pos = j.at("n_pos").get<std::size_t>();
    r.n_neg = j.at("n_neg").get<std::size_t>();
    for (const auto& g : j.value("stratified", nlohmann::json::array()))
      r.stratified.push_back({g.at("group").get<std::string>(), g.at("n").get<std::size_t>(), g.at("accuracy").get<double>()});
    for (const auto& p : j.value("roc", nlohmann::json::array()))
      r.roc.push_back({p.at(0).get<double>(), p.at(1).get<double>(),
                       detail::null_as(p.at(2), std::numeric_limits<double>::infinity())});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report JSON: ") + e.what());
  }
  return r;
}

struct EvalOptions {
  std::size_t bootstrap = 2000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Full report for test samples at a cutoff chosen elsewhere (usually the
/// Youden cutoff of a validation split). `reference` supplies the comparison
/// model's scores, aligned with `test`, for the DeLong p-value.
inline EvalReport evaluate_scores(std::span<const ScoredSample> test, double cutoff, const EvalOptions& opt,
                                  std::optional<std::span<const double>> reference = std::nullopt,
                                  std::string model = {}) {
  detail::require_both_classes(test, "evaluate");
  EvalReport r;
  r.model = std::move(model);
  const auto c = confusion_metrics(test, cutoff);
  r.accuracy = c.accuracy;
  r.sensitivity = c.sensitivity;
  r.specificity = c.specificity;
  r.f1 = c.f1;
  r.auroc = auroc(test);
  const auto ci = bootstrap_ci(test, opt.bootstrap, opt.seed, 0.95, opt.threads);
  r.ci_low = ci.low;
  r.ci_high = ci.high;
  r.cutoff = cutoff;
  r.n_pos = c.tp + c.fn;
  r.n_neg = c.tn + c.fp;
  r.roc = roc_curve(test);
  if (reference) {
    std::vector<double> a;
    std::vector<int> labels;
    for (const auto& s : test) {
      a.push_back(s.score);
      labels.push_back(s.label);
    }
    const auto d = delong_test(a, *reference, labels);
    r.p_value = d.p_value;
    r.p_value_degenerate = d.degenerate;
  }
  const bool grouped = std::all_of(test.begin(), test.end(), [](const auto& s) { return s.group && !s.group->empty(); });
  if (grouped) r.stratified = stratified_report(test, cutoff);
  return r;
}

// ---------------------------------------------------------------------------
// CSV: scores (id,score,label,group) and ROC points (fpr,tpr,threshold)
// ---------------------------------------------------------------------------

inline std::string format_scores_csv(std::span<const ScoredSample> samples) {
  std::string out = "id,score,label,group\n";
  char buf[64];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, ",%.17g,%d,", s.score, s.label);
    out += s.id + buf + s.group.value_or("") + "\n";
  }
  return out;
}

inline std::vector<ScoredSample> parse_scores_csv(const std::string& text, const std::string& source = "scores csv") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,score,label,group") throw FormatError(source + ": header must be 'id,score,label,group'");
  std::vector<ScoredSample> out;
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 4) throw FormatError(source + ":" + std::to_string(no) + ": expected 4 columns");
    ScoredSample s;
    s.id = cells[0];
    try {
      s.score = std::stod(cells[1]);
      s.label = std::stoi(cells[2]);
    } catch (const std::exception&) {
      throw FormatError(source + ":" + std::to_string(no) + ": malformed score or label");
    }
    if (s.label != 0 && s.label != 1) throw FormatError(source + ":" + std::to_string(no) + ": label must be 0 or 1");
    if (!cells[3].empty()) s.group = cells[3];
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string format_roc_csv(std::span<const RocPoint> pts) {
  std::string out = "fpr,tpr,threshold\n";
  char buf[96];
  for (const auto& p : pts) {
    if (std::isfinite(p.threshold))
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.fpr, p.tpr, p.threshold);
    else
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,inf\n", p.fpr, p.tpr);
    out += buf;
  }
  return out;
}

}  // namespace msvl
