#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "msvl/metrics.hpp"
#include "msvl/plot.hpp"
#include "oracles.hpp"

using namespace msvl;

namespace {

std::vector<ScoredSample> make(std::vector<double> scores, std::vector<int> labels) {
  std::vector<ScoredSample> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({scores[i], labels[i], std::nullopt, "s" + std::to_string(i)});
  return out;
}

// Random instance with both classes and scores on a coarse grid (many ties).
std::vector<ScoredSample> random_instance(std::mt19937_64& rng, std::size_t max_n = 50) {
  const std::size_t n = 2 + uniform_index(rng, max_n - 1);
  std::vector<ScoredSample> s;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i == 0 ? 0 : (i == 1 ? 1 : static_cast<int>(uniform_index(rng, 2)));
    const double score = static_cast<double>(uniform_index(rng, 10)) / 10.0 + 0.05 * label;
    s.push_back({score, label, std::nullopt, ""});
  }
  return s;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Auroc, DocumentedExamples) {
  EXPECT_EQ(auroc(make({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})), 0.75);
  EXPECT_EQ(auroc(make({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1})), 1.0);
  EXPECT_EQ(auroc(make({0.5, 0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1, 1})), 0.5);
}

TEST(Auroc, SingleClassIsDegenerate) {
  EXPECT_THROW(auroc(make({0.1, 0.2}, {1, 1})), DegenerateInput);
  EXPECT_THROW(roc_curve(make({0.1, 0.2}, {0, 0})), DegenerateInput);
  EXPECT_THROW(youden_cutoff(make({0.1}, {0})), DegenerateInput);
  EXPECT_THROW(bootstrap_ci(make({0.1, 0.2}, {0, 0}), 100, 1), DegenerateInput);
}

TEST(Auroc, MatchesConcordanceAndTrapezoidOnRandomInstances) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 200; ++t) {
    const auto s = random_instance(rng);
    const double a = auroc(s);
    EXPECT_EQ(a, oracle::concordance_auroc(s)) << "instance " << t;
    EXPECT_NEAR(a, trapezoid_area(roc_curve(s)), 1e-12) << "instance " << t;
  }
}

TEST(Auroc, ComplementSymmetry) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    auto s = random_instance(rng);
    const double a = auroc(s);
    for (auto& x : s) {
      x.label = 1 - x.label;
      x.score = 1.0 - x.score;
    }
    EXPECT_NEAR(auroc(s), a, 1e-12);
  }
}

TEST(RocCurve, StaircaseShape) {
  const auto pts = roc_curve(make({0.9, 0.1}, {1, 0}));
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_EQ(pts[0].fpr, 0.0);
  EXPECT_EQ(pts[0].tpr, 0.0);
  EXPECT_EQ(pts[1].fpr, 0.0);
  EXPECT_EQ(pts[1].tpr, 1.0);
  EXPECT_EQ(pts[2].fpr, 1.0);
  EXPECT_EQ(pts[2].tpr, 1.0);
  EXPECT_EQ(trapezoid_area(roc_curve(make({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}))), 0.75);
}

TEST(RocCurve, MonotoneWithFixedEndpoints) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    const auto pts = roc_curve(random_instance(rng));
    EXPECT_EQ(pts.front().fpr, 0.0);
    EXPECT_EQ(pts.front().tpr, 0.0);
    EXPECT_EQ(pts.back().fpr, 1.0);
    EXPECT_EQ(pts.back().tpr, 1.0);
    for (std::size_t i = 1; i < pts.size(); ++i) {
      EXPECT_GE(pts[i].fpr, pts[i - 1].fpr);
      EXPECT_GE(pts[i].tpr, pts[i - 1].tpr);
      EXPECT_LT(pts[i].threshold, pts[i - 1].threshold);
    }
  }
}

TEST(Bootstrap, PerfectSeparationGivesUnitInterval) {
  const auto ci = bootstrap_ci(make({0.1, 0.2, 0.3, 0.7, 0.8, 0.9}, {0, 0, 0, 1, 1, 1}), 200, 3);
  EXPECT_EQ(ci.low, 1.0);
  EXPECT_EQ(ci.high, 1.0);
}

TEST(Bootstrap, PinnedFortySampleInterval) {
  std::mt19937_64 rng(40);
  std::vector<ScoredSample> s;
  for (int i = 0; i < 40; ++i) s.push_back({uniform01(rng) + 0.3 * (i % 2), i % 2, std::nullopt, ""});
  const auto ci = bootstrap_ci(s, 2000, 42);
  EXPECT_NEAR(ci.low, 0.635, 1e-12);
  EXPECT_NEAR(ci.high, 0.9075, 1e-12);
  const double a = auroc(s);
  EXPECT_LE(ci.low, a);
  EXPECT_GE(ci.high, a);
}

TEST(Bootstrap, DeterministicAndThreadIndependent) {
  std::mt19937_64 rng(8);
  const auto s = random_instance(rng);
  const auto a = bootstrap_ci(s, 500, 11, 0.95, 1);
  const auto b = bootstrap_ci(s, 500, 11, 0.95, 4);
  EXPECT_EQ(a.low, b.low);
  EXPECT_EQ(a.high, b.high);
  EXPECT_GE(a.low, 0.0);
  EXPECT_LE(a.high, 1.0);
  EXPECT_THROW(bootstrap_ci(s, 99, 1), InvalidInput);
}

TEST(DeLong, IdenticalScoresGivePOne) {
  const std::vector<double> a{0.1, 0.7, 0.3, 0.9, 0.5};
  const std::vector<int> labels{0, 1, 0, 1, 1};
  const auto r = delong_test(a, a, labels);
  EXPECT_EQ(r.auc_a, r.auc_b);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(DeLong, SingleClassIsDegenerate) {
  const std::vector<double> a{0.1, 0.2};
  EXPECT_THROW(delong_test(a, a, std::vector<int>{1, 1}), DegenerateInput);
}

TEST(DeLong, MatchesMidrankOracle) {
  std::mt19937_64 rng(2020);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(20), b(20);
    std::vector<int> labels(20);
    for (int i = 0; i < 20; ++i) {
      labels[i] = i % 2;
      // coarse grid so ties occur within and across classes
      a[i] = std::round(10 * (uniform01(rng) + 0.4 * labels[i])) / 10;
      b[i] = std::round(10 * (uniform01(rng) + 0.1 * labels[i])) / 10;
    }
    const auto r = delong_test(a, b, labels);
    EXPECT_GT(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
    EXPECT_NEAR(r.p_value, oracle::delong_midrank_pvalue(a, b, labels), 1e-10) << "instance " << t;
  }
}

TEST(DeLong, PerfectVersusChanceIsSignificant) {
  std::vector<double> a, b;
  std::vector<int> labels;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 60; ++i) {
    labels.push_back(i % 2);
    a.push_back(labels.back() + 0.1 * uniform01(rng));
    b.push_back(uniform01(rng));
  }
  const auto r = delong_test(a, b, labels);
  EXPECT_EQ(r.auc_a, 1.0);
  EXPECT_LT(r.p_value, 0.01);
  EXPECT_FALSE(r.degenerate);
}

TEST(Youden, MidpointExample) {
  EXPECT_EQ(youden_cutoff(make({0.2, 0.8}, {0, 1})), 0.5);
}

TEST(Youden, MatchesBruteForceScan) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 200; ++t) {
    const auto s = random_instance(rng, 12);
    EXPECT_EQ(youden_cutoff(s), oracle::youden_scan(s)) << "instance " << t;
  }
}

TEST(Confusion, DocumentedExample) {
  const auto c = confusion_metrics(make({0.9, 0.4, 0.6, 0.1}, {1, 1, 0, 0}), 0.5);
  EXPECT_EQ(c.accuracy, 0.5);
  EXPECT_EQ(c.sensitivity, 0.5);
  EXPECT_EQ(c.specificity, 0.5);
  EXPECT_EQ(c.f1, 0.5);
}

TEST(Confusion, TiesAtCutoffArePositiveAndF1Guarded) {
  const auto c = confusion_metrics(make({0.5, 0.2}, {1, 0}), 0.5);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.f1, 1.0);
  const auto none = confusion_metrics(make({0.1, 0.2}, {1, 0}), 0.9);
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_THROW(confusion_metrics(make({0.1}, {1}), NAN), InvalidInput);
}

TEST(Stratified, GroupsPartitionOverall) {
  auto s = make({0.9, 0.4, 0.6, 0.1, 0.8, 0.3}, {1, 1, 0, 0, 1, 0});
  for (std::size_t i = 0; i < s.size(); ++i) s[i].group = i < 4 ? "0" : "3";
  const auto rows = stratified_report(s, 0.5);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows.back().group, "overall");
  double weighted = 0.0;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) weighted += rows[i].accuracy * static_cast<double>(rows[i].n);
  EXPECT_NEAR(weighted / 6.0, rows.back().accuracy, 1e-15);
  for (auto& x : s) x.group = "2";
  const auto one = stratified_report(s, 0.5);
  EXPECT_EQ(one[0].accuracy, one.back().accuracy);
  s[0].group.reset();
  EXPECT_THROW(stratified_report(s, 0.5), InvalidInput);
}

TEST(ReportFormat, TableRowStrings) {
  EXPECT_EQ(format_percent(0.847), "84.7%");
  EXPECT_EQ(format_fixed(0.9, 3), "0.900");
  EXPECT_EQ(format_p_value(0.004), "P < 0.01");
  EXPECT_EQ(format_p_value(0.0004), "P < 0.001");
  EXPECT_EQ(format_p_value(0.25), "P = 0.250");
}

TEST(ReportFormat, MatchesGoldenFixture) {
  EvalReport r;
  r.model = "gnn_msvl jumper N=2";
  r.accuracy = 0.847;
  r.sensitivity = 0.887;
  r.specificity = 0.809;
  r.f1 = 0.851;
  r.auroc = 0.900;
  r.ci_low = 0.852;
  r.ci_high = 0.937;
  r.cutoff = 0.374;
  r.p_value = 0.004;
  r.n_pos = 106;
  r.n_neg = 110;
  const std::string golden = read_text(std::string(MSVL_FIXTURE_DIR) + "/report_golden.json");
  EXPECT_EQ(report_to_json(r).dump(2) + "\n", golden);
  const auto back = report_from_json(nlohmann::json::parse(golden));
  EXPECT_EQ(report_to_json(back).dump(2) + "\n", golden);
}

TEST(ReportFormat, EvaluateFillsEveryColumn) {
  auto s = make({0.9, 0.4, 0.6, 0.1, 0.8, 0.3, 0.7, 0.2}, {1, 1, 0, 0, 1, 0, 1, 0});
  for (std::size_t i = 0; i < s.size(); ++i) s[i].group = std::to_string(i % 3);
  const std::vector<double> ref{0.5, 0.5, 0.5, 0.5, 0.6, 0.4, 0.5, 0.5};
  const auto r = evaluate_scores(s, 0.5, EvalOptions{200, 1, 1}, std::span<const double>(ref), "m");
  const auto j = report_to_json(r);
  for (const char* k : {"accuracy", "sensitivity", "specificity", "f1", "auroc", "ci_low", "ci_high", "cutoff", "p_value"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_TRUE(j["p_value"].is_number());
  EXPECT_EQ(j["stratified"].size(), 4u);
  EXPECT_EQ(j["display"].size(), 8u);
  EXPECT_EQ(r.n_pos, 4u);
  const auto no_ref = evaluate_scores(s, 0.5, EvalOptions{200, 1, 1});
  EXPECT_EQ(table_row(no_ref).back(), "Ref");
}

TEST(ReportFormat, InfiniteCutoffSerializesAsNull) {
  EvalReport r;
  r.cutoff = std::numeric_limits<double>::infinity();
  const auto j = report_to_json(r);
  EXPECT_TRUE(j["cutoff"].is_null());
  EXPECT_TRUE(std::isinf(report_from_json(j).cutoff));
  EXPECT_THROW(report_from_json(nlohmann::json::parse(R"({"accuracy": 1})")), FormatError);
}

TEST(ScoresCsv, Roundtrip) {
  auto s = make({0.125, 1.0 / 3.0, 0.9}, {0, 1, 1});
  s[1].group = "4";
  const auto text = format_scores_csv(s);
  EXPECT_EQ(text.substr(0, text.find('\n')), "id,score,label,group");
  const auto back = parse_scores_csv(text);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].score, s[i].score);
    EXPECT_EQ(back[i].label, s[i].label);
    EXPECT_EQ(back[i].id, s[i].id);
    EXPECT_EQ(back[i].group, s[i].group);
  }
}

TEST(ScoresCsv, MalformedRejected) {
  EXPECT_THROW(parse_scores_csv("id,score\n"), FormatError);
  EXPECT_THROW(parse_scores_csv("id,score,label,group\na,0.5,2,\n"), FormatError);
  EXPECT_THROW(parse_scores_csv("id,score,label,group\na,x,1,\n"), FormatError);
  EXPECT_THROW(parse_scores_csv("id,score,label,group\na,0.5,1\n"), FormatError);
}

TEST(RocCsv, HeaderAndInfiniteThreshold) {
  const auto text = format_roc_csv(roc_curve(make({0.9, 0.1}, {1, 0})));
  EXPECT_EQ(text, "fpr,tpr,threshold\n0,0,inf\n0,1,0.90000000000000002\n1,1,0.10000000000000001\n");
}

TEST(RocSvg, LegendAndCurves) {
  EvalReport a, b;
  a.model = "rgb <baseline>";
  a.auroc = 0.632;
  a.roc = roc_curve(make({0.9, 0.1, 0.5}, {1, 0, 1}));
  b.model = "gnn";
  b.auroc = 0.9;
  b.roc = a.roc;
  const std::vector<EvalReport> reps{a, b};
  const auto svg = roc_svg(reps);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("rgb &lt;baseline&gt; (AUROC 0.632)"), std::string::npos);
  EXPECT_NE(svg.find("gnn (AUROC 0.900)"), std::string::npos);
  std::size_t lines = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
  EXPECT_EQ(lines, 2u);
}
