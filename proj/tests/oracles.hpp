#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "msvl/calibration.hpp"
#include "msvl/metrics.hpp"
#include "msvl/model.hpp"
#include "msvl/nn/gradcheck.hpp"
#include "msvl/nn/ops.hpp"
#include "msvl/train.hpp"

namespace oracle {

using msvl::nn::Graph;
using msvl::nn::Tensor;
using msvl::nn::Var;

// ---------------------------------------------------------------------------
// Calibration

/// M = ((C^T C + lambda I)^-1 C^T R)^T via Eigen's full-pivot LU.
inline Eigen::MatrixXd normal_equations(const std::vector<msvl::ColorPatch>& patches, double lambda, bool bias) {
  const int n = static_cast<int>(patches.size()), cols = bias ? 4 : 3;
  Eigen::MatrixXd C(n, cols), R(n, 24);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) C(i, c) = patches[i].rgb[c];
    if (bias) C(i, 3) = 1.0;
    for (int k = 0; k < 24; ++k) R(i, k) = patches[i].reference.values[k];
  }
  Eigen::MatrixXd A = C.transpose() * C + lambda * Eigen::MatrixXd::Identity(cols, cols);
  return A.fullPivLu().solve(C.transpose() * R).transpose();
}

inline double max_abs_diff(const msvl::TransformationMatrix& m, const Eigen::MatrixXd& o) {
  double d = 0.0;
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < static_cast<int>(m.cols()); ++c) d = std::max(d, std::abs(m.at(r, c) - o(r, c)));
  return d;
}

// ---------------------------------------------------------------------------
// Metrics

/// Exhaustive pairwise concordance: (#pos>neg + 0.5 #ties) / (P N).
inline double concordance_auroc(const std::vector<msvl::ScoredSample>& s) {
  double num = 0.0;
  double pairs = 0.0;
  for (const auto& p : s) {
    if (p.label != 1) continue;
    for (const auto& q : s) {
      if (q.label != 0) continue;
      pairs += 1.0;
      if (p.score > q.score) num += 1.0;
      else if (p.score == q.score) num += 0.5;
    }
  }
  return num / pairs;
}

inline double youden_at(const std::vector<msvl::ScoredSample>& s, double t) {
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (const auto& x : s) {
    const bool pred = x.score >= t;
    if (x.label == 1) (pred ? tp : fn) += 1;
    else (pred ? fp : tn) += 1;
  }
  return tp / (tp + fn) + tn / (tn + fp) - 1.0;
}

/// Scans midpoints of adjacent distinct scores and the two infinities in
/// increasing order, keeping the first (smallest) maximizer.
inline double youden_scan(const std::vector<msvl::ScoredSample>& s) {
  std::vector<double> v;
  for (const auto& x : s) v.push_back(x.score);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> cand{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < v.size(); ++i) cand.push_back(0.5 * (v[i] + v[i + 1]));
  cand.push_back(std::numeric_limits<double>::infinity());
  double best = cand[0], best_j = youden_at(s, cand[0]);
  for (double t : cand) {
    const double j = youden_at(s, t);
    if (j > best_j) {
      best_j = j;
      best = t;
    }
  }
  return best;
}

/// Midranks (1-based, ties averaged).
inline std::vector<double> midranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && x[idx[j]] == x[idx[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j + 1);
    i = j;
  }
  return r;
}

/// DeLong p-value through midrank placements (Sun and Xu), computed
/// independently of pairwise kernels.
inline double delong_midrank_pvalue(const std::vector<double>& a, const std::vector<double>& b,
                                    const std::vector<int>& labels) {
  const std::array<const std::vector<double>*, 2> models{&a, &b};
  std::array<std::vector<double>, 2> v10, v01;
  std::array<double, 2> auc{};
  double m = 0, n = 0;
  for (int l : labels) (l == 1 ? m : n) += 1;
  for (int r = 0; r < 2; ++r) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? xs : ys).push_back((*models[r])[i]);
    const auto tz = midranks(*models[r]), tx = midranks(xs), ty = midranks(ys);
    std::size_t ix = 0, iy = 0;
    double rank_sum = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == 1) {
        v10[r].push_back((tz[i] - tx[ix++]) / n);
        rank_sum += tz[i];
      } else {
        v01[r].push_back(1.0 - (tz[i] - ty[iy++]) / m);
      }
    }
    auc[r] = (rank_sum - m * (m + 1) / 2) / (m * n);
  }
  auto cov = [](const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i];
      my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - mx) * (y[i] - my);
    return acc / static_cast<double>(x.size() - 1);
  };
  const double var = (cov(v10[0], v10[0]) + cov(v10[1], v10[1]) - 2 * cov(v10[0], v10[1])) / m +
                     (cov(v01[0], v01[0]) + cov(v01[1], v01[1]) - 2 * cov(v01[0], v01[1])) / n;
  if (auc[0] == auc[1]) return 1.0;
  return std::erfc(std::abs(auc[0] - auc[1]) / std::sqrt(var) / std::sqrt(2.0));
}

/// Two-sided paired permutation test of AUC(a) - AUC(b): each draw swaps
/// the two models' scores per sample with probability 1/2.
inline double permutation_pvalue(const std::vector<double>& a, const std::vector<double>& b,
                                 const std::vector<int>& labels, int draws, std::uint64_t seed) {
  auto auc = [&](const std::vector<double>& s) {
    std::vector<msvl::ScoredSample> v;
    for (std::size_t i = 0; i < s.size(); ++i) v.push_back({s[i], labels[i], std::nullopt, ""});
    return concordance_auroc(v);
  };
  const double observed = std::abs(auc(a) - auc(b));
  std::mt19937_64 rng(seed);
  int extreme = 0;
  std::vector<double> pa(a.size()), pb(b.size());
  for (int d = 0; d < draws; ++d) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const bool swap = (rng() >> 63) != 0;
      pa[i] = swap ? b[i] : a[i];
      pb[i] = swap ? a[i] : b[i];
    }
    if (std::abs(auc(pa) - auc(pb)) >= observed - 1e-12) ++extreme;
  }
  return static_cast<double>(extreme) / draws;
}

// ---------------------------------------------------------------------------
// Gradient checks

inline Tensor random_tensor(msvl::nn::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = msvl::uniform(rng, lo, hi);
  return t;
}

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

/// Max relative error between reverse-mode and central-difference gradients
/// of sum(w * f(inputs)) with a fixed random weighting w, over all inputs.
inline msvl::nn::GradCheckResult check_primitive(const std::vector<Tensor>& inputs, const Builder& build,
                                                 std::uint64_t seed = 11, double eps = 1e-5) {
  auto eval = [&](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Graph g;
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(g.parameter(x));
    Var y = build(g, vars);
    std::mt19937_64 rng(seed);
    Var w = g.constant(random_tensor(y.shape(), rng));
    Var loss = msvl::nn::sum(msvl::nn::mul(y, w));
    if (grads) {
      auto vg = msvl::nn::eval_with_grads(loss, vars);
      *grads = std::move(vg.grads);
    }
    return msvl::nn::Probe{loss.value()[0], g.kink_signature()};
  };
  std::vector<Tensor> analytic;
  eval(inputs, &analytic);
  msvl::nn::GradCheckResult total;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Tensor& x) {
      auto xs = inputs;
      xs[k] = x;
      return eval(xs, nullptr);
    };
    const auto numeric = msvl::nn::finite_diff_grad_smooth(f, inputs[k], eps);
    const auto r = msvl::nn::compare_gradients(analytic[k], numeric);
    total.max_relative_error = std::max(total.max_relative_error, r.max_relative_error);
    total.checked += r.checked;
    total.skipped += r.skipped;
  }
  return total;
}

struct NamedCheck {
  std::string name;
  msvl::nn::GradCheckResult result;
};

/// Every differentiable primitive on seeded random inputs.
inline std::vector<NamedCheck> primitive_suite() {
  namespace nn = msvl::nn;
  std::mt19937_64 rng(2024);
  std::vector<NamedCheck> out;
  auto add = [&](std::string name, std::vector<Tensor> in, Builder b) {
    out.push_back({std::move(name), check_primitive(in, b)});
  };
  add("matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::matmul(v[0], v[1]); });
  add("linear", {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::linear(v[0], v[1], v[2]); });
  add("conv2d", {random_tensor({2, 2, 6, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::conv2d(v[0], v[1], v[2], {1, 1, 1}); });
  add("conv2d_stride2_pad2", {random_tensor({1, 2, 7, 7}, rng), random_tensor({2, 2, 5, 5}, rng), random_tensor({2}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::conv2d(v[0], v[1], v[2], {2, 2, 1}); });
  add("conv2d_grouped", {random_tensor({2, 4, 5, 5}, rng), random_tensor({6, 2, 3, 3}, rng), random_tensor({6}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::conv2d(v[0], v[1], v[2], {2, 1, 2}); });
  add("relu", {random_tensor({4, 5}, rng)}, [](Graph&, const std::vector<Var>& v) { return nn::relu(v[0]); });
  add("leaky_relu", {random_tensor({4, 5}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::leaky_relu(v[0], 0.2); });
  add("sigmoid", {random_tensor({4, 5}, rng, -4, 4)}, [](Graph&, const std::vector<Var>& v) { return nn::sigmoid(v[0]); });
  add("softmax", {random_tensor({3, 6}, rng, -3, 3)}, [](Graph&, const std::vector<Var>& v) { return nn::softmax(v[0]); });
  add("masked_softmax", {random_tensor({3, 3}, rng, -3, 3)}, [](Graph&, const std::vector<Var>& v) {
    static const std::uint8_t mask[] = {1, 1, 0, 0, 1, 1, 1, 0, 1};
    return nn::masked_softmax_rows(v[0], mask);
  });
  add("global_average_pool", {random_tensor({2, 3, 4, 5}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::global_average_pool(v[0]); });
  add("mean_rows", {random_tensor({5, 3}, rng)}, [](Graph&, const std::vector<Var>& v) { return nn::mean_rows(v[0]); });
  add("concat_cols", {random_tensor({3, 2}, rng), random_tensor({3, 4}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::concat_cols({v[0], v[1]}); });
  add("add", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::add(v[0], v[1]); });
  add("mul", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::mul(v[0], v[1]); });
  add("pairwise_sum", {random_tensor({4, 1}, rng), random_tensor({4, 1}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::pairwise_sum(v[0], v[1]); });
  add("scale_reshape", {random_tensor({2, 6}, rng)},
      [](Graph&, const std::vector<Var>& v) { return nn::reshape(nn::scale(v[0], -1.7), {3, 4}); });
  add("cross_entropy_loss", {random_tensor({4, 2}, rng, -2, 2)}, [](Graph&, const std::vector<Var>& v) {
    static const int labels[] = {0, 1, 1, 0};
    return nn::cross_entropy_loss(v[0], labels);
  });
  return out;
}

/// Small configuration used for full-model gradient checks (16x16 input, D=8).
inline msvl::ModelConfig gradcheck_config(msvl::Arch arch) {
  msvl::ModelConfig mc;
  mc.arch = arch;
  mc.encoder.stem_channels = 4;
  mc.encoder.stem_kernel = 3;
  mc.encoder.stem_stride = 2;
  mc.encoder.stages = {{4, 1}, {8, 2}};
  mc.encoder.cardinality = 2;
  mc.encoder.feature_dim = 8;
  mc.gat_width = 8;
  mc.classifier_hidden = 8;
  return mc;
}

/// Cross-entropy gradient of every parameter tensor against central
/// differences; returns one result per tensor name.
inline std::vector<NamedCheck> model_gradcheck(const msvl::ModelParams& params, const msvl::ModelInput& input,
                                               int label, double eps = 1e-5) {
  auto probe = [&](const msvl::ModelParams& p) {
    Graph g;
    msvl::BoundParams b(g, p);
    Var loss = msvl::nn::cross_entropy_loss(msvl::forward_logits(b, input), std::span<const int>(&label, 1));
    return msvl::nn::Probe{loss.value()[0], g.kink_signature()};
  };
  const auto analytic = msvl::sample_gradient(params, msvl::Sample{input, label, "", ""}).grads;
  std::vector<NamedCheck> out;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto f = [&](const Tensor& x) {
      msvl::ModelParams q = params;
      q.tensors[t] = x;
      return probe(q);
    };
    out.push_back({params.names[t],
                   msvl::nn::compare_gradients(analytic[t], msvl::nn::finite_diff_grad_smooth(f, params.tensors[t], eps))});
  }
  return out;
}

}  // namespace oracle
