#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "msvl/error.hpp"
#include "msvl/metrics.hpp"
#include "msvl/model.hpp"
#include "msvl/nn/optim.hpp"
#include "msvl/util.hpp"

namespace msvl {

struct Sample {
  ModelInput input;
  int label = 0;
  std::string group;
  std::string id;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t patience = 5;
  std::size_t threads = 0;  // 0 = all cores; never changes results
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auroc = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 = initialization
};

struct SampleGradient {
  double loss = 0.0;
  std::vector<nn::Tensor> grads;
};

/// Cross-entropy loss of one sample and its gradient for every parameter tensor.
inline SampleGradient sample_gradient(const ModelParams& params, const Sample& sample) {
  nn::Graph g;
  BoundParams b(g, params);
  const int label = sample.label;
  nn::Var loss = nn::cross_entropy_loss(forward_logits(b, sample.input), std::span<const int>(&label, 1));
  auto vg = nn::eval_with_grads(loss, b.all());
  return {vg.value, std::move(vg.grads)};
}

/// Positive-class scores, computed concurrently with results in sample order.
inline std::vector<double> predict(const ModelParams& params, std::span<const Sample> samples, std::size_t threads = 0) {
  std::vector<double> scores(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) { scores[i] = model_forward(params, samples[i].input); });
  return scores;
}

inline std::vector<ScoredSample> score_samples(const ModelParams& params, std::span<const Sample> samples,
                                               std::size_t threads = 0) {
  const auto scores = predict(params, samples, threads);
  std::vector<ScoredSample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ScoredSample s{scores[i], samples[i].label, std::nullopt, samples[i].id};
    if (!samples[i].group.empty()) s.group = samples[i].group;
    out.push_back(std::move(s));
  }
  return out;
}

/// Mini-batch Adam on cross-entropy. Per-sample gradients may be computed on
/// several threads but are summed in sample order, so a seed fixes the whole
/// trajectory. Returns the weights of the epoch with the best validation
/// AUROC (earliest on ties); stops after `patience` epochs without improvement.
inline TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, std::span<const Sample> train_set,
                         std::span<const Sample> val_set, std::optional<GraphTopology> topology = std::nullopt) {
  if (train_set.empty()) throw InvalidInput("train: training split is empty");
  if (val_set.empty()) throw InvalidInput("train: validation split is empty");
  if (cfg.batch_size < 1) throw InvalidInput("train: batch_size must be >= 1");
  {
    std::unordered_set<std::string> ids;
    for (const auto& s : train_set)
      if (!s.id.empty()) ids.insert(s.id);
    for (const auto& s : val_set)
      if (!s.id.empty() && ids.contains(s.id)) throw InvalidInput("train: sample '" + s.id + "' is in both splits");
  }

  TrainResult result;
  result.params = init_params(model_cfg, cfg.seed, std::move(topology));
  if (cfg.epochs == 0) return result;

  ModelParams current = result.params;
  nn::OptimizerState opt;
  opt.learning_rate = cfg.learning_rate;

  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x5eed));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_auc = -1.0;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(shuffle_rng, order);
    double loss_sum = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t count = std::min(cfg.batch_size, order.size() - start);
        std::vector<SampleGradient> parts(count);
        parallel_for(count, cfg.threads,
                     [&](std::size_t i) { parts[i] = sample_gradient(current, train_set[order[start + i]]); });
        std::vector<nn::Tensor> grads = std::move(parts[0].grads);
        loss_sum += parts[0].loss;
        for (std::size_t i = 1; i < count; ++i) {
          loss_sum += parts[i].loss;
          for (std::size_t t = 0; t < grads.size(); ++t)
            for (std::size_t k = 0; k < grads[t].size(); ++k) grads[t][k] += parts[i].grads[t][k];
        }
        const double inv = 1.0 / static_cast<double>(count);
        for (auto& g : grads)
          for (std::size_t k = 0; k < g.size(); ++k) g[k] *= inv;
        nn::adam_step(opt, current.tensors, grads);
      }
      if (!std::isfinite(loss_sum)) throw NumericFault("training loss is not finite");
      for (const auto& t : current.tensors)
        if (!t.all_finite()) throw NumericFault("parameters became non-finite");
    } catch (const NumericFault& e) {
      throw NumericFault("epoch " + std::to_string(epoch) + ": " + e.what());
    }

    const auto val_scores = score_samples(current, val_set, cfg.threads);
    const double val_auc = auroc(val_scores);
    result.history.push_back({epoch, loss_sum / static_cast<double>(train_set.size()), val_auc});
    if (val_auc > best_auc) {
      best_auc = val_auc;
      result.params = current;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  return result;
}

inline std::string format_history_csv(std::span<const EpochRecord> history) {
  std::string out = "epoch,train_loss,val_auroc\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_auroc);
    out += buf;
  }
  return out;
}

/// Training config JSON: {"epochs","batch_size","learning_rate","seed",
/// "patience","threads","model":{...}}. Missing keys keep their defaults.
inline std::pair<TrainConfig, ModelConfig> train_config_from_json(const nlohmann::json& j) {
  TrainConfig t;
  ModelConfig m;
  try {
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.seed = j.value("seed", t.seed);
    t.patience = j.value("patience", t.patience);
    t.threads = j.value("threads", t.threads);
    if (j.contains("model")) m = config_from_json(j["model"]);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed training config: ") + e.what());
  }
  if (t.batch_size < 1) throw FormatError("training config: batch_size must be >= 1");
  return {t, m};
}

}  // namespace msvl
