#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "msvl/error.hpp"
#include "msvl/nn/graph.hpp"
#include "msvl/nn/init.hpp"
#include "msvl/nn/ops.hpp"
#include "msvl/nn/tensor.hpp"
#include "msvl/reconstruction.hpp"
#include "msvl/spectral.hpp"
#include "msvl/topology.hpp"

namespace msvl {

enum class Arch { rgb_baseline, single_band, gnn_msvl };

inline std::string to_string(Arch a) {
  switch (a) {
    case Arch::rgb_baseline: return "rgb_baseline";
    case Arch::single_band: return "single_band";
    case Arch::gnn_msvl: return "gnn_msvl";
  }
  return "?";
}

inline Arch arch_from_string(const std::string& s) {
  if (s == "rgb_baseline") return Arch::rgb_baseline;
  if (s == "single_band") return Arch::single_band;
  if (s == "gnn_msvl") return Arch::gnn_msvl;
  throw InvalidInput("unknown architecture '" + s + "' (expected rgb_baseline, single_band or gnn_msvl)");
}

inline constexpr std::size_t kGatHeads = 4;

struct StageConfig {
  std::size_t channels = 16;
  std::size_t stride = 1;
  bool operator==(const StageConfig&) const = default;
};

/// Grouped-convolution residual encoder: large-kernel stem, residual stages,
/// global average pooling, then a projection to `feature_dim`.
struct EncoderConfig {
  std::size_t stem_channels = 16;
  std::size_t stem_kernel = 7;
  std::size_t stem_stride = 2;
  std::vector<StageConfig> stages{{16, 1}, {32, 2}};
  std::size_t cardinality = 4;
  std::size_t kernel = 3;
  std::size_t feature_dim = 64;
  bool center_input = true;  // subtract each input plane's spatial mean before the stem
  double input_gain = 10.0;  // multiplies the (centered) input
  bool operator==(const EncoderConfig&) const = default;
};

struct ModelConfig {
  Arch arch = Arch::gnn_msvl;
  EncoderConfig encoder;
  std::size_t gat_width = 64;  // layer-2 width D', split over 4 heads
  std::size_t classifier_hidden = 32;
  std::size_t attention_reduction = 4;
  double leaky_slope = 0.2;
  std::size_t band = 11;  // single_band view index (560 nm)
  bool operator==(const ModelConfig&) const = default;

  std::size_t input_channels() const { return arch == Arch::rgb_baseline ? 3 : 1; }

  void validate() const {
    const auto& e = encoder;
    if (e.feature_dim < 1) throw InvalidInput("encoder feature_dim must be >= 1");
    if (e.stages.empty()) throw InvalidInput("encoder needs at least one residual stage");
    if (!(e.input_gain > 0.0) || !std::isfinite(e.input_gain)) throw InvalidInput("encoder input_gain must be positive");
    if (e.cardinality < 1 || e.stem_stride < 1 || e.stem_kernel < 1 || e.kernel < 1)
      throw InvalidInput("encoder kernel, stride and cardinality must be >= 1");
    std::size_t in = e.stem_channels;
    for (const auto& s : e.stages) {
      if (s.stride < 1) throw InvalidInput("stage stride must be >= 1");
      if (in % e.cardinality != 0 || s.channels % e.cardinality != 0)
        throw InvalidInput("cardinality " + std::to_string(e.cardinality) + " must divide stage channels " +
                           std::to_string(in) + " and " + std::to_string(s.channels));
      in = s.channels;
    }
    if (gat_width % kGatHeads != 0 || gat_width == 0)
      throw InvalidInput("gat_width must be a positive multiple of 4");
    if (classifier_hidden < 1) throw InvalidInput("classifier_hidden must be >= 1");
    if (attention_reduction < 1) throw InvalidInput("attention_reduction must be >= 1");
    if (band >= kBands) throw InvalidInput("single_band view index must be < 24");
  }

  std::size_t attention_hidden() const { return std::max<std::size_t>(1, encoder.feature_dim / attention_reduction); }
};

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

struct ConvSlot {
  std::size_t weight = 0, bias = 0;
  nn::Conv2dSpec spec;
};

struct LinearSlot {
  std::size_t weight = 0, bias = 0;
};

struct BlockSlot {
  ConvSlot grouped, pointwise;
  std::optional<ConvSlot> shortcut;
};

struct GatHeadSlot {
  std::size_t projection = 0, attn_src = 0, attn_dst = 0;
};

struct ModelLayout {
  ConvSlot stem;
  std::vector<BlockSlot> blocks;
  LinearSlot projection;
  LinearSlot squeeze, excite;        // attention module
  std::vector<GatHeadSlot> gat;      // gnn_msvl
  std::optional<LinearSlot> head;    // baselines: D -> D'
  LinearSlot hidden, output;         // classifier
};

/// Weights of one model. Tensors are kept in a flat list in declaration
/// order; `layout` locates each block's tensors in that list.
struct ModelParams {
  ModelConfig config;
  std::optional<GraphTopology> topology;  // gnn_msvl only
  std::uint64_t seed = 0;
  std::vector<std::string> names;
  std::vector<nn::Tensor> tensors;
  ModelLayout layout;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
};

namespace detail {

enum class InitKind { he, xavier, zero };

struct ParamSink {
  ModelParams& params;
  std::mt19937_64* rng;  // null: shapes only (zeros)

  std::size_t add(std::string name, nn::Shape shape, InitKind kind, std::size_t fan_in, std::size_t fan_out) {
    nn::Tensor t;
    if (!rng || kind == InitKind::zero) {
      t = nn::Tensor(std::move(shape));
    } else if (kind == InitKind::he) {
      t = nn::he_uniform(std::move(shape), fan_in, *rng);
    } else {
      t = nn::xavier_uniform(std::move(shape), fan_in, fan_out, *rng);
    }
    params.names.push_back(std::move(name));
    params.tensors.push_back(std::move(t));
    return params.tensors.size() - 1;
  }

  ConvSlot conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, nn::Conv2dSpec spec,
                InitKind kind) {
    ConvSlot s;
    s.spec = spec;
    const std::size_t fan_in = (in / spec.groups) * k * k;
    s.weight = add(name + ".weight", {out, in / spec.groups, k, k}, kind, fan_in, (out / spec.groups) * k * k);
    s.bias = add(name + ".bias", {out}, InitKind::zero, 0, 0);
    return s;
  }

  LinearSlot linear(const std::string& name, std::size_t in, std::size_t out, InitKind kind) {
    LinearSlot s;
    s.weight = add(name + ".weight", {in, out}, kind, in, out);
    s.bias = add(name + ".bias", {out}, InitKind::zero, 0, 0);
    return s;
  }
};

inline ModelLayout declare_parameters(const ModelConfig& cfg, ParamSink& sink) {
  ModelLayout L;
  const auto& e = cfg.encoder;
  L.stem = sink.conv("encoder.stem", cfg.input_channels(), e.stem_channels, e.stem_kernel,
                     {e.stem_stride, e.stem_kernel / 2, 1}, InitKind::he);
  std::size_t in = e.stem_channels;
  for (std::size_t i = 0; i < e.stages.size(); ++i) {
    const auto& st = e.stages[i];
    const std::string base = "encoder.stage" + std::to_string(i);
    BlockSlot b;
    b.grouped = sink.conv(base + ".grouped", in, st.channels, e.kernel, {st.stride, e.kernel / 2, e.cardinality},
                          InitKind::he);
    b.pointwise = sink.conv(base + ".pointwise", st.channels, st.channels, 1, {1, 0, 1}, InitKind::he);
    if (in != st.channels || st.stride != 1)
      b.shortcut = sink.conv(base + ".shortcut", in, st.channels, 1, {st.stride, 0, 1}, InitKind::xavier);
    L.blocks.push_back(b);
    in = st.channels;
  }
  L.projection = sink.linear("encoder.projection", in, e.feature_dim, InitKind::he);

  const std::size_t D = e.feature_dim;
  L.squeeze = sink.linear("attention.fc1", D, cfg.attention_hidden(), InitKind::he);
  L.excite = sink.linear("attention.fc2", cfg.attention_hidden(), D, InitKind::xavier);

  const std::size_t Dp = cfg.gat_width;
  if (cfg.arch == Arch::gnn_msvl) {
    const std::size_t d = Dp / kGatHeads;
    for (std::size_t h = 0; h < kGatHeads; ++h) {
      const std::string base = "gat.head" + std::to_string(h);
      GatHeadSlot s;
      s.projection = sink.add(base + ".projection", {D, d}, InitKind::xavier, D, d);
      s.attn_src = sink.add(base + ".attn_src", {d, 1}, InitKind::xavier, 2 * d, 1);
      s.attn_dst = sink.add(base + ".attn_dst", {d, 1}, InitKind::xavier, 2 * d, 1);
      L.gat.push_back(s);
    }
  } else {
    L.head = sink.linear("head.projection", D, Dp, InitKind::he);
  }
  L.hidden = sink.linear("classifier.fc1", Dp, cfg.classifier_hidden, InitKind::he);
  L.output = sink.linear("classifier.fc2", cfg.classifier_hidden, 2, InitKind::xavier);
  return L;
}

}  // namespace detail

/// Seeded initialization: He-uniform for weights entering rectifiers,
/// Xavier-uniform elsewhere, zero biases.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed,
                               std::optional<GraphTopology> topology = std::nullopt) {
  cfg.validate();
  if (cfg.arch == Arch::gnn_msvl) {
    if (!topology) throw InvalidInput("gnn_msvl requires a graph topology");
    if (topology->node_count != kBands)
      throw InvalidInput("gnn_msvl topology must have 24 nodes, got " + std::to_string(topology->node_count));
  } else {
    topology.reset();
  }
  ModelParams p;
  p.config = cfg;
  p.seed = seed;
  p.topology = std::move(topology);
  std::mt19937_64 rng(seed);
  detail::ParamSink sink{p, &rng};
  p.layout = detail::declare_parameters(cfg, sink);
  return p;
}

/// Zero-filled tensors with the layout `cfg` implies; used when loading.
inline ModelParams empty_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  detail::ParamSink sink{p, nullptr};
  p.layout = detail::declare_parameters(cfg, sink);
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Parameters bound into a graph as differentiable leaves.
class BoundParams {
 public:
  BoundParams(nn::Graph& g, const ModelParams& p) : graph_(&g), params_(&p) {
    vars_.reserve(p.tensors.size());
    for (const auto& t : p.tensors) vars_.push_back(g.parameter(t));
  }
  nn::Var operator[](std::size_t i) const { return vars_[i]; }
  const std::vector<nn::Var>& all() const { return vars_; }
  const ModelParams& params() const { return *params_; }
  const ModelLayout& layout() const { return params_->layout; }
  const ModelConfig& config() const { return params_->config; }
  nn::Graph& graph() const { return *graph_; }

 private:
  nn::Graph* graph_;
  const ModelParams* params_;
  std::vector<nn::Var> vars_;
};

namespace detail {

inline nn::Var conv(const BoundParams& b, const ConvSlot& s, nn::Var x) {
  return nn::conv2d(x, b[s.weight], b[s.bias], s.spec);
}

inline nn::Var fc(const BoundParams& b, const LinearSlot& s, nn::Var x) { return nn::linear(x, b[s.weight], b[s.bias]); }

}  // namespace detail

/// gain * (x - mean) for every [H,W] plane of x[N,C,H,W]; the mean is
/// subtracted only when `center` is set.
inline nn::Tensor normalize_planes(const nn::Tensor& x, bool center, double gain) {
  nn::Tensor out = x;
  const std::size_t area = x.dim(2) * x.dim(3);
  for (std::size_t p = 0; p < x.dim(0) * x.dim(1); ++p) {
    double mean = 0.0;
    if (center) {
      for (std::size_t i = 0; i < area; ++i) mean += x[p * area + i];
      mean /= static_cast<double>(area);
    }
    for (std::size_t i = 0; i < area; ++i) out[p * area + i] = gain * (out[p * area + i] - mean);
  }
  return out;
}

/// Encodes a batch of images x[N,C,H,W] into features [N,D]. The input is
/// treated as data: no gradient flows back to it.
inline nn::Var run_encoder(const BoundParams& b, nn::Var x) {
  const auto& L = b.layout();
  if (x.value().rank() != 4 || x.value().dim(1) != b.config().input_channels())
    throw InvalidInput("encoder expects [N," + std::to_string(b.config().input_channels()) + ",H,W] input, got " +
                       nn::shape_str(x.shape()));
  const auto& enc = b.config().encoder;
  if (enc.center_input || enc.input_gain != 1.0)
    x = b.graph().constant(normalize_planes(x.value(), enc.center_input, enc.input_gain));
  nn::Var h = nn::relu(detail::conv(b, L.stem, x));
  for (const auto& block : L.blocks) {
    nn::Var y = nn::relu(detail::conv(b, block.grouped, h));
    y = detail::conv(b, block.pointwise, y);
    nn::Var skip = block.shortcut ? detail::conv(b, *block.shortcut, h) : h;
    h = nn::relu(nn::add(y, skip));
  }
  return nn::relu(detail::fc(b, L.projection, nn::global_average_pool(h)));
}

inline nn::Tensor cube_to_tensor(const SpectralCube& cube) {
  nn::Tensor t({kBands, 1, cube.height(), cube.width()});
  const auto d = cube.data();
  for (std::size_t i = 0; i < d.size(); ++i) t[i] = d[i];
  return t;
}

inline nn::Tensor band_to_tensor(const BandImage& img) {
  if (img.data.size() != img.width * img.height) throw InvalidInput("band image buffer does not match its size");
  nn::Tensor t({1, 1, img.height, img.width});
  for (std::size_t i = 0; i < img.data.size(); ++i) t[i] = img.data[i];
  return t;
}

/// Interleaved RGB to planar [1,3,H,W].
inline nn::Tensor rgb_to_tensor(const LinearRgbImage& img) {
  if (img.data.size() != img.width * img.height * 3) throw InvalidInput("rgb image buffer does not match its size");
  const std::size_t area = img.width * img.height;
  nn::Tensor t({1, 3, img.height, img.width});
  for (std::size_t i = 0; i < area; ++i)
    for (std::size_t c = 0; c < 3; ++c) t[c * area + i] = img.data[i * 3 + c];
  return t;
}

/// All 24 views through the shared encoder: [24, D].
inline nn::Var encode_views(const BoundParams& b, const SpectralCube& cube) {
  if (b.config().input_channels() != 1) throw InvalidInput("encode_views needs a single-channel encoder");
  return run_encoder(b, b.graph().constant(cube_to_tensor(cube)));
}

/// Squeeze-excitation gate: x * sigmoid(FC2(relu(FC1(x)))), row-wise on [n, D].
inline nn::Var attention_module(const BoundParams& b, nn::Var features) {
  const auto& L = b.layout();
  nn::Var gate = nn::sigmoid(detail::fc(b, L.excite, nn::relu(detail::fc(b, L.squeeze, features))));
  return nn::mul(features, gate);
}

struct GatOutput {
  nn::Var features;                 // [V, D']
  std::vector<nn::Var> attention;   // per head [V, V], rows sum to 1
};

/// Self-loop adjacency mask for the GAT softmax.
inline std::vector<std::uint8_t> attention_mask(const GraphTopology& g) {
  const std::size_t v = g.node_count;
  std::vector<std::uint8_t> mask(v * v, 0);
  for (std::size_t i = 0; i < v; ++i) mask[i * v + i] = 1;
  for (auto [a, c] : g.edges) mask[a * v + c] = mask[c * v + a] = 1;
  return mask;
}

/// Multi-head graph attention over `topology` with self-loops:
///   e_ij = leaky_relu(a_src . W x_i + a_dst . W x_j), alpha = softmax_j(e_ij),
///   z_i = sum_j alpha_ij W x_j, output = relu(concat_h z^h).
inline GatOutput gat_conv(const BoundParams& b, nn::Var nodes, const GraphTopology& topology) {
  const auto& L = b.layout();
  if (L.gat.empty()) throw InvalidInput("gat_conv: model has no graph attention layer");
  if (nodes.value().rank() != 2 || nodes.value().dim(0) != topology.node_count)
    throw InvalidInput("gat_conv: " + std::to_string(nodes.value().rank() == 2 ? nodes.value().dim(0) : 0) +
                       " node features for a " + std::to_string(topology.node_count) + "-node topology");
  const auto mask = attention_mask(topology);
  GatOutput out;
  std::vector<nn::Var> heads;
  for (const auto& h : L.gat) {
    nn::Var projected = nn::matmul(nodes, b[h.projection]);
    nn::Var scores = nn::pairwise_sum(nn::matmul(projected, b[h.attn_src]), nn::matmul(projected, b[h.attn_dst]));
    nn::Var alpha = nn::masked_softmax_rows(nn::leaky_relu(scores, b.config().leaky_slope), mask);
    out.attention.push_back(alpha);
    heads.push_back(nn::matmul(alpha, projected));
  }
  out.features = nn::relu(nn::concat_cols(heads));
  return out;
}

/// Mean readout over nodes, then FC -> relu -> FC to two logits [1,2].
inline nn::Var classify(const BoundParams& b, nn::Var layer2) {
  const auto& L = b.layout();
  nn::Var readout = nn::mean_rows(layer2);
  return detail::fc(b, L.output, nn::relu(detail::fc(b, L.hidden, readout)));
}

using ModelInput = std::variant<SpectralCube, BandImage, LinearRgbImage>;

/// Logits [1,2] for one input; the input type must match the architecture.
inline nn::Var forward_logits(const BoundParams& b, const ModelInput& input) {
  const auto& cfg = b.config();
  const auto& P = b.params();
  switch (cfg.arch) {
    case Arch::gnn_msvl: {
      const auto* cube = std::get_if<SpectralCube>(&input);
      if (!cube) throw InvalidInput("gnn_msvl expects a spectral cube input");
      nn::Var layer1 = attention_module(b, encode_views(b, *cube));
      return classify(b, gat_conv(b, layer1, *P.topology).features);
    }
    case Arch::single_band:
    case Arch::rgb_baseline: {
      nn::Tensor x;
      if (cfg.arch == Arch::single_band) {
        if (const auto* view = std::get_if<BandImage>(&input)) {
          x = band_to_tensor(*view);
        } else if (const auto* cube = std::get_if<SpectralCube>(&input)) {
          x = band_to_tensor(extract_view(*cube, cfg.band));
        } else {
          throw InvalidInput("single_band expects a band image or spectral cube input");
        }
      } else {
        const auto* rgb = std::get_if<LinearRgbImage>(&input);
        if (!rgb) throw InvalidInput("rgb_baseline expects a linear RGB image input");
        x = rgb_to_tensor(*rgb);
      }
      nn::Var feat = attention_module(b, run_encoder(b, b.graph().constant(std::move(x))));
      nn::Var layer2 = nn::relu(detail::fc(b, *b.layout().head, feat));
      return classify(b, layer2);
    }
  }
  throw InvalidInput("unknown architecture");
}

/// Probability of the positive class from logits [1,2].
inline double positive_probability(const nn::Tensor& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  return e1 / (e0 + e1);
}

/// Score in [0,1] for the positive ("DMI") class.
inline double model_forward(const ModelParams& params, const ModelInput& input) {
  nn::Graph g;
  BoundParams b(g, params);
  return positive_probability(forward_logits(b, input).value());
}

/// Per-view encoder features [24][D] for a cube, outside any training graph.
inline std::vector<std::vector<double>> encode_views(const ModelParams& params, const SpectralCube& cube) {
  nn::Graph g;
  BoundParams b(g, params);
  const nn::Tensor& f = encode_views(b, cube).value();
  std::vector<std::vector<double>> out(f.dim(0), std::vector<double>(f.dim(1)));
  for (std::size_t i = 0; i < f.dim(0); ++i)
    for (std::size_t j = 0; j < f.dim(1); ++j) out[i][j] = f.at(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["arch"] = to_string(c.arch);
  auto& e = j["encoder"];
  e["stem_channels"] = c.encoder.stem_channels;
  e["stem_kernel"] = c.encoder.stem_kernel;
  e["stem_stride"] = c.encoder.stem_stride;
  auto stages = nlohmann::ordered_json::array();
  for (const auto& s : c.encoder.stages) stages.push_back({{"channels", s.channels}, {"stride", s.stride}});
  e["stages"] = std::move(stages);
  e["cardinality"] = c.encoder.cardinality;
  e["kernel"] = c.encoder.kernel;
  e["feature_dim"] = c.encoder.feature_dim;
  e["center_input"] = c.encoder.center_input;
  e["input_gain"] = c.encoder.input_gain;
  j["gat_width"] = c.gat_width;
  j["classifier_hidden"] = c.classifier_hidden;
  j["attention_reduction"] = c.attention_reduction;
  j["leaky_slope"] = c.leaky_slope;
  j["band"] = c.band;
  return j;
}

/// Missing keys keep their defaults.
inline ModelConfig config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  try {
    if (j.contains("arch")) c.arch = arch_from_string(j["arch"].get<std::string>());
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      c.encoder.stem_channels = e.value("stem_channels", c.encoder.stem_channels);
      c.encoder.stem_kernel = e.value("stem_kernel", c.encoder.stem_kernel);
      c.encoder.stem_stride = e.value("stem_stride", c.encoder.stem_stride);
      if (e.contains("stages")) {
        c.encoder.stages.clear();
        for (const auto& s : e["stages"]) c.encoder.stages.push_back({s.at("channels").get<std::size_t>(), s.value("stride", std::size_t{1})});
      }
      c.encoder.cardinality = e.value("cardinality", c.encoder.cardinality);
      c.encoder.kernel = e.value("kernel", c.encoder.kernel);
      c.encoder.feature_dim = e.value("feature_dim", c.encoder.feature_dim);
      c.encoder.center_input = e.value("center_input", c.encoder.center_input);
      c.encoder.input_gain = e.value("input_gain", c.encoder.input_gain);
    }
    c.gat_width = j.value("gat_width", c.gat_width);
    c.classifier_hidden = j.value("classifier_hidden", c.classifier_hidden);
    c.attention_reduction = j.value("attention_reduction", c.attention_reduction);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.band = j.value("band", c.band);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace msvl
