#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msvl/calibration.hpp"
#include "msvl/dataset.hpp"
#include "msvl/error.hpp"
#include "msvl/image_io.hpp"
#include "msvl/metrics.hpp"
#include "msvl/model.hpp"
#include "msvl/phantom.hpp"
#include "msvl/plot.hpp"
#include "msvl/reconstruction.hpp"
#include "msvl/spectral.hpp"
#include "msvl/topology.hpp"
#include "msvl/train.hpp"
#include "msvl/weights_io.hpp"

namespace fs = std::filesystem;
using namespace msvl;
using ojson = nlohmann::ordered_json;

namespace {

// Missing or conflicting command-line arguments detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::size_t threads = 0;
  bool json = false;
};

// Prints a JSON document when --json is set, otherwise the human summary.
void emit(const Globals& g, const ojson& doc, const std::string& human) {
  if (g.json) {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::cout << human;
  }
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

nlohmann::json read_json_file(const std::string& path) {
  const std::string text = read_file_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string patches, out;
  std::optional<double> lambda;
  bool bias = false;
};

void run_calibrate(const Globals& g, const CalibrateArgs& a) {
  const auto patches = read_patch_csv(a.patches);
  const auto m = a.lambda ? wiener_fit(patches, *a.lambda, a.bias) : wiener_fit(patches, a.bias);
  write_matrix(m, a.out);
  ojson doc;
  doc["training_rmse"] = m.training_rmse;
  doc["lambda"] = m.lambda;
  doc["bias"] = m.bias;
  doc["patches"] = patches.size();
  doc["matrix"] = a.out;
  doc["matrix_id"] = m.checksum();
  emit(g, doc, "training_rmse " + fmt(m.training_rmse, "%.6f") + "\n");
}

struct ValidateArgs {
  std::string matrix, patches, report, train;
};

void run_validate(const Globals& g, const ValidateArgs& a) {
  const auto m = read_matrix(a.matrix);
  const auto holdout = read_patch_csv(a.patches);
  std::unordered_set<std::string> train_ids;
  if (!a.train.empty())
    for (const auto& p : read_patch_csv(a.train)) train_ids.insert(p.id);
  const auto rep = validate_calibration(m, holdout, train_ids);
  if (!a.report.empty()) {
    std::string csv = "id,rmse,in_training\n";
    for (const auto& p : rep.per_patch) csv += p.id + "," + fmt(p.rmse, "%.17g") + "," + (p.in_training ? "1" : "0") + "\n";
    write_file_text(a.report, csv);
  }
  ojson doc;
  doc["mean_rmse"] = rep.mean_rmse;
  doc["max_rmse"] = rep.max_rmse;
  doc["patches"] = rep.per_patch.size();
  emit(g, doc, "mean_rmse " + fmt(rep.mean_rmse, "%.6f") + "\nmax_rmse " + fmt(rep.max_rmse, "%.6f") + "\n");
}

struct ReconstructArgs {
  std::string matrix, input, out;
  bool no_srgb = false;
};

void run_reconstruct(const Globals& g, const ReconstructArgs& a) {
  const auto m = read_matrix(a.matrix);
  const auto image = read_image(a.input);
  const bool srgb = !a.no_srgb;
  const auto [cube, meta] = reconstruct_cube(m, to_linear(image, srgb), srgb, g.threads);
  write_cube(cube, a.out);
  const std::string sidecar = fs::path(a.out).replace_extension(".json").string();
  write_file_text(sidecar, meta_to_json(meta).dump(2) + "\n");
  ojson doc = meta_to_json(meta);
  doc["cube"] = a.out;
  doc["meta"] = sidecar;
  doc["width"] = cube.width();
  doc["height"] = cube.height();
  emit(g, doc, "clamped_fraction " + fmt(meta.clamped_fraction, "%.6f") + "\n");
}

struct GraphArgs {
  std::string kind, out;
  std::size_t nodes = 24;
  std::optional<std::size_t> step;
  bool include_ring = false;
  std::string info_path;
};

void run_graph(const Globals& g, const GraphArgs& a) {
  if (a.kind.empty()) throw UsageError("graph: --kind is required");
  if (a.out.empty()) throw UsageError("graph: --out is required");
  const auto topo = build_topology(topology_kind_from_string(a.kind), a.nodes, a.step, a.include_ring);
  write_topology(topo, a.out);
  const auto s = analyze(topo);
  ojson doc = stats_to_json(s, topo);
  doc["graph"] = a.out;
  emit(g, doc,
       "edges " + std::to_string(topo.edges.size()) + "\ncomponents " + std::to_string(s.component_count()) + "\n");
}

void run_graph_info(const GraphArgs& a) {
  // info always prints JSON: it is the inspection format
  const auto topo = read_topology(a.info_path);
  std::cout << stats_to_json(analyze(topo), topo).dump(2) << "\n";
}

struct SynthArgs {
  std::string what, config, out;
  std::optional<std::uint64_t> seed;
  bool emit_cubes = false;
};

void run_synth(const Globals& g, const SynthArgs& a) {
  const nlohmann::json cfg = a.config.empty() ? nlohmann::json::object() : read_json_file(a.config);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create '" + a.out + "': " + ec.message());
  if (a.what == "patches") {
    std::size_t basis = 6, n_train = 24, n_holdout = 96;
    std::uint64_t seed = 42;
    SyntheticCamera cam;
    try {
      basis = cfg.value("basis_dim", basis);
      n_train = cfg.value("n_train", n_train);
      n_holdout = cfg.value("n_holdout", n_holdout);
      seed = cfg.value("seed", seed);
      if (cfg.contains("camera")) cam = camera_from_json(cfg["camera"]);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed patch config: ") + e.what());
    }
    if (a.seed) seed = *a.seed;
    const auto [train, holdout] = synth_patch_set(basis, n_train, n_holdout, cam, seed);
    write_patch_csv(train, (fs::path(a.out) / "train.csv").string());
    write_patch_csv(holdout, (fs::path(a.out) / "holdout.csv").string());
    ojson doc;
    doc["train"] = (fs::path(a.out) / "train.csv").string();
    doc["holdout"] = (fs::path(a.out) / "holdout.csv").string();
    doc["n_train"] = train.size();
    doc["n_holdout"] = holdout.size();
    doc["seed"] = seed;
    emit(g, doc, "wrote " + std::to_string(train.size()) + " training and " + std::to_string(holdout.size()) +
                     " holdout patches to " + a.out + "\n");
    return;
  }
  PhantomConfig pc = phantom_config_from_json(cfg);
  if (a.seed) pc.seed = *a.seed;
  const auto images = synth_fundus_images(pc, a.emit_cubes, g.threads);
  const auto manifest = write_fundus_dataset(images, a.out);
  ojson doc;
  doc["images"] = images.size();
  doc["manifest"] = (fs::path(a.out) / "manifest.jsonl").string();
  doc["checksum"] = dataset_checksum(images, manifest);
  doc["seed"] = pc.seed;
  emit(g, doc, "wrote " + std::to_string(images.size()) + " images to " + a.out + " (checksum " +
                   doc["checksum"].get<std::string>() + ")\n");
}

struct TrainArgs {
  std::string data, arch, graph, config, out, history, matrix;
  std::optional<std::size_t> band;
};

void run_train(const Globals& g, const TrainArgs& a) {
  auto [tc, mc] = a.config.empty() ? std::pair<TrainConfig, ModelConfig>{} : train_config_from_json(read_json_file(a.config));
  mc.arch = arch_from_string(a.arch);
  if (a.band) mc.band = *a.band;
  if (g.threads != 0) tc.threads = g.threads;
  std::optional<GraphTopology> topo;
  if (mc.arch == Arch::gnn_msvl) {
    if (a.graph.empty()) throw UsageError("train: gnn_msvl needs --graph");
    topo = read_topology(a.graph);
  }
  std::optional<TransformationMatrix> matrix;
  if (mc.arch != Arch::rgb_baseline) {
    if (a.matrix.empty()) throw UsageError("train: " + a.arch + " needs --matrix to reconstruct cubes");
    matrix = read_matrix(a.matrix);
  }
  const TransformationMatrix* mp = matrix ? &*matrix : nullptr;
  const auto train_set = load_split(a.data, "train", mc, mp, tc.threads);
  const auto val_set = load_split(a.data, "val", mc, mp, tc.threads);
  const auto result = train(mc, tc, train_set, val_set, topo);
  save_params(result.params, a.out);
  if (!a.history.empty()) write_file_text(a.history, format_history_csv(result.history));
  double best_val = 0.0;
  for (const auto& h : result.history)
    if (h.epoch == result.best_epoch) best_val = h.val_auroc;
  ojson doc;
  doc["arch"] = to_string(mc.arch);
  doc["parameters"] = result.params.parameter_count();
  doc["epochs_run"] = result.history.size();
  doc["best_epoch"] = result.best_epoch;
  doc["best_val_auroc"] = best_val;
  doc["weights"] = a.out;
  emit(g, doc, "trained " + to_string(mc.arch) + " (" + std::to_string(result.params.parameter_count()) +
                   " parameters), best epoch " + std::to_string(result.best_epoch) + ", val AUROC " +
                   fmt(best_val, "%.4f") + "\n");
}

struct EvaluateArgs {
  std::string model, matrix, data, split = "test", report, cutoff_from = "val", compare, scores, roc, name;
  std::optional<double> cutoff;
  std::size_t bootstrap = 2000;
  std::uint64_t seed = 0;
  bool no_srgb = false;
};

void run_evaluate(const Globals& g, const EvaluateArgs& a) {
  const auto params = load_params(a.model);
  std::optional<TransformationMatrix> matrix;
  if (!a.matrix.empty()) matrix = read_matrix(a.matrix);
  const TransformationMatrix* mp = matrix ? &*matrix : nullptr;
  const bool srgb = !a.no_srgb;
  const auto test = load_split(a.data, a.split, params.config, mp, g.threads, srgb);
  if (test.empty()) throw InvalidInput("evaluate: split '" + a.split + "' is empty");
  const auto scored = score_samples(params, test, g.threads);

  double cutoff = 0.5;
  if (a.cutoff) {
    cutoff = *a.cutoff;
  } else {
    const auto ref = load_split(a.data, a.cutoff_from, params.config, mp, g.threads, srgb);
    if (ref.empty()) throw InvalidInput("evaluate: cutoff split '" + a.cutoff_from + "' is empty");
    cutoff = youden_cutoff(score_samples(params, ref, g.threads));
  }

  std::optional<std::vector<double>> reference;
  if (!a.compare.empty()) {
    const auto other = parse_scores_csv(read_file_text(a.compare), a.compare);
    std::map<std::string, const ScoredSample*> by_id;
    for (const auto& s : other) by_id[s.id] = &s;
    reference.emplace();
    for (const auto& s : scored) {
      auto it = by_id.find(s.id);
      if (it == by_id.end()) throw FormatError(a.compare + ": no score for sample '" + s.id + "'");
      if (it->second->label != s.label) throw FormatError(a.compare + ": label disagrees for sample '" + s.id + "'");
      reference->push_back(it->second->score);
    }
    if (other.size() != scored.size()) throw FormatError(a.compare + ": sample count differs from the evaluated split");
  }

  EvalOptions opt;
  opt.bootstrap = a.bootstrap;
  opt.seed = a.seed;
  opt.threads = g.threads;
  const std::string name = a.name.empty() ? to_string(params.config.arch) : a.name;
  const auto rep = reference ? evaluate_scores(scored, cutoff, opt, std::span<const double>(*reference), name)
                             : evaluate_scores(scored, cutoff, opt, std::nullopt, name);
  const ojson doc = report_to_json(rep);
  write_file_text(a.report, doc.dump(2) + "\n");
  const std::string scores_path =
      a.scores.empty() ? fs::path(a.report).replace_extension(".scores.csv").string() : a.scores;
  write_file_text(scores_path, format_scores_csv(scored));
  if (!a.roc.empty()) write_file_text(a.roc, format_roc_csv(rep.roc));

  std::string human;
  const auto row = table_row(rep);
  const auto& head = table_header();
  for (std::size_t i = 0; i < row.size(); ++i) human += head[i] + ": " + row[i] + "\n";
  if (rep.p_value_degenerate) human += "(p-value degenerate: zero variance)\n";
  if (!rep.ci_contains_point()) human += "(bootstrap interval excludes the point estimate)\n";
  for (const auto& s : rep.stratified)
    human += "group " + s.group + ": n=" + std::to_string(s.n) + " accuracy " + format_percent(s.accuracy) + "\n";
  emit(g, doc, human);
}

struct PlotArgs {
  std::vector<std::string> reports;
  std::string out;
};

void run_plot(const Globals& g, const PlotArgs& a) {
  std::vector<EvalReport> reps;
  for (const auto& p : a.reports) {
    auto r = report_from_json(read_json_file(p));
    if (r.model.empty()) r.model = fs::path(p).stem().string();
    if (r.roc.empty()) throw FormatError(p + ": report has no ROC points");
    reps.push_back(std::move(r));
  }
  write_file_text(a.out, roc_svg(reps));
  ojson doc;
  doc["svg"] = a.out;
  doc["curves"] = reps.size();
  emit(g, doc, "wrote " + std::to_string(reps.size()) + " curves to " + a.out + "\n");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return 1;
  if (dynamic_cast<const NumericFault*>(&e)) return 3;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multispectral reconstruction, graph-attention classification and evaluation toolkit", "msvl"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->envname("MSVL_THREADS");
  app.add_flag("--json", g.json, "Print a machine-readable JSON document");

  CalibrateArgs cal;
  auto* c_cal = app.add_subcommand("calibrate", "Fit a Wiener transformation matrix from patches");
  c_cal->add_option("--patches", cal.patches, "Training patch CSV")->required();
  c_cal->add_option("--out", cal.out, "Matrix JSON to write")->required();
  c_cal->add_option("--lambda", cal.lambda, "Ridge regularization (default: 1e-6 * trace / cols)");
  c_cal->add_flag("--bias", cal.bias, "Fit an affine offset column");

  ValidateArgs val;
  auto* c_val = app.add_subcommand("validate", "Per-patch RMSE of a matrix on holdout patches");
  c_val->add_option("--matrix", val.matrix)->required();
  c_val->add_option("--patches", val.patches, "Holdout patch CSV")->required();
  c_val->add_option("--report", val.report, "Per-patch CSV to write");
  c_val->add_option("--train", val.train, "Training patch CSV, to flag patches used for fitting");

  ReconstructArgs rec;
  auto* c_rec = app.add_subcommand("reconstruct", "Reconstruct a 24-band cube from an image");
  c_rec->add_option("--matrix", rec.matrix)->required();
  c_rec->add_option("--input", rec.input, "PNG or PPM image")->required();
  c_rec->add_option("--out", rec.out, "Cube (.msc) to write; metadata goes beside it as .json")->required();
  c_rec->add_flag("--no-srgb-decode", rec.no_srgb, "Treat pixel codes as linear");

  GraphArgs gr;
  auto* c_graph = app.add_subcommand("graph", "Build a view graph, or inspect one with 'graph info'");
  c_graph->add_option("--kind", gr.kind, "ring, full or jumper");
  c_graph->add_option("--nodes", gr.nodes, "Node count");
  c_graph->add_option("--step", gr.step, "Jumper chord step N");
  c_graph->add_flag("--include-ring", gr.include_ring, "Keep ring edges alongside jumper chords");
  c_graph->add_option("--out", gr.out, "Graph JSON to write");
  auto* c_info = c_graph->add_subcommand("info", "Print connectivity statistics of a graph JSON");
  c_info->add_option("graph", gr.info_path, "Graph JSON")->required();

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "Generate synthetic patches or phantom images");
  c_synth->add_option("what", sy.what, "patches or fundus")->required()->check(CLI::IsMember({"patches", "fundus"}));
  c_synth->add_option("--config", sy.config, "Generator config JSON");
  c_synth->add_option("--out", sy.out, "Output directory")->required();
  c_synth->add_option("--seed", sy.seed, "Override the config seed");
  c_synth->add_flag("--emit-cubes", sy.emit_cubes, "Also write ground-truth cubes (fundus)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a classifier on a phantom dataset");
  c_train->add_option("--data", tr.data, "Dataset directory with manifest.jsonl")->required();
  c_train->add_option("--arch", tr.arch, "rgb_baseline, single_band or gnn_msvl")->required();
  c_train->add_option("--band", tr.band, "View index for single_band");
  c_train->add_option("--graph", tr.graph, "Graph JSON for gnn_msvl");
  c_train->add_option("--matrix", tr.matrix, "Matrix JSON for cube reconstruction");
  c_train->add_option("--config", tr.config, "Training config JSON");
  c_train->add_option("--out", tr.out, "Weights file to write")->required();
  c_train->add_option("--history", tr.history, "Per-epoch history CSV");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score a split and write the evaluation report");
  c_eval->add_option("--model", ev.model, "Weights file")->required();
  c_eval->add_option("--matrix", ev.matrix, "Matrix JSON (spectral architectures)");
  c_eval->add_option("--data", ev.data, "Dataset directory")->required();
  c_eval->add_option("--split", ev.split, "Split to evaluate");
  c_eval->add_option("--report", ev.report, "Report JSON to write")->required();
  c_eval->add_option("--cutoff-from", ev.cutoff_from, "Split whose Youden cutoff is applied");
  c_eval->add_option("--cutoff", ev.cutoff, "Fixed cutoff instead of a Youden cutoff");
  c_eval->add_option("--compare", ev.compare, "Scores CSV of a reference model for the DeLong test");
  c_eval->add_option("--scores", ev.scores, "Scores CSV to write (default: beside the report)");
  c_eval->add_option("--roc", ev.roc, "ROC points CSV to write");
  c_eval->add_option("--name", ev.name, "Model name in the report");
  c_eval->add_option("--bootstrap", ev.bootstrap, "Bootstrap resamples for the AUROC interval");
  c_eval->add_option("--seed", ev.seed, "Bootstrap seed");
  c_eval->add_flag("--no-srgb-decode", ev.no_srgb, "Treat pixel codes as linear");

  PlotArgs pl;
  auto* c_plot = app.add_subcommand("plot-roc", "Draw ROC curves of one or more reports as SVG");
  c_plot->add_option("--report", pl.reports, "Report JSON (repeatable)")->required();
  c_plot->add_option("--out", pl.out, "SVG to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*c_cal) run_calibrate(g, cal);
    else if (*c_val) run_validate(g, val);
    else if (*c_rec) run_reconstruct(g, rec);
    else if (*c_info) run_graph_info(gr);
    else if (*c_graph) run_graph(g, gr);
    else if (*c_synth) run_synth(g, sy);
    else if (*c_train) run_train(g, tr);
    else if (*c_eval) run_evaluate(g, ev);
    else if (*c_plot) run_plot(g, pl);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
