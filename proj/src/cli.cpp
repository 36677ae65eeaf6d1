#include "ctxprobe/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "ctxprobe/dataio.hpp"
#include "ctxprobe/errors.hpp"
#include "ctxprobe/pca.hpp"
#include "ctxprobe/pipeline.hpp"
#include "ctxprobe/serialize.hpp"

namespace ctxprobe::cli {

namespace {

namespace fs = std::filesystem;

// Usage problems detected after CLI11 accepted the flags.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  if (!text.empty() && text.back() == ',') parts.emplace_back();
  return parts;
}

double parse_real(const std::string& text, const std::string& flag) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UsageError(flag + ": '" + text + "' is not a number");
  }
}

std::size_t parse_index(const std::string& text, const std::string& flag) {
  if (text.empty() || !std::all_of(text.begin(), text.end(), ::isdigit)) {
    throw UsageError(flag + ": '" + text + "' is not a non-negative integer");
  }
  return static_cast<std::size_t>(std::stoull(text));
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct GenOptions {
  std::size_t layers = 4;
  std::size_t dim = 16;
  std::string seps = "0,2,8,0";
  std::uint64_t seed = 0;
  std::string out = "synthetic";
  std::size_t n_cal = 20;
  std::size_t n_tune_in = 10;
  std::size_t n_tune_out = 10;
  std::size_t n_eval_in = 10;
  std::size_t n_eval_out = 10;
};

int cmd_gen_synthetic(const GenOptions& o, std::ostream& out) {
  SynthConfig config;
  config.num_layers = o.layers;
  config.hidden_dim = o.dim;
  config.seed = o.seed;
  config.n_cal = o.n_cal;
  config.n_tune_in = o.n_tune_in;
  config.n_tune_out = o.n_tune_out;
  config.n_eval_in = o.n_eval_in;
  config.n_eval_out = o.n_eval_out;
  for (const auto& s : split_commas(o.seps)) config.separations.push_back(parse_real(s, "--seps"));
  if (config.separations.size() != config.num_layers) {
    throw UsageError("--seps has " + std::to_string(config.separations.size()) +
                     " values but --layers is " + std::to_string(config.num_layers));
  }
  try {
    config.validate();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  const SplitSet splits = synth_generate(config);
  const auto manifest = save_splits(splits, o.out);
  out << "wrote " << manifest.string() << '\n';
  out << "planted best layer: " << planted_best_layer(config) << '\n';
  return kOk;
}

int cmd_validate(const std::string& manifest_path, std::ostream& out) {
  const Manifest manifest = read_manifest(manifest_path);
  const SplitSet splits = load_splits(manifest_path);
  auto violations = validate(splits);
  const auto manifest_violations = validate_manifest(manifest, splits);
  violations.insert(violations.end(), manifest_violations.begin(), manifest_violations.end());
  if (violations.empty()) {
    out << "OK\n";
    return kOk;
  }
  for (const auto& v : violations) out << v.to_string() << '\n';
  return kValidationFailure;
}

struct RunOptions {
  std::string manifest;
  double nu = 0.1;
  std::optional<double> gamma;
  bool gamma_scale = false;
  std::string kernel = "rbf";
  std::string layers;
  std::string objective = "f1";
  bool standardize = false;
  std::string report = "report.json";
  std::string csv = "layers.csv";
  std::string models;
  unsigned threads = 0;
  std::optional<std::size_t> max_passes;
};

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
  PipelineConfig config;
  config.train.nu = o.nu;
  config.train.max_passes = o.max_passes;
  if (o.kernel == "linear") {
    if (o.gamma) throw UsageError("--gamma does not apply to the linear kernel");
    config.train.kernel = KernelSpec::linear();
  } else if (o.gamma) {
    config.train.kernel = KernelSpec::rbf(*o.gamma);
  }
  if (!o.layers.empty()) {
    std::vector<std::size_t> subset;
    for (const auto& s : split_commas(o.layers)) subset.push_back(parse_index(s, "--layers"));
    config.layer_subset = subset;
  }
  config.standardize = o.standardize;
  config.threads = o.threads;
  try {
    config.objective = parse_objective(o.objective);
    config.train.validate();
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }

  const Manifest manifest = read_manifest(o.manifest);
  const SplitSet splits = load_splits(o.manifest);
  auto violations = validate(splits);
  const auto manifest_violations = validate_manifest(manifest, splits);
  violations.insert(violations.end(), manifest_violations.begin(), manifest_violations.end());
  if (!violations.empty()) {
    err << "validation failed:\n";
    for (const auto& v : violations) err << "  " << v.to_string() << '\n';
    return kValidationFailure;
  }
  try {
    selected_layers(config, splits.calibration.num_layers());
  } catch (const InputError& e) {
    throw UsageError(std::string("--layers: ") + e.what());
  }

  PipelineReport report;
  try {
    report = run_pipeline(splits, config);
  } catch (const PipelineError& e) {
    err << e.what() << '\n';
    const bool all_convergence =
        std::all_of(e.failures().begin(), e.failures().end(),
                    [](const LayerFailure& f) { return f.kind == "convergence"; });
    return all_convergence ? kNonConvergence : kValidationFailure;
  }

  write_text_file(o.report, report_to_json(report));
  write_text_file(o.csv, report_to_csv(report));
  if (!o.models.empty()) {
    std::error_code ec;
    fs::create_directories(o.models, ec);
    if (ec) throw IoError("cannot create '" + o.models + "': " + ec.message());
    for (const auto& r : report.per_layer) {
      write_text_file(fs::path(o.models) / ("layer_" + std::to_string(r.layer_index) + ".json"),
                      model_to_json(r.model));
    }
  }

  const auto best = std::find_if(report.per_layer.begin(), report.per_layer.end(),
                                 [&](const LayerReport& r) {
                                   return r.layer_index == report.best_layer;
                                 });
  out << "best layer: " << report.best_layer << '\n';
  out << "theta: " << fixed6(best->threshold.theta) << '\n';
  out << "accuracy: " << fixed6(best->eval.accuracy) << '\n';
  out << "precision: " << fixed6(best->eval.precision) << '\n';
  out << "recall: " << fixed6(best->eval.recall) << '\n';
  out << "f1: " << fixed6(best->eval.f1) << '\n';
  out << "auroc: " << fixed6(best->eval.auroc) << '\n';
  out << "auprc: " << fixed6(best->eval.auprc) << '\n';

  if (!report.failures.empty()) {
    for (const auto& f : report.failures) {
      err << "layer " << f.layer_index << " failed (" << f.kind << "): " << f.message << '\n';
    }
    return kValidationFailure;
  }
  return kOk;
}

struct PcaOptionsCli {
  std::string manifest;
  std::string report;
  std::optional<std::size_t> layer;
  std::string out = "pca.csv";
  std::string svg;
};

int cmd_pca(const PcaOptionsCli& o, std::ostream& out) {
  if (!o.layer && o.report.empty()) throw UsageError("pca needs --report or --layer");
  const SplitSet splits = load_splits(o.manifest);
  const std::size_t layer = o.layer ? *o.layer : best_layer_from_report(o.report);
  const auto& eval = splits.evaluation;
  if (layer >= eval.num_layers()) {
    throw UsageError("layer " + std::to_string(layer) + " out of range [0, " +
                     std::to_string(eval.num_layers()) + ")");
  }
  const auto labels = eval.labels();
  const auto ids = eval.ids();
  PcaProjection projection;
  try {
    projection = fit_project(eval.layer_matrix(layer), labels, ids);
  } catch (const InputError& e) {
    throw UsageError(e.what());
  }
  write_text_file(o.out, pca_to_csv(projection));
  if (!o.svg.empty()) {
    write_text_file(o.svg, pca_to_svg(projection, "layer " + std::to_string(layer)));
  }
  out << "layer " << layer << ": explained variance " << fixed6(projection.explained_variance[0])
      << ", " << fixed6(projection.explained_variance[1]) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"One-class SVM layer probing for in-context / out-of-context turns",
               "ctxprobe"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write synthetic HSD1 splits and a manifest");
  gen_cmd->add_option("--layers", gen.layers, "Number of layers")->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim, "Hidden dimension")->capture_default_str();
  gen_cmd->add_option("--seps", gen.seps, "Per-layer separations, comma separated")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->capture_default_str();
  gen_cmd->add_option("--n-cal", gen.n_cal)->capture_default_str();
  gen_cmd->add_option("--n-tune-in", gen.n_tune_in)->capture_default_str();
  gen_cmd->add_option("--n-tune-out", gen.n_tune_out)->capture_default_str();
  gen_cmd->add_option("--n-eval-in", gen.n_eval_in)->capture_default_str();
  gen_cmd->add_option("--n-eval-out", gen.n_eval_out)->capture_default_str();

  std::string validate_manifest_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a manifest and its splits");
  validate_cmd->add_option("--manifest", validate_manifest_path)->required();

  RunOptions run_opts;
  double gamma = 0.0;
  auto* run_cmd = app.add_subcommand("run", "Calibrate, tune and evaluate every layer");
  run_cmd->add_option("--manifest", run_opts.manifest)->required();
  run_cmd->add_option("--nu", run_opts.nu, "nu in (0, 1]")->capture_default_str();
  auto* gamma_opt = run_cmd->add_option("--gamma", gamma, "Fixed rbf gamma");
  auto* scale_flag = run_cmd->add_flag("--gamma-scale", run_opts.gamma_scale,
                                       "Use the variance-scaled gamma (default)");
  gamma_opt->excludes(scale_flag);
  run_cmd->add_option("--kernel", run_opts.kernel)
      ->check(CLI::IsMember({"rbf", "linear"}))
      ->capture_default_str();
  run_cmd->add_option("--layers", run_opts.layers, "Comma separated layer indices");
  run_cmd->add_option("--objective", run_opts.objective)
      ->check(CLI::IsMember({"f1", "accuracy"}))
      ->capture_default_str();
  run_cmd->add_flag("--standardize", run_opts.standardize);
  run_cmd->add_option("--report", run_opts.report)->capture_default_str();
  run_cmd->add_option("--csv", run_opts.csv)->capture_default_str();
  run_cmd->add_option("--models", run_opts.models, "Directory for per-layer model JSON");
  run_cmd->add_option("--threads", run_opts.threads, "Worker threads (0 = all cores)");
  std::size_t max_passes = 0;
  auto* passes_opt = run_cmd->add_option("--max-passes", max_passes, "Solver update budget");

  PcaOptionsCli pca_opts;
  std::size_t pca_layer = 0;
  auto* pca_cmd = app.add_subcommand("pca", "Project evaluation vectors of one layer");
  pca_cmd->add_option("--manifest", pca_opts.manifest)->required();
  pca_cmd->add_option("--report", pca_opts.report, "Report JSON naming the best layer");
  auto* layer_opt = pca_cmd->add_option("--layer", pca_layer, "Explicit layer index");
  pca_cmd->add_option("--out", pca_opts.out, "Coordinates CSV")->capture_default_str();
  pca_cmd->add_option("--svg", pca_opts.svg, "Optional SVG scatter");

  app.add_subcommand("version", "Print the version");

  std::vector<std::string> reversed(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_synthetic(gen, out);
    if (validate_cmd->parsed()) return cmd_validate(validate_manifest_path, out);
    if (run_cmd->parsed()) {
      if (gamma_opt->count() > 0) run_opts.gamma = gamma;
      if (passes_opt->count() > 0) run_opts.max_passes = max_passes;
      return cmd_run(run_opts, out, err);
    }
    if (pca_cmd->parsed()) {
      if (layer_opt->count() > 0) pca_opts.layer = pca_layer;
      return cmd_pca(pca_opts, out);
    }
    out << "ctxprobe " << kVersion << '\n';
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoOrFormat;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kIoOrFormat;
  } catch (const ConvergenceError& e) {
    err << "solver error: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const UndefinedMetricError& e) {
    err << "metric error: " << e.what() << '\n';
    return kValidationFailure;
  }
}

}  // namespace ctxprobe::cli
