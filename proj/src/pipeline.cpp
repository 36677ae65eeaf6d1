#include "ctxprobe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

#include "ctxprobe/errors.hpp"

namespace ctxprobe {

std::string_view to_string(TuningObjective objective) {
  return objective == TuningObjective::f1 ? "f1" : "accuracy";
}

TuningObjective parse_objective(std::string_view text) {
  if (text == "f1") return TuningObjective::f1;
  if (text == "accuracy") return TuningObjective::accuracy;
  throw InputError("unknown tuning objective '" + std::string(text) + "'");
}

std::vector<std::size_t> selected_layers(const PipelineConfig& config,
                                         std::size_t num_layers) {
  std::vector<std::size_t> layers;
  if (!config.layer_subset) {
    layers.resize(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) layers[l] = l;
    return layers;
  }
  layers = *config.layer_subset;
  for (const std::size_t l : layers) {
    if (l >= num_layers) {
      throw InputError("layer " + std::to_string(l) + " out of range [0, " +
                       std::to_string(num_layers) + ")");
    }
  }
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  if (layers.empty()) throw InputError("layer subset is empty");
  return layers;
}

namespace {

OcsvmModel fit_layer(const HiddenStateDataset& calibration, std::size_t layer,
                     const PipelineConfig& config) {
  const Matrix data = calibration.layer_matrix(layer);
  return config.standardize ? fit_standardized(data, config.train)
                            : fit(data, config.train);
}

void check_calibration(const HiddenStateDataset& calibration) {
  if (calibration.empty()) throw InputError("calibration set is empty");
  for (const auto& e : calibration.examples()) {
    if (e.label != Label::in_context) {
      throw InputError("calibration example '" + e.id + "' is not in-context");
    }
  }
}

std::string with_layer(std::size_t layer, const char* what) {
  return "layer " + std::to_string(layer) + ": " + what;
}

// Runs job(k) for k in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& job) {
  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                  : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) job(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) job(k);
    });
  }
}

}  // namespace

std::map<std::size_t, OcsvmModel> calibrate(const HiddenStateDataset& calibration,
                                            const PipelineConfig& config) {
  check_calibration(calibration);
  std::map<std::size_t, OcsvmModel> models;
  for (const std::size_t layer : selected_layers(config, calibration.num_layers())) {
    try {
      models.emplace(layer, fit_layer(calibration, layer, config));
    } catch (const ConvergenceError& e) {
      throw ConvergenceError(with_layer(layer, e.what()), e.violation());
    } catch (const InputError& e) {
      throw InputError(with_layer(layer, e.what()));
    }
  }
  return models;
}

std::vector<ScoredTurn> score_dataset(const OcsvmModel& model,
                                      const HiddenStateDataset& data, std::size_t layer) {
  std::vector<ScoredTurn> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto v = data.vector(i, layer);
    // One pooled vector per layer, so the per-example mean is over one token.
    const std::vector<std::vector<double>> tokens{std::vector<double>(v.begin(), v.end())};
    out.push_back({score_example(model, tokens), data.examples()[i].label});
  }
  return out;
}

std::vector<double> candidate_thresholds(std::span<const ScoredTurn> turns) {
  if (turns.empty()) throw InputError("no scores to derive thresholds from");
  std::vector<double> scores;
  scores.reserve(turns.size());
  for (const auto& t : turns) {
    if (!std::isfinite(t.decision_score)) throw InputError("decision score is not finite");
    scores.push_back(t.decision_score);
  }
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

  const double range = scores.back() - scores.front();
  const double eps = std::max(1e-9, 1e-6 * range);
  std::vector<double> candidates;
  candidates.reserve(scores.size() + 1);
  candidates.push_back(scores.front() - eps);
  for (std::size_t k = 1; k < scores.size(); ++k) {
    candidates.push_back(scores[k - 1] + (scores[k] - scores[k - 1]) / 2.0);
  }
  candidates.push_back(scores.back() + eps);
  return candidates;
}

ThresholdResult tune_threshold_scores(std::span<const ScoredTurn> turns,
                                      TuningObjective objective) {
  const auto positives = std::count_if(turns.begin(), turns.end(), [](const ScoredTurn& t) {
    return is_positive(t.label);
  });
  if (positives == 0 || static_cast<std::size_t>(positives) == turns.size()) {
    throw InputError("threshold tuning needs both in-context and out-of-context examples");
  }

  const auto candidates = candidate_thresholds(turns);
  ThresholdResult best;
  best.candidate_count = candidates.size();
  bool have_best = false;
  double best_primary = 0.0;
  double best_secondary = 0.0;
  // Candidates are ascending, so keeping the first of equal (primary,
  // secondary) pairs selects the smaller theta.
  for (const double theta : candidates) {
    const PointMetrics m = point_metrics(confusion_at_threshold(turns, theta));
    const double primary = objective == TuningObjective::f1 ? m.f1 : m.accuracy;
    const double secondary = objective == TuningObjective::f1 ? m.accuracy : m.f1;
    if (!have_best || primary > best_primary ||
        (primary == best_primary && secondary > best_secondary)) {
      have_best = true;
      best_primary = primary;
      best_secondary = secondary;
      best.theta = theta;
      best.tuning_f1 = m.f1;
      best.tuning_accuracy = m.accuracy;
    }
  }
  best.tuning_scores.assign(turns.begin(), turns.end());
  return best;
}

ThresholdResult tune_threshold(const OcsvmModel& model, const HiddenStateDataset& tuning,
                               std::size_t layer, TuningObjective objective) {
  const auto scores = score_dataset(model, tuning, layer);
  return tune_threshold_scores(scores, objective);
}

EvaluationMetrics evaluate_layer(const OcsvmModel& model, double theta,
                                 const HiddenStateDataset& evaluation, std::size_t layer) {
  const auto scores = score_dataset(model, evaluation, layer);
  return evaluate_scores(scores, theta);
}

std::size_t select_best_layer(std::span<const LayerReport> reports) {
  if (reports.empty()) throw InputError("no layer reports to select from");
  const LayerReport* best = &reports.front();
  for (const auto& r : reports) {
    const bool better =
        r.eval.f1 > best->eval.f1 ||
        (r.eval.f1 == best->eval.f1 &&
         (r.eval.auroc > best->eval.auroc ||
          (r.eval.auroc == best->eval.auroc && r.layer_index < best->layer_index)));
    if (better) best = &r;
  }
  return best->layer_index;
}

PipelineReport run_pipeline(const SplitSet& splits, const PipelineConfig& config) {
  if (const auto violations = validate(splits); !violations.empty()) {
    std::string msg = "split set failed validation:";
    for (const auto& v : violations) msg += "\n  " + v.to_string();
    throw InputError(msg);
  }
  check_calibration(splits.calibration);
  config.train.validate();
  const auto layers = selected_layers(config, splits.calibration.num_layers());

  std::vector<std::optional<LayerReport>> reports(layers.size());
  std::vector<std::optional<LayerFailure>> failures(layers.size());
  parallel_for(layers.size(), config.threads, [&](std::size_t k) {
    const std::size_t layer = layers[k];
    try {
      OcsvmModel model = fit_layer(splits.calibration, layer, config);
      ThresholdResult threshold =
          tune_threshold(model, splits.tuning, layer, config.objective);
      EvaluationMetrics eval = evaluate_layer(model, threshold.theta, splits.evaluation, layer);
      reports[k].emplace(LayerReport{layer, std::move(model), std::move(threshold), eval});
    } catch (const ConvergenceError& e) {
      failures[k] = LayerFailure{layer, "convergence", e.what()};
    } catch (const UndefinedMetricError& e) {
      failures[k] = LayerFailure{layer, "metric", e.what()};
    } catch (const InputError& e) {
      failures[k] = LayerFailure{layer, "input", e.what()};
    }
  });

  PipelineReport report;
  report.selection_rule = kSelectionRule;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (reports[k]) report.per_layer.push_back(std::move(*reports[k]));
    if (failures[k]) report.failures.push_back(std::move(*failures[k]));
  }
  if (report.per_layer.empty()) {
    std::string msg = "every layer failed:";
    for (const auto& f : report.failures) {
      msg += "\n  layer " + std::to_string(f.layer_index) + " (" + f.kind + "): " + f.message;
    }
    throw PipelineError(msg, report.failures);
  }
  report.best_layer = select_best_layer(report.per_layer);
  return report;
}

}  // namespace ctxprobe
