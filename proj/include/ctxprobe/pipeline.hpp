#pragma once

// Per-layer calibrate -> tune -> evaluate, followed by best-layer selection.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/dataio.hpp"
#include "ctxprobe/metrics.hpp"
#include "ctxprobe/ocsvm.hpp"

namespace ctxprobe {

enum class TuningObjective { f1, accuracy };

std::string_view to_string(TuningObjective objective);
/// Accepts "f1" or "accuracy"; throws InputError otherwise.
TuningObjective parse_objective(std::string_view text);

struct PipelineConfig {
  TrainConfig train;
  /// nullopt processes every layer.
  std::optional<std::vector<std::size_t>> layer_subset;
  TuningObjective objective = TuningObjective::f1;
  bool standardize = false;
  /// Worker threads for per-layer work; 0 uses hardware concurrency.
  unsigned threads = 0;
};

struct ThresholdResult {
  double theta = 0.0;
  double tuning_f1 = 0.0;
  double tuning_accuracy = 0.0;
  std::size_t candidate_count = 0;
  /// Tuning turns with their decision scores, in dataset order.
  std::vector<ScoredTurn> tuning_scores;

  bool operator==(const ThresholdResult&) const = default;
};

struct LayerReport {
  std::size_t layer_index = 0;
  OcsvmModel model;
  ThresholdResult threshold;
  EvaluationMetrics eval;
};

struct LayerFailure {
  std::size_t layer_index = 0;
  /// "convergence", "input" or "metric".
  std::string kind;
  std::string message;
};

struct PipelineReport {
  std::vector<LayerReport> per_layer;
  std::size_t best_layer = 0;
  std::string selection_rule;
  std::vector<LayerFailure> failures;
};

/// Thrown by run_pipeline when no layer produced a report.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(const std::string& what, std::vector<LayerFailure> failures)
      : std::runtime_error(what), failures_(std::move(failures)) {}
  const std::vector<LayerFailure>& failures() const noexcept { return failures_; }

 private:
  std::vector<LayerFailure> failures_;
};

inline constexpr const char* kSelectionRule =
    "argmax eval f1; ties by higher eval auroc, then lower layer index";

/// Layers the config selects for a dataset with `num_layers` layers, sorted and
/// deduplicated. Throws InputError for indices out of range.
std::vector<std::size_t> selected_layers(const PipelineConfig& config,
                                         std::size_t num_layers);

/// Fits one model per selected layer on the calibration vectors in dataset
/// order. Errors are rethrown with the layer index in the message.
std::map<std::size_t, OcsvmModel> calibrate(const HiddenStateDataset& calibration,
                                            const PipelineConfig& config);

/// Mean decision score of every example of `data` at `layer`.
std::vector<ScoredTurn> score_dataset(const OcsvmModel& model,
                                      const HiddenStateDataset& data, std::size_t layer);

/// Midpoints between consecutive distinct sorted scores plus min - eps and
/// max + eps, eps = max(1e-9, 1e-6 * range). Sorted ascending.
std::vector<double> candidate_thresholds(std::span<const ScoredTurn> turns);

/// Maximizes the objective over candidate_thresholds(); ties go to the other
/// metric (accuracy for f1, f1 for accuracy), then to the smaller theta.
/// Throws InputError unless both labels are present.
ThresholdResult tune_threshold_scores(std::span<const ScoredTurn> turns,
                                      TuningObjective objective);

ThresholdResult tune_threshold(const OcsvmModel& model, const HiddenStateDataset& tuning,
                               std::size_t layer, TuningObjective objective);

EvaluationMetrics evaluate_layer(const OcsvmModel& model, double theta,
                                 const HiddenStateDataset& evaluation, std::size_t layer);

/// Argmax of eval F1, ties by higher AUROC, then lower layer index. Throws
/// InputError on an empty list.
std::size_t select_best_layer(std::span<const LayerReport> reports);

/// Requires validate(splits) to be clean (InputError otherwise). Layers that
/// fail are listed in the report; PipelineError is thrown only when all fail.
PipelineReport run_pipeline(const SplitSet& splits, const PipelineConfig& config);

}  // namespace ctxprobe
