#pragma once

// Evaluation metrics for the out-of-context (positive) class.
//
// Two score orientations appear here. Decision scores come straight from the
// detector (higher = more in-context) and a turn is predicted positive iff its
// score is strictly below theta. Anomaly scores are negated decision scores
// (higher = more anomalous) and drive the ranking metrics.

#include <cstddef>
#include <span>
#include <vector>

#include "ctxprobe/types.hpp"

namespace ctxprobe {

struct ScoredTurn {
  double decision_score = 0.0;
  Label label = Label::in_context;
};

struct ScoredExample {
  double anomaly_score = 0.0;
  Label label = Label::in_context;
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct PointMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const PointMetrics&) const = default;
};

struct EvaluationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auroc = 0.0;
  double auprc = 0.0;
  ConfusionCounts confusion;

  bool operator==(const EvaluationMetrics&) const = default;
};

/// Positive prediction iff decision_score < theta; a score equal to theta is
/// predicted negative.
ConfusionCounts confusion_at_threshold(std::span<const ScoredTurn> turns, double theta);

/// Zero-division cases yield 0 rather than NaN.
PointMetrics point_metrics(const ConfusionCounts& counts);

std::vector<ScoredExample> to_anomaly(std::span<const ScoredTurn> turns);

/// Mann-Whitney statistic with ties counted as 1/2. Throws UndefinedMetricError
/// unless both labels are present.
double auroc(std::span<const ScoredExample> examples);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// ROC curve from (0,0) to (1,1), one vertex per distinct anomaly score.
std::vector<RocPoint> roc_curve(std::span<const ScoredExample> examples);

/// Trapezoidal area under roc_curve(); agrees with auroc().
double auroc_trapezoid(std::span<const ScoredExample> examples);

/// Step-wise average precision with tied scores grouped into one threshold
/// step. Throws UndefinedMetricError when there are no positives.
double auprc(std::span<const ScoredExample> examples);

/// Point metrics at theta plus AUROC/AUPRC over the negated scores.
EvaluationMetrics evaluate_scores(std::span<const ScoredTurn> turns, double theta);

}  // namespace ctxprobe
