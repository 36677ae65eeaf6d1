#include "ctxprobe/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ctxprobe/errors.hpp"

namespace ctxprobe {

namespace {

void require_finite(std::span<const ScoredExample> examples) {
  for (const auto& e : examples) {
    if (!std::isfinite(e.anomaly_score)) throw InputError("anomaly score is not finite");
  }
}

std::size_t count_positive(std::span<const ScoredExample> examples) {
  return static_cast<std::size_t>(
      std::count_if(examples.begin(), examples.end(),
                    [](const ScoredExample& e) { return is_positive(e.label); }));
}

std::vector<ScoredExample> sorted_descending(std::span<const ScoredExample> examples) {
  std::vector<ScoredExample> sorted(examples.begin(), examples.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredExample& a, const ScoredExample& b) {
                     return a.anomaly_score > b.anomaly_score;
                   });
  return sorted;
}

}  // namespace

ConfusionCounts confusion_at_threshold(std::span<const ScoredTurn> turns, double theta) {
  ConfusionCounts c;
  for (const auto& t : turns) {
    const bool predicted_positive = t.decision_score < theta;
    if (is_positive(t.label)) {
      predicted_positive ? ++c.tp : ++c.fn;
    } else {
      predicted_positive ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

PointMetrics point_metrics(const ConfusionCounts& c) {
  PointMetrics m;
  const auto total = static_cast<double>(c.total());
  if (total == 0.0) return m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / total;
  m.precision = (c.tp + c.fp) == 0 ? 0.0
                                   : static_cast<double>(c.tp) /
                                         static_cast<double>(c.tp + c.fp);
  m.recall = (c.tp + c.fn) == 0 ? 0.0
                                : static_cast<double>(c.tp) /
                                      static_cast<double>(c.tp + c.fn);
  // Harmonic mean of precision and recall written over the counts, which
  // avoids the extra rounding of the ratio form.
  const std::size_t f1_denom = 2 * c.tp + c.fp + c.fn;
  m.f1 = c.tp == 0 ? 0.0
                   : static_cast<double>(2 * c.tp) / static_cast<double>(f1_denom);
  return m;
}

std::vector<ScoredExample> to_anomaly(std::span<const ScoredTurn> turns) {
  std::vector<ScoredExample> out;
  out.reserve(turns.size());
  for (const auto& t : turns) out.push_back({-t.decision_score, t.label});
  return out;
}

double auroc(std::span<const ScoredExample> examples) {
  require_finite(examples);
  const std::size_t n_pos = count_positive(examples);
  const std::size_t n_neg = examples.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("AUROC needs at least one example of each label");
  }

  // Rank-sum form: ties share the average of their ranks, which is exactly
  // the 1/2 credit per tied pair.
  std::vector<ScoredExample> sorted(examples.begin(), examples.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredExample& a, const ScoredExample& b) {
                     return a.anomaly_score < b.anomaly_score;
                   });
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].anomaly_score == sorted[i].anomaly_score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (is_positive(sorted[k].label)) positive_rank_sum += avg_rank;
    }
    i = j;
  }
  const auto p = static_cast<double>(n_pos);
  const auto n = static_cast<double>(n_neg);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * n);
}

std::vector<RocPoint> roc_curve(std::span<const ScoredExample> examples) {
  require_finite(examples);
  const std::size_t n_pos = count_positive(examples);
  const std::size_t n_neg = examples.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("ROC curve needs at least one example of each label");
  }
  const auto sorted = sorted_descending(examples);
  std::vector<RocPoint> curve{{0.0, 0.0}};
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double score = sorted[i].anomaly_score;
    for (; i < sorted.size() && sorted[i].anomaly_score == score; ++i) {
      is_positive(sorted[i].label) ? ++tp : ++fp;
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                     static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  return curve;
}

double auroc_trapezoid(std::span<const ScoredExample> examples) {
  const auto curve = roc_curve(examples);
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    area += (curve[k].fpr - curve[k - 1].fpr) * (curve[k].tpr + curve[k - 1].tpr) / 2.0;
  }
  return area;
}

double auprc(std::span<const ScoredExample> examples) {
  require_finite(examples);
  const std::size_t n_pos = count_positive(examples);
  if (n_pos == 0) throw UndefinedMetricError("AUPRC needs at least one positive example");

  const auto sorted = sorted_descending(examples);
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double score = sorted[i].anomaly_score;
    for (; i < sorted.size() && sorted[i].anomaly_score == score; ++i) {
      ++seen;
      if (is_positive(sorted[i].label)) ++tp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

EvaluationMetrics evaluate_scores(std::span<const ScoredTurn> turns, double theta) {
  if (turns.empty()) throw InputError("cannot evaluate an empty score list");
  EvaluationMetrics m;
  m.confusion = confusion_at_threshold(turns, theta);
  const PointMetrics p = point_metrics(m.confusion);
  m.accuracy = p.accuracy;
  m.precision = p.precision;
  m.recall = p.recall;
  m.f1 = p.f1;
  const auto anomaly = to_anomaly(turns);
  m.auroc = auroc(anomaly);
  m.auprc = auprc(anomaly);
  return m;
}

}  // namespace ctxprobe
