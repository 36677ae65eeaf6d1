#pragma once

// Brute-force references for the ranking metrics and threshold tuning.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <set>
#include <vector>

namespace oracle {

struct Scored {
  double score;
  int label;  // 1 = positive
};

// Mean over every (positive, negative) pair of 1 / 0.5 / 0.
inline double pairwise_auroc(const std::vector<Scored>& xs) {
  double credit = 0.0;
  std::size_t pairs = 0;
  for (const auto& p : xs) {
    if (p.label != 1) continue;
    for (const auto& n : xs) {
      if (n.label != 0) continue;
      ++pairs;
      if (p.score > n.score) credit += 1.0;
      else if (p.score == n.score) credit += 0.5;
    }
  }
  return credit / static_cast<double>(pairs);
}

// Average precision by explicit threshold enumeration: for each distinct
// score t (descending), predict positive iff score >= t.
inline double threshold_average_precision(const std::vector<Scored>& xs) {
  std::set<double, std::greater<>> thresholds;
  std::size_t n_pos = 0;
  for (const auto& x : xs) {
    thresholds.insert(x.score);
    n_pos += x.label == 1;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const double t : thresholds) {
    std::size_t tp = 0, predicted = 0;
    for (const auto& x : xs) {
      if (x.score >= t) {
        ++predicted;
        tp += x.label == 1;
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    ap += (recall - prev_recall) * static_cast<double>(tp) / static_cast<double>(predicted);
    prev_recall = recall;
  }
  return ap;
}

struct F1AtThreshold {
  double f1;
  double accuracy;
};

// Decision-score convention: positive iff score < theta.
inline F1AtThreshold f1_at(const std::vector<Scored>& xs, double theta) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& x : xs) {
    const bool pred = x.score < theta;
    if (x.label == 1) pred ? ++tp : ++fn;
    else pred ? ++fp : ++tn;
  }
  const double prec = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
  return {f1, static_cast<double>(tp + tn) / static_cast<double>(xs.size())};
}

// Best F1 over every example score used as theta plus +/- infinity, which
// reaches every confusion matrix a strict "< theta" rule can produce.
inline double best_f1_exhaustive(const std::vector<Scored>& xs) {
  std::vector<double> thetas{-std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity()};
  for (const auto& x : xs) thetas.push_back(x.score);
  double best = 0.0;
  for (const double t : thetas) best = std::max(best, f1_at(xs, t).f1);
  return best;
}

}  // namespace oracle
