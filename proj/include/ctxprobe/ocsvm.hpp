#pragma once

// nu-one-class SVM: kernels, an SMO-style dual solver and the decision
// function f(x) = sum_i alpha_i k(sv_i, x) - rho.
//
// The dual solved by fit() is
//
//   minimize    1/2 alpha' Q alpha,   Q_ij = k(x_i, x_j)
//   subject to  sum_i alpha_i = 1,  0 <= alpha_i <= 1 / (nu * n)
//
// Training rows with alpha_i > kSupportThreshold become support vectors.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ctxprobe/matrix.hpp"

namespace ctxprobe {

enum class KernelKind { rbf, linear };

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  /// Only meaningful for rbf; must be > 0 there.
  double gamma = 1.0;

  static KernelSpec rbf(double gamma) { return {KernelKind::rbf, gamma}; }
  static KernelSpec linear() { return {KernelKind::linear, 0.0}; }

  /// Throws InputError when gamma is not positive for an rbf kernel.
  void validate() const;

  bool operator==(const KernelSpec&) const = default;
};

/// rbf: exp(-gamma * |x - y|^2), linear: <x, y>.
double kernel_eval(const KernelSpec& spec, std::span<const double> x,
                   std::span<const double> y);

/// 1 / (d * v) where v is the mean per-dimension population variance of
/// `data`; falls back to 1 / d when v <= 1e-12.
double gamma_scale_heuristic(const Matrix& data);

struct TrainConfig {
  double nu = 0.1;
  /// nullopt selects rbf with gamma_scale_heuristic on the training data.
  std::optional<KernelSpec> kernel;
  double kkt_tolerance = 1e-4;
  /// Pair-update budget. nullopt selects min(10 * n^3, 100000).
  std::optional<std::size_t> max_passes;

  void validate() const;
};

/// Per-dimension z-scoring fitted on calibration data.
struct Standardizer {
  std::vector<double> mean;
  /// Population standard deviation; dimensions with zero spread keep scale 1.
  std::vector<double> scale;

  static Standardizer fit(const Matrix& data);
  std::vector<double> apply(std::span<const double> x) const;
  Matrix apply(const Matrix& data) const;

  bool operator==(const Standardizer&) const = default;
};

inline constexpr double kSupportThreshold = 1e-9;

/// Immutable fitted detector.
class OcsvmModel {
 public:
  /// Checks structural invariants (shapes, positivity and the box bound on
  /// the coefficients, sum close to one); throws InputError otherwise.
  OcsvmModel(Matrix support_vectors, std::vector<double> dual_coefficients,
             double offset, KernelSpec kernel, double nu, std::size_t n_train,
             std::optional<Standardizer> standardization = std::nullopt);

  const Matrix& support_vectors() const noexcept { return support_vectors_; }
  const std::vector<double>& dual_coefficients() const noexcept { return coef_; }
  double offset() const noexcept { return offset_; }
  const KernelSpec& kernel() const noexcept { return kernel_; }
  double nu() const noexcept { return nu_; }
  std::size_t n_train() const noexcept { return n_train_; }
  std::size_t dim() const noexcept { return support_vectors_.cols(); }
  std::size_t support_count() const noexcept { return coef_.size(); }
  const std::optional<Standardizer>& standardization() const noexcept {
    return standardization_;
  }

  /// Upper box bound 1 / (nu * n_train).
  double box_bound() const noexcept;

  bool operator==(const OcsvmModel&) const = default;

 private:
  Matrix support_vectors_;
  std::vector<double> coef_;
  double offset_;
  KernelSpec kernel_;
  double nu_;
  std::size_t n_train_;
  std::optional<Standardizer> standardization_;
};

/// Fits on the raw rows of `data`. Throws InputError for empty data or an
/// invalid config and ConvergenceError when the update budget runs out.
OcsvmModel fit(const Matrix& data, const TrainConfig& config);

/// Same as fit() but z-scores the rows first and stores the transform in the
/// model so that scoring applies it to queries.
OcsvmModel fit_standardized(const Matrix& data, const TrainConfig& config);

/// Higher means more in-context; negative values are novelties.
double decision_score(const OcsvmModel& model, std::span<const double> x);

/// Mean decision score over the token vectors of one example.
double score_example(const OcsvmModel& model,
                     const std::vector<std::vector<double>>& token_vectors);

}  // namespace ctxprobe
