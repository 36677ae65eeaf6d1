#include "ctxprobe/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ctxprobe/errors.hpp"

namespace ctxprobe {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) {
      throw InputError("ragged rows: row " + std::to_string(i) + " has length " +
                       std::to_string(rows[i].size()) + ", expected " +
                       std::to_string(m.cols()));
    }
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

void KernelSpec::validate() const {
  if (kind == KernelKind::rbf && !(gamma > 0.0 && std::isfinite(gamma))) {
    throw InputError("rbf kernel requires gamma > 0, got " + std::to_string(gamma));
  }
}

double kernel_eval(const KernelSpec& spec, std::span<const double> x,
                   std::span<const double> y) {
  if (x.size() != y.size()) {
    throw InputError("kernel dimension mismatch: " + std::to_string(x.size()) +
                     " vs " + std::to_string(y.size()));
  }
  switch (spec.kind) {
    case KernelKind::rbf: {
      double sq = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double diff = x[k] - y[k];
        sq += diff * diff;
      }
      return std::exp(-spec.gamma * sq);
    }
    case KernelKind::linear:
      return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
  }
  return 0.0;
}

double gamma_scale_heuristic(const Matrix& data) {
  if (data.empty()) throw InputError("gamma heuristic needs a non-empty matrix");
  const auto n = static_cast<double>(data.rows());
  const auto d = static_cast<double>(data.cols());
  double total_var = 0.0;
  for (std::size_t j = 0; j < data.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) mean += data(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      const double diff = data(i, j) - mean;
      var += diff * diff;
    }
    total_var += var / n;
  }
  const double v = total_var / d;
  if (v <= 1e-12) return 1.0 / d;
  return 1.0 / (d * v);
}

void TrainConfig::validate() const {
  if (!(nu > 0.0 && nu <= 1.0)) {
    throw InputError("nu must lie in (0, 1], got " + std::to_string(nu));
  }
  if (!(kkt_tolerance > 0.0)) throw InputError("kkt_tolerance must be positive");
  if (max_passes && *max_passes < 1) throw InputError("max_passes must be >= 1");
  if (kernel) kernel->validate();
}

Standardizer Standardizer::fit(const Matrix& data) {
  if (data.empty()) throw InputError("standardizer needs a non-empty matrix");
  const auto n = static_cast<double>(data.rows());
  Standardizer s;
  s.mean.assign(data.cols(), 0.0);
  s.scale.assign(data.cols(), 1.0);
  for (std::size_t j = 0; j < data.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) mean += data(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      const double diff = data(i, j) - mean;
      var += diff * diff;
    }
    const double sd = std::sqrt(var / n);
    s.mean[j] = mean;
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
  if (x.size() != mean.size()) {
    throw InputError("standardizer dimension mismatch: " + std::to_string(x.size()) +
                     " vs " + std::to_string(mean.size()));
  }
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
  return out;
}

Matrix Standardizer::apply(const Matrix& data) const {
  Matrix out(data.rows(), data.cols());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto z = apply(data.row(i));
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

OcsvmModel::OcsvmModel(Matrix support_vectors, std::vector<double> dual_coefficients,
                       double offset, KernelSpec kernel, double nu,
                       std::size_t n_train, std::optional<Standardizer> standardization)
    : support_vectors_(std::move(support_vectors)),
      coef_(std::move(dual_coefficients)),
      offset_(offset),
      kernel_(kernel),
      nu_(nu),
      n_train_(n_train),
      standardization_(std::move(standardization)) {
  kernel_.validate();
  if (!(nu_ > 0.0 && nu_ <= 1.0)) throw InputError("model nu outside (0, 1]");
  if (n_train_ < 1) throw InputError("model n_train must be >= 1");
  if (coef_.empty() || support_vectors_.rows() != coef_.size()) {
    throw InputError("model needs one support vector per dual coefficient");
  }
  if (support_vectors_.cols() < 1) throw InputError("model dim must be >= 1");
  if (coef_.size() > n_train_) throw InputError("more support vectors than n_train");
  if (!std::isfinite(offset_)) throw InputError("model offset is not finite");
  const double upper = box_bound() + 1e-12;
  double sum = 0.0;
  for (const double c : coef_) {
    if (!(c > 0.0 && c <= upper)) {
      throw InputError("dual coefficient " + std::to_string(c) +
                       " outside (0, 1/(nu*n)]");
    }
    sum += c;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw InputError("dual coefficients sum to " + std::to_string(sum) + ", expected 1");
  }
  if (standardization_ && (standardization_->mean.size() != dim() ||
                           standardization_->scale.size() != dim())) {
    throw InputError("standardization length does not match model dim");
  }
}

double OcsvmModel::box_bound() const noexcept {
  return 1.0 / (nu_ * static_cast<double>(n_train_));
}

namespace {

// 10 * n * n sweeps of n pair updates each, capped.
std::size_t default_update_budget(std::size_t n) {
  constexpr std::size_t kCap = 100000;
  if (n > 46) return kCap;  // 10 * n^3 already exceeds the cap
  return std::min<std::size_t>(10 * n * n * n, kCap);
}

// Pairwise coordinate descent on the dual. Each step picks the maximal
// violating pair (i can grow, j can shrink) and solves the two-variable
// subproblem in closed form, clipped to the box.
std::vector<double> solve_dual(const Matrix& gram, double upper, double tolerance,
                               std::size_t budget) {
  const std::size_t n = gram.rows();
  std::vector<double> alpha(n, 1.0 / static_cast<double>(n));
  std::vector<double> grad(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) grad[i] += gram(i, j) * alpha[j];
  }

  constexpr double kMinCurvature = 1e-12;
  std::size_t updates = 0;
  while (true) {
    std::size_t up = n;
    std::size_t down = n;
    double min_grad = std::numeric_limits<double>::infinity();
    double max_grad = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (alpha[t] < upper && grad[t] < min_grad) {
        min_grad = grad[t];
        up = t;
      }
      if (alpha[t] > 0.0 && grad[t] > max_grad) {
        max_grad = grad[t];
        down = t;
      }
    }
    const double violation = (up == n || down == n) ? 0.0 : max_grad - min_grad;
    if (violation <= tolerance) break;
    if (updates >= budget) {
      throw ConvergenceError("one-class SVM solver did not converge within " +
                                 std::to_string(budget) +
                                 " pair updates (max KKT violation " +
                                 std::to_string(violation) + ")",
                             violation);
    }

    const double curvature =
        std::max(gram(up, up) + gram(down, down) - 2.0 * gram(up, down), kMinCurvature);
    double step = (grad[down] - grad[up]) / curvature;
    step = std::min({step, upper - alpha[up], alpha[down]});

    if (step >= upper - alpha[up]) {
      alpha[up] = upper;
    } else {
      alpha[up] += step;
    }
    if (step >= alpha[down]) {
      alpha[down] = 0.0;
    } else {
      alpha[down] -= step;
    }
    for (std::size_t t = 0; t < n; ++t) {
      grad[t] += step * (gram(t, up) - gram(t, down));
    }
    ++updates;
  }
  return alpha;
}

OcsvmModel fit_impl(const Matrix& data, const TrainConfig& config,
                    std::optional<Standardizer> standardization) {
  const std::size_t n = data.rows();
  const KernelSpec kernel =
      config.kernel.value_or(KernelSpec::rbf(gamma_scale_heuristic(data)));
  kernel.validate();

  Matrix gram(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double k = kernel_eval(kernel, data.row(i), data.row(j));
      gram(i, j) = k;
      gram(j, i) = k;
    }
  }

  const double upper = 1.0 / (config.nu * static_cast<double>(n));
  const std::vector<double> alpha =
      solve_dual(gram, upper, config.kkt_tolerance,
                 config.max_passes.value_or(default_update_budget(n)));

  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] > kSupportThreshold) support.push_back(i);
  }

  // Recompute sum_j alpha_j k(x_j, x_i) over support vectors only so the
  // offset agrees with what decision_score will evaluate.
  auto support_output = [&](std::size_t i) {
    double s = 0.0;
    for (const std::size_t j : support) s += alpha[j] * gram(j, i);
    return s;
  };
  double margin_sum = 0.0;
  std::size_t margin_count = 0;
  double all_sum = 0.0;
  for (const std::size_t i : support) {
    const double out = support_output(i);
    all_sum += out;
    if (alpha[i] < upper - kSupportThreshold) {
      margin_sum += out;
      ++margin_count;
    }
  }
  const double offset = margin_count > 0
                            ? margin_sum / static_cast<double>(margin_count)
                            : all_sum / static_cast<double>(support.size());

  Matrix sv(support.size(), data.cols());
  std::vector<double> coef(support.size());
  for (std::size_t k = 0; k < support.size(); ++k) {
    const auto src = data.row(support[k]);
    std::copy(src.begin(), src.end(), sv.row(k).begin());
    coef[k] = alpha[support[k]];
  }
  return OcsvmModel(std::move(sv), std::move(coef), offset, kernel, config.nu, n,
                    std::move(standardization));
}

void check_fit_inputs(const Matrix& data, const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw InputError("cannot fit a one-class SVM on empty data");
  for (const double v : data.data()) {
    if (!std::isfinite(v)) throw InputError("training data contains non-finite values");
  }
}

}  // namespace

OcsvmModel fit(const Matrix& data, const TrainConfig& config) {
  check_fit_inputs(data, config);
  return fit_impl(data, config, std::nullopt);
}

OcsvmModel fit_standardized(const Matrix& data, const TrainConfig& config) {
  check_fit_inputs(data, config);
  Standardizer standardizer = Standardizer::fit(data);
  const Matrix scaled = standardizer.apply(data);
  return fit_impl(scaled, config, std::move(standardizer));
}

double decision_score(const OcsvmModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw InputError("query has length " + std::to_string(x.size()) +
                     ", model dim is " + std::to_string(model.dim()));
  }
  std::vector<double> scaled;
  if (model.standardization()) {
    scaled = model.standardization()->apply(x);
    x = scaled;
  }
  const auto& sv = model.support_vectors();
  const auto& coef = model.dual_coefficients();
  double sum = 0.0;
  for (std::size_t k = 0; k < coef.size(); ++k) {
    sum += coef[k] * kernel_eval(model.kernel(), sv.row(k), x);
  }
  return sum - model.offset();
}

double score_example(const OcsvmModel& model,
                     const std::vector<std::vector<double>>& token_vectors) {
  if (token_vectors.empty()) throw InputError("score_example needs at least one vector");
  double sum = 0.0;
  for (const auto& v : token_vectors) sum += decision_score(model, v);
  return sum / static_cast<double>(token_vectors.size());
}

}  // namespace ctxprobe
