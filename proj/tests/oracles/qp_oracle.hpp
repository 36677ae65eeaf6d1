#pragma once

// Reference solver for the one-class dual, independent of the SMO path:
// plain projected gradient descent with an exact projection onto
// { sum a = 1, 0 <= a <= C }, iterated until the gradient-mapping norm falls
// below 1e-10. Kernel values are recomputed here rather than taken from the
// library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline double rbf(const std::vector<double>& a, const std::vector<double>& b, double gamma) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sq += (a[k] - b[k]) * (a[k] - b[k]);
  return std::exp(-gamma * sq);
}

// Euclidean projection onto the capped simplex. s(t) = sum clip(v_i - t, 0, C)
// is piecewise linear and non-increasing in t; locate the piece where it
// crosses 1 and solve it exactly.
inline std::vector<double> project_capped_simplex(const std::vector<double>& v, double cap) {
  const std::size_t n = v.size();
  auto mass = [&](double t) {
    double s = 0.0;
    for (const double x : v) s += std::clamp(x - t, 0.0, cap);
    return s;
  };
  std::vector<double> knots;
  for (const double x : v) {
    knots.push_back(x);
    knots.push_back(x - cap);
  }
  std::sort(knots.begin(), knots.end());
  // mass(knots.front()) = n * cap >= 1 and mass(knots.back()) = 0.
  double lo = knots.front();
  double hi = knots.back();
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    if (mass(knots[k]) >= 1.0 && mass(knots[k + 1]) <= 1.0) {
      lo = knots[k];
      hi = knots[k + 1];
      break;
    }
  }
  const double m_lo = mass(lo);
  const double m_hi = mass(hi);
  const double t = m_lo == m_hi ? lo : lo + (m_lo - 1.0) * (hi - lo) / (m_lo - m_hi);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(v[i] - t, 0.0, cap);
  return out;
}

struct Solution {
  std::vector<double> alpha;
  double objective = 0.0;
  double rho = 0.0;
  Rows rows;
  double gamma = 1.0;

  double score(const std::vector<double>& x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (alpha[i] > 1e-9) s += alpha[i] * rbf(rows[i], x, gamma);
    }
    return s - rho;
  }
};

inline Solution solve_rbf(const Rows& rows, double gamma, double nu,
                          double stationarity = 1e-10, long max_iter = 50'000'000) {
  const std::size_t n = rows.size();
  const double cap = 1.0 / (nu * static_cast<double>(n));
  std::vector<std::vector<double>> q(n, std::vector<double>(n));
  double lipschitz = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      q[i][j] = rbf(rows[i], rows[j], gamma);
      row_sum += std::abs(q[i][j]);
    }
    lipschitz = std::max(lipschitz, row_sum);
  }
  const double step = 1.0 / lipschitz;

  std::vector<double> alpha(n, 1.0 / static_cast<double>(n));
  std::vector<double> grad(n);
  long iter = 0;
  for (; iter < max_iter; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) grad[i] += q[i][j] * alpha[j];
    }
    std::vector<double> trial(n);
    for (std::size_t i = 0; i < n; ++i) trial[i] = alpha[i] - step * grad[i];
    const auto next = project_capped_simplex(trial, cap);
    double gm = 0.0;
    for (std::size_t i = 0; i < n; ++i) gm = std::max(gm, std::abs(next[i] - alpha[i]) / step);
    alpha = next;
    if (gm <= stationarity) break;
  }
  if (iter == max_iter) throw std::runtime_error("oracle did not reach stationarity");

  Solution sol;
  sol.alpha = alpha;
  sol.rows = rows;
  sol.gamma = gamma;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sol.objective += 0.5 * alpha[i] * q[i][j] * alpha[j];
  }
  // Same offset convention as the detector: mean output over free support
  // vectors, otherwise over all support vectors.
  double free_sum = 0.0, all_sum = 0.0;
  std::size_t free_count = 0, all_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] <= 1e-9) continue;
    double out = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (alpha[j] > 1e-9) out += alpha[j] * q[j][i];
    }
    all_sum += out;
    ++all_count;
    if (alpha[i] < cap - 1e-9) {
      free_sum += out;
      ++free_count;
    }
  }
  sol.rho = free_count > 0 ? free_sum / static_cast<double>(free_count)
                           : all_sum / static_cast<double>(all_count);
  return sol;
}

}  // namespace oracle
