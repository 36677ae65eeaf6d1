#pragma once

// Two-component PCA by power iteration with deflation, used to draw the
// class-separation scatter of the selected layer.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/matrix.hpp"
#include "ctxprobe/types.hpp"

namespace ctxprobe {

struct PcaPoint {
  double pc1 = 0.0;
  double pc2 = 0.0;
  Label label = Label::in_context;
  std::string id;
};

struct PcaProjection {
  std::vector<double> mean;
  /// Orthonormal; each component's largest-magnitude entry is positive.
  std::array<std::vector<double>, 2> components;
  /// Descending eigenvalues of the sample covariance (divisor n - 1).
  std::array<double, 2> explained_variance{};
  /// Trace of the sample covariance.
  double total_variance = 0.0;
  std::vector<PcaPoint> coords;

  std::array<double, 2> project(std::span<const double> x) const;
};

struct PcaOptions {
  double tolerance = 1e-12;
  int max_iterations = 10000;
};

/// Requires n >= 2 rows and d >= 2 columns (InputError otherwise). `labels`
/// and `ids` must be empty or have one entry per row.
PcaProjection fit_project(const Matrix& data, std::span<const Label> labels = {},
                          std::span<const std::string> ids = {},
                          const PcaOptions& options = {});

/// Header id,label,pc1,pc2.
std::string pca_to_csv(const PcaProjection& projection);

/// Standalone SVG scatter; circles for in-context, crosses for out-of-context.
std::string pca_to_svg(const PcaProjection& projection, const std::string& title = "");

}  // namespace ctxprobe
