#include "ctxprobe/pca.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "ctxprobe/errors.hpp"

namespace ctxprobe {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void remove_components(std::vector<double>& v,
                       std::span<const std::vector<double>> found) {
  // Two Gram-Schmidt passes keep orthogonality at machine precision.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& c : found) {
      const double proj = dot(v, c);
      for (std::size_t k = 0; k < v.size(); ++k) v[k] -= proj * c[k];
    }
  }
}

// Largest-magnitude entry made positive; near-ties go to the lowest index.
void fix_sign(std::vector<double>& v) {
  double max_abs = 0.0;
  for (const double x : v) max_abs = std::max(max_abs, std::abs(x));
  for (const double x : v) {
    if (std::abs(x) >= max_abs * (1.0 - 1e-9)) {
      if (x < 0.0) {
        for (auto& y : v) y = -y;
      }
      return;
    }
  }
}

// Applies the sample covariance of the centered rows without forming it.
class CovarianceOperator {
 public:
  explicit CovarianceOperator(const Matrix& centered)
      : centered_(centered), scratch_(centered.rows()) {}

  std::vector<double> apply(std::span<const double> v) {
    for (std::size_t i = 0; i < centered_.rows(); ++i) scratch_[i] = dot(centered_.row(i), v);
    std::vector<double> out(centered_.cols(), 0.0);
    for (std::size_t i = 0; i < centered_.rows(); ++i) {
      const auto r = centered_.row(i);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += scratch_[i] * r[k];
    }
    const double denom = static_cast<double>(centered_.rows() - 1);
    for (auto& x : out) x /= denom;
    return out;
  }

 private:
  const Matrix& centered_;
  std::vector<double> scratch_;
};

}  // namespace

std::array<double, 2> PcaProjection::project(std::span<const double> x) const {
  if (x.size() != mean.size()) {
    throw InputError("projection input has length " + std::to_string(x.size()) +
                     ", expected " + std::to_string(mean.size()));
  }
  std::array<double, 2> out{};
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - mean[k]) * components[c][k];
    out[c] = s;
  }
  return out;
}

PcaProjection fit_project(const Matrix& data, std::span<const Label> labels,
                          std::span<const std::string> ids, const PcaOptions& options) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  if (n < 2) throw InputError("PCA needs at least 2 rows");
  if (d < 2) throw InputError("PCA needs at least 2 columns");
  if (!labels.empty() && labels.size() != n) throw InputError("one label per row required");
  if (!ids.empty() && ids.size() != n) throw InputError("one id per row required");
  for (std::size_t i = 0; i < n * d; ++i) {
    if (!std::isfinite(data.data()[i])) throw InputError("PCA input is not finite");
  }

  PcaProjection proj;
  proj.mean.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    bool constant = true;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += data(i, j);
      constant = constant && data(i, j) == data(0, j);
    }
    // Constant columns center to exact zeros.
    proj.mean[j] = constant ? data(0, j) : sum / static_cast<double>(n);
  }
  Matrix centered(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered(i, j) = data(i, j) - proj.mean[j];
  }
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += centered(i, j) * centered(i, j);
    proj.total_variance += s / static_cast<double>(n - 1);
  }

  CovarianceOperator cov(centered);
  std::mt19937_64 engine(0x5eed5eedULL);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::vector<std::vector<double>> found;
  const double negligible = 1e-14 * std::max(proj.total_variance, 1e-300);

  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> v(d);
    double v_norm = 0.0;
    while (v_norm < 1e-8) {
      for (auto& x : v) x = uniform(engine);
      remove_components(v, found);
      v_norm = norm(v);
    }
    for (auto& x : v) x /= v_norm;

    double eigenvalue = 0.0;
    for (int iter = 0; iter < options.max_iterations; ++iter) {
      auto w = cov.apply(v);
      remove_components(w, found);
      const double w_norm = norm(w);
      if (w_norm <= negligible) break;  // no variance left in this subspace
      double change = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double next = w[k] / w_norm;
        change += (next - v[k]) * (next - v[k]);
        v[k] = next;
      }
      if (std::sqrt(change) <= options.tolerance) break;
    }
    remove_components(v, found);
    const double final_norm = norm(v);
    for (auto& x : v) x /= final_norm;
    auto cv = cov.apply(v);
    eigenvalue = std::max(0.0, dot(v, cv));
    if (eigenvalue <= negligible) eigenvalue = 0.0;

    fix_sign(v);
    proj.explained_variance[c] = eigenvalue;
    found.push_back(v);
  }
  proj.components = {found[0], found[1]};
  if (proj.explained_variance[1] > proj.explained_variance[0]) {
    // Only reachable when power iteration stalls on a near-degenerate pair.
    std::swap(proj.explained_variance[0], proj.explained_variance[1]);
    std::swap(proj.components[0], proj.components[1]);
  }

  proj.coords.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PcaPoint p;
    p.pc1 = dot(centered.row(i), proj.components[0]);
    p.pc2 = dot(centered.row(i), proj.components[1]);
    if (!labels.empty()) p.label = labels[i];
    p.id = ids.empty() ? std::to_string(i) : ids[i];
    proj.coords.push_back(std::move(p));
  }
  return proj;
}

namespace {

std::string fmt_real(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (const char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string pca_to_csv(const PcaProjection& projection) {
  std::string out = "id,label,pc1,pc2\n";
  for (const auto& p : projection.coords) {
    out += csv_field(p.id) + ',' + std::to_string(static_cast<int>(p.label)) + ',' +
           fmt_real(p.pc1) + ',' + fmt_real(p.pc2) + '\n';
  }
  return out;
}

std::string pca_to_svg(const PcaProjection& projection, const std::string& title) {
  constexpr double kWidth = 640.0;
  constexpr double kHeight = 480.0;
  constexpr double kMargin = 60.0;

  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  for (const auto& p : projection.coords) {
    x_min = std::min(x_min, p.pc1);
    x_max = std::max(x_max, p.pc1);
    y_min = std::min(y_min, p.pc2);
    y_max = std::max(y_max, p.pc2);
  }
  auto pad = [](double& lo, double& hi) {
    const double span = hi - lo;
    const double extra = span > 0.0 ? 0.05 * span : 1.0;
    lo -= extra;
    hi += extra;
  };
  pad(x_min, x_max);
  pad(y_min, y_max);
  auto sx = [&](double x) {
    return kMargin + (x - x_min) / (x_max - x_min) * (kWidth - 2 * kMargin);
  };
  auto sy = [&](double y) {
    return kHeight - kMargin - (y - y_min) / (y_max - y_min) * (kHeight - 2 * kMargin);
  };
  auto percent = [&](double v) {
    return projection.total_variance > 0.0 ? 100.0 * v / projection.total_variance : 0.0;
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\""
      << kWidth - 2 * kMargin << "\" height=\"" << kHeight - 2 * kMargin
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  if (!title.empty()) {
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"30\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << xml_escape(title)
        << "</text>\n";
  }
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 20
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">PC1 ("
      << fmt_real(percent(projection.explained_variance[0]), "%.1f")
      << "% variance)</text>\n";
  svg << "<text x=\"20\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 20 "
      << kHeight / 2 << ")\">PC2 ("
      << fmt_real(percent(projection.explained_variance[1]), "%.1f")
      << "% variance)</text>\n";

  for (const auto& p : projection.coords) {
    const double x = sx(p.pc1);
    const double y = sy(p.pc2);
    if (is_positive(p.label)) {
      svg << "<path d=\"M" << x - 4 << ' ' << y - 4 << " L" << x + 4 << ' ' << y + 4
          << " M" << x - 4 << ' ' << y + 4 << " L" << x + 4 << ' ' << y - 4
          << "\" stroke=\"#c0392b\" stroke-width=\"2\"><title>" << xml_escape(p.id)
          << "</title></path>\n";
    } else {
      svg << "<circle cx=\"" << x << "\" cy=\"" << y
          << "\" r=\"4\" fill=\"none\" stroke=\"#2471a3\" stroke-width=\"2\"><title>"
          << xml_escape(p.id) << "</title></circle>\n";
    }
  }
  const double lx = kWidth - kMargin - 130;
  svg << "<circle cx=\"" << lx << "\" cy=\"" << kMargin + 15
      << "\" r=\"4\" fill=\"none\" stroke=\"#2471a3\" stroke-width=\"2\"/>\n";
  svg << "<text x=\"" << lx + 10 << "\" y=\"" << kMargin + 19
      << "\" font-family=\"sans-serif\" font-size=\"12\">in-context</text>\n";
  svg << "<path d=\"M" << lx - 4 << ' ' << kMargin + 31 << " L" << lx + 4 << ' '
      << kMargin + 39 << " M" << lx - 4 << ' ' << kMargin + 39 << " L" << lx + 4 << ' '
      << kMargin + 31 << "\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n";
  svg << "<text x=\"" << lx + 10 << "\" y=\"" << kMargin + 39
      << "\" font-family=\"sans-serif\" font-size=\"12\">out-of-context</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ctxprobe
