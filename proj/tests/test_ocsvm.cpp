#include <doctest.h>

#include <cmath>
#include <random>

#include "ctxprobe/errors.hpp"
#include "ctxprobe/ocsvm.hpp"
#include "oracles/qp_oracle.hpp"

using namespace ctxprobe;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) m(i, j) = normal(rng);
  }
  return m;
}

oracle::Rows to_rows(const Matrix& m) {
  oracle::Rows rows;
  for (std::size_t i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).begin(), m.row(i).end());
  return rows;
}

double model_objective(const OcsvmModel& model) {
  const auto& sv = model.support_vectors();
  const auto& c = model.dual_coefficients();
  double obj = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      obj += 0.5 * c[i] * c[j] * kernel_eval(model.kernel(), sv.row(i), sv.row(j));
    }
  }
  return obj;
}

TrainConfig rbf_config(double gamma, double nu, double tol = 1e-4) {
  TrainConfig c;
  c.nu = nu;
  c.kernel = KernelSpec::rbf(gamma);
  c.kkt_tolerance = tol;
  return c;
}

}  // namespace

TEST_CASE("kernel_eval fixtures") {
  const std::vector<double> origin{0.0, 0.0};
  CHECK(kernel_eval(KernelSpec::rbf(1.0), origin, origin) == 1.0);
  CHECK(kernel_eval(KernelSpec::rbf(0.5), origin, std::vector<double>{1.0, 1.0}) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(kernel_eval(KernelSpec::linear(), std::vector<double>{1.0, 2.0},
                    std::vector<double>{3.0, 4.0}) == 11.0);
}

TEST_CASE("kernel_eval is symmetric and exact on the diagonal") {
  const Matrix m = random_matrix(20, 5, 11);
  for (const auto spec : {KernelSpec::rbf(0.3), KernelSpec::linear()}) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (spec.kind == KernelKind::rbf) CHECK(kernel_eval(spec, m.row(i), m.row(i)) == 1.0);
      for (std::size_t j = 0; j < m.rows(); ++j) {
        CHECK(kernel_eval(spec, m.row(i), m.row(j)) == kernel_eval(spec, m.row(j), m.row(i)));
      }
    }
  }
}

TEST_CASE("kernel_eval rejects mismatched lengths and bad gamma") {
  CHECK_THROWS_AS(kernel_eval(KernelSpec::linear(), std::vector<double>{1.0},
                              std::vector<double>{1.0, 2.0}),
                  InputError);
  CHECK_THROWS_AS(KernelSpec::rbf(0.0).validate(), InputError);
  CHECK_THROWS_AS(KernelSpec::rbf(-1.0).validate(), InputError);
  CHECK_NOTHROW(KernelSpec::linear().validate());
}

TEST_CASE("gamma_scale_heuristic") {
  SUBCASE("zero variance falls back to 1/d") {
    const Matrix m = Matrix::from_rows({{1, 2, 3, 4}, {1, 2, 3, 4}});
    CHECK(gamma_scale_heuristic(m) == 0.25);
  }
  SUBCASE("direct formula") {
    CHECK(gamma_scale_heuristic(Matrix::from_rows({{0, 0}, {2, 0}})) == 1.0);
  }
  SUBCASE("unit variance sample") {
    const Matrix m = random_matrix(100, 10, 3);
    // Independent recomputation of the mean per-dimension variance.
    double v = 0.0;
    for (std::size_t j = 0; j < 10; ++j) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < 100; ++i) {
        sum += m(i, j);
        sq += m(i, j) * m(i, j);
      }
      v += sq / 100.0 - (sum / 100.0) * (sum / 100.0);
    }
    v /= 10.0;
    const double g = gamma_scale_heuristic(m);
    CHECK(g == doctest::Approx(1.0 / (10.0 * v)).epsilon(1e-10));
    CHECK(g > 0.07);
    CHECK(g < 0.13);
  }
  SUBCASE("empty") { CHECK_THROWS_AS(gamma_scale_heuristic(Matrix{}), InputError); }
}

TEST_CASE("fit on a single row") {
  const auto model = fit(Matrix::from_rows({{0.0, 0.0}}), rbf_config(1.0, 0.1));
  REQUIRE(model.support_count() == 1);
  CHECK(model.dual_coefficients()[0] == 1.0);
  CHECK(model.offset() == 1.0);
  CHECK(decision_score(model, std::vector<double>{0.0, 0.0}) == 0.0);
  CHECK(decision_score(model, std::vector<double>{50.0, -40.0}) ==
        doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("nu = 1 forces uniform duals") {
  const Matrix m = Matrix::from_rows({{0.0, 1.0}, {3.0, -2.0}});
  TrainConfig c;
  c.nu = 1.0;
  for (const auto kernel : {KernelSpec::rbf(0.7), KernelSpec::linear()}) {
    c.kernel = kernel;
    const auto model = fit(m, c);
    REQUIRE(model.support_count() == 2);
    CHECK(model.dual_coefficients()[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(model.dual_coefficients()[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("three-point fixture matches the projected-gradient oracle") {
  const Matrix m = Matrix::from_rows({{0, 0}, {1, 0}, {0, 3}});
  const auto model = fit(m, rbf_config(1.0, 0.5, 1e-12));
  // Frozen from oracle::solve_rbf (stationarity 1e-10).
  const double expected_alpha[] = {0.296902385150323, 0.296952507301871, 0.406145107547806};
  const double expected_objective = 0.203097614917983;
  const double expected_score = -0.0453934156706417;  // at (0.5, 0.5)

  REQUIRE(model.support_count() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(model.dual_coefficients()[i] - expected_alpha[i]) <= 1e-6);
  }
  CHECK(std::abs(model_objective(model) - expected_objective) <= 1e-8);
  CHECK(std::abs(decision_score(model, std::vector<double>{0.5, 0.5}) - expected_score) <= 1e-6);

  const auto live = oracle::solve_rbf(to_rows(m), 1.0, 0.5);
  CHECK(std::abs(live.objective - expected_objective) <= 1e-10);
}

TEST_CASE("fit errors") {
  CHECK_THROWS_AS(fit(Matrix{}, TrainConfig{}), InputError);
  TrainConfig bad;
  bad.nu = 0.0;
  CHECK_THROWS_AS(fit(Matrix::from_rows({{1.0}}), bad), InputError);
  bad.nu = 1.5;
  CHECK_THROWS_AS(fit(Matrix::from_rows({{1.0}}), bad), InputError);

  SUBCASE("budget exhaustion reports the violation") {
    TrainConfig c = rbf_config(0.5, 0.2, 1e-12);
    c.max_passes = 1;
    try {
      fit(random_matrix(30, 3, 5), c);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.violation() > 1e-12);
    }
  }
}

TEST_CASE("decision_score and score_example") {
  // f(x) = x_0 under a linear kernel with a single unit support vector.
  const OcsvmModel model(Matrix::from_rows({{1.0, 0.0}}), {1.0}, 0.0, KernelSpec::linear(),
                         1.0, 1);
  const std::vector<double> v{0.3, 7.0};
  CHECK(score_example(model, {v}) == decision_score(model, v));
  CHECK(score_example(model, {v, v}) == decision_score(model, v));
  CHECK(score_example(model, {{0.2, 0.0}, {-0.4, 0.0}}) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK_THROWS_AS(score_example(model, {}), InputError);
  CHECK_THROWS_AS(decision_score(model, std::vector<double>{1.0}), InputError);
}

TEST_CASE("model constructor enforces invariants") {
  const auto sv = Matrix::from_rows({{0.0}, {1.0}});
  CHECK_THROWS_AS(OcsvmModel(sv, {0.5}, 0.0, KernelSpec::linear(), 1.0, 2), InputError);
  CHECK_THROWS_AS(OcsvmModel(sv, {0.9, 0.1}, 0.0, KernelSpec::linear(), 1.0, 2), InputError);
  CHECK_THROWS_AS(OcsvmModel(sv, {0.5, 0.4}, 0.0, KernelSpec::linear(), 1.0, 2), InputError);
  CHECK_THROWS_AS(OcsvmModel(sv, {0.5, 0.5}, 0.0, KernelSpec::rbf(-1.0), 1.0, 2), InputError);
  CHECK_NOTHROW(OcsvmModel(sv, {0.5, 0.5}, 0.0, KernelSpec::linear(), 1.0, 2));
}

TEST_CASE("fitted models satisfy the dual constraints and KKT margin property") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 5 + rng() % 60;
    const std::size_t d = 1 + rng() % 6;
    const double nu = 0.05 + 0.9 * std::uniform_real_distribution<double>(0, 1)(rng);
    TrainConfig config;
    config.nu = nu;
    const Matrix data = random_matrix(n, d, rng());
    const auto model = fit(data, config);

    double sum = 0.0;
    for (const double a : model.dual_coefficients()) {
      sum += a;
      CHECK(a > 0.0);
      CHECK(a <= 1.0 / (nu * static_cast<double>(n)) + 1e-12);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(model.support_count() <= n);
    CHECK(model.dim() == d);

    const double upper = model.box_bound();
    const auto& sv = model.support_vectors();
    for (std::size_t k = 0; k < model.support_count(); ++k) {
      const double a = model.dual_coefficients()[k];
      if (a > kSupportThreshold && a < upper - kSupportThreshold) {
        CHECK(std::abs(decision_score(model, sv.row(k))) <= 10 * config.kkt_tolerance);
      }
    }
  }
}

TEST_CASE("oracle equivalence on small instances") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng() % 5;
    const std::size_t d = 1 + rng() % 4;
    const double nus[] = {0.3, 0.5, 1.0};
    const double nu = nus[rng() % 3];
    const Matrix data = random_matrix(n, d, rng());
    const double gamma = gamma_scale_heuristic(data);
    const auto model = fit(data, rbf_config(gamma, nu, 1e-12));
    const auto ref = oracle::solve_rbf(to_rows(data), gamma, nu);
    CHECK(std::abs(model_objective(model) - ref.objective) <= 1e-8);
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> x(data.row(i).begin(), data.row(i).end());
      CHECK(std::abs(decision_score(model, x) - ref.score(x)) <= 1e-6);
    }
  }
}

TEST_CASE("nu bounds outliers from above and support vectors from below") {
  const Matrix data = random_matrix(200, 8, 17);
  for (const double nu : {0.1, 0.2, 0.5}) {
    TrainConfig config;
    config.nu = nu;
    const auto model = fit(data, config);
    std::size_t outliers = 0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      if (decision_score(model, data.row(i)) < -1e-6) ++outliers;
    }
    CHECK(static_cast<double>(outliers) / 200.0 <= nu + 0.05);
    CHECK(static_cast<double>(model.support_count()) / 200.0 >= nu - 0.05);
  }
}

TEST_CASE("fit is deterministic") {
  const Matrix data = random_matrix(80, 6, 8);
  TrainConfig config;
  config.nu = 0.15;
  CHECK(fit(data, config) == fit(data, config));
}

TEST_CASE("rbf decision scores are translation covariant") {
  const Matrix data = random_matrix(25, 3, 41);
  const Matrix queries = random_matrix(10, 3, 42, 2.0);
  const std::vector<double> shift{3.5, -12.25, 0.75};
  auto shifted = [&](const Matrix& m) {
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) += shift[j];
    }
    return out;
  };
  const auto config = rbf_config(0.4, 0.2, 1e-12);
  const auto base = fit(data, config);
  const auto moved = fit(shifted(data), config);
  const Matrix moved_queries = shifted(queries);
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    CHECK(std::abs(decision_score(base, queries.row(i)) -
                   decision_score(moved, moved_queries.row(i))) <= 1e-9);
  }
}

TEST_CASE("standardized fit stores the calibration transform") {
  Matrix data = random_matrix(40, 3, 77);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    data(i, 0) = 100.0 + 50.0 * data(i, 0);
    data(i, 2) = 5.0;  // constant column keeps scale 1
  }
  TrainConfig config;
  config.nu = 0.2;
  const auto model = fit_standardized(data, config);
  REQUIRE(model.standardization().has_value());
  CHECK(model.standardization()->scale[2] == 1.0);

  const auto& s = *model.standardization();
  const auto plain = fit(s.apply(data), config);
  const Matrix queries = random_matrix(5, 3, 78);
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    const auto z = s.apply(queries.row(i));
    CHECK(decision_score(model, queries.row(i)) == doctest::Approx(decision_score(plain, z)).epsilon(1e-12));
  }
}
