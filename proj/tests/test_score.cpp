#include "doctest.h"

#include <thread>

#include "causil/error.hpp"
#include "causil/score.hpp"
#include "oracles.hpp"

using namespace causil;

namespace {

StackedDataset dataset(const Eigen::MatrixXd& rows) {
  std::vector<std::string> labels;
  for (Eigen::Index c = 0; c < rows.cols(); ++c) labels.push_back("v" + std::to_string(c));
  return StackedDataset(labels, rows);
}

// Long-double Gauss-Jordan solve of (XᵀX) b = Xᵀy.
std::vector<long double> normal_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const auto k = static_cast<std::size_t>(x.cols());
  std::vector<std::vector<long double>> a(k, std::vector<long double>(k + 1, 0.0L));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) a[i][j] += static_cast<long double>(x(r, i)) * x(r, j);
      a[i][k] += static_cast<long double>(x(r, i)) * y(r);
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j <= k; ++j) a[r][j] -= f * a[c][j];
    }
  }
  std::vector<long double> b(k);
  for (std::size_t i = 0; i < k; ++i) b[i] = a[i][k] / a[i][i];
  return b;
}

Eigen::MatrixXd random_fixture(Rng& rng, int n, int cols) {
  Eigen::MatrixXd x(n, cols);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < cols; ++c) x(r, c) = rng.normal(0.3 * c, 1.0 + 0.2 * c);
  }
  // Target column 0 depends nonlinearly on column 1 plus noise.
  for (int r = 0; r < n; ++r) x(r, 0) = 0.8 * x(r, 1) - 0.3 * x(r, 1) * x(r, 1) + rng.normal(0.0, 3.0);
  return x;
}

}  // namespace

TEST_SUITE("score") {
  TEST_CASE("expand_basis shapes and values") {
    Eigen::MatrixXd none(3, 0);
    const auto b0 = expand_basis(none, 2);
    CHECK(b0.cols() == 1);
    CHECK(b0.isOnes());

    Eigen::MatrixXd two = Eigen::MatrixXd::Random(4, 2);
    CHECK(expand_basis(two, 2).cols() == 5);

    Eigen::MatrixXd one(1, 1);
    one << 2.0;
    const auto b = expand_basis(one, 3);
    REQUIRE(b.cols() == 4);
    CHECK(b(0, 0) == 1.0);
    CHECK(b(0, 1) == 2.0);
    CHECK(b(0, 2) == 4.0);
    CHECK(b(0, 3) == 8.0);

    CHECK(parameter_count(3, EstimatorKind::Poly3) == 10);
    CHECK(parameter_count(0, EstimatorKind::Linear) == 1);
    // Two variables, total degree <= 2: 1, a, b, a², ab, b².
    CHECK(expand_basis(two, 2, true).cols() == 6);
    CHECK(parameter_count(2, EstimatorKind::Poly2, true) == 6);
  }

  TEST_CASE("fit_ols exact, intercept-only and against normal equations") {
    Rng rng(3);
    Eigen::MatrixXd x(60, 2);
    Eigen::VectorXd y(60);
    for (int r = 0; r < 60; ++r) {
      x(r, 0) = 1.0;
      x(r, 1) = rng.normal(0, 1);
      y(r) = 2.0 + 3.0 * x(r, 1);
    }
    CHECK(fit_ols(x, y, 0.0).rss <= 1e-9 * y.squaredNorm());

    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(60, 1);
    const auto fit = fit_ols(ones, y, 0.0);
    const double mean = y.mean();
    CHECK(fit.coefficients(0) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(fit.rss == doctest::Approx((y.array() - mean).square().sum()).epsilon(1e-10));

    Eigen::MatrixXd d(50, 3);
    Eigen::VectorXd t(50);
    for (int r = 0; r < 50; ++r) {
      for (int c = 0; c < 3; ++c) d(r, c) = rng.normal(0, 1);
      t(r) = rng.normal(0, 1);
    }
    const auto ours = fit_ols(d, t, 0.0);
    const auto ref = normal_solve(d, t);
    for (int c = 0; c < 3; ++c) CHECK(std::fabs(ours.coefficients(c) - static_cast<double>(ref[c])) <= 1e-9);
  }

  TEST_CASE("local_score matches a long-double normal-equations BIC") {
    Rng rng(19);
    for (int rep = 0; rep < 100; ++rep) {
      const int n = 60 + static_cast<int>(rng.uniform_int(0, 400));
      const int cols = 2 + static_cast<int>(rng.uniform_int(0, 3));
      const auto rows = random_fixture(rng, n, cols);
      const auto ds = dataset(rows);
      std::vector<int> parents;
      for (int c = 1; c < cols; ++c) {
        if (rng.bernoulli(0.6)) parents.push_back(c);
      }
      const auto kind = std::array{EstimatorKind::Linear, EstimatorKind::Poly2,
                                   EstimatorKind::Poly3}[static_cast<std::size_t>(rng.uniform_int(0, 2))];
      ScoreParams exact;
      exact.ridge_eps = 0.0;
      const long double ref = oracle::normal_equations_bic(rows, 0, parents, degree_of(kind), 2.0);
      const double got = local_score(ds, 0, parents, kind, exact);
      CHECK(std::fabs(got - static_cast<double>(ref)) <= 1e-9 * std::fabs(static_cast<double>(ref)));
      const double regularized = local_score(ds, 0, parents, kind, ScoreParams{});
      CHECK(std::fabs(regularized - static_cast<double>(ref)) <= 1e-9 * std::fabs(static_cast<double>(ref)));
    }
  }

  TEST_CASE("irrelevant parent loses at n=5000") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(1000 + seed);
      Eigen::MatrixXd rows(5000, 2);
      for (int r = 0; r < 5000; ++r) rows.row(r) << rng.normal(0, 1), rng.normal(0, 1);
      const auto ds = dataset(rows);
      const std::vector<int> none, with_x{1};
      wins += local_score(ds, 0, none, EstimatorKind::Linear, {}) > local_score(ds, 0, with_x, EstimatorKind::Linear, {});
    }
    CHECK(wins >= 95);
  }

  TEST_CASE("real parent wins and scores are deterministic") {
    Rng rng(5);
    Eigen::MatrixXd rows(1000, 2);
    for (int r = 0; r < 1000; ++r) {
      const double x = rng.normal(0, 1);
      rows.row(r) << 2 * x + rng.normal(0, 1), x;
    }
    const auto ds = dataset(rows);
    const std::vector<int> none, with_x{1};
    const double gain = local_score(ds, 0, with_x, EstimatorKind::Linear, {}) -
                        local_score(ds, 0, none, EstimatorKind::Linear, {});
    CHECK(gain > 0);
    CHECK(local_score(ds, 0, with_x, EstimatorKind::Poly2, {}) == local_score(ds, 0, with_x, EstimatorKind::Poly2, {}));
  }

  TEST_CASE("row order invariance and nested fit quality") {
    Rng rng(8);
    const auto rows = random_fixture(rng, 300, 4);
    Eigen::MatrixXd reversed = rows.colwise().reverse();
    const std::vector<int> parents{1, 3};
    const double a = local_score(dataset(rows), 0, parents, EstimatorKind::Poly2, {});
    const double b = local_score(dataset(reversed), 0, parents, EstimatorKind::Poly2, {});
    CHECK(a == doctest::Approx(b).epsilon(1e-12));

    const Eigen::VectorXd y = rows.col(0);
    double previous = std::numeric_limits<double>::infinity();
    for (int m = 0; m <= 3; ++m) {
      const Eigen::MatrixXd design = expand_basis(rows.middleCols(1, m), 2);
      const double rss = fit_ols(design, y, 0.0).rss;
      CHECK(rss <= previous * (1 + 1e-12));
      previous = rss;
    }
  }

  TEST_CASE("graph score decomposes over nodes") {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
      const auto dag_edges = oracle::random_dag(5, 0.5, rng);
      const auto rows = oracle::sample_linear_gaussian(5, dag_edges, 400, rng);
      const auto ds = dataset(rows);
      const auto dag = oracle::to_dag(5, dag_edges);
      const Scorer scorer(ds, EstimatorKind::Poly2, {});
      double sum = 0;
      for (int v = 0; v < 5; ++v) sum += local_score(ds, v, dag.parents(v), EstimatorKind::Poly2, {});
      CHECK(graph_score(scorer, dag) == doctest::Approx(sum).epsilon(1e-10));
    }
  }

  TEST_CASE("Scorer cache agrees with fresh computation under concurrency") {
    Rng rng(4);
    const auto rows = random_fixture(rng, 500, 6);
    const auto ds = dataset(rows);
    const Scorer scorer(ds, EstimatorKind::Poly3, {});
    std::vector<std::vector<int>> sets;
    for (int mask = 0; mask < 32; ++mask) {
      std::vector<int> s;
      for (int c = 1; c < 6; ++c) {
        if (mask >> (c - 1) & 1) s.push_back(c);
      }
      sets.push_back(s);
    }
    std::vector<double> got(sets.size() * 4);
    {
      std::vector<std::jthread> pool;
      for (int w = 0; w < 4; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t i = 0; i < sets.size(); ++i) {
            const auto idx = (i * 7 + static_cast<std::size_t>(w) * 5) % sets.size();
            got[static_cast<std::size_t>(w) * sets.size() + idx] = scorer.score(0, sets[idx]);
          }
        });
      }
    }
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const double fresh = local_score(ds, 0, sets[i], EstimatorKind::Poly3, {});
      for (int w = 0; w < 4; ++w) {
        CHECK(got[static_cast<std::size_t>(w) * sets.size() + i] == doctest::Approx(fresh).epsilon(1e-12));
      }
      CHECK(scorer.score(0, sets[i]) == got[i]);
    }
    CHECK(scorer.evaluations() == sets.size());
  }

  TEST_CASE("degenerate inputs") {
    Eigen::MatrixXd tiny(3, 3);
    tiny << 1, 2, 3, 4, 5, 7, 8, 9, 1;
    const auto ds = dataset(tiny);
    const std::vector<int> parents{1, 2};
    CHECK_THROWS_AS(local_score(ds, 0, parents, EstimatorKind::Linear, {}), DegenerateData);

    Eigen::MatrixXd bad(2, 1);
    bad << 1, std::nan("");
    CHECK_THROWS_AS(dataset(bad), DegenerateData);
    CHECK_THROWS_AS(StackedDataset({"a", "a"}, Eigen::MatrixXd::Zero(2, 2)), DegenerateData);

    // A deterministic relation hits the rss floor instead of -inf.
    Eigen::MatrixXd exact(100, 2);
    for (int r = 0; r < 100; ++r) exact.row(r) << 3.0 * r + 1.0, r;
    const Scorer scorer(dataset(exact), EstimatorKind::Linear, {});
    CHECK(std::isfinite(scorer.score(0, std::vector<int>{1})));
    CHECK(scorer.floored() == 1);
  }
}
