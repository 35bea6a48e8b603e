#include <catch2/catch_amalgamated.hpp>

#include "cofact/prox.hpp"
#include "cofact/rng.hpp"
#include "helpers.hpp"

using namespace cofact;

namespace {

/// Brute-force prox of 1/2 (u - x)^2 + tau * |u| over u >= 0 on a fine grid.
double grid_prox(double x, double tau) {
  const double hi = std::max(1.0, x + 1.0);
  double best_u = 0.0;
  double best_v = 0.5 * x * x;  // u = 0
  for (double u = 0.0; u <= hi; u += 1e-4) {
    const double v = 0.5 * (u - x) * (u - x) + tau * u;
    if (v < best_v) {
      best_v = v;
      best_u = u;
    }
  }
  return best_u;
}

}  // namespace

TEST_CASE("prox_nonneg_l1 shifts and clips") {
  Matrix x(1, 1);
  x << 0.5;
  REQUIRE(prox_nonneg_l1(x, 0.2)(0, 0) == Catch::Approx(0.3));
  x << -1.0;
  REQUIRE(prox_nonneg_l1(x, 0.0)(0, 0) == 0.0);
  REQUIRE(prox_nonneg_l1(x, 0.7)(0, 0) == 0.0);
}

TEST_CASE("prox_nonneg_l1 matches the grid-search oracle") {
  Rng rng(21);
  Matrix x(5, 1);
  for (Index i = 0; i < 5; ++i) x(i, 0) = rng.uniform(-2.0, 2.0);
  const Matrix got = prox_nonneg_l1(x, 0.3);
  for (Index i = 0; i < 5; ++i)
    REQUIRE(got(i, 0) == Catch::Approx(grid_prox(x(i, 0), 0.3)).margin(1e-3));
}

TEST_CASE("prox_nonneg_l1 with zero threshold equals project_nonneg") {
  Rng rng(22);
  const Matrix x = testing::random_matrix(rng, 6, 7, -3.0, 3.0);
  REQUIRE(prox_nonneg_l1(x, 0.0) == project_nonneg(x));
}

TEST_CASE("project_nonneg clips negatives and nothing else") {
  Matrix x(2, 2);
  x << -1.0, 2.0, 0.0, -3.0;
  Matrix want(2, 2);
  want << 0.0, 2.0, 0.0, 0.0;
  REQUIRE(project_nonneg(x) == want);

  Rng rng(23);
  const Matrix y = testing::random_matrix(rng, 4, 4, 0.0, 5.0);
  REQUIRE(project_nonneg(y) == y);
  const Matrix z = testing::random_matrix(rng, 4, 4, -5.0, 5.0);
  REQUIRE(project_nonneg(project_nonneg(z)) == project_nonneg(z));
}

TEST_CASE("project_simplex_columns fixed cases") {
  Matrix x(3, 1);
  x << 0.2, 0.3, 0.5;
  REQUIRE((project_simplex_columns(x) - x).norm() < 1e-14);

  x << 2.0, 0.0, 0.0;
  Matrix vertex(3, 1);
  vertex << 1.0, 0.0, 0.0;
  REQUIRE((project_simplex_columns(x) - vertex).norm() < 1e-14);

  x << 0.6, 0.6, 0.6;
  const Matrix got = project_simplex_columns(x);
  for (Index i = 0; i < 3; ++i)
    REQUIRE(got(i, 0) == Catch::Approx(1.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("simplex projection is optimal against random feasible points") {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    Vector x(4);
    for (Index i = 0; i < 4; ++i) x[i] = rng.uniform(-2.0, 2.0);
    Matrix xm = x;
    const Vector proj = project_simplex_columns(xm).col(0);
    const double proj_d = (proj - x).norm();
    for (int s = 0; s < 10000; ++s) {
      Vector u(4);
      for (Index i = 0; i < 4; ++i) u[i] = -std::log(1.0 - rng.uniform());
      u /= u.sum();
      REQUIRE(proj_d <= (u - x).norm() + 1e-12);
    }
  }
}

TEST_CASE("simplex projection output is feasible for extreme inputs") {
  Rng rng(25);
  Matrix x(5, 10000);
  for (Index j = 0; j < x.cols(); ++j) {
    const double scale = (j % 3 == 0) ? 1e8 : 1.0;
    for (Index i = 0; i < x.rows(); ++i)
      x(i, j) = scale * rng.uniform(-1.0, 1.0);
  }
  const Matrix p = project_simplex_columns(x);
  for (Index j = 0; j < p.cols(); ++j) {
    REQUIRE((p.col(j).array() >= 0.0).all());
    REQUIRE(std::abs(p.col(j).sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("simplex projection rejects non-finite input") {
  Matrix x(2, 1);
  x << std::numeric_limits<double>::quiet_NaN(), 0.0;
  REQUIRE_THROWS_AS(project_simplex_columns(x), Error);
}

TEST_CASE("all three operators are nonexpansive") {
  Rng rng(26);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix x = testing::random_matrix(rng, 6, 3, -4.0, 4.0);
    const Matrix y = testing::random_matrix(rng, 6, 3, -4.0, 4.0);
    const double dist = (x - y).norm();
    REQUIRE((project_nonneg(x) - project_nonneg(y)).norm() <= dist + 1e-12);
    REQUIRE((prox_nonneg_l1(x, 0.4) - prox_nonneg_l1(y, 0.4)).norm() <=
            dist + 1e-12);
    REQUIRE((project_simplex_columns(x) - project_simplex_columns(y)).norm() <=
            dist + 1e-12);
  }
}
