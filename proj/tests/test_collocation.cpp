#include "fueltraj/collocation.hpp"

#include <cmath>

#include "doctest.h"

using fueltraj::colloc::LgrBasis;

TEST_CASE("basis order 1 is the left endpoint with full weight") {
  const LgrBasis& b = LgrBasis::get(1);
  REQUIRE(b.nodes.size() == 1);
  CHECK(b.nodes[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(b.weights[0] == doctest::Approx(2.0).epsilon(1e-15));
  // d/dt of the linear interpolant through (-1, 1): slope between the two
  // support points.
  REQUIRE(b.diff.rows() == 1);
  REQUIRE(b.diff.cols() == 2);
  CHECK(b.diff(0, 0) == doctest::Approx(-0.5).epsilon(1e-13));
  CHECK(b.diff(0, 1) == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("basis order 2 has the classical nodes and weights") {
  const LgrBasis& b = LgrBasis::get(2);
  REQUIRE(b.nodes.size() == 2);
  CHECK(b.nodes[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(b.nodes[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  CHECK(b.weights[0] == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(b.weights[1] == doctest::Approx(1.5).epsilon(1e-13));
}

TEST_CASE("basis order 3 matches the closed-form nodes and weights") {
  const LgrBasis& b = LgrBasis::get(3);
  const double r6 = std::sqrt(6.0);
  REQUIRE(b.nodes.size() == 3);
  CHECK(b.nodes[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(b.nodes[1] == doctest::Approx((1.0 - r6) / 5.0).epsilon(1e-13));
  CHECK(b.nodes[2] == doctest::Approx((1.0 + r6) / 5.0).epsilon(1e-13));
  CHECK(b.weights[0] == doctest::Approx(2.0 / 9.0).epsilon(1e-13));
  CHECK(b.weights[1] == doctest::Approx((16.0 + r6) / 18.0).epsilon(1e-13));
  CHECK(b.weights[2] == doctest::Approx((16.0 - r6) / 18.0).epsilon(1e-13));
}

TEST_CASE("nodes stay in [-1, 1), ascending, with positive weights") {
  for (int n : {2, 3, 5, 8, 13, 21, 40}) {
    const LgrBasis& b = LgrBasis::get(n);
    REQUIRE(b.nodes.size() == n);
    CHECK(b.nodes[0] == doctest::Approx(-1.0).epsilon(1e-15));
    for (int i = 1; i < n; ++i) {
      CHECK(b.nodes[i] > b.nodes[i - 1]);
      CHECK(b.nodes[i] < 1.0);
    }
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(b.weights[i] > 0.0);
      wsum += b.weights[i];
    }
    CHECK(wsum == doctest::Approx(2.0).epsilon(1e-13));
  }
}

TEST_CASE("quadrature integrates polynomials up to degree 2N-2 exactly") {
  for (int n : {1, 2, 3, 5, 8, 13}) {
    const LgrBasis& b = LgrBasis::get(n);
    for (int d = 0; d <= 2 * n - 2; ++d) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += b.weights[i] * std::pow(b.nodes[i], d);
      }
      const double exact = d % 2 == 0 ? 2.0 / (d + 1) : 0.0;
      CHECK(acc == doctest::Approx(exact).scale(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("differentiation matrix is exact for polynomials up to degree N") {
  for (int n : {1, 2, 3, 5, 8, 13}) {
    const LgrBasis& b = LgrBasis::get(n);
    Eigen::VectorXd supp(n + 1);
    supp.head(n) = b.nodes;
    supp[n] = 1.0;
    for (int d = 0; d <= n; ++d) {
      Eigen::VectorXd vals(n + 1);
      for (int i = 0; i <= n; ++i) vals[i] = std::pow(supp[i], d);
      const Eigen::VectorXd dv = b.diff * vals;
      for (int j = 0; j < n; ++j) {
        const double exact = d == 0 ? 0.0 : d * std::pow(b.nodes[j], d - 1);
        CHECK(dv[j] == doctest::Approx(exact).scale(1.0).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("differentiating a constant gives exactly zero rows") {
  const LgrBasis& b = LgrBasis::get(7);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(8);
  CHECK((b.diff * ones).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("order outside the supported range is rejected") {
  CHECK_THROWS(LgrBasis::get(0));
  CHECK_THROWS(LgrBasis::get(41));
}
