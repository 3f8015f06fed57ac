#include "fueltraj/spline.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"

using fueltraj::CubicSpline;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("natural spline interpolates the knots") {
  std::vector<double> x{0.0, 0.7, 1.1, 2.5, 4.0};
  std::vector<double> y{1.0, -0.3, 0.8, 2.2, -1.0};
  CubicSpline s(x, y, CubicSpline::Boundary::kNatural);
  for (size_t i = 0; i < x.size(); ++i) {
    CHECK(s.eval(x[i]) == doctest::Approx(y[i]).epsilon(1e-13));
  }
}

TEST_CASE("natural spline reproduces straight lines exactly") {
  std::vector<double> x{-1.0, 0.5, 2.0, 3.5};
  std::vector<double> y;
  for (double xi : x) y.push_back(2.0 * xi + 1.0);
  CubicSpline s(x, y, CubicSpline::Boundary::kNatural);
  for (double t : {-1.0, -0.2, 0.9, 1.7, 3.1, 3.5}) {
    CHECK(s.eval(t) == doctest::Approx(2.0 * t + 1.0).epsilon(1e-13));
    CHECK(s.deriv(t) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.deriv2(t) == doctest::Approx(0.0).scale(1.0).epsilon(1e-11));
  }
}

TEST_CASE("natural spline of x^2 on three uniform knots has known value") {
  // Moments: m0 = m2 = 0, m1 = 3; S(0.5) = 0.3125 by direct evaluation of
  // the moment form.
  CubicSpline s({0.0, 1.0, 2.0}, {0.0, 1.0, 4.0},
                CubicSpline::Boundary::kNatural);
  CHECK(s.eval(0.5) == doctest::Approx(0.3125).epsilon(1e-13));
  CHECK(s.deriv2(0.5) == doctest::Approx(1.5).epsilon(1e-12));  // m1 * 0.5
}

TEST_CASE("periodic spline approximates sin closely and wraps") {
  const int n = 33;
  std::vector<double> x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 2.0 * kPi * i / (n - 1);
    y[i] = std::sin(x[i]);
  }
  y.back() = y.front();  // exact closure
  CubicSpline s(x, y, CubicSpline::Boundary::kPeriodic);

  double max_err = 0.0, max_derr = 0.0;
  for (int i = 0; i <= 500; ++i) {
    const double t = 2.0 * kPi * i / 500.0;
    max_err = std::max(max_err, std::abs(s.eval(t) - std::sin(t)));
    max_derr = std::max(max_derr, std::abs(s.deriv(t) - std::cos(t)));
  }
  CHECK(max_err < 2e-5);
  CHECK(max_derr < 5e-4);

  // Periodic extension.
  for (double t : {0.3, 1.7, 5.9}) {
    CHECK(s.eval(t + 2.0 * kPi) == doctest::Approx(s.eval(t)).epsilon(1e-10));
    CHECK(s.eval(t - 2.0 * kPi) == doctest::Approx(s.eval(t)).epsilon(1e-10));
    CHECK(s.deriv(t + 2.0 * kPi) ==
          doctest::Approx(s.deriv(t)).epsilon(1e-10));
  }
}

TEST_CASE("periodic spline with two intervals works") {
  std::vector<double> x{0.0, 1.0, 2.0};
  std::vector<double> y{1.0, -1.0, 1.0};
  CubicSpline s(x, y, CubicSpline::Boundary::kPeriodic);
  CHECK(s.eval(0.0) == doctest::Approx(1.0));
  CHECK(s.eval(1.0) == doctest::Approx(-1.0));
  CHECK(s.eval(2.5) == doctest::Approx(s.eval(0.5)).epsilon(1e-12));
}

TEST_CASE("evaluating a natural spline outside its domain throws") {
  CubicSpline s({0.0, 1.0, 2.0}, {0.0, 1.0, 0.0},
                CubicSpline::Boundary::kNatural);
  CHECK_THROWS_AS(s.eval(-0.1), std::out_of_range);
  CHECK_THROWS_AS(s.eval(2.1), std::out_of_range);
}

TEST_CASE("derivatives are consistent with finite differences") {
  std::vector<double> x, y;
  for (int i = 0; i <= 12; ++i) {
    x.push_back(0.4 * i);
    y.push_back(std::exp(-0.3 * x.back()) * std::cos(x.back()));
  }
  CubicSpline s(x, y, CubicSpline::Boundary::kNatural);
  const double h = 1e-6;
  for (double t : {0.9, 2.3, 3.37, 4.4}) {
    const double d_fd = (s.eval(t + h) - s.eval(t - h)) / (2 * h);
    const double d2_fd = (s.eval(t + h) - 2 * s.eval(t) + s.eval(t - h)) /
                         (h * h);
    CHECK(s.deriv(t) == doctest::Approx(d_fd).epsilon(1e-7));
    CHECK(s.deriv2(t) == doctest::Approx(d2_fd).epsilon(1e-3));
  }
}
