#pragma once

// C2 cubic interpolating splines with natural or periodic end conditions,
// including first/second derivative evaluation. Used for the track ribbon's
// angle profiles, where continuous curvature (second derivatives) is needed.

#include <Eigen/Core>

#include <vector>

namespace fueltraj {

class CubicSpline {
 public:
  enum class Boundary { kNatural, kPeriodic };

  CubicSpline() = default;

  // Knots must be strictly increasing with at least 2 points (3 for
  // periodic). For periodic splines the first and last ordinate must match
  // (the curve repeats with period x.back()-x.front()).
  CubicSpline(std::vector<double> x, std::vector<double> y, Boundary bc);

  double operator()(double x) const { return eval(x); }
  double eval(double x) const;
  double deriv(double x) const;
  double deriv2(double x) const;

  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }
  bool periodic() const { return periodic_; }
  const std::vector<double>& knots() const { return x_; }

 private:
  int find_interval(double& x) const;  // wraps/validates x, returns segment

  std::vector<double> x_, y_, m_;  // knots, ordinates, second derivatives
  bool periodic_ = false;
};

}  // namespace fueltraj
