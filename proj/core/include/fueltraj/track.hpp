#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "fueltraj/errors.hpp"
#include "fueltraj/spline.hpp"

namespace fueltraj::track {

// Geometry of the road ribbon at one arc-length station: the three attitude
// angles, their arc-length derivatives, the Darboux curvature triple, and
// derived quantities consumed by the vehicle dynamics.
//
// Conventions: pitch > 0 climbs, yaw increases turning left in plan view,
// roll is about the spine tangent. The body frame downstream is z-down; the
// elevation reported here is z-up (meters above the start point).
struct RibbonPoint {
  double s = 0.0;
  double pitch = 0.0, yaw = 0.0, roll = 0.0;
  double pitch_p = 0.0, yaw_p = 0.0, roll_p = 0.0;  // d/ds
  // Curvature triple (1/m): angular velocity of the Darboux frame is
  // omega = s_dot * Omega.
  double omega_x = 0.0, omega_y = 0.0, omega_z = 0.0;
  double omega_x_p = 0.0;  // d(omega_x)/ds, feeds the roll-acceleration term
  double half_width = 0.0;
  double elevation = 0.0;
};

// Curvature triple from the angle rates at a point (pure algebra):
//   Omega_x = roll' - yaw' sin(pitch)
//   Omega_y = pitch' cos(roll) + yaw' cos(pitch) sin(roll)
//   Omega_z = -pitch' sin(roll) + yaw' cos(pitch) cos(roll)
Eigen::Vector3d curvature_triple(double pitch, double roll, double pitch_p,
                                 double yaw_p, double roll_p);

// Arc-length-parameterized road ribbon. Angles are twice-differentiable
// cubic splines of s; closed circuits use periodic splines with the yaw
// winding (integer number of full turns) carried by a linear ramp so the
// spline itself is periodic.
class TrackRibbon {
 public:
  // All vectors share the sample grid `s`, which must be strictly
  // increasing and start at 0. For closed tracks the final sample is the
  // wrap point: pitch/roll/half_width must return to their first values and
  // yaw must return modulo 2*pi.
  TrackRibbon(Eigen::VectorXd s, Eigen::VectorXd pitch, Eigen::VectorXd yaw,
              Eigen::VectorXd roll, Eigen::VectorXd half_width, bool closed);

  double length() const { return length_; }
  bool closed() const { return closed_; }
  int windings() const { return windings_; }

  // Full geometry at s. Closed tracks wrap s; open tracks throw
  // std::out_of_range outside [0, length].
  RibbonPoint at(double s) const;

  // World-frame spine point (x, y, z-up), reconstructed by integrating the
  // tangent direction through the attitude angles.
  Eigen::Vector3d position(double s) const;

  // Copy with pitch and roll zeroed and the plan-view yaw kept; used for
  // two-dimensional comparison runs.
  TrackRibbon flattened() const;

  // CSV with header `s,theta,mu,phi,halfwidth` (theta = pitch, mu = yaw,
  // phi = roll); `#` comment lines carry the closed flag.
  static TrackRibbon load_csv(const std::string& path);
  void save_csv(const std::string& path) const;

  const Eigen::VectorXd& sample_s() const { return s_; }

 private:
  double wrap(double s) const;
  void build_positions();

  Eigen::VectorXd s_, pitch_v_, yaw_v_, roll_v_, half_width_v_;
  bool closed_ = false;
  double length_ = 0.0;
  int windings_ = 0;
  CubicSpline pitch_, yaw_per_, roll_, half_width_;
  // Cumulative world positions at the sample knots (z-up).
  std::vector<Eigen::Vector3d> knot_pos_;
};

// One plan-view corner for the circuit generator.
struct Corner {
  double s_center = 0.0;  // m
  double turn = 0.0;      // total heading change, rad (signed)
  double width = 100.0;   // m
};

struct CircuitSpec {
  double length = 7000.0;
  double elevation_range = 110.0;  // max - min elevation target, m
  std::vector<Corner> corners;     // empty = no corners beyond base curvature
  double half_width = 5.0;
  double max_bank = 0.04;  // rad of roll at the strongest corner
  unsigned seed = 1;
};

// Seeded default corner layout for a circuit of the given length.
CircuitSpec default_circuit(double length, double elevation_range,
                            unsigned seed);

// Deterministically builds a closed, C2-smooth circuit of the requested
// length whose elevation range matches the request and whose world-frame
// spine closes on itself (plan and elevation) to high precision.
TrackRibbon synthesize_circuit(const CircuitSpec& spec);

// Distance-domain kinematics of a body moving on the ribbon. Templated so
// the same algebra runs on plain doubles and on AD scalar types; callers in
// optimization check value(s_dot) > 0 instead of relying on exceptions.
template <typename T>
struct RibbonRates {
  T s_dot;     // ds/dt
  T S_f;       // dt/ds
  T n_prime;   // dn/ds
  T xi_prime;  // dxi/ds
};

template <typename T>
RibbonRates<T> ribbon_rates(const T& n, const T& xi, const T& u, const T& v,
                            const T& omega_bar_z, double omega_z) {
  using std::cos;
  using std::sin;
  RibbonRates<T> r;
  r.s_dot = (u * cos(xi) - v * sin(xi)) / (1.0 - n * omega_z);
  r.S_f = 1.0 / r.s_dot;
  r.n_prime = r.S_f * (u * sin(xi) + v * cos(xi));
  r.xi_prime = r.S_f * omega_bar_z - omega_z;
  return r;
}

// Checked double version: throws NonForwardProgress when the body is not
// making forward progress along the spine (s_dot <= 0).
RibbonRates<double> ribbon_rates_checked(double n, double xi, double u,
                                         double v, double omega_bar_z,
                                         double omega_z);

}  // namespace fueltraj::track
