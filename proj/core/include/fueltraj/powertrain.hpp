#pragma once

// Energy-storage and propulsion models: battery (voltage behind output
// resistance), electric motor efficiency, flywheel with CVT coupling and
// speed-dependent losses, and a fitted quadratic engine fuel map, plus the
// drive-power balance that couples them to the rear tire.
//
// Sign conventions: positive battery current discharges; positive P_b /
// P_em / P_fly deliver power toward the wheels; charging is negative.

#include <string>
#include <vector>

#include <Eigen/Core>

#include "fueltraj/config.hpp"
#include "fueltraj/errors.hpp"

namespace fueltraj::powertrain {

struct BatteryParams {
  double e_max = 5e6;     // J of storable energy
  double p_max = 25e3;    // W terminal power magnitude limit
  double v_oc_min = 210.0;  // V open-circuit at SoC = 0
  double v_oc_max = 240.0;  // V open-circuit at SoC = 1
  double r_b = 0.5;         // Ohm output resistance
  double soc_min = 0.4;
  double soc_max = 0.8;
  double mu_em = 0.85;  // electric motor efficiency

  // Charge capacity consistent with e_max over the linear voltage curve.
  double charge_max() const { return 2.0 * e_max / (v_oc_min + v_oc_max); }
  void validate() const;
};

struct FlywheelParams {
  double inertia = 0.02;  // kg m^2
  double e_max = 4e5;     // J
  double p_max = 6e4;     // W through the CVT
  double mu_cvt = 0.85;
  // Loss polynomial over the spin speed in rpm: c2 w^2 + c1 w + c0 (W).
  double loss_c2 = 2e-7;
  double loss_c1 = 0.0151;
  double loss_c0 = 4.0577;
  // Smoothing of the sqrt speed-energy relation near empty (rad/s).
  double omega_smooth_eps = 1.0;

  void validate() const;
};

// Open-circuit voltage at a state of charge.
template <typename T>
T open_circuit_voltage(const BatteryParams& b, const T& soc) {
  return b.v_oc_min + (b.v_oc_max - b.v_oc_min) * soc;
}

// Terminal battery power (W), positive when discharging.
template <typename T>
T battery_power(const BatteryParams& b, const T& soc, const T& current) {
  return (open_circuit_voltage(b, soc) - current * b.r_b) * current;
}

// Battery charge dynamics: dQ/dt = -I.
inline double charge_derivative(double current) { return -current; }

// Smooth stand-in for mu^sign(P): equals mu for strongly positive P, 1/mu
// for strongly negative P, and (mu + 1/mu)/2 at P = 0. rho (1/W) sets the
// transition sharpness.
template <typename T>
T smooth_sign_efficiency(const T& p, double mu, double rho) {
  using std::tanh;
  return 0.5 * mu * (1.0 + tanh(rho * p)) +
         (0.5 / mu) * (1.0 + tanh(-rho * p));
}

// Electric-machine output power with the smooth efficiency (NLP form).
template <typename T>
T em_output_power(const T& p_b, double mu_em, double rho) {
  return smooth_sign_efficiency(p_b, mu_em, rho) * p_b;
}

// Exact discontinuous form, used in reporting and energy audits.
double em_output_power_exact(double p_b, double mu_em);

// Flywheel spin speed from stored energy.
double flywheel_speed_rpm(const FlywheelParams& f, double e_fly);

// Loss polynomial over rpm.
double flywheel_loss_rpm(const FlywheelParams& f, double rpm);

// Exact loss at a stored energy level.
double flywheel_loss_at_energy(const FlywheelParams& f, double e_fly);

// Exact flywheel energy dynamics: dE/dt = -P_fly - P_loss(w(E)).
double flywheel_derivative(const FlywheelParams& f, double e_fly,
                           double p_fly);

// Smooth variants for the NLP: the speed-energy sqrt is regularized near
// E = 0 so its derivative stays bounded.
template <typename T>
T flywheel_speed_rpm_smooth(const FlywheelParams& f, const T& e_fly) {
  using std::sqrt;
  const double eps = f.omega_smooth_eps;
  const T omega = sqrt(2.0 * e_fly / f.inertia + eps * eps) - eps;
  return omega * (30.0 / 3.14159265358979323846);
}

template <typename T>
T flywheel_derivative_smooth(const FlywheelParams& f, const T& e_fly,
                             const T& p_fly) {
  const T rpm = flywheel_speed_rpm_smooth(f, e_fly);
  return -p_fly - (f.loss_c2 * rpm * rpm + f.loss_c1 * rpm + f.loss_c0);
}

// Drive power balance residual; feasibility requires residual >= 0 (excess
// power can always be dissipated as heat, so only the deficit is barred).
template <typename T>
T drive_power_residual(const T& p_ice, const T& p_em, const T& p_fly,
                       const T& rear_force, const T& u, double mu_cvt,
                       double rho) {
  return p_ice + p_em + smooth_sign_efficiency(p_fly, mu_cvt, rho) * p_fly -
         rear_force * u;
}

// Fuel mass per unit of flywheel/crank work (g/J).
double bsfc(double fuel_gps, double omega, double torque);

// One fuel-map grid sample: engine speed (rad/s), torque (Nm), rate (g/s).
struct EngineSample {
  double omega = 0.0;
  double torque = 0.0;
  double fuel = 0.0;
};

struct QuadraticFit {
  // Coefficients over the basis {1, w, t, w^2, w t, t^2}.
  Eigen::Matrix<double, 6, 1> coeffs = Eigen::Matrix<double, 6, 1>::Zero();
  double mean_abs_rel_error = 0.0;
  double max_abs_rel_error = 0.0;
};

// Least-squares quadratic surface through fuel-rate samples. Throws
// InputError when fewer than 6 samples are given or the design matrix is
// rank-deficient. Error statistics cover samples with fuel > 0.
QuadraticFit fit_engine_map(const std::vector<EngineSample>& samples);

// Engine model: the fitted fuel surface, the maximum-torque curve, speed
// bounds, and the source grid it was fitted from.
class EngineMap {
 public:
  // Built-in synthetic map: idle 900 rpm, redline 4500 rpm, 43 kW class
  // peak power, fitted from a 40x40 admissible grid.
  static EngineMap synthetic();
  static EngineMap from_samples(std::vector<EngineSample> samples);
  // CSV columns `omega_rpm,torque_Nm,fuel_gps`.
  static EngineMap from_grid_csv(const std::string& path);
  void save_grid_csv(const std::string& path) const;

  template <typename T>
  T fuel_rate(const T& omega, const T& torque) const {
    const auto& c = fit_.coeffs;
    return c[0] + c[1] * omega + c[2] * torque + c[3] * (omega * omega) +
           c[4] * (omega * torque) + c[5] * (torque * torque);
  }

  template <typename T>
  T torque_max(const T& omega) const {
    return tmax_[0] + tmax_[1] * omega + tmax_[2] * (omega * omega);
  }

  double omega_min() const { return omega_min_; }  // rad/s
  double omega_max() const { return omega_max_; }
  double torque_bound() const { return torque_bound_; }
  double peak_power() const;  // max of w * torque_max(w) over the range
  const QuadraticFit& fit() const { return fit_; }
  const std::vector<EngineSample>& samples() const { return samples_; }

 private:
  QuadraticFit fit_;
  Eigen::Vector3d tmax_ = Eigen::Vector3d::Zero();  // quadratic in rad/s
  double omega_min_ = 0.0, omega_max_ = 0.0, torque_bound_ = 0.0;
  std::vector<EngineSample> samples_;
};

// The analytic surface behind EngineMap::synthetic(): brake power plus a
// cubic-in-speed friction term and a quadratic-in-torque enrichment term,
// divided by an indicated efficiency times the fuel energy density.
double synthetic_fuel_rate(double omega, double torque);
double synthetic_torque_max(double omega);

struct PowertrainParams {
  BatteryParams battery;
  FlywheelParams flywheel;
  EngineMap engine = EngineMap::synthetic();
  double rho_smooth = 1e-3;  // 1/W, sharpness of the sign-efficiency blend
  void validate() const;
};

// Sections [battery], [flywheel], [engine], [powertrain]; missing keys keep
// the defaults. `[engine] map_csv = path` fits from a grid file instead of
// the synthetic surface.
PowertrainParams powertrain_from_config(const ConfigFile& cfg);

}  // namespace fueltraj::powertrain
