#pragma once

// Three-degree-of-freedom bicycle-model chassis on the road ribbon: gravity
// resolution, Magic Formula tire forces with combined slip, resultant
// force/moment assembly, normal-load balance residuals, and the
// distance-domain equations of motion.
//
// Everything is templated over the scalar type so the same algebra runs on
// plain doubles and on forward-mode AD scalars. The body frame is z-down
// (x forward, y right); pitch > 0 climbs.

#include <cmath>
#include <string>

#include "fueltraj/config.hpp"
#include "fueltraj/errors.hpp"
#include "fueltraj/track.hpp"

namespace fueltraj::vehicle {

// Pure-slip Magic Formula coefficient set with the combined-slip smoothing
// radius. The peak force is mu * load; the peak is reached at slip
// tan(pi/(2C))/B when E = 0.
struct MagicFormulaParams {
  double b_long = 12.0;
  double c_long = 1.65;
  double mu_long = 1.05;
  double e_long = 0.0;
  double b_lat = 14.0;
  double c_lat = 1.45;
  double mu_lat = 1.05;
  double e_lat = 0.0;
  double combined_eps = 0.01;  // smoothing of the slip-circle radius

  double peak_slip_long() const {
    return std::tan(3.14159265358979323846 / (2.0 * c_long)) / b_long;
  }
  double peak_slip_lat() const {
    return std::tan(3.14159265358979323846 / (2.0 * c_lat)) / b_lat;
  }
};

struct VehicleParams {
  // Masses: the running mass is the bare car plus whichever energy-storage
  // hardware is fitted.
  double mass = 1400.0;  // kg, as configured for the current run
  double mass_car = 1280.0;
  double mass_battery = 100.0;
  double mass_flywheel = 20.0;
  double inertia_x = 500.0;
  double inertia_y = 1000.0;
  double inertia_z = 1000.0;
  double a = 1.35;  // mass centre to front axle
  double b = 1.35;  // mass centre to rear axle
  double h = 0.5;   // mass centre height
  double drag_coeff = 0.3;
  double frontal_area = 1.8;
  double air_density = 1.2;
  double rolling_coeff = 0.009;
  double wheel_radius = 0.30;
  double gravity = 9.81;
  MagicFormulaParams tire;

  double total_mass(bool battery_fitted, bool flywheel_fitted) const {
    return mass_car + (battery_fitted ? mass_battery : 0.0) +
           (flywheel_fitted ? mass_flywheel : 0.0);
  }
  void validate() const;
};

// Key/value file with the symbol names of the parameter table
// ([vehicle] M_car, Ix, ..., [tire] B_long, ...). Missing keys keep the
// defaults above.
VehicleParams vehicle_from_config(const ConfigFile& cfg);

template <typename T>
struct Vec3 {
  T x, y, z;
};

// Body-frame gravity force (z-down, N) for yaw misalignment xi, road roll
// and pitch.
template <typename T>
Vec3<T> gravity_components(const T& xi, double roll, double pitch,
                           double mass, double gravity) {
  using std::cos;
  using std::sin;
  const double sp = std::sin(roll), cp = std::cos(roll);
  const double st = std::sin(pitch), ct = std::cos(pitch);
  const double mg = mass * gravity;
  Vec3<T> f;
  f.x = mg * (sin(xi) * (sp * ct) - cos(xi) * st);
  f.y = mg * (sin(xi) * st + cos(xi) * (sp * ct));
  f.z = T(mg * (cp * ct));
  return f;
}

// Lateral slip angles of the bicycle model; the front angle lives in the
// steered frame.
template <typename T>
void slip_angles(const VehicleParams& p, const T& u, const T& v, const T& wz,
                 const T& delta, T* alpha_f, T* alpha_r) {
  using std::atan;
  using std::cos;
  using std::sin;
  *alpha_r = atan((v - wz * p.b) / u);
  const T va = wz * p.a + v;
  *alpha_f = atan((cos(delta) * va - sin(delta) * u) /
                  (cos(delta) * u + sin(delta) * va));
}

// Longitudinal slip from the wheel spin speed: kappa = -(1 + R w / u_w),
// zero for a free-rolling wheel (R w = -u_w), positive when driving.
inline double longitudinal_slip(double wheel_radius, double wheel_spin,
                                double hub_speed) {
  if (!(hub_speed > 0.0)) {
    throw NonForwardProgress("longitudinal slip undefined at hub speed <= 0");
  }
  return -(1.0 + wheel_radius * wheel_spin / hub_speed);
}

// Longitudinal hub speed of the steered front wheel.
template <typename T>
T front_hub_speed(const VehicleParams& p, const T& u, const T& v, const T& wz,
                  const T& delta) {
  using std::cos;
  using std::sin;
  return cos(delta) * u + sin(delta) * (wz * p.a + v);
}

// Pure-slip Magic Formula: F = D sin(C atan(B s - E (B s - atan(B s)))) with
// D = mu * load.
template <typename T>
T magic_pure(double b, double c, double mu, double e, const T& slip,
             const T& load) {
  using std::atan;
  using std::sin;
  const T bs = b * slip;
  return mu * load * sin(c * atan(bs - e * (bs - atan(bs))));
}

// Combined-slip tire forces by the similarity method: the slip point is
// mapped onto the normalized slip circle, each pure curve is evaluated at
// the circle radius, and the force is split by direction. Positive slip
// angle produces a negative (restoring) side force. The smoothing term
// combined_eps keeps the split well-defined at zero slip.
template <typename T>
void tire_forces(const MagicFormulaParams& mf, const T& kappa, const T& alpha,
                 const T& load, T* f_x, T* f_y) {
  using std::sqrt;
  const double kp = mf.peak_slip_long();
  const double ap = mf.peak_slip_lat();
  const T sx = kappa / kp;
  const T sy = alpha / ap;
  const T rho = sqrt(sx * sx + sy * sy + mf.combined_eps * mf.combined_eps);
  *f_x = (sx / rho) *
         magic_pure(mf.b_long, mf.c_long, mf.mu_long, mf.e_long, rho * kp, load);
  *f_y = -(sy / rho) *
         magic_pure(mf.b_lat, mf.c_lat, mf.mu_lat, mf.e_lat, rho * ap, load);
}

// Resultant body-frame force/moment from the tire shear forces, normal
// loads, aerodynamic drag, and rolling resistance (which opposes forward
// motion; u > 0 is enforced by the solver bounds).
template <typename T>
void resultant_forces(const VehicleParams& p, const T& delta, const T& u,
                      const T& f_fx, const T& f_fy, const T& f_rx,
                      const T& f_ry, const T& f_fz, const T& f_rz, T* F_x,
                      T* F_y, T* M_z) {
  using std::cos;
  using std::sin;
  const T cd = cos(delta), sd = sin(delta);
  const T drag = -0.5 * p.drag_coeff * p.air_density * p.frontal_area * u * u;
  *F_x = f_fx * cd - f_fy * sd + f_rx + drag -
         p.rolling_coeff * (f_fz * cd + f_rz);
  *F_y = f_fy * cd + f_fx * sd + f_ry - p.rolling_coeff * f_fz * sd;
  *M_z = p.a * (f_fy * cd + f_fx * sd) - p.b * f_ry;
}

// Normal-load balance residuals (per unit mass / per unit pitch inertia).
// Both must vanish along feasible trajectories; they are linear in
// (F_fz, F_rz) so the loads are uniquely determined by the motion state.
//   wx, wy        car-aligned road angular rates (omega-bar)
//   wx_track      unaligned road roll rate omega_x = s_dot * Omega_x
//   wdot_x        its time derivative (s_dot^2 * dOmega_x/ds)
//   wy_bar_dot    pitch angular acceleration, zero unless explicitly modeled
template <typename T>
void load_balance_residuals(const VehicleParams& p, double roll, double pitch,
                            const T& n, const T& u, const T& v, const T& wx,
                            const T& wy, const T& wz, const T& wdot_x,
                            const T& F_x, const T& f_fz, const T& f_rz,
                            T* r_force, T* r_moment,
                            double wy_bar_dot = 0.0) {
  const double g_norm = p.gravity * std::cos(roll) * std::cos(pitch);
  *r_force = (f_fz + f_rz) / p.mass - g_norm + n * wdot_x +
             (v + p.h * wx) * wx - (u - p.h * wy) * wy;
  *r_moment = (p.a * f_fz - p.b * f_rz + p.h * F_x +
               (p.inertia_z - p.inertia_x) * wz * wx) /
                  p.inertia_y -
              wy_bar_dot;
}

// Time-domain accelerations of the chassis (the road-frame angular
// acceleration terms h*d(wy)/dt, h*d(wx)/dt are neglected).
template <typename T>
void chassis_accelerations(const VehicleParams& p, double roll, double pitch,
                           const T& n, const T& xi, const T& u, const T& v,
                           const T& wz, const T& wx, const T& wy,
                           const T& wx_track, const T& F_x, const T& F_y,
                           const T& M_z, T* u_dot, T* v_dot, T* wz_dot) {
  const Vec3<T> fg =
      gravity_components(xi, roll, pitch, /*mass=*/1.0, p.gravity);
  *u_dot = (v + p.h * wx) * wz - n * wx_track * wy + fg.x + F_x / p.mass;
  *v_dot = n * wx_track * wx - (u - p.h * wy) * wz + fg.y + F_y / p.mass;
  *wz_dot = ((p.inertia_x - p.inertia_y) * wx * wy + M_z) / p.inertia_z;
}

// Full chassis evaluation at one ribbon station: ribbon kinematics, slips,
// tire forces, resultants, accelerations (time and distance domain), and
// the load-balance residuals. This is the single composition used by the
// optimal-control dynamics, tests, and reporting.
template <typename T>
struct ChassisEval {
  track::RibbonRates<T> rates;
  T wx_track, wy_track;  // s_dot * (Omega_x, Omega_y)
  T wx, wy;              // car-aligned road rates (omega-bar)
  T wdot_x;              // time derivative of wx_track
  T alpha_f, alpha_r;
  T f_fx, f_fy, f_rx, f_ry;
  T F_x, F_y, M_z;
  T u_dot, v_dot, wz_dot;  // time domain
  T u_p, v_p, wz_p;        // distance domain
  T r_force, r_moment;
};

template <typename T>
ChassisEval<T> evaluate_chassis(const VehicleParams& p,
                                const track::RibbonPoint& rp, const T& n,
                                const T& xi, const T& u, const T& v,
                                const T& wz, const T& delta, const T& kappa_f,
                                const T& kappa_r, const T& f_fz,
                                const T& f_rz) {
  using std::cos;
  using std::sin;
  ChassisEval<T> e;
  e.rates = track::ribbon_rates(n, xi, u, v, wz, rp.omega_z);
  e.wx_track = e.rates.s_dot * rp.omega_x;
  e.wy_track = e.rates.s_dot * rp.omega_y;
  e.wx = cos(xi) * e.wx_track + sin(xi) * e.wy_track;
  e.wy = cos(xi) * e.wy_track - sin(xi) * e.wx_track;
  e.wdot_x = e.rates.s_dot * e.rates.s_dot * rp.omega_x_p;
  slip_angles(p, u, v, wz, delta, &e.alpha_f, &e.alpha_r);
  tire_forces(p.tire, kappa_f, e.alpha_f, f_fz, &e.f_fx, &e.f_fy);
  tire_forces(p.tire, kappa_r, e.alpha_r, f_rz, &e.f_rx, &e.f_ry);
  resultant_forces(p, delta, u, e.f_fx, e.f_fy, e.f_rx, e.f_ry, f_fz, f_rz,
                   &e.F_x, &e.F_y, &e.M_z);
  chassis_accelerations(p, rp.roll, rp.pitch, n, xi, u, v, wz, e.wx, e.wy,
                        e.wx_track, e.F_x, e.F_y, e.M_z, &e.u_dot, &e.v_dot,
                        &e.wz_dot);
  e.u_p = e.rates.S_f * e.u_dot;
  e.v_p = e.rates.S_f * e.v_dot;
  e.wz_p = e.rates.S_f * e.wz_dot;
  load_balance_residuals(p, rp.roll, rp.pitch, n, u, v, e.wx, e.wy, wz,
                         e.wdot_x, e.F_x, f_fz, f_rz, &e.r_force, &e.r_moment);
  return e;
}

// Checked double-precision wrapper: throws NonForwardProgress when the body
// does not advance along the spine.
ChassisEval<double> chassis_derivatives(const VehicleParams& p,
                                        const track::RibbonPoint& rp, double n,
                                        double xi, double u, double v,
                                        double wz, double delta,
                                        double kappa_f, double kappa_r,
                                        double f_fz, double f_rz);

}  // namespace fueltraj::vehicle
