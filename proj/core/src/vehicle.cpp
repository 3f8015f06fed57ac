#include "fueltraj/vehicle.hpp"

namespace fueltraj::vehicle {

void VehicleParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) {
      throw InputError(std::string("vehicle: ") + name + " must be positive");
    }
  };
  positive(mass, "M");
  positive(mass_car, "M_car");
  positive(inertia_x, "Ix");
  positive(inertia_y, "Iy");
  positive(inertia_z, "Iz");
  positive(a, "a");
  positive(b, "b");
  positive(h, "h");
  positive(frontal_area, "A");
  positive(air_density, "rho");
  positive(wheel_radius, "Rw");
  positive(gravity, "g");
  if (mass_battery < 0.0 || mass_flywheel < 0.0 || drag_coeff < 0.0 ||
      rolling_coeff < 0.0) {
    throw InputError("vehicle: masses and drag/rolling coefficients must be "
                     "non-negative");
  }
  positive(tire.b_long, "tire B_long");
  positive(tire.c_long, "tire C_long");
  positive(tire.b_lat, "tire B_lat");
  positive(tire.c_lat, "tire C_lat");
  positive(tire.combined_eps, "tire eps_combined");
  // Zero friction is a legitimate (coasting-study) configuration.
  if (tire.mu_long < 0.0 || tire.mu_lat < 0.0) {
    throw InputError("vehicle: tire friction coefficients must be >= 0");
  }
}

VehicleParams vehicle_from_config(const ConfigFile& cfg) {
  VehicleParams p;
  const std::string v = "vehicle";
  p.mass_car = cfg.get_double(v, "M_car", p.mass_car);
  p.mass_battery = cfg.get_double(v, "M_bat", p.mass_battery);
  p.mass_flywheel = cfg.get_double(v, "M_fly", p.mass_flywheel);
  p.mass = cfg.get_double(v, "M", p.total_mass(true, true));
  p.inertia_x = cfg.get_double(v, "Ix", p.inertia_x);
  p.inertia_y = cfg.get_double(v, "Iy", p.inertia_y);
  p.inertia_z = cfg.get_double(v, "Iz", p.inertia_z);
  p.a = cfg.get_double(v, "a", p.a);
  p.b = cfg.get_double(v, "b", p.b);
  p.h = cfg.get_double(v, "h", p.h);
  p.drag_coeff = cfg.get_double(v, "Cd", p.drag_coeff);
  p.frontal_area = cfg.get_double(v, "A", p.frontal_area);
  p.air_density = cfg.get_double(v, "rho", p.air_density);
  p.rolling_coeff = cfg.get_double(v, "Cr", p.rolling_coeff);
  p.wheel_radius = cfg.get_double(v, "Rw", p.wheel_radius);
  p.gravity = cfg.get_double(v, "g", p.gravity);
  const std::string t = "tire";
  p.tire.b_long = cfg.get_double(t, "B_long", p.tire.b_long);
  p.tire.c_long = cfg.get_double(t, "C_long", p.tire.c_long);
  p.tire.mu_long = cfg.get_double(t, "mu_long", p.tire.mu_long);
  p.tire.e_long = cfg.get_double(t, "E_long", p.tire.e_long);
  p.tire.b_lat = cfg.get_double(t, "B_lat", p.tire.b_lat);
  p.tire.c_lat = cfg.get_double(t, "C_lat", p.tire.c_lat);
  p.tire.mu_lat = cfg.get_double(t, "mu_lat", p.tire.mu_lat);
  p.tire.e_lat = cfg.get_double(t, "E_lat", p.tire.e_lat);
  p.tire.combined_eps =
      cfg.get_double(t, "eps_combined", p.tire.combined_eps);
  p.validate();
  return p;
}

ChassisEval<double> chassis_derivatives(const VehicleParams& p,
                                        const track::RibbonPoint& rp, double n,
                                        double xi, double u, double v,
                                        double wz, double delta,
                                        double kappa_f, double kappa_r,
                                        double f_fz, double f_rz) {
  track::ribbon_rates_checked(n, xi, u, v, wz, rp.omega_z);
  return evaluate_chassis<double>(p, rp, n, xi, u, v, wz, delta, kappa_f,
                                  kappa_r, f_fz, f_rz);
}

}  // namespace fueltraj::vehicle
