#include "fueltraj/powertrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <Eigen/Dense>

namespace fueltraj::powertrain {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRpmPerRadS = 30.0 / kPi;

void require(bool ok, const std::string& what) {
  if (!ok) throw InputError(what);
}

// Synthetic map constants: 900-4500 rpm speed range, Willans-style
// indicated efficiency 0.42 against a 44 kJ/g fuel.
constexpr double kIdleRadS = 94.2477796;
constexpr double kRedlineRadS = 471.2388980;
constexpr double kFriction0 = 6.0;     // Nm
constexpr double kFriction1 = 0.010;   // Nm s/rad
constexpr double kFriction2 = 2.5e-5;  // Nm s^2/rad^2
constexpr double kEnrich = 0.30;       // W/Nm^2
constexpr double kFuelEnergy = 0.42 * 44000.0;  // J/g of brake-usable energy

}  // namespace

void BatteryParams::validate() const {
  require(v_oc_max > v_oc_min && v_oc_min > 0.0,
          "battery: need V_OC_max > V_OC_min > 0");
  require(e_max > 0.0 && p_max > 0.0 && r_b >= 0.0,
          "battery: energy/power/resistance must be positive");
  require(0.0 <= soc_min && soc_min < soc_max && soc_max <= 1.0,
          "battery: need 0 <= SoC_min < SoC_max <= 1");
  require(mu_em > 0.0 && mu_em <= 1.0, "battery: motor efficiency in (0,1]");
}

void FlywheelParams::validate() const {
  require(inertia > 0.0 && e_max > 0.0 && p_max > 0.0,
          "flywheel: inertia/energy/power must be positive");
  require(mu_cvt > 0.0 && mu_cvt <= 1.0, "flywheel: CVT efficiency in (0,1]");
  require(loss_c2 >= 0.0 && loss_c1 >= 0.0 && loss_c0 >= 0.0,
          "flywheel: loss polynomial must be non-negative");
  require(omega_smooth_eps > 0.0, "flywheel: speed smoothing must be positive");
}

void PowertrainParams::validate() const {
  battery.validate();
  flywheel.validate();
  require(rho_smooth > 0.0, "powertrain: rho_smooth must be positive");
}

double em_output_power_exact(double p_b, double mu_em) {
  if (p_b > 0.0) return mu_em * p_b;
  if (p_b < 0.0) return p_b / mu_em;
  return 0.0;
}

double flywheel_speed_rpm(const FlywheelParams& f, double e_fly) {
  return std::sqrt(std::max(0.0, 2.0 * e_fly / f.inertia)) * kRpmPerRadS;
}

double flywheel_loss_rpm(const FlywheelParams& f, double rpm) {
  return f.loss_c2 * rpm * rpm + f.loss_c1 * rpm + f.loss_c0;
}

double flywheel_loss_at_energy(const FlywheelParams& f, double e_fly) {
  return flywheel_loss_rpm(f, flywheel_speed_rpm(f, e_fly));
}

double flywheel_derivative(const FlywheelParams& f, double e_fly,
                           double p_fly) {
  return -p_fly - flywheel_loss_at_energy(f, e_fly);
}

double bsfc(double fuel_gps, double omega, double torque) {
  const double power = omega * torque;
  if (!(power > 0.0)) {
    throw std::invalid_argument("bsfc undefined at non-positive brake power");
  }
  return fuel_gps / power;
}

QuadraticFit fit_engine_map(const std::vector<EngineSample>& samples) {
  require(samples.size() >= 6, "engine map: need at least 6 samples");
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd design(n, 6);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<size_t>(i)];
    design.row(i) << 1.0, s.omega, s.torque, s.omega * s.omega,
        s.omega * s.torque, s.torque * s.torque;
    rhs[i] = s.fuel;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  require(qr.rank() == 6, "engine map: sample grid is rank-deficient");
  QuadraticFit fit;
  fit.coeffs = qr.solve(rhs);
  double sum = 0.0;
  int counted = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rhs[i] <= 0.0) continue;
    const double rel = std::abs(design.row(i).dot(fit.coeffs) - rhs[i]) / rhs[i];
    sum += rel;
    fit.max_abs_rel_error = std::max(fit.max_abs_rel_error, rel);
    ++counted;
  }
  if (counted > 0) fit.mean_abs_rel_error = sum / counted;
  return fit;
}

double synthetic_fuel_rate(double omega, double torque) {
  const double friction =
      omega * (kFriction0 + kFriction1 * omega + kFriction2 * omega * omega);
  return (omega * torque + friction + kEnrich * torque * torque) / kFuelEnergy;
}

double synthetic_torque_max(double omega) {
  return 104.0 - 6.3e-4 * (omega - 330.0) * (omega - 330.0);
}

EngineMap EngineMap::synthetic() {
  std::vector<EngineSample> samples;
  constexpr int kN = 40;
  for (int j = 0; j < kN; ++j) {
    const double torque = 104.0 * j / (kN - 1);
    for (int i = 0; i < kN; ++i) {
      const double omega =
          kIdleRadS + (kRedlineRadS - kIdleRadS) * i / (kN - 1);
      if (torque > synthetic_torque_max(omega)) continue;
      samples.push_back({omega, torque, synthetic_fuel_rate(omega, torque)});
    }
  }
  EngineMap map = from_samples(std::move(samples));
  // The generator's torque ceiling is known analytically; store it exactly
  // instead of the hull estimate.
  map.tmax_ = Eigen::Vector3d(104.0 - 6.3e-4 * 330.0 * 330.0,
                              2.0 * 6.3e-4 * 330.0, -6.3e-4);
  map.omega_min_ = kIdleRadS;
  map.omega_max_ = kRedlineRadS;
  map.torque_bound_ = 104.0;
  return map;
}

EngineMap EngineMap::from_samples(std::vector<EngineSample> samples) {
  EngineMap map;
  map.fit_ = fit_engine_map(samples);
  map.samples_ = std::move(samples);
  double omega_lo = map.samples_.front().omega, omega_hi = omega_lo;
  double torque_hi = 0.0;
  // Torque ceiling: quadratic least squares through the per-speed maxima.
  std::map<double, double> hull;
  for (const auto& s : map.samples_) {
    omega_lo = std::min(omega_lo, s.omega);
    omega_hi = std::max(omega_hi, s.omega);
    torque_hi = std::max(torque_hi, s.torque);
    auto [it, inserted] = hull.try_emplace(s.omega, s.torque);
    if (!inserted) it->second = std::max(it->second, s.torque);
  }
  require(hull.size() >= 3, "engine map: need at least 3 distinct speeds");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(hull.size()), 3);
  Eigen::VectorXd rhs(design.rows());
  Eigen::Index r = 0;
  for (const auto& [w, t] : hull) {
    design.row(r) << 1.0, w, w * w;
    rhs[r] = t;
    ++r;
  }
  map.tmax_ = design.colPivHouseholderQr().solve(rhs);
  map.omega_min_ = omega_lo;
  map.omega_max_ = omega_hi;
  map.torque_bound_ = torque_hi;
  return map;
}

double EngineMap::peak_power() const {
  double best = 0.0;
  constexpr int kSweep = 2000;
  for (int i = 0; i <= kSweep; ++i) {
    const double w = omega_min_ + (omega_max_ - omega_min_) * i / kSweep;
    best = std::max(best, w * torque_max(w));
  }
  return best;
}

void EngineMap::save_grid_csv(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), "engine map: cannot open for writing: " + path);
  out << "omega_rpm,torque_Nm,fuel_gps\n";
  char buf[160];
  for (const auto& s : samples_) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n",
                  s.omega * kRpmPerRadS, s.torque, s.fuel);
    out << buf;
  }
  require(out.good(), "engine map: write failed: " + path);
}

EngineMap EngineMap::from_grid_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "engine map: cannot open: " + path);
  std::string line;
  bool saw_header = false;
  std::vector<EngineSample> samples;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = [&] { return path + ":" + std::to_string(lineno); };
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      std::string squashed;
      for (char c : line) {
        if (!std::isspace(static_cast<unsigned char>(c))) squashed += c;
      }
      require(squashed == "omega_rpm,torque_Nm,fuel_gps",
              where() + ": expected header omega_rpm,torque_Nm,fuel_gps");
      saw_header = true;
      continue;
    }
    std::istringstream cells(line);
    std::string cell;
    double row[3];
    for (int c = 0; c < 3; ++c) {
      require(static_cast<bool>(std::getline(cells, cell, ',')),
              where() + ": expected 3 columns");
      try {
        size_t used = 0;
        row[c] = std::stod(cell, &used);
        while (used < cell.size() &&
               std::isspace(static_cast<unsigned char>(cell[used]))) {
          ++used;
        }
        require(used == cell.size(), where() + ": bad number '" + cell + "'");
      } catch (const InputError&) {
        throw;
      } catch (const std::exception&) {
        throw InputError(where() + ": bad number '" + cell + "'");
      }
    }
    require(!std::getline(cells, cell, ','), where() + ": expected 3 columns");
    require(row[2] >= 0.0, where() + ": fuel rate must be non-negative");
    samples.push_back({row[0] / kRpmPerRadS, row[1], row[2]});
  }
  require(saw_header, path + ": missing header row");
  return from_samples(std::move(samples));
}

PowertrainParams powertrain_from_config(const ConfigFile& cfg) {
  PowertrainParams p;
  auto& b = p.battery;
  b.e_max = cfg.get_double("battery", "Eb_max", b.e_max);
  b.p_max = cfg.get_double("battery", "Pb_max", b.p_max);
  b.v_oc_min = cfg.get_double("battery", "Voc_min", b.v_oc_min);
  b.v_oc_max = cfg.get_double("battery", "Voc_max", b.v_oc_max);
  b.r_b = cfg.get_double("battery", "Rb", b.r_b);
  b.soc_min = cfg.get_double("battery", "SoC_min", b.soc_min);
  b.soc_max = cfg.get_double("battery", "SoC_max", b.soc_max);
  b.mu_em = cfg.get_double("battery", "mu_em", b.mu_em);
  auto& f = p.flywheel;
  f.inertia = cfg.get_double("flywheel", "Jf", f.inertia);
  f.e_max = cfg.get_double("flywheel", "Efly_max", f.e_max);
  f.p_max = cfg.get_double("flywheel", "Pfly_max", f.p_max);
  f.mu_cvt = cfg.get_double("flywheel", "mu_cvt", f.mu_cvt);
  f.loss_c2 = cfg.get_double("flywheel", "loss_c2", f.loss_c2);
  f.loss_c1 = cfg.get_double("flywheel", "loss_c1", f.loss_c1);
  f.loss_c0 = cfg.get_double("flywheel", "loss_c0", f.loss_c0);
  f.omega_smooth_eps =
      cfg.get_double("flywheel", "omega_eps", f.omega_smooth_eps);
  const std::string map_csv = cfg.get_string("engine", "map_csv", "");
  if (!map_csv.empty()) p.engine = EngineMap::from_grid_csv(map_csv);
  p.rho_smooth = cfg.get_double("powertrain", "rho", p.rho_smooth);
  p.validate();
  return p;
}

}  // namespace fueltraj::powertrain
