#include "fueltraj/powertrain.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "fueltraj/config.hpp"

using namespace fueltraj;
using namespace fueltraj::powertrain;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("battery terminal power: open-circuit curve and resistor drop") {
  BatteryParams b;

  CHECK(battery_power<double>(b, 0.5, 0.0) == doctest::Approx(0.0).scale(1));

  // SoC 0.6: V_OC = 210 + 30 * 0.6 = 228 V. Discharging 10 A delivers
  // (228 - 5) * 10 = 2230 W; charging 10 A absorbs (228 + 5) * 10 = 2330 W,
  // more than the discharge delivers, the difference burning in R_b.
  CHECK(battery_power<double>(b, 0.6, 10.0) ==
        doctest::Approx(2230.0).epsilon(1e-12));
  CHECK(battery_power<double>(b, 0.6, -10.0) ==
        doctest::Approx(-2330.0).epsilon(1e-12));
  CHECK(open_circuit_voltage<double>(b, 0.6) ==
        doctest::Approx(228.0).epsilon(1e-12));

  // Capacity consistent with the stored energy over the voltage ramp.
  CHECK(b.charge_max() == doctest::Approx(1e7 / 450.0).epsilon(1e-12));

  // Charge dynamics: positive (discharge) current drains charge; a constant
  // 22.2222 A held for 1000 s empties the full capacity.
  CHECK(charge_derivative(5.0) == -5.0);
  const double i_drain = b.charge_max() / 1000.0;
  const double delta_soc = charge_derivative(i_drain) * 1000.0 / b.charge_max();
  CHECK(delta_soc == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("battery round trip loses exactly the resistor energy") {
  BatteryParams b;
  const double current = 20.0, duration = 100.0;
  // Discharge at +I for t, recharge at -I for t: the open-circuit part of
  // the energy cancels (the SoC path is retraced) and the net loss is
  // 2 I^2 R t.
  double q = 0.6 * b.charge_max();
  double net_energy = 0.0;  // integral of terminal power
  const int steps = 20000;
  const double h = duration / steps;
  auto step = [&](double i_b) {
    // RK4 on (q, net_energy); dq/dt is constant so only the energy
    // integrand varies.
    auto p_of = [&](double qq) {
      return battery_power<double>(b, qq / b.charge_max(), i_b);
    };
    const double k1 = p_of(q);
    const double k2 = p_of(q - 0.5 * h * i_b);
    const double k3 = k2;
    const double k4 = p_of(q - h * i_b);
    net_energy += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    q -= h * i_b;
  };
  for (int i = 0; i < steps; ++i) step(current);
  const double q_low = q;
  for (int i = 0; i < steps; ++i) step(-current);
  CHECK(q == doctest::Approx(0.6 * b.charge_max()).epsilon(1e-12));
  CHECK(q_low < q);
  const double expected_loss = 2.0 * current * current * b.r_b * duration;
  CHECK(-net_energy == doctest::Approx(expected_loss).epsilon(1e-9));
}

TEST_CASE("electric machine efficiency: exact and smooth forms") {
  // Exact discontinuous form.
  CHECK(em_output_power_exact(0.0, 0.85) == 0.0);
  CHECK(em_output_power_exact(1000.0, 0.85) == doctest::Approx(850.0));
  CHECK(em_output_power_exact(-1000.0, 0.85) ==
        doctest::Approx(-1000.0 / 0.85).epsilon(1e-12));

  // Smooth blend: midpoint at zero, saturation at large argument.
  const double mu = 0.85, rho = 1e-3;
  CHECK(smooth_sign_efficiency<double>(0.0, mu, rho) ==
        doctest::Approx((mu + 1.0 / mu) / 2.0).epsilon(1e-14));
  CHECK(smooth_sign_efficiency<double>(10.0 / rho, mu, rho) ==
        doctest::Approx(mu).epsilon(1e-8));
  CHECK(smooth_sign_efficiency<double>(-10.0 / rho, mu, rho) ==
        doctest::Approx(1.0 / mu).epsilon(1e-8));
  // Spot value at rho P = 2 (hand arithmetic through tanh(2)).
  CHECK(smooth_sign_efficiency<double>(2000.0, mu, rho) ==
        doctest::Approx(0.85587196).epsilon(1e-7));

  // Within 1e-3 of the exact factor whenever |rho P| > 4.
  for (double rp : {4.1, 5.0, 7.0, 12.0}) {
    const double hi = smooth_sign_efficiency<double>(rp / rho, mu, rho);
    const double lo = smooth_sign_efficiency<double>(-rp / rho, mu, rho);
    CHECK(std::abs(hi - mu) < 1e-3);
    CHECK(std::abs(lo - 1.0 / mu) < 1e-3);
  }

  // Smooth power transfer reduces to the exact one away from zero.
  CHECK(em_output_power<double>(20000.0, mu, rho) ==
        doctest::Approx(em_output_power_exact(20000.0, mu)).epsilon(1e-6));
}

TEST_CASE("flywheel: speed map, loss polynomial, dynamics") {
  FlywheelParams f;

  // Loss polynomial oracles over rpm.
  CHECK(flywheel_loss_rpm(f, 0.0) == doctest::Approx(4.0577).epsilon(1e-12));
  CHECK(flywheel_loss_rpm(f, 1e4) ==
        doctest::Approx(175.0577).epsilon(1e-12));

  // Full charge: omega = sqrt(2 E / J) = sqrt(4e7) rad/s ~ 60396 rpm,
  // losing about 1.65 kW.
  const double rpm_full = flywheel_speed_rpm(f, f.e_max);
  CHECK(rpm_full ==
        doctest::Approx(std::sqrt(4e7) * 30.0 / 3.14159265358979323846)
            .epsilon(1e-12));
  CHECK(rpm_full == doctest::Approx(60396.0).epsilon(1e-4));
  CHECK(flywheel_loss_at_energy(f, f.e_max) ==
        doctest::Approx(1645.5).epsilon(1e-3));

  // Dynamics: a resting flywheel still pays the constant loss term; a
  // charging command raises the energy by the commanded power minus loss.
  CHECK(flywheel_derivative(f, 0.0, 0.0) ==
        doctest::Approx(-4.0577).epsilon(1e-12));
  const double rpm_mid = flywheel_speed_rpm(f, 2e5);
  const double loss_mid = f.loss_c2 * rpm_mid * rpm_mid +
                          f.loss_c1 * rpm_mid + f.loss_c0;
  CHECK(flywheel_derivative(f, 2e5, -1e4) ==
        doctest::Approx(1e4 - loss_mid).epsilon(1e-12));

  // Self-discharge is strictly negative at every charge level.
  for (double e : {0.0, 1e3, 1e5, 4e5}) {
    CHECK(flywheel_derivative(f, e, 0.0) < 0.0);
  }

  // Smooth speed map: exact at zero energy, sub-watt loss error at charge.
  CHECK(flywheel_speed_rpm_smooth<double>(f, 0.0) ==
        doctest::Approx(0.0).scale(1));
  for (double e : {1e4, 1e5, 2e5, 4e5}) {
    const double exact = flywheel_derivative(f, e, 500.0);
    const double smooth = flywheel_derivative_smooth<double>(f, e, 500.0);
    CHECK(std::abs(smooth - exact) < 0.5);
  }
}

TEST_CASE("drive power balance residual") {
  const double mu_cvt = 0.85, rho = 1e-3;

  // Trivial balances.
  CHECK(drive_power_residual<double>(0, 0, 0, 0, 0, mu_cvt, rho) ==
        doctest::Approx(0.0).scale(1));
  CHECK(drive_power_residual<double>(30e3, 0, 0, 1000.0, 30.0, mu_cvt, rho) ==
        doctest::Approx(0.0).scale(1e-6));

  // Braking regeneration: 40 kW arrives at the wheels; the CVT can push at
  // most 0.85 * 40 = 34 kW into the flywheel. At exactly that charge rate
  // the balance is tight; a weaker charge leaves slack (heat).
  const double wheel_force = -4000.0, u = 10.0;  // F u = -40 kW
  CHECK(drive_power_residual<double>(0, 0, -34e3, wheel_force, u, mu_cvt,
                                     rho) == doctest::Approx(0.0).scale(1));
  CHECK(drive_power_residual<double>(0, 0, -20e3, wheel_force, u, mu_cvt,
                                     rho) > 1e4);
  // Over-ambitious charge rate is infeasible (negative residual).
  CHECK(drive_power_residual<double>(0, 0, -38e3, wheel_force, u, mu_cvt,
                                     rho) < 0.0);
}

TEST_CASE("quadratic map fitting: recovery, degeneracy, statistics") {
  // Samples from an exactly quadratic surface are reproduced exactly.
  const double c0 = 0.1, c1 = 0.01, c2 = 0.02, c3 = 1e-4, c4 = 2e-4,
               c5 = 3e-4;
  std::vector<EngineSample> grid;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      const double w = 100.0 + 50.0 * i, t = 10.0 + 15.0 * j;
      grid.push_back(
          {w, t, c0 + c1 * w + c2 * t + c3 * w * w + c4 * w * t + c5 * t * t});
    }
  }
  const QuadraticFit fit = fit_engine_map(grid);
  CHECK(fit.coeffs[0] == doctest::Approx(c0).epsilon(1e-8));
  CHECK(fit.coeffs[1] == doctest::Approx(c1).epsilon(1e-8));
  CHECK(fit.coeffs[2] == doctest::Approx(c2).epsilon(1e-8));
  CHECK(fit.coeffs[3] == doctest::Approx(c3).epsilon(1e-8));
  CHECK(fit.coeffs[4] == doctest::Approx(c4).epsilon(1e-8));
  CHECK(fit.coeffs[5] == doctest::Approx(c5).epsilon(1e-8));
  CHECK(fit.mean_abs_rel_error < 1e-10);

  // A constant surface keeps only the constant coefficient.
  for (auto& s : grid) s.fuel = 2.5;
  const QuadraticFit flat = fit_engine_map(grid);
  CHECK(flat.coeffs[0] == doctest::Approx(2.5).epsilon(1e-10));
  for (int k = 1; k < 6; ++k) {
    CHECK(flat.coeffs[k] == doctest::Approx(0.0).scale(1e-6));
  }

  // Degenerate grids are rejected.
  std::vector<EngineSample> line;
  for (int i = 0; i < 12; ++i) line.push_back({200.0, 5.0 * i, 1.0 + i});
  CHECK_THROWS_AS(fit_engine_map(line), InputError);
  CHECK_THROWS_AS(fit_engine_map({{1, 1, 1}, {2, 2, 2}}), InputError);
}

TEST_CASE("synthetic engine map: oracles, fit quality, optimum line") {
  // Generator spot value: (300 * 75 + 300 * (6 + 3.0 + 2.25) + 0.30 * 75^2)
  // / 18480 = 27562.5 / 18480 g/s.
  CHECK(synthetic_fuel_rate(300.0, 75.0) ==
        doctest::Approx(27562.5 / 18480.0).epsilon(1e-12));
  CHECK(synthetic_torque_max(330.0) == doctest::Approx(104.0).epsilon(1e-12));

  const EngineMap map = EngineMap::synthetic();
  CHECK(map.omega_min() == doctest::Approx(94.2477796).epsilon(1e-12));
  CHECK(map.omega_max() == doctest::Approx(471.2388980).epsilon(1e-12));

  // The quadratic fit tracks the generator closely on average; the paper's
  // regime for such fits is a few percent.
  CHECK(map.fit().mean_abs_rel_error < 0.005);
  CHECK(map.fit().mean_abs_rel_error > 1e-5);  // not an exact quadratic
  CHECK(map.fit().max_abs_rel_error < 0.10);

  // Peak power within 2% of the 43 kW target (attained at redline).
  CHECK(map.peak_power() == doctest::Approx(43000.0).epsilon(0.02));
  CHECK(map.peak_power() == doctest::Approx(43086.6).epsilon(1e-4));

  // Peak brake efficiency of the generator surface near 34.7%.
  double eff = 0.0;
  for (const auto& s : map.samples()) {
    if (s.torque > 0.0) {
      eff = std::max(eff, s.omega * s.torque / (s.fuel * 44000.0));
    }
  }
  CHECK(eff == doctest::Approx(0.3469).epsilon(2e-3));

  // Torque ceiling is the analytic parabola.
  CHECK(map.torque_max(471.2388980) ==
        doctest::Approx(104.0 - 6.3e-4 * std::pow(471.2388980 - 330.0, 2))
            .epsilon(1e-12));

  // The minimum-consumption line: on each grid speed slice, the fitted
  // surface's specific-consumption argmin lands within one grid cell of the
  // generator's.
  const int kN = 40;
  for (int i = 0; i < kN; ++i) {
    const double w = 94.2477796 + (471.2388980 - 94.2477796) * i / (kN - 1);
    int best_raw = -1, best_fit = -1;
    double raw_min = 1e30, fit_min = 1e30;
    for (int j = 1; j < kN; ++j) {
      const double t = 104.0 * j / (kN - 1);
      if (t > synthetic_torque_max(w)) break;
      const double raw = synthetic_fuel_rate(w, t) / (w * t);
      const double fitted = map.fuel_rate(w, t) / (w * t);
      if (raw < raw_min) {
        raw_min = raw;
        best_raw = j;
      }
      if (fitted < fit_min) {
        fit_min = fitted;
        best_fit = j;
      }
    }
    CHECK(best_raw >= 0);
    CHECK(std::abs(best_raw - best_fit) <= 1);
  }
}

TEST_CASE("specific fuel consumption helper") {
  // 2 g/s at 30 kW of brake power.
  CHECK(bsfc(2.0, 300.0, 100.0) == doctest::Approx(2.0 / 3e4).epsilon(1e-12));
  // Doubling power at equal flow halves the figure.
  CHECK(bsfc(2.0, 600.0, 100.0) ==
        doctest::Approx(0.5 * bsfc(2.0, 300.0, 100.0)).epsilon(1e-12));
  CHECK_THROWS_AS(bsfc(1.0, 0.0, 50.0), std::invalid_argument);
  CHECK_THROWS_AS(bsfc(1.0, 300.0, -5.0), std::invalid_argument);
}

TEST_CASE("engine map grid CSV round-trip") {
  const EngineMap map = EngineMap::synthetic();
  const std::string path = temp_path("fueltraj_engine_map.csv");
  map.save_grid_csv(path);
  const EngineMap loaded = EngineMap::from_grid_csv(path);
  for (int k = 0; k < 6; ++k) {
    CHECK(loaded.fit().coeffs[k] ==
          doctest::Approx(map.fit().coeffs[k]).epsilon(1e-10));
  }
  CHECK(loaded.omega_min() == doctest::Approx(map.omega_min()).epsilon(1e-12));
  CHECK(loaded.omega_max() == doctest::Approx(map.omega_max()).epsilon(1e-12));
  // The torque ceiling of a loaded grid is a hull estimate: close to the
  // analytic curve but quantized by the grid pitch.
  for (double w : {150.0, 250.0, 350.0, 450.0}) {
    CHECK(std::abs(loaded.torque_max(w) - map.torque_max(w)) < 3.0);
  }
  CHECK(loaded.peak_power() == doctest::Approx(map.peak_power()).epsilon(0.05));
  std::filesystem::remove(path);

  // Malformed grids are rejected.
  CHECK_THROWS_AS(EngineMap::from_grid_csv("/nonexistent/map.csv"),
                  InputError);
}

TEST_CASE("powertrain config: symbol names, defaults, rejection of bad input") {
  const char* text = R"(
[battery]
Eb_max = 4e6
Pb_max = 20e3
Voc_min = 200
Voc_max = 250
Rb = 0.4
SoC_min = 0.3
SoC_max = 0.9
mu_em = 0.9

[flywheel]
Jf = 0.025
Efly_max = 3e5
Pfly_max = 5e4
mu_cvt = 0.8

[powertrain]
rho = 2e-3
)";
  const PowertrainParams p =
      powertrain_from_config(ConfigFile::parse_string(text, "test"));
  CHECK(p.battery.e_max == 4e6);
  CHECK(p.battery.v_oc_max == 250.0);
  CHECK(p.battery.soc_min == 0.3);
  CHECK(p.battery.mu_em == 0.9);
  CHECK(p.flywheel.inertia == 0.025);
  CHECK(p.flywheel.mu_cvt == 0.8);
  CHECK(p.flywheel.loss_c0 == 4.0577);  // default kept
  CHECK(p.rho_smooth == 2e-3);
  CHECK(p.engine.peak_power() == doctest::Approx(43086.6).epsilon(1e-3));

  const PowertrainParams d =
      powertrain_from_config(ConfigFile::parse_string(""));
  CHECK(d.battery.e_max == 5e6);
  CHECK(d.flywheel.e_max == 4e5);

  CHECK_THROWS_AS(powertrain_from_config(ConfigFile::parse_string(
                      "[battery]\nVoc_min = 250\nVoc_max = 210\n")),
                  InputError);
  CHECK_THROWS_AS(powertrain_from_config(ConfigFile::parse_string(
                      "[powertrain]\nrho = 0\n")),
                  InputError);
}
