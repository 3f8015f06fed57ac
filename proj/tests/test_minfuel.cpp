#include "fueltraj/minfuel.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "fueltraj/config.hpp"
#include "fueltraj/errors.hpp"

using namespace fueltraj;
using namespace fueltraj::minfuel;

namespace {

std::shared_ptr<const track::TrackRibbon> straight_track(double len,
                                                         double hw = 5.0) {
  const int m = 9;
  Eigen::VectorXd s(m), zero = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd hwv = Eigen::VectorXd::Constant(m, hw);
  for (int i = 0; i < m; ++i) s[i] = len * i / (m - 1);
  return std::make_shared<const track::TrackRibbon>(s, zero, zero, zero, hwv,
                                                    false);
}

// Straight road in plan with a sinusoidal pitch profile (one full period,
// so the endpoints share the same elevation).
std::shared_ptr<const track::TrackRibbon> hill_track(double len, double amp) {
  const int m = 41;
  Eigen::VectorXd s(m), pitch(m), zero = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd hwv = Eigen::VectorXd::Constant(m, 5.0);
  for (int i = 0; i < m; ++i) {
    s[i] = len * i / (m - 1);
    pitch[i] = amp * std::sin(2.0 * M_PI * s[i] / len);
  }
  return std::make_shared<const track::TrackRibbon>(s, pitch, zero, zero, hwv,
                                                    false);
}

std::shared_ptr<const track::TrackRibbon> circle_track(double radius,
                                                       double hw = 5.0) {
  const int m = 33;
  const double len = 2.0 * M_PI * radius;
  Eigen::VectorXd s(m), yaw(m), zero = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd hwv = Eigen::VectorXd::Constant(m, hw);
  for (int i = 0; i < m; ++i) {
    s[i] = len * i / (m - 1);
    yaw[i] = s[i] / radius;
  }
  return std::make_shared<const track::TrackRibbon>(s, zero, yaw, zero, hwv,
                                                    true);
}

}  // namespace

TEST_CASE("storage layouts and device subsets") {
  const Layout ice = Layout::make(Storage::kIce);
  CHECK(ice.nx == 5);
  CHECK(ice.nu == 7);
  CHECK(ice.nc == 4);
  CHECK(ice.ix_efly == -1);
  CHECK(ice.iu_ib == -1);
  CHECK(ice.ic_pbat == -1);

  const Layout full = Layout::make(Storage::kIceBatteryFlywheel);
  CHECK(full.nx == 7);
  CHECK(full.nu == 9);
  CHECK(full.nc == 5);
  CHECK(full.ix_efly == 5);
  CHECK(full.ix_qb == 6);
  CHECK(full.iu_pfly == 7);
  CHECK(full.iu_ib == 8);
  CHECK(full.state_names().back() == "Q_b");
  CHECK(full.control_names().back() == "I_b");
  CHECK(full.control_ids().size() == 9);

  const Layout bat = Layout::make(Storage::kIceBattery);
  CHECK(bat.nx == 6);
  CHECK(bat.ix_qb == 5);
  CHECK(bat.ix_efly == -1);

  CHECK(storage_from_string("ice+fly") == Storage::kIceFlywheel);
  CHECK(to_string(Storage::kIceBattery) == "ice+bat");
  CHECK_THROWS_AS(storage_from_string("diesel"), InputError);
}

TEST_CASE("scenario parsing and validation") {
  const char* text = R"(
[scenario]
storage = ice+bat
objective = fuel
arrival_time = 180
soc_boundary = 0.55
flatten_2d = 1
speed_limit = 100, 300, 12
speed_limit = 500, 650, 9
u_max = 50
mesh_intervals = 16
nlp_tol = 1e-6
)";
  const Scenario sc = scenario_from_config(ConfigFile::parse_string(text));
  CHECK(sc.storage == Storage::kIceBattery);
  CHECK(sc.arrival_time == 180.0);
  CHECK(sc.soc_boundary == 0.55);
  CHECK(sc.flatten);
  REQUIRE(sc.speed_limits.size() == 2);
  CHECK(sc.speed_limits[1].v_max == 9.0);
  CHECK(sc.u_max == 50.0);
  CHECK(sc.mesh_intervals == 16);
  CHECK(sc.nlp_tol == 1e-6);
  CHECK(sc.rate_weights[kDelta] == 0.05);  // defaults kept

  CHECK_THROWS_AS(scenario_from_config(ConfigFile::parse_string(
                      "[scenario]\nobjective = money\n")),
                  InputError);
  CHECK_THROWS_AS(scenario_from_config(ConfigFile::parse_string(
                      "[scenario]\narrival_time = -5\n")),
                  InputError);
  CHECK_THROWS_AS(scenario_from_config(ConfigFile::parse_string(
                      "[scenario]\nspeed_limit = 300, 100, 12\n")),
                  InputError);
  // Boxes that would allow the arc-length rate to vanish are rejected.
  Scenario bad;
  bad.u_min = 0.5;
  bad.v_max = 3.0;
  bad.xi_max = 0.3;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("assembly: phases, dimensions, bounds, pins, augmentation") {
  const auto ribbon = circle_track(220.0);
  const vehicle::VehicleParams vp;
  const powertrain::PowertrainParams pp;

  Scenario sc;
  sc.storage = Storage::kIceBatteryFlywheel;
  sc.arrival_time = 90.0;

  SUBCASE("single phase, full hybrid") {
    const Problem prob = assemble(ribbon, vp, pp, sc);
    CHECK(prob.base->phases.size() == 1);
    const auto& ph = prob.base->phases[0];
    CHECK(ph.nx == 7);
    CHECK(ph.nu == 9);
    CHECK(ph.nc == 5);
    CHECK(ph.pins_start.size() == 7);
    CHECK(ph.pins_end.size() == 7);
    CHECK(prob.base->q_hi[0] == 90.0);

    Eigen::VectorXd lo, hi;
    ph.state_bounds(100.0, lo, hi);
    CHECK(lo[prob.layout.ix_n] == -5.0);
    CHECK(hi[prob.layout.ix_u] == sc.u_max);
    CHECK(hi[prob.layout.ix_qb] ==
          pp.battery.soc_max * pp.battery.charge_max());
    CHECK(ph.u_hi[prob.layout.iu_kf] == 0.0);  // front axle brakes only

    // Rate augmentation: controls become states, rates become controls.
    CHECK(prob.def->phases[0].nx == 16);
    CHECK(prob.def->phases[0].nu == 9);
    CHECK(prob.def->phases[0].nc == 5);

    // Pinned boundary state matches the configured SoC.
    bool found = false;
    for (const auto& pin : ph.pins_end) {
      if (pin.state == prob.layout.ix_qb) {
        found = true;
        CHECK(pin.value ==
              doctest::Approx(0.6 * pp.battery.charge_max()).epsilon(1e-12));
      }
    }
    CHECK(found);
  }

  SUBCASE("speed limit splits the route into linked phases") {
    sc.speed_limits = {{200.0, 400.0, 10.0}};
    const Problem prob = assemble(ribbon, vp, pp, sc);
    REQUIRE(prob.base->phases.size() == 3);
    Eigen::VectorXd lo, hi;
    prob.base->phases[1].state_bounds(300.0, lo, hi);
    CHECK(hi[prob.layout.ix_u] == 10.0);
    prob.base->phases[2].state_bounds(500.0, lo, hi);
    CHECK(hi[prob.layout.ix_u] == sc.u_max);
    // Pins only at the outer ends.
    CHECK(prob.base->phases[1].pins_start.empty());
    CHECK(prob.base->phases[1].pins_end.empty());
    CHECK(!prob.base->phases[0].pins_start.empty());
    CHECK(!prob.base->phases[2].pins_end.empty());
  }

  SUBCASE("invalid configurations are rejected") {
    Scenario bad = sc;
    bad.soc_boundary = 0.95;  // outside the battery window
    CHECK_THROWS_AS(assemble(ribbon, vp, pp, bad), InputError);
    bad = sc;
    bad.speed_limits = {{100.0, 5000.0, 10.0}};  // beyond the track
    CHECK_THROWS_AS(assemble(ribbon, vp, pp, bad), InputError);
  }

  SUBCASE("flatten produces a plan-view ribbon") {
    sc.flatten = true;
    const Problem prob = assemble(hill_track(600.0, 0.05), vp, pp, sc);
    CHECK(prob.ribbon->at(300.0).pitch == 0.0);
    CHECK(prob.ribbon->at(300.0).elevation == 0.0);
  }
}

TEST_CASE("transcribed derivatives agree with finite differences") {
  const auto ribbon = circle_track(220.0);
  const vehicle::VehicleParams vp;
  const powertrain::PowertrainParams pp;
  Scenario sc;
  sc.storage = Storage::kIceBatteryFlywheel;
  sc.arrival_time = 90.0;
  const Problem prob = assemble(ribbon, vp, pp, sc);

  const colloc::Mesh mesh = colloc::Mesh::uniform(*prob.def, 3, 3);
  const colloc::Transcription tr(prob.def, mesh);

  Eigen::VectorXd lo, hi, clo, chi;
  tr.get_bounds(lo, hi, clo, chi);
  const Eigen::VectorXd z0 = tr.initial_guess();

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 2; ++trial) {
    Eigen::VectorXd z = z0;
    for (int i = 0; i < z.size(); ++i) {
      if (hi[i] > lo[i]) {
        const double width =
            std::isfinite(hi[i] - lo[i]) ? (hi[i] - lo[i]) : 1.0;
        z[i] += 0.05 * width * uni(rng) * trial;
        z[i] = std::clamp(z[i], lo[i] + 1e-3 * width, hi[i] - 1e-3 * width);
      }
    }

    const Eigen::MatrixXd j_an = nlp::dense_jacobian(tr, z);
    const Eigen::MatrixXd j_fd = nlp::fd_jacobian(tr, z);
    const double jscale = 1.0 + j_an.cwiseAbs().maxCoeff();
    CHECK((j_an - j_fd).cwiseAbs().maxCoeff() / jscale < 1e-6);

    Eigen::VectorXd grad(tr.num_vars());
    REQUIRE(tr.eval_gradient(z, grad));
    const Eigen::VectorXd g_fd = nlp::fd_gradient(tr, z);
    const double gscale = 1.0 + grad.cwiseAbs().maxCoeff();
    CHECK((grad - g_fd).cwiseAbs().maxCoeff() / gscale < 1e-6);

    Eigen::VectorXd lambda(tr.num_constraints());
    for (int i = 0; i < lambda.size(); ++i) lambda[i] = uni(rng);
    const Eigen::MatrixXd h_an = nlp::dense_lagrangian_hessian(tr, z, 1.0,
                                                               lambda);
    const Eigen::MatrixXd h_fd = nlp::fd_lagrangian_hessian(tr, z, 1.0,
                                                            lambda);
    const double hscale = 1.0 + h_an.cwiseAbs().maxCoeff();
    CHECK((h_an - h_fd).cwiseAbs().maxCoeff() / hscale < 1e-4);
  }
}

TEST_CASE("minimum fuel on a straight road: engine-only vs hybrid") {
  const auto ribbon = straight_track(800.0);
  const vehicle::VehicleParams vp;
  const powertrain::PowertrainParams pp;

  Scenario sc;
  sc.storage = Storage::kIce;
  sc.arrival_time = 60.0;
  sc.mesh_intervals = 8;
  sc.mesh_order = 4;
  sc.mesh_tol = 1e-2;
  sc.max_refinements = 1;

  const Problem ice = assemble(ribbon, vp, pp, sc);
  const Solution a = solve(ice);
  REQUIRE(a.status == nlp::SolveStatus::kOptimal);
  CHECK(a.time_seconds <= 60.0 + 1e-6);
  CHECK(a.time_seconds > 30.0);
  CHECK(a.fuel_grams > 1.0);
  CHECK(a.fuel_grams < 80.0);

  // Transcribed path rows hold to solver tolerance (physical units; the
  // power row is scaled by 1e4 in the NLP).
  CHECK(a.table.column("r_force").cwiseAbs().maxCoeff() < 5e-6);
  CHECK(a.table.column("r_moment").cwiseAbs().maxCoeff() < 5e-6);
  CHECK(a.table.column("power_slack").minCoeff() > -5e-3);
  CHECK(a.table.column("torque_margin").maxCoeff() < 1e-4);

  const Eigen::VectorXd u = a.table.column("u");
  CHECK(u.minCoeff() >= sc.u_min - 1e-9);
  CHECK(u.maxCoeff() <= sc.u_max + 1e-9);
  CHECK(a.table.column("s_dot").minCoeff() > 0.0);
  const Eigen::VectorXd tcol = a.table.column("t");
  for (int i = 1; i < tcol.size(); ++i) CHECK(tcol[i] >= tcol[i - 1]);
  // Boundary pins hold exactly (fixed decision variables).
  CHECK(u[0] == doctest::Approx(sc.u_min).epsilon(1e-12));
  CHECK(u[u.size() - 1] == doctest::Approx(sc.u_min).epsilon(1e-12));

  // Deterministic rerun.
  const Solution a2 = solve(ice);
  CHECK(a2.fuel_grams == a.fuel_grams);
  CHECK(a2.nlp_iterations == a.nlp_iterations);

  // Full hybrid on the same task can only do as well or better.
  Scenario sch = sc;
  sch.storage = Storage::kIceBatteryFlywheel;
  const Problem hyb = assemble(ribbon, vp, pp, sch);
  const Solution b = solve(hyb);
  REQUIRE(b.status == nlp::SolveStatus::kOptimal);
  CHECK(b.time_seconds <= 60.0 + 1e-6);
  CHECK(b.fuel_grams <= a.fuel_grams + 0.1);

  // Charge sustaining: SoC pinned at both ends; flywheel empty at both ends.
  const Eigen::VectorXd soc = b.table.column("SoC");
  CHECK(std::abs(soc[0] - 0.6) < 1e-9);
  CHECK(std::abs(soc[soc.size() - 1] - 0.6) < 1e-9);
  const Eigen::VectorXd efly = b.table.column("E_fly");
  CHECK(std::abs(efly[0]) < 1e-6 * pp.flywheel.e_max);
  CHECK(std::abs(efly[efly.size() - 1]) < 1e-6 * pp.flywheel.e_max);
  CHECK(efly.minCoeff() > -1e-6 * pp.flywheel.e_max);
  CHECK(efly.maxCoeff() < pp.flywheel.e_max * (1.0 + 1e-9));
  CHECK(b.table.column("P_bat").cwiseAbs().maxCoeff() <=
        pp.battery.p_max + 1e-3);
  CHECK(soc.minCoeff() >= pp.battery.soc_min - 1e-9);
  CHECK(soc.maxCoeff() <= pp.battery.soc_max + 1e-9);
}

TEST_CASE("speed limit window binds the speed inside it") {
  const auto ribbon = straight_track(800.0);
  const vehicle::VehicleParams vp;
  const powertrain::PowertrainParams pp;

  Scenario sc;
  sc.storage = Storage::kIce;
  sc.arrival_time = 75.0;
  sc.speed_limits = {{300.0, 500.0, 8.0}};
  sc.mesh_intervals = 9;
  sc.mesh_tol = 1e-2;
  sc.max_refinements = 1;

  const Problem prob = assemble(ribbon, vp, pp, sc);
  CHECK(prob.base->phases.size() == 3);
  const Solution sol = solve(prob);
  REQUIRE(sol.status == nlp::SolveStatus::kOptimal);
  CHECK(sol.time_seconds <= 75.0 + 1e-6);

  const Eigen::VectorXd s = sol.table.column("s");
  const Eigen::VectorXd u = sol.table.column("u");
  double u_inside = 0.0, u_outside = 0.0;
  for (int i = 0; i < s.size(); ++i) {
    if (s[i] >= 300.0 && s[i] <= 500.0) {
      u_inside = std::max(u_inside, u[i]);
    } else {
      u_outside = std::max(u_outside, u[i]);
    }
  }
  CHECK(u_inside <= 8.0 + 1e-9);
  CHECK(u_outside > 8.0);  // makes up time outside the window
}

TEST_CASE("frictionless hill coast conserves mechanical energy") {
  const auto ribbon = hill_track(600.0, 0.04);
  vehicle::VehicleParams vp;
  vp.tire.mu_long = 0.0;
  vp.tire.mu_lat = 0.0;
  vp.drag_coeff = 0.0;
  vp.rolling_coeff = 0.0;
  const powertrain::PowertrainParams pp;

  Scenario sc;
  sc.storage = Storage::kIce;
  sc.arrival_time = 200.0;  // inactive: the coast is fully determined
  sc.u_min = 2.0;
  sc.u_boundary = 12.0;
  sc.mesh_intervals = 12;
  sc.mesh_order = 5;
  sc.mesh_tol = 1e-5;
  sc.max_refinements = 2;

  const Problem prob = assemble(ribbon, vp, pp, sc);
  const Solution sol = solve(prob);
  REQUIRE(sol.status == nlp::SolveStatus::kOptimal);

  const Eigen::VectorXd s = sol.table.column("s");
  const Eigen::VectorXd u = sol.table.column("u");
  const Eigen::VectorXd v = sol.table.column("v");
  const double e0 = 0.5 * vp.mass * sc.u_boundary * sc.u_boundary;
  double worst = 0.0;
  for (int i = 0; i < s.size(); ++i) {
    const double z = ribbon->at(s[i]).elevation;
    const double e = 0.5 * vp.mass * (u[i] * u[i] + v[i] * v[i]) +
                     vp.mass * vp.gravity * z;
    worst = std::max(worst, std::abs(e - e0) / e0);
  }
  CHECK(worst < 1e-6);
  // The coast actually exchanges energy: the speed must dip on the crest.
  CHECK(u.minCoeff() < 10.5);
  CHECK(u.maxCoeff() > 11.9);
}
