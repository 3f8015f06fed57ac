#include "fueltraj/minfuel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "fueltraj/errors.hpp"

namespace fueltraj::minfuel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct PointCtx final : ocp::PointData {
  track::RibbonPoint rp;
};

// Immutable evaluation context shared by every phase of one problem.
struct EvalCtx {
  vehicle::VehicleParams vp;
  powertrain::BatteryParams bat;
  powertrain::FlywheelParams fly;
  powertrain::EngineMap engine;
  double rho = 1e-3;
  double q_max = 0.0;
  Layout lay;
  bool min_time = false;
};

struct Evaluator {
  std::shared_ptr<const EvalCtx> ctx;

  template <typename T>
  void operator()(const ocp::PointData* data, double /*s*/, const T* x,
                  const T* u, T* f, T* c, T* q, T* g, T* dt_ds) const {
    const EvalCtx& cx = *ctx;
    const Layout& L = cx.lay;
    const track::RibbonPoint& rp = static_cast<const PointCtx*>(data)->rp;

    const auto ev = vehicle::evaluate_chassis(
        cx.vp, rp, x[L.ix_n], x[L.ix_xi], x[L.ix_u], x[L.ix_v], x[L.ix_wz],
        u[L.iu_delta], u[L.iu_kf], u[L.iu_kr], u[L.iu_ffz], u[L.iu_frz]);
    const T& s_f = ev.rates.S_f;

    f[L.ix_n] = ev.rates.n_prime;
    f[L.ix_xi] = ev.rates.xi_prime;
    f[L.ix_u] = ev.u_p;
    f[L.ix_v] = ev.v_p;
    f[L.ix_wz] = ev.wz_p;

    const T p_ice = u[L.iu_we] * u[L.iu_te];
    T p_em(0.0);
    if (L.ix_qb >= 0) {
      const T soc = x[L.ix_qb] * (1.0 / cx.q_max);
      const T p_b = powertrain::battery_power(cx.bat, soc, u[L.iu_ib]);
      p_em = powertrain::em_output_power(p_b, cx.bat.mu_em, cx.rho);
      f[L.ix_qb] = s_f * (-u[L.iu_ib]);
      c[L.ic_pbat] = p_b;
    }
    T p_fly(0.0);
    if (L.ix_efly >= 0) {
      p_fly = u[L.iu_pfly];
      f[L.ix_efly] = s_f * powertrain::flywheel_derivative_smooth(
                               cx.fly, x[L.ix_efly], p_fly);
    }

    c[L.ic_force] = ev.r_force;
    c[L.ic_moment] = ev.r_moment;
    c[L.ic_power] = powertrain::drive_power_residual(
        p_ice, p_em, p_fly, ev.f_rx, x[L.ix_u], cx.fly.mu_cvt, cx.rho);
    c[L.ic_torque] = u[L.iu_te] - cx.engine.torque_max(u[L.iu_we]);

    const T fuel = cx.engine.fuel_rate(u[L.iu_we], u[L.iu_te]);
    q[0] = s_f;
    q[1] = s_f * fuel;
    *g = cx.min_time ? s_f : s_f * fuel;
    *dt_ds = s_f;
  }
};

}  // namespace

Storage storage_from_string(const std::string& s) {
  if (s == "ice") return Storage::kIce;
  if (s == "ice+bat") return Storage::kIceBattery;
  if (s == "ice+fly") return Storage::kIceFlywheel;
  if (s == "ice+bat+fly" || s == "ice+fly+bat") {
    return Storage::kIceBatteryFlywheel;
  }
  throw InputError("unknown storage configuration '" + s +
                   "' (expected ice, ice+bat, ice+fly or ice+bat+fly)");
}

std::string to_string(Storage s) {
  switch (s) {
    case Storage::kIce: return "ice";
    case Storage::kIceBattery: return "ice+bat";
    case Storage::kIceFlywheel: return "ice+fly";
    case Storage::kIceBatteryFlywheel: return "ice+bat+fly";
  }
  return "?";
}

void Scenario::validate() const {
  if (objective == Objective::kMinFuel && !(arrival_time > 0)) {
    throw InputError("scenario: arrival_time must be positive");
  }
  if (!(soc_boundary > 0.0 && soc_boundary < 1.0)) {
    throw InputError("scenario: soc_boundary must lie in (0, 1)");
  }
  if (!(u_min > 0.0 && u_max > u_min)) {
    throw InputError("scenario: need 0 < u_min < u_max");
  }
  if (u_boundary > 0.0 && (u_boundary < u_min || u_boundary > u_max)) {
    throw InputError("scenario: u_boundary must lie within [u_min, u_max]");
  }
  if (!(xi_max > 0.0 && xi_max < 1.0) || !(v_max > 0.0) || !(wz_max > 0.0)) {
    throw InputError("scenario: attitude boxes must be positive (xi < 1)");
  }
  // The box corner must keep forward progress: u cos(xi) - v sin(xi) > 0
  // everywhere inside the boxes, so S_f stays finite during line searches.
  if (u_min * std::cos(xi_max) <= v_max * std::sin(xi_max)) {
    throw InputError(
        "scenario: state boxes admit non-forward motion "
        "(u_min cos(xi_max) must exceed v_max sin(xi_max))");
  }
  if (!(delta_max > 0) || !(kappa_max > 0) || !(fz_factor > 0)) {
    throw InputError("scenario: control boxes must be positive");
  }
  for (const SpeedLimit& sl : speed_limits) {
    if (!(sl.s1 > sl.s0) || !(sl.v_max > u_min)) {
      throw InputError("scenario: speed limit needs s1 > s0 and v_max > u_min");
    }
  }
  if (mesh_intervals < 1 || mesh_order < 2 || !(mesh_tol > 0) ||
      max_refinements < 0 || !(nlp_tol > 0) || nlp_max_iter < 1) {
    throw InputError("scenario: invalid mesh/solver settings");
  }
  for (int i = 0; i < kNumControlIds; ++i) {
    if (rate_weights[i] < 0 || !(slew_limits[i] > 0)) {
      throw InputError("scenario: rate weights must be >= 0, slews > 0");
    }
  }
}

Scenario scenario_from_config(const ConfigFile& cfg) {
  Scenario sc;
  const std::string sec = "scenario";
  sc.storage = storage_from_string(
      cfg.get_string(sec, "storage", to_string(sc.storage)));
  const std::string obj = cfg.get_string(sec, "objective", "fuel");
  if (obj == "fuel") {
    sc.objective = Objective::kMinFuel;
  } else if (obj == "time") {
    sc.objective = Objective::kMinTime;
  } else {
    throw InputError("scenario: objective must be 'fuel' or 'time'");
  }
  sc.arrival_time = cfg.get_double(sec, "arrival_time", sc.arrival_time);
  sc.soc_boundary = cfg.get_double(sec, "soc_boundary", sc.soc_boundary);
  sc.flatten = cfg.get_bool(sec, "flatten_2d", sc.flatten);
  for (const auto& row : cfg.get_rows(sec, "speed_limit")) {
    if (row.size() != 3) {
      throw InputError("scenario: speed_limit rows are 's0, s1, v_max'");
    }
    sc.speed_limits.push_back({row[0], row[1], row[2]});
  }
  sc.u_min = cfg.get_double(sec, "u_min", sc.u_min);
  sc.u_max = cfg.get_double(sec, "u_max", sc.u_max);
  sc.u_boundary = cfg.get_double(sec, "u_boundary", sc.u_boundary);
  sc.xi_max = cfg.get_double(sec, "xi_max", sc.xi_max);
  sc.v_max = cfg.get_double(sec, "v_max", sc.v_max);
  sc.wz_max = cfg.get_double(sec, "wz_max", sc.wz_max);
  sc.delta_max = cfg.get_double(sec, "delta_max", sc.delta_max);
  sc.kappa_max = cfg.get_double(sec, "kappa_max", sc.kappa_max);
  sc.fz_factor = cfg.get_double(sec, "fz_factor", sc.fz_factor);
  sc.rate_augmentation =
      cfg.get_bool(sec, "rate_augmentation", sc.rate_augmentation);
  if (cfg.has(sec, "rate_weights")) {
    const auto w = cfg.get_list(sec, "rate_weights");
    if (w.size() != kNumControlIds) {
      throw InputError("scenario: rate_weights needs 9 entries");
    }
    std::copy(w.begin(), w.end(), sc.rate_weights.begin());
  }
  if (cfg.has(sec, "slew_limits")) {
    const auto w = cfg.get_list(sec, "slew_limits");
    if (w.size() != kNumControlIds) {
      throw InputError("scenario: slew_limits needs 9 entries");
    }
    std::copy(w.begin(), w.end(), sc.slew_limits.begin());
  }
  sc.mesh_intervals = cfg.get_int(sec, "mesh_intervals", sc.mesh_intervals);
  sc.mesh_order = cfg.get_int(sec, "mesh_order", sc.mesh_order);
  sc.mesh_tol = cfg.get_double(sec, "mesh_tol", sc.mesh_tol);
  sc.max_refinements =
      cfg.get_int(sec, "max_refinements", sc.max_refinements);
  sc.nlp_tol = cfg.get_double(sec, "nlp_tol", sc.nlp_tol);
  sc.nlp_max_iter = cfg.get_int(sec, "nlp_max_iter", sc.nlp_max_iter);
  sc.verbose = cfg.get_bool(sec, "verbose", sc.verbose);
  sc.validate();
  return sc;
}

Layout Layout::make(Storage s) {
  Layout lay;
  lay.storage = s;
  int x = 5, u = 7, c = 4;
  if (has_flywheel(s)) {
    lay.ix_efly = x++;
    lay.iu_pfly = u++;
  }
  if (has_battery(s)) {
    lay.ix_qb = x++;
    lay.iu_ib = u++;
    lay.ic_pbat = c++;
  }
  lay.nx = x;
  lay.nu = u;
  lay.nc = c;
  return lay;
}

std::vector<std::string> Layout::state_names() const {
  std::vector<std::string> n{"n", "xi", "u", "v", "omega_z"};
  if (ix_efly >= 0) n.push_back("E_fly");
  if (ix_qb >= 0) n.push_back("Q_b");
  return n;
}

std::vector<std::string> Layout::control_names() const {
  std::vector<std::string> n{"delta", "kappa_f", "kappa_r", "F_fz",
                             "F_rz",  "omega_e", "T_e"};
  if (iu_pfly >= 0) n.push_back("P_fly");
  if (iu_ib >= 0) n.push_back("I_b");
  return n;
}

std::vector<int> Layout::control_ids() const {
  std::vector<int> ids{kDelta, kKappaF, kKappaR, kFfz, kFrz, kOmegaE,
                       kTorqueE};
  if (iu_pfly >= 0) ids.push_back(kPfly);
  if (iu_ib >= 0) ids.push_back(kIb);
  return ids;
}

Problem assemble(std::shared_ptr<const track::TrackRibbon> ribbon,
                 const vehicle::VehicleParams& vp,
                 const powertrain::PowertrainParams& pp, const Scenario& sc) {
  sc.validate();
  vp.validate();
  pp.validate();
  if (!ribbon) throw InputError("assemble: null track");
  if (sc.flatten) {
    ribbon = std::make_shared<const track::TrackRibbon>(ribbon->flattened());
  }
  const double len = ribbon->length();

  const Layout lay = Layout::make(sc.storage);
  const bool bat = lay.ix_qb >= 0, fly = lay.ix_efly >= 0;
  if (bat && (sc.soc_boundary < pp.battery.soc_min ||
              sc.soc_boundary > pp.battery.soc_max)) {
    throw InputError("scenario: soc_boundary outside the battery SoC window");
  }

  // The corridor must keep 1 - n * Omega_z bounded away from zero inside
  // the state box, or S_f blows up mid line-search.
  for (int i = 0; i < 512; ++i) {
    const auto rp = ribbon->at(len * i / 511.0);
    if (std::abs(rp.omega_z) * rp.half_width > 0.9) {
      throw InputError("track too narrow/curved: |Omega_z| * half_width > 0.9");
    }
  }

  auto ctx = std::make_shared<EvalCtx>();
  ctx->vp = vp;
  ctx->bat = pp.battery;
  ctx->fly = pp.flywheel;
  ctx->engine = pp.engine;
  ctx->rho = pp.rho_smooth;
  ctx->q_max = pp.battery.charge_max();
  ctx->lay = lay;
  ctx->min_time = sc.objective == Objective::kMinTime;
  auto fn = ocp::make_point_function(
      Evaluator{ctx}, [ribbon](double s) -> std::unique_ptr<const ocp::PointData> {
        auto d = std::make_unique<PointCtx>();
        d->rp = ribbon->at(s);
        return d;
      });

  // Segment the route at speed-limit boundaries.
  std::vector<double> cuts{0.0, len};
  for (const SpeedLimit& sl : sc.speed_limits) {
    if (sl.s0 < 0.0 || sl.s1 > len) {
      throw InputError("scenario: speed limit outside the track");
    }
    cuts.push_back(sl.s0);
    cuts.push_back(sl.s1);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) { return b - a < 1e-9; }),
             cuts.end());

  const double mg = vp.mass * vp.gravity;
  const double q_max = ctx->q_max;
  const double i_box = pp.battery.p_max / pp.battery.v_oc_min;
  const double u_bc = sc.u_boundary > 0.0 ? sc.u_boundary : sc.u_min;

  // Cruise-speed seed for the initial guess.
  double u_cruise;
  if (sc.objective == Objective::kMinTime) {
    u_cruise = std::min(20.0, 0.8 * sc.u_max);
  } else {
    u_cruise = std::clamp(1.08 * len / sc.arrival_time, sc.u_min + 0.25,
                          0.95 * sc.u_max);
  }
  const double ramp = std::min(250.0, 0.15 * len);

  auto def = std::make_shared<ocp::OcpDefinition>();
  for (size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double s0 = cuts[k], s1 = cuts[k + 1];
    const double mid = 0.5 * (s0 + s1);
    double u_hi = sc.u_max;
    for (const SpeedLimit& sl : sc.speed_limits) {
      if (mid >= sl.s0 && mid <= sl.s1) u_hi = std::min(u_hi, sl.v_max);
    }

    ocp::Phase ph;
    {
      std::ostringstream name;
      name << "s" << s0 << ":" << s1;
      if (u_hi < sc.u_max) name << "@" << u_hi;
      ph.name = name.str();
    }
    ph.s0 = s0;
    ph.s1 = s1;
    ph.nx = lay.nx;
    ph.nu = lay.nu;
    ph.nc = lay.nc;
    ph.fn = fn;

    ph.state_bounds = [ribbon, lay, sc, u_hi, q_max, bat_p = pp.battery,
                       fly_p = pp.flywheel](double s, Eigen::VectorXd& lo,
                                            Eigen::VectorXd& hi) {
      lo.resize(lay.nx);
      hi.resize(lay.nx);
      const double hw = ribbon->at(s).half_width;
      lo[lay.ix_n] = -hw;
      hi[lay.ix_n] = hw;
      lo[lay.ix_xi] = -sc.xi_max;
      hi[lay.ix_xi] = sc.xi_max;
      lo[lay.ix_u] = sc.u_min;
      hi[lay.ix_u] = u_hi;
      lo[lay.ix_v] = -sc.v_max;
      hi[lay.ix_v] = sc.v_max;
      lo[lay.ix_wz] = -sc.wz_max;
      hi[lay.ix_wz] = sc.wz_max;
      if (lay.ix_efly >= 0) {
        lo[lay.ix_efly] = 0.0;
        hi[lay.ix_efly] = fly_p.e_max;
      }
      if (lay.ix_qb >= 0) {
        lo[lay.ix_qb] = bat_p.soc_min * q_max;
        hi[lay.ix_qb] = bat_p.soc_max * q_max;
      }
    };

    ph.u_lo.resize(lay.nu);
    ph.u_hi.resize(lay.nu);
    ph.u_lo[lay.iu_delta] = -sc.delta_max;
    ph.u_hi[lay.iu_delta] = sc.delta_max;
    ph.u_lo[lay.iu_kf] = -sc.kappa_max;  // front axle brakes only
    ph.u_hi[lay.iu_kf] = 0.0;
    ph.u_lo[lay.iu_kr] = -sc.kappa_max;
    ph.u_hi[lay.iu_kr] = sc.kappa_max;
    ph.u_lo[lay.iu_ffz] = 0.0;
    ph.u_hi[lay.iu_ffz] = sc.fz_factor * mg;
    ph.u_lo[lay.iu_frz] = 0.0;
    ph.u_hi[lay.iu_frz] = sc.fz_factor * mg;
    ph.u_lo[lay.iu_we] = pp.engine.omega_min();
    ph.u_hi[lay.iu_we] = pp.engine.omega_max();
    ph.u_lo[lay.iu_te] = 0.0;
    ph.u_hi[lay.iu_te] = 1.05 * pp.engine.torque_bound();
    if (fly) {
      ph.u_lo[lay.iu_pfly] = -pp.flywheel.p_max;
      ph.u_hi[lay.iu_pfly] = pp.flywheel.p_max;
    }
    if (bat) {
      ph.u_lo[lay.iu_ib] = -i_box;
      ph.u_hi[lay.iu_ib] = i_box;
    }

    ph.c_lo.resize(lay.nc);
    ph.c_hi.resize(lay.nc);
    ph.c_lo[lay.ic_force] = 0.0;
    ph.c_hi[lay.ic_force] = 0.0;
    ph.c_lo[lay.ic_moment] = 0.0;
    ph.c_hi[lay.ic_moment] = 0.0;
    ph.c_lo[lay.ic_power] = 0.0;
    ph.c_hi[lay.ic_power] = kInf;
    ph.c_lo[lay.ic_torque] = -kInf;
    ph.c_hi[lay.ic_torque] = 0.0;
    if (bat) {
      ph.c_lo[lay.ic_pbat] = -pp.battery.p_max;
      ph.c_hi[lay.ic_pbat] = pp.battery.p_max;
    }

    ph.x_scale.resize(lay.nx);
    ph.x_scale[lay.ix_n] = 1.0;
    ph.x_scale[lay.ix_xi] = 0.3;
    ph.x_scale[lay.ix_u] = 30.0;
    ph.x_scale[lay.ix_v] = 3.0;
    ph.x_scale[lay.ix_wz] = 0.5;
    if (fly) ph.x_scale[lay.ix_efly] = 0.5 * pp.flywheel.e_max;
    if (bat) ph.x_scale[lay.ix_qb] = 0.5 * q_max;
    ph.u_scale.resize(lay.nu);
    ph.u_scale[lay.iu_delta] = 0.2;
    ph.u_scale[lay.iu_kf] = 0.1;
    ph.u_scale[lay.iu_kr] = 0.1;
    ph.u_scale[lay.iu_ffz] = 0.5 * mg;
    ph.u_scale[lay.iu_frz] = 0.5 * mg;
    ph.u_scale[lay.iu_we] = 250.0;
    ph.u_scale[lay.iu_te] = 50.0;
    if (fly) ph.u_scale[lay.iu_pfly] = 0.5 * pp.flywheel.p_max;
    if (bat) ph.u_scale[lay.iu_ib] = 0.5 * i_box;
    ph.c_scale.resize(lay.nc);
    ph.c_scale[lay.ic_force] = 1.0;
    ph.c_scale[lay.ic_moment] = 1.0;
    ph.c_scale[lay.ic_power] = 1e4;
    ph.c_scale[lay.ic_torque] = 50.0;
    if (bat) ph.c_scale[lay.ic_pbat] = 1e4;

    if (k == 0) {
      ph.pins_start = {{lay.ix_n, 0.0},
                       {lay.ix_xi, 0.0},
                       {lay.ix_u, u_bc},
                       {lay.ix_v, 0.0},
                       {lay.ix_wz, 0.0}};
      if (fly) ph.pins_start.push_back({lay.ix_efly, 0.0});
      if (bat) ph.pins_start.push_back({lay.ix_qb, sc.soc_boundary * q_max});
    }
    if (k + 2 == cuts.size()) {
      ph.pins_end = {{lay.ix_n, 0.0},
                     {lay.ix_xi, 0.0},
                     {lay.ix_u, u_bc},
                     {lay.ix_v, 0.0},
                     {lay.ix_wz, 0.0}};
      if (fly) ph.pins_end.push_back({lay.ix_efly, 0.0});
      if (bat) ph.pins_end.push_back({lay.ix_qb, sc.soc_boundary * q_max});
    }

    ph.guess = [ribbon, lay, sc, vp, u_hi, u_cruise, u_bc, ramp, len, q_max,
                engine = pp.engine](double s, Eigen::VectorXd& x,
                                    Eigen::VectorXd& u) {
      const auto rp = ribbon->at(s);
      const double target = std::min(u_cruise, 0.95 * u_hi);
      double frac = std::min({1.0, s / ramp, (len - s) / ramp});
      frac = std::max(frac, 0.0);
      const double uu = u_bc + (target - u_bc) * frac;

      x.setZero(lay.nx);
      x[lay.ix_u] = uu;
      x[lay.ix_wz] = std::clamp(uu * rp.omega_z, -0.9 * sc.wz_max,
                                0.9 * sc.wz_max);
      if (lay.ix_efly >= 0) x[lay.ix_efly] = 0.0;
      if (lay.ix_qb >= 0) x[lay.ix_qb] = sc.soc_boundary * q_max;

      u.setZero(lay.nu);
      u[lay.iu_delta] =
          std::clamp((vp.a + vp.b) * rp.omega_z, -0.9 * sc.delta_max,
                     0.9 * sc.delta_max);
      const double mg_l = vp.mass * vp.gravity;
      const double drag = 0.5 * vp.drag_coeff * vp.air_density *
                          vp.frontal_area * uu * uu;
      const double f_need = drag + mg_l * std::sin(rp.pitch) +
                            vp.rolling_coeff * mg_l;
      const double fz0 = 0.5 * mg_l;
      u[lay.iu_ffz] = fz0;
      u[lay.iu_frz] = fz0;
      const double slope =
          vp.tire.mu_long * vp.tire.c_long * vp.tire.b_long * fz0;
      u[lay.iu_kr] =
          std::clamp(f_need / slope, -0.5 * sc.kappa_max, 0.5 * sc.kappa_max);
      u[lay.iu_we] = 0.5 * (engine.omega_min() + engine.omega_max());
      const double p_need = std::max(f_need * uu, 500.0);
      u[lay.iu_te] = std::clamp(p_need / u[lay.iu_we], 1.0,
                                0.9 * engine.torque_bound());
    };

    def->phases.push_back(std::move(ph));
  }

  // Integral rows: journey time (bounded by the arrival limit for min-fuel)
  // and fuel mass (reporting only).
  def->nq = 2;
  def->q_lo = Eigen::Vector2d(0.0, 0.0);
  def->q_hi = Eigen::Vector2d(
      sc.objective == Objective::kMinFuel ? sc.arrival_time : kInf, kInf);
  def->q_scale = Eigen::Vector2d(10.0, 100.0);
  def->cost_scale = 100.0;
  def->validate();

  Problem prob;
  prob.base = def;
  prob.layout = lay;
  prob.ribbon = ribbon;
  prob.vehicle = vp;
  prob.powertrain = pp;
  prob.scenario = sc;
  if (sc.rate_augmentation) {
    const auto ids = lay.control_ids();
    Eigen::VectorXd rw(lay.nu), slew(lay.nu);
    for (int j = 0; j < lay.nu; ++j) {
      rw[j] = sc.rate_weights[ids[j]];
      slew[j] = sc.slew_limits[ids[j]];
    }
    prob.def = std::make_shared<const ocp::OcpDefinition>(
        ocp::augment_control_rates(*def, rw, slew));
  } else {
    prob.def = def;
  }
  return prob;
}

int TrajectoryTable::col(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  return -1;
}

Eigen::VectorXd TrajectoryTable::column(const std::string& name) const {
  const int c = col(name);
  if (c < 0) throw InputError("trajectory table has no column '" + name + "'");
  return data.col(c);
}

TrajectoryTable extract_table(const Problem& prob,
                              const colloc::Transcription& tr,
                              const Eigen::VectorXd& z) {
  const Layout& lay = prob.layout;
  const bool bat = lay.ix_qb >= 0, fly = lay.ix_efly >= 0;
  const auto& vp = prob.vehicle;
  const auto& pp = prob.powertrain;
  const double q_max = pp.battery.charge_max();

  TrajectoryTable t;
  t.columns = {"s", "t", "n", "xi", "u", "v", "omega_z"};
  if (fly) t.columns.push_back("E_fly");
  if (bat) t.columns.push_back("SoC");
  for (const auto& n : lay.control_names()) t.columns.push_back(n);
  for (const char* n :
       {"s_dot", "fuel_gps", "P_ice", "P_em", "P_fly_out", "P_bat",
        "wheel_power", "power_slack", "torque_margin", "r_force", "r_moment"}) {
    t.columns.push_back(n);
  }

  // Sample rows: every collocation point plus the final support point.
  std::vector<double> ss = tr.collocation_s();
  ss.push_back(tr.support_s().back());
  const int rows = static_cast<int>(ss.size());
  t.data.setZero(rows, static_cast<int>(t.columns.size()));

  double t_accum = 0.0;
  double s_prev = ss.front();
  double sf_prev = 0.0;
  for (int r = 0; r < rows; ++r) {
    const double s = ss[r];
    const Eigen::VectorXd xs = tr.interp_state(z, s);
    Eigen::VectorXd uc;
    if (prob.scenario.rate_augmentation) {
      uc = xs.segment(lay.nx, lay.nu);  // control values live as states
    } else {
      uc = tr.interp_control(z, s);
    }
    const auto rp = prob.ribbon->at(s);
    const auto ev = vehicle::evaluate_chassis(
        vp, rp, xs[lay.ix_n], xs[lay.ix_xi], xs[lay.ix_u], xs[lay.ix_v],
        xs[lay.ix_wz], uc[lay.iu_delta], uc[lay.iu_kf], uc[lay.iu_kr],
        uc[lay.iu_ffz], uc[lay.iu_frz]);

    const double p_ice = uc[lay.iu_we] * uc[lay.iu_te];
    double p_b = 0.0, p_em = 0.0;
    if (bat) {
      p_b = powertrain::battery_power(pp.battery, xs[lay.ix_qb] / q_max,
                                      uc[lay.iu_ib]);
      p_em = powertrain::em_output_power(p_b, pp.battery.mu_em, pp.rho_smooth);
    }
    const double p_fly = fly ? uc[lay.iu_pfly] : 0.0;
    const double p_fly_out =
        powertrain::smooth_sign_efficiency(p_fly, pp.flywheel.mu_cvt,
                                           pp.rho_smooth) *
        p_fly;
    const double wheel_power = ev.f_rx * xs[lay.ix_u];
    const double slack = p_ice + p_em + p_fly_out - wheel_power;
    const double fuel =
        pp.engine.fuel_rate(uc[lay.iu_we], uc[lay.iu_te]);
    const double sf = ev.rates.S_f;

    if (r > 0) t_accum += 0.5 * (sf + sf_prev) * (s - s_prev);
    s_prev = s;
    sf_prev = sf;

    int c = 0;
    auto put = [&](double val) { t.data(r, c++) = val; };
    put(s);
    put(t_accum);
    put(xs[lay.ix_n]);
    put(xs[lay.ix_xi]);
    put(xs[lay.ix_u]);
    put(xs[lay.ix_v]);
    put(xs[lay.ix_wz]);
    if (fly) put(xs[lay.ix_efly]);
    if (bat) put(xs[lay.ix_qb] / q_max);
    for (int j = 0; j < lay.nu; ++j) put(uc[j]);
    put(ev.rates.s_dot);
    put(fuel);
    put(p_ice);
    put(p_em);
    put(p_fly_out);
    put(p_b);
    put(wheel_power);
    put(slack);
    put(uc[lay.iu_te] - pp.engine.torque_max(uc[lay.iu_we]));
    put(ev.r_force);
    put(ev.r_moment);
  }
  return t;
}

Solution solve(const Problem& prob, const Eigen::VectorXd* initial_point) {
  const Scenario& sc = prob.scenario;
  colloc::Mesh mesh =
      colloc::Mesh::uniform(*prob.def, sc.mesh_intervals, sc.mesh_order);

  nlp::SolverOptions nopt;
  nopt.tol = sc.nlp_tol;
  nopt.constr_tol = sc.nlp_tol;
  nopt.max_iter = sc.nlp_max_iter;
  nopt.verbose = sc.verbose;

  colloc::RefineOptions ropt;
  ropt.tol = sc.mesh_tol;
  ropt.split_order = sc.mesh_order;
  ropt.max_refinements = sc.max_refinements;

  Solution out;
  out.mesh = colloc::solve_with_refinement(prob.def, mesh, nopt, ropt,
                                           initial_point);
  out.status = out.mesh.solution.status;
  out.mesh_converged = out.mesh.mesh_converged;
  out.refinement_rounds = out.mesh.refinement_rounds;
  out.nlp_iterations = out.mesh.solution.iterations;
  out.objective = out.mesh.solution.objective;
  out.inf_pr = out.mesh.solution.inf_pr;
  out.inf_du = out.mesh.solution.inf_du;
  const Eigen::VectorXd q =
      out.mesh.transcription->integrals(out.mesh.solution.x);
  out.time_seconds = q[0];
  out.fuel_grams = q[1];
  out.table = extract_table(prob, *out.mesh.transcription,
                            out.mesh.solution.x);
  return out;
}

Eigen::VectorXd weight_initial_point(const colloc::Transcription& tr,
                                     double w) {
  Eigen::VectorXd lo, hi, clo, chi;
  tr.get_bounds(lo, hi, clo, chi);
  Eigen::VectorXd z = tr.initial_guess();
  for (int i = 0; i < z.size(); ++i) {
    if (std::isfinite(lo[i]) && std::isfinite(hi[i])) {
      z[i] = lo[i] + w * (hi[i] - lo[i]);
    }
  }
  return z;
}

Eigen::VectorXd random_initial_point(const colloc::Transcription& tr,
                                     unsigned seed) {
  Eigen::VectorXd lo, hi, clo, chi;
  tr.get_bounds(lo, hi, clo, chi);
  Eigen::VectorXd z = tr.initial_guess();
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < z.size(); ++i) {
    if (std::isfinite(lo[i]) && std::isfinite(hi[i])) {
      z[i] = lo[i] + uni(rng) * (hi[i] - lo[i]);
    }
  }
  return z;
}

}  // namespace fueltraj::minfuel
