#pragma once

// Minimum-fuel (or minimum-time) trajectory problem for the hybrid vehicle
// on a road ribbon, assembled in distance domain:
//
//   states   x = (n, xi, u, v, wz[, E_fly][, Q_b])
//   controls u = (delta, kappa_f, kappa_r, F_fz, F_rz, omega_e, T_e
//                 [, P_fly][, I_b])
//
// subsets chosen by the energy-storage configuration. Dynamics are the
// chassis equations scaled by S_f = dt/ds plus the storage dynamics; path
// constraints are the two load-balance equalities, the drive power
// inequality, the engine torque ceiling and (with a battery) the terminal
// power bound. The arrival-time limit is a global integral constraint
// (integral of S_f), and the fuel mass is carried as a second integral for
// reporting. Control-rate augmentation turns every control into a state
// with a slew-bounded, quadratically penalized time rate.

#include <Eigen/Core>

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "fueltraj/collocation.hpp"
#include "fueltraj/config.hpp"
#include "fueltraj/nlp.hpp"
#include "fueltraj/ocp.hpp"
#include "fueltraj/powertrain.hpp"
#include "fueltraj/track.hpp"
#include "fueltraj/vehicle.hpp"

namespace fueltraj::minfuel {

enum class Storage { kIce, kIceBattery, kIceFlywheel, kIceBatteryFlywheel };

Storage storage_from_string(const std::string& s);  // ice, ice+bat, ...
std::string to_string(Storage s);
inline bool has_battery(Storage s) {
  return s == Storage::kIceBattery || s == Storage::kIceBatteryFlywheel;
}
inline bool has_flywheel(Storage s) {
  return s == Storage::kIceFlywheel || s == Storage::kIceBatteryFlywheel;
}

enum class Objective { kMinFuel, kMinTime };

struct SpeedLimit {
  double s0 = 0.0, s1 = 0.0;  // arc-length window [s0, s1]
  double v_max = 0.0;         // m/s
};

// Canonical control order used by rate-weight / slew tables; absent storage
// devices drop their entries.
enum ControlId {
  kDelta = 0,
  kKappaF,
  kKappaR,
  kFfz,
  kFrz,
  kOmegaE,
  kTorqueE,
  kPfly,
  kIb,
  kNumControlIds
};

struct Scenario {
  Storage storage = Storage::kIceBatteryFlywheel;
  Objective objective = Objective::kMinFuel;
  double arrival_time = 240.0;  // s; ignored for min-time
  double soc_boundary = 0.6;    // SoC pinned at both ends (charge sustaining)
  bool flatten = false;         // drop pitch/roll (plan-view copy)
  std::vector<SpeedLimit> speed_limits;

  // State boxes.
  double u_min = 1.0, u_max = 60.0;  // m/s
  double u_boundary = 0.0;           // speed pinned at both ends; <= 0: u_min
  double xi_max = 0.3;               // rad
  double v_max = 3.0;                // m/s
  double wz_max = 1.2;               // rad/s

  // Control boxes.
  double delta_max = 0.5;     // rad
  double kappa_max = 0.2;     // rear slip box; front is [-kappa_max, 0]
  double fz_factor = 2.0;     // axle load box = [0, fz_factor * M g]

  // Control-rate augmentation (canonical order, full 9 entries; subset
  // selected per storage). Weights enter the cost as S_f * sum R_i r_i^2.
  bool rate_augmentation = true;
  std::array<double, kNumControlIds> rate_weights{
      0.05, 0.05, 0.05, 1e-9, 1e-9, 1e-5, 1e-6, 1e-11, 1e-6};
  std::array<double, kNumControlIds> slew_limits{
      0.7, 0.5, 0.5, 4e4, 4e4, 150.0, 300.0, 1.2e5, 400.0};

  // Mesh / solver settings.
  int mesh_intervals = 24;
  int mesh_order = 4;
  double mesh_tol = 1e-3;
  int max_refinements = 6;
  double nlp_tol = 1e-7;
  int nlp_max_iter = 500;
  bool verbose = false;

  void validate() const;  // throws InputError
};

// Reads the [scenario] section (storage, objective, arrival_time,
// soc_boundary, flatten_2d, repeated `speed_limit = s0, s1, vmax` rows,
// rate_weights / slew_limits lists, mesh_* and nlp_* settings). Missing keys
// keep the defaults above.
Scenario scenario_from_config(const ConfigFile& cfg);

// Index map of the assembled (pre-augmentation) problem.
struct Layout {
  Storage storage = Storage::kIce;
  int nx = 5, nu = 7, nc = 4;
  int ix_n = 0, ix_xi = 1, ix_u = 2, ix_v = 3, ix_wz = 4;
  int ix_efly = -1, ix_qb = -1;
  int iu_delta = 0, iu_kf = 1, iu_kr = 2, iu_ffz = 3, iu_frz = 4, iu_we = 5,
      iu_te = 6;
  int iu_pfly = -1, iu_ib = -1;
  int ic_force = 0, ic_moment = 1, ic_power = 2, ic_torque = 3, ic_pbat = -1;

  static Layout make(Storage s);
  std::vector<std::string> state_names() const;
  std::vector<std::string> control_names() const;
  // Canonical ControlId of control column j.
  std::vector<int> control_ids() const;
};

struct Problem {
  std::shared_ptr<const ocp::OcpDefinition> def;   // solved (post-augment)
  std::shared_ptr<const ocp::OcpDefinition> base;  // pre-augmentation
  Layout layout;
  std::shared_ptr<const track::TrackRibbon> ribbon;  // flattened when asked
  vehicle::VehicleParams vehicle;
  powertrain::PowertrainParams powertrain;
  Scenario scenario;
};

// Builds the phased problem over the given ribbon. The ribbon is flattened
// first when the scenario asks for the plan-view variant.
Problem assemble(std::shared_ptr<const track::TrackRibbon> ribbon,
                 const vehicle::VehicleParams& vp,
                 const powertrain::PowertrainParams& pp, const Scenario& sc);

// Pointwise trajectory table sampled at the collocation points, with all
// physically meaningful channels recomputed from the solution in plain
// arithmetic. Column order is fixed (see columns).
struct TrajectoryTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd data;  // one row per collocation point
  int col(const std::string& name) const;  // -1 when absent
  Eigen::VectorXd column(const std::string& name) const;  // throws if absent
};

struct Solution {
  nlp::SolveStatus status = nlp::SolveStatus::kNumericalFailure;
  bool mesh_converged = false;
  int refinement_rounds = 0;
  int nlp_iterations = 0;
  double objective = 0.0;     // scaled NLP objective (incl. rate penalty)
  double time_seconds = 0.0;  // arrival-time integral
  double fuel_grams = 0.0;    // fuel integral
  double inf_pr = 0.0, inf_du = 0.0;
  colloc::MeshSolveResult mesh;
  TrajectoryTable table;
};

// Transcribes on a uniform initial mesh and solves with refinement,
// optionally from a caller-supplied initial decision vector (matching the
// initial transcription layout).
Solution solve(const Problem& prob,
               const Eigen::VectorXd* initial_point = nullptr);

// Re-extracts the trajectory table from a transcription + decision vector.
TrajectoryTable extract_table(const Problem& prob,
                              const colloc::Transcription& tr,
                              const Eigen::VectorXd& z);

// Decision vector x_lo + w * (x_hi - x_lo) with the transcription's own
// guess substituted where a bound is unbounded (multistart seeding).
Eigen::VectorXd weight_initial_point(const colloc::Transcription& tr,
                                     double w);

// Same with uniform random weights per variable from the given engine seed.
Eigen::VectorXd random_initial_point(const colloc::Transcription& tr,
                                     unsigned seed);

}  // namespace fueltraj::minfuel
