#include <cmath>
#include <limits>
#include <memory>

#include "doctest.h"

#include "fueltraj/collocation.hpp"
#include "fueltraj/nlp.hpp"
#include "fueltraj/ocp.hpp"

using namespace fueltraj;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Double integrator over t in [0,1]: min integral of u^2 with x: 0 -> 1,
// v: 0 -> 0. Analytic optimum: x = 3t^2 - 2t^3, v = 6t - 6t^2, u = 6 - 12t,
// cost 12; costates lam_x = -24, lam_v = 24t - 12. One integral output
// tracks integral of x dt = 1/2.
struct DoubleIntegrator {
  template <typename T>
  void operator()(const ocp::PointData*, double, const T* x, const T* u, T* f,
                  T* /*c*/, T* q, T* g, T* dt_ds) const {
    f[0] = x[1];
    f[1] = u[0];
    q[0] = x[0];
    *g = u[0] * u[0];
    *dt_ds = T(1.0);
  }
};

std::shared_ptr<ocp::OcpDefinition> make_problem(int n_phases = 1) {
  auto def = std::make_shared<ocp::OcpDefinition>();
  for (int k = 0; k < n_phases; ++k) {
    ocp::Phase ph;
    ph.name = "seg" + std::to_string(k);
    ph.s0 = static_cast<double>(k) / n_phases;
    ph.s1 = static_cast<double>(k + 1) / n_phases;
    ph.nx = 2;
    ph.nu = 1;
    ph.nc = 0;
    ph.fn = ocp::make_point_function(DoubleIntegrator{});
    ph.state_bounds = [](double, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
      lo = Eigen::Vector2d(-10.0, -10.0);
      hi = Eigen::Vector2d(10.0, 10.0);
    };
    ph.u_lo = Eigen::VectorXd::Constant(1, -100.0);
    ph.u_hi = Eigen::VectorXd::Constant(1, 100.0);
    ph.guess = [](double s, Eigen::VectorXd& x, Eigen::VectorXd& u) {
      x = Eigen::Vector2d(s, 1.0);
      u = Eigen::VectorXd::Zero(1);
    };
    if (k == 0) ph.pins_start = {{0, 0.0}, {1, 0.0}};
    if (k == n_phases - 1) ph.pins_end = {{0, 1.0}, {1, 0.0}};
    def->phases.push_back(std::move(ph));
  }
  def->nq = 1;
  def->q_lo = Eigen::VectorXd::Constant(1, -10.0);
  def->q_hi = Eigen::VectorXd::Constant(1, 10.0);
  def->q_scale = Eigen::VectorXd::Ones(1);
  return def;
}

}  // namespace

TEST_CASE("double integrator matches the analytic optimum") {
  auto def = make_problem();
  colloc::Mesh mesh = colloc::Mesh::uniform(*def, 8, 4);
  auto trans = std::make_shared<colloc::Transcription>(def, mesh);

  nlp::SolverOptions opts;
  nlp::NlpSolution sol = nlp::solve_nlp(*trans, opts);
  REQUIRE(sol.status == nlp::SolveStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(12.0).epsilon(1e-7));

  const Eigen::MatrixXd X = trans->states(sol.x);
  const auto& ss = trans->support_s();
  for (int p = 0; p < trans->num_support_points(); ++p) {
    const double t = ss[p];
    CHECK(X(0, p) ==
          doctest::Approx(3 * t * t - 2 * t * t * t).scale(1.0).epsilon(1e-6));
    CHECK(X(1, p) ==
          doctest::Approx(6 * t - 6 * t * t).scale(1.0).epsilon(1e-6));
  }
  const Eigen::MatrixXd U = trans->controls(sol.x);
  const auto& cs = trans->collocation_s();
  for (int cp = 0; cp < trans->num_collocation_points(); ++cp) {
    CHECK(U(0, cp) ==
          doctest::Approx(6 - 12 * cs[cp]).scale(10.0).epsilon(1e-6));
  }
  CHECK(trans->integrals(sol.x)[0] == doctest::Approx(0.5).epsilon(1e-8));

  // Interpolants reproduce the analytic solution between nodes too.
  for (double t : {0.111, 0.4242, 0.777}) {
    const Eigen::VectorXd xi = trans->interp_state(sol.x, t);
    CHECK(xi[0] ==
          doctest::Approx(3 * t * t - 2 * t * t * t).scale(1.0).epsilon(1e-6));
    const Eigen::VectorXd ui = trans->interp_control(sol.x, t);
    CHECK(ui[0] == doctest::Approx(6 - 12 * t).scale(10.0).epsilon(1e-5));
  }
}

TEST_CASE("costate estimates recover the adjoint trajectory") {
  auto def = make_problem();
  colloc::Mesh mesh = colloc::Mesh::uniform(*def, 10, 4);
  auto trans = std::make_shared<colloc::Transcription>(def, mesh);
  nlp::SolverOptions opts;
  nlp::NlpSolution sol = nlp::solve_nlp(*trans, opts);
  REQUIRE(sol.status == nlp::SolveStatus::kOptimal);

  const Eigen::MatrixXd lam = trans->costates(sol);
  const auto& cs = trans->collocation_s();
  for (int cp = 0; cp < trans->num_collocation_points(); ++cp) {
    CHECK(lam(0, cp) == doctest::Approx(-24.0).epsilon(5e-3));
    CHECK(lam(1, cp) ==
          doctest::Approx(24.0 * cs[cp] - 12.0).scale(12.0).epsilon(5e-3));
  }
}

TEST_CASE("two phases sharing the boundary state give the same solution") {
  auto def = make_problem(2);
  colloc::Mesh mesh = colloc::Mesh::uniform(*def, 8, 4);
  auto trans = std::make_shared<colloc::Transcription>(def, mesh);
  nlp::SolverOptions opts;
  nlp::NlpSolution sol = nlp::solve_nlp(*trans, opts);
  REQUIRE(sol.status == nlp::SolveStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(12.0).epsilon(1e-7));
  // State at the phase boundary is a single shared variable; the interpolant
  // is continuous there.
  const Eigen::VectorXd xm = trans->interp_state(sol.x, 0.5);
  CHECK(xm[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("scaling invariance: scaled variables reach the same optimum") {
  auto def = make_problem();
  for (auto& ph : def->phases) {
    ph.x_scale = Eigen::Vector2d(0.5, 4.0);
    ph.u_scale = Eigen::VectorXd::Constant(1, 12.0);
    ph.c_scale.resize(0);
  }
  def->cost_scale = 6.0;
  colloc::Mesh mesh = colloc::Mesh::uniform(*def, 8, 4);
  auto trans = std::make_shared<colloc::Transcription>(def, mesh);
  nlp::SolverOptions opts;
  nlp::NlpSolution sol = nlp::solve_nlp(*trans, opts);
  REQUIRE(sol.status == nlp::SolveStatus::kOptimal);
  CHECK(sol.objective * def->cost_scale == doctest::Approx(12.0).epsilon(1e-7));
  const Eigen::MatrixXd X = trans->states(sol.x);
  const auto& ss = trans->support_s();
  for (int p = 0; p < trans->num_support_points(); ++p) {
    const double t = ss[p];
    CHECK(X(0, p) ==
          doctest::Approx(3 * t * t - 2 * t * t * t).scale(1.0).epsilon(1e-6));
  }
  // Costates are reported in physical units regardless of scaling.
  const Eigen::MatrixXd lam = trans->costates(sol);
  CHECK(lam(0, 3) == doctest::Approx(-24.0).epsilon(1e-2));
}

TEST_CASE("transcription derivatives agree with finite differences") {
  auto def = make_problem();
  colloc::Mesh mesh = colloc::Mesh::uniform(*def, 2, 3);
  colloc::Transcription trans(def, mesh);

  Eigen::VectorXd z = trans.initial_guess();
  for (int i = 0; i < z.size(); ++i) z[i] += 0.01 * std::sin(3.0 * i + 1.0);

  const Eigen::MatrixXd jd = nlp::dense_jacobian(trans, z);
  const Eigen::MatrixXd jf = nlp::fd_jacobian(trans, z);
  CHECK((jd - jf).lpNorm<Eigen::Infinity>() < 1e-6);

  Eigen::VectorXd grad;
  REQUIRE(trans.eval_gradient(z, grad));
  const Eigen::VectorXd gf = nlp::fd_gradient(trans, z);
  CHECK((grad - gf).lpNorm<Eigen::Infinity>() < 1e-6);

  Eigen::VectorXd lam(trans.num_constraints());
  for (int i = 0; i < lam.size(); ++i) lam[i] = 0.5 * std::sin(2.0 * i);
  const Eigen::MatrixXd hd = nlp::dense_lagrangian_hessian(trans, z, 0.7, lam);
  const Eigen::MatrixXd hf = nlp::fd_lagrangian_hessian(trans, z, 0.7, lam);
  CHECK((hd - hf).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("tight integral bound becomes active with a signed multiplier") {
  auto def = make_problem();
  ocp::set_integral_bounds(*def, 0, -10.0, 0.45, 1.0);
  colloc::Mesh mesh = colloc::Mesh::uniform(*def, 8, 4);
  auto trans = std::make_shared<colloc::Transcription>(def, mesh);
  nlp::SolverOptions opts;
  nlp::NlpSolution sol = nlp::solve_nlp(*trans, opts);
  REQUIRE(sol.status == nlp::SolveStatus::kOptimal);
  CHECK(trans->integrals(sol.x)[0] == doctest::Approx(0.45).epsilon(1e-6));
  CHECK(sol.objective > 12.0);
}

TEST_CASE("control rate augmentation keeps the optimum when relaxed") {
  auto base = make_problem();
  auto aug = std::make_shared<ocp::OcpDefinition>(ocp::augment_control_rates(
      *base, Eigen::VectorXd::Constant(1, 1e-8),
      Eigen::VectorXd::Constant(1, 500.0)));
  REQUIRE(aug->phases[0].nx == 3);
  REQUIRE(aug->phases[0].nu == 1);
  colloc::Mesh mesh = colloc::Mesh::uniform(*aug, 10, 4);
  auto trans = std::make_shared<colloc::Transcription>(aug, mesh);
  nlp::SolverOptions opts;
  nlp::NlpSolution sol = nlp::solve_nlp(*trans, opts);
  REQUIRE(sol.status == nlp::SolveStatus::kOptimal);
  CHECK(sol.objective == doctest::Approx(12.0).epsilon(1e-3));
  // The former control, now a state, still tracks 6 - 12t.
  const Eigen::MatrixXd X = trans->states(sol.x);
  const auto& ss = trans->support_s();
  for (int p = 1; p + 1 < trans->num_support_points(); ++p) {
    CHECK(X(2, p) ==
          doctest::Approx(6 - 12 * ss[p]).scale(10.0).epsilon(5e-3));
  }
}

TEST_CASE("error estimator flags a coarse mesh and refinement fixes it") {
  auto def = make_problem();
  colloc::Mesh coarse = colloc::Mesh::uniform(*def, 1, 2);
  auto t0 = std::make_shared<colloc::Transcription>(def, coarse);
  nlp::SolverOptions opts;
  nlp::NlpSolution s0 = nlp::solve_nlp(*t0, opts);
  REQUIRE(s0.status == nlp::SolveStatus::kOptimal);
  const Eigen::VectorXd e0 = t0->estimate_errors(s0.x);
  CHECK(e0.maxCoeff() > 1e-6);  // degree-2 interpolant cannot carry a cubic

  colloc::RefineOptions ropts;
  ropts.tol = 1e-9;
  colloc::MeshSolveResult res =
      colloc::solve_with_refinement(def, coarse, opts, ropts);
  CHECK(res.mesh_converged);
  CHECK(res.solution.status == nlp::SolveStatus::kOptimal);
  CHECK(res.solution.objective == doctest::Approx(12.0).epsilon(1e-7));
  CHECK(res.interval_errors.maxCoeff() <= ropts.tol);
}
