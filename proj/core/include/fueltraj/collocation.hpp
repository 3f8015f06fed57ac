#pragma once

// Legendre-Gauss-Radau pseudo-spectral collocation.
//
// Basis: for order N, the collocation nodes are the N roots of
// P_{N-1} + P_N on [-1, 1), which include the left endpoint -1; the right
// endpoint +1 carries a state sample but no collocation conditions (and no
// control). Quadrature with the Radau weights is exact through degree 2N-2;
// differentiation of the degree-N state interpolant is exact through
// degree N.
//
// Transcription: states live at all support points (collocation nodes plus
// each interval's right endpoint, shared with the next interval so state
// continuity is structural); controls live at collocation nodes. Defects
//   sum_i X_i D(j,i) - (ds_k/2) f(X_j, U_j, s_j) = 0
// enforce the dynamics; path constraints apply at collocation nodes; global
// integral rows and the cost use the Radau quadrature.

#include <Eigen/Core>

#include <memory>
#include <vector>

#include "fueltraj/nlp.hpp"
#include "fueltraj/ocp.hpp"

namespace fueltraj::colloc {

struct LgrBasis {
  int order = 0;
  Eigen::VectorXd nodes;    // N nodes on [-1, 1), nodes[0] = -1
  Eigen::VectorXd weights;  // N quadrature weights, sum = 2
  Eigen::MatrixXd diff;     // N x (N+1) differentiation matrix over the
                            // support points (nodes + right endpoint 1)

  // Cached, thread-safe lookup; order must be in [1, 40].
  static const LgrBasis& get(int order);
};

struct Mesh {
  struct Interval {
    int phase = 0;
    double s0 = 0.0, s1 = 0.0;
    int order = 4;
  };
  std::vector<Interval> intervals;

  // Uniform mesh: `per_unit` intervals distributed over each phase
  // proportionally to length (at least `min_per_phase` each).
  static Mesh uniform(const ocp::OcpDefinition& def, int total_intervals,
                      int order, int min_per_phase = 1);
};

class Transcription : public nlp::NlpProblem {
 public:
  Transcription(std::shared_ptr<const ocp::OcpDefinition> def, Mesh mesh);

  // NlpProblem interface.
  int num_vars() const override;
  int num_constraints() const override;
  void get_bounds(Eigen::VectorXd& x_lo, Eigen::VectorXd& x_hi,
                  Eigen::VectorXd& c_lo, Eigen::VectorXd& c_hi) const override;
  Eigen::VectorXd initial_guess() const override;
  bool eval_objective(const Eigen::VectorXd& x, double& f) const override;
  bool eval_gradient(const Eigen::VectorXd& x,
                     Eigen::VectorXd& grad) const override;
  bool eval_constraints(const Eigen::VectorXd& x,
                        Eigen::VectorXd& c) const override;
  const nlp::SparsityPattern& jacobian_pattern() const override;
  bool eval_jacobian(const Eigen::VectorXd& x,
                     Eigen::VectorXd& values) const override;
  const nlp::SparsityPattern& hessian_pattern() const override;
  bool eval_hessian(const Eigen::VectorXd& x, double sigma,
                    const Eigen::VectorXd& lambda,
                    Eigen::VectorXd& values) const override;

  // Layout queries.
  const Mesh& mesh() const { return mesh_; }
  const ocp::OcpDefinition& definition() const { return *def_; }
  int num_support_points() const { return static_cast<int>(s_support_.size()); }
  int num_collocation_points() const {
    return static_cast<int>(s_colloc_.size());
  }
  const std::vector<double>& support_s() const { return s_support_; }
  const std::vector<double>& collocation_s() const { return s_colloc_; }
  int phase_of_collocation(int cp) const { return colloc_phase_[cp]; }

  // Unscaled trajectory extraction from a decision vector.
  Eigen::MatrixXd states(const Eigen::VectorXd& z) const;    // nx x P
  Eigen::MatrixXd controls(const Eigen::VectorXd& z) const;  // nu x C
  Eigen::VectorXd integrals(const Eigen::VectorXd& z) const; // nq

  // Piecewise-polynomial interpolation of the stored solution at arbitrary
  // s (states: degree N; controls: degree N-1 within each interval).
  Eigen::VectorXd interp_state(const Eigen::VectorXd& z, double s) const;
  Eigen::VectorXd interp_control(const Eigen::VectorXd& z, double s) const;

  // Costate estimates at collocation points from defect multipliers
  // (lambda_j = -Lambda_j / w_j, unscaled to physical units).
  Eigen::MatrixXd costates(const nlp::NlpSolution& sol) const;  // nx x C
  // Path-constraint multipliers at collocation points (scaled rows undone).
  Eigen::MatrixXd path_multipliers(const nlp::NlpSolution& sol) const;

  // Max scaled dynamics residual of the interpolant per interval, sampled
  // between collocation nodes; comparable against the mesh tolerance.
  Eigen::VectorXd estimate_errors(const Eigen::VectorXd& z) const;

  // Transfers a solution from another transcription of the same problem
  // onto this mesh (used to warm-start after refinement).
  Eigen::VectorXd transfer_guess(const Transcription& from,
                                 const Eigen::VectorXd& z_from) const;

 private:
  struct IntervalLayout {
    int first_support = 0;   // index of node tau=-1 support point
    int first_colloc = 0;    // global collocation index of node 0
    double half_length = 0.0;
    int order = 4;
    int phase = 0;
  };

  int xvar(int point, int ix) const { return point * nx_ + ix; }
  int uvar(int cp, int iu) const { return n_state_vars_ + cp * nu_ + iu; }
  int defect_row(int cp, int ix) const { return cp * nx_ + ix; }
  int path_row(int cp, int ic) const {
    return n_defect_rows_ + path_row_offset_[cp] + ic;
  }
  int q_row(int iq) const { return n_defect_rows_ + n_path_rows_ + iq; }
  const ocp::Phase& phase_of(int cp) const {
    return def_->phases[colloc_phase_[cp]];
  }
  int interval_of_s(double s) const;
  void build_layout();
  void build_patterns();

  template <typename T>
  void eval_point(int cp, const Eigen::VectorXd& z, std::vector<T>& xbuf,
                  std::vector<T>& ubuf, std::vector<T>& fbuf,
                  std::vector<T>& cbuf, std::vector<T>& qbuf, T& g,
                  T& dt_ds, bool seed) const;

  std::shared_ptr<const ocp::OcpDefinition> def_;
  Mesh mesh_;
  int nx_ = 0, nu_ = 0, nq_ = 0;
  std::vector<IntervalLayout> layout_;
  std::vector<double> s_support_, s_colloc_;
  std::vector<int> colloc_interval_, colloc_phase_, colloc_node_;
  std::vector<int> path_row_offset_;
  std::vector<std::unique_ptr<const ocp::PointData>> point_data_;
  int n_state_vars_ = 0, n_defect_rows_ = 0, n_path_rows_ = 0;
  nlp::SparsityPattern jac_pattern_, hess_pattern_;
};

struct RefineOptions {
  double tol = 1e-3;
  int max_order = 10;
  int split_order = 4;      // order of intervals created by splitting
  int max_refinements = 8;
  int max_intervals = 2000;
};

// One refinement pass: bump orders / split intervals whose error exceeds
// tol. Returns true if the mesh changed.
bool refine_mesh(Mesh& mesh, const Eigen::VectorXd& errors,
                 const RefineOptions& opts);

struct MeshSolveResult {
  nlp::NlpSolution solution;
  std::shared_ptr<Transcription> transcription;
  Eigen::VectorXd interval_errors;
  int refinement_rounds = 0;
  bool mesh_converged = false;
};

// Solve-and-refine driver: solves on the initial mesh, then refines until
// every interval error is below opts.tol (or limits are hit), warm-starting
// each round from the previous solution.
MeshSolveResult solve_with_refinement(
    std::shared_ptr<const ocp::OcpDefinition> def, Mesh initial,
    const nlp::SolverOptions& solver_options, const RefineOptions& opts,
    const Eigen::VectorXd* initial_point = nullptr);

}  // namespace fueltraj::colloc
