#pragma once

// Sparse nonlinear programming: problem interface plus an embedded
// primal-dual interior-point solver (log-barrier on bounds, slack variables
// for general inequalities, filter-free merit line search, inertia-corrected
// LDLT factorization of the regularized KKT system).
//
// The NlpProblem interface doubles as the plug point for an external solver:
// anything that can consume this callback set can replace the embedded
// method. The embedded solver is the default and the supported path.

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace fueltraj::nlp {

// Coordinate (COO) sparsity pattern. Entries may repeat; repeated entries
// are summed on assembly (setFromTriplets semantics), which lets problem
// assemblers emit overlapping blocks without deduplicating.
struct SparsityPattern {
  std::vector<int> rows, cols;
  int size() const { return static_cast<int>(rows.size()); }
};

class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_vars() const = 0;
  virtual int num_constraints() const = 0;

  // Bounds; +/-inf entries are honored. A variable with lo == hi is treated
  // as fixed and eliminated before the interior-point iteration. A
  // constraint with lo == hi is an equality.
  virtual void get_bounds(Eigen::VectorXd& x_lo, Eigen::VectorXd& x_hi,
                          Eigen::VectorXd& c_lo,
                          Eigen::VectorXd& c_hi) const = 0;

  virtual Eigen::VectorXd initial_guess() const = 0;

  // Evaluation callbacks return false when the point is not evaluable
  // (domain violation); the solver then treats the trial point as rejected
  // instead of aborting.
  virtual bool eval_objective(const Eigen::VectorXd& x, double& f) const = 0;
  virtual bool eval_gradient(const Eigen::VectorXd& x,
                             Eigen::VectorXd& grad) const = 0;
  virtual bool eval_constraints(const Eigen::VectorXd& x,
                                Eigen::VectorXd& c) const = 0;

  virtual const SparsityPattern& jacobian_pattern() const = 0;
  virtual bool eval_jacobian(const Eigen::VectorXd& x,
                             Eigen::VectorXd& values) const = 0;

  // Lower triangle (row >= col) of sigma * hess(f) + sum_i lambda_i hess(c_i).
  virtual const SparsityPattern& hessian_pattern() const = 0;
  virtual bool eval_hessian(const Eigen::VectorXd& x, double sigma,
                            const Eigen::VectorXd& lambda,
                            Eigen::VectorXd& values) const = 0;
};

enum class SolveStatus {
  kOptimal,
  kInfeasible,
  kIterationLimit,
  kNumericalFailure,
};

std::string to_string(SolveStatus s);

struct IterateInfo {
  int iter = 0;
  double objective = 0.0;
  double inf_pr = 0.0;  // max-norm constraint violation
  double inf_du = 0.0;  // max-norm dual infeasibility
  double mu = 0.0;
  double alpha = 0.0;
  double regularization = 0.0;
};

struct SolverOptions {
  double tol = 1e-7;
  double constr_tol = 1e-7;
  double mu_init = 1e-1;
  int max_iter = 500;
  double obj_scale_max_grad = 100.0;  // gradient-based objective auto-scaling
  // Constraint rows whose gradient at the start point exceeds this are
  // scaled down to it (0 disables); keeps ill-scaled rows from wrecking the
  // factorization.
  double constr_scale_max_grad = 100.0;
  bool verbose = false;
  // Called once per iteration when set (also honored when verbose=false).
  std::function<void(const IterateInfo&)> iterate_callback;
};

struct NlpSolution {
  SolveStatus status = SolveStatus::kNumericalFailure;
  Eigen::VectorXd x;
  double objective = 0.0;
  Eigen::VectorXd constraints;      // c(x)
  Eigen::VectorXd y;                // multipliers of general constraints
  Eigen::VectorXd z_lo, z_hi;       // bound multipliers (>= 0)
  double inf_pr = 0.0;              // final max constraint violation
  double inf_du = 0.0;              // final max dual infeasibility
  int iterations = 0;
  std::vector<IterateInfo> log;
};

// Solves the problem starting from `x0` when given, otherwise from the
// problem's own initial guess.
NlpSolution solve_nlp(const NlpProblem& problem, const SolverOptions& options,
                      const Eigen::VectorXd* x0 = nullptr);

// Central finite-difference harnesses used by the derivative cross-checks:
// dense Jacobian of the constraints and dense gradient/Hessian comparisons.
Eigen::MatrixXd fd_jacobian(const NlpProblem& p, const Eigen::VectorXd& x);
Eigen::VectorXd fd_gradient(const NlpProblem& p, const Eigen::VectorXd& x);
Eigen::MatrixXd fd_lagrangian_hessian(const NlpProblem& p,
                                      const Eigen::VectorXd& x, double sigma,
                                      const Eigen::VectorXd& lambda);
// Assemble sparse callbacks into dense matrices for the same comparisons.
Eigen::MatrixXd dense_jacobian(const NlpProblem& p, const Eigen::VectorXd& x);
Eigen::MatrixXd dense_lagrangian_hessian(const NlpProblem& p,
                                         const Eigen::VectorXd& x,
                                         double sigma,
                                         const Eigen::VectorXd& lambda);

}  // namespace fueltraj::nlp
