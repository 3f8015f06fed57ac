#include "fueltraj/nlp.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

namespace fueltraj::nlp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Moves a point strictly inside its bounds (relative push, capped at a
// fraction of the interval width).
void push_to_interior(double& v, double lo, double hi) {
  constexpr double kPush = 0.01;
  if (std::isfinite(lo) && std::isfinite(hi)) {
    const double pl =
        std::min(kPush * std::max(1.0, std::abs(lo)), kPush * (hi - lo));
    const double pu =
        std::min(kPush * std::max(1.0, std::abs(hi)), kPush * (hi - lo));
    v = std::clamp(v, lo + pl, hi - pu);
  } else if (std::isfinite(lo)) {
    v = std::max(v, lo + kPush * std::max(1.0, std::abs(lo)));
  } else if (std::isfinite(hi)) {
    v = std::min(v, hi - kPush * std::max(1.0, std::abs(hi)));
  }
}

// View of a problem with fixed variables (lo == hi) removed from the
// decision vector. Constraints are untouched.
class FixedVarReduction final : public NlpProblem {
 public:
  FixedVarReduction(const NlpProblem& inner, const Eigen::VectorXd& x_lo,
                    const Eigen::VectorXd& x_hi)
      : inner_(inner), x_full_(x_lo.size()) {
    const int n = static_cast<int>(x_lo.size());
    red_of_full_.assign(n, -1);
    for (int i = 0; i < n; ++i) {
      if (x_lo[i] == x_hi[i]) {
        x_full_[i] = x_lo[i];
      } else {
        red_of_full_[i] = static_cast<int>(full_of_red_.size());
        full_of_red_.push_back(i);
      }
    }
    const auto& jp = inner_.jacobian_pattern();
    for (int k = 0; k < jp.size(); ++k) {
      const int rc = red_of_full_[jp.cols[k]];
      if (rc >= 0) {
        jac_pat_.rows.push_back(jp.rows[k]);
        jac_pat_.cols.push_back(rc);
        jac_keep_.push_back(k);
      }
    }
    const auto& hp = inner_.hessian_pattern();
    for (int k = 0; k < hp.size(); ++k) {
      const int rr = red_of_full_[hp.rows[k]];
      const int rc = red_of_full_[hp.cols[k]];
      if (rr >= 0 && rc >= 0) {
        hess_pat_.rows.push_back(rr);
        hess_pat_.cols.push_back(rc);
        hess_keep_.push_back(k);
      }
    }
  }

  Eigen::VectorXd reduce(const Eigen::VectorXd& x_full) const {
    Eigen::VectorXd r(num_vars());
    for (int i = 0; i < r.size(); ++i) r[i] = x_full[full_of_red_[i]];
    return r;
  }
  const Eigen::VectorXd& embed(const Eigen::VectorXd& x_red) const {
    for (int i = 0; i < x_red.size(); ++i) x_full_[full_of_red_[i]] = x_red[i];
    return x_full_;
  }
  int full_index(int reduced) const { return full_of_red_[reduced]; }

  int num_vars() const override { return static_cast<int>(full_of_red_.size()); }
  int num_constraints() const override { return inner_.num_constraints(); }

  void get_bounds(Eigen::VectorXd& x_lo, Eigen::VectorXd& x_hi,
                  Eigen::VectorXd& c_lo, Eigen::VectorXd& c_hi) const override {
    Eigen::VectorXd lf, hf;
    inner_.get_bounds(lf, hf, c_lo, c_hi);
    x_lo.resize(num_vars());
    x_hi.resize(num_vars());
    for (int i = 0; i < num_vars(); ++i) {
      x_lo[i] = lf[full_of_red_[i]];
      x_hi[i] = hf[full_of_red_[i]];
    }
  }

  Eigen::VectorXd initial_guess() const override {
    return reduce(inner_.initial_guess());
  }

  bool eval_objective(const Eigen::VectorXd& x, double& f) const override {
    return inner_.eval_objective(embed(x), f);
  }
  bool eval_gradient(const Eigen::VectorXd& x,
                     Eigen::VectorXd& grad) const override {
    Eigen::VectorXd gf;
    if (!inner_.eval_gradient(embed(x), gf)) return false;
    grad.resize(num_vars());
    for (int i = 0; i < num_vars(); ++i) grad[i] = gf[full_of_red_[i]];
    return true;
  }
  bool eval_constraints(const Eigen::VectorXd& x,
                        Eigen::VectorXd& c) const override {
    return inner_.eval_constraints(embed(x), c);
  }
  const SparsityPattern& jacobian_pattern() const override { return jac_pat_; }
  bool eval_jacobian(const Eigen::VectorXd& x,
                     Eigen::VectorXd& values) const override {
    Eigen::VectorXd vf;
    if (!inner_.eval_jacobian(embed(x), vf)) return false;
    values.resize(jac_pat_.size());
    for (size_t k = 0; k < jac_keep_.size(); ++k) values[k] = vf[jac_keep_[k]];
    return true;
  }
  const SparsityPattern& hessian_pattern() const override { return hess_pat_; }
  bool eval_hessian(const Eigen::VectorXd& x, double sigma,
                    const Eigen::VectorXd& lambda,
                    Eigen::VectorXd& values) const override {
    Eigen::VectorXd vf;
    if (!inner_.eval_hessian(embed(x), sigma, lambda, vf)) return false;
    values.resize(hess_pat_.size());
    for (size_t k = 0; k < hess_keep_.size(); ++k) {
      values[k] = vf[hess_keep_[k]];
    }
    return true;
  }

 private:
  const NlpProblem& inner_;
  std::vector<int> full_of_red_, red_of_full_;
  std::vector<int> jac_keep_, hess_keep_;
  SparsityPattern jac_pat_, hess_pat_;
  mutable Eigen::VectorXd x_full_;
};

// Appends one slack variable per inequality row so every constraint becomes
// an equality c_i(x) - s_i = 0 (or c_i(x) - rhs_i = 0 for equality rows);
// the original row bounds become slack bounds.
class SlackExtension final : public NlpProblem {
 public:
  explicit SlackExtension(const NlpProblem& inner) : inner_(inner) {
    inner_.get_bounds(xl_, xh_, cl_, ch_);
    const int m = inner_.num_constraints();
    slack_of_row_.assign(m, -1);
    for (int i = 0; i < m; ++i) {
      if (cl_[i] != ch_[i]) {
        slack_of_row_[i] = n_slack_++;
        row_of_slack_.push_back(i);
      }
    }
    jac_pat_ = inner_.jacobian_pattern();
    const int n = inner_.num_vars();
    for (int i = 0; i < m; ++i) {
      if (slack_of_row_[i] >= 0) {
        jac_pat_.rows.push_back(i);
        jac_pat_.cols.push_back(n + slack_of_row_[i]);
      }
    }
  }

  int inner_vars() const { return inner_.num_vars(); }

  // [x; s] with slacks started at the (interior-pushed) constraint values.
  Eigen::VectorXd extend_point(const Eigen::VectorXd& x_inner) const {
    Eigen::VectorXd x(num_vars());
    x.head(inner_.num_vars()) = x_inner;
    Eigen::VectorXd c;
    const bool ok = inner_.eval_constraints(x_inner, c);
    for (int k = 0; k < n_slack_; ++k) {
      const int i = row_of_slack_[k];
      double v = ok && std::isfinite(c[i]) ? c[i] : 0.0;
      push_to_interior(v, cl_[i], ch_[i]);
      x[inner_.num_vars() + k] = v;
    }
    return x;
  }

  int num_vars() const override { return inner_.num_vars() + n_slack_; }
  int num_constraints() const override { return inner_.num_constraints(); }

  void get_bounds(Eigen::VectorXd& x_lo, Eigen::VectorXd& x_hi,
                  Eigen::VectorXd& c_lo, Eigen::VectorXd& c_hi) const override {
    x_lo.resize(num_vars());
    x_hi.resize(num_vars());
    x_lo.head(xl_.size()) = xl_;
    x_hi.head(xh_.size()) = xh_;
    for (int k = 0; k < n_slack_; ++k) {
      x_lo[xl_.size() + k] = cl_[row_of_slack_[k]];
      x_hi[xh_.size() + k] = ch_[row_of_slack_[k]];
    }
    c_lo = Eigen::VectorXd::Zero(num_constraints());
    c_hi = Eigen::VectorXd::Zero(num_constraints());
  }

  Eigen::VectorXd initial_guess() const override {
    return extend_point(inner_.initial_guess());
  }

  bool eval_objective(const Eigen::VectorXd& x, double& f) const override {
    return inner_.eval_objective(x.head(inner_.num_vars()), f);
  }
  bool eval_gradient(const Eigen::VectorXd& x,
                     Eigen::VectorXd& grad) const override {
    Eigen::VectorXd g;
    if (!inner_.eval_gradient(x.head(inner_.num_vars()), g)) return false;
    grad = Eigen::VectorXd::Zero(num_vars());
    grad.head(g.size()) = g;
    return true;
  }
  bool eval_constraints(const Eigen::VectorXd& x,
                        Eigen::VectorXd& c) const override {
    if (!inner_.eval_constraints(x.head(inner_.num_vars()), c)) return false;
    for (int i = 0; i < c.size(); ++i) {
      c[i] -= slack_of_row_[i] >= 0
                  ? x[inner_.num_vars() + slack_of_row_[i]]
                  : cl_[i];
    }
    return true;
  }
  const SparsityPattern& jacobian_pattern() const override { return jac_pat_; }
  bool eval_jacobian(const Eigen::VectorXd& x,
                     Eigen::VectorXd& values) const override {
    Eigen::VectorXd v;
    if (!inner_.eval_jacobian(x.head(inner_.num_vars()), v)) return false;
    values.resize(jac_pat_.size());
    values.head(v.size()) = v;
    values.tail(n_slack_).setConstant(-1.0);
    return true;
  }
  const SparsityPattern& hessian_pattern() const override {
    return inner_.hessian_pattern();
  }
  bool eval_hessian(const Eigen::VectorXd& x, double sigma,
                    const Eigen::VectorXd& lambda,
                    Eigen::VectorXd& values) const override {
    return inner_.eval_hessian(x.head(inner_.num_vars()), sigma, lambda,
                               values);
  }

 private:
  const NlpProblem& inner_;
  Eigen::VectorXd xl_, xh_, cl_, ch_;
  std::vector<int> slack_of_row_, row_of_slack_;
  int n_slack_ = 0;
  SparsityPattern jac_pat_;
};

// Divides each constraint row by max(1, |row gradient at x0| / cap), the
// same capped gradient-based scaling the objective gets.  A handful of
// ill-scaled rows (stiff dynamics near a state-space corner) otherwise
// dominate the KKT matrix and break the value-blind factorization.
class RowScaling final : public NlpProblem {
 public:
  RowScaling(const NlpProblem& inner, const Eigen::VectorXd& x0, double cap)
      : inner_(inner) {
    const int m = inner_.num_constraints();
    scale_ = Eigen::VectorXd::Ones(m);
    Eigen::VectorXd v;
    if (inner_.eval_jacobian(x0, v) && v.allFinite()) {
      const auto& pat = inner_.jacobian_pattern();
      Eigen::VectorXd norm = Eigen::VectorXd::Zero(m);
      for (int k = 0; k < pat.size(); ++k) {
        norm[pat.rows[k]] = std::max(norm[pat.rows[k]], std::abs(v[k]));
      }
      for (int i = 0; i < m; ++i) {
        if (norm[i] > cap) scale_[i] = cap / norm[i];
      }
    }
  }

  const Eigen::VectorXd& row_scale() const { return scale_; }

  int num_vars() const override { return inner_.num_vars(); }
  int num_constraints() const override { return inner_.num_constraints(); }
  void get_bounds(Eigen::VectorXd& x_lo, Eigen::VectorXd& x_hi,
                  Eigen::VectorXd& c_lo, Eigen::VectorXd& c_hi) const override {
    inner_.get_bounds(x_lo, x_hi, c_lo, c_hi);
    for (int i = 0; i < c_lo.size(); ++i) {
      if (std::isfinite(c_lo[i])) c_lo[i] *= scale_[i];
      if (std::isfinite(c_hi[i])) c_hi[i] *= scale_[i];
    }
  }
  Eigen::VectorXd initial_guess() const override {
    return inner_.initial_guess();
  }
  bool eval_objective(const Eigen::VectorXd& x, double& f) const override {
    return inner_.eval_objective(x, f);
  }
  bool eval_gradient(const Eigen::VectorXd& x,
                     Eigen::VectorXd& grad) const override {
    return inner_.eval_gradient(x, grad);
  }
  bool eval_constraints(const Eigen::VectorXd& x,
                        Eigen::VectorXd& c) const override {
    if (!inner_.eval_constraints(x, c)) return false;
    c.array() *= scale_.array();
    return true;
  }
  const SparsityPattern& jacobian_pattern() const override {
    return inner_.jacobian_pattern();
  }
  bool eval_jacobian(const Eigen::VectorXd& x,
                     Eigen::VectorXd& values) const override {
    if (!inner_.eval_jacobian(x, values)) return false;
    const auto& pat = inner_.jacobian_pattern();
    for (int k = 0; k < pat.size(); ++k) values[k] *= scale_[pat.rows[k]];
    return true;
  }
  const SparsityPattern& hessian_pattern() const override {
    return inner_.hessian_pattern();
  }
  bool eval_hessian(const Eigen::VectorXd& x, double sigma,
                    const Eigen::VectorXd& lambda,
                    Eigen::VectorXd& values) const override {
    return inner_.eval_hessian(x, sigma, scale_.cwiseProduct(lambda), values);
  }

 private:
  const NlpProblem& inner_;
  Eigen::VectorXd scale_;
};

// Primal-dual interior-point method on the preprocessed problem
// (equality constraints only; no fixed variables):
//
//   min f(x)  s.t.  g(x) = 0,  xl <= x <= xh
//
// Monotone barrier loop, Newton steps on the condensed primal-dual KKT
// system, LDLT with inertia correction, l1 merit line search with a
// second-order correction, fraction-to-boundary stepping.
class Ipm {
 public:
  Ipm(const NlpProblem& p, const SolverOptions& o) : p_(p), o_(o) {
    theta_floor_ = 0.1 * o.constr_tol;
  }

  NlpSolution run(Eigen::VectorXd x);

 private:
  double barrier_sum(const Eigen::VectorXd& x) const {
    double b = 0.0;
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i]) {
        const double d = x[i] - xl_[i];
        if (d <= 0.0) return kInf;
        b -= std::log(d);
      }
      if (has_hi_[i]) {
        const double d = xh_[i] - x[i];
        if (d <= 0.0) return kInf;
        b -= std::log(d);
      }
    }
    return b;
  }

  void log_iter(NlpSolution& sol, int iter, double f, double inf_pr,
                double inf_du) {
    IterateInfo info;
    info.iter = iter;
    info.objective = f;
    info.inf_pr = inf_pr;
    info.inf_du = inf_du;
    info.mu = mu_;
    info.alpha = alpha_last_;
    info.regularization = delta_vis_;
    sol.log.push_back(info);
    if (o_.iterate_callback) o_.iterate_callback(info);
    if (o_.verbose) {
      if (iter % 10 == 0) {
        std::printf("%5s %16s %9s %9s %8s %8s %8s\n", "iter", "objective",
                    "inf_pr", "inf_du", "mu", "alpha", "reg");
      }
      std::printf("%5d %16.8e %9.2e %9.2e %8.1e %8.1e %8.1e\n", iter, f,
                  inf_pr, inf_du, mu_, alpha_last_, delta_vis_);
    }
  }

  const NlpProblem& p_;
  SolverOptions o_;
  int n_ = 0, m_ = 0;
  Eigen::VectorXd xl_, xh_, rhs_eq_;
  std::vector<char> has_lo_, has_hi_;
  double mu_ = 0.1;
  double sf_ = 1.0;          // objective scaling factor
  double nu_ = 1e-2;         // merit penalty
  // Infeasibility below this level is solve-accuracy noise; the merit stops
  // charging for it so that noise cannot veto late objective progress.
  double theta_floor_ = 0.0;
  double delta_last_ = 0.0;  // last successful Hessian regularization
  double delta_vis_ = 0.0;   // regularization used at the last step (log)
  double alpha_last_ = 0.0;
  // Endgame stall detection: a weakly active constraint (multiplier and
  // slack both near zero) can trap the iterate once the barrier weight is
  // at its floor; boosting the weight re-centers the pair and frees it.
  double stall_obj_ = std::numeric_limits<double>::infinity();
  int stall_count_ = 0;
  int mu_boosts_ = 0;
  int mu_hold_ = 0;

  Eigen::SparseMatrix<double> kkt_, kkt_full_, jmat_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
  bool analyzed_ = false;
  bool lu_analyzed_ = false;
  bool use_lu_ = false;
  bool kkt_debug_ = std::getenv("FUELTRAJ_KKT_DEBUG") != nullptr;
};

NlpSolution Ipm::run(Eigen::VectorXd x) {
  NlpSolution sol;
  n_ = p_.num_vars();
  m_ = p_.num_constraints();
  Eigen::VectorXd cl, ch;
  p_.get_bounds(xl_, xh_, cl, ch);
  for (int i = 0; i < m_; ++i) {
    if (cl[i] != ch[i]) throw std::logic_error("Ipm needs equality rows only");
  }
  rhs_eq_ = cl;
  has_lo_.assign(n_, 0);
  has_hi_.assign(n_, 0);
  int n_bnd = 0;
  for (int i = 0; i < n_; ++i) {
    has_lo_[i] = std::isfinite(xl_[i]);
    has_hi_[i] = std::isfinite(xh_[i]);
    n_bnd += has_lo_[i] + has_hi_[i];
    push_to_interior(x[i], xl_[i], xh_[i]);
  }

  mu_ = o_.mu_init;
  const double mu_final = 0.1 * o_.tol;
  const auto& jp = p_.jacobian_pattern();
  const auto& hp = p_.hessian_pattern();

  double f = 0.0;
  Eigen::VectorXd grad, c, jvals, hvals;
  if (!p_.eval_objective(x, f) || !p_.eval_gradient(x, grad) ||
      !p_.eval_constraints(x, c) || !p_.eval_jacobian(x, jvals) ||
      !std::isfinite(f) || !grad.allFinite() || !c.allFinite() ||
      !jvals.allFinite()) {
    sol.status = SolveStatus::kNumericalFailure;
    sol.x = x;
    return sol;
  }
  if (o_.obj_scale_max_grad > 0.0 && n_ > 0) {
    const double gmax = grad.cwiseAbs().maxCoeff();
    if (gmax > o_.obj_scale_max_grad) sf_ = o_.obj_scale_max_grad / gmax;
  }

  Eigen::VectorXd y = Eigen::VectorXd::Zero(m_);
  Eigen::VectorXd zl = Eigen::VectorXd::Zero(n_);
  Eigen::VectorXd zh = Eigen::VectorXd::Zero(n_);
  for (int i = 0; i < n_; ++i) {
    if (has_lo_[i]) zl[i] = 1.0;
    if (has_hi_[i]) zh[i] = 1.0;
  }

  std::vector<Eigen::Triplet<double>> trips;
  std::vector<Eigen::Triplet<double>> jtrips(jp.size());
  SolveStatus status = SolveStatus::kIterationLimit;
  int iter = 0;

  for (;; ++iter) {
    // Assemble J and the residuals of the current iterate.
    for (int k = 0; k < jp.size(); ++k) {
      jtrips[k] = {jp.rows[k], jp.cols[k], jvals[k]};
    }
    jmat_.resize(m_, n_);
    jmat_.setFromTriplets(jtrips.begin(), jtrips.end());

    Eigen::VectorXd gres = c - rhs_eq_;
    Eigen::VectorXd dual = sf_ * grad + jmat_.transpose() * y - zl + zh;
    const double inf_pr = m_ ? gres.lpNorm<Eigen::Infinity>() : 0.0;
    const double inf_du = n_ ? dual.lpNorm<Eigen::Infinity>() : 0.0;

    const double mult_sum = y.lpNorm<1>() + zl.lpNorm<1>() + zh.lpNorm<1>();
    const double s_d =
        std::max(100.0, mult_sum / std::max(1, m_ + n_bnd)) / 100.0;
    const double s_c =
        std::max(100.0, (zl.lpNorm<1>() + zh.lpNorm<1>()) / std::max(1, n_bnd)) /
        100.0;
    auto compl_inf = [&](double mu) {
      double e = 0.0;
      for (int i = 0; i < n_; ++i) {
        if (has_lo_[i]) e = std::max(e, std::abs(zl[i] * (x[i] - xl_[i]) - mu));
        if (has_hi_[i]) e = std::max(e, std::abs(zh[i] * (xh_[i] - x[i]) - mu));
      }
      return e;
    };
    const double e0 =
        std::max({inf_du / s_d, inf_pr, compl_inf(0.0) / s_c});

    log_iter(sol, iter, f, inf_pr, inf_du);

    if (e0 <= o_.tol && inf_pr <= o_.constr_tol) {
      status = SolveStatus::kOptimal;
      break;
    }
    if (iter >= o_.max_iter) {
      status = SolveStatus::kIterationLimit;
      break;
    }

    // Endgame stall: barrier weight at its floor, optimality not reached,
    // objective frozen. Boost the weight once in a while to re-center
    // weakly active pairs, and hold it there long enough for the
    // re-centering steps to act before the decrease rule sees it.
    if (mu_ <= 10.0 * mu_final) {
      if (std::abs(f - stall_obj_) <= 1e-11 * (1.0 + std::abs(f))) {
        ++stall_count_;
      } else {
        stall_count_ = 0;
        stall_obj_ = f;
      }
      if (stall_count_ >= 20 && mu_boosts_ < 5) {
        mu_ = std::min(1e-3, 1e4 * mu_);
        ++mu_boosts_;
        mu_hold_ = 10;
        stall_count_ = 0;
        stall_obj_ = std::numeric_limits<double>::infinity();
      }
    } else {
      stall_count_ = 0;
      stall_obj_ = f;
    }

    // Barrier parameter update (monotone between re-centerings).
    if (mu_hold_ > 0) {
      --mu_hold_;
    } else {
      while (mu_ > mu_final) {
        const double e_mu =
            std::max({inf_du / s_d, inf_pr, compl_inf(mu_) / s_c});
        if (e_mu > 10.0 * mu_) break;
        mu_ = std::max(mu_final, std::min(0.2 * mu_, std::pow(mu_, 1.5)));
      }
    }
    const double tau = std::max(0.99, 1.0 - mu_);

    if (!p_.eval_hessian(x, sf_, y, hvals) || !hvals.allFinite()) {
      status = SolveStatus::kNumericalFailure;
      break;
    }

    // Distances to bounds and the primal-dual barrier diagonal.
    Eigen::VectorXd dl(n_), dh(n_), sigma(n_);
    for (int i = 0; i < n_; ++i) {
      dl[i] = has_lo_[i] ? x[i] - xl_[i] : kInf;
      dh[i] = has_hi_[i] ? xh_[i] - x[i] : kInf;
      sigma[i] = (has_lo_[i] ? zl[i] / dl[i] : 0.0) +
                 (has_hi_[i] ? zh[i] / dh[i] : 0.0);
    }
    Eigen::VectorXd gphi = sf_ * grad;
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[i]) gphi[i] -= mu_ / dl[i];
      if (has_hi_[i]) gphi[i] += mu_ / dh[i];
    }

    Eigen::VectorXd rhs(n_ + m_);
    rhs.head(n_) = -(gphi + jmat_.transpose() * y);
    rhs.tail(m_) = -gres;

    // The (2,2) block keeps a small negative diagonal so the factorization
    // stays quasi-definite under the value-blind fill-reducing ordering;
    // iterative refinement below removes its effect from the step.
    const double delta_c = std::max(1e-12, 1e-8 * std::sqrt(mu_));

    // The unpivoted sparse LDLT is fast, but on saddle systems its pivot
    // signs are unreliable: it reports wrong inertia (in both directions)
    // long after the exact inertia is correct, and inflating the
    // regularization until the count happens to match cripples the step.
    // A matching count is therefore treated as a certificate that lets the
    // step through directly, while a mismatched count (or a numerical
    // breakdown, handled by a pivoted LU on the same matrix) only demotes
    // the step to "uncertified": it is still usable if it passes a
    // directional curvature test, which is the property correct inertia
    // would have guaranteed for it.
    enum class Factor { kCertified, kUncertified, kFailed };
    auto factor_ldlt = [&](double delta) {
      trips.clear();
      trips.reserve(hp.size() + n_ + jp.size() + m_);
      for (int k = 0; k < hp.size(); ++k) {
        const int r = std::max(hp.rows[k], hp.cols[k]);
        const int cc = std::min(hp.rows[k], hp.cols[k]);
        trips.emplace_back(r, cc, hvals[k]);
      }
      for (int i = 0; i < n_; ++i) {
        trips.emplace_back(i, i, sigma[i] + delta);
      }
      for (int k = 0; k < jp.size(); ++k) {
        trips.emplace_back(n_ + jp.rows[k], jp.cols[k], jvals[k]);
      }
      for (int i = 0; i < m_; ++i) {
        trips.emplace_back(n_ + i, n_ + i, -delta_c);
      }
      kkt_.resize(n_ + m_, n_ + m_);
      kkt_.setFromTriplets(trips.begin(), trips.end());
      if (!analyzed_) {
        ldlt_.analyzePattern(kkt_);
        analyzed_ = true;
      }
      ldlt_.factorize(kkt_);
      if (ldlt_.info() != Eigen::Success) return Factor::kFailed;
      const auto& d = ldlt_.vectorD();
      int neg = 0, zero = 0;
      for (int i = 0; i < d.size(); ++i) {
        if (!std::isfinite(d[i])) return Factor::kFailed;
        if (d[i] < -1e-100) {
          ++neg;
        } else if (d[i] <= 1e-100) {
          ++zero;
        }
      }
      return neg == m_ && zero == 0 ? Factor::kCertified
                                    : Factor::kUncertified;
    };
    bool certified = false;
    auto factor_lu = [&]() {
      kkt_full_ = kkt_.selfadjointView<Eigen::Lower>();
      if (!lu_analyzed_) {
        lu_.analyzePattern(kkt_full_);
        lu_analyzed_ = true;
      }
      lu_.factorize(kkt_full_);
      if (lu_.info() != Eigen::Success) return false;
      use_lu_ = true;
      if (kkt_debug_) std::printf("   kkt: lu fallback engaged\n");
      return true;
    };
    auto try_factor = [&](double delta) {
      const Factor r = factor_ldlt(delta);
      if (kkt_debug_) {
        std::printf("   kkt: delta %8.1e -> %s\n", delta,
                    r == Factor::kCertified     ? "certified"
                    : r == Factor::kUncertified ? "uncertified"
                                                : "failed");
      }
      certified = r == Factor::kCertified;
      if (r != Factor::kFailed) {
        use_lu_ = false;
        return true;
      }
      return factor_lu();
    };
    auto next_delta = [&](double delta) {
      return delta == 0.0 ? 1e-8 : delta * 10.0;
    };

    // Solve against the target system (delta_c removed) using the
    // regularized factorization, with a couple of refinement sweeps.
    auto solve_once = [&](const Eigen::VectorXd& b) {
      return use_lu_ ? Eigen::VectorXd(lu_.solve(b))
                     : Eigen::VectorXd(ldlt_.solve(b));
    };
    auto solve_refined = [&](const Eigen::VectorXd& b) {
      auto target_residual = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd r =
            b - kkt_.selfadjointView<Eigen::Lower>() * v;
        r.tail(m_) -= delta_c * v.tail(m_);
        return r;
      };
      Eigen::VectorXd d = solve_once(b);
      if (!d.allFinite()) return d;
      Eigen::VectorXd best = d;
      double best_norm = target_residual(d).norm();
      for (int r = 0; r < 2; ++r) {
        d += solve_once(target_residual(d));
        if (!d.allFinite()) break;
        const double rn = target_residual(d).norm();
        if (rn < best_norm) {
          best_norm = rn;
          best = d;
        }
      }
      return best;
    };

    // Inertia-corrected factorization, then merit line search; a failed
    // search retries with a larger regularization (steeper, shorter step).
    bool accepted = false;
    double delta_hint = 0.0;
    Eigen::VectorXd x_new, c_new;
    double f_new = 0.0;

    for (int attempt = 0; attempt < 4 && !accepted; ++attempt) {
      double delta = delta_hint;
      Eigen::VectorXd step;
      bool have_step = false;
      for (int tries = 0; tries < 60 && !have_step; ++tries) {
        if (delta > 1e40) break;
        if (!try_factor(delta)) {
          delta = next_delta(delta);
          continue;
        }
        step = solve_refined(rhs);
        if (!step.allFinite()) {
          delta = next_delta(std::max(delta, 1e-5));
          continue;
        }
        if (!certified) {
          // No trustworthy inertia for this factorization: accept the
          // direction only if it sees the nonnegative curvature a
          // correct-inertia factorization would certify. A negative value
          // from the sign-unreliable factorization may itself be an
          // artifact of an unstable elimination, so recompute the step with
          // the pivoted LU before treating the curvature as real.
          auto quad_of = [&](const Eigen::VectorXd& s) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(n_ + m_);
            v.head(n_) = s.head(n_);
            return v.dot(kkt_.selfadjointView<Eigen::Lower>() * v);
          };
          double quad = quad_of(step);
          if (!(quad >= 0.0) && !use_lu_ && factor_lu()) {
            step = solve_refined(rhs);
            if (!step.allFinite()) {
              delta = next_delta(std::max(delta, 1e-5));
              continue;
            }
            quad = quad_of(step);
          }
          if (!(quad >= 0.0)) {
            delta = next_delta(delta);
            continue;
          }
        }
        have_step = true;
      }
      if (!have_step) {
        status = SolveStatus::kNumericalFailure;
        break;
      }
      if (delta > 0.0) delta_last_ = delta;
      delta_vis_ = delta;

      Eigen::VectorXd dx = step.head(n_);
      Eigen::VectorXd dy = step.tail(m_);

      auto fraction_to_boundary = [&](const Eigen::VectorXd& d) {
        double a = 1.0;
        int argmin = -1;
        for (int i = 0; i < n_; ++i) {
          if (has_lo_[i] && d[i] < 0.0 && -tau * dl[i] / d[i] < a) {
            a = -tau * dl[i] / d[i];
            argmin = i;
          }
          if (has_hi_[i] && d[i] > 0.0 && tau * dh[i] / d[i] < a) {
            a = tau * dh[i] / d[i];
            argmin = i;
          }
        }
        if (kkt_debug_ && a < 1e-8 && argmin >= 0) {
          std::printf(
              "   ftb: var %d limits alpha %.2e (gap lo %.2e hi %.2e, step "
              "%.2e, x %.6e)\n",
              argmin, a, dl[argmin], dh[argmin], d[argmin], x[argmin]);
        }
        return a;
      };

      const double theta0 =
          m_ ? std::max(gres.lpNorm<1>() - theta_floor_, 0.0) : 0.0;
      const double phi0 = sf_ * f + mu_ * barrier_sum(x);
      const double dphi = gphi.dot(dx);
      const double eps = std::numeric_limits<double>::epsilon();

      // A direction that cannot change the iterate at machine precision
      // means the barrier problem is solved as tightly as the arithmetic
      // allows; accept it without consulting the merit function, whose
      // comparisons are pure rounding noise at that scale.
      double rel_step = 0.0;
      for (int i = 0; i < n_; ++i) {
        rel_step = std::max(rel_step,
                            std::abs(dx[i]) / (1.0 + std::abs(x[i])));
      }
      const bool tiny_step = rel_step < 10.0 * eps;

      // Merit penalty: keep the direction a descent direction for
      // phi + nu * |g|_1.
      if (theta0 > 1e-14) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n_ + m_);
        v.head(n_) = dx;
        const double quad =
            v.dot(kkt_.selfadjointView<Eigen::Lower>() * v);
        const double nu_req =
            (dphi + 0.5 * std::max(0.0, quad)) / (0.5 * theta0);
        if (nu_ < nu_req) nu_ = 1.2 * nu_req;
      }
      double dmerit = dphi - nu_ * theta0;
      if (!(dmerit < 0.0) && !tiny_step) {
        // Near a solution the predicted decrease can round to zero or a
        // stray positive; treat sub-noise values as flat rather than as a
        // regularization problem.
        const double noise = 10.0 * eps * (std::abs(phi0) + nu_ * theta0);
        if (dmerit <= noise) {
          dmerit = std::min(dmerit, 0.0);
        } else {
          delta_hint = std::max(1e-4, delta * 100.0);
          continue;
        }
      }
      const double merit0 = phi0 + nu_ * theta0;
      // Armijo comparisons done with a relative machine-precision slack so
      // acceptance still works when the decrease is below the ulp of the
      // merit value itself.
      auto armijo_ok = [&](double merit_t, double a) {
        const double target = merit0 + 1e-4 * a * dmerit;
        return merit_t <= target + 10.0 * eps * std::abs(target);
      };

      auto try_point = [&](const Eigen::VectorXd& xt, double& ft,
                           Eigen::VectorXd& ct, double& merit_t) {
        if (!p_.eval_objective(xt, ft) || !p_.eval_constraints(xt, ct)) {
          return false;
        }
        if (!std::isfinite(ft) || !ct.allFinite()) return false;
        const double bar = barrier_sum(xt);
        if (!std::isfinite(bar)) return false;
        merit_t = sf_ * ft + mu_ * bar +
                  nu_ * std::max((ct - rhs_eq_).lpNorm<1>() - theta_floor_,
                                 0.0);
        return std::isfinite(merit_t);
      };

      const double alpha_max = fraction_to_boundary(dx);
      double alpha = alpha_max;
      for (int bt = 0; bt < 40 && alpha > 1e-14; ++bt) {
        Eigen::VectorXd xt = x + alpha * dx;
        double ft, merit_t;
        Eigen::VectorXd ct;
        const bool ok = try_point(xt, ft, ct, merit_t);
        if (ok && (tiny_step || armijo_ok(merit_t, alpha))) {
          accepted = true;
          x_new = xt;
          f_new = ft;
          c_new = ct;
          break;
        }
        // Second-order correction on the first rejected full step.
        if (bt == 0 && m_ > 0 && ok) {
          Eigen::VectorXd rhs_soc = rhs;
          rhs_soc.tail(m_) = -(alpha * gres + (ct - rhs_eq_));
          Eigen::VectorXd step2 = solve_refined(rhs_soc);
          if (step2.allFinite()) {
            Eigen::VectorXd dx2 = step2.head(n_);
            const double alpha2 = fraction_to_boundary(dx2);
            Eigen::VectorXd xt2 = x + alpha2 * dx2;
            double ft2, merit_t2;
            Eigen::VectorXd ct2;
            if (try_point(xt2, ft2, ct2, merit_t2) &&
                armijo_ok(merit_t2, alpha2)) {
              accepted = true;
              x_new = xt2;
              f_new = ft2;
              c_new = ct2;
              dx = dx2;
              dy = step2.tail(m_);
              alpha = alpha2;
              break;
            }
          }
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        delta_hint = std::max(1e-4, delta * 100.0);
        continue;
      }

      // Dual steps from the linearized complementarity conditions.
      Eigen::VectorXd dzl = Eigen::VectorXd::Zero(n_);
      Eigen::VectorXd dzh = Eigen::VectorXd::Zero(n_);
      for (int i = 0; i < n_; ++i) {
        if (has_lo_[i]) {
          dzl[i] = mu_ / dl[i] - zl[i] - zl[i] / dl[i] * dx[i];
        }
        if (has_hi_[i]) {
          dzh[i] = mu_ / dh[i] - zh[i] + zh[i] / dh[i] * dx[i];
        }
      }
      double alpha_z = 1.0;
      for (int i = 0; i < n_; ++i) {
        if (has_lo_[i] && dzl[i] < 0.0) {
          alpha_z = std::min(alpha_z, -tau * zl[i] / dzl[i]);
        }
        if (has_hi_[i] && dzh[i] < 0.0) {
          alpha_z = std::min(alpha_z, -tau * zh[i] / dzh[i]);
        }
      }

      x = x_new;
      f = f_new;
      c = c_new;
      y += alpha * dy;
      zl += alpha_z * dzl;
      zh += alpha_z * dzh;
      alpha_last_ = alpha;

      // Keep bound multipliers within a large band around mu/d so they stay
      // consistent with the barrier problem.
      constexpr double kSigmaBand = 1e10;
      for (int i = 0; i < n_; ++i) {
        if (has_lo_[i]) {
          const double d = std::max(x[i] - xl_[i], 1e-300);
          zl[i] = std::clamp(zl[i], mu_ / (kSigmaBand * d),
                             kSigmaBand * mu_ / d);
        }
        if (has_hi_[i]) {
          const double d = std::max(xh_[i] - x[i], 1e-300);
          zh[i] = std::clamp(zh[i], mu_ / (kSigmaBand * d),
                             kSigmaBand * mu_ / d);
        }
      }
    }

    if (status == SolveStatus::kNumericalFailure) break;
    if (!accepted) {
      status = inf_pr > std::max(1e-5, 100.0 * o_.constr_tol)
                   ? SolveStatus::kInfeasible
                   : SolveStatus::kNumericalFailure;
      break;
    }

    if (!p_.eval_gradient(x, grad) || !p_.eval_jacobian(x, jvals) ||
        !grad.allFinite() || !jvals.allFinite()) {
      status = SolveStatus::kNumericalFailure;
      break;
    }
  }

  sol.status = status;
  sol.x = x;
  sol.objective = f;
  sol.constraints = c;
  // Multipliers are reported for the problem as posed (objective scaling
  // unwound).
  sol.y = y / sf_;
  sol.z_lo = zl / sf_;
  sol.z_hi = zh / sf_;
  sol.iterations = iter;
  if (!sol.log.empty()) {
    sol.inf_pr = sol.log.back().inf_pr;
    sol.inf_du = sol.log.back().inf_du;
  }
  return sol;
}

}  // namespace

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal:
      return "optimal";
    case SolveStatus::kInfeasible:
      return "locally infeasible";
    case SolveStatus::kIterationLimit:
      return "iteration limit";
    case SolveStatus::kNumericalFailure:
      return "numerical failure";
  }
  return "unknown";
}

NlpSolution solve_nlp(const NlpProblem& problem, const SolverOptions& options,
                      const Eigen::VectorXd* x0) {
  Eigen::VectorXd xl, xh, cl, ch;
  problem.get_bounds(xl, xh, cl, ch);
  if (xl.size() != problem.num_vars() || cl.size() != problem.num_constraints()) {
    throw std::invalid_argument("bound sizes do not match the problem");
  }
  bool any_fixed = false, any_ineq = false;
  for (int i = 0; i < xl.size(); ++i) {
    if (xl[i] > xh[i]) throw std::invalid_argument("variable bounds cross");
    any_fixed = any_fixed || xl[i] == xh[i];
  }
  for (int i = 0; i < cl.size(); ++i) {
    if (cl[i] > ch[i]) throw std::invalid_argument("constraint bounds cross");
    any_ineq = any_ineq || cl[i] != ch[i];
  }

  Eigen::VectorXd start = x0 ? *x0 : problem.initial_guess();
  if (start.size() != problem.num_vars()) {
    throw std::invalid_argument("initial point size does not match");
  }

  const NlpProblem* p = &problem;
  std::unique_ptr<FixedVarReduction> red;
  if (any_fixed) {
    red = std::make_unique<FixedVarReduction>(problem, xl, xh);
    p = red.get();
  }
  Eigen::VectorXd start_red = red ? red->reduce(start) : start;
  std::unique_ptr<RowScaling> rsc;
  if (options.constr_scale_max_grad > 0.0 && p->num_vars() > 0 &&
      p->num_constraints() > 0) {
    rsc = std::make_unique<RowScaling>(*p, start_red,
                                       options.constr_scale_max_grad);
    p = rsc.get();
  }
  std::unique_ptr<SlackExtension> slack;
  if (any_ineq) {
    slack = std::make_unique<SlackExtension>(*p);
    p = slack.get();
  }
  Eigen::VectorXd start_core =
      slack ? slack->extend_point(start_red) : start_red;

  NlpSolution core;
  if (p->num_vars() == 0) {
    // Everything fixed: just classify feasibility of the pinned point.
    core.x.resize(0);
    Eigen::VectorXd cfix;
    double ffix = 0.0;
    const Eigen::VectorXd& x_full = red ? red->embed(start_red) : start;
    if (problem.eval_constraints(x_full, cfix) &&
        problem.eval_objective(x_full, ffix)) {
      double viol = 0.0;
      for (int i = 0; i < cfix.size(); ++i) {
        viol = std::max({viol, cl[i] - cfix[i], cfix[i] - ch[i]});
      }
      core.status = viol <= options.constr_tol ? SolveStatus::kOptimal
                                               : SolveStatus::kInfeasible;
      core.objective = ffix;
      core.inf_pr = viol;
      core.y = Eigen::VectorXd::Zero(problem.num_constraints());
    } else {
      core.status = SolveStatus::kNumericalFailure;
    }
  } else {
    Ipm ipm(*p, options);
    core = ipm.run(start_core);
  }

  // Unwind the wrappers onto the original variable space.
  NlpSolution sol = core;
  if (rsc && core.y.size() == problem.num_constraints()) {
    sol.y = rsc->row_scale().cwiseProduct(core.y);
  }
  const int n_red = red ? red->num_vars() : problem.num_vars();
  Eigen::VectorXd x_red =
      core.x.size() >= n_red ? core.x.head(n_red).eval() : start_red;
  sol.x = red ? red->embed(x_red) : x_red;
  problem.eval_constraints(sol.x, sol.constraints);
  if (red) {
    Eigen::VectorXd zlo = Eigen::VectorXd::Zero(problem.num_vars());
    Eigen::VectorXd zhi = Eigen::VectorXd::Zero(problem.num_vars());
    if (core.z_lo.size() >= n_red) {
      for (int i = 0; i < n_red; ++i) {
        zlo[red->full_index(i)] = core.z_lo[i];
        zhi[red->full_index(i)] = core.z_hi[i];
      }
    }
    sol.z_lo = zlo;
    sol.z_hi = zhi;
  } else if (slack && core.z_lo.size() == p->num_vars()) {
    sol.z_lo = core.z_lo.head(problem.num_vars());
    sol.z_hi = core.z_hi.head(problem.num_vars());
  }
  return sol;
}

Eigen::MatrixXd fd_jacobian(const NlpProblem& p, const Eigen::VectorXd& x) {
  const int n = p.num_vars(), m = p.num_constraints();
  Eigen::MatrixXd J(m, n);
  Eigen::VectorXd xp = x, cp, cm;
  const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  for (int i = 0; i < n; ++i) {
    const double h = base * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    p.eval_constraints(xp, cp);
    xp[i] = x[i] - h;
    p.eval_constraints(xp, cm);
    xp[i] = x[i];
    J.col(i) = (cp - cm) / (2.0 * h);
  }
  return J;
}

Eigen::VectorXd fd_gradient(const NlpProblem& p, const Eigen::VectorXd& x) {
  const int n = p.num_vars();
  Eigen::VectorXd g(n), xp = x;
  const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  for (int i = 0; i < n; ++i) {
    const double h = base * std::max(1.0, std::abs(x[i]));
    double fp, fm;
    xp[i] = x[i] + h;
    p.eval_objective(xp, fp);
    xp[i] = x[i] - h;
    p.eval_objective(xp, fm);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd fd_lagrangian_hessian(const NlpProblem& p,
                                      const Eigen::VectorXd& x, double sigma,
                                      const Eigen::VectorXd& lambda) {
  const int n = p.num_vars();
  const auto& jp = p.jacobian_pattern();
  auto grad_lag = [&](const Eigen::VectorXd& xx) {
    Eigen::VectorXd g, jv;
    p.eval_gradient(xx, g);
    p.eval_jacobian(xx, jv);
    Eigen::VectorXd gl = sigma * g;
    for (int k = 0; k < jp.size(); ++k) {
      gl[jp.cols[k]] += lambda[jp.rows[k]] * jv[k];
    }
    return gl;
  };
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd xp = x;
  const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  for (int i = 0; i < n; ++i) {
    const double h = base * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const Eigen::VectorXd gp = grad_lag(xp);
    xp[i] = x[i] - h;
    const Eigen::VectorXd gm = grad_lag(xp);
    xp[i] = x[i];
    H.col(i) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

Eigen::MatrixXd dense_jacobian(const NlpProblem& p, const Eigen::VectorXd& x) {
  Eigen::MatrixXd J =
      Eigen::MatrixXd::Zero(p.num_constraints(), p.num_vars());
  const auto& jp = p.jacobian_pattern();
  Eigen::VectorXd v;
  p.eval_jacobian(x, v);
  for (int k = 0; k < jp.size(); ++k) J(jp.rows[k], jp.cols[k]) += v[k];
  return J;
}

Eigen::MatrixXd dense_lagrangian_hessian(const NlpProblem& p,
                                         const Eigen::VectorXd& x,
                                         double sigma,
                                         const Eigen::VectorXd& lambda) {
  const int n = p.num_vars();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  const auto& hp = p.hessian_pattern();
  Eigen::VectorXd v;
  p.eval_hessian(x, sigma, lambda, v);
  for (int k = 0; k < hp.size(); ++k) {
    const int r = hp.rows[k], c = hp.cols[k];
    H(r, c) += v[k];
    if (r != c) H(c, r) += v[k];
  }
  return H;
}

}  // namespace fueltraj::nlp
