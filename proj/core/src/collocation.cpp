#include "fueltraj/collocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

namespace fueltraj::colloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Legendre polynomial P_n and derivative at x (interior points only for the
// derivative identity).
void legendre(int n, double x, double& p, double& dp) {
  if (n == 0) {
    p = 1.0;
    dp = 0.0;
    return;
  }
  double pm = 1.0, pc = x;
  for (int k = 2; k <= n; ++k) {
    const double pn = ((2.0 * k - 1.0) * x * pc - (k - 1.0) * pm) / k;
    pm = pc;
    pc = pn;
  }
  p = pc;
  dp = n * (x * pc - pm) / (x * x - 1.0);
}

// R(t) = P_{N-1}(t) + P_N(t); its N roots on [-1, 1) are the collocation
// nodes. The factor (1+t) is deflated away so Newton/bisection only sees the
// N-1 interior roots.
double radau_poly(int n, double t, double& dr) {
  double p1, dp1, p2, dp2;
  legendre(n - 1, t, p1, dp1);
  legendre(n, t, p2, dp2);
  dr = dp1 + dp2;
  return p1 + p2;
}

Eigen::VectorXd bary_weights(const Eigen::VectorXd& t) {
  const int n = static_cast<int>(t.size());
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j != i) w[i] /= (t[i] - t[j]);
    }
  }
  return w;
}

double bary_interp(const Eigen::VectorXd& t, const Eigen::VectorXd& w,
                   const Eigen::VectorXd& f, double tau) {
  double num = 0.0, den = 0.0;
  for (int i = 0; i < t.size(); ++i) {
    const double d = tau - t[i];
    if (std::abs(d) < 1e-14) return f[i];
    const double c = w[i] / d;
    num += c * f[i];
    den += c;
  }
  return num / den;
}

// Derivative of the barycentric interpolant at a non-node point.
double bary_deriv(const Eigen::VectorXd& t, const Eigen::VectorXd& w,
                  const Eigen::VectorXd& f, double tau) {
  const double p = bary_interp(t, w, f, tau);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < t.size(); ++i) {
    const double d = tau - t[i];
    den += w[i] / d;
    num += w[i] * (p - f[i]) / (d * d);
  }
  return num / den;
}

}  // namespace

const LgrBasis& LgrBasis::get(int order) {
  if (order < 1 || order > 40) {
    throw std::invalid_argument("LGR order must be in [1, 40]");
  }
  static std::mutex mu;
  static std::map<int, LgrBasis> cache;
  std::scoped_lock lock(mu);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;

  const int n = order;
  LgrBasis b;
  b.order = n;
  b.nodes.resize(n);
  b.nodes[0] = -1.0;

  // Interior roots of (P_{N-1}+P_N)/(1+t): bracket on a fine grid, then
  // bisect and polish with Newton to ~1e-15.
  if (n > 1) {
    auto deflated = [&](double t) {
      double dr;
      const double r = radau_poly(n, t, dr);
      return r / (1.0 + t);
    };
    const int grid = 200 * n;
    std::vector<double> roots;
    double prev_t = -1.0 + 1e-9;
    double prev_v = deflated(prev_t);
    for (int i = 1; i <= grid; ++i) {
      const double t = -1.0 + 2.0 * (1.0 - 1e-12) * i / grid;
      const double v = deflated(t);
      if (prev_v == 0.0) roots.push_back(prev_t);
      if (prev_v * v < 0.0) {
        double lo = prev_t, hi = t, vlo = prev_v;
        for (int it2 = 0; it2 < 100; ++it2) {
          const double mid = 0.5 * (lo + hi);
          const double vm = deflated(mid);
          if (vm == 0.0) {
            lo = hi = mid;
            break;
          }
          if (vlo * vm < 0.0) {
            hi = mid;
          } else {
            lo = mid;
            vlo = vm;
          }
        }
        double root = 0.5 * (lo + hi);
        for (int it2 = 0; it2 < 4; ++it2) {  // Newton polish on R itself
          double dr;
          const double r = radau_poly(n, root, dr);
          const double step = r / dr;
          if (!std::isfinite(step)) break;
          root -= step;
        }
        roots.push_back(root);
      }
      prev_t = t;
      prev_v = v;
    }
    if (static_cast<int>(roots.size()) != n - 1) {
      throw std::runtime_error("LGR node search failed");
    }
    std::sort(roots.begin(), roots.end());
    for (int i = 0; i < n - 1; ++i) b.nodes[i + 1] = roots[i];
  }

  // Quadrature weights: w_0 = 2/N^2, w_i = (1 - t_i) / (N^2 P_{N-1}(t_i)^2).
  b.weights.resize(n);
  b.weights[0] = 2.0 / (n * n);
  for (int i = 1; i < n; ++i) {
    double p, dp;
    legendre(n - 1, b.nodes[i], p, dp);
    b.weights[i] = (1.0 - b.nodes[i]) / (n * n * p * p);
  }

  // Differentiation matrix over the N+1 support points (nodes plus +1).
  Eigen::VectorXd supp(n + 1);
  supp.head(n) = b.nodes;
  supp[n] = 1.0;
  const Eigen::VectorXd bw = bary_weights(supp);
  b.diff.resize(n, n + 1);
  for (int j = 0; j < n; ++j) {
    double diag = 0.0;
    for (int i = 0; i <= n; ++i) {
      if (i == j) continue;
      const double d = (bw[i] / bw[j]) / (supp[j] - supp[i]);
      b.diff(j, i) = d;
      diag -= d;
    }
    b.diff(j, j) = diag;
  }

  return cache.emplace(order, std::move(b)).first->second;
}

Mesh Mesh::uniform(const ocp::OcpDefinition& def, int total_intervals,
                   int order, int min_per_phase) {
  def.validate();
  const double total_len = def.s_end() - def.s_begin();
  Mesh mesh;
  for (int p = 0; p < static_cast<int>(def.phases.size()); ++p) {
    const auto& ph = def.phases[p];
    const double len = ph.s1 - ph.s0;
    int k = std::max(
        min_per_phase,
        static_cast<int>(std::lround(total_intervals * len / total_len)));
    for (int i = 0; i < k; ++i) {
      Interval iv;
      iv.phase = p;
      iv.s0 = ph.s0 + len * i / k;
      iv.s1 = ph.s0 + len * (i + 1) / k;
      iv.order = order;
      mesh.intervals.push_back(iv);
    }
    mesh.intervals.back().s1 = ph.s1;  // exact endpoint
  }
  return mesh;
}

// ---------------------------------------------------------------------------

Transcription::Transcription(std::shared_ptr<const ocp::OcpDefinition> def,
                             Mesh mesh)
    : def_(std::move(def)), mesh_(std::move(mesh)) {
  def_->validate();
  if (mesh_.intervals.empty()) {
    throw std::invalid_argument("empty mesh");
  }
  nx_ = def_->phases.front().nx;
  nu_ = def_->phases.front().nu;
  nq_ = def_->nq;
  build_layout();
  build_patterns();
}

void Transcription::build_layout() {
  int support = 0, colloc = 0, path_rows = 0;
  double s_cursor = def_->s_begin();
  int prev_phase = 0;
  for (const auto& iv : mesh_.intervals) {
    if (iv.phase < prev_phase ||
        iv.phase >= static_cast<int>(def_->phases.size())) {
      throw std::invalid_argument("mesh phases out of order");
    }
    prev_phase = iv.phase;
    const auto& ph = def_->phases[iv.phase];
    if (iv.s0 < ph.s0 - 1e-9 || iv.s1 > ph.s1 + 1e-9 || !(iv.s1 > iv.s0)) {
      throw std::invalid_argument("mesh interval outside its phase");
    }
    if (std::abs(iv.s0 - s_cursor) > 1e-9 * std::max(1.0, std::abs(s_cursor))) {
      throw std::invalid_argument("mesh intervals must be contiguous");
    }
    s_cursor = iv.s1;
    const LgrBasis& basis = LgrBasis::get(iv.order);

    IntervalLayout lay;
    lay.first_support = support;
    lay.first_colloc = colloc;
    lay.half_length = 0.5 * (iv.s1 - iv.s0);
    lay.order = iv.order;
    lay.phase = iv.phase;
    layout_.push_back(lay);

    for (int j = 0; j < iv.order; ++j) {
      const double s = iv.s0 + (basis.nodes[j] + 1.0) * lay.half_length;
      s_support_.push_back(s);
      s_colloc_.push_back(s);
      colloc_interval_.push_back(static_cast<int>(layout_.size()) - 1);
      colloc_phase_.push_back(iv.phase);
      colloc_node_.push_back(j);
      path_row_offset_.push_back(path_rows);
      path_rows += ph.nc;
    }
    support += iv.order;
    colloc += iv.order;
  }
  s_support_.push_back(mesh_.intervals.back().s1);

  n_state_vars_ = static_cast<int>(s_support_.size()) * nx_;
  n_defect_rows_ = static_cast<int>(s_colloc_.size()) * nx_;
  n_path_rows_ = path_rows;

  point_data_.reserve(s_colloc_.size());
  for (size_t cp = 0; cp < s_colloc_.size(); ++cp) {
    point_data_.push_back(
        def_->phases[colloc_phase_[cp]].fn->prepare(s_colloc_[cp]));
  }
}

int Transcription::num_vars() const {
  return n_state_vars_ + num_collocation_points() * nu_;
}

int Transcription::num_constraints() const {
  return n_defect_rows_ + n_path_rows_ + nq_;
}

void Transcription::get_bounds(Eigen::VectorXd& x_lo, Eigen::VectorXd& x_hi,
                               Eigen::VectorXd& c_lo,
                               Eigen::VectorXd& c_hi) const {
  const int P = num_support_points();
  const int C = num_collocation_points();
  x_lo = Eigen::VectorXd::Constant(num_vars(), -kInf);
  x_hi = Eigen::VectorXd::Constant(num_vars(), kInf);

  auto apply_state_bounds = [&](int point, const ocp::Phase& ph, double s) {
    if (!ph.state_bounds) return;
    Eigen::VectorXd lo, hi;
    ph.state_bounds(s, lo, hi);
    for (int ix = 0; ix < nx_; ++ix) {
      const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
      x_lo[xvar(point, ix)] = std::max(x_lo[xvar(point, ix)], lo[ix] / sc);
      x_hi[xvar(point, ix)] = std::min(x_hi[xvar(point, ix)], hi[ix] / sc);
    }
  };

  // State bounds: each support point takes the bounds of every phase whose
  // closure contains it (intersection at shared boundary points).
  for (int p = 0; p < P; ++p) {
    const double s = s_support_[p];
    for (const auto& ph : def_->phases) {
      if (s >= ph.s0 - 1e-9 && s <= ph.s1 + 1e-9) apply_state_bounds(p, ph, s);
    }
  }

  // Control bounds per collocation point.
  for (int cp = 0; cp < C; ++cp) {
    const auto& ph = phase_of(cp);
    for (int iu = 0; iu < nu_; ++iu) {
      const double sc = ph.u_scale.size() ? ph.u_scale[iu] : 1.0;
      if (ph.u_lo.size()) x_lo[uvar(cp, iu)] = ph.u_lo[iu] / sc;
      if (ph.u_hi.size()) x_hi[uvar(cp, iu)] = ph.u_hi[iu] / sc;
    }
  }

  // Pins fix variables (lo == hi).
  int first_support_of_phase = 0;
  for (size_t k = 0; k < layout_.size(); ++k) {
    const bool phase_starts =
        k == 0 || layout_[k].phase != layout_[k - 1].phase;
    if (phase_starts) first_support_of_phase = layout_[k].first_support;
    const bool phase_ends = k + 1 == layout_.size() ||
                            layout_[k + 1].phase != layout_[k].phase;
    const auto& ph = def_->phases[layout_[k].phase];
    if (phase_starts) {
      for (const auto& pin : ph.pins_start) {
        const double sc = ph.x_scale.size() ? ph.x_scale[pin.state] : 1.0;
        x_lo[xvar(first_support_of_phase, pin.state)] = pin.value / sc;
        x_hi[xvar(first_support_of_phase, pin.state)] = pin.value / sc;
      }
    }
    if (phase_ends) {
      const int last = layout_[k].first_support + layout_[k].order;
      for (const auto& pin : ph.pins_end) {
        const double sc = ph.x_scale.size() ? ph.x_scale[pin.state] : 1.0;
        x_lo[xvar(last, pin.state)] = pin.value / sc;
        x_hi[xvar(last, pin.state)] = pin.value / sc;
      }
    }
  }

  // Constraint bounds: defects are equalities at zero.
  c_lo = Eigen::VectorXd::Zero(num_constraints());
  c_hi = Eigen::VectorXd::Zero(num_constraints());
  for (int cp = 0; cp < C; ++cp) {
    const auto& ph = phase_of(cp);
    for (int ic = 0; ic < ph.nc; ++ic) {
      const double sc = ph.c_scale.size() ? ph.c_scale[ic] : 1.0;
      c_lo[path_row(cp, ic)] = (ph.c_lo.size() ? ph.c_lo[ic] : -kInf) / sc;
      c_hi[path_row(cp, ic)] = (ph.c_hi.size() ? ph.c_hi[ic] : kInf) / sc;
    }
  }
  for (int iq = 0; iq < nq_; ++iq) {
    const double sc = def_->q_scale.size() ? def_->q_scale[iq] : 1.0;
    c_lo[q_row(iq)] = def_->q_lo[iq] / sc;
    c_hi[q_row(iq)] = def_->q_hi[iq] / sc;
  }
}

Eigen::VectorXd Transcription::initial_guess() const {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(num_vars());
  Eigen::VectorXd xg(nx_), ug(nu_);
  const int P = num_support_points();
  for (int p = 0; p < P; ++p) {
    // Use the phase containing the point (first match).
    const double s = s_support_[p];
    const ocp::Phase* ph = &def_->phases.back();
    for (const auto& cand : def_->phases) {
      if (s <= cand.s1 + 1e-9) {
        ph = &cand;
        break;
      }
    }
    if (ph->guess) {
      ph->guess(s, xg, ug);
      for (int ix = 0; ix < nx_; ++ix) {
        const double sc = ph->x_scale.size() ? ph->x_scale[ix] : 1.0;
        z[xvar(p, ix)] = xg[ix] / sc;
      }
    }
  }
  for (int cp = 0; cp < num_collocation_points(); ++cp) {
    const auto& ph = phase_of(cp);
    if (!ph.guess) continue;
    ph.guess(s_colloc_[cp], xg, ug);
    for (int iu = 0; iu < nu_; ++iu) {
      const double sc = ph.u_scale.size() ? ph.u_scale[iu] : 1.0;
      z[uvar(cp, iu)] = ug[iu] / sc;
    }
  }
  return z;
}

// Evaluates the point function at collocation point cp. When `seed` is true
// and T is an AD type, the nx+nu point variables are seeded with tangents
// scaled so gradients come out with respect to the *scaled* decision
// variables.
template <typename T>
void Transcription::eval_point(int cp, const Eigen::VectorXd& z,
                               std::vector<T>& xbuf, std::vector<T>& ubuf,
                               std::vector<T>& fbuf, std::vector<T>& cbuf,
                               std::vector<T>& qbuf, T& g, T& dt_ds,
                               bool seed) const {
  const auto& ph = phase_of(cp);
  const int dim = nx_ + nu_;
  xbuf.assign(nx_, T(0.0));
  ubuf.assign(nu_, T(0.0));
  fbuf.assign(nx_, T(0.0));
  cbuf.assign(ph.nc, T(0.0));
  qbuf.assign(nq_, T(0.0));
  g = T(0.0);
  dt_ds = T(1.0);

  for (int ix = 0; ix < nx_; ++ix) {
    const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
    const double v = z[xvar(cp, ix)] * sc;
    if constexpr (std::is_same_v<T, double>) {
      xbuf[ix] = v;
    } else {
      if (seed) {
        xbuf[ix] = T::variable(v, dim, ix);
        xbuf[ix].g[ix] = sc;
      } else {
        xbuf[ix] = T(v);
      }
    }
  }
  for (int iu = 0; iu < nu_; ++iu) {
    const double sc = ph.u_scale.size() ? ph.u_scale[iu] : 1.0;
    const double v = z[uvar(cp, iu)] * sc;
    if constexpr (std::is_same_v<T, double>) {
      ubuf[iu] = v;
    } else {
      if (seed) {
        ubuf[iu] = T::variable(v, dim, nx_ + iu);
        ubuf[iu].g[nx_ + iu] = sc;
      } else {
        ubuf[iu] = T(v);
      }
    }
  }
  ph.fn->eval(point_data_[cp].get(), s_colloc_[cp], xbuf.data(), ubuf.data(),
              fbuf.data(), cbuf.data(), qbuf.data(), &g, &dt_ds);
}

bool Transcription::eval_objective(const Eigen::VectorXd& z, double& f) const {
  f = 0.0;
  try {
    std::vector<double> xb, ub, fb, cb, qb;
    double g, dt;
    for (int cp = 0; cp < num_collocation_points(); ++cp) {
      const auto& lay = layout_[colloc_interval_[cp]];
      const LgrBasis& basis = LgrBasis::get(lay.order);
      eval_point(cp, z, xb, ub, fb, cb, qb, g, dt, false);
      if (!std::isfinite(g)) return false;
      f += lay.half_length * basis.weights[colloc_node_[cp]] * g;
    }
  } catch (const std::exception&) {
    return false;
  }
  f /= def_->cost_scale;
  return std::isfinite(f);
}

bool Transcription::eval_constraints(const Eigen::VectorXd& z,
                                     Eigen::VectorXd& c) const {
  c = Eigen::VectorXd::Zero(num_constraints());
  try {
    std::vector<double> xb, ub, fb, cb, qb;
    double g, dt;
    for (int cp = 0; cp < num_collocation_points(); ++cp) {
      const int k = colloc_interval_[cp];
      const auto& lay = layout_[k];
      const auto& ph = def_->phases[lay.phase];
      const LgrBasis& basis = LgrBasis::get(lay.order);
      const int j = colloc_node_[cp];

      eval_point(cp, z, xb, ub, fb, cb, qb, g, dt, false);

      for (int ix = 0; ix < nx_; ++ix) {
        const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
        double defect = -lay.half_length * fb[ix] / sc;
        for (int i = 0; i <= lay.order; ++i) {
          defect += basis.diff(j, i) * z[xvar(lay.first_support + i, ix)];
        }
        c[defect_row(cp, ix)] = defect;
        if (!std::isfinite(defect)) return false;
      }
      for (int ic = 0; ic < ph.nc; ++ic) {
        const double sc = ph.c_scale.size() ? ph.c_scale[ic] : 1.0;
        c[path_row(cp, ic)] = cb[ic] / sc;
        if (!std::isfinite(cb[ic])) return false;
      }
      const double wq = lay.half_length * basis.weights[j];
      for (int iq = 0; iq < nq_; ++iq) {
        const double sc = def_->q_scale.size() ? def_->q_scale[iq] : 1.0;
        c[q_row(iq)] += wq * qb[iq] / sc;
        if (!std::isfinite(qb[iq])) return false;
      }
    }
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

bool Transcription::eval_gradient(const Eigen::VectorXd& z,
                                  Eigen::VectorXd& grad) const {
  grad = Eigen::VectorXd::Zero(num_vars());
  try {
    std::vector<ad::Jet> xb, ub, fb, cb, qb;
    ad::Jet g, dt;
    for (int cp = 0; cp < num_collocation_points(); ++cp) {
      const auto& lay = layout_[colloc_interval_[cp]];
      const LgrBasis& basis = LgrBasis::get(lay.order);
      eval_point(cp, z, xb, ub, fb, cb, qb, g, dt, true);
      const double w =
          lay.half_length * basis.weights[colloc_node_[cp]] / def_->cost_scale;
      if (!std::isfinite(g.v)) return false;
      if (g.g.size()) {
        for (int ix = 0; ix < nx_; ++ix) grad[xvar(cp, ix)] += w * g.g[ix];
        for (int iu = 0; iu < nu_; ++iu) {
          grad[uvar(cp, iu)] += w * g.g[nx_ + iu];
        }
      }
    }
  } catch (const std::exception&) {
    return false;
  }
  return grad.allFinite();
}

void Transcription::build_patterns() {
  jac_pattern_ = {};
  hess_pattern_ = {};
  for (int cp = 0; cp < num_collocation_points(); ++cp) {
    const int k = colloc_interval_[cp];
    const auto& lay = layout_[k];
    const auto& ph = def_->phases[lay.phase];
    const int j = colloc_node_[cp];
    (void)j;

    // Defect rows: differentiation part plus dynamics block.
    for (int ix = 0; ix < nx_; ++ix) {
      const int row = defect_row(cp, ix);
      for (int i = 0; i <= lay.order; ++i) {
        jac_pattern_.rows.push_back(row);
        jac_pattern_.cols.push_back(xvar(lay.first_support + i, ix));
      }
      for (int jx = 0; jx < nx_; ++jx) {
        jac_pattern_.rows.push_back(row);
        jac_pattern_.cols.push_back(xvar(cp, jx));
      }
      for (int ju = 0; ju < nu_; ++ju) {
        jac_pattern_.rows.push_back(row);
        jac_pattern_.cols.push_back(uvar(cp, ju));
      }
    }
    // Path rows.
    for (int ic = 0; ic < ph.nc; ++ic) {
      const int row = path_row(cp, ic);
      for (int jx = 0; jx < nx_; ++jx) {
        jac_pattern_.rows.push_back(row);
        jac_pattern_.cols.push_back(xvar(cp, jx));
      }
      for (int ju = 0; ju < nu_; ++ju) {
        jac_pattern_.rows.push_back(row);
        jac_pattern_.cols.push_back(uvar(cp, ju));
      }
    }
    // Integral rows.
    for (int iq = 0; iq < nq_; ++iq) {
      const int row = q_row(iq);
      for (int jx = 0; jx < nx_; ++jx) {
        jac_pattern_.rows.push_back(row);
        jac_pattern_.cols.push_back(xvar(cp, jx));
      }
      for (int ju = 0; ju < nu_; ++ju) {
        jac_pattern_.rows.push_back(row);
        jac_pattern_.cols.push_back(uvar(cp, ju));
      }
    }
    // Hessian: dense lower-triangle block over this point's variables
    // (their global indices are ascending: states then controls).
    std::vector<int> vars;
    vars.reserve(nx_ + nu_);
    for (int jx = 0; jx < nx_; ++jx) vars.push_back(xvar(cp, jx));
    for (int ju = 0; ju < nu_; ++ju) vars.push_back(uvar(cp, ju));
    for (size_t a = 0; a < vars.size(); ++a) {
      for (size_t b2 = 0; b2 <= a; ++b2) {
        hess_pattern_.rows.push_back(vars[a]);
        hess_pattern_.cols.push_back(vars[b2]);
      }
    }
  }
}

const nlp::SparsityPattern& Transcription::jacobian_pattern() const {
  return jac_pattern_;
}
const nlp::SparsityPattern& Transcription::hessian_pattern() const {
  return hess_pattern_;
}

bool Transcription::eval_jacobian(const Eigen::VectorXd& z,
                                  Eigen::VectorXd& values) const {
  values = Eigen::VectorXd::Zero(jac_pattern_.size());
  int slot = 0;
  try {
    std::vector<ad::Jet> xb, ub, fb, cb, qb;
    ad::Jet g, dt;
    const int dim = nx_ + nu_;
    for (int cp = 0; cp < num_collocation_points(); ++cp) {
      const int k = colloc_interval_[cp];
      const auto& lay = layout_[k];
      const auto& ph = def_->phases[lay.phase];
      const LgrBasis& basis = LgrBasis::get(lay.order);
      const int j = colloc_node_[cp];

      eval_point(cp, z, xb, ub, fb, cb, qb, g, dt, true);

      auto emit = [&](const ad::Jet& out, double w) {
        if (out.g.size()) {
          for (int d = 0; d < dim; ++d) values[slot++] = w * out.g[d];
        } else {
          slot += dim;
        }
      };

      for (int ix = 0; ix < nx_; ++ix) {
        const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
        for (int i = 0; i <= lay.order; ++i) {
          values[slot++] = basis.diff(j, i);
        }
        emit(fb[ix], -lay.half_length / sc);
      }
      for (int ic = 0; ic < ph.nc; ++ic) {
        const double sc = ph.c_scale.size() ? ph.c_scale[ic] : 1.0;
        emit(cb[ic], 1.0 / sc);
      }
      const double wq = lay.half_length * basis.weights[j];
      for (int iq = 0; iq < nq_; ++iq) {
        const double sc = def_->q_scale.size() ? def_->q_scale[iq] : 1.0;
        emit(qb[iq], wq / sc);
      }
    }
  } catch (const std::exception&) {
    return false;
  }
  return values.allFinite();
}

bool Transcription::eval_hessian(const Eigen::VectorXd& z, double sigma,
                                 const Eigen::VectorXd& lambda,
                                 Eigen::VectorXd& values) const {
  values = Eigen::VectorXd::Zero(hess_pattern_.size());
  int slot = 0;
  try {
    std::vector<ad::Jet2> xb, ub, fb, cb, qb;
    ad::Jet2 g, dt;
    const int dim = nx_ + nu_;
    Eigen::MatrixXd H(dim, dim);
    for (int cp = 0; cp < num_collocation_points(); ++cp) {
      const int k = colloc_interval_[cp];
      const auto& lay = layout_[k];
      const auto& ph = def_->phases[lay.phase];
      const LgrBasis& basis = LgrBasis::get(lay.order);
      const int j = colloc_node_[cp];

      eval_point(cp, z, xb, ub, fb, cb, qb, g, dt, true);

      H.setZero();
      auto add = [&](const ad::Jet2& out, double w) {
        if (w != 0.0 && out.h.size()) H += w * out.h;
      };
      for (int ix = 0; ix < nx_; ++ix) {
        const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
        add(fb[ix],
            lambda[defect_row(cp, ix)] * (-lay.half_length / sc));
      }
      for (int ic = 0; ic < ph.nc; ++ic) {
        const double sc = ph.c_scale.size() ? ph.c_scale[ic] : 1.0;
        add(cb[ic], lambda[path_row(cp, ic)] / sc);
      }
      const double wq = lay.half_length * basis.weights[j];
      for (int iq = 0; iq < nq_; ++iq) {
        const double sc = def_->q_scale.size() ? def_->q_scale[iq] : 1.0;
        add(qb[iq], lambda[q_row(iq)] * wq / sc);
      }
      add(g, sigma * lay.half_length * basis.weights[j] / def_->cost_scale);

      for (int a = 0; a < dim; ++a) {
        for (int b2 = 0; b2 <= a; ++b2) values[slot++] = H(a, b2);
      }
    }
  } catch (const std::exception&) {
    return false;
  }
  return values.allFinite();
}

Eigen::MatrixXd Transcription::states(const Eigen::VectorXd& z) const {
  const int P = num_support_points();
  Eigen::MatrixXd X(nx_, P);
  for (int p = 0; p < P; ++p) {
    // Scale comes from the first phase containing the point; scales are
    // shared across phases in practice (same assembly).
    const int cp = std::min(p, num_collocation_points() - 1);
    const auto& ph = phase_of(cp);
    for (int ix = 0; ix < nx_; ++ix) {
      const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
      X(ix, p) = z[xvar(p, ix)] * sc;
    }
  }
  return X;
}

Eigen::MatrixXd Transcription::controls(const Eigen::VectorXd& z) const {
  const int C = num_collocation_points();
  Eigen::MatrixXd U(nu_, C);
  for (int cp = 0; cp < C; ++cp) {
    const auto& ph = phase_of(cp);
    for (int iu = 0; iu < nu_; ++iu) {
      const double sc = ph.u_scale.size() ? ph.u_scale[iu] : 1.0;
      U(iu, cp) = z[uvar(cp, iu)] * sc;
    }
  }
  return U;
}

Eigen::VectorXd Transcription::integrals(const Eigen::VectorXd& z) const {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(nq_);
  std::vector<double> xb, ub, fb, cb, qb;
  double g, dt;
  for (int cp = 0; cp < num_collocation_points(); ++cp) {
    const auto& lay = layout_[colloc_interval_[cp]];
    const LgrBasis& basis = LgrBasis::get(lay.order);
    eval_point(cp, z, xb, ub, fb, cb, qb, g, dt, false);
    const double wq = lay.half_length * basis.weights[colloc_node_[cp]];
    for (int iq = 0; iq < nq_; ++iq) q[iq] += wq * qb[iq];
  }
  return q;
}

int Transcription::interval_of_s(double s) const {
  int lo = 0, hi = static_cast<int>(mesh_.intervals.size()) - 1;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (s <= mesh_.intervals[mid].s1) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

Eigen::VectorXd Transcription::interp_state(const Eigen::VectorXd& z,
                                            double s) const {
  const int k = interval_of_s(s);
  const auto& lay = layout_[k];
  const auto& ph = def_->phases[lay.phase];
  const LgrBasis& basis = LgrBasis::get(lay.order);
  const double tau =
      (s - mesh_.intervals[k].s0) / lay.half_length - 1.0;
  Eigen::VectorXd supp(lay.order + 1);
  supp.head(lay.order) = basis.nodes;
  supp[lay.order] = 1.0;
  const Eigen::VectorXd bw = bary_weights(supp);
  Eigen::VectorXd out(nx_), vals(lay.order + 1);
  for (int ix = 0; ix < nx_; ++ix) {
    const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
    for (int i = 0; i <= lay.order; ++i) {
      vals[i] = z[xvar(lay.first_support + i, ix)] * sc;
    }
    out[ix] = bary_interp(supp, bw, vals, tau);
  }
  return out;
}

Eigen::VectorXd Transcription::interp_control(const Eigen::VectorXd& z,
                                              double s) const {
  const int k = interval_of_s(s);
  const auto& lay = layout_[k];
  const auto& ph = def_->phases[lay.phase];
  const LgrBasis& basis = LgrBasis::get(lay.order);
  const double tau = (s - mesh_.intervals[k].s0) / lay.half_length - 1.0;
  Eigen::VectorXd out(nu_);
  if (lay.order == 1) {
    for (int iu = 0; iu < nu_; ++iu) {
      const double sc = ph.u_scale.size() ? ph.u_scale[iu] : 1.0;
      out[iu] = z[uvar(lay.first_colloc, iu)] * sc;
    }
    return out;
  }
  const Eigen::VectorXd bw = bary_weights(basis.nodes);
  Eigen::VectorXd vals(lay.order);
  for (int iu = 0; iu < nu_; ++iu) {
    const double sc = ph.u_scale.size() ? ph.u_scale[iu] : 1.0;
    for (int i = 0; i < lay.order; ++i) {
      vals[i] = z[uvar(lay.first_colloc + i, iu)] * sc;
    }
    out[iu] = bary_interp(basis.nodes, bw, vals, tau);
  }
  return out;
}

Eigen::MatrixXd Transcription::costates(const nlp::NlpSolution& sol) const {
  const int C = num_collocation_points();
  Eigen::MatrixXd lam(nx_, C);
  for (int cp = 0; cp < C; ++cp) {
    const auto& lay = layout_[colloc_interval_[cp]];
    const auto& ph = def_->phases[lay.phase];
    const LgrBasis& basis = LgrBasis::get(lay.order);
    const double w = basis.weights[colloc_node_[cp]];
    for (int ix = 0; ix < nx_; ++ix) {
      const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
      lam(ix, cp) =
          -sol.y[defect_row(cp, ix)] * def_->cost_scale / (sc * w);
    }
  }
  return lam;
}

Eigen::MatrixXd Transcription::path_multipliers(
    const nlp::NlpSolution& sol) const {
  const int C = num_collocation_points();
  int max_nc = 0;
  for (const auto& ph : def_->phases) max_nc = std::max(max_nc, ph.nc);
  Eigen::MatrixXd mult = Eigen::MatrixXd::Zero(max_nc, C);
  for (int cp = 0; cp < C; ++cp) {
    const auto& ph = phase_of(cp);
    for (int ic = 0; ic < ph.nc; ++ic) {
      const double sc = ph.c_scale.size() ? ph.c_scale[ic] : 1.0;
      mult(ic, cp) = sol.y[path_row(cp, ic)] * def_->cost_scale / sc;
    }
  }
  return mult;
}

Eigen::VectorXd Transcription::estimate_errors(const Eigen::VectorXd& z) const {
  const int K = static_cast<int>(mesh_.intervals.size());
  Eigen::VectorXd err = Eigen::VectorXd::Zero(K);
  std::vector<double> xb(nx_), ub(nu_), fb(nx_), cb, qb;
  for (int k = 0; k < K; ++k) {
    const auto& lay = layout_[k];
    const auto& ph = def_->phases[lay.phase];
    const LgrBasis& basis = LgrBasis::get(lay.order);
    const int N = lay.order;

    Eigen::VectorXd supp(N + 1);
    supp.head(N) = basis.nodes;
    supp[N] = 1.0;
    const Eigen::VectorXd bw = bary_weights(supp);

    // Scaled state values over the support points.
    Eigen::MatrixXd Xs(nx_, N + 1);
    double xmax = 0.0;
    for (int i = 0; i <= N; ++i) {
      for (int ix = 0; ix < nx_; ++ix) {
        Xs(ix, i) = z[xvar(lay.first_support + i, ix)];
        xmax = std::max(xmax, std::abs(Xs(ix, i)));
      }
    }

    // Sample between adjacent collocation nodes (and before the endpoint).
    for (int m = 0; m < N; ++m) {
      const double t_hi = (m + 1 < N) ? basis.nodes[m + 1] : 1.0;
      const double tau = 0.5 * (basis.nodes[m] + t_hi);
      const double s = mesh_.intervals[k].s0 + (tau + 1.0) * lay.half_length;

      Eigen::VectorXd xi(nx_), dxi(nx_);
      for (int ix = 0; ix < nx_; ++ix) {
        Eigen::VectorXd vals = Xs.row(ix).transpose();
        xi[ix] = bary_interp(supp, bw, vals, tau);
        dxi[ix] = bary_deriv(supp, bw, vals, tau);
      }
      Eigen::VectorXd ui = interp_control(z, s);

      // Physical values for the dynamics evaluation.
      for (int ix = 0; ix < nx_; ++ix) {
        const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
        xb[ix] = xi[ix] * sc;
      }
      for (int iu = 0; iu < nu_; ++iu) ub[iu] = ui[iu];
      cb.assign(ph.nc, 0.0);
      qb.assign(nq_, 0.0);
      double g = 0.0, dt = 1.0;
      double local = 0.0;
      try {
        auto data = ph.fn->prepare(s);
        ph.fn->eval(data.get(), s, xb.data(), ub.data(), fb.data(), cb.data(),
                    qb.data(), &g, &dt);
        for (int ix = 0; ix < nx_; ++ix) {
          const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
          const double r = dxi[ix] - lay.half_length * fb[ix] / sc;
          if (!std::isfinite(r)) {
            local = kInf;
            break;
          }
          local = std::max(local, std::abs(r));
        }
      } catch (const std::exception&) {
        local = kInf;
      }
      err[k] = std::max(err[k], local / (1.0 + xmax));
    }
  }
  return err;
}

Eigen::VectorXd Transcription::transfer_guess(
    const Transcription& from, const Eigen::VectorXd& z_from) const {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(num_vars());
  for (int p = 0; p < num_support_points(); ++p) {
    const Eigen::VectorXd x = from.interp_state(z_from, s_support_[p]);
    const int cp = std::min(p, num_collocation_points() - 1);
    const auto& ph = phase_of(cp);
    for (int ix = 0; ix < nx_; ++ix) {
      const double sc = ph.x_scale.size() ? ph.x_scale[ix] : 1.0;
      z[xvar(p, ix)] = x[ix] / sc;
    }
  }
  for (int cp = 0; cp < num_collocation_points(); ++cp) {
    const Eigen::VectorXd u = from.interp_control(z_from, s_colloc_[cp]);
    const auto& ph = phase_of(cp);
    for (int iu = 0; iu < nu_; ++iu) {
      const double sc = ph.u_scale.size() ? ph.u_scale[iu] : 1.0;
      z[uvar(cp, iu)] = u[iu] / sc;
    }
  }
  return z;
}

bool refine_mesh(Mesh& mesh, const Eigen::VectorXd& errors,
                 const RefineOptions& opts) {
  Mesh refined;
  bool changed = false;
  for (int k = 0; k < static_cast<int>(mesh.intervals.size()); ++k) {
    Mesh::Interval iv = mesh.intervals[k];
    const double e = errors[k];
    if (!(e > opts.tol)) {
      refined.intervals.push_back(iv);
      continue;
    }
    changed = true;
    const int bump = std::max(
        1, static_cast<int>(std::ceil(std::log10(std::max(e / opts.tol, 10.0)))));
    if (iv.order + bump <= opts.max_order) {
      iv.order += bump;
      refined.intervals.push_back(iv);
    } else if (static_cast<int>(mesh.intervals.size()) +
                   static_cast<int>(refined.intervals.size()) <
               opts.max_intervals) {
      Mesh::Interval left = iv, right = iv;
      const double mid = 0.5 * (iv.s0 + iv.s1);
      left.s1 = mid;
      right.s0 = mid;
      left.order = right.order = opts.split_order;
      refined.intervals.push_back(left);
      refined.intervals.push_back(right);
    } else {
      refined.intervals.push_back(iv);  // interval budget exhausted
      changed = changed || false;
    }
  }
  mesh = std::move(refined);
  return changed;
}

MeshSolveResult solve_with_refinement(
    std::shared_ptr<const ocp::OcpDefinition> def, Mesh initial,
    const nlp::SolverOptions& solver_options, const RefineOptions& opts,
    const Eigen::VectorXd* initial_point) {
  MeshSolveResult result;
  Mesh mesh = std::move(initial);
  std::shared_ptr<Transcription> prev;
  Eigen::VectorXd z_prev;

  for (int round = 0; round <= opts.max_refinements; ++round) {
    auto trans = std::make_shared<Transcription>(def, mesh);
    nlp::SolverOptions solver_opts = solver_options;

    Eigen::VectorXd guess;
    if (prev) {
      guess = trans->transfer_guess(*prev, z_prev);
    } else if (initial_point) {
      guess = *initial_point;
    }

    nlp::NlpSolution sol = nlp::solve_nlp(
        *trans, solver_opts, guess.size() ? &guess : nullptr);

    if (sol.status != nlp::SolveStatus::kOptimal) {
      // Keep the last successful round when one exists; a failed solve on a
      // refined mesh should not wipe out the usable answer.
      if (round == 0 || result.solution.status != nlp::SolveStatus::kOptimal) {
        result.solution = std::move(sol);
        result.transcription = trans;
        result.interval_errors = Eigen::VectorXd();
        result.refinement_rounds = round;
      }
      result.mesh_converged = false;
      return result;
    }

    result.solution = std::move(sol);
    result.transcription = trans;
    result.refinement_rounds = round;
    result.interval_errors = trans->estimate_errors(result.solution.x);
    const double worst = result.interval_errors.size()
                             ? result.interval_errors.maxCoeff()
                             : 0.0;
    if (worst <= opts.tol) {
      result.mesh_converged = true;
      return result;
    }
    if (round == opts.max_refinements ||
        !refine_mesh(mesh, result.interval_errors, opts)) {
      result.mesh_converged = false;
      return result;
    }
    prev = trans;
    z_prev = result.solution.x;
  }
  return result;  // unreachable
}

}  // namespace fueltraj::colloc
