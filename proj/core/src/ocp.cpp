#include "fueltraj/ocp.hpp"

#include <cmath>
#include <limits>

namespace fueltraj::ocp {

void OcpDefinition::validate() const {
  if (phases.empty()) throw std::invalid_argument("OCP has no phases");
  const int nx = phases.front().nx;
  const int nu = phases.front().nu;
  double s_prev = phases.front().s0;
  for (const auto& ph : phases) {
    if (!ph.fn) throw std::invalid_argument("phase missing point function");
    if (ph.nx != nx || ph.nu != nu) {
      throw std::invalid_argument("phases must share state/control dims");
    }
    if (!(ph.s1 > ph.s0)) {
      throw std::invalid_argument("phase must have positive length");
    }
    if (std::abs(ph.s0 - s_prev) > 1e-9 * std::max(1.0, std::abs(s_prev))) {
      throw std::invalid_argument("phases must be contiguous in s");
    }
    s_prev = ph.s1;
    auto check_dim = [](const Eigen::VectorXd& v, int n, const char* what) {
      if (v.size() != 0 && v.size() != n) {
        throw std::invalid_argument(std::string("bad size for ") + what);
      }
    };
    check_dim(ph.u_lo, nu, "u_lo");
    check_dim(ph.u_hi, nu, "u_hi");
    check_dim(ph.c_lo, ph.nc, "c_lo");
    check_dim(ph.c_hi, ph.nc, "c_hi");
    check_dim(ph.x_scale, nx, "x_scale");
    check_dim(ph.u_scale, nu, "u_scale");
    check_dim(ph.c_scale, ph.nc, "c_scale");
    for (const auto& pin : ph.pins_start) {
      if (pin.state < 0 || pin.state >= nx) {
        throw std::invalid_argument("start pin out of range");
      }
    }
    for (const auto& pin : ph.pins_end) {
      if (pin.state < 0 || pin.state >= nx) {
        throw std::invalid_argument("end pin out of range");
      }
    }
  }
  if (nq > 0 && (q_lo.size() != nq || q_hi.size() != nq)) {
    throw std::invalid_argument("integral bounds must match nq");
  }
}

namespace {

// Evaluator wrapper for the rate augmentation: states become
// [x_orig; u_orig], controls become the time rates r, and the inner
// function sees the original split.
struct RateAugmented {
  std::shared_ptr<PointFunction> inner;
  int nx, nu;
  Eigen::VectorXd R;

  template <typename T>
  void operator()(const PointData* d, double s, const T* x, const T* u, T* f,
                  T* c, T* q, T* g, T* dt_ds) const {
    inner->eval(d, s, x, x + nx, f, c, q, g, dt_ds);
    T pen(0.0);
    for (int i = 0; i < nu; ++i) {
      f[nx + i] = *dt_ds * u[i];
      if (R[i] != 0.0) pen += R[i] * u[i] * u[i];
    }
    *g += *dt_ds * pen;
  }
};

}  // namespace

OcpDefinition augment_control_rates(const OcpDefinition& def,
                                    const Eigen::VectorXd& rate_weights,
                                    const Eigen::VectorXd& slew_limits) {
  def.validate();
  const int nx = def.phases.front().nx;
  const int nu = def.phases.front().nu;
  if (rate_weights.size() != nu || slew_limits.size() != nu) {
    throw std::invalid_argument("rate weights/slew limits must match nu");
  }

  OcpDefinition out = def;
  for (auto& ph : out.phases) {
    const Phase src = ph;
    ph.nx = nx + nu;
    ph.nu = nu;

    RateAugmented impl{src.fn, nx, nu, rate_weights};
    ph.fn = make_point_function(
        impl, [fn = src.fn](double s) { return fn->prepare(s); });

    // Old control-value bounds become bounds on the new control states.
    ph.state_bounds = [src, nx, nu](double s, Eigen::VectorXd& lo,
                                    Eigen::VectorXd& hi) {
      Eigen::VectorXd xl, xh;
      if (src.state_bounds) {
        src.state_bounds(s, xl, xh);
      } else {
        xl = Eigen::VectorXd::Constant(
            nx, -std::numeric_limits<double>::infinity());
        xh = Eigen::VectorXd::Constant(
            nx, std::numeric_limits<double>::infinity());
      }
      lo.resize(nx + nu);
      hi.resize(nx + nu);
      lo.head(nx) = xl;
      hi.head(nx) = xh;
      lo.tail(nu) = src.u_lo.size()
                        ? src.u_lo
                        : Eigen::VectorXd::Constant(
                              nu, -std::numeric_limits<double>::infinity());
      hi.tail(nu) = src.u_hi.size()
                        ? src.u_hi
                        : Eigen::VectorXd::Constant(
                              nu, std::numeric_limits<double>::infinity());
    };
    ph.u_lo = -slew_limits;
    ph.u_hi = slew_limits;

    Eigen::VectorXd xs = Eigen::VectorXd::Ones(nx + nu);
    if (src.x_scale.size()) xs.head(nx) = src.x_scale;
    if (src.u_scale.size()) xs.tail(nu) = src.u_scale;
    ph.x_scale = xs;
    Eigen::VectorXd us(nu);
    for (int i = 0; i < nu; ++i) {
      us[i] = std::isfinite(slew_limits[i]) && slew_limits[i] > 0.0
                  ? slew_limits[i]
                  : 1.0;
    }
    ph.u_scale = us;

    ph.guess = [src, nx, nu](double s, Eigen::VectorXd& x,
                             Eigen::VectorXd& u) {
      Eigen::VectorXd xg = Eigen::VectorXd::Zero(nx);
      Eigen::VectorXd ug = Eigen::VectorXd::Zero(nu);
      if (src.guess) src.guess(s, xg, ug);
      x.resize(nx + nu);
      x.head(nx) = xg;
      x.tail(nu) = ug;
      u = Eigen::VectorXd::Zero(nu);
    };
    // Pins on original states keep their indices; control states unpinned.
  }
  return out;
}

void set_integral_bounds(OcpDefinition& def, int index, double lo, double hi,
                         double scale) {
  if (index < 0 || index >= def.nq) {
    throw std::invalid_argument("integral index out of range");
  }
  def.q_lo[index] = lo;
  def.q_hi[index] = hi;
  def.q_scale[index] = scale;
}

}  // namespace fueltraj::ocp
