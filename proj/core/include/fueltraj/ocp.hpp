#pragma once

// Continuous optimal-control problem description consumed by the collocation
// transcription. A problem is a chain of phases over the independent
// variable s (arc length, or time for time-domain problems). Each phase
// supplies one pointwise evaluator producing, at a given s:
//
//   f  - dynamics right-hand side dx/ds            (nx outputs)
//   c  - path constraint residuals                 (nc outputs)
//   q  - integrands of global integral constraints (nq outputs)
//   g  - running-cost integrand                    (1 output)
//   dt_ds - time per unit of s (1 for time-domain problems); used by the
//           control-rate augmentation to integrate time-rate controls.
//
// Evaluators are written once as a scalar template and wrapped behind
// PointFunction, giving exact first (Jet) and second (Jet2) derivatives.

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fueltraj/ad.hpp"

namespace fueltraj::ocp {

// Per-point cached data (track samples etc.), computed once per collocation
// point when the mesh is laid out, so spline lookups stay out of the NLP
// iteration and out of the derivative chain.
struct PointData {
  virtual ~PointData() = default;
};

class PointFunction {
 public:
  virtual ~PointFunction() = default;

  virtual std::unique_ptr<const PointData> prepare(double /*s*/) const {
    return nullptr;
  }

  virtual void eval(const PointData* data, double s, const double* x,
                    const double* u, double* f, double* c, double* q,
                    double* g, double* dt_ds) const = 0;
  virtual void eval(const PointData* data, double s, const ad::Jet* x,
                    const ad::Jet* u, ad::Jet* f, ad::Jet* c, ad::Jet* q,
                    ad::Jet* g, ad::Jet* dt_ds) const = 0;
  virtual void eval(const PointData* data, double s, const ad::Jet2* x,
                    const ad::Jet2* u, ad::Jet2* f, ad::Jet2* c, ad::Jet2* q,
                    ad::Jet2* g, ad::Jet2* dt_ds) const = 0;
};

namespace detail {

template <class Impl>
class PointFunctionT final : public PointFunction {
 public:
  using PrepareFn = std::function<std::unique_ptr<const PointData>(double)>;

  explicit PointFunctionT(Impl impl, PrepareFn prepare = nullptr)
      : impl_(std::move(impl)), prepare_(std::move(prepare)) {}

  std::unique_ptr<const PointData> prepare(double s) const override {
    return prepare_ ? prepare_(s) : nullptr;
  }

  void eval(const PointData* d, double s, const double* x, const double* u,
            double* f, double* c, double* q, double* g,
            double* dt_ds) const override {
    impl_(d, s, x, u, f, c, q, g, dt_ds);
  }
  void eval(const PointData* d, double s, const ad::Jet* x, const ad::Jet* u,
            ad::Jet* f, ad::Jet* c, ad::Jet* q, ad::Jet* g,
            ad::Jet* dt_ds) const override {
    impl_(d, s, x, u, f, c, q, g, dt_ds);
  }
  void eval(const PointData* d, double s, const ad::Jet2* x,
            const ad::Jet2* u, ad::Jet2* f, ad::Jet2* c, ad::Jet2* q,
            ad::Jet2* g, ad::Jet2* dt_ds) const override {
    impl_(d, s, x, u, f, c, q, g, dt_ds);
  }

 private:
  Impl impl_;
  PrepareFn prepare_;
};

}  // namespace detail

template <class Impl>
std::shared_ptr<PointFunction> make_point_function(
    Impl impl,
    std::function<std::unique_ptr<const PointData>(double)> prepare = nullptr) {
  return std::make_shared<detail::PointFunctionT<Impl>>(std::move(impl),
                                                        std::move(prepare));
}

// Pin a state component to a fixed value at a phase edge (implemented as a
// fixed decision variable, so it holds exactly in the transcribed problem).
struct StatePin {
  int state = 0;
  double value = 0.0;
};

struct Phase {
  std::string name;
  double s0 = 0.0, s1 = 1.0;
  int nx = 0, nu = 0, nc = 0;

  std::shared_ptr<PointFunction> fn;

  // Bounds. State bounds may vary with s (road-width corridor); control and
  // path bounds are constant within a phase.
  std::function<void(double s, Eigen::VectorXd& lo, Eigen::VectorXd& hi)>
      state_bounds;
  Eigen::VectorXd u_lo, u_hi;
  Eigen::VectorXd c_lo, c_hi;

  // Scales: decision variables are stored as value/scale; constraint rows
  // divided by their scale. All default to 1 when empty.
  Eigen::VectorXd x_scale, u_scale;
  Eigen::VectorXd c_scale;

  std::vector<StatePin> pins_start, pins_end;

  // Initial guess profiles (unscaled).
  std::function<void(double s, Eigen::VectorXd& x, Eigen::VectorXd& u)> guess;
};

struct OcpDefinition {
  std::vector<Phase> phases;  // contiguous, increasing in s; states shared
                              // at phase boundaries (continuity built in)

  // Global integral constraints: lo <= sum_phases int q_i ds <= hi.
  int nq = 0;
  Eigen::VectorXd q_lo, q_hi, q_scale;

  double cost_scale = 1.0;  // objective divided by this in the NLP

  double s_begin() const { return phases.front().s0; }
  double s_end() const { return phases.back().s1; }
  void validate() const;
};

// Rewrites the problem so each control becomes a state driven by a new
// time-rate control r (dx_ctrl/ds = dt_ds * r). Adds the quadratic rate
// penalty dt_ds * sum_i R_i r_i^2 to the running cost and bounds |r_i| by
// slew_i. Control *value* bounds become state bounds; guesses carry over
// with zero-rate starts.
OcpDefinition augment_control_rates(const OcpDefinition& def,
                                    const Eigen::VectorXd& rate_weights,
                                    const Eigen::VectorXd& slew_limits);

// Applies lo <= integral #index <= hi with the given row scaling.
void set_integral_bounds(OcpDefinition& def, int index, double lo, double hi,
                         double scale);

}  // namespace fueltraj::ocp
