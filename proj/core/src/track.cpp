#include "fueltraj/track.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace fueltraj::track {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// 8-point Gauss-Legendre rule on [-1, 1]; exact for the smooth spline
// integrands here to near machine precision at ~10 m knot spacing.
constexpr int kGlN = 8;
constexpr double kGlX[kGlN] = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
    -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
    0.7966664774136267,  0.9602898564975363};
constexpr double kGlW[kGlN] = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
    0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
    0.2223810344533745, 0.1012285362903763};

template <typename F>
Eigen::Vector3d gl_integrate3(const F& f, double a, double b) {
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < kGlN; ++i) acc += kGlW[i] * f(mid + half * kGlX[i]);
  return half * acc;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InputError(what);
}

}  // namespace

Eigen::Vector3d curvature_triple(double pitch, double roll, double pitch_p,
                                 double yaw_p, double roll_p) {
  const double st = std::sin(pitch), ct = std::cos(pitch);
  const double sp = std::sin(roll), cp = std::cos(roll);
  return {roll_p - yaw_p * st, pitch_p * cp + yaw_p * ct * sp,
          -pitch_p * sp + yaw_p * ct * cp};
}

RibbonRates<double> ribbon_rates_checked(double n, double xi, double u,
                                         double v, double omega_bar_z,
                                         double omega_z) {
  const auto r = ribbon_rates<double>(n, xi, u, v, omega_bar_z, omega_z);
  if (!(r.s_dot > 0.0)) {
    std::ostringstream msg;
    msg << "non-forward progress: s_dot = " << r.s_dot << " (n=" << n
        << ", xi=" << xi << ", u=" << u << ", v=" << v << ")";
    throw NonForwardProgress(msg.str());
  }
  return r;
}

TrackRibbon::TrackRibbon(Eigen::VectorXd s, Eigen::VectorXd pitch,
                         Eigen::VectorXd yaw, Eigen::VectorXd roll,
                         Eigen::VectorXd half_width, bool closed)
    : s_(std::move(s)),
      pitch_v_(std::move(pitch)),
      yaw_v_(std::move(yaw)),
      roll_v_(std::move(roll)),
      half_width_v_(std::move(half_width)),
      closed_(closed) {
  const auto n = s_.size();
  require(n >= 3, "track: need at least 3 samples");
  require(pitch_v_.size() == n && yaw_v_.size() == n && roll_v_.size() == n &&
              half_width_v_.size() == n,
          "track: sample columns must have equal length");
  require(std::abs(s_[0]) < 1e-9, "track: arc length must start at 0");
  for (Eigen::Index i = 1; i < n; ++i) {
    require(s_[i] > s_[i - 1], "track: arc length must strictly increase");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    require(half_width_v_[i] > 0.0, "track: half width must be positive");
  }
  s_[0] = 0.0;
  length_ = s_[n - 1];

  Eigen::VectorXd yaw_per = yaw_v_;
  const auto bc =
      closed_ ? CubicSpline::Boundary::kPeriodic : CubicSpline::Boundary::kNatural;
  if (closed_) {
    windings_ = static_cast<int>(
        std::llround((yaw_v_[n - 1] - yaw_v_[0]) / kTwoPi));
    for (Eigen::Index i = 0; i < n; ++i) {
      yaw_per[i] -= kTwoPi * windings_ * s_[i] / length_;
    }
    auto snap = [&](Eigen::VectorXd& v, const char* name) {
      const double scale = std::max(1.0, std::abs(v[0]));
      require(std::abs(v[n - 1] - v[0]) <= 1e-6 * scale,
              std::string("track: closed circuit does not close in ") + name);
      v[n - 1] = v[0];
    };
    snap(pitch_v_, "pitch");
    snap(yaw_per, "yaw (mod full turns)");
    snap(roll_v_, "roll");
    snap(half_width_v_, "half width");
  }
  pitch_ = CubicSpline(to_std(s_), to_std(pitch_v_), bc);
  yaw_per_ = CubicSpline(to_std(s_), to_std(yaw_per), bc);
  roll_ = CubicSpline(to_std(s_), to_std(roll_v_), bc);
  half_width_ = CubicSpline(to_std(s_), to_std(half_width_v_), bc);
  build_positions();

  // Sanity sweep: every sampled quantity must be finite.
  for (int i = 0; i <= 256; ++i) {
    const RibbonPoint p = at(length_ * i / 256.0);
    require(std::isfinite(p.omega_x + p.omega_y + p.omega_z + p.omega_x_p +
                          p.elevation),
            "track: non-finite geometry after construction");
  }
}

double TrackRibbon::wrap(double s) const {
  if (closed_) {
    s = std::fmod(s, length_);
    if (s < 0.0) s += length_;
    return s;
  }
  if (s < -1e-9 || s > length_ + 1e-9) {
    throw std::out_of_range("track: s outside open track range");
  }
  return std::clamp(s, 0.0, length_);
}

RibbonPoint TrackRibbon::at(double s_in) const {
  const double s = wrap(s_in);
  RibbonPoint p;
  p.s = s_in;
  const double ramp_rate = closed_ ? kTwoPi * windings_ / length_ : 0.0;
  p.pitch = pitch_(s);
  // The winding ramp uses the unwrapped coordinate so the reported heading
  // is continuous across laps.
  p.yaw = yaw_per_(s) + ramp_rate * s_in;
  p.roll = roll_(s);
  p.pitch_p = pitch_.deriv(s);
  p.yaw_p = yaw_per_.deriv(s) + ramp_rate;
  p.roll_p = roll_.deriv(s);
  const Eigen::Vector3d om =
      curvature_triple(p.pitch, p.roll, p.pitch_p, p.yaw_p, p.roll_p);
  p.omega_x = om[0];
  p.omega_y = om[1];
  p.omega_z = om[2];
  // d/ds of (roll' - yaw' sin(pitch)).
  p.omega_x_p = roll_.deriv2(s) - yaw_per_.deriv2(s) * std::sin(p.pitch) -
                p.yaw_p * p.pitch_p * std::cos(p.pitch);
  p.half_width = half_width_(s);
  p.elevation = position(s).z();
  return p;
}

void TrackRibbon::build_positions() {
  const double ramp_rate = closed_ ? kTwoPi * windings_ / length_ : 0.0;
  auto tangent = [&](double s) -> Eigen::Vector3d {
    const double th = pitch_(s), mu = yaw_per_(s) + ramp_rate * s;
    const double ct = std::cos(th);
    return {std::cos(mu) * ct, std::sin(mu) * ct, std::sin(th)};
  };
  knot_pos_.assign(static_cast<size_t>(s_.size()), Eigen::Vector3d::Zero());
  for (Eigen::Index i = 1; i < s_.size(); ++i) {
    knot_pos_[i] = knot_pos_[i - 1] + gl_integrate3(tangent, s_[i - 1], s_[i]);
  }
}

Eigen::Vector3d TrackRibbon::position(double s_in) const {
  const double s = wrap(s_in);
  const auto it = std::upper_bound(s_.data(), s_.data() + s_.size(), s);
  const auto i = std::clamp<Eigen::Index>(it - s_.data() - 1, 0, s_.size() - 2);
  const double ramp_rate = closed_ ? kTwoPi * windings_ / length_ : 0.0;
  auto tangent = [&](double t) -> Eigen::Vector3d {
    const double th = pitch_(t), mu = yaw_per_(t) + ramp_rate * t;
    const double ct = std::cos(th);
    return {std::cos(mu) * ct, std::sin(mu) * ct, std::sin(th)};
  };
  return knot_pos_[static_cast<size_t>(i)] + gl_integrate3(tangent, s_[i], s);
}

TrackRibbon TrackRibbon::flattened() const {
  return TrackRibbon(s_, Eigen::VectorXd::Zero(s_.size()), yaw_v_,
                     Eigen::VectorXd::Zero(s_.size()), half_width_v_, closed_);
}

void TrackRibbon::save_csv(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), "track: cannot open for writing: " + path);
  out << "# fueltraj track v1\n";
  out << "# closed " << (closed_ ? 1 : 0) << "\n";
  out << "s,theta,mu,phi,halfwidth\n";
  char buf[256];
  for (Eigen::Index i = 0; i < s_.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g\n", s_[i],
                  pitch_v_[i], yaw_v_[i], roll_v_[i], half_width_v_[i]);
    out << buf;
  }
  require(out.good(), "track: write failed: " + path);
}

TrackRibbon TrackRibbon::load_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "track: cannot open: " + path);
  std::string line;
  bool closed = false;
  bool saw_header = false;
  std::vector<std::array<double, 5>> rows;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = [&] { return path + ":" + std::to_string(lineno); };
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string key;
      meta >> key;
      if (key == "closed") {
        int flag = 0;
        meta >> flag;
        closed = flag != 0;
      }
      continue;
    }
    if (!saw_header) {
      std::string squashed;
      for (char c : line) {
        if (!std::isspace(static_cast<unsigned char>(c))) squashed += c;
      }
      require(squashed == "s,theta,mu,phi,halfwidth",
              where() + ": expected header s,theta,mu,phi,halfwidth");
      saw_header = true;
      continue;
    }
    std::array<double, 5> row{};
    std::istringstream cells(line);
    std::string cell;
    for (int c = 0; c < 5; ++c) {
      require(static_cast<bool>(std::getline(cells, cell, ',')),
              where() + ": expected 5 columns");
      try {
        size_t used = 0;
        row[static_cast<size_t>(c)] = std::stod(cell, &used);
        while (used < cell.size() &&
               std::isspace(static_cast<unsigned char>(cell[used]))) {
          ++used;
        }
        require(used == cell.size(), where() + ": bad number '" + cell + "'");
      } catch (const InputError&) {
        throw;
      } catch (const std::exception&) {
        throw InputError(where() + ": bad number '" + cell + "'");
      }
    }
    require(!std::getline(cells, cell, ','), where() + ": expected 5 columns");
    rows.push_back(row);
  }
  require(saw_header, path + ": missing header row");
  require(rows.size() >= 3, path + ": need at least 3 samples");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd s(n), th(n), mu(n), phi(n), hw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<size_t>(i)];
    s[i] = r[0];
    th[i] = r[1];
    mu[i] = r[2];
    phi[i] = r[3];
    hw[i] = r[4];
  }
  return TrackRibbon(std::move(s), std::move(th), std::move(mu), std::move(phi),
                     std::move(hw), closed);
}

namespace {

// Smooth compact bump b(r) = cos^2(pi r / 2) on |r| < 1 and its integral
// S(r) normalized so S(-1) = 0, S(1) = 1.
double bump(double r) {
  if (std::abs(r) >= 1.0) return 0.0;
  const double c = std::cos(kPi * r / 2.0);
  return c * c;
}

double bump_integral(double r) {
  if (r <= -1.0) return 0.0;
  if (r >= 1.0) return 1.0;
  return 0.5 * (r + 1.0 + std::sin(kPi * r) / kPi);
}

template <typename F>
double gl_integrate1(const F& f, double a, double b, int pieces) {
  double acc = 0.0;
  for (int k = 0; k < pieces; ++k) {
    const double x0 = a + (b - a) * k / pieces;
    const double x1 = a + (b - a) * (k + 1) / pieces;
    const double mid = 0.5 * (x0 + x1), half = 0.5 * (x1 - x0);
    for (int i = 0; i < kGlN; ++i) acc += half * kGlW[i] * f(mid + half * kGlX[i]);
  }
  return acc;
}

}  // namespace

CircuitSpec default_circuit(double length, double elevation_range,
                            unsigned seed) {
  require(length > 400.0, "circuit: length must exceed 400 m");
  CircuitSpec spec;
  spec.length = length;
  spec.elevation_range = elevation_range;
  spec.seed = seed;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n_corners = std::max(4, static_cast<int>(std::lround(length / 875.0)));
  const double pitch_spacing = length / n_corners;
  for (int i = 0; i < n_corners; ++i) {
    Corner c;
    c.width = 70.0 + 80.0 * unit(rng);
    const double jitter = (unit(rng) - 0.5) * 0.4 * pitch_spacing;
    c.s_center = (i + 0.5) * pitch_spacing + jitter;
    c.s_center = std::clamp(c.s_center, 1.5 * c.width, length - 1.5 * c.width);
    const double sign = (i % 3 == 2) ? -1.0 : 1.0;
    c.turn = sign * (0.7 + 1.2 * unit(rng));
    spec.corners.push_back(c);
  }
  // Separate overlapping corners so each bump has clear support.
  std::sort(spec.corners.begin(), spec.corners.end(),
            [](const Corner& a, const Corner& b) { return a.s_center < b.s_center; });
  for (size_t i = 1; i < spec.corners.size(); ++i) {
    const double gap = 0.5 * (spec.corners[i - 1].width + spec.corners[i].width);
    if (spec.corners[i].s_center < spec.corners[i - 1].s_center + gap) {
      spec.corners[i].s_center = spec.corners[i - 1].s_center + gap;
    }
  }
  return spec;
}

TrackRibbon synthesize_circuit(const CircuitSpec& spec) {
  const double L = spec.length;
  require(L > 400.0, "circuit: length must exceed 400 m");
  require(spec.elevation_range >= 0.0,
          "circuit: elevation range must be non-negative");
  for (const auto& c : spec.corners) {
    require(c.width > 0.0 && c.s_center - c.width >= 0.0 &&
                c.s_center + c.width <= L,
            "circuit: corner support must lie inside (0, length)");
  }

  // Base curvature absorbs whatever winding the corners do not provide, so
  // total heading change is exactly one full turn.
  double corner_turn = 0.0;
  for (const auto& c : spec.corners) corner_turn += c.turn;
  const double beta = (kTwoPi - corner_turn) / L;

  auto yaw_raw = [&](double s) {
    double mu = beta * s;
    for (const auto& c : spec.corners) {
      mu += c.turn * bump_integral((s - c.s_center) / c.width);
    }
    return mu;
  };
  auto corner_curvature = [&](double s) {
    double k = 0.0;
    for (const auto& c : spec.corners) {
      k += (c.turn / c.width) * bump((s - c.s_center) / c.width);
    }
    return k;
  };

  // All closure conditions below are solved on the spline representation
  // the finished ribbon will actually use (spline construction is linear in
  // the knot ordinates, so component splines can be combined on the fly).
  // That makes the world-frame closure of the built track equal to the
  // Newton residual instead of being limited by spline interpolation error.
  const int m = std::max(48, static_cast<int>(std::lround(L / 10.0)));
  std::vector<double> sk(static_cast<size_t>(m) + 1);
  for (int i = 0; i <= m; ++i) sk[static_cast<size_t>(i)] = L * i / m;
  auto sample = [&](auto&& f) {
    std::vector<double> y(static_cast<size_t>(m) + 1);
    for (int i = 0; i <= m; ++i) y[static_cast<size_t>(i)] = f(sk[static_cast<size_t>(i)]);
    y[static_cast<size_t>(m)] = y[0];  // analytically periodic profiles
    return CubicSpline(sk, std::move(y), CubicSpline::Boundary::kPeriodic);
  };

  // Pitch: a few seeded Fourier modes (periodic by construction), scaled so
  // the elevation range matches, plus a constant offset that closes the
  // total climb.
  std::mt19937 rng(spec.seed ^ 0x9e3779b9u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr int kModes = 4;
  double ac[kModes], bs[kModes];
  for (int k = 0; k < kModes; ++k) {
    ac[k] = gauss(rng) / (k + 1);
    bs[k] = gauss(rng) / (k + 1);
  }
  auto pitch_wave = [&](double s) {
    double th = 0.0;
    for (int k = 0; k < kModes; ++k) {
      th += ac[k] * std::cos(kTwoPi * (k + 1) * s / L) +
            bs[k] * std::sin(kTwoPi * (k + 1) * s / L);
    }
    return th;
  };
  double unit_max = 0.0;
  for (int i = 0; i <= m; ++i) {
    unit_max = std::max(unit_max, std::abs(pitch_wave(L * i / m)));
  }
  if (unit_max < 1e-12) unit_max = 1.0;
  const CubicSpline unit_spl = sample([&](double s) { return pitch_wave(s) / unit_max; });

  double amp = 0.0, theta0 = 0.0;
  if (spec.elevation_range > 0.0) {
    auto solve_theta0 = [&](double a) {
      // Newton on integral(sin(theta0 + a * unit)) = 0 over the spline.
      double t0 = 0.0;
      for (int it = 0; it < 30; ++it) {
        const double f = gl_integrate1(
            [&](double s) { return std::sin(t0 + a * unit_spl(s)); }, 0.0, L, m);
        const double fp = gl_integrate1(
            [&](double s) { return std::cos(t0 + a * unit_spl(s)); }, 0.0, L, m);
        const double step = f / fp;
        t0 -= step;
        if (std::abs(step) < 1e-14) break;
      }
      return t0;
    };
    auto elevation_range_for = [&](double a) {
      const double t0 = solve_theta0(a);
      double z = 0.0, zmin = 0.0, zmax = 0.0;
      for (int i = 0; i < m; ++i) {
        // Track intra-interval extrema on a sub-grid so narrow crests count.
        for (int q = 0; q < 4; ++q) {
          z += gl_integrate1(
              [&](double s) { return std::sin(t0 + a * unit_spl(s)); },
              L * (i + q * 0.25) / m, L * (i + (q + 1) * 0.25) / m, 1);
          zmin = std::min(zmin, z);
          zmax = std::max(zmax, z);
        }
      }
      return zmax - zmin;
    };
    // Secant iteration on the pitch amplitude.
    double a0 = 0.01, a1 = 0.02;
    double r0 = elevation_range_for(a0), r1 = elevation_range_for(a1);
    for (int it = 0; it < 60 && std::abs(r1 - spec.elevation_range) >
                                    1e-9 * std::max(1.0, spec.elevation_range);
         ++it) {
      const double a2 = a1 + (spec.elevation_range - r1) * (a1 - a0) /
                                 std::max(1e-30, r1 - r0);
      a0 = a1;
      r0 = r1;
      a1 = std::clamp(a2, 0.0, 0.35);
      r1 = elevation_range_for(a1);
    }
    require(std::abs(r1 - spec.elevation_range) <=
                1e-6 * std::max(1.0, spec.elevation_range),
            "circuit: elevation range target unreachable with pitch <= 0.35 rad");
    amp = a1;
    theta0 = solve_theta0(amp);
  }
  auto pitch_at = [&](double s) { return theta0 + amp * unit_spl(s); };

  // Banking proportional to corner curvature, scaled to the requested peak.
  double curv_max = 0.0;
  for (int i = 0; i <= m; ++i) {
    curv_max = std::max(curv_max, std::abs(corner_curvature(L * i / m)));
  }
  auto roll_at = [&](double s) {
    if (curv_max < 1e-12) return 0.0;
    return spec.max_bank * corner_curvature(s) / curv_max;
  };

  // Close the plan-view spine: two periodic yaw corrections, Newton on the
  // end-point displacement measured through the spline representation.
  const double ramp = kTwoPi / L;  // yaw winding carried outside the spline
  const CubicSpline yaw_raw_spl = sample([&](double s) { return yaw_raw(s) - ramp * s; });
  const CubicSpline sin_spl = sample([&](double s) { return std::sin(kTwoPi * s / L); });
  const CubicSpline cos1_spl =
      sample([&](double s) { return 1.0 - std::cos(kTwoPi * s / L); });
  double c1 = 0.0, c2 = 0.0;
  auto displacement = [&](double v1, double v2) {
    auto tangent2 = [&](double s) -> Eigen::Vector3d {
      const double mu =
          ramp * s + yaw_raw_spl(s) + v1 * sin_spl(s) + v2 * cos1_spl(s);
      const double ct = std::cos(pitch_at(s));
      return {std::cos(mu) * ct, std::sin(mu) * ct, 0.0};
    };
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int i = 0; i < m; ++i) {
      acc += gl_integrate3(tangent2, L * i / m, L * (i + 1) / m);
    }
    return Eigen::Vector2d(acc.x(), acc.y());
  };
  {
    Eigen::Vector2d f = displacement(c1, c2);
    for (int it = 0; it < 50 && f.norm() > 1e-10 * L; ++it) {
      const double h = 1e-6;
      Eigen::Matrix2d jac;
      jac.col(0) = (displacement(c1 + h, c2) - f) / h;
      jac.col(1) = (displacement(c1, c2 + h) - f) / h;
      const double det = jac(0, 0) * jac(1, 1) - jac(0, 1) * jac(1, 0);
      c1 -= (f[0] * jac(1, 1) - jac(0, 1) * f[1]) / det;
      c2 -= (jac(0, 0) * f[1] - f[0] * jac(1, 0)) / det;
      f = displacement(c1, c2);
    }
    require(f.norm() <= 1e-8 * L, "circuit: plan closure failed to converge");
  }

  Eigen::VectorXd skv(m + 1), th(m + 1), mu(m + 1), phi(m + 1), hw(m + 1);
  for (int i = 0; i <= m; ++i) {
    const double s = sk[static_cast<size_t>(i)];
    skv[i] = s;
    th[i] = pitch_at(s);
    mu[i] = ramp * s + yaw_raw_spl(s) + c1 * sin_spl(s) + c2 * cos1_spl(s);
    phi[i] = roll_at(s);
    hw[i] = spec.half_width;
  }
  th[m] = th[0];
  phi[m] = phi[0];
  mu[m] = mu[0] + kTwoPi;
  return TrackRibbon(std::move(skv), std::move(th), std::move(mu),
                     std::move(phi), std::move(hw), /*closed=*/true);
}

}  // namespace fueltraj::track
