#include "fueltraj/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fueltraj {

namespace {

// Thomas algorithm for a tridiagonal system; diagonals (a=sub, b=diag,
// c=super) are overwritten.
void solve_tridiagonal(std::vector<double>& a, std::vector<double>& b,
                       std::vector<double>& c, std::vector<double>& d) {
  const int n = static_cast<int>(b.size());
  for (int i = 1; i < n; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    d[i] -= w * d[i - 1];
  }
  d[n - 1] /= b[n - 1];
  for (int i = n - 2; i >= 0; --i) {
    d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
  }
}

}  // namespace

CubicSpline::CubicSpline(std::vector<double> x, std::vector<double> y,
                         Boundary bc)
    : x_(std::move(x)), y_(std::move(y)),
      periodic_(bc == Boundary::kPeriodic) {
  const int n = static_cast<int>(x_.size());
  if (n < 2 || y_.size() != x_.size()) {
    throw std::invalid_argument("CubicSpline: need >= 2 matching knots");
  }
  for (int i = 1; i < n; ++i) {
    if (!(x_[i] > x_[i - 1])) {
      throw std::invalid_argument("CubicSpline: knots must strictly increase");
    }
  }

  m_.assign(n, 0.0);
  if (n == 2) {
    return;  // linear segment; second derivatives stay zero
  }

  auto h = [&](int i) { return x_[i + 1] - x_[i]; };
  auto slope = [&](int i) { return (y_[i + 1] - y_[i]) / h(i); };

  if (!periodic_) {
    // Natural: m_0 = m_{n-1} = 0, tridiagonal in the interior moments.
    const int m = n - 2;
    std::vector<double> a(m), b(m), c(m), d(m);
    for (int i = 0; i < m; ++i) {
      a[i] = h(i) / 6.0;
      b[i] = (h(i) + h(i + 1)) / 3.0;
      c[i] = h(i + 1) / 6.0;
      d[i] = slope(i + 1) - slope(i);
    }
    solve_tridiagonal(a, b, c, d);
    for (int i = 0; i < m; ++i) m_[i + 1] = d[i];
    return;
  }

  // Periodic: repeated curve, so the ordinates must close.
  const double scale = std::max(1.0, std::abs(y_.front()));
  if (std::abs(y_.front() - y_.back()) > 1e-9 * scale) {
    throw std::invalid_argument("CubicSpline: periodic data must close");
  }
  // Cyclic tridiagonal system in m_0..m_{n-2} (m_{n-1} = m_0), solved with
  // the Sherman-Morrison correction on top of the Thomas algorithm.
  const int m = n - 1;
  auto hp = [&](int i) { return h((i + m - 1) % m); };  // h_{i-1} cyclic
  std::vector<double> diag(m), sub(m), sup(m), rhs(m);
  for (int i = 0; i < m; ++i) {
    sub[i] = hp(i) / 6.0;
    diag[i] = (hp(i) + h(i)) / 3.0;
    sup[i] = h(i) / 6.0;
    const int prev = (i + m - 1) % m;
    rhs[i] = slope(i) - slope(prev);
  }
  if (m == 2) {
    // 2x2 dense solve; the cyclic wrap makes sub/sup coincide.
    const double a00 = diag[0], a01 = sub[0] + sup[0];
    const double a10 = sub[1] + sup[1], a11 = diag[1];
    const double det = a00 * a11 - a01 * a10;
    m_[0] = (rhs[0] * a11 - a01 * rhs[1]) / det;
    m_[1] = (a00 * rhs[1] - rhs[0] * a10) / det;
  } else {
    const double corner_last = sub[0];  // A(0, m-1)
    const double corner_first = sup[m - 1];  // A(m-1, 0)
    const double gamma = -diag[0];
    std::vector<double> b(diag), d(rhs), u(m, 0.0);
    b[0] -= gamma;
    b[m - 1] -= corner_first * corner_last / gamma;
    u[0] = gamma;
    u[m - 1] = corner_first;
    {
      std::vector<double> a1(sub), c1(sup);
      a1[0] = 0.0;
      c1[m - 1] = 0.0;
      std::vector<double> a2(a1), b2(b), c2(c1);
      solve_tridiagonal(a1, b, c1, d);
      solve_tridiagonal(a2, b2, c2, u);
    }
    const double frac = (d[0] + corner_last * d[m - 1] / gamma) /
                        (1.0 + u[0] + corner_last * u[m - 1] / gamma);
    for (int i = 0; i < m; ++i) m_[i] = d[i] - frac * u[i];
  }
  m_[n - 1] = m_[0];
}

int CubicSpline::find_interval(double& x) const {
  if (periodic_) {
    const double period = x_.back() - x_.front();
    x = x_.front() + std::fmod(x - x_.front(), period);
    if (x < x_.front()) x += period;
  } else if (x < x_.front() - 1e-12 || x > x_.back() + 1e-12) {
    throw std::out_of_range("CubicSpline: query outside knot range");
  }
  x = std::clamp(x, x_.front(), x_.back());
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  int i = static_cast<int>(it - x_.begin()) - 1;
  return std::clamp(i, 0, static_cast<int>(x_.size()) - 2);
}

double CubicSpline::eval(double x) const {
  const int i = find_interval(x);
  const double hseg = x_[i + 1] - x_[i];
  const double t = x - x_[i], u = x_[i + 1] - x;
  return m_[i] * u * u * u / (6.0 * hseg) + m_[i + 1] * t * t * t / (6.0 * hseg) +
         (y_[i] / hseg - m_[i] * hseg / 6.0) * u +
         (y_[i + 1] / hseg - m_[i + 1] * hseg / 6.0) * t;
}

double CubicSpline::deriv(double x) const {
  const int i = find_interval(x);
  const double hseg = x_[i + 1] - x_[i];
  const double t = x - x_[i], u = x_[i + 1] - x;
  return -m_[i] * u * u / (2.0 * hseg) + m_[i + 1] * t * t / (2.0 * hseg) +
         (y_[i + 1] - y_[i]) / hseg - (m_[i + 1] - m_[i]) * hseg / 6.0;
}

double CubicSpline::deriv2(double x) const {
  const int i = find_interval(x);
  const double hseg = x_[i + 1] - x_[i];
  return (m_[i] * (x_[i + 1] - x) + m_[i + 1] * (x - x_[i])) / hseg;
}

}  // namespace fueltraj
