#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include "vfharm/error.hpp"
#include "vfharm/phase.hpp"

namespace vfharm {

using cdouble = std::complex<double>;
inline constexpr cdouble I_unit{0.0, 1.0};

// Truncated phasor sequence {X_k}, |k| ≤ N, of an n-dimensional signal.
struct PhasorSequence {
  int N = 0;
  Eigen::MatrixXcd values;  // n × (2N+1), column k+N holds X_k
  bool real_signal = false;

  PhasorSequence() = default;
  PhasorSequence(int n, int order, bool real = false)
      : N(order), values(Eigen::MatrixXcd::Zero(n, 2 * order + 1)), real_signal(real) {}

  int dim() const { return static_cast<int>(values.rows()); }
  int size() const { return 2 * N + 1; }
  auto operator()(int k) { return values.col(k + N); }
  auto operator()(int k) const { return values.col(k + N); }

  // Component-major stacking used by the Toeplitz operators: index i(2N+1) + k + N.
  Eigen::VectorXcd stacked() const {
    Eigen::VectorXcd v(values.size());
    for (int i = 0; i < dim(); ++i) v.segment(i * size(), size()) = values.row(i).transpose();
    return v;
  }

  static PhasorSequence from_stacked(const Eigen::VectorXcd& v, int n, int order, bool real = false) {
    if (v.size() != n * (2 * order + 1)) raise(ErrorKind::DimensionMismatch, "stacked phasor length");
    PhasorSequence X(n, order, real);
    for (int i = 0; i < n; ++i) X.values.row(i) = v.segment(i * X.size(), X.size()).transpose();
    return X;
  }

  // max_k ‖X_{−k} − conj(X_k)‖
  double conjugate_asymmetry() const {
    double r = 0.0;
    for (int k = 0; k <= N; ++k) r = std::max(r, ((*this)(-k) - (*this)(k).conjugate()).norm());
    return r;
  }
};

struct SfdOptions {
  int panels = 0;  // 0 selects 8(N+1)
  double tol = 1e-10;
  int max_doublings = 8;
};

namespace detail {

inline const std::vector<std::pair<double, double>>& gauss_rule() {
  static const std::vector<std::pair<double, double>> rule = [] {
    using G = boost::math::quadrature::gauss<double, 10>;
    std::vector<std::pair<double, double>> r;
    for (std::size_t i = 0; i < G::abscissa().size(); ++i) {
      const double a = G::abscissa()[i], w = G::weights()[i];
      if (a == 0.0) {
        r.emplace_back(0.0, w);
      } else {
        r.emplace_back(-a, w);
        r.emplace_back(a, w);
      }
    }
    return r;
  }();
  return rule;
}

inline Eigen::VectorXd as_vector(double v) { return Eigen::VectorXd::Constant(1, v); }
template <class Derived>
Eigen::VectorXd as_vector(const Eigen::MatrixBase<Derived>& v) {
  return v;
}

// Σ over a composite Gauss rule of sample(s) = (x, φ, jacobian), projected on e^{−jkφ} for k = 0..N.
template <class Sample>
Eigen::MatrixXcd project(Sample& sample, double a, double b, int N, int panels) {
  const auto& rule = gauss_rule();
  const double h = (b - a) / panels;
  Eigen::MatrixXcd acc;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + h * (p + 0.5);
    for (const auto& [xi, wi] : rule) {
      const double s = mid + 0.5 * h * xi;
      auto [x, phi, jac] = sample(s);
      if (acc.size() == 0) acc = Eigen::MatrixXcd::Zero(x.size(), N + 1);
      const double w = 0.5 * h * wi * jac;
      for (int k = 0; k <= N; ++k) acc.col(k) += (w * std::polar(1.0, -k * phi)) * x.template cast<cdouble>();
    }
  }
  return acc;
}

template <class Sample>
PhasorSequence adaptive_sfd(Sample&& sample, double a, double b, int N, double scale, const SfdOptions& opt) {
  int panels = opt.panels > 0 ? opt.panels : 8 * (N + 1);
  Eigen::MatrixXcd prev = project(sample, a, b, N, panels) * scale;
  for (int d = 0; d < opt.max_doublings; ++d) {
    panels *= 2;
    Eigen::MatrixXcd cur = project(sample, a, b, N, panels) * scale;
    const double ref = std::max(1.0, cur.cwiseAbs().maxCoeff());
    if ((cur - prev).cwiseAbs().maxCoeff() <= opt.tol * ref) {
      PhasorSequence X(static_cast<int>(cur.rows()), N, true);
      for (int k = 0; k <= N; ++k) {
        X(k) = cur.col(k);
        X(-k) = cur.col(k).conjugate();
      }
      return X;
    }
    prev = std::move(cur);
  }
  raise(ErrorKind::QuadratureFailure, "phasors did not stabilise under panel doubling");
}

}  // namespace detail

// X_k = (1/T0) ∫_{t−T0}^{t} x(τ) e^{−jkω0τ} dτ
template <class F>
PhasorSequence sfd_fixed(F&& x, double T0, int N, double t, const SfdOptions& opt = {}) {
  if (!(T0 > 0.0)) raise(ErrorKind::DomainExceeded, "T0 must be positive");
  const double w0 = two_pi / T0;
  auto sample = [&](double tau) {
    return std::tuple<Eigen::VectorXd, double, double>(detail::as_vector(x(tau)), w0 * tau, 1.0);
  };
  return detail::adaptive_sfd(sample, t - T0, t, N, 1.0 / T0, opt);
}

enum class SfdPath { time, phase };

// X_k = (1/2π) ∫_{t−T(t)}^{t} x(τ) e^{−jkθ(τ)} ω(τ) dτ, or the same integral in the phase variable.
template <class F>
PhasorSequence sfd_variable(F&& x, const PhaseFunction& phase, int N, double t, SfdPath path = SfdPath::time,
                            const SfdOptions& opt = {}) {
  const double T = pseudo_period(PseudoPeriodEvaluator{phase}, t).T;
  const double scale = 1.0 / two_pi;
  if (path == SfdPath::time) {
    auto sample = [&](double tau) {
      return std::tuple<Eigen::VectorXd, double, double>(detail::as_vector(x(tau)), phase.theta(tau),
                                                         phase.omega(tau));
    };
    return detail::adaptive_sfd(sample, t - T, t, N, scale, opt);
  }
  const double th = phase.theta(t);
  const double tlo = t - T;
  auto sample = [&](double phi) {
    const double tau = std::clamp(phase.time_of(phi), tlo, t);
    return std::tuple<Eigen::VectorXd, double, double>(detail::as_vector(x(tau)), phi, 1.0);
  };
  return detail::adaptive_sfd(sample, th - two_pi, th, N, scale, opt);
}

// Phase-domain trapezoid SFD of a sampled trace at sample index j. theta must be increasing.
inline PhasorSequence sfd_sampled(const std::vector<double>& theta, const Eigen::MatrixXd& x, std::size_t j, int N) {
  if (x.cols() != static_cast<Eigen::Index>(theta.size()) || j >= theta.size())
    raise(ErrorKind::DimensionMismatch, "sampled sfd: trace sizes");
  const double lo = theta[j] - two_pi;
  if (theta.front() > lo) raise(ErrorKind::WindowUnavailable, "sampled sfd: less than one period of history");
  std::size_t i0 = j;
  while (i0 > 0 && theta[i0 - 1] > lo) --i0;
  const int n = static_cast<int>(x.rows());
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(n, N + 1);
  auto add_segment = [&](double pa, const Eigen::VectorXd& xa, double pb, const Eigen::VectorXd& xb) {
    const double h = 0.5 * (pb - pa);
    for (int k = 0; k <= N; ++k)
      acc.col(k) += h * (std::polar(1.0, -k * pa) * xa.cast<cdouble>() + std::polar(1.0, -k * pb) * xb.cast<cdouble>());
  };
  {
    const std::size_t a = i0 - 1;
    const double s = (lo - theta[a]) / (theta[i0] - theta[a]);
    Eigen::VectorXd xl = (1.0 - s) * x.col(static_cast<Eigen::Index>(a)) + s * x.col(static_cast<Eigen::Index>(i0));
    add_segment(lo, xl, theta[i0], x.col(static_cast<Eigen::Index>(i0)));
  }
  for (std::size_t i = i0; i < j; ++i)
    add_segment(theta[i], x.col(static_cast<Eigen::Index>(i)), theta[i + 1], x.col(static_cast<Eigen::Index>(i + 1)));
  acc /= two_pi;
  PhasorSequence X(n, N, true);
  for (int k = 0; k <= N; ++k) {
    X(k) = acc.col(k);
    X(-k) = acc.col(k).conjugate();
  }
  return X;
}

struct PhasorTrajectory {
  std::vector<double> t;
  std::vector<PhasorSequence> X;
  PhaseFunction phase;

  explicit PhasorTrajectory(PhaseFunction ph) : phase(std::move(ph)) {}

  std::size_t size() const { return t.size(); }
  int order() const { return X.empty() ? 0 : X.front().N; }
  int dim() const { return X.empty() ? 0 : X.front().dim(); }

  void validate() const {
    if (t.size() != X.size()) raise(ErrorKind::DimensionMismatch, "trajectory grid/phasor count");
    for (std::size_t i = 0; i < X.size(); ++i) {
      if (X[i].N != order() || X[i].dim() != dim()) raise(ErrorKind::DimensionMismatch, "non-uniform trajectory");
      if (i > 0 && !(t[i] > t[i - 1])) raise(ErrorKind::DimensionMismatch, "trajectory grid not increasing");
    }
  }
};

template <class F>
PhasorTrajectory sfd_trajectory(F&& x, const PhaseFunction& phase, int N, const std::vector<double>& grid,
                                const SfdOptions& opt = {}) {
  PhasorTrajectory tr(phase);
  tr.t = grid;
  tr.X.reserve(grid.size());
  for (double t : grid) tr.X.push_back(sfd_variable(x, phase, N, t, SfdPath::time, opt));
  return tr;
}

namespace detail {

// Fornberg weights for the first derivative at x0 on nodes xs.
inline std::vector<double> fd_weights(double x0, const std::vector<double>& xs) {
  const int n = static_cast<int>(xs.size());
  std::vector<std::vector<double>> c(n, std::vector<double>(2, 0.0));
  double c1 = 1.0, c4 = xs[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, 1);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = xs[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = xs[i] - xs[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = c[i][1];
  return w;
}

// Derivative of the stacked phasors at grid index i using a width-point stencil (shifted at the edges).
inline Eigen::VectorXcd fd_derivative(const PhasorTrajectory& tr, std::size_t i, int width) {
  const int m = static_cast<int>(tr.size());
  if (m < width) raise(ErrorKind::GridTooCoarse, "trajectory shorter than finite-difference stencil");
  int first = static_cast<int>(i) - width / 2;
  first = std::clamp(first, 0, m - width);
  std::vector<double> xs(width);
  for (int q = 0; q < width; ++q) xs[q] = tr.t[first + q];
  const auto w = fd_weights(tr.t[i], xs);
  Eigen::VectorXcd d = Eigen::VectorXcd::Zero(tr.X[i].values.size());
  for (int q = 0; q < width; ++q) d += w[q] * tr.X[first + q].stacked();
  return d;
}

inline std::size_t grid_index(const PhasorTrajectory& tr, double t) {
  auto it = std::lower_bound(tr.t.begin(), tr.t.end(), t - 1e-12 * (1.0 + std::abs(t)));
  if (it == tr.t.end() || std::abs(*it - t) > 1e-12 * (1.0 + std::abs(t)))
    raise(ErrorKind::DomainExceeded, "reconstruction time is not a trajectory grid point");
  return static_cast<std::size_t>(it - tr.t.begin());
}

}  // namespace detail

struct ReconstructOptions {
  double tol = 1e-6;  // allowed (π/ω)·‖error of Ẋ0‖ relative to max(1, ‖X‖)
  const Eigen::VectorXcd* x0_dot = nullptr;  // supplied derivative of X_0, skips finite differences
};

// x(t) = Σ X_k(t) e^{jkθ(t)} + (π/ω(t)) Ẋ0(t) at a grid point of the trajectory.
inline Eigen::VectorXcd reconstruct(const PhasorTrajectory& tr, double t, const ReconstructOptions& opt = {}) {
  tr.validate();
  const std::size_t i = detail::grid_index(tr, t);
  const auto& X = tr.X[i];
  const int n = X.dim(), N = X.N;
  const double th = tr.phase.theta(t), w = tr.phase.omega(t);
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(n);
  for (int k = -N; k <= N; ++k) x += X(k) * std::polar(1.0, k * th);
  Eigen::VectorXcd d0;
  if (opt.x0_dot) {
    d0 = *opt.x0_dot;
  } else {
    const Eigen::VectorXcd d5 = detail::fd_derivative(tr, i, 5);
    const Eigen::VectorXcd d7 = detail::fd_derivative(tr, i, 7);
    d0.resize(n);
    double err = 0.0;
    for (int c = 0; c < n; ++c) {
      d0(c) = d5(c * X.size() + N);
      err = std::max(err, std::abs(d7(c * X.size() + N) - d0(c)));
    }
    const double scale = std::max(1.0, X.values.norm());
    if (std::numbers::pi / w * err > opt.tol * scale)
      raise(ErrorKind::GridTooCoarse, "estimated error of the DC phasor derivative too large");
  }
  x += (std::numbers::pi / w) * d0;
  if (X.real_signal) {
    if (x.imag().cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, x.cwiseAbs().maxCoeff()))
      raise(ErrorKind::GridTooCoarse, "imaginary residual in reconstruction of a real signal");
  }
  return x;
}

struct CoincidenceReport {
  Eigen::MatrixXd residual;  // (2N+1) × grid size
  double max = 0.0;
};

// ‖Ẋ_k − Ẋ0 e^{−jkθ}‖ / max(1, ‖Ẋ0‖) on every grid point, derivatives by 5-point finite differences.
inline CoincidenceReport coincidence_residual(const PhasorTrajectory& tr) {
  tr.validate();
  if (tr.size() < 5) raise(ErrorKind::GridTooCoarse, "coincidence check needs at least five grid points");
  const int n = tr.dim(), N = tr.order(), K = 2 * N + 1;
  CoincidenceReport rep;
  rep.residual = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(tr.size()));
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const Eigen::VectorXcd d = detail::fd_derivative(tr, i, 5);
    const double th = tr.phase.theta(tr.t[i]);
    Eigen::VectorXcd d0(n);
    for (int c = 0; c < n; ++c) d0(c) = d(c * K + N);
    const double nrm = std::max(1.0, d0.norm());
    for (int k = -N; k <= N; ++k) {
      Eigen::VectorXcd dk(n);
      for (int c = 0; c < n; ++c) dk(c) = d(c * K + k + N);
      const double r = (dk - d0 * std::polar(1.0, -k * th)).norm() / nrm;
      rep.residual(k + N, static_cast<Eigen::Index>(i)) = r;
      rep.max = std::max(rep.max, r);
    }
  }
  return rep;
}

// CSV layout: a "# phasor-trajectory n=<n> N=<N> real=<0|1>" line, a column header, then one row per grid point.
inline void write_trajectory_csv(std::ostream& os, const PhasorTrajectory& tr) {
  tr.validate();
  const int n = tr.dim(), N = tr.order();
  const bool real = !tr.X.empty() && tr.X.front().real_signal;
  os << "# phasor-trajectory n=" << n << " N=" << N << " real=" << (real ? 1 : 0) << "\n";
  os << "t";
  for (int c = 0; c < n; ++c)
    for (int k = -N; k <= N; ++k) os << ",re_x" << c << "_k" << k << ",im_x" << c << "_k" << k;
  os << "\n";
  char buf[64];
  for (std::size_t i = 0; i < tr.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", tr.t[i]);
    os << buf;
    for (int c = 0; c < n; ++c)
      for (int k = -N; k <= N; ++k) {
        const cdouble v = tr.X[i].values(c, k + N);
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g", v.real(), v.imag());
        os << buf;
      }
    os << "\n";
  }
}

inline PhasorTrajectory read_trajectory_csv(std::istream& is, const PhaseFunction& phase) {
  std::string line;
  if (!std::getline(is, line)) raise(ErrorKind::ConfigError, "empty trajectory file");
  int n = 0, N = 0, real = 0;
  if (std::sscanf(line.c_str(), "# phasor-trajectory n=%d N=%d real=%d", &n, &N, &real) != 3)
    raise(ErrorKind::ConfigError, "bad trajectory header");
  std::getline(is, line);
  PhasorTrajectory tr(phase);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    const char* p = line.c_str();
    char* end = nullptr;
    while (*p) {
      vals.push_back(std::strtod(p, &end));
      if (end == p) raise(ErrorKind::ConfigError, "bad number in trajectory file");
      p = end;
      if (*p == ',') ++p;
    }
    if (vals.size() != static_cast<std::size_t>(1 + 2 * n * (2 * N + 1)))
      raise(ErrorKind::ConfigError, "trajectory row has wrong column count");
    tr.t.push_back(vals[0]);
    PhasorSequence X(n, N, real != 0);
    std::size_t q = 1;
    for (int c = 0; c < n; ++c)
      for (int k = -N; k <= N; ++k, q += 2) X.values(c, k + N) = cdouble(vals[q], vals[q + 1]);
    tr.X.push_back(std::move(X));
  }
  tr.validate();
  return tr;
}

}  // namespace vfharm
