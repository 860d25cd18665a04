#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "vfharm/error.hpp"
#include "vfharm/phase.hpp"
#include "vfharm/sfd.hpp"

namespace vfharm {

// Fourier coefficients {A_h} of a phase-periodic n×m matrix function A(θ) = Σ A_h e^{jhθ}.
using Symbol = std::map<int, Eigen::MatrixXcd>;

inline std::pair<int, int> symbol_shape(const Symbol& s) {
  if (s.empty()) raise(ErrorKind::DimensionMismatch, "empty symbol");
  const auto& a = s.begin()->second;
  for (const auto& [h, c] : s)
    if (c.rows() != a.rows() || c.cols() != a.cols()) raise(ErrorKind::DimensionMismatch, "ragged symbol");
  return {static_cast<int>(a.rows()), static_cast<int>(a.cols())};
}

inline int symbol_band(const Symbol& s) {
  int b = 0;
  for (const auto& [h, c] : s)
    if (c.cwiseAbs().maxCoeff() > 0.0) b = std::max(b, std::abs(h));
  return b;
}

template <class Derived>
Symbol constant_symbol(const Eigen::MatrixBase<Derived>& a) {
  return Symbol{{0, Eigen::MatrixXcd(a.template cast<cdouble>())}};
}

inline Symbol scalar_symbol(const std::map<int, cdouble>& coeffs) {
  Symbol s;
  for (const auto& [h, v] : coeffs) s[h] = Eigen::MatrixXcd::Constant(1, 1, v);
  return s;
}

// Coefficients of amp·cos(kθ + ph) and amp·sin(kθ + ph) as scalar maps.
inline std::map<int, cdouble> cos_coeffs(int k, double amp = 1.0, double ph = 0.0) {
  if (k == 0) return {{0, amp * std::cos(ph)}};
  return {{k, 0.5 * amp * std::polar(1.0, ph)}, {-k, 0.5 * amp * std::polar(1.0, -ph)}};
}
inline std::map<int, cdouble> sin_coeffs(int k, double amp = 1.0, double ph = 0.0) {
  if (k == 0) return {{0, amp * std::sin(ph)}};
  return {{k, amp * std::polar(1.0, ph) / cdouble(0, 2)}, {-k, -amp * std::polar(1.0, -ph) / cdouble(0, 2)}};
}

// Adds v·coeffs into entry (i, j) of an n×m symbol.
inline void add_to_symbol(Symbol& s, int n, int m, int i, int j, const std::map<int, cdouble>& coeffs, cdouble v = 1.0) {
  for (const auto& [h, c] : coeffs) {
    auto it = s.find(h);
    if (it == s.end()) it = s.emplace(h, Eigen::MatrixXcd::Zero(n, m)).first;
    it->second(i, j) += v * c;
  }
}

inline Eigen::MatrixXcd evaluate_symbol(const Symbol& s, double theta) {
  auto [n, m] = symbol_shape(s);
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n, m);
  for (const auto& [h, c] : s) a += c * std::polar(1.0, h * theta);
  return a;
}

inline Symbol symbol_product(const Symbol& a, const Symbol& b) {
  auto [n, p] = symbol_shape(a);
  auto [p2, m] = symbol_shape(b);
  if (p != p2) raise(ErrorKind::DimensionMismatch, "symbol product inner dimension");
  Symbol out;
  for (const auto& [ha, ca] : a)
    for (const auto& [hb, cb] : b) {
      auto it = out.find(ha + hb);
      if (it == out.end()) it = out.emplace(ha + hb, Eigen::MatrixXcd::Zero(n, m)).first;
      it->second += ca * cb;
    }
  return out;
}

inline Symbol symbol_sum(const Symbol& a, const Symbol& b, cdouble beta = 1.0) {
  Symbol out = a;
  auto [n, m] = symbol_shape(a);
  for (const auto& [h, c] : b) {
    auto it = out.find(h);
    if (it == out.end()) it = out.emplace(h, Eigen::MatrixXcd::Zero(n, m)).first;
    it->second += beta * c;
  }
  return out;
}

inline Symbol symbol_scale(const Symbol& a, cdouble s) {
  Symbol out = a;
  for (auto& [h, c] : out) c *= s;
  return out;
}

// Pointwise conjugate transpose: (A*)_h = (A_{−h})^H.
inline Symbol symbol_adjoint(const Symbol& a) {
  Symbol out;
  for (const auto& [h, c] : a) out[-h] = c.adjoint();
  return out;
}

inline bool symbol_is_hermitian(const Symbol& a, double tol = 1e-12) {
  auto [n, m] = symbol_shape(a);
  if (n != m) return false;
  const Symbol adj = symbol_adjoint(a);
  for (const auto& [h, c] : symbol_sum(a, adj, -1.0))
    if (c.cwiseAbs().maxCoeff() > tol) return false;
  return true;
}

// Block-Toeplitz realization: entry (i(2N+1)+k+N, j(2N+1)+l+N) = (A_{k−l})_{ij}. Coefficients with |h| > 2N never fit.
inline Eigen::MatrixXcd realize_symbol(const Symbol& s, int n, int m, int N) {
  const int K = 2 * N + 1;
  Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(n * K, m * K);
  for (const auto& [h, c] : s) {
    if (std::abs(h) > 2 * N) continue;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const cdouble v = c(i, j);
        if (v == 0.0) continue;
        for (int k = std::max(-N, h - N); k <= std::min(N, h + N); ++k) M(i * K + k + N, j * K + k - h + N) = v;
      }
  }
  return M;
}

class ToeplitzBlockOperator {
 public:
  ToeplitzBlockOperator() = default;
  ToeplitzBlockOperator(int n, int m, int N, Eigen::MatrixXcd mat, std::optional<Symbol> sym = std::nullopt)
      : n_(n), m_(m), N_(N), mat_(std::move(mat)), sym_(std::move(sym)) {
    if (mat_.rows() != n_ * (2 * N_ + 1) || mat_.cols() != m_ * (2 * N_ + 1))
      raise(ErrorKind::DimensionMismatch, "realized matrix does not match block dimensions");
  }

  int n() const { return n_; }
  int m() const { return m_; }
  int order() const { return N_; }
  int harmonics() const { return 2 * N_ + 1; }
  const Eigen::MatrixXcd& matrix() const { return mat_; }
  bool has_symbol() const { return sym_.has_value(); }
  const Symbol& symbol() const {
    if (!sym_) raise(ErrorKind::DimensionMismatch, "operator carries no symbol");
    return *sym_;
  }

  auto block(int i, int j) const { return mat_.block(i * harmonics(), j * harmonics(), harmonics(), harmonics()); }

  bool is_hermitian(double tol = 1e-12) const {
    return n_ == m_ && (mat_ - mat_.adjoint()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, mat_.cwiseAbs().maxCoeff());
  }

  ToeplitzBlockOperator adjoint() const {
    std::optional<Symbol> s;
    if (sym_) s = symbol_adjoint(*sym_);
    return {m_, n_, N_, mat_.adjoint(), std::move(s)};
  }

  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const {
    if (x.size() != mat_.cols()) raise(ErrorKind::DimensionMismatch, "operator applied to wrong length");
    return mat_ * x;
  }

  friend ToeplitzBlockOperator operator+(const ToeplitzBlockOperator& a, const ToeplitzBlockOperator& b) {
    a.check_same(b);
    std::optional<Symbol> s;
    if (a.sym_ && b.sym_) s = symbol_sum(*a.sym_, *b.sym_);
    return {a.n_, a.m_, a.N_, a.mat_ + b.mat_, std::move(s)};
  }
  friend ToeplitzBlockOperator operator-(const ToeplitzBlockOperator& a, const ToeplitzBlockOperator& b) {
    a.check_same(b);
    std::optional<Symbol> s;
    if (a.sym_ && b.sym_) s = symbol_sum(*a.sym_, *b.sym_, -1.0);
    return {a.n_, a.m_, a.N_, a.mat_ - b.mat_, std::move(s)};
  }
  friend ToeplitzBlockOperator operator*(cdouble s, const ToeplitzBlockOperator& a) {
    std::optional<Symbol> sy;
    if (a.sym_) sy = symbol_scale(*a.sym_, s);
    return {a.n_, a.m_, a.N_, s * a.mat_, std::move(sy)};
  }

 private:
  void check_same(const ToeplitzBlockOperator& b) const {
    if (n_ != b.n_ || m_ != b.m_ || N_ != b.N_) raise(ErrorKind::DimensionMismatch, "operator shapes differ");
  }

  int n_ = 0, m_ = 0, N_ = 0;
  Eigen::MatrixXcd mat_;
  std::optional<Symbol> sym_;
};

inline ToeplitzBlockOperator toeplitz_from_symbol(const Symbol& s, int N) {
  if (N < 0) raise(ErrorKind::DimensionMismatch, "negative truncation order");
  const int B = symbol_band(s);
  if (B > 2 * N)
    raise(ErrorKind::BandExceedsTruncation, "symbol band " + std::to_string(B) + " exceeds 2N = " + std::to_string(2 * N));
  auto [n, m] = symbol_shape(s);
  return {n, m, N, realize_symbol(s, n, m, N), s};
}

inline ToeplitzBlockOperator identity_operator(int n, int N) {
  return toeplitz_from_symbol(Symbol{{0, Eigen::MatrixXcd::Identity(n, n)}}, N);
}

enum class ProductMode { truncated, oversampled };

inline ToeplitzBlockOperator toeplitz_product(const ToeplitzBlockOperator& a, const ToeplitzBlockOperator& b,
                                              ProductMode mode) {
  if (a.m() != b.n() || a.order() != b.order()) raise(ErrorKind::DimensionMismatch, "toeplitz product shapes");
  if (mode == ProductMode::truncated) return {a.n(), b.m(), a.order(), a.matrix() * b.matrix()};
  Symbol s = symbol_product(a.symbol(), b.symbol());
  return {a.n(), b.m(), a.order(), realize_symbol(s, a.n(), b.m(), a.order()), std::move(s)};
}

// Largest singular value; bounded above by the L∞ norm of the symbol.
inline double operator_norm(const ToeplitzBlockOperator& a) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a.matrix());
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

// 𝓝 = I_n ⊗ diag(jk), k = −N..N
class HarmonicDerivativeOperator {
 public:
  HarmonicDerivativeOperator(int n, int N) : n_(n), N_(N) {}
  int n() const { return n_; }
  int order() const { return N_; }
  Eigen::MatrixXcd matrix() const {
    const int K = 2 * N_ + 1;
    Eigen::VectorXcd d(n_ * K);
    for (int i = 0; i < n_; ++i)
      for (int k = -N_; k <= N_; ++k) d(i * K + k + N_) = cdouble(0.0, k);
    return d.asDiagonal();
  }
  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const {
    const int K = 2 * N_ + 1;
    if (x.size() != n_ * K) raise(ErrorKind::DimensionMismatch, "N operator applied to wrong length");
    Eigen::VectorXcd y(x.size());
    for (int i = 0; i < n_; ++i)
      for (int k = -N_; k <= N_; ++k) y(i * K + k + N_) = cdouble(0.0, k) * x(i * K + k + N_);
    return y;
  }

 private:
  int n_, N_;
};

inline HarmonicDerivativeOperator harmonic_derivative(int n, int N) { return {n, N}; }

// I_n ⊗ M for a scalar-block operator M of size (2N+1).
inline Eigen::MatrixXcd kron_identity(int n, const Eigen::MatrixXcd& m) {
  const auto K = m.rows();
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n * K, n * m.cols());
  for (int i = 0; i < n; ++i) out.block(i * K, i * m.cols(), K, m.cols()) = m;
  return out;
}

// 𝓖 = I_n ⊗ ω(t)·(truncated 𝓣(ω))^{-1}
inline ToeplitzBlockOperator g_operator(double omega_now, const Symbol& omega_window, int N, int n = 1,
                                        double max_condition = 1e12) {
  auto [r, c] = symbol_shape(omega_window);
  if (r != 1 || c != 1) raise(ErrorKind::DimensionMismatch, "frequency symbol must be scalar");
  const Eigen::MatrixXcd T = realize_symbol(omega_window, 1, 1, N);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(T);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
  if (!(cond <= max_condition))
    raise(ErrorKind::SingularFrequencyOperator, "condition number " + std::to_string(cond));
  const Eigen::MatrixXcd G = omega_now * T.partialPivLu().inverse();
  return {n, n, N, kron_identity(n, G)};
}

// Window Fourier coefficients (absolute phase) of a scalar function of time, up to |h| ≤ band.
template <class F>
Symbol window_symbol(const PseudoPeriodEvaluator& ev, double t, int band, F&& f) {
  const auto X = sfd_variable([&](double tau) { return f(tau); }, ev.phase, band, t);
  Symbol s;
  for (int h = -band; h <= band; ++h) s[h] = Eigen::MatrixXcd::Constant(1, 1, X(h)(0));
  return s;
}

inline Symbol frequency_window_symbol(const PseudoPeriodEvaluator& ev, double t, int band) {
  return window_symbol(ev, t, band, [&](double tau) { return ev.phase.omega(tau); });
}

inline Symbol inverse_frequency_window_symbol(const PseudoPeriodEvaluator& ev, double t, int band) {
  return window_symbol(ev, t, band, [&](double tau) { return 1.0 / ev.phase.omega(tau); });
}

// 𝓖 assembled from the window of ω at time t.
inline ToeplitzBlockOperator g_operator(const PseudoPeriodEvaluator& ev, double t, int N, int n = 1) {
  return g_operator(ev.phase.omega(t), frequency_window_symbol(ev, t, 2 * N), N, n);
}

// Cross-check variant: ω(t)·𝓣(1/ω) (truncate the inverse symbol instead of inverting the truncation).
inline ToeplitzBlockOperator g_operator_inverse_symbol(const PseudoPeriodEvaluator& ev, double t, int N, int n = 1) {
  const Eigen::MatrixXcd T = realize_symbol(inverse_frequency_window_symbol(ev, t, 2 * N), 1, 1, N);
  return {n, n, N, kron_identity(n, ev.phase.omega(t) * T)};
}

// Δ_ω = 𝓣(δ), δ(τ) = (ω(t) − ω(τ)) / ω(τ) on the trailing window.
inline ToeplitzBlockOperator delta_omega_operator(const PseudoPeriodEvaluator& ev, double t, int N) {
  const double wt = ev.phase.omega(t);
  Symbol s = window_symbol(ev, t, 2 * N, [&](double tau) {
    const double w = ev.phase.omega(tau);
    return (wt - w) / w;
  });
  return toeplitz_from_symbol(s, N);
}

// trace / (2N+1)
inline double average_trace(const ToeplitzBlockOperator& M, double tol = 1e-10) {
  if (!M.is_hermitian(tol)) raise(ErrorKind::NotHermitian, "average trace of a non-Hermitian operator");
  return M.matrix().trace().real() / M.harmonics();
}

// Rows whose stencil does not reach the truncation edge for a symbol band B: |k| ≤ N − B.
inline std::vector<int> central_rows(int n, int N, int B) {
  std::vector<int> rows;
  const int K = 2 * N + 1;
  for (int i = 0; i < n; ++i)
    for (int k = -(N - B); k <= N - B; ++k) rows.push_back(i * K + k + N);
  return rows;
}

}  // namespace vfharm
