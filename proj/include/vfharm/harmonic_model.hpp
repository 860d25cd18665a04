#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vfharm/error.hpp"
#include "vfharm/phase.hpp"
#include "vfharm/sfd.hpp"
#include "vfharm/toeplitz.hpp"

namespace vfharm {

// ẋ = A0(θ)x + B0(θ)u + ω(t)(A1(θ)x + B1(θ)u), ω(t) ∈ [ω_min, ω_max].
class AfmLppSystem {
 public:
  AfmLppSystem(const Symbol& A0, const Symbol& A1, const Symbol& B0, const Symbol& B1, int N, double omega_min,
               double omega_max)
      : A0_(toeplitz_from_symbol(A0, N)),
        A1_(toeplitz_from_symbol(A1, N)),
        B0_(toeplitz_from_symbol(B0, N)),
        B1_(toeplitz_from_symbol(B1, N)),
        N_(N),
        wmin_(omega_min),
        wmax_(omega_max) {
    const int n = A0_.n(), m = B0_.m();
    if (A0_.m() != n || A1_.n() != n || A1_.m() != n || B0_.n() != n || B1_.n() != n || B1_.m() != m)
      raise(ErrorKind::DimensionMismatch, "AFM-LPP symbol shapes are inconsistent");
    if (!(omega_min > 0.0) || !(omega_min < omega_max))
      raise(ErrorKind::NonPositiveFrequency, "frequency interval must satisfy 0 < ω_min < ω_max");
  }

  int n() const { return A0_.n(); }
  int m() const { return B0_.m(); }
  int order() const { return N_; }
  int harmonics() const { return 2 * N_ + 1; }
  double omega_min() const { return wmin_; }
  double omega_max() const { return wmax_; }
  const ToeplitzBlockOperator& A0() const { return A0_; }
  const ToeplitzBlockOperator& A1() const { return A1_; }
  const ToeplitzBlockOperator& B0() const { return B0_; }
  const ToeplitzBlockOperator& B1() const { return B1_; }

  void check(const PhasorSequence& X, const PhasorSequence& U) const {
    if (X.dim() != n() || X.N != N_ || U.dim() != m() || U.N != N_)
      raise(ErrorKind::DimensionMismatch, "phasor sequences do not match the system");
  }

 private:
  ToeplitzBlockOperator A0_, A1_, B0_, B1_;
  int N_;
  double wmin_, wmax_;
};

namespace detail {

inline Eigen::MatrixXcd expand_g(const ToeplitzBlockOperator& G, int n, int N) {
  if (G.order() != N) raise(ErrorKind::DimensionMismatch, "frequency operator order differs from the system");
  if (G.n() == n) return G.matrix();
  if (G.n() == 1) return kron_identity(n, G.matrix());
  raise(ErrorKind::DimensionMismatch, "frequency operator dimension differs from the system");
}

}  // namespace detail

// 𝓐₀X + 𝓑₀U: the part of the right-hand side seen through the frequency operator.
inline Eigen::VectorXcd frequency_free_part(const AfmLppSystem& sys, const PhasorSequence& X, const PhasorSequence& U) {
  sys.check(X, U);
  return sys.A0().apply(X.stacked()) + sys.B0().apply(U.stacked());
}

inline PhasorSequence exact_rhs(const AfmLppSystem& sys, const PhasorSequence& X, const PhasorSequence& U, double omega_now,
                                const ToeplitzBlockOperator& G) {
  const Eigen::VectorXcd f = frequency_free_part(sys, X, U);
  const Eigen::VectorXcd x = X.stacked();
  Eigen::VectorXcd d = detail::expand_g(G, sys.n(), sys.order()) * f +
                       omega_now * (sys.A1().apply(x) + sys.B1().apply(U.stacked()) -
                                    harmonic_derivative(sys.n(), sys.order()).apply(x));
  return PhasorSequence::from_stacked(d, sys.n(), sys.order(), X.real_signal && U.real_signal);
}

inline PhasorSequence pv_rhs(const AfmLppSystem& sys, const PhasorSequence& X, const PhasorSequence& U, double omega_now) {
  const Eigen::VectorXcd x = X.stacked();
  Eigen::VectorXcd d = frequency_free_part(sys, X, U) +
                       omega_now * (sys.A1().apply(x) + sys.B1().apply(U.stacked()) -
                                    harmonic_derivative(sys.n(), sys.order()).apply(x));
  return PhasorSequence::from_stacked(d, sys.n(), sys.order(), X.real_signal && U.real_signal);
}

struct ErrorBudget {
  double t = 0.0;
  double epsilon = 0.0;
  double error_norm = 0.0;      // ‖(I⊗Δ_ω)𝓕‖
  double pv_gap = 0.0;          // ‖exact_rhs − pv_rhs‖
  double reference_norm = 0.0;  // ‖𝓕‖ = ‖𝓐₀X + 𝓑₀U‖
  double bound = 0.0;           // ε‖𝓕‖
};

inline ErrorBudget error_budget(const AfmLppSystem& sys, const PhasorSequence& X, const PhasorSequence& U,
                                const PseudoPeriodEvaluator& ev, double t, double slack = 1e-2) {
  ErrorBudget b;
  b.t = t;
  b.epsilon = epsilon_criterion(ev, t);
  const Eigen::VectorXcd f = frequency_free_part(sys, X, U);
  const int n = sys.n(), N = sys.order();
  b.reference_norm = f.norm();
  b.bound = b.epsilon * b.reference_norm;
  b.error_norm = (kron_identity(n, delta_omega_operator(ev, t, N).matrix()) * f).norm();
  const Eigen::MatrixXcd G = detail::expand_g(g_operator(ev, t, N), n, N);
  b.pv_gap = ((G - Eigen::MatrixXcd::Identity(G.rows(), G.cols())) * f).norm();
  const double limit = b.bound * (1.0 + slack) + 1e-10 * b.reference_norm;
  if (b.error_norm > limit || b.pv_gap > limit)
    raise(ErrorKind::VerificationFailed, "modeling error " + std::to_string(std::max(b.error_norm, b.pv_gap)) +
                                             " exceeds ε‖F‖ = " + std::to_string(b.bound));
  return b;
}

// Forwarding states dz/dθ = J(θ)z + L(θ)C(θ)x appended after the plant; in harmonic form
// Ż = ω(𝓙Z + 𝓛𝓒X) − ω𝓝Z.
class AugmentedSystem {
 public:
  AugmentedSystem(AfmLppSystem base, Symbol J, Symbol L, Symbol C) : base_(std::move(base)) {
    const int N = base_.order();
    if (J.empty() && L.empty() && C.empty()) return;
    const auto [qj, qj2] = symbol_shape(J);
    const auto [ql, pl] = symbol_shape(L);
    const auto [pc, nc] = symbol_shape(C);
    if (qj != qj2 || ql != qj || pl != pc || nc != base_.n())
      raise(ErrorKind::DimensionMismatch, "forwarding symbols J (q×q), L (q×p), C (p×n) are inconsistent");
    qz_ = qj;
    J_ = toeplitz_from_symbol(J, N);
    LC_ = toeplitz_product(toeplitz_from_symbol(L, N), toeplitz_from_symbol(C, N), ProductMode::oversampled);
    C_ = toeplitz_from_symbol(C, N);
  }

  const AfmLppSystem& base() const { return base_; }
  int n() const { return base_.n(); }
  int q() const { return qz_; }
  int dim() const { return n() + qz_; }
  int m() const { return base_.m(); }
  int order() const { return base_.order(); }
  const ToeplitzBlockOperator& J() const { return J_; }
  const ToeplitzBlockOperator& C() const { return C_; }
  const ToeplitzBlockOperator& LC() const { return LC_; }

  // 𝓐̃ with 𝓖 = I (vertex form, affine in ω).
  Eigen::MatrixXcd A(double omega) const { return assemble_A(omega, nullptr); }
  Eigen::MatrixXcd A(double omega, const ToeplitzBlockOperator& G) const {
    const Eigen::MatrixXcd g = detail::expand_g(G, n(), order());
    return assemble_A(omega, &g);
  }
  Eigen::MatrixXcd B(double omega) const { return assemble_B(omega, nullptr); }
  Eigen::MatrixXcd B(double omega, const ToeplitzBlockOperator& G) const {
    const Eigen::MatrixXcd g = detail::expand_g(G, n(), order());
    return assemble_B(omega, &g);
  }
  Eigen::MatrixXcd Ncal() const { return harmonic_derivative(dim(), order()).matrix(); }

  // Time-domain Ã(θ, ω) and B̃(θ, ω).
  Eigen::MatrixXcd A_time(double theta, double omega) const {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim(), dim());
    a.topLeftCorner(n(), n()) = evaluate_symbol(base_.A0().symbol(), theta) + omega * evaluate_symbol(base_.A1().symbol(), theta);
    if (qz_ > 0) {
      a.bottomLeftCorner(qz_, n()) = omega * evaluate_symbol(LC_.symbol(), theta);
      a.bottomRightCorner(qz_, qz_) = omega * evaluate_symbol(J_.symbol(), theta);
    }
    return a;
  }
  Eigen::MatrixXcd B_time(double theta, double omega) const {
    Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(dim(), m());
    b.topRows(n()) = evaluate_symbol(base_.B0().symbol(), theta) + omega * evaluate_symbol(base_.B1().symbol(), theta);
    return b;
  }

  // Every symbol entering Ã and B̃.
  std::vector<Symbol> symbols() const {
    std::vector<Symbol> out{base_.A0().symbol(), base_.A1().symbol(), base_.B0().symbol(), base_.B1().symbol()};
    if (qz_ > 0) {
      out.push_back(J_.symbol());
      out.push_back(LC_.symbol());
    }
    return out;
  }

  Eigen::VectorXcd rhs(const Eigen::VectorXcd& Xz, const Eigen::VectorXcd& U, double omega,
                       const ToeplitzBlockOperator& G) const {
    return (A(omega, G) - omega * Ncal()) * Xz + B(omega, G) * U;
  }

 private:
  Eigen::MatrixXcd assemble_A(double w, const Eigen::MatrixXcd* g) const {
    const int K = base_.harmonics(), nx = n() * K;
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim() * K, dim() * K);
    a.topLeftCorner(nx, nx) = (g ? Eigen::MatrixXcd(*g * base_.A0().matrix()) : base_.A0().matrix()) +
                              w * base_.A1().matrix();
    if (qz_ > 0) {
      a.bottomLeftCorner(qz_ * K, nx) = w * LC_.matrix();
      a.bottomRightCorner(qz_ * K, qz_ * K) = w * J_.matrix();
    }
    return a;
  }
  Eigen::MatrixXcd assemble_B(double w, const Eigen::MatrixXcd* g) const {
    const int K = base_.harmonics(), nx = n() * K;
    Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(dim() * K, m() * K);
    b.topRows(nx) = (g ? Eigen::MatrixXcd(*g * base_.B0().matrix()) : base_.B0().matrix()) + w * base_.B1().matrix();
    return b;
  }

  AfmLppSystem base_;
  int qz_ = 0;
  ToeplitzBlockOperator J_, LC_, C_;
};

inline AugmentedSystem augment_with_forwarding(const AfmLppSystem& sys, const Symbol& J, const Symbol& L, const Symbol& C) {
  return {sys, J, L, C};
}

struct ForwardingPair {
  Symbol J, L;
  int q = 0;
};

// Resonators dz_h/dθ = [[0, h], [−h, 0]] z_h + [1, 0]ᵀ e, one per harmonic h.
inline ForwardingPair oscillator_bank(const std::vector<int>& harmonics) {
  ForwardingPair out;
  if (harmonics.empty()) return out;
  std::set<int> seen;
  for (int h : harmonics) {
    if (h < 1) raise(ErrorKind::DimensionMismatch, "resonator harmonics must be ≥ 1");
    if (!seen.insert(h).second) raise(ErrorKind::DuplicateHarmonic, "harmonic " + std::to_string(h) + " repeated");
  }
  const int q = 2 * static_cast<int>(harmonics.size());
  Eigen::MatrixXcd J = Eigen::MatrixXcd::Zero(q, q), L = Eigen::MatrixXcd::Zero(q, 1);
  for (std::size_t i = 0; i < harmonics.size(); ++i) {
    const int r = 2 * static_cast<int>(i);
    J(r, r + 1) = static_cast<double>(harmonics[i]);
    J(r + 1, r) = -static_cast<double>(harmonics[i]);
    L(r, 0) = 1.0;
  }
  out.J = constant_symbol(J);
  out.L = constant_symbol(L);
  out.q = q;
  return out;
}

}  // namespace vfharm
