#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vfharm/error.hpp"
#include "vfharm/harmonic_model.hpp"
#include "vfharm/phase.hpp"
#include "vfharm/sfd.hpp"
#include "vfharm/synthesis.hpp"
#include "vfharm/toeplitz.hpp"

namespace vfharm {

struct PmsmParams {
  double r = 0.5;       // Ω
  double L = 1.5e-3;    // H
  double psi_f = 0.14;  // Wb
  double J = 0.03;      // kg·m²
  double B_f = 0.02;    // N·m·s/rad
  int p = 4;

  void validate() const {
    if (!(r > 0 && L > 0 && psi_f > 0 && J > 0 && B_f > 0) || p < 1)
      raise(ErrorKind::ConfigError, "PMSM parameters must be strictly positive");
  }
};

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat32 = Eigen::Matrix<double, 3, 2>;

inline constexpr double phase_shift = two_pi / 3.0;

inline Vec3 back_emf(int p, double theta) {
  const double e = p * theta;
  return {std::sin(e), std::sin(e - phase_shift), std::sin(e + phase_shift)};
}

struct PmsmMatrices {
  Eigen::Matrix4d A;
  Eigen::Matrix<double, 4, 3> Bu;
  Vec4 Bw;
};

inline PmsmMatrices pmsm_state_matrices(const PmsmParams& P, double theta) {
  PmsmMatrices m;
  const Vec3 phi = back_emf(P.p, theta);
  m.A.setZero();
  m.A.topLeftCorner<3, 3>() = -(P.r / P.L) * Eigen::Matrix3d::Identity();
  m.A.topRightCorner<3, 1>() = (P.p * P.psi_f / P.L) * phi;
  m.A.bottomLeftCorner<1, 3>() = -(P.p * P.psi_f / P.J) * phi.transpose();
  m.A(3, 3) = -P.B_f / P.J;
  m.Bu.setZero();
  m.Bu.topRows<3>() = Eigen::Matrix3d::Identity() / P.L;
  m.Bw.setZero();
  m.Bw(3) = -1.0 / P.J;
  return m;
}

// (2/3)-scaled Park rows at angle kθ.
inline Mat23 park_transform(int k, double theta) {
  const double a = k * theta;
  Mat23 T;
  T << std::cos(a), std::cos(a - phase_shift), std::cos(a + phase_shift), -std::sin(a), -std::sin(a - phase_shift),
      -std::sin(a + phase_shift);
  return (2.0 / 3.0) * T;
}

// Right inverse of park_transform with zero common mode.
inline Mat32 inverse_park(int k, double theta) {
  const double a = k * theta;
  Mat32 T;
  T << std::cos(a), -std::sin(a), std::cos(a - phase_shift), -std::sin(a - phase_shift), std::cos(a + phase_shift),
      -std::sin(a + phase_shift);
  return T;
}

// Symbols of A(θ), B_u, B_w.
inline Symbol pmsm_A_symbol(const PmsmParams& P) {
  Symbol A;
  const double ke = P.p * P.psi_f / P.L, km = -P.p * P.psi_f / P.J;
  for (int i = 0; i < 3; ++i) {
    add_to_symbol(A, 4, 4, i, i, cos_coeffs(0, -P.r / P.L));
    const double ph = i == 0 ? 0.0 : (i == 1 ? -phase_shift : phase_shift);
    add_to_symbol(A, 4, 4, i, 3, sin_coeffs(P.p, ke, ph));
    add_to_symbol(A, 4, 4, 3, i, sin_coeffs(P.p, km, ph));
  }
  add_to_symbol(A, 4, 4, 3, 3, cos_coeffs(0, -P.B_f / P.J));
  return A;
}

inline Symbol pmsm_Bu_symbol(const PmsmParams& P) { return constant_symbol(pmsm_state_matrices(P, 0.0).Bu); }
inline Symbol pmsm_Bw_symbol(const PmsmParams& P) { return constant_symbol(pmsm_state_matrices(P, 0.0).Bw); }

struct PmsmHarmonicModel {
  AfmLppSystem system;  // 𝓐₀ = 𝓐, 𝓐₁ = 0, 𝓑₀ = 𝓑_u, 𝓑₁ = 0
  ToeplitzBlockOperator Bw;
};

inline PmsmHarmonicModel pmsm_harmonic_operators(const PmsmParams& P, int N, double omega_min = 10.0, double omega_max = 200.0) {
  P.validate();
  if (N < P.p)
    raise(ErrorKind::TruncationTooSmall, "N = " + std::to_string(N) + " cannot house the back-EMF harmonic p = " + std::to_string(P.p));
  const Symbol zero4 = constant_symbol(Eigen::MatrixXd::Zero(4, 4)), zero43 = constant_symbol(Eigen::MatrixXd::Zero(4, 3));
  return {AfmLppSystem(pmsm_A_symbol(P), zero4, pmsm_Bu_symbol(P), zero43, N, omega_min, omega_max),
          toeplitz_from_symbol(pmsm_Bw_symbol(P), N)};
}

struct OutputConfig {
  bool mitigation = true;             // include the stacked Park rows
  std::vector<int> harmonics{0, 2, 6, 8};
  bool q_row = false;                 // append the q-axis row of T_p
};

// Control output C(θ): speed, d-axis current, then T_k on the currents for each targeted k.
inline Symbol output_symbol(const PmsmParams& P, const OutputConfig& cfg = {}) {
  std::vector<std::pair<int, int>> rows;  // (k, park row) ; k = −1 marks the speed row
  rows.push_back({-1, 0});
  rows.push_back({P.p, 0});
  if (cfg.mitigation)
    for (int k : cfg.harmonics) {
      rows.push_back({k, 0});
      rows.push_back({k, 1});
    }
  if (cfg.q_row) rows.push_back({P.p, 1});
  const int q = static_cast<int>(rows.size());
  Symbol C;
  C[0] = Eigen::MatrixXcd::Zero(q, 4);
  for (int r = 0; r < q; ++r) {
    const auto [k, row] = rows[r];
    if (k < 0) {
      C[0](r, 3) = 1.0;
      continue;
    }
    for (int j = 0; j < 3; ++j) {
      const double ph = j == 0 ? 0.0 : (j == 1 ? -phase_shift : phase_shift);
      if (row == 0)
        add_to_symbol(C, q, 4, r, j, cos_coeffs(k, 2.0 / 3.0, ph));
      else
        add_to_symbol(C, q, 4, r, j, sin_coeffs(k, -2.0 / 3.0, ph));
    }
  }
  return C;
}

inline Eigen::MatrixXd output_matrix(const Symbol& C, double theta) { return evaluate_symbol(C, theta).real(); }

struct EquilibriumResult {
  PmsmParams params;
  double omega_ref0 = 0.0;
  int K_eq = 0;
  std::map<int, cdouble> Omega;  // k ∈ [−K_eq, K_eq]
  std::map<int, cdouble> W;
  double Iq0 = 0.0;
  int iterations = 0;
  double residual = 0.0;

  double omega_ref(double theta) const {
    double w = 0.0;
    for (const auto& [k, c] : Omega) w += (c * std::polar(1.0, k * theta)).real();
    return w;
  }
  double omega_ref_dtheta(double theta) const {
    double w = 0.0;
    for (const auto& [k, c] : Omega) w += (cdouble(0, k) * c * std::polar(1.0, k * theta)).real();
    return w;
  }
  Eigen::Vector2d i_dq() const { return {0.0, Iq0}; }
  Eigen::Vector2d v_dq(double theta) const {
    const double w = omega_ref(theta);
    return {-w * params.p * params.L * Iq0, params.r * Iq0 + w * params.p * params.psi_f};
  }
  Vec3 i_abc(double theta) const { return inverse_park(params.p, theta) * i_dq(); }
  Vec3 v_abc(double theta) const { return inverse_park(params.p, theta) * v_dq(theta); }
  Vec4 x_ref(double theta) const {
    Vec4 x;
    x << i_abc(theta), omega_ref(theta);
    return x;
  }
  Vec3 u_ref(double theta) const { return v_abc(theta); }
};

inline double disturbance(const std::map<int, cdouble>& W, double theta) {
  double g = 0.0;
  for (const auto& [k, c] : W) g += (c * std::polar(1.0, k * theta)).real();
  return g;
}

// Torque-ripple phasors W₀ + W_k e^{jkθ} + conj.
inline std::map<int, cdouble> ripple(double W0, int k = 0, cdouble Wk = 0.0) {
  std::map<int, cdouble> W{{0, W0}};
  if (k != 0 && Wk != 0.0) {
    W[k] = Wk;
    W[-k] = std::conj(Wk);
  }
  return W;
}

namespace detail {

inline cdouble mech_H(const PmsmParams& P, int k, double w0) { return -1.0 / cdouble(P.B_f / P.J, k * w0); }

inline std::map<int, cdouble> rec_map(const PmsmParams& P, const std::map<int, cdouble>& Om, const std::map<int, cdouble>& W,
                                      double w0, int Keq) {
  auto at = [&](const std::map<int, cdouble>& m, int k) {
    auto it = m.find(k);
    return it == m.end() ? cdouble(0.0) : it->second;
  };
  std::map<int, cdouble> out;
  out[0] = w0;
  for (int k = 1; k <= Keq; ++k) {
    cdouble s = at(W, k) / P.J;
    for (int q = -Keq; q <= Keq; ++q) {
      if (q == k || q == 0 || std::abs(k - q) > Keq) continue;
      s += at(Om, k - q) * at(Om, q) * cdouble(0, q);
    }
    out[k] = mech_H(P, k, w0) * s;
    out[-k] = std::conj(out[k]);
  }
  return out;
}

}  // namespace detail

inline EquilibriumResult equilibrium_fixed_point(const PmsmParams& P, double omega_ref0, const std::map<int, cdouble>& W,
                                                 int K_eq = 4, double tol = 1e-10, int max_iter = 200) {
  P.validate();
  if (!(omega_ref0 > 0.0)) raise(ErrorKind::NonPositiveFrequency, "reference speed must be positive");
  auto w0it = W.find(0);
  const cdouble W0 = w0it == W.end() ? cdouble(0.0) : w0it->second;
  if (std::abs(W0.imag()) > 1e-12) raise(ErrorKind::ConfigError, "W₀ must be real");
  for (const auto& [k, c] : W) {
    auto it = W.find(-k);
    if (k != 0 && (it == W.end() || std::abs(it->second - std::conj(c)) > 1e-12 * (1.0 + std::abs(c))))
      raise(ErrorKind::ConfigError, "disturbance phasors must satisfy W_{−k} = conj(W_k)");
  }
  EquilibriumResult eq;
  eq.params = P;
  eq.omega_ref0 = omega_ref0;
  eq.K_eq = K_eq;
  eq.W = W;
  eq.Iq0 = 2.0 / (3.0 * P.p * P.psi_f) * (W0.real() + P.B_f * omega_ref0);
  std::map<int, cdouble> Om;
  for (int k = -K_eq; k <= K_eq; ++k) Om[k] = 0.0;
  Om[0] = omega_ref0;
  double prev = INFINITY;
  int growth = 0;
  for (int it = 1; it <= max_iter; ++it) {
    auto next = detail::rec_map(P, Om, W, omega_ref0, K_eq);
    double delta = 0.0;
    for (const auto& [k, c] : next) delta = std::max(delta, std::abs(c - Om[k]));
    Om = std::move(next);
    eq.iterations = it;
    if (!std::isfinite(delta)) raise(ErrorKind::FixedPointDiverged, "non-finite harmonic iterate");
    if (delta < tol) break;
    growth = delta > prev ? growth + 1 : 0;
    if (growth >= 5) raise(ErrorKind::FixedPointDiverged, "update grew for 5 consecutive iterations");
    prev = delta;
    if (it == max_iter) raise(ErrorKind::FixedPointDiverged, "no convergence in " + std::to_string(max_iter) + " iterations");
  }
  eq.Omega = Om;
  const auto check = detail::rec_map(P, Om, W, omega_ref0, K_eq);
  for (const auto& [k, c] : check) eq.residual = std::max(eq.residual, std::abs(c - Om[k]));
  return eq;
}

// Harmonic residual of 0 = (𝓐 − 𝓣(ω_ref)𝓝)X + 𝓑_u U + 𝓑_w W on harmonics |k| ≤ k_max (default K_eq).
inline double equilibrium_residual(const EquilibriumResult& eq, int k_max = -1, int N = 24) {
  if (k_max < 0) k_max = eq.K_eq;
  if (k_max > N / 2) raise(ErrorKind::BandExceedsTruncation, "residual window too wide for the evaluation order");
  const auto& P = eq.params;
  const int S = 8 * N;
  const int K = 2 * N + 1;
  Eigen::MatrixXcd X = Eigen::MatrixXcd::Zero(4, K), U = Eigen::MatrixXcd::Zero(3, K);
  for (int s = 0; s < S; ++s) {
    const double th = two_pi * s / S;
    const Vec4 x = eq.x_ref(th);
    const Vec3 u = eq.u_ref(th);
    for (int k = -N; k <= N; ++k) {
      const cdouble e = std::polar(1.0 / S, -k * th);
      X.col(k + N) += x.cast<cdouble>() * e;
      U.col(k + N) += u.cast<cdouble>() * e;
    }
  }
  auto stack = [&](const Eigen::MatrixXcd& M) {
    Eigen::VectorXcd v(M.size());
    for (int i = 0; i < M.rows(); ++i) v.segment(i * K, K) = M.row(i).transpose();
    return v;
  };
  Symbol wsym;
  for (const auto& [k, c] : eq.Omega) wsym[k] = Eigen::MatrixXcd::Constant(1, 1, c);
  Symbol dist;
  for (const auto& [k, c] : eq.W) dist[k] = Eigen::MatrixXcd::Constant(1, 1, c);
  Eigen::VectorXcd Wv = Eigen::VectorXcd::Zero(K);
  for (const auto& [k, c] : eq.W)
    if (std::abs(k) <= N) Wv(k + N) = c;
  const auto A = toeplitz_from_symbol(pmsm_A_symbol(P), N).matrix();
  const Eigen::MatrixXcd Tw = kron_identity(4, realize_symbol(wsym, 1, 1, N));
  const Eigen::MatrixXcd Bu = toeplitz_from_symbol(pmsm_Bu_symbol(P), N).matrix();
  const Eigen::MatrixXcd Bw = toeplitz_from_symbol(pmsm_Bw_symbol(P), N).matrix();
  const Eigen::VectorXcd r =
      (A - Tw * harmonic_derivative(4, N).matrix()) * stack(X) + Bu * stack(U) + Bw * Wv;
  double worst = 0.0;
  for (int row : central_rows(4, N, N - k_max)) worst = std::max(worst, std::abs(r(row)));
  return worst;
}

// δ²/S₄₄,₀ with δ the distance from the reference to the nearest interval edge.
inline double lyapunov_level_max(const Symbol& S, double omega_ref0, double omega_min, double omega_max, int index = 3) {
  const double s44 = S.at(0)(index, index).real();
  if (!(s44 > 0.0)) raise(ErrorKind::NonPositiveS44, "zero-order S44 coefficient " + std::to_string(s44));
  const double d = std::min(std::abs(omega_min - omega_ref0), std::abs(omega_max - omega_ref0));
  return d * d / s44;
}

// u = u_ref(θ) − K(θ)[x − x_ref(θ); z],  ż = ω_m C(θ)(x − x_ref(θ)).
struct PmsmController {
  PeriodicGain K;  // 3 × (4 + q)
  Symbol C;        // q × 4
  int q() const { return C.empty() ? 0 : static_cast<int>(C.begin()->second.rows()); }
};

struct ReferenceStep {
  double t = 0.0;
  double omega_ref0 = 100.0;
};

struct PmsmScenario {
  double t_end = 1.0;
  double dt = 2e-5;
  int record_every = 1;
  std::vector<ReferenceStep> schedule{{0.0, 100.0}};
  std::map<int, cdouble> W{{0, 1.0}};        // applied load torque phasors
  std::map<int, cdouble> W_known{{0, 1.0}};  // phasors the feedforward is built from
  int K_eq = 4;
  double theta0 = 0.0;
  Vec4 dx0 = Vec4::Zero();  // initial offset from x_ref(θ₀)
  Eigen::VectorXd z0;       // empty = zeros
  bool controlled = true;
};

struct ClosedLoopTrace {
  std::vector<double> t, theta, omega_ref0;
  Eigen::MatrixXd x, x_ref, u, z;  // columns are samples
  std::vector<double> load;
  std::vector<EquilibriumResult> equilibria;  // one per schedule step

  std::size_t size() const { return t.size(); }
  Eigen::Vector2d i_dq(std::size_t i, int p) const { return park_transform(p, theta[i]) * x.col(i).head<3>(); }
};

inline Eigen::VectorXd pmsm_closed_loop_rhs(const PmsmParams& P, const PmsmController& ctl, const EquilibriumResult& eq,
                                            const std::map<int, cdouble>& W, bool controlled, const Eigen::VectorXd& s,
                                            Vec3* u_out = nullptr) {
  // s = [x (4), θ, z (q)]
  const int q = ctl.q();
  const double th = s(4);
  const Vec4 x = s.head<4>();
  const Vec4 e = x - eq.x_ref(th);
  Vec3 u = eq.u_ref(th);
  Eigen::VectorXd ds(s.size());
  if (controlled) {
    Eigen::VectorXd ez(4 + q);
    ez << e, s.tail(q);
    u -= ctl.K.evaluate(th) * ez;
    ds.tail(q) = x(3) * (output_matrix(ctl.C, th) * e);
  } else {
    ds.tail(q).setZero();
  }
  const auto M = pmsm_state_matrices(P, th);
  ds.head<4>() = M.A * x + M.Bu * u + M.Bw * disturbance(W, th);
  ds(4) = x(3);
  if (u_out) *u_out = u;
  return ds;
}

inline ClosedLoopTrace simulate_closed_loop(const PmsmParams& P, const PmsmController& ctl, const PmsmScenario& sc) {
  P.validate();
  if (sc.schedule.empty()) raise(ErrorKind::ConfigError, "empty reference schedule");
  const int q = ctl.q();
  if (sc.controlled && (ctl.K.rows != 3 || ctl.K.cols != 4 + q))
    raise(ErrorKind::DimensionMismatch, "gain must be 3 × (4 + q)");
  ClosedLoopTrace tr;
  for (const auto& st : sc.schedule) tr.equilibria.push_back(equilibrium_fixed_point(P, st.omega_ref0, sc.W_known, sc.K_eq));
  std::size_t step_idx = 0;
  Eigen::VectorXd s(5 + q);
  s.head<4>() = tr.equilibria[0].x_ref(sc.theta0) + sc.dx0;
  s(4) = sc.theta0;
  s.tail(q) = sc.z0.size() == q ? sc.z0 : Eigen::VectorXd::Zero(q);

  const long steps = std::lround(sc.t_end / sc.dt);
  const long nrec = steps / sc.record_every + 1;
  tr.x.resize(4, nrec);
  tr.x_ref.resize(4, nrec);
  tr.u.resize(3, nrec);
  tr.z.resize(q, nrec);
  long col = 0;
  auto record = [&](double t, const Eigen::VectorXd& st, const EquilibriumResult& eq) {
    Vec3 u;
    (void)pmsm_closed_loop_rhs(P, ctl, eq, sc.W, sc.controlled, st, &u);
    tr.t.push_back(t);
    tr.theta.push_back(st(4));
    tr.omega_ref0.push_back(eq.omega_ref0);
    tr.x.col(col) = st.head<4>();
    tr.x_ref.col(col) = eq.x_ref(st(4));
    tr.u.col(col) = u;
    tr.z.col(col) = st.tail(q);
    tr.load.push_back(disturbance(sc.W, st(4)));
    ++col;
  };
  for (long i = 0; i <= steps; ++i) {
    const double t = i * sc.dt;
    while (step_idx + 1 < sc.schedule.size() && t >= sc.schedule[step_idx + 1].t - 1e-12) ++step_idx;
    const auto& eq = tr.equilibria[step_idx];
    if (i % sc.record_every == 0 && col < nrec) record(t, s, eq);
    if (i == steps) break;
    auto f = [&](const Eigen::VectorXd& v) { return pmsm_closed_loop_rhs(P, ctl, eq, sc.W, sc.controlled, v); };
    const Eigen::VectorXd k1 = f(s);
    const Eigen::VectorXd k2 = f(s + 0.5 * sc.dt * k1);
    const Eigen::VectorXd k3 = f(s + 0.5 * sc.dt * k2);
    const Eigen::VectorXd k4 = f(s + sc.dt * k3);
    s += sc.dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!s.allFinite() || s.head<4>().norm() > 1e6 || (q > 0 && s.tail(q).norm() > 1e6))
      raise(ErrorKind::IntegrationBlewUp, "state norm exceeded 1e6 at t = " + std::to_string(t + sc.dt));
  }
  tr.x.conservativeResize(4, col);
  tr.x_ref.conservativeResize(4, col);
  tr.u.conservativeResize(3, col);
  tr.z.conservativeResize(q, col);
  return tr;
}

struct Spectra {
  std::vector<double> t;
  std::vector<std::string> names;           // i_a, i_d, omega_m, load, v_a
  std::vector<Eigen::MatrixXd> magnitude;   // per signal: samples × (k_max + 1)
  const Eigen::MatrixXd& operator[](const std::string& n) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == n) return magnitude[i];
    raise(ErrorKind::ConfigError, "no spectrum named " + n);
  }
};

// |X_k| of i_a, i_d, ω_m, Γ, v_a over the trailing pseudo-period, evaluated every `every` samples.
inline Spectra harmonic_spectrum(const ClosedLoopTrace& tr, int p, int k_max, std::size_t every = 100) {
  if (tr.size() < 2 || tr.theta.back() - tr.theta.front() < two_pi)
    raise(ErrorKind::WindowUnavailable, "trace shorter than one pseudo-period");
  Eigen::MatrixXd sig(5, tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i)
    sig.col(i) << tr.x(0, i), tr.i_dq(i, p)(0), tr.x(3, i), tr.load[i], tr.u(0, i);
  Spectra out;
  out.names = {"i_a", "i_d", "omega_m", "load", "v_a"};
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < tr.size(); j += std::max<std::size_t>(1, every))
    if (tr.theta[j] - tr.theta.front() >= two_pi) idx.push_back(j);
  if (idx.empty() || idx.back() != tr.size() - 1) idx.push_back(tr.size() - 1);
  out.magnitude.assign(5, Eigen::MatrixXd(idx.size(), k_max + 1));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.t.push_back(tr.t[idx[r]]);
    const auto X = sfd_sampled(tr.theta, sig, idx[r], k_max);
    for (int s = 0; s < 5; ++s)
      for (int k = 0; k <= k_max; ++k) out.magnitude[s](r, k) = std::abs(X(k)(s));
  }
  return out;
}

// V(Ẽ) = Ẽᴴ𝓟Ẽ with Ẽ the phasors of [x − x_ref; z] over the trailing pseudo-period.
struct LyapunovTrace {
  std::vector<double> t, V, L_max;
};

inline LyapunovTrace lyapunov_trace(const ClosedLoopTrace& tr, const Eigen::MatrixXcd& P, int N, const Symbol& S,
                                    double omega_min, double omega_max, std::size_t every = 10) {
  const int dim = static_cast<int>(tr.x.rows() + tr.z.rows());
  const int K = 2 * N + 1;
  if (P.rows() != dim * K) raise(ErrorKind::DimensionMismatch, "Lyapunov operator size");
  Eigen::MatrixXd sig(dim, tr.size());
  sig.topRows(4) = tr.x - tr.x_ref;
  sig.bottomRows(tr.z.rows()) = tr.z;
  LyapunovTrace out;
  for (std::size_t j = 0; j < tr.size(); j += std::max<std::size_t>(1, every)) {
    if (tr.theta[j] - tr.theta.front() < two_pi) continue;
    const Eigen::VectorXcd E = sfd_sampled(tr.theta, sig, j, N).stacked();
    out.t.push_back(tr.t[j]);
    out.V.push_back((E.adjoint() * P * E)(0).real());
    out.L_max.push_back(lyapunov_level_max(S, tr.omega_ref0[j], omega_min, omega_max));
  }
  if (out.t.empty()) raise(ErrorKind::WindowUnavailable, "no full window in the trace");
  return out;
}

// 𝓟 = 𝓢⁻¹ at order N.
inline Eigen::MatrixXcd lyapunov_matrix(const Symbol& S, int N) {
  const auto S_op = toeplitz_from_symbol(S, N);
  const auto dim = S_op.matrix().rows();
  return S_op.matrix().ldlt().solve(Eigen::MatrixXcd::Identity(dim, dim));
}

// Constant offset along `dir` whose phasor (only the k = 0 entry) sits at V = level.
inline Eigen::VectorXd offset_at_level(const Eigen::MatrixXcd& P, int N, const Eigen::VectorXd& dir, double level) {
  const int dim = static_cast<int>(dir.size()), K = 2 * N + 1;
  if (P.rows() != dim * K) raise(ErrorKind::DimensionMismatch, "Lyapunov operator size");
  Eigen::MatrixXd P00(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) P00(i, j) = P(i * K + N, j * K + N).real();
  const double v = dir.dot(P00 * dir);
  if (!(v > 0.0)) raise(ErrorKind::PosdefCheckFailed, "zero-order block of the Lyapunov operator");
  return std::sqrt(level / v) * dir;
}

struct PmsmDesignOptions {
  int N = 8;
  OutputConfig output;
  double q_weight = 1.0;    // Q = q_weight·I
  double r_weight = 100.0;  // R = r_weight·I
  double omega_min = 10.0, omega_max = 200.0;
  int gain_band = 16;       // Fourier band kept in the simulated K(θ)
  SynthesisOptions synthesis = [] {
    SynthesisOptions o;
    o.band = 8;
    return o;
  }();
};

struct PmsmDesign {
  SynthesisResult synthesis;
  PmsmController controller;
  AugmentedSystem augmented;
};

inline AugmentedSystem pmsm_augmented_system(const PmsmParams& P, int N, const Symbol& C, double omega_min, double omega_max) {
  const auto hm = pmsm_harmonic_operators(P, N, omega_min, omega_max);
  const int q = symbol_shape(C).first;
  return augment_with_forwarding(hm.system, constant_symbol(Eigen::MatrixXd::Zero(q, q)),
                                 constant_symbol(Eigen::MatrixXd::Identity(q, q)), C);
}

// Forwarding-augmented synthesis; the simulated gain is Y(θ)S(θ)⁻¹ rather than the truncated 𝓨𝓢⁻¹.
inline PmsmDesign design_pmsm_controller(const PmsmParams& P, const PmsmDesignOptions& opt = {}) {
  const Symbol C = output_symbol(P, opt.output);
  const int q = symbol_shape(C).first;
  auto aug = pmsm_augmented_system(P, opt.N, C, opt.omega_min, opt.omega_max);
  const Symbol Q = constant_symbol(opt.q_weight * Eigen::MatrixXd::Identity(4 + q, 4 + q));
  const Symbol R = constant_symbol(opt.r_weight * Eigen::MatrixXd::Identity(3, 3));
  PmsmDesign d{synthesize_state_feedback(aug, Q, R, opt.synthesis), {}, std::move(aug)};
  d.controller.K = pointwise_gain(d.synthesis.S_symbol, d.synthesis.Y_symbol, opt.gain_band);
  d.controller.C = C;
  return d;
}

struct MitigationSummary {
  double t = 0.0;                       // end of the analysis window
  std::map<int, double> harmonic_ratio;  // |I_{a,k}| / |I_{a,p}|
  double worst_ratio = 0.0;
  double id0_ratio = 0.0;               // |I_{d,0}| / |I_{q,0}|
  double speed_error = 0.0;             // max |ω_m − ω_m^ref| / ω_ref0 over the window
};

// Harmonic content of the last pseudo-period of the trace.
inline MitigationSummary mitigation_summary(const ClosedLoopTrace& tr, int p, const std::vector<int>& harmonics) {
  if (tr.size() < 2) raise(ErrorKind::WindowUnavailable, "empty trace");
  const std::size_t j = tr.size() - 1;
  const int kmax = std::max(p, *std::max_element(harmonics.begin(), harmonics.end()));
  Eigen::MatrixXd sig(3, tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) sig.col(i) << tr.x(0, i), tr.i_dq(i, p);
  const auto X = sfd_sampled(tr.theta, sig, j, kmax);
  MitigationSummary s;
  s.t = tr.t[j];
  const double fund = std::abs(X(p)(0));
  for (int k : harmonics) {
    const double r = std::abs(X(k)(0)) / fund;
    s.harmonic_ratio[k] = r;
    s.worst_ratio = std::max(s.worst_ratio, r);
  }
  s.id0_ratio = std::abs(X(0)(1)) / std::abs(X(0)(2));
  const double lo = tr.theta[j] - two_pi;
  for (std::size_t i = j + 1; i-- > 0 && tr.theta[i] >= lo;)
    s.speed_error = std::max(s.speed_error, std::abs(tr.x(3, i) - tr.x_ref(3, i)) / tr.omega_ref0[i]);
  return s;
}

// Floquet exponents of ẋ = A(ωt)x from the monodromy over 2π/ω, folded into Im ∈ (−ω/2, ω/2].
inline Eigen::VectorXcd floquet_exponents(const PmsmParams& P, double omega, int steps = 20000) {
  const double T = two_pi / omega, h = T / steps;
  Eigen::Matrix4d Phi = Eigen::Matrix4d::Identity();
  auto A = [&](double t) { return pmsm_state_matrices(P, omega * t).A; };
  for (int i = 0; i < steps; ++i) {
    const double t = i * h;
    const Eigen::Matrix4d k1 = A(t) * Phi;
    const Eigen::Matrix4d k2 = A(t + 0.5 * h) * (Phi + 0.5 * h * k1);
    const Eigen::Matrix4d k3 = A(t + 0.5 * h) * (Phi + 0.5 * h * k2);
    const Eigen::Matrix4d k4 = A(t + h) * (Phi + h * k3);
    Phi += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  const Eigen::VectorXcd mu = Eigen::EigenSolver<Eigen::Matrix4d>(Phi).eigenvalues();
  Eigen::VectorXcd lam(4);
  for (int i = 0; i < 4; ++i) lam(i) = std::log(mu(i)) / T;
  return lam;
}

// Largest distance from a Floquet exponent to the nearest eigenvalue of (𝓐 − ω𝓝), both folded mod jω.
inline double floquet_mismatch(const PmsmParams& P, double omega, int N, int steps = 20000) {
  const auto model = pmsm_harmonic_operators(P, N, 0.5 * omega, 2.0 * omega);
  const Eigen::MatrixXcd H = model.system.A0().matrix() - omega * harmonic_derivative(4, N).matrix();
  const Eigen::VectorXcd ev = Eigen::ComplexEigenSolver<Eigen::MatrixXcd>(H).eigenvalues();
  const Eigen::VectorXcd fl = floquet_exponents(P, omega, steps);
  auto fold = [&](cdouble z) {
    double im = std::remainder(z.imag(), omega);
    return cdouble(z.real(), im);
  };
  double worst = 0.0;
  for (int i = 0; i < fl.size(); ++i) {
    double best = INFINITY;
    for (int j = 0; j < ev.size(); ++j) {
      const cdouble a = fold(fl(i)), b = fold(ev(j));
      const double dim = std::abs(std::remainder(a.imag() - b.imag(), omega));
      best = std::min(best, std::hypot(a.real() - b.real(), dim));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace vfharm
