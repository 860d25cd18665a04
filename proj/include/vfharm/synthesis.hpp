#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vfharm/error.hpp"
#include "vfharm/harmonic_model.hpp"
#include "vfharm/sdp.hpp"
#include "vfharm/toeplitz.hpp"

namespace vfharm {

namespace detail {
// Controller design only needs a feasible y near the optimum.
inline SdpOptions design_sdp_options() {
  SdpOptions o;
  o.stop_at_reduced = true;
  return o;
}
}  // namespace detail

// How products of known symbols with decision variables enter the LMIs.
//   truncated:     𝓣_N(a)𝓣_N(V), the plain harmonic-model product
//   oversampled:   exact sections of 𝓣(a·V) on each coset
//   phase_sampled: the phase-domain inequality at uniformly spaced θ (what 𝓣(·) ≺ 0 reduces to for N → ∞)
enum class LmiForm { truncated, oversampled, phase_sampled };

// gcd of every harmonic carried by the symbols; 2N+1 when all are constant (cosets of one index).
inline int harmonic_stride(const std::vector<Symbol>& syms, int N) {
  int g = 0;
  for (const auto& s : syms)
    for (const auto& [h, c] : s)
      if (h != 0 && c.size() && c.cwiseAbs().maxCoeff() > 0.0) g = std::gcd(g, std::abs(h));
  return g == 0 ? 2 * N + 1 : std::min(g, 2 * N + 1);
}

inline Eigen::MatrixXd complex_to_real_embedding(const Eigen::MatrixXcd& H, double tol = 1e-12) {
  if (H.rows() != H.cols() ||
      (H - H.adjoint()).cwiseAbs().maxCoeff() > tol * std::max(1.0, H.cwiseAbs().maxCoeff()))
    raise(ErrorKind::NotHermitian, "embedding needs a Hermitian matrix");
  const auto n = H.rows();
  Eigen::MatrixXd E(2 * n, 2 * n);
  E << H.real(), -H.imag(), H.imag(), H.real();
  return E;
}

inline double max_eigenvalue(const Eigen::MatrixXcd& H) {
  const Eigen::MatrixXcd h = 0.5 * (H + H.adjoint());
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(h, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}
inline double min_eigenvalue(const Eigen::MatrixXcd& H) {
  const Eigen::MatrixXcd h = 0.5 * (H + H.adjoint());
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(h, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

namespace detail {

inline Eigen::MatrixXcd psd_sqrt(const Eigen::MatrixXcd& A, const std::string& what) {
  const Eigen::MatrixXcd h = 0.5 * (A + A.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  if (es.eigenvalues().minCoeff() <= 0.0) raise(ErrorKind::PosdefCheckFailed, what + " weight is not positive definite");
  return es.operatorSqrt();
}

inline Eigen::MatrixXcd coset_derivative(const Coset& c, int n) {
  Eigen::VectorXcd d(n * c.size());
  const auto idx = c.indices();
  for (int i = 0; i < n; ++i)
    for (std::size_t k = 0; k < idx.size(); ++k) d(i * idx.size() + k) = cdouble(0.0, idx[k]);
  return d.asDiagonal();
}

inline int snap_band(int band, int stride, int N) {
  if (band < 0 || band > 2 * N) band = 2 * N;
  return band - band % stride;
}

// Positions of the coset rows inside the realization on the coset widened by e.
inline std::vector<int> rows_within(int n, const Coset& c, int e) {
  const auto inner = c.indices(), outer = c.extended(e).indices();
  const int Ko = static_cast<int>(outer.size());
  std::vector<int> rows;
  for (int i = 0; i < n; ++i)
    for (int k : inner) rows.push_back(i * Ko + static_cast<int>(std::find(outer.begin(), outer.end(), k) - outer.begin()));
  return rows;
}

inline Eigen::MatrixXcd take_rows(const Eigen::MatrixXcd& M, const std::vector<int>& rows) {
  Eigen::MatrixXcd out(rows.size(), M.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = M.row(rows[i]);
  return out;
}

// 𝓣(a) − ω𝓝 with rows in the coset and columns in the coset widened by e; e = 0 gives the square truncation.
inline Eigen::MatrixXcd section(const Symbol& a, int n, int m, const Coset& c, int e, double omega = 0.0) {
  const Coset ce = c.extended(e);
  Eigen::MatrixXcd full = realize_on_coset(a, n, m, ce);
  if (omega != 0.0) full -= omega * coset_derivative(ce, n);
  return e == 0 ? full : take_rows(full, rows_within(n, c, e));
}

// Place src·scale at block offset (r0, c0) of a rows×cols symbol.
inline void embed_symbol(Symbol& dst, int rows, int cols, const Symbol& src, int r0, int c0, cdouble scale = 1.0) {
  for (const auto& [h, c] : src) {
    auto& d = dst[h];
    if (d.size() == 0) d = Eigen::MatrixXcd::Zero(rows, cols);
    d.block(r0, c0, c.rows(), c.cols()) += scale * c;
  }
  if (dst.empty()) dst[0] = Eigen::MatrixXcd::Zero(rows, cols);
}

}  // namespace detail

// Symbols of Ã(θ, ω) and B̃(θ, ω) at a frozen ω.
inline std::pair<Symbol, Symbol> augmented_symbols(const AugmentedSystem& aug, double omega) {
  const int n = aug.n(), d = aug.dim(), m = aug.m();
  const auto& b = aug.base();
  Symbol A, B;
  detail::embed_symbol(A, d, d, b.A0().symbol(), 0, 0);
  detail::embed_symbol(A, d, d, b.A1().symbol(), 0, 0, omega);
  if (aug.q() > 0) {
    detail::embed_symbol(A, d, d, aug.LC().symbol(), n, 0, omega);
    detail::embed_symbol(A, d, d, aug.J().symbol(), n, n, omega);
  }
  detail::embed_symbol(B, d, m, b.B0().symbol(), 0, 0);
  detail::embed_symbol(B, d, m, b.B1().symbol(), 0, 0, omega);
  return {A, B};
}

namespace detail {

inline int product_extension(LmiForm form, std::initializer_list<int> bands) {
  return form == LmiForm::oversampled ? std::max(bands) : 0;
}

// Uniform phases over one period 2π/stride of stride-periodic symbols; 0 = enough for the product band.
inline std::vector<double> phase_samples(int requested, int product_band, int stride) {
  const int M = requested > 0 ? requested : 4 * ((product_band + stride - 1) / stride) + 8;
  std::vector<double> th(M);
  for (int i = 0; i < M; ++i) th[i] = 2.0 * M_PI * i / (double(stride) * M);
  return th;
}

}  // namespace detail

// Symbol of dS/dθ.
inline Symbol symbol_derivative(const Symbol& s) {
  Symbol out;
  for (const auto& [h, c] : s) out[h] = cdouble(0.0, h) * c;
  return out;
}

struct LyapunovOptions {
  double gamma = 1e-6;
  double kappa = 1e4;  // P ≼ κ·I caps the condition number
  int band = -1;       // decision band, −1 = 2N
  int stride = 0;      // 0 = from the symbols
  LmiForm form = LmiForm::phase_sampled;
  int phase_samples = 0;
  SdpOptions sdp = detail::design_sdp_options();
  std::string backend;
};

struct LyapunovCertificate {
  Symbol P_symbol;
  ToeplitzBlockOperator P;
  double t_star = 0.0;                    // min over P of the largest vertex Lyapunov eigenvalue (P ≽ I)
  double scale = 1.0;                     // P = scale · P_solver
  std::vector<double> omegas, vertex_max_eig;
  SdpSolution solution;
};

namespace detail {

// min t  s.t.  tI − (P V_i + V_iᴴ P) ≽ 0 at each vertex V_i = 𝓣(a_i) − ω_i𝓝, I ≼ P ≼ κI.
inline LyapunovCertificate lyapunov_vertices(const std::vector<Symbol>& a, const std::vector<double>& omegas, int n, int N,
                                             int stride, const LyapunovOptions& opt) {
  const int band = snap_band(opt.band, stride, N);
  SdpProblem p;
  const int P = p.add_variable({"P", n, n, band, stride, true});
  const int t = p.add_scalar("t");
  std::vector<int> vertex_of_block;
  if (opt.form == LmiForm::phase_sampled) {
    int ab = 0;
    for (const auto& s : a) ab = std::max(ab, symbol_band(s));
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(n, n);
    for (double th : phase_samples(opt.phase_samples, band + ab, stride)) {
      for (std::size_t v = 0; v < a.size(); ++v) {
        // tI − (P A + Aᴴ P + ωP′)
        const Eigen::MatrixXcd At = sample_symbol(a[v], th);
        LmiBlock b{"lyapunov", {}, Eigen::MatrixXcd::Zero(n, n), {}, {{t, I}}};
        b.terms.push_back({P, -I, At.adjoint(), false, 0, th});
        b.terms.push_back({P, -0.5 * omegas[v] * I, I, false, 0, th, 1});
        p.add_block(std::move(b));
        vertex_of_block.push_back(static_cast<int>(v));
      }
      p.add_block({"lower", {}, -I, {{P, I, {}, true, 0, th}}, {}});
      p.add_block({"upper", {}, opt.kappa * I, {{P, -0.5 * I, I, false, 0, th}}, {}});
      vertex_of_block.push_back(-1);
      vertex_of_block.push_back(-1);
    }
  }
  for (const auto& c : opt.form == LmiForm::phase_sampled ? std::vector<Coset>{} : cosets(N, stride)) {
    const int s = n * c.size();
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(s, s);
    for (std::size_t v = 0; v < a.size(); ++v) {
      const int e = product_extension(opt.form, {symbol_band(a[v])});
      const Symbol eye = constant_symbol(Eigen::MatrixXd::Identity(n, n));
      // P·V section: selector · P_ext · (𝓣(a) − ω𝓝)[ext rows, coset cols]
      const Eigen::MatrixXcd sel = section(eye, n, n, c, e);
      const Eigen::MatrixXcd Vt = section(symbol_adjoint(a[v]), n, n, c, e, -omegas[v]);
      p.add_block({"lyapunov", c, Eigen::MatrixXcd::Zero(s, s), {{P, sel, -Vt, false, e}}, {{t, I}}});
      vertex_of_block.push_back(static_cast<int>(v));
    }
    p.add_block({"lower", c, -I, {{P, I, {}, true}}, {}});
    p.add_block({"upper", c, opt.kappa * I, {{P, -0.5 * I, I, false}}, {}});
    vertex_of_block.push_back(-1);
    vertex_of_block.push_back(-1);
  }
  p.add_objective_scalar(t, 1.0);
  auto engine = make_sdp_engine(opt.backend);
  LyapunovCertificate out;
  out.solution = solve_sdp(p, opt.sdp, engine.get());
  if (out.solution.status == SdpStatus::infeasible) raise(ErrorKind::SolverFailure, "Lyapunov bounds reported infeasible");
  if (out.solution.status != SdpStatus::optimal)
    raise(ErrorKind::SolverFailure, "Lyapunov SDP ended with " + to_string(out.solution.status) + " " + out.solution.message);
  out.t_star = out.solution.y(p.scalar_offset() + t);
  out.omegas = omegas;
  out.P_symbol = p.symbol(P, out.solution.y);
  out.vertex_max_eig.assign(a.size(), -INFINITY);
  for (std::size_t b = 0; b < p.blocks().size(); ++b) {
    const int v = vertex_of_block[b];
    if (v < 0) continue;
    const double lam = out.t_star - min_eigenvalue(p.block_value(static_cast<int>(b), out.solution.y));
    out.vertex_max_eig[v] = std::max(out.vertex_max_eig[v], lam);
  }
  const double worst = *std::max_element(out.vertex_max_eig.begin(), out.vertex_max_eig.end());
  if (!(worst < 0.0))
    raise(ErrorKind::Infeasible, "no Toeplitz Lyapunov operator found: best vertex eigenvalue " + std::to_string(worst) +
                                     " (t* = " + std::to_string(out.t_star) + ")");
  // rescale so that P ≽ γI and the vertex forms sit below −γI
  out.scale = std::max({1.0, opt.gamma, opt.gamma / -worst});
  for (auto& [h, c] : out.P_symbol) c *= out.scale;
  for (auto& e : out.vertex_max_eig) e *= out.scale;
  out.P = toeplitz_from_symbol(out.P_symbol, N);
  return out;
}

}  // namespace detail

// Theorem-7 style certificate: 𝓟(𝓐₀ + ω_i(𝓐₁ − 𝓝)) + (·)* ≺ 0 at both vertices.
inline LyapunovCertificate vertex_lyapunov_feasibility(const Symbol& A0, const Symbol& A1, double omega_min, double omega_max,
                                                       int N, const LyapunovOptions& opt = {}) {
  if (!(omega_min > 0.0) || !(omega_min < omega_max))
    raise(ErrorKind::NonPositiveFrequency, "frequency interval must satisfy 0 < ω_min < ω_max");
  const auto [n, n2] = symbol_shape(A0);
  if (n != n2 || symbol_shape(A1) != std::pair{n, n}) raise(ErrorKind::DimensionMismatch, "A0 and A1 must be n×n");
  std::vector<Symbol> a;
  for (double w : {omega_min, omega_max}) a.push_back(symbol_sum(A0, A1, w));
  const int stride = opt.stride > 0 ? opt.stride : harmonic_stride({A0, A1}, N);
  return detail::lyapunov_vertices(a, {omega_min, omega_max}, n, N, stride, opt);
}

struct SynthesisOptions {
  double gamma = -1.0;  // strictness margin; negative = 1e-6 × largest vertex entry
  int band = -1;        // decision-variable band, −1 = 2N
  int stride = 0;
  LmiForm form = LmiForm::phase_sampled;
  int phase_samples = 0;
  SdpOptions sdp = detail::design_sdp_options();
  std::string backend;
};

struct SynthesisResult {
  Symbol S_symbol, Y_symbol, M_symbol;
  ToeplitzBlockOperator S, Y, M, K;  // K = Y S⁻¹ (truncated, not Toeplitz)
  double cost = 0.0;                 // Tr₀(M)
  double gamma = 0.0;
  double min_eig_S = 0.0;
  int band = 0, stride = 1;
  std::vector<double> omegas, vertex_max_eig;  // largest eigenvalue of the op2 block per vertex
  SdpSolution solution;
};

// Guaranteed-cost state feedback U = −𝓚Ẽ: min Tr₀(𝓜) over the vertex blocks and the [[𝓜, I], [I, 𝓢]] coupling.
inline SynthesisResult synthesize_state_feedback(const AugmentedSystem& aug, const Symbol& Q, const Symbol& R,
                                                 const SynthesisOptions& opt = {}) {
  const int N = aug.order(), n = aug.dim(), m = aug.m();
  const double wlo = aug.base().omega_min(), whi = aug.base().omega_max();
  if (symbol_shape(Q) != std::pair{n, n} || symbol_shape(R) != std::pair{m, m})
    raise(ErrorKind::DimensionMismatch, "weights must be dim×dim and m×m");
  if (!symbol_is_hermitian(Q) || !symbol_is_hermitian(R)) raise(ErrorKind::NotHermitian, "weights must be Hermitian");

  auto syms = aug.symbols();
  syms.push_back(Q);
  syms.push_back(R);
  SynthesisResult res;
  res.stride = opt.stride > 0 ? opt.stride : harmonic_stride(syms, N);
  res.band = detail::snap_band(opt.band, res.stride, N);
  res.omegas = {wlo, whi};
  std::vector<Symbol> As, Bs;
  double scale = 0.0;
  for (double w : res.omegas) {
    auto [a, b] = augmented_symbols(aug, w);
    As.push_back(a);
    Bs.push_back(b);
    scale = std::max({scale, aug.A(w).cwiseAbs().maxCoeff(), aug.B(w).cwiseAbs().maxCoeff(), w * N});
  }
  const double g = opt.gamma >= 0.0 ? opt.gamma : 1e-6 * std::max(1.0, scale);
  res.gamma = g;

  SdpProblem p;
  const int S = p.add_variable({"S", n, n, res.band, res.stride, true});
  const int Y = p.add_variable({"Y", m, n, res.band, res.stride, false});
  const int M = p.add_variable({"M", n, n, res.band, res.stride, true});
  std::vector<int> vertex_of_block;
  // op2 block [[ωS′ − ÃS − SÃᴴ + B̃Y + YᴴB̃ᴴ, ·, ·], [−R½Y, I, 0], [−Q½S, 0, I]] − γ ≽ 0 and [[M, I], [I, S]] − γ ≽ 0
  auto coupling = [&](int nx, const Coset& c, std::optional<double> th) {
    const Eigen::MatrixXcd Ix = Eigen::MatrixXcd::Identity(nx, nx);
    LmiBlock cpl;
    cpl.label = "coupling";
    cpl.coset = c;
    cpl.F0 = Eigen::MatrixXcd::Zero(2 * nx, 2 * nx);
    cpl.F0.diagonal().setConstant(-g);
    cpl.F0.topRightCorner(nx, nx) = Ix;
    cpl.F0.bottomLeftCorner(nx, nx) = Ix;
    Eigen::MatrixXcd top = Eigen::MatrixXcd::Zero(2 * nx, nx), bot = Eigen::MatrixXcd::Zero(2 * nx, nx);
    top.topRows(nx) = Ix;
    bot.bottomRows(nx) = Ix;
    cpl.terms.push_back({M, top, {}, true, 0, th});
    cpl.terms.push_back({S, bot, {}, true, 0, th});
    p.add_block(std::move(cpl));
    vertex_of_block.push_back(-1);
  };
  auto vertex_f0 = [&](int nx, int nu) {
    const int s = 2 * nx + nu;
    Eigen::MatrixXcd F0 = Eigen::MatrixXcd::Identity(s, s) * (1.0 - g);
    F0.topLeftCorner(nx, nx) = -g * Eigen::MatrixXcd::Identity(nx, nx);
    return F0;
  };
  if (opt.form == LmiForm::phase_sampled) {
    int ab = std::max(symbol_band(Q), symbol_band(R));
    for (std::size_t v = 0; v < As.size(); ++v) ab = std::max({ab, symbol_band(As[v]), symbol_band(Bs[v])});
    const Eigen::MatrixXcd Ix = Eigen::MatrixXcd::Identity(n, n);
    for (double th : detail::phase_samples(opt.phase_samples, res.band + ab, res.stride)) {
      const Eigen::MatrixXcd Qh = detail::psd_sqrt(sample_symbol(Q, th), "Q"), Rh = detail::psd_sqrt(sample_symbol(R, th), "R");
      for (std::size_t v = 0; v < res.omegas.size(); ++v) {
        const int s = 2 * n + m;
        LmiBlock b{"vertex", {}, vertex_f0(n, m), {}, {}};
        Eigen::MatrixXcd sel = Eigen::MatrixXcd::Zero(s, n), LS = Eigen::MatrixXcd::Zero(s, n), LY = Eigen::MatrixXcd::Zero(s, m);
        sel.topRows(n) = Ix;
        LS.topRows(n) = -sample_symbol(As[v], th);
        LS.bottomRows(n) = -Qh;
        LY.topRows(n) = sample_symbol(Bs[v], th);
        LY.middleRows(n, m) = -Rh;
        b.terms.push_back({S, LS, sel, false, 0, th});
        b.terms.push_back({S, 0.5 * res.omegas[v] * sel, sel, false, 0, th, 1});
        b.terms.push_back({Y, LY, sel, false, 0, th});
        p.add_block(std::move(b));
        vertex_of_block.push_back(static_cast<int>(v));
      }
      coupling(n, {}, th);
    }
  }
  for (const auto& c : opt.form == LmiForm::phase_sampled ? std::vector<Coset>{} : cosets(N, res.stride)) {
    const int Kc = c.size(), nx = n * Kc, nu = m * Kc;
    for (std::size_t v = 0; v < res.omegas.size(); ++v) {
      const int e = detail::product_extension(opt.form, {symbol_band(As[v]), symbol_band(Bs[v]), symbol_band(Q), symbol_band(R)});
      const Coset ce = c.extended(e);
      const auto rx = detail::rows_within(n, c, e), ru = detail::rows_within(m, c, e);
      const Eigen::MatrixXcd Qh = detail::take_rows(detail::psd_sqrt(realize_on_coset(Q, n, n, ce), "Q"), rx);
      const Eigen::MatrixXcd Rh = detail::take_rows(detail::psd_sqrt(realize_on_coset(R, m, m, ce), "R"), ru);
      const Eigen::MatrixXcd Ac = detail::section(As[v], n, n, c, e, res.omegas[v]);
      const Eigen::MatrixXcd Bc = detail::section(Bs[v], n, m, c, e);
      const Eigen::MatrixXcd Isel = detail::section(constant_symbol(Eigen::MatrixXd::Identity(n, n)), n, n, c, e);
      const int s = 2 * nx + nu, nxe = n * ce.size(), nue = m * ce.size();
      LmiBlock b{"vertex", c, vertex_f0(nx, nu), {}, {}};
      Eigen::MatrixXcd sel = Eigen::MatrixXcd::Zero(s, nxe), LS = Eigen::MatrixXcd::Zero(s, nxe), LY = Eigen::MatrixXcd::Zero(s, nue);
      sel.topRows(nx) = Isel;
      LS.topRows(nx) = -Ac;
      LS.bottomRows(nx) = -Qh;
      LY.topRows(nx) = Bc;
      LY.middleRows(nx, nu) = -Rh;
      b.terms.push_back({S, LS, sel, false, e});
      b.terms.push_back({Y, LY, sel, false, e});
      p.add_block(std::move(b));
      vertex_of_block.push_back(static_cast<int>(v));
    }
    coupling(nx, c, std::nullopt);
  }
  p.add_objective_dc_trace(M, 1.0);

  auto engine = make_sdp_engine(opt.backend);
  res.solution = solve_sdp(p, opt.sdp, engine.get());
  if (res.solution.status == SdpStatus::infeasible)
    raise(ErrorKind::Infeasible, "synthesis LMIs infeasible: " + res.solution.message);
  if (res.solution.status != SdpStatus::optimal)
    raise(ErrorKind::SolverFailure, "synthesis SDP ended with " + to_string(res.solution.status) + " " + res.solution.message);

  const Eigen::VectorXd& y = res.solution.y;
  res.S_symbol = p.symbol(S, y);
  res.Y_symbol = p.symbol(Y, y);
  res.M_symbol = p.symbol(M, y);
  res.S = toeplitz_from_symbol(res.S_symbol, N);
  res.Y = toeplitz_from_symbol(res.Y_symbol, N);
  res.M = toeplitz_from_symbol(res.M_symbol, N);
  res.cost = res.M_symbol.at(0).trace().real();
  res.min_eig_S = min_eigenvalue(res.S.matrix());
  if (res.min_eig_S < 0.5 * g)
    raise(ErrorKind::PosdefCheckFailed, "recovered S has min eigenvalue " + std::to_string(res.min_eig_S));
  const Eigen::MatrixXcd Sinv = res.S.matrix().ldlt().solve(Eigen::MatrixXcd::Identity(n * (2 * N + 1), n * (2 * N + 1)));
  res.K = ToeplitzBlockOperator(m, n, N, res.Y.matrix() * Sinv);

  res.vertex_max_eig.assign(res.omegas.size(), -INFINITY);
  for (std::size_t b = 0; b < p.blocks().size(); ++b) {
    const int v = vertex_of_block[b];
    if (v < 0) continue;
    const double lam = -g - min_eigenvalue(p.block_value(static_cast<int>(b), y));
    res.vertex_max_eig[v] = std::max(res.vertex_max_eig[v], lam);
  }
  return res;
}

// Fourier coefficients of a phase-periodic gain K(θ) = Σ K_h e^{jhθ}, real-valued in time.
struct PeriodicGain {
  Symbol coeffs;
  int band = 0;
  int rows = 0, cols = 0;
  double toeplitz_residual = 0.0;  // relative spread of the diagonals used

  Eigen::MatrixXd evaluate(double theta) const {
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(rows, cols);
    for (const auto& [h, c] : coeffs) k += (c * std::polar(1.0, h * theta)).real();
    return k;
  }
  // K(θ) restricted to a column range.
  Eigen::MatrixXd evaluate_cols(double theta, int first, int count) const { return evaluate(theta).middleCols(first, count); }
};

inline void symmetrize_real(Symbol& s) {
  for (auto& [h, c] : s) {
    if (h < 0) continue;
    auto it = s.find(-h);
    if (h == 0) {
      c = Eigen::MatrixXcd(c.real().cast<cdouble>());
    } else if (it != s.end()) {
      const Eigen::MatrixXcd avg = 0.5 * (c + it->second.conjugate());
      c = avg;
      it->second = avg.conjugate();
    }
  }
}

// Reads K_h off the diagonals of each Toeplitz block, averaging rows |k| ≤ central whose stencil fits.
inline PeriodicGain reconstruct_periodic_gain(const ToeplitzBlockOperator& K, int band = -1, int central = 0,
                                              double threshold = 1e-6, bool strict = false) {
  const int N = K.order(), Kh = K.harmonics();
  if (band < 0 || band > N) band = N;
  central = std::clamp(central, 0, N);
  PeriodicGain g;
  g.band = band;
  g.rows = K.n();
  g.cols = K.m();
  const Eigen::MatrixXcd& mat = K.matrix();
  const double scale = std::max(1e-300, mat.cwiseAbs().maxCoeff());
  double spread = 0.0;
  for (int h = -band; h <= band; ++h) {
    Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(g.rows, g.cols);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) {
        std::vector<cdouble> vals;
        for (int k = -central; k <= central; ++k)
          if (std::abs(k - h) <= N) vals.push_back(mat(i * Kh + k + N, j * Kh + k - h + N));
        if (vals.empty()) vals.push_back(mat(i * Kh + N, j * Kh - h + N));
        cdouble mean = 0.0;
        for (auto v : vals) mean += v;
        mean /= double(vals.size());
        for (auto v : vals) spread = std::max(spread, std::abs(v - mean) / scale);
        c(i, j) = mean;
      }
    g.coeffs[h] = c;
  }
  symmetrize_real(g.coeffs);
  g.toeplitz_residual = spread;
  if (strict && spread > threshold)
    raise(ErrorKind::NonToeplitzResidual, "diagonal spread " + std::to_string(spread) + " over the central band");
  return g;
}

// K(θ) = Y(θ)S(θ)⁻¹ sampled on a uniform grid and projected on |h| ≤ band.
inline PeriodicGain pointwise_gain(const Symbol& S, const Symbol& Y, int band, int samples = 0) {
  const auto [m, n] = symbol_shape(Y);
  if (samples <= 0) samples = 4 * (band + symbol_band(S) + symbol_band(Y)) + 16;
  PeriodicGain g;
  g.band = band;
  g.rows = m;
  g.cols = n;
  for (int h = -band; h <= band; ++h) g.coeffs[h] = Eigen::MatrixXcd::Zero(m, n);
  for (int s = 0; s < samples; ++s) {
    const double th = 2.0 * M_PI * s / samples;
    const Eigen::MatrixXcd k = evaluate_symbol(Y, th) * evaluate_symbol(S, th).inverse();
    for (int h = -band; h <= band; ++h) g.coeffs[h] += k * std::polar(1.0 / samples, -h * th);
  }
  symmetrize_real(g.coeffs);
  return g;
}

struct ClosedLoopReport {
  std::vector<double> omegas;
  std::vector<double> vertex_max_eig;  // fresh Lyapunov solve on the closed loop with K fixed
  std::vector<double> grid_max_eig;    // −ωS′ + A_cl S + S A_clᵀ on the θ-grid, per vertex
  double worst_theta = 0.0;
  LyapunovCertificate certificate;
};

struct VerifyOptions {
  int grid = 720;
  bool lyapunov_solve = true;  // false: grid check against S only
  LyapunovOptions lyapunov;
};

// Rechecks the closed loop Ã − B̃K(θ) with a fresh vertex Lyapunov solve and the phase-domain inequality
// −ωS′ + A_cl S + S A_clᴴ ≺ 0 on a θ-grid (skipped when S is empty).
inline ClosedLoopReport verify_vertex_closed_loop(const AugmentedSystem& aug, const PeriodicGain& K, const Symbol& S,
                                                  const VerifyOptions& opt = {}) {
  const int N = aug.order(), n = aug.dim();
  if (K.rows != aug.m() || K.cols != n) raise(ErrorKind::DimensionMismatch, "gain must be m × (n + q)");
  ClosedLoopReport rep;
  rep.omegas = {aug.base().omega_min(), aug.base().omega_max()};
  std::vector<Symbol> Acl;
  for (double w : rep.omegas) {
    auto [a, b] = augmented_symbols(aug, w);
    Acl.push_back(symbol_sum(a, symbol_product(b, K.coeffs), -1.0));
  }
  if (!opt.lyapunov_solve && S.empty()) raise(ErrorKind::ConfigError, "grid-only verification needs S");
  if (opt.lyapunov_solve) {
    auto lopt = opt.lyapunov;
    if (lopt.stride <= 0) {
      auto syms = aug.symbols();
      syms.push_back(K.coeffs);
      lopt.stride = harmonic_stride(syms, N);
    }
    try {
      rep.certificate = detail::lyapunov_vertices(Acl, rep.omegas, n, N, lopt.stride, lopt);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Infeasible) raise(ErrorKind::VerificationFailed, std::string("closed loop: ") + e.what());
      throw;
    }
    rep.vertex_max_eig = rep.certificate.vertex_max_eig;
  }

  if (!S.empty()) {
    const Symbol dS = symbol_derivative(S);
    double worst = -INFINITY;
    for (std::size_t v = 0; v < rep.omegas.size(); ++v) {
      const double w = rep.omegas[v];
      double vmax = -INFINITY;
      for (int i = 0; i < opt.grid; ++i) {
        const double th = 2.0 * M_PI * i / opt.grid;
        const Eigen::MatrixXcd AS = evaluate_symbol(Acl[v], th) * evaluate_symbol(S, th);
        const double lam = max_eigenvalue(-w * evaluate_symbol(dS, th) + AS + AS.adjoint());
        if (lam > vmax) vmax = lam;
        if (lam > worst) {
          worst = lam;
          rep.worst_theta = th;
        }
      }
      rep.grid_max_eig.push_back(vmax);
    }
    if (!(worst < 0.0))
      raise(ErrorKind::VerificationFailed,
            "differential Lyapunov inequality fails at θ = " + std::to_string(rep.worst_theta) + " (λ = " + std::to_string(worst) + ")");
  }
  return rep;
}

}  // namespace vfharm
