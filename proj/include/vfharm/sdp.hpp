#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "vfharm/error.hpp"
#include "vfharm/sfd.hpp"
#include "vfharm/toeplitz.hpp"

namespace vfharm {

// Harmonic indices k ∈ [−N, N] with k ≡ offset (mod stride). Operators whose symbols only carry
// multiples of the stride never couple two different cosets.
struct Coset {
  int N = 0;
  int stride = 1;
  int offset = 0;

  std::vector<int> indices() const {
    std::vector<int> out;
    for (int k = -N; k <= N; ++k)
      if (((k % stride) + stride) % stride == offset) out.push_back(k);
    return out;
  }
  int size() const { return static_cast<int>(indices().size()); }
  Coset extended(int e) const { return {N + e, stride, offset}; }
};

inline std::vector<Coset> cosets(int N, int stride) {
  std::vector<Coset> out;
  for (int o = 0; o < stride; ++o) {
    Coset c{N, stride, o};
    if (c.size() > 0) out.push_back(c);
  }
  return out;
}

// Rows/columns of a full n-block realization (component-major, harmonic k at i(2N+1)+k+N) kept by a coset.
inline std::vector<int> coset_rows(int n, const Coset& c) {
  std::vector<int> rows;
  const int K = 2 * c.N + 1;
  for (int i = 0; i < n; ++i)
    for (int k : c.indices()) rows.push_back(i * K + k + c.N);
  return rows;
}

inline Eigen::MatrixXcd restrict_to_coset(const Eigen::MatrixXcd& M, int n, int m, const Coset& c) {
  const auto r = coset_rows(n, c), q = coset_rows(m, c);
  Eigen::MatrixXcd out(r.size(), q.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < q.size(); ++j) out(i, j) = M(r[i], q[j]);
  return out;
}

// Toeplitz-structured matrix unknown whose time-domain symbol is real-valued: V_{−h} = conj(V_h).
struct ToeplitzVariable {
  std::string name;
  int rows = 1, cols = 1;
  int band = 0;    // |h| ≤ band
  int stride = 1;  // only multiples of the stride are free
  bool hermitian = false;
};

struct SlotWeight {
  int h, a, b;
  cdouble w;
};

// Real parameters of a variable, each listing the symbol entries it feeds.
inline std::vector<std::vector<SlotWeight>> parametrize(const ToeplitzVariable& v) {
  if (v.hermitian && v.rows != v.cols) raise(ErrorKind::DimensionMismatch, "Hermitian variable must be square");
  if (v.stride < 1 || v.band < 0) raise(ErrorKind::DimensionMismatch, "invalid variable band");
  std::vector<std::vector<SlotWeight>> out;
  const cdouble J(0.0, 1.0);
  for (int h = 0; h <= v.band; h += v.stride) {
    for (int a = 0; a < v.rows; ++a)
      for (int b = v.hermitian ? a : 0; b < v.cols; ++b) {
        std::vector<SlotWeight> re, im;
        auto put = [&](std::vector<SlotWeight>& p, int hh, int aa, int bb, cdouble w) { p.push_back({hh, aa, bb, w}); };
        if (h == 0) {
          put(re, 0, a, b, 1.0);
          if (v.hermitian && a != b) put(re, 0, b, a, 1.0);
          out.push_back(re);
          continue;
        }
        put(re, h, a, b, 1.0);
        put(re, -h, a, b, 1.0);
        put(im, h, a, b, J);
        put(im, -h, a, b, -J);
        if (v.hermitian && a != b) {
          put(re, h, b, a, 1.0);
          put(re, -h, b, a, 1.0);
          put(im, h, b, a, J);
          put(im, -h, b, a, -J);
        }
        out.push_back(re);
        out.push_back(im);
      }
  }
  return out;
}

inline Symbol variable_symbol(const ToeplitzVariable& v, const std::vector<std::vector<SlotWeight>>& params,
                              const double* y) {
  Symbol s;
  for (int h = -v.band; h <= v.band; h += v.stride) s[h] = Eigen::MatrixXcd::Zero(v.rows, v.cols);
  for (std::size_t i = 0; i < params.size(); ++i)
    for (const auto& sw : params[i]) s[sw.h](sw.a, sw.b) += y[i] * sw.w;
  return s;
}

// Section of 𝓣(s) between two index sets: entry (a·Kr + i, b·Kc + j) = s_{k_i − l_j}(a, b).
inline Eigen::MatrixXcd realize_between(const Symbol& s, int rows, int cols, const Coset& r, const Coset& c) {
  const auto ri = r.indices(), ci = c.indices();
  const int Kr = static_cast<int>(ri.size()), Kc = static_cast<int>(ci.size());
  Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(rows * Kr, cols * Kc);
  for (int i = 0; i < Kr; ++i)
    for (int j = 0; j < Kc; ++j) {
      auto it = s.find(ri[i] - ci[j]);
      if (it == s.end()) continue;
      for (int a = 0; a < rows; ++a)
        for (int b = 0; b < cols; ++b) M(a * Kr + i, b * Kc + j) = it->second(a, b);
    }
  return M;
}

// Realization on a coset: entry (a·Kc + i, b·Kc + j) = V_{k_i − k_j}(a, b).
inline Eigen::MatrixXcd realize_on_coset(const Symbol& s, int rows, int cols, const Coset& c) {
  return realize_between(s, rows, cols, c, c);
}

// Σ_h (jh)^d V_h e^{jhθ}.
inline Eigen::MatrixXcd sample_symbol(const Symbol& s, double theta, int derivative = 0) {
  Eigen::MatrixXcd out;
  for (const auto& [h, c] : s) {
    const cdouble w = std::pow(cdouble(0.0, h), derivative) * std::polar(1.0, h * theta);
    if (out.size() == 0) out = Eigen::MatrixXcd::Zero(c.rows(), c.cols());
    out += w * c;
  }
  return out;
}

// One summand of an LMI block: L V Rᴴ + R Vᴴ Lᴴ, or L V Lᴴ for a Hermitian V (congruence).
// V is realized on the block coset widened by `extend` harmonics, so L = 𝓣(a) restricted to rows
// in the coset and columns in the widened set gives the exact section of a·V. With `theta` set, V is
// replaced by its θ-derivative of order `derivative` evaluated at that phase and the coset is unused.
struct LmiTerm {
  int var = 0;
  Eigen::MatrixXcd L, R;
  bool congruence = false;
  int extend = 0;
  std::optional<double> theta = std::nullopt;
  int derivative = 0;

  int positions(const Coset& c) const { return theta ? 1 : c.extended(extend).size(); }
};

// F0 + Σ terms + Σ y_s D_s ≽ 0, realized on one coset.
struct LmiBlock {
  std::string label;
  Coset coset;
  Eigen::MatrixXcd F0;
  std::vector<LmiTerm> terms;
  std::vector<std::pair<int, Eigen::MatrixXcd>> scalars;  // (scalar index, Hermitian coefficient)
  int size() const { return static_cast<int>(F0.rows()); }
};

class SdpProblem {
 public:
  int add_variable(const ToeplitzVariable& v) {
    vars_.push_back(v);
    params_.push_back(parametrize(v));
    offsets_.push_back(0);
    relayout();
    return static_cast<int>(vars_.size()) - 1;
  }
  int add_scalar(const std::string& name) {
    scalar_names_.push_back(name);
    relayout();
    return static_cast<int>(scalar_names_.size()) - 1;
  }
  void add_block(LmiBlock b) {
    const int s = b.size();
    if (b.F0.cols() != s) raise(ErrorKind::DimensionMismatch, "block constant must be square");
    for (const auto& t : b.terms) {
      const auto& v = vars_.at(t.var);
      if (t.extend < 0) raise(ErrorKind::DimensionMismatch, "negative term extension in block " + b.label);
      if (t.derivative != 0 && !t.theta) raise(ErrorKind::DimensionMismatch, "derivative term needs a phase in block " + b.label);
      const int Kc = t.positions(b.coset);
      if (t.L.rows() != s || t.L.cols() != v.rows * Kc)
        raise(ErrorKind::DimensionMismatch, "term left factor shape in block " + b.label);
      if (t.congruence) {
        if (!v.hermitian) raise(ErrorKind::DimensionMismatch, "congruence term needs a Hermitian variable");
      } else if (t.R.rows() != s || t.R.cols() != v.cols * Kc) {
        raise(ErrorKind::DimensionMismatch, "term right factor shape in block " + b.label);
      }
      if (v.stride % b.coset.stride != 0 && b.coset.stride % v.stride != 0)
        raise(ErrorKind::DimensionMismatch, "variable stride incompatible with coset");
    }
    for (const auto& [si, D] : b.scalars)
      if (si < 0 || si >= num_scalars() || D.rows() != s || D.cols() != s)
        raise(ErrorKind::DimensionMismatch, "scalar coefficient shape in block " + b.label);
    blocks_.push_back(std::move(b));
  }

  // Objective Σ weight·Re tr(V_0) over the listed variables plus scalar weights.
  void add_objective_dc_trace(int var, double weight) {
    const auto& ps = params_.at(var);
    for (std::size_t i = 0; i < ps.size(); ++i)
      for (const auto& sw : ps[i])
        if (sw.h == 0 && sw.a == sw.b) c_(offsets_[var] + static_cast<int>(i)) += weight * sw.w.real();
  }
  void add_objective_scalar(int s, double weight) { c_(scalar_offset_ + s) += weight; }

  int num_variables() const { return static_cast<int>(vars_.size()); }
  int num_scalars() const { return static_cast<int>(scalar_names_.size()); }
  int num_params() const { return n_; }
  int offset(int var) const { return offsets_.at(var); }
  int scalar_offset() const { return scalar_offset_; }
  const ToeplitzVariable& variable(int v) const { return vars_.at(v); }
  const std::vector<std::vector<SlotWeight>>& params(int v) const { return params_.at(v); }
  const std::vector<LmiBlock>& blocks() const { return blocks_; }
  const Eigen::VectorXd& c() const { return c_; }

  Symbol symbol(int var, const Eigen::VectorXd& y) const {
    return variable_symbol(vars_.at(var), params_.at(var), y.data() + offsets_.at(var));
  }

  // Block value F0 + 𝒜(y) (with_constant) or the linear part only.
  Eigen::MatrixXcd block_value(int b, const Eigen::VectorXd& y, bool with_constant = true) const {
    const auto& B = blocks_.at(b);
    Eigen::MatrixXcd Z = with_constant ? B.F0 : Eigen::MatrixXcd::Zero(B.size(), B.size());
    for (const auto& t : B.terms) {
      const auto& v = vars_[t.var];
      const Eigen::MatrixXcd V = t.theta ? sample_symbol(symbol(t.var, y), *t.theta, t.derivative)
                                         : realize_on_coset(symbol(t.var, y), v.rows, v.cols, B.coset.extended(t.extend));
      if (t.congruence) {
        Z.noalias() += t.L * V * t.L.adjoint();
      } else {
        const Eigen::MatrixXcd LV = t.L * V;
        Eigen::MatrixXcd P = LV * t.R.adjoint();
        Z += P + P.adjoint();
      }
    }
    for (const auto& [si, D] : B.scalars) Z += y(scalar_offset_ + si) * D;
    return Z;
  }

 private:
  void relayout() {
    n_ = 0;
    for (std::size_t v = 0; v < vars_.size(); ++v) {
      offsets_[v] = n_;
      n_ += static_cast<int>(params_[v].size());
    }
    scalar_offset_ = n_;
    n_ += num_scalars();
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n_);
    c_ = c;
  }

  std::vector<ToeplitzVariable> vars_;
  std::vector<std::vector<std::vector<SlotWeight>>> params_;
  std::vector<int> offsets_;
  std::vector<std::string> scalar_names_;
  std::vector<LmiBlock> blocks_;
  Eigen::VectorXd c_;
  int n_ = 0, scalar_offset_ = 0;
};

enum class SdpStatus { optimal, infeasible, unbounded, max_iterations, numerical_error };

inline std::string to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::optimal: return "optimal";
    case SdpStatus::infeasible: return "infeasible";
    case SdpStatus::unbounded: return "unbounded";
    case SdpStatus::max_iterations: return "max_iterations";
    case SdpStatus::numerical_error: return "numerical_error";
  }
  return "unknown";
}

struct SdpOptions {
  int max_iterations = 100;
  double tol_gap = 1e-8;
  double tol_feas = 1e-8;
  double step = 0.95;
  double unbounded_threshold = 1e10;
  // a stalled run still returns its last iterate meeting these looser gap / multiplier tolerances
  double tol_gap_reduced = 1e-6;
  double tol_feas_reduced = 1e-4;
  bool stop_at_reduced = false;  // return as soon as the looser criteria hold
  bool verbose = false;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::numerical_error;
  Eigen::VectorXd y;
  std::vector<Eigen::MatrixXcd> X, Z;  // dual multipliers and slacks per block
  int iterations = 0;
  double primal_objective = 0.0;       // cᵀy
  double dual_objective = 0.0;         // −Σ tr(F0 X)
  double gap = 0.0, primal_residual = 0.0, dual_residual = 0.0;
  bool reduced_accuracy = false;
  std::string backend;
  std::string message;
};

// Computes the operator pieces the interior-point iteration needs.
class SdpEngine {
 public:
  virtual ~SdpEngine() = default;
  virtual std::string name() const = 0;
  virtual void prepare(const SdpProblem& p) = 0;
  // Re tr(A_i W_b) summed over blocks.
  virtual Eigen::VectorXd adjoint(const std::vector<Eigen::MatrixXcd>& W) const = 0;
  // H_ij = Σ_b Re tr(A_bi X_b A_bj Z_b^{-1}).
  virtual Eigen::MatrixXd schur(const std::vector<Eigen::MatrixXcd>& X, const std::vector<Eigen::MatrixXcd>& Zinv) const = 0;
};

// Reference engine: materializes every basis matrix. Only suitable for small problems.
class DenseSdpEngine : public SdpEngine {
 public:
  std::string name() const override { return "dense"; }
  void prepare(const SdpProblem& p) override {
    A_.assign(p.blocks().size(), {});
    const int n = p.num_params();
    for (std::size_t b = 0; b < p.blocks().size(); ++b) {
      A_[b].resize(n);
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        e(i) = 1.0;
        A_[b][i] = p.block_value(static_cast<int>(b), e, false);
      }
    }
  }
  Eigen::VectorXd adjoint(const std::vector<Eigen::MatrixXcd>& W) const override {
    const int n = A_.empty() ? 0 : static_cast<int>(A_[0].size());
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (std::size_t b = 0; b < A_.size(); ++b)
      for (int i = 0; i < n; ++i) g(i) += (A_[b][i].cwiseProduct(W[b].transpose())).sum().real();
    return g;
  }
  Eigen::MatrixXd schur(const std::vector<Eigen::MatrixXcd>& X, const std::vector<Eigen::MatrixXcd>& Zinv) const override {
    const int n = A_.empty() ? 0 : static_cast<int>(A_[0].size());
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t b = 0; b < A_.size(); ++b) {
      std::vector<Eigen::MatrixXcd> G(n);
      for (int i = 0; i < n; ++i) G[i] = X[b] * A_[b][i] * Zinv[b];
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          const double v = (A_[b][j].cwiseProduct(G[i].transpose())).sum().real();
          H(i, j) += v;
          if (j != i) H(j, i) += v;
        }
    }
    return H;
  }

 private:
  std::vector<std::vector<Eigen::MatrixXcd>> A_;
};

namespace detail {

// Slots (hp, a, b) of an r×c symbol realized on Kc positions with shifts |hp| ≤ hpmax.
struct SlotSpace {
  int r = 0, c = 0, hpmax = 0;
  int size() const { return (2 * hpmax + 1) * r * c; }
  int index(int hp, int a, int b) const { return ((hp + hpmax) * r + a) * c + b; }
};

// Weights of each real parameter on the slots; transposed = slots of Vᴴ (conjugated weights).
inline Eigen::SparseMatrix<cdouble> slot_weights(const std::vector<std::vector<SlotWeight>>& ps,
                                                 const SlotSpace& sp, int coset_stride, bool transposed) {
  std::vector<Eigen::Triplet<cdouble>> trip;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (const auto& sw : ps[i]) {
      if (sw.h % coset_stride != 0) continue;
      const int hp = sw.h / coset_stride;
      if (std::abs(hp) > sp.hpmax) continue;
      const int row = transposed ? sp.index(-hp, sw.b, sw.a) : sp.index(hp, sw.a, sw.b);
      trip.emplace_back(row, static_cast<int>(i), transposed ? std::conj(sw.w) : sw.w);
    }
  Eigen::SparseMatrix<cdouble> W(sp.size(), static_cast<int>(ps.size()));
  W.setFromTriplets(trip.begin(), trip.end());
  return W;
}

// Weights of each real parameter on the entries of V(θ) (or its derivative), as a one-position slot space.
inline Eigen::SparseMatrix<cdouble> sampled_weights(const std::vector<std::vector<SlotWeight>>& ps, const SlotSpace& sp,
                                                    double theta, int derivative, bool transposed) {
  std::vector<Eigen::Triplet<cdouble>> trip;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (const auto& sw : ps[i]) {
      const cdouble w = sw.w * std::pow(cdouble(0.0, sw.h), derivative) * std::polar(1.0, sw.h * theta);
      trip.emplace_back(transposed ? sp.index(0, sw.b, sw.a) : sp.index(0, sw.a, sw.b), static_cast<int>(i),
                        transposed ? std::conj(w) : w);
    }
  Eigen::SparseMatrix<cdouble> W(sp.size(), static_cast<int>(ps.size()));
  W.setFromTriplets(trip.begin(), trip.end());
  return W;
}

// τ[slot] = tr(E_slot Φ), Φ of size (c·Kc) × (r·Kc).
inline Eigen::VectorXcd slot_traces(const Eigen::MatrixXcd& Phi, const SlotSpace& sp, int Kc) {
  Eigen::VectorXcd t = Eigen::VectorXcd::Zero(sp.size());
  for (int hp = -sp.hpmax; hp <= sp.hpmax; ++hp)
    for (int a = 0; a < sp.r; ++a)
      for (int b = 0; b < sp.c; ++b) {
        cdouble acc = 0.0;
        for (int i = std::max(0, hp); i < std::min(Kc, Kc + hp); ++i) acc += Phi(b * Kc + i - hp, a * Kc + i);
        t(sp.index(hp, a, b)) = acc;
      }
  return t;
}

// T[s1, s2] = tr(E_s1 P E_s2 Q) with P: (c1·K1)×(r2·K2), Q: (c2·K2)×(r1·K1).
inline Eigen::MatrixXcd slot_pair_traces(const Eigen::MatrixXcd& P, const Eigen::MatrixXcd& Q, const SlotSpace& s1,
                                         const SlotSpace& s2, int K1, int K2) {
  const int H1 = 2 * s1.hpmax + 1, H2 = 2 * s2.hpmax + 1, KK = K1 * K2;
  // U rows (b1, a2, hp1), V rows (b2, a1, hp2); columns (i, l)
  Eigen::MatrixXcd U = Eigen::MatrixXcd::Zero(s1.c * s2.r * H1, KK);
  Eigen::MatrixXcd V = Eigen::MatrixXcd::Zero(s2.c * s1.r * H2, KK);
  for (int b1 = 0; b1 < s1.c; ++b1)
    for (int a2 = 0; a2 < s2.r; ++a2)
      for (int h = 0; h < H1; ++h) {
        const int hp = h - s1.hpmax, row = (b1 * s2.r + a2) * H1 + h;
        for (int i = std::max(0, hp); i < std::min(K1, K1 + hp); ++i)
          for (int l = 0; l < K2; ++l) U(row, i * K2 + l) = P(b1 * K1 + i - hp, a2 * K2 + l);
      }
  for (int b2 = 0; b2 < s2.c; ++b2)
    for (int a1 = 0; a1 < s1.r; ++a1)
      for (int h = 0; h < H2; ++h) {
        const int hp = h - s2.hpmax, row = (b2 * s1.r + a1) * H2 + h;
        for (int l = std::max(0, hp); l < std::min(K2, K2 + hp); ++l)
          for (int i = 0; i < K1; ++i) V(row, i * K2 + l) = Q(b2 * K2 + l - hp, a1 * K1 + i);
      }
  const Eigen::MatrixXcd G = U * V.transpose();
  Eigen::MatrixXcd T(s1.size(), s2.size());
  for (int b1 = 0; b1 < s1.c; ++b1)
    for (int a2 = 0; a2 < s2.r; ++a2)
      for (int h1 = 0; h1 < H1; ++h1) {
        const int gr = (b1 * s2.r + a2) * H1 + h1;
        for (int b2 = 0; b2 < s2.c; ++b2)
          for (int a1 = 0; a1 < s1.r; ++a1)
            for (int h2 = 0; h2 < H2; ++h2)
              T(s1.index(h1 - s1.hpmax, a1, b1), s2.index(h2 - s2.hpmax, a2, b2)) = G(gr, (b2 * s1.r + a1) * H2 + h2);
      }
  return T;
}

}  // namespace detail

// Exploits the term structure: every basis matrix is L E Rᴴ + R Eᴴ Lᴴ with E a shifted slot pattern.
// Phase-sampled items have weights Σ_h e^{±jhθ}Π_h with θ-free Π_h, so their Schur pieces are summed
// in slot space per phase index s (Σ_b e^{jsθ_b} T_b) and mapped to parameters once per iteration.
class StructuredSdpEngine : public SdpEngine {
 public:
  std::string name() const override { return "structured"; }

  void prepare(const SdpProblem& p) override {
    p_ = &p;
    pieces_.clear();
    kinds_.clear();
    for (const auto& B : p.blocks()) {
      std::vector<TermPieces> tp;
      for (const auto& t : B.terms) {
        const auto& v = p.variable(t.var);
        const int Kc = t.positions(B.coset);
        const int hpmax = t.theta ? 0 : std::min(Kc - 1, v.band / B.coset.stride);
        TermPieces pcs;
        pcs.var = t.var;
        const detail::SlotSpace sp{v.rows, v.cols, hpmax}, spT{v.cols, v.rows, hpmax};
        auto item = [&](const Eigen::MatrixXcd* L, const Eigen::MatrixXcd* R, const detail::SlotSpace& space, bool transposed) {
          Item it{L, R, space, {}, {}, Kc};
          if (t.theta) {
            it.W = detail::sampled_weights(p.params(t.var), space, *t.theta, t.derivative, transposed);
            it.kind = kind_index(p, t.var, transposed, t.derivative);
            it.theta = *t.theta;
          } else {
            it.W = detail::slot_weights(p.params(t.var), space, B.coset.stride, transposed);
          }
          it.Wt = it.W.transpose();
          pcs.items.push_back(std::move(it));
        };
        if (t.congruence) {
          item(&t.L, &t.L, sp, false);
        } else {
          item(&t.L, &t.R, sp, false);
          item(&t.R, &t.L, spT, true);
        }
        tp.push_back(std::move(pcs));
      }
      pieces_.push_back(std::move(tp));
    }
  }

  Eigen::VectorXd adjoint(const std::vector<Eigen::MatrixXcd>& W) const override {
    const auto& p = *p_;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p.num_params());
    for (std::size_t b = 0; b < p.blocks().size(); ++b) {
      const auto& B = p.blocks()[b];
      for (const auto& tp : pieces_[b]) {
        const int off = p.offset(tp.var);
        for (const auto& it : tp.items) {
          // Re tr(L E Rᴴ W) = Re tr(E (Rᴴ W L))
          const Eigen::MatrixXcd Phi = it.R->adjoint() * W[b] * (*it.L);
          const Eigen::VectorXcd tau = detail::slot_traces(Phi, it.space, it.K);
          const Eigen::VectorXcd contrib = it.Wt * tau;
          g.segment(off, contrib.size()) += contrib.real();
        }
      }
      for (const auto& [si, D] : B.scalars) g(p.scalar_offset() + si) += (D.cwiseProduct(W[b].transpose())).sum().real();
    }
    return g;
  }

  Eigen::MatrixXd schur(const std::vector<Eigen::MatrixXcd>& X, const std::vector<Eigen::MatrixXcd>& Zinv) const override {
    const auto& p = *p_;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p.num_params(), p.num_params());
    std::map<std::tuple<int, int, bool>, PhaseSums> sums;
    for (std::size_t b = 0; b < p.blocks().size(); ++b) {
      const auto& B = p.blocks()[b];
      const auto& tps = pieces_[b];
      for (std::size_t t1 = 0; t1 < tps.size(); ++t1)
        for (std::size_t t2 = t1; t2 < tps.size(); ++t2) {
          const int o1 = p.offset(tps[t1].var), o2 = p.offset(tps[t2].var);
          const int n1 = static_cast<int>(p.params(tps[t1].var).size()), n2 = static_cast<int>(p.params(tps[t2].var).size());
          Eigen::MatrixXd C;
          for (const auto& i1 : tps[t1].items)
            for (const auto& i2 : tps[t2].items) {
              // tr(L1 E1 R1ᴴ X L2 E2 R2ᴴ Z⁻¹) = tr(E1 (R1ᴴ X L2) E2 (R2ᴴ Z⁻¹ L1))
              const Eigen::MatrixXcd P = i1.R->adjoint() * X[b] * (*i2.L);
              const Eigen::MatrixXcd Q = i2.R->adjoint() * Zinv[b] * (*i1.L);
              const Eigen::MatrixXcd T = detail::slot_pair_traces(P, Q, i1.space, i2.space, i1.K, i2.K);
              if (i1.kind >= 0 && i2.kind >= 0) {
                auto key = std::make_tuple(i1.kind, i2.kind, t1 != t2);
                auto it = sums.find(key);
                if (it == sums.end()) it = sums.emplace(key, phase_sums(i1.kind, i2.kind, T.rows(), T.cols())).first;
                it->second.add(T, i1.theta);
                continue;
              }
              if (C.size() == 0) C = Eigen::MatrixXd::Zero(n1, n2);
              const Eigen::MatrixXcd TW = T * i2.W;
              const Eigen::MatrixXcd WTW = i1.Wt * TW;
              C += WTW.real();
            }
          if (C.size() == 0) continue;
          H.block(o1, o2, n1, n2) += C;
          if (t1 != t2) H.block(o2, o1, n2, n1) += C.transpose();
        }
      // scalar coefficients
      for (const auto& [si, D] : B.scalars) {
        const int is = p.scalar_offset() + si;
        const Eigen::MatrixXcd G = Zinv[b] * D * X[b];
        for (const auto& [sj, D2] : B.scalars) H(is, p.scalar_offset() + sj) += (D2.cwiseProduct(G.transpose())).sum().real();
        for (const auto& tp : tps) {
          const int off = p.offset(tp.var);
          for (const auto& it : tp.items) {
            const Eigen::MatrixXcd Phi = it.R->adjoint() * G * (*it.L);
            const Eigen::VectorXd contrib = (it.Wt * detail::slot_traces(Phi, it.space, it.K)).real();
            H.block(is, off, 1, contrib.size()) += contrib.transpose();
            H.block(off, is, contrib.size(), 1) += contrib;
          }
        }
      }
    }
    // Re Σ_{h1,h2} Π1_h1ᵀ F[σ1h1 + σ2h2] Π2_h2
    for (auto& [key, ps] : sums) {
      ps.flush();
      const auto& k1 = kinds_[std::get<0>(key)];
      const auto& k2 = kinds_[std::get<1>(key)];
      const int S1 = static_cast<int>(ps.F.front().rows()), S2 = static_cast<int>(ps.F.front().cols());
      Eigen::MatrixXcd Fbig(k1.hs.size() * S1, k2.hs.size() * S2);
      for (std::size_t a = 0; a < k1.hs.size(); ++a)
        for (std::size_t c = 0; c < k2.hs.size(); ++c)
          Fbig.block(a * S1, c * S2, S1, S2) = ps.F[ps.index(k1.sigma * k1.hs[a] + k2.sigma * k2.hs[c])];
      const Eigen::MatrixXcd FP = Fbig * k2.Pi;
      const Eigen::MatrixXd C = (k1.Pit * FP).real();
      const int o1 = p.offset(k1.var), o2 = p.offset(k2.var);
      H.block(o1, o2, C.rows(), C.cols()) += C;
      if (std::get<2>(key)) H.block(o2, o1, C.cols(), C.rows()) += C.transpose();
    }
    return H;
  }

 private:
  struct Item {
    const Eigen::MatrixXcd* L;
    const Eigen::MatrixXcd* R;
    detail::SlotSpace space;
    Eigen::SparseMatrix<cdouble> W, Wt;  // Wt = Wᵀ
    int K = 0;      // harmonics of the realization the slots live on
    int kind = -1;  // phase-sampled items only
    double theta = 0.0;
  };
  struct TermPieces {
    int var = 0;
    std::vector<Item> items;
  };
  // θ-free weights of a sampled item: rows (harmonic h, slot), phase e^{jσhθ}.
  struct Kind {
    int var = 0, derivative = 0, sigma = 1;
    bool transposed = false;
    std::vector<int> hs;
    Eigen::SparseMatrix<cdouble> Pi, Pit;
  };
  // Blocks sharing a phase are summed before the expansion over s.
  struct PhaseSums {
    int smin = 0, step = 1;
    std::vector<Eigen::MatrixXcd> F;
    Eigen::MatrixXcd pending;
    double pending_theta = 0.0;
    bool has_pending = false;
    int index(int s) const { return (s - smin) / step; }
    void add(const Eigen::MatrixXcd& T, double theta) {
      if (has_pending && theta == pending_theta) {
        pending += T;
        return;
      }
      flush();
      pending = T;
      pending_theta = theta;
      has_pending = true;
    }
    void flush() {
      if (!has_pending) return;
      for (std::size_t i = 0; i < F.size(); ++i) F[i] += std::polar(1.0, (smin + step * double(i)) * pending_theta) * pending;
      has_pending = false;
    }
  };

  int kind_index(const SdpProblem& p, int var, bool transposed, int derivative) {
    for (std::size_t k = 0; k < kinds_.size(); ++k)
      if (kinds_[k].var == var && kinds_[k].transposed == transposed && kinds_[k].derivative == derivative) return static_cast<int>(k);
    const auto& v = p.variable(var);
    Kind k;
    k.var = var;
    k.transposed = transposed;
    k.derivative = derivative;
    k.sigma = transposed ? -1 : 1;
    const int hb = v.band - v.band % v.stride;
    for (int h = -hb; h <= hb; h += v.stride) k.hs.push_back(h);
    const detail::SlotSpace sp = transposed ? detail::SlotSpace{v.cols, v.rows, 0} : detail::SlotSpace{v.rows, v.cols, 0};
    const auto& ps = p.params(var);
    std::vector<Eigen::Triplet<cdouble>> trip;
    for (std::size_t i = 0; i < ps.size(); ++i)
      for (const auto& sw : ps[i]) {
        const cdouble w = sw.w * std::pow(cdouble(0.0, sw.h), derivative);
        const int hi = (sw.h + hb) / v.stride;
        const int slot = transposed ? sp.index(0, sw.b, sw.a) : sp.index(0, sw.a, sw.b);
        trip.emplace_back(hi * sp.size() + slot, static_cast<int>(i), transposed ? std::conj(w) : w);
      }
    k.Pi.resize(static_cast<int>(k.hs.size()) * sp.size(), static_cast<int>(ps.size()));
    k.Pi.setFromTriplets(trip.begin(), trip.end());
    k.Pit = k.Pi.transpose();
    kinds_.push_back(std::move(k));
    return static_cast<int>(kinds_.size()) - 1;
  }

  PhaseSums phase_sums(int k1, int k2, Eigen::Index rows, Eigen::Index cols) const {
    const auto& a = kinds_[k1];
    const auto& c = kinds_[k2];
    PhaseSums ps;
    ps.step = std::gcd(p_->variable(a.var).stride, p_->variable(c.var).stride);
    const int smax = a.hs.back() + c.hs.back();
    ps.smin = -smax;
    ps.F.assign(2 * smax / ps.step + 1, Eigen::MatrixXcd::Zero(rows, cols));
    return ps;
  }

  const SdpProblem* p_ = nullptr;
  std::vector<std::vector<TermPieces>> pieces_;
  std::vector<Kind> kinds_;
};

// VFHARM_SDP_BACKEND selects the engine: "structured" (default) or "dense".
inline std::unique_ptr<SdpEngine> make_sdp_engine(const std::string& requested = "") {
  std::string name = requested;
  if (name.empty()) {
    const char* env = std::getenv("VFHARM_SDP_BACKEND");
    name = env ? env : "structured";
  }
  if (name == "structured") return std::make_unique<StructuredSdpEngine>();
  if (name == "dense") return std::make_unique<DenseSdpEngine>();
  raise(ErrorKind::ConfigError, "unknown SDP backend '" + name + "'");
}

namespace detail {

inline double max_step(const Eigen::MatrixXcd& X, const Eigen::MatrixXcd& D) {
  Eigen::LLT<Eigen::MatrixXcd> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  const Eigen::MatrixXcd Li = llt.matrixL().solve(Eigen::MatrixXcd::Identity(X.rows(), X.cols()));
  Eigen::MatrixXcd M = Li * D * Li.adjoint();
  M = 0.5 * (M + M.adjoint()).eval();
  const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(M, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

inline Eigen::MatrixXcd herm(const Eigen::MatrixXcd& A) { return 0.5 * (A + A.adjoint()); }

inline double inner(const std::vector<Eigen::MatrixXcd>& A, const std::vector<Eigen::MatrixXcd>& B) {
  double s = 0.0;
  for (std::size_t b = 0; b < A.size(); ++b) s += (A[b].cwiseProduct(B[b].conjugate())).sum().real();
  return s;
}

}  // namespace detail

// Infeasible-start primal-dual path following (HKM direction, Mehrotra predictor-corrector) for
//   min cᵀy  s.t.  Z_b = F0_b + 𝒜_b(y) ≽ 0.
namespace detail {
// Cholesky of the Schur complement, LDLᵀ when it is only semidefinite numerically.
class SchurSolver {
 public:
  explicit SchurSolver(const Eigen::MatrixXd& H) : llt_(H) {
    if (llt_.info() != Eigen::Success) {
      use_ldlt_ = true;
      ldlt_.compute(H);
    }
  }
  bool ok() const { return use_ldlt_ ? ldlt_.info() == Eigen::Success : true; }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return use_ldlt_ ? Eigen::VectorXd(ldlt_.solve(b)) : Eigen::VectorXd(llt_.solve(b)); }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  bool use_ldlt_ = false;
};
}  // namespace detail

inline SdpSolution solve_sdp(const SdpProblem& p, const SdpOptions& opt = {}, SdpEngine* engine = nullptr) {
  std::unique_ptr<SdpEngine> owned;
  if (!engine) {
    owned = make_sdp_engine();
    engine = owned.get();
  }
  engine->prepare(p);
  const int n = p.num_params();
  const auto& blocks = p.blocks();
  const std::size_t nb = blocks.size();
  const Eigen::VectorXd& c = p.c();

  SdpSolution sol;
  sol.backend = engine->name();
  sol.y = Eigen::VectorXd::Zero(n);
  double f0norm = 0.0, total = 0.0;
  for (const auto& B : blocks) {
    f0norm = std::max(f0norm, B.F0.cwiseAbs().maxCoeff());
    total += B.size();
  }
  const double xi = std::max(1.0, std::sqrt(total) * (1.0 + c.lpNorm<Eigen::Infinity>()));
  const double eta = std::max(1.0, 10.0 * f0norm);
  for (const auto& B : blocks) {
    sol.X.push_back(xi * Eigen::MatrixXcd::Identity(B.size(), B.size()));
    sol.Z.push_back(eta * Eigen::MatrixXcd::Identity(B.size(), B.size()));
  }
  auto& X = sol.X;
  auto& Z = sol.Z;
  Eigen::VectorXd& y = sol.y;
  const double cnorm = c.norm();
  std::optional<SdpSolution> fallback;
  auto stalled = [&](SdpStatus st, std::string msg) {
    if (fallback) {
      fallback->reduced_accuracy = true;
      fallback->message = "reduced accuracy after " + msg;
      return *fallback;
    }
    sol.status = st;
    sol.message = std::move(msg);
    return sol;
  };

  for (int it = 0; it <= opt.max_iterations; ++it) {
    sol.iterations = it;
    std::vector<Eigen::MatrixXcd> Rd(nb), F0s(nb);
    double rd = 0.0, f0tr = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      Rd[b] = p.block_value(static_cast<int>(b), y) - Z[b];
      rd = std::max(rd, Rd[b].cwiseAbs().maxCoeff());
      f0tr += (blocks[b].F0.cwiseProduct(X[b].transpose())).sum().real();
    }
    const Eigen::VectorXd AX = engine->adjoint(X);
    const Eigen::VectorXd rp = c - AX;
    const double mu = detail::inner(X, Z) / total;
    sol.primal_objective = c.dot(y);
    sol.dual_objective = -f0tr;
    sol.gap = detail::inner(X, Z);
    sol.primal_residual = rp.norm() / (1.0 + cnorm);
    sol.dual_residual = rd / (1.0 + f0norm);
    const double relgap = sol.gap / (1.0 + std::abs(sol.primal_objective) + std::abs(sol.dual_objective));
    if (opt.verbose)
      std::fprintf(stderr, "it %3d  pobj %+.6e  dobj %+.6e  gap %.2e  rp %.2e  rd %.2e\n", it, sol.primal_objective,
                   sol.dual_objective, relgap, sol.primal_residual, sol.dual_residual);
    if (relgap < opt.tol_gap && sol.primal_residual < opt.tol_feas && sol.dual_residual < opt.tol_feas) {
      sol.status = SdpStatus::optimal;
      return sol;
    }
    if (relgap < opt.tol_gap_reduced && sol.primal_residual < opt.tol_feas_reduced && sol.dual_residual < opt.tol_feas) {
      fallback = sol;
      fallback->status = SdpStatus::optimal;
      if (opt.stop_at_reduced) return stalled(SdpStatus::optimal, "meeting the looser tolerances");
    }
    // X ≽ 0 with 𝒜ᵀ(X) → 0 and tr(F0 X) < 0 rules out every y
    double trX = 0.0;
    for (const auto& Xb : X) trX += Xb.trace().real();
    if (f0tr < 0.0 && AX.norm() / trX < 1e-9 * (-f0tr / trX) && -f0tr / trX > 1e-10) {
      sol.status = SdpStatus::infeasible;
      sol.message = "certificate: tr(F0 X)/tr X = " + std::to_string(f0tr / trX) +
                    ", |A*(X)|/tr X = " + std::to_string(AX.norm() / trX);
      return sol;
    }
    if (y.lpNorm<Eigen::Infinity>() > opt.unbounded_threshold && sol.primal_objective < -opt.unbounded_threshold * 1e-3) {
      sol.status = SdpStatus::unbounded;
      sol.message = "objective diverges to −∞";
      return sol;
    }
    if (it == opt.max_iterations) break;

    std::vector<Eigen::MatrixXcd> Zi(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      Eigen::LLT<Eigen::MatrixXcd> llt(Z[b]);
      if (llt.info() != Eigen::Success) return stalled(SdpStatus::numerical_error, "slack lost definiteness");
      Zi[b] = llt.solve(Eigen::MatrixXcd::Identity(Z[b].rows(), Z[b].cols()));
    }
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::MatrixXd H = engine->schur(X, Zi);
    H = 0.5 * (H + H.transpose()).eval();
    const auto t1 = std::chrono::steady_clock::now();
    detail::SchurSolver ldlt(H);
    if (!ldlt.ok()) return stalled(SdpStatus::numerical_error, "Schur complement factorization failed");
    if (opt.verbose)
      std::fprintf(stderr, "    schur %.2fs  factor %.2fs\n", std::chrono::duration<double>(t1 - t0).count(),
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count());

    auto direction = [&](double sigma, const std::vector<Eigen::MatrixXcd>* dXa, const std::vector<Eigen::MatrixXcd>* dZa,
                         Eigen::VectorXd& dy, std::vector<Eigen::MatrixXcd>& dX, std::vector<Eigen::MatrixXcd>& dZ) {
      std::vector<Eigen::MatrixXcd> G(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        G[b] = sigma * mu * Zi[b] - X[b] - X[b] * Rd[b] * Zi[b];
        if (dXa) G[b] -= (*dXa)[b] * (*dZa)[b] * Zi[b];
      }
      dy = ldlt.solve(engine->adjoint(G) - rp);
      dX.resize(nb);
      dZ.resize(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        dZ[b] = Rd[b] + p.block_value(static_cast<int>(b), dy, false);
        Eigen::MatrixXcd corr = X[b] * dZ[b] * Zi[b];
        if (dXa) corr += (*dXa)[b] * (*dZa)[b] * Zi[b];
        dX[b] = sigma * mu * Zi[b] - X[b] - detail::herm(corr);
      }
    };
    auto steps = [&](const std::vector<Eigen::MatrixXcd>& dX, const std::vector<Eigen::MatrixXcd>& dZ) {
      double ap = 1.0 / opt.step, ad = 1.0 / opt.step;
      for (std::size_t b = 0; b < nb; ++b) {
        ap = std::min(ap, detail::max_step(X[b], dX[b]));
        ad = std::min(ad, detail::max_step(Z[b], dZ[b]));
      }
      return std::pair{std::min(1.0, opt.step * ap), std::min(1.0, opt.step * ad)};
    };

    Eigen::VectorXd dy;
    std::vector<Eigen::MatrixXcd> dX, dZ;
    direction(0.0, nullptr, nullptr, dy, dX, dZ);
    auto [ap, ad] = steps(dX, dZ);
    double mu_aff = 0.0;
    for (std::size_t b = 0; b < nb; ++b)
      mu_aff += ((X[b] + ap * dX[b]).cwiseProduct((Z[b] + ad * dZ[b]).conjugate())).sum().real();
    mu_aff /= total;
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);
    const auto dXa = dX, dZa = dZ;
    direction(sigma, &dXa, &dZa, dy, dX, dZ);
    std::tie(ap, ad) = steps(dX, dZ);
    if (!(ap > 1e-12) || !(ad > 1e-12)) return stalled(SdpStatus::numerical_error, "step length collapsed");
    for (std::size_t b = 0; b < nb; ++b) {
      X[b] = detail::herm(X[b] + ap * dX[b]);
      Z[b] = detail::herm(Z[b] + ad * dZ[b]);
    }
    y += ad * dy;
  }
  return stalled(SdpStatus::max_iterations, "iteration limit reached");
}

}  // namespace vfharm
