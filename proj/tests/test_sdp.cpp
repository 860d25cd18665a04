#include <catch_amalgamated.hpp>

#include <random>

#include "vfharm/sdp.hpp"

using namespace vfharm;

namespace {

Eigen::MatrixXcd random_complex(std::mt19937& rng, int r, int c) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = cdouble(g(rng), g(rng));
  return m;
}

Eigen::MatrixXcd random_hermitian(std::mt19937& rng, int s) {
  Eigen::MatrixXcd m = random_complex(rng, s, s);
  return m + m.adjoint();
}

Eigen::MatrixXcd random_pd(std::mt19937& rng, int s) {
  Eigen::MatrixXcd m = random_complex(rng, s, s);
  return m * m.adjoint() + Eigen::MatrixXcd::Identity(s, s);
}

double min_eig(const Eigen::MatrixXcd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly).eigenvalues()(0);
}

// Every term kind on two cosets of N = 3, stride 2.
SdpProblem random_problem(std::mt19937& rng) {
  SdpProblem p;
  const int S = p.add_variable({"S", 2, 2, 4, 2, true});
  const int Y = p.add_variable({"Y", 1, 2, 2, 2, false});
  const int t = p.add_scalar("t");
  for (const auto& c : cosets(3, 2)) {
    const int Kc = c.size(), s = 3 * Kc;
    LmiBlock b;
    b.label = "random";
    b.coset = c;
    b.F0 = 5.0 * Eigen::MatrixXcd::Identity(s, s);
    b.terms.push_back({S, random_complex(rng, s, 2 * Kc), random_complex(rng, s, 2 * Kc), false});
    b.terms.push_back({Y, random_complex(rng, s, Kc), random_complex(rng, s, 2 * Kc), false});
    b.terms.push_back({S, random_complex(rng, s, 2 * Kc), {}, true});
    b.scalars.push_back({t, random_hermitian(rng, s)});
    p.add_block(std::move(b));
  }
  p.add_objective_dc_trace(S, 1.0);
  p.add_objective_scalar(t, 0.5);
  return p;
}

// min t  s.t.  tI − (P A + Aᴴ P) ≽ 0,  P − I ≽ 0,  κI − P ≽ 0, with A the realization of a(θ)
SdpProblem lyapunov_problem(const Symbol& a, int N, int band, double kappa) {
  SdpProblem p;
  const int n = symbol_shape(a).first;
  const int P = p.add_variable({"P", n, n, band, 1, true});
  const int t = p.add_scalar("t");
  const Coset c{N, 1, 0};
  const int K = c.size(), s = n * K;
  const Eigen::MatrixXcd A = realize_on_coset(a, n, n, c), I = Eigen::MatrixXcd::Identity(s, s);
  LmiBlock lyap{"lyap", c, Eigen::MatrixXcd::Zero(s, s), {{P, I, -A.adjoint(), false}}, {{t, I}}};
  LmiBlock lower{"lower", c, -I, {{P, I, {}, true}}, {}};
  LmiBlock upper{"upper", c, kappa * I, {{P, -0.5 * I, I, false}}, {}};
  p.add_block(lyap);
  p.add_block(lower);
  p.add_block(upper);
  p.add_objective_scalar(t, 1.0);
  return p;
}

}  // namespace

TEST_CASE("parametrization reproduces real Hermitian symbols", "[sdp]") {
  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  ToeplitzVariable v{"S", 3, 3, 4, 2, true};
  const auto ps = parametrize(v);
  // 6 for the real symmetric mean, 2·6 for each complex symmetric harmonic 2 and 4
  CHECK(ps.size() == 6 + 12 + 12);
  Eigen::VectorXd y(ps.size());
  for (auto& e : y) e = g(rng);
  const Symbol s = variable_symbol(v, ps, y.data());
  CHECK(symbol_is_hermitian(s));
  for (double th : {0.0, 0.4, 2.2}) CHECK(evaluate_symbol(s, th).imag().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(s.count(1) == 0);

  ToeplitzVariable w{"Y", 2, 3, 2, 1, false};
  CHECK(parametrize(w).size() == 6 + 12 + 12);
  CHECK_THROWS_AS(parametrize({"bad", 2, 3, 0, 1, true}), Error);
}

TEST_CASE("coset restriction splits stride-2 operators", "[sdp]") {
  const int N = 4;
  Symbol a;
  add_to_symbol(a, 2, 2, 0, 1, cos_coeffs(2, 1.0, 0.3));
  add_to_symbol(a, 2, 2, 1, 0, sin_coeffs(4, 2.0));
  add_to_symbol(a, 2, 2, 1, 1, cos_coeffs(0, -1.0));
  const Eigen::MatrixXcd full = realize_symbol(a, 2, 2, N);
  int total = 0;
  for (const auto& c : cosets(N, 2)) {
    CHECK((restrict_to_coset(full, 2, 2, c) - realize_on_coset(a, 2, 2, c)).cwiseAbs().maxCoeff() == 0.0);
    total += c.size();
  }
  CHECK(total == 2 * N + 1);
  const auto c0 = cosets(N, 2)[0], c1 = cosets(N, 2)[1];
  // cross-coset part of the realization vanishes
  const auto r0 = coset_rows(2, c0), r1 = coset_rows(2, c1);
  for (int i : r0)
    for (int j : r1) CHECK(full(i, j) == 0.0);
}

TEST_CASE("structured and dense engines agree", "[sdp]") {
  std::mt19937 rng(11);
  const SdpProblem p = random_problem(rng);
  DenseSdpEngine dense;
  StructuredSdpEngine structured;
  dense.prepare(p);
  structured.prepare(p);

  std::vector<Eigen::MatrixXcd> X, Zi, W;
  for (const auto& b : p.blocks()) {
    X.push_back(random_pd(rng, b.size()));
    Zi.push_back(random_pd(rng, b.size()));
    W.push_back(random_complex(rng, b.size(), b.size()));
  }
  const Eigen::VectorXd gd = dense.adjoint(W), gs = structured.adjoint(W);
  CHECK((gd - gs).cwiseAbs().maxCoeff() < 1e-9 * gd.cwiseAbs().maxCoeff());
  const Eigen::MatrixXd Hd = dense.schur(X, Zi), Hs = structured.schur(X, Zi);
  CHECK((Hd - Hs).cwiseAbs().maxCoeff() < 1e-9 * Hd.cwiseAbs().maxCoeff());
  CHECK((Hs - Hs.transpose()).cwiseAbs().maxCoeff() < 1e-9 * Hs.cwiseAbs().maxCoeff());

  // adjoint identity ⟨𝒜(y), W⟩ = yᵀ𝒜ᵀ(W) for Hermitian W
  Eigen::VectorXd y = Eigen::VectorXd::Random(p.num_params());
  double lhs = 0.0;
  std::vector<Eigen::MatrixXcd> Wh;
  for (std::size_t b = 0; b < W.size(); ++b) {
    Wh.push_back(W[b] + W[b].adjoint());
    lhs += (p.block_value(static_cast<int>(b), y, false).cwiseProduct(Wh[b].conjugate())).sum().real();
  }
  CHECK(lhs == Catch::Approx(y.dot(structured.adjoint(Wh))).epsilon(1e-10));
}

TEST_CASE("scalar problems", "[sdp]") {
  // min y  s.t.  y − 1 ≥ 0
  SdpProblem p;
  const int y = p.add_scalar("y");
  LmiBlock b{"lp", Coset{0, 1, 0}, Eigen::MatrixXcd::Constant(1, 1, -1.0), {}, {{y, Eigen::MatrixXcd::Constant(1, 1, 1.0)}}};
  p.add_block(b);
  p.add_objective_scalar(y, 1.0);
  auto sol = solve_sdp(p);
  REQUIRE(sol.status == SdpStatus::optimal);
  CHECK(sol.y(0) == Catch::Approx(1.0).epsilon(1e-7));

  // y ≥ 1 and −y ≥ 0
  SdpProblem q = p;
  q.add_block({"neg", Coset{0, 1, 0}, Eigen::MatrixXcd::Zero(1, 1), {}, {{y, Eigen::MatrixXcd::Constant(1, 1, -1.0)}}});
  auto bad = solve_sdp(q);
  CHECK(bad.status == SdpStatus::infeasible);
}

TEST_CASE("Toeplitz Lyapunov problem on both backends", "[sdp]") {
  Symbol a;
  add_to_symbol(a, 2, 2, 0, 0, cos_coeffs(0, -2.0));
  add_to_symbol(a, 2, 2, 0, 1, cos_coeffs(1, 1.0));
  add_to_symbol(a, 2, 2, 1, 0, cos_coeffs(0, 0.5));
  add_to_symbol(a, 2, 2, 1, 1, cos_coeffs(0, -3.0));
  add_to_symbol(a, 2, 2, 1, 1, sin_coeffs(1, 0.5));
  const SdpProblem p = lyapunov_problem(a, 3, 2, 50.0);
  DenseSdpEngine dense;
  StructuredSdpEngine structured;
  auto sd = solve_sdp(p, {}, &dense);
  auto ss = solve_sdp(p, {}, &structured);
  REQUIRE(sd.status == SdpStatus::optimal);
  REQUIRE(ss.status == SdpStatus::optimal);
  CHECK(ss.primal_objective < 0.0);
  CHECK(ss.primal_objective == Catch::Approx(sd.primal_objective).epsilon(1e-6));
  for (int b = 0; b < 3; ++b) CHECK(min_eig(p.block_value(b, ss.y)) > -1e-7);

  // unstable drift: no P ≽ I makes the Lyapunov form negative, optimum t* > 0
  Symbol u = a;
  u[0](0, 0) = 1.0;
  auto su = solve_sdp(lyapunov_problem(u, 3, 2, 50.0));
  REQUIRE(su.status == SdpStatus::optimal);
  CHECK(su.primal_objective > 0.0);
}

TEST_CASE("unbounded problems are flagged", "[sdp]") {
  // min y  s.t.  y + 1 ≥ 0 and nothing from above: fine; min −y alone diverges
  SdpProblem p;
  const int y = p.add_scalar("y");
  p.add_block({"lp", Coset{0, 1, 0}, Eigen::MatrixXcd::Constant(1, 1, 1.0), {}, {{y, Eigen::MatrixXcd::Constant(1, 1, 1.0)}}});
  p.add_objective_scalar(y, -1.0);
  CHECK(solve_sdp(p).status == SdpStatus::unbounded);
}

TEST_CASE("backend selection", "[sdp]") {
  CHECK(make_sdp_engine("dense")->name() == "dense");
  CHECK(make_sdp_engine("structured")->name() == "structured");
  CHECK_THROWS_AS(make_sdp_engine("bogus"), Error);
}
