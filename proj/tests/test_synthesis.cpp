#include <catch_amalgamated.hpp>

#include <random>

#include "vfharm/synthesis.hpp"

using namespace vfharm;

namespace {

Symbol scalar(double v) { return scalar_symbol({{0, v}}); }

Symbol eye(int n, double v = 1.0) { return constant_symbol(Eigen::MatrixXd::Identity(n, n) * v); }

// 2×2 phase-periodic plant, one input
AfmLppSystem lpp_plant(int N) {
  Symbol A0, A1, B0, B1;
  add_to_symbol(A0, 2, 2, 0, 1, cos_coeffs(0, 1.0));
  add_to_symbol(A0, 2, 2, 1, 0, cos_coeffs(2, 0.6));
  add_to_symbol(A0, 2, 2, 1, 1, cos_coeffs(0, -0.5));
  add_to_symbol(A1, 2, 2, 0, 0, cos_coeffs(0, 0.0));
  add_to_symbol(B0, 2, 1, 1, 0, cos_coeffs(0, 1.0));
  add_to_symbol(B0, 2, 1, 0, 0, sin_coeffs(2, 0.3));
  add_to_symbol(B1, 2, 1, 0, 0, cos_coeffs(0, 0.0));
  return {A0, A1, B0, B1, N, 1.0, 3.0};
}

double toeplitz_spread(const ToeplitzBlockOperator& T) {
  const int K = T.harmonics();
  double spread = 0.0;
  for (int i = 0; i < T.n(); ++i)
    for (int j = 0; j < T.m(); ++j) {
      const Eigen::MatrixXcd b = T.block(i, j);
      for (int r = 1; r < K; ++r)
        for (int c = 1; c < K; ++c) spread = std::max(spread, std::abs(b(r, c) - b(r - 1, c - 1)));
    }
  return spread;
}

}  // namespace

TEST_CASE("real embedding", "[synthesis]") {
  Eigen::MatrixXcd h(1, 1);
  h << 2.0;
  CHECK((complex_to_real_embedding(h) - 2.0 * Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() == 0.0);

  Eigen::Matrix2cd y;
  y << 0.0, cdouble(0, -1), cdouble(0, 1), 0.0;
  Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(complex_to_real_embedding(y)).eigenvalues();
  CHECK(ev(0) == Catch::Approx(-1.0));
  CHECK(ev(1) == Catch::Approx(-1.0));
  CHECK(ev(2) == Catch::Approx(1.0));
  CHECK(ev(3) == Catch::Approx(1.0));

  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  Eigen::MatrixXcd r(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) r(i, j) = cdouble(g(rng), g(rng));
  r = (r + r.adjoint()).eval();
  const Eigen::VectorXd lc = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(r).eigenvalues();
  const Eigen::VectorXd lr = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(complex_to_real_embedding(r)).eigenvalues();
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(lr(2 * i) - lc(i)) < 1e-12);
    CHECK(std::abs(lr(2 * i + 1) - lc(i)) < 1e-12);
  }
  Eigen::MatrixXcd bad = r;
  bad(0, 1) += 1.0;
  CHECK_THROWS_AS(complex_to_real_embedding(bad), Error);
}

TEST_CASE("vertex Lyapunov feasibility", "[synthesis]") {
  auto cert = vertex_lyapunov_feasibility(scalar(-1.0), scalar(0.0), 2.0, 9.0, 2);
  for (double e : cert.vertex_max_eig) CHECK(e < -1e-6);
  CHECK(min_eigenvalue(cert.P.matrix()) >= 1e-6);

  try {
    (void)vertex_lyapunov_feasibility(scalar(1.0), scalar(0.0), 2.0, 9.0, 2);
    FAIL("expected Infeasible");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Infeasible);
  }

  // phase-periodic 2×2 drift, N = 3
  auto sys = lpp_plant(3);
  Symbol Acl = sys.A0().symbol();
  Acl[0](1, 0) -= 2.0;
  Acl[0](1, 1) -= 1.5;
  LyapunovOptions lopt;
  lopt.form = LmiForm::truncated;
  auto c2 = vertex_lyapunov_feasibility(Acl, sys.A1().symbol(), 1.0, 3.0, 3, lopt);
  REQUIRE(c2.vertex_max_eig.size() == 2);
  // affinity in ω: interior values never exceed the vertices
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::MatrixXcd P = c2.P.matrix(), A = toeplitz_from_symbol(Acl, 3).matrix();
  const Eigen::MatrixXcd Nm = harmonic_derivative(2, 3).matrix();
  const double vmax = std::max(c2.vertex_max_eig[0], c2.vertex_max_eig[1]);
  for (int i = 0; i < 50; ++i) {
    const double lam = u(rng), w = lam * 1.0 + (1 - lam) * 3.0;
    const Eigen::MatrixXcd V = A - w * Nm;
    CHECK(max_eigenvalue(P * V + V.adjoint() * P) <= vmax + 1e-9);
  }
}

TEST_CASE("scalar integrator reduces to LQR", "[synthesis]") {
  // ẋ = u, Q = R = 1: P = 1, k = 1; R = 2: k = 1/√2
  AfmLppSystem sys(scalar(0.0), scalar(0.0), scalar(1.0), scalar(0.0), 0, 1.0, 2.0);
  auto aug = augment_with_forwarding(sys, {}, {}, {});
  SynthesisOptions opt;
  opt.gamma = 1e-7;
  opt.sdp = SdpOptions{};  // full accuracy
  auto r1 = synthesize_state_feedback(aug, scalar(1.0), scalar(1.0), opt);
  CHECK(r1.K.matrix()(0, 0).real() == Catch::Approx(1.0).epsilon(1e-4));
  CHECK(r1.cost == Catch::Approx(1.0).epsilon(1e-4));
  CHECK(r1.min_eig_S > 0.0);
  for (double e : r1.vertex_max_eig) CHECK(e <= -r1.gamma * 0.99);

  auto r2 = synthesize_state_feedback(aug, scalar(1.0), scalar(2.0), opt);
  CHECK(r2.K.matrix()(0, 0).real() == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-4));
  CHECK(operator_norm(r2.K) <= operator_norm(r1.K) + 1e-9);

  auto rep = verify_vertex_closed_loop(aug, reconstruct_periodic_gain(r1.K), r1.S_symbol);
  for (double e : rep.vertex_max_eig) CHECK(e < 0.0);
  for (double e : rep.grid_max_eig) CHECK(e < 0.0);
}

TEST_CASE("verification rejects an unstabilized plant", "[synthesis]") {
  AfmLppSystem sys(scalar(1.0), scalar(0.0), scalar(1.0), scalar(0.0), 1, 1.0, 2.0);
  auto aug = augment_with_forwarding(sys, {}, {}, {});
  try {
    PeriodicGain zero;
    zero.rows = zero.cols = 1;
    zero.coeffs[0] = Eigen::MatrixXcd::Zero(1, 1);
    (void)verify_vertex_closed_loop(aug, zero, {});
    FAIL("expected VerificationFailed");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::VerificationFailed);
  }
}

TEST_CASE("synthesis on a phase-periodic plant with integral action", "[synthesis]") {
  const int N = 3;
  auto sys = lpp_plant(N);
  Symbol C;
  add_to_symbol(C, 1, 2, 0, 0, cos_coeffs(0, 1.0));
  auto aug = augment_with_forwarding(sys, constant_symbol(Eigen::MatrixXd::Zero(1, 1)), constant_symbol(Eigen::MatrixXd::Identity(1, 1)), C);
  SynthesisOptions topt;
  topt.form = LmiForm::truncated;
  auto res = synthesize_state_feedback(aug, eye(3), eye(1), topt);
  CHECK(res.stride == 2);
  CHECK(res.min_eig_S > 0.0);
  for (double e : res.vertex_max_eig) CHECK(e <= -0.99 * res.gamma);

  // M ≽ S⁻¹ and Toeplitz decision variables
  const Eigen::MatrixXcd Sinv = res.S.matrix().inverse();
  CHECK(min_eigenvalue(res.M.matrix() - Sinv) > -1e-8 * Sinv.cwiseAbs().maxCoeff());
  CHECK(toeplitz_spread(res.S) < 1e-8);
  CHECK(toeplitz_spread(res.Y) < 1e-8);

  // vertex certificate extends to the interval
  const Eigen::MatrixXcd S = res.S.matrix(), Y = res.Y.matrix(), Nm = aug.Ncal();
  auto xi = [&](double w) {
    const Eigen::MatrixXcd A = aug.A(w) - w * Nm, B = aug.B(w);
    const Eigen::MatrixXcd X = A * S - B * Y;
    return max_eigenvalue(X + X.adjoint());
  };
  const double vmax = std::max(xi(1.0), xi(3.0));
  CHECK(vmax < 0.0);
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const double lam = u(rng);
    CHECK(xi(lam * 1.0 + (1 - lam) * 3.0) <= vmax + 1e-9);
  }

  auto rep = verify_vertex_closed_loop(aug, pointwise_gain(res.S_symbol, res.Y_symbol, 24), res.S_symbol);
  for (double e : rep.vertex_max_eig) CHECK(e < 0.0);
  for (double e : rep.grid_max_eig) CHECK(e < 0.0);

  // phase-domain form: the certificate holds pointwise
  auto ores = synthesize_state_feedback(aug, eye(3), eye(1));
  for (double e : ores.vertex_max_eig) CHECK(e <= -0.99 * ores.gamma);
  auto orep = verify_vertex_closed_loop(aug, pointwise_gain(ores.S_symbol, ores.Y_symbol, 2 * N), ores.S_symbol);
  for (double e : orep.grid_max_eig) CHECK(e < 0.0);

  // dense reference engine reaches the same optimum in both modes
  for (auto form : {LmiForm::truncated, LmiForm::phase_sampled}) {
    SynthesisOptions dopt;
    dopt.backend = "dense";
    dopt.form = form;
    auto dres = synthesize_state_feedback(aug, eye(3), eye(1), dopt);
    CHECK(dres.cost == Catch::Approx(form == LmiForm::truncated ? res.cost : ores.cost).epsilon(1e-6));
  }
}

TEST_CASE("periodic gain reconstruction", "[synthesis]") {
  const int N = 4;
  auto c = toeplitz_from_symbol(constant_symbol(Eigen::MatrixXd::Constant(1, 2, 0.7)), N);
  auto g = reconstruct_periodic_gain(c);
  for (double th : {0.0, 1.0, 4.0}) CHECK((g.evaluate(th) - Eigen::MatrixXd::Constant(1, 2, 0.7)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(g.toeplitz_residual == 0.0);

  Symbol cs;
  add_to_symbol(cs, 1, 1, 0, 0, cos_coeffs(1, 3.0));
  auto gc = reconstruct_periodic_gain(toeplitz_from_symbol(cs, N), -1, 2);
  CHECK(std::abs(gc.coeffs.at(1)(0, 0) - 1.5) < 1e-14);
  CHECK(std::abs(gc.coeffs.at(-1)(0, 0) - 1.5) < 1e-14);
  CHECK(std::abs(gc.evaluate(0.3)(0, 0) - 3.0 * std::cos(0.3)) < 1e-13);

  // roundtrip: K(θ) re-Toeplitzed matches the central band of 𝓚
  auto sys = lpp_plant(N);
  auto aug = augment_with_forwarding(sys, {}, {}, {});
  auto res = synthesize_state_feedback(aug, eye(2), eye(1));
  auto gk = reconstruct_periodic_gain(res.K);
  const Eigen::MatrixXcd back = realize_symbol(gk.coeffs, 1, 2, N);
  const int K = 2 * N + 1;
  for (int j = 0; j < 2; ++j)
    for (int l = -N; l <= N; ++l) CHECK(std::abs(back(N, j * K + l + N) - res.K.matrix()(N, j * K + l + N)) < 1e-6);
  // the truncated 𝓚 is not exactly Toeplitz; its spread is reported, and strict mode raises
  CHECK(reconstruct_periodic_gain(res.K, 2, 2).toeplitz_residual >= 0.0);
  CHECK_THROWS_AS(reconstruct_periodic_gain(res.K, 2, 2, 1e-30, true), Error);

  // pointwise Y(θ)S(θ)⁻¹ agrees with the central row at low harmonics
  auto gp = pointwise_gain(res.S_symbol, res.Y_symbol, N);
  CHECK((gp.coeffs.at(0) - gk.coeffs.at(0)).cwiseAbs().maxCoeff() < 0.05 * gk.coeffs.at(0).cwiseAbs().maxCoeff() + 1e-9);
}
