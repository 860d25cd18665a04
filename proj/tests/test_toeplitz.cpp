#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "vfharm/toeplitz.hpp"
#include "test_support.hpp"

using namespace vfharm;
using std::numbers::pi;

namespace {

double max_abs(const Eigen::MatrixXcd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

Symbol random_symbol(std::mt19937& rng, int n, int m, int band) {
  std::normal_distribution<double> g;
  Symbol s;
  for (int h = -band; h <= band; ++h) {
    Eigen::MatrixXcd c(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) c(i, j) = cdouble(g(rng), g(rng));
    s[h] = c;
  }
  return s;
}

Eigen::MatrixXcd rows_of(const Eigen::MatrixXcd& m, const std::vector<int>& rows) {
  Eigen::MatrixXcd out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

TEST_CASE("toeplitz realization", "[toeplitz]") {
  const int N = 6, p = 4;
  auto S = toeplitz_from_symbol(scalar_symbol(sin_coeffs(p)), N);
  const auto& M = S.matrix();
  int nonzero = 0;
  for (int r = 0; r < M.rows(); ++r)
    for (int c = 0; c < M.cols(); ++c) {
      if (M(r, c) == 0.0) continue;
      ++nonzero;
      if (r - c == p) CHECK(std::abs(M(r, c) - cdouble(0, -0.5)) < 1e-15);
      else if (r - c == -p) CHECK(std::abs(M(r, c) - cdouble(0, 0.5)) < 1e-15);
      else FAIL("entry off the two diagonals");
    }
  CHECK(nonzero == 2 * (2 * N + 1 - p));

  auto Id = identity_operator(3, 4);
  CHECK(max_abs(Id.matrix() - Eigen::MatrixXcd::Identity(27, 27)) == 0.0);

  auto C = toeplitz_from_symbol(scalar_symbol(cos_coeffs(1)), 5);
  CHECK(C.is_hermitian());
  CHECK(symbol_is_hermitian(C.symbol()));
  for (int k = -4; k <= 5; ++k) CHECK(C.matrix()(k + 5, k - 1 + 5) == cdouble(0.5));

  CHECK_THROWS_AS(toeplitz_from_symbol(scalar_symbol(cos_coeffs(9)), 4), Error);
}

TEST_CASE("toeplitz products", "[toeplitz]") {
  const int N = 8;
  auto S = toeplitz_from_symbol(scalar_symbol(sin_coeffs(1)), N);
  auto C = toeplitz_from_symbol(scalar_symbol(cos_coeffs(1)), N);
  auto P = toeplitz_product(S, C, ProductMode::oversampled);
  auto ref = toeplitz_from_symbol(scalar_symbol(sin_coeffs(2, 0.5)), N);
  CHECK(max_abs(P.matrix() - ref.matrix()) < 1e-15);

  auto A = toeplitz_from_symbol(scalar_symbol(cos_coeffs(3, 2.0, 0.4)), N);
  CHECK(max_abs(toeplitz_product(A, identity_operator(1, N), ProductMode::truncated).matrix() - A.matrix()) == 0.0);

  // truncated and oversampled agree on rows whose stencil stays inside the truncation
  std::mt19937 rng(11);
  auto X = toeplitz_from_symbol(random_symbol(rng, 2, 3, 2), N);
  auto Y = toeplitz_from_symbol(random_symbol(rng, 3, 2, 3), N);
  auto tr = toeplitz_product(X, Y, ProductMode::truncated).matrix();
  auto ov = toeplitz_product(X, Y, ProductMode::oversampled).matrix();
  const auto rows = central_rows(2, N, 2);
  CHECK(max_abs(rows_of(tr, rows) - rows_of(ov, rows)) < 1e-12);
  CHECK(max_abs(tr - ov) > 1e-3);
  CHECK_THROWS_AS(toeplitz_product(X, X, ProductMode::truncated), Error);
}

TEST_CASE("operator norm", "[toeplitz]") {
  CHECK(operator_norm(identity_operator(2, 3)) == Catch::Approx(1.0));
  const double s = operator_norm(toeplitz_from_symbol(scalar_symbol(sin_coeffs(1)), 20));
  CHECK(s > 0.99);
  CHECK(s <= 1.0 + 1e-15);
  auto A = toeplitz_from_symbol(scalar_symbol(cos_coeffs(2, 1.0, 0.3)), 6);
  CHECK(operator_norm(cdouble(-2.5, 1.0) * A) == Catch::Approx(std::abs(cdouble(-2.5, 1.0)) * operator_norm(A)));
  double prev = 0.0;
  for (int N : {2, 4, 8, 16}) {
    const double v = operator_norm(toeplitz_from_symbol(scalar_symbol(sin_coeffs(1)), N));
    CHECK(v >= prev - 1e-15);
    prev = v;
  }
}

TEST_CASE("frequency operator", "[toeplitz]") {
  const int N = 20;
  auto G = g_operator(7.0, scalar_symbol({{0, 7.0}}), N);
  CHECK(max_abs(G.matrix() - Eigen::MatrixXcd::Identity(41, 41)) < 1e-14);

  auto ripple = scalar_symbol(cos_coeffs(1, 0.01 * 30.0));
  ripple[0] = Eigen::MatrixXcd::Constant(1, 1, 30.0);
  auto Gr = g_operator(30.0, ripple, N);
  auto Cm = toeplitz_from_symbol(scalar_symbol(cos_coeffs(1)), N).matrix();
  const Eigen::MatrixXcd first = Eigen::MatrixXcd::Identity(41, 41) - 0.01 * Cm;
  CHECK(max_abs(Gr.matrix() - first) < 1.5e-4);
  CHECK(max_abs(Gr.matrix() - (first + 1e-4 * Cm * Cm)) < 2e-6);

  // commutes with scalar-symbol operators away from the truncation edge
  std::mt19937 rng(5);
  auto T = toeplitz_from_symbol(random_symbol(rng, 1, 1, 3), N).matrix();
  const Eigen::MatrixXcd comm = Gr.matrix() * T - T * Gr.matrix();
  CHECK(max_abs(rows_of(comm, central_rows(1, N, 15)).middleCols(15, 11)) < 1e-10);

  CHECK_THROWS_AS(g_operator(1.0, scalar_symbol({{0, 1.0}, {1, 0.5}, {-1, 0.5}}), 40, 1, 1e3), Error);
}

TEST_CASE("deviation operator", "[toeplitz]") {
  PseudoPeriodEvaluator c{build_phase_function(FrequencyProfile::constant(40.0), 0.0, {0.0, 3.0})};
  CHECK(max_abs(delta_omega_operator(c, 1.0, 5).matrix()) < 1e-12);

  PseudoPeriodEvaluator r{build_phase_function(FrequencyProfile::ramp(50.0, 5.0), 0.0, {-9.0, 20.0})};
  const double eps = epsilon_criterion(r, 0.0);
  double prev = 0.0;
  for (int N : {5, 10, 20, 30}) {
    const double v = operator_norm(delta_omega_operator(r, 0.0, N));
    CHECK(v <= eps * (1.0 + 1e-9));
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
  // δ is a sawtooth in phase; the largest eigenvalue of the order-30 sawtooth Toeplitz matrix is 0.97782·sup
  CHECK(prev / eps == Catch::Approx(0.9778210723802605).margin(2e-3));
  CHECK(operator_norm(delta_omega_operator(r, 0.0, 60)) / eps == Catch::Approx(0.9879792234443423).margin(2e-3));

  // Δ_ω = ω(t)𝓣^{-1}(ω) − I on a phase-periodic frequency, compared on the central band of an oversized inverse
  PseudoPeriodEvaluator pp{build_phase_function(test_support::phase_periodic_profile(20.0, 0.2, 3.0, 2e-5), 0.0, {0.0, 3.0})};
  const int N = 6, M = 30;
  auto D = delta_omega_operator(pp, 2.0, N).matrix();
  auto G = g_operator(pp, 2.0, M).matrix();
  Eigen::MatrixXcd Gc = G.block(M - N, M - N, 2 * N + 1, 2 * N + 1) - Eigen::MatrixXcd::Identity(2 * N + 1, 2 * N + 1);
  CHECK(max_abs(D - Gc) < 1e-8);
}

TEST_CASE("average trace", "[toeplitz]") {
  CHECK(average_trace(identity_operator(3, 4)) == Catch::Approx(3.0));
  CHECK(std::abs(average_trace(toeplitz_from_symbol(scalar_symbol(cos_coeffs(1)), 4))) < 1e-15);
  auto s = scalar_symbol(cos_coeffs(1));
  s[0] = Eigen::MatrixXcd::Constant(1, 1, 2.0);
  CHECK(average_trace(toeplitz_from_symbol(s, 4)) == Catch::Approx(2.0));
  CHECK_THROWS_AS(average_trace(toeplitz_from_symbol(scalar_symbol(sin_coeffs(1, 1.0, 0.3)), 3) +
                                toeplitz_from_symbol(scalar_symbol({{1, 1.0}}), 3)),
                  Error);
}

TEST_CASE("toeplitz invariants", "[toeplitz][property]") {
  std::mt19937 rng(2024);
  for (int rep = 0; rep < 10; ++rep) {
    const int N = 5, B = 1 + rep % 4;
    auto s = random_symbol(rng, 2, 3, B);
    auto A = toeplitz_from_symbol(s, N);
    const int K = 2 * N + 1;
    // constant along block diagonals
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = -N + 1; k <= N; ++k)
          for (int l = -N + 1; l <= N; ++l)
            CHECK(A.matrix()(i * K + k + N, j * K + l + N) == A.matrix()(i * K + k - 1 + N, j * K + l - 1 + N));
    // adjoint of the realization equals realization of the pointwise adjoint
    CHECK(max_abs(A.adjoint().matrix() - toeplitz_from_symbol(symbol_adjoint(s), N).matrix()) == 0.0);
    // oversampled product equals the realization of the convolved symbol
    auto s2 = random_symbol(rng, 3, 2, 2 * N - B);
    auto P = toeplitz_product(A, toeplitz_from_symbol(s2, N), ProductMode::oversampled);
    CHECK(max_abs(P.matrix() - toeplitz_from_symbol(symbol_product(s, s2), N).matrix()) < 1e-14);
  }
  auto Nm = harmonic_derivative(3, 4).matrix();
  CHECK(max_abs(Nm.adjoint() + Nm) == 0.0);

  for (int rep = 0; rep < 10; ++rep) {
    const int N = 12;
    auto a = toeplitz_from_symbol(random_symbol(rng, 1, 1, 3), N).matrix();
    auto b = toeplitz_from_symbol(random_symbol(rng, 1, 1, 2), N).matrix();
    const Eigen::MatrixXcd comm = a * b - b * a;
    CHECK(max_abs(rows_of(comm, central_rows(1, N, 3))) < 1e-10);
  }
}

TEST_CASE("sfd of a product is the Toeplitz operator applied to the sfd", "[toeplitz][sfd]") {
  auto ph = build_phase_function(FrequencyProfile::ramp(40.0, 15.0), 0.0, {0.0, 3.0});
  Symbol As;
  add_to_symbol(As, 2, 2, 0, 0, cos_coeffs(1));
  add_to_symbol(As, 2, 2, 0, 1, sin_coeffs(2));
  add_to_symbol(As, 2, 2, 1, 0, cos_coeffs(0));
  add_to_symbol(As, 2, 2, 1, 1, cos_coeffs(1, 0.5));
  auto xs = [&](double t) {
    const double th = ph.theta(t);
    return Eigen::Vector2d(std::sin(th) + 0.2, std::cos(3 * th));
  };
  auto Ax = [&](double t) -> Eigen::VectorXd { return (evaluate_symbol(As, ph.theta(t)) * xs(t).cast<cdouble>()).real(); };
  const int N = 6;
  auto X = sfd_variable(xs, ph, N, 2.0);
  auto AX = sfd_variable(Ax, ph, N, 2.0);
  auto T = toeplitz_from_symbol(As, N);
  CHECK(max_abs(AX.stacked() - T.apply(X.stacked())) < 1e-9);
}
