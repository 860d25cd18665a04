#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "vfharm/sfd.hpp"

using namespace vfharm;
using std::numbers::pi;

namespace {

double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

std::vector<double> grid(double a, double b, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = a + (b - a) * i / (n - 1);
  return g;
}

}  // namespace

TEST_CASE("fixed-frequency sfd", "[sfd]") {
  const double T0 = 0.2, w0 = 2 * pi / T0;
  auto X = sfd_fixed([](double) { return 1.0; }, T0, 4, 1.3);
  CHECK(std::abs(X(0)(0) - 1.0) < 1e-12);
  for (int k = 1; k <= 4; ++k) CHECK(std::abs(X(k)(0)) < 1e-12);

  auto C = sfd_fixed([&](double t) { return std::cos(w0 * t); }, T0, 4, 0.77);
  CHECK(std::abs(C(1)(0) - 0.5) < 1e-10);
  CHECK(std::abs(C(-1)(0) - 0.5) < 1e-10);
  CHECK(std::abs(C(0)(0)) < 1e-10);
  CHECK(std::abs(C(2)(0)) < 1e-10);

  auto S = sfd_fixed([&](double t) { return std::sin(3 * w0 * t) + 0.2; }, T0, 5, 0.41);
  CHECK(std::abs(S(0)(0) - 0.2) < 1e-10);
  CHECK(std::abs(S(3)(0) - cdouble(0, -0.5)) < 1e-10);
  CHECK(std::abs(S(-3)(0) - cdouble(0, 0.5)) < 1e-10);
}

TEST_CASE("variable-frequency sfd", "[sfd]") {
  auto cph = build_phase_function(FrequencyProfile::constant(31.4), 0.3, {0.0, 2.0});
  auto x = [](double t) { return std::exp(-t) * std::sin(40.0 * t) + t * t; };
  auto Xv = sfd_variable(x, cph, 6, 1.2);
  auto Xf = sfd_fixed([&](double t) { return x(t); }, 2 * pi / 31.4, 6, 1.2);
  // the fixed path references phase ω0τ, the variable one θ(τ) = θ0 + ω0τ
  for (int k = -6; k <= 6; ++k) CHECK(std::abs(Xv(k)(0) - Xf(k)(0) * std::polar(1.0, -k * 0.3)) < 1e-10);

  auto rph = build_phase_function(FrequencyProfile::ramp(50.0, 30.0), 0.0, {0.0, 3.0});
  auto X = sfd_variable([&](double t) { return std::cos(rph.theta(t)); }, rph, 5, 2.0);
  CHECK(std::abs(X(1)(0) - 0.5) < 1e-10);
  CHECK(std::abs(X(-1)(0) - 0.5) < 1e-10);
  for (int k : {0, 2, 3, 4, 5}) CHECK(std::abs(X(k)(0)) < 1e-9);

  auto one = sfd_variable([](double) { return 1.0; }, rph, 3, 1.0);
  CHECK(std::abs(one(0)(0) - 1.0) < 1e-12);

  // time and phase integration paths agree
  auto y = [](double t) { return std::cos(7.0 * t) + std::exp(0.3 * t); };
  auto a = sfd_variable(y, rph, 4, 2.5, SfdPath::time);
  auto b = sfd_variable(y, rph, 4, 2.5, SfdPath::phase);
  CHECK(max_abs(a.values - b.values) < 1e-9);
}

TEST_CASE("sfd of vector signals keeps components apart", "[sfd]") {
  auto ph = build_phase_function(FrequencyProfile::ramp(40.0, 10.0), 0.0, {0.0, 2.0});
  auto X = sfd_variable(
      [&](double t) {
        Eigen::Vector2d v(std::cos(ph.theta(t)), 2.0);
        return v;
      },
      ph, 2, 1.5);
  CHECK(X.dim() == 2);
  CHECK(std::abs(X(1)(0) - 0.5) < 1e-10);
  CHECK(std::abs(X(0)(1) - 2.0) < 1e-10);
  CHECK(std::abs(X(1)(1)) < 1e-10);
}

TEST_CASE("sfd linearity and conjugate symmetry", "[sfd][property]") {
  auto ph = build_phase_function(FrequencyProfile::ramp(60.0, 20.0), 0.0, {0.0, 2.0});
  auto x = [](double t) { return std::sin(50.0 * t) * t; };
  auto y = [](double t) { return std::cos(130.0 * t + 0.2) - 0.5; };
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int rep = 0; rep < 5; ++rep) {
    const double al = u(rng), be = u(rng);
    auto lhs = sfd_variable([&](double t) { return al * x(t) + be * y(t); }, ph, 6, 1.7);
    auto X = sfd_variable(x, ph, 6, 1.7), Y = sfd_variable(y, ph, 6, 1.7);
    CHECK(max_abs(lhs.values - (al * X.values + be * Y.values)) < 1e-12);
    CHECK(lhs.conjugate_asymmetry() < 1e-12);
  }
}

TEST_CASE("reconstruction", "[sfd]") {
  auto ph = build_phase_function(FrequencyProfile::ramp(50.0, 20.0), 0.0, {0.0, 3.0});

  SECTION("steady phasors give cos(theta)") {
    PhasorTrajectory tr(ph);
    for (double t : grid(1.0, 1.001, 11)) {
      PhasorSequence X(1, 2, true);
      X(1)(0) = 0.5;
      X(-1)(0) = 0.5;
      tr.t.push_back(t);
      tr.X.push_back(X);
    }
    for (std::size_t i = 0; i < tr.size(); ++i)
      CHECK(std::abs(reconstruct(tr, tr.t[i])(0) - std::cos(ph.theta(tr.t[i]))) < 1e-12);
  }

  SECTION("roundtrip on a band-limited phase-periodic signal") {
    auto x = [&](double t) { return std::sin(ph.theta(t)) + 0.3 * std::cos(2 * ph.theta(t)); };
    for (int N : {2, 5}) {
      auto tr = sfd_trajectory(x, ph, N, grid(1.0, 1.0 + 8e-4, 9));
      for (double t : tr.t) CHECK(std::abs(reconstruct(tr, t)(0) - x(t)) < 1e-6);
    }
  }

  SECTION("fixed-frequency factor") {
    const double w = 25.0, T0 = 2 * pi / w;
    CHECK(pi / w == Catch::Approx(T0 / 2).epsilon(1e-15));
  }

  SECTION("coarse grid is reported") {
    auto y = [](double t) { return std::exp(2.0 * t) * (1.0 + std::sin(9.0 * t)); };
    auto tr = sfd_trajectory(y, ph, 2, grid(1.0, 2.0, 8));
    try {
      (void)reconstruct(tr, tr.t[3]);
      FAIL("expected GridTooCoarse");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::GridTooCoarse);
    }
  }
}

TEST_CASE("coincidence residual", "[sfd]") {
  auto ph = build_phase_function(FrequencyProfile::ramp(50.0, 20.0), 0.0, {0.0, 3.0});
  auto x = [](double t) { return std::exp(-0.5 * t) * std::cos(45.0 * t) + 0.2 * t; };
  auto tr = sfd_trajectory(x, ph, 3, grid(1.0, 1.0 + 20e-4, 21));
  CHECK(coincidence_residual(tr).max < 1e-4);

  PhasorTrajectory flat(ph);
  PhasorSequence X0(1, 2, true);
  X0(1)(0) = cdouble(0.3, 0.1);
  X0(-1)(0) = std::conj(X0(1)(0));
  for (double t : grid(1.0, 1.01, 11)) {
    flat.t.push_back(t);
    flat.X.push_back(X0);
  }
  CHECK(coincidence_residual(flat).max < 1e-10);

  auto bumped = tr;
  for (std::size_t i = 0; i < bumped.size(); ++i) bumped.X[i](1)(0) += bumped.t[i];
  const auto rep = coincidence_residual(tr);
  double d0max = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) d0max = std::max(d0max, detail::fd_derivative(tr, i, 5).norm());
  CHECK(coincidence_residual(bumped).max >= (1.0 - 1e-3) / std::max(1.0, d0max) - rep.max);
}

TEST_CASE("trajectory csv roundtrip is bit-stable", "[sfd][io]") {
  auto ph = build_phase_function(FrequencyProfile::ramp(50.0, 20.0), 0.0, {0.0, 3.0});
  auto tr = sfd_trajectory([](double t) { return std::sin(77.0 * t) / 3.0 + 1.0 / 7.0; }, ph, 3, grid(1.0, 1.01, 6));
  std::stringstream ss;
  write_trajectory_csv(ss, tr);
  auto back = read_trajectory_csv(ss, ph);
  REQUIRE(back.size() == tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) {
    CHECK(back.t[i] == tr.t[i]);
    CHECK((back.X[i].values.array() == tr.X[i].values.array()).all());
  }
}
