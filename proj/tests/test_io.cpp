#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "vfharm/io.hpp"

using namespace vfharm;

TEST_CASE("symbol and gain json roundtrip", "[io]") {
  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  Symbol s;
  for (int h = -3; h <= 3; ++h) {
    Eigen::MatrixXcd m(2, 3);
    for (int i = 0; i < m.size(); ++i) m(i) = cdouble(g(rng), g(rng));
    s[h] = m;
  }
  const Symbol back = symbol_from_json(json::parse(symbol_to_json(s).dump()));
  REQUIRE(back.size() == s.size());
  for (const auto& [h, c] : s) CHECK(back.at(h) == c);

  PeriodicGain k = pointwise_gain(constant_symbol(Eigen::MatrixXd::Identity(3, 3)), s, 2);
  GainFile f;
  f.N = 4;
  f.q = 1;
  f.cost = 1.25;
  f.vertex_max_eig = {-1.0, -0.5};
  f.K = k;
  f.S = constant_symbol(Eigen::MatrixXd::Identity(3, 3));
  f.Y = s;
  const GainFile r = gain_file_from_json(json::parse(to_json(f).dump()));
  CHECK(r.N == 4);
  CHECK(r.cost == 1.25);
  CHECK(r.vertex_max_eig == f.vertex_max_eig);
  CHECK((r.K.evaluate(0.3) - k.evaluate(0.3)).norm() == 0.0);

  json bad = symbol_to_json(s);
  bad.push_back(bad[0]);
  CHECK_THROWS_AS(symbol_from_json(bad), Error);
  CHECK_THROWS_AS(gain_file_from_json(json{{"schema", 1}}), Error);
}

TEST_CASE("profile config", "[io]") {
  const auto ramp = profile_from_json(json::parse(R"({"kind": "ramp", "omega0": 50, "a": 5})"));
  CHECK(ramp.omega(2.0) == 60.0);
  const auto back = profile_from_json(profile_to_json(ramp));
  CHECK(back.omega(3.7) == ramp.omega(3.7));
  const auto ph = phase_from_json(json::parse(R"({"kind": "constant", "omega0": 3, "domain": [0, 10]})"));
  CHECK(ph.theta(2.0) == Catch::Approx(6.0));
  CHECK_THROWS_AS(profile_from_json(json::parse(R"({"kind": "ramp", "omega0": 50, "slope": 5})")), Error);
  CHECK_THROWS_AS(profile_from_json(json::parse(R"({"kind": "spiral"})")), Error);
  CHECK_THROWS_AS(phase_from_json(json::parse(R"({"kind": "constant", "omega0": 3})")), Error);
}

TEST_CASE("csv roundtrip is lossless", "[io]") {
  std::mt19937 rng(9);
  std::normal_distribution<double> g;
  CsvTable t{{"t", "x", "y"}, {}};
  for (int i = 0; i < 50; ++i) t.rows.push_back({i * 0.1, g(rng), std::exp(g(rng) * 30)});
  t.rows.push_back({1.0, NAN, -0.0});
  std::stringstream ss;
  write_csv(ss, t);
  const auto r = read_csv(ss);
  REQUIRE(r.header == t.header);
  REQUIRE(r.rows.size() == t.rows.size());
  for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) CHECK(r.rows[i] == t.rows[i]);
  CHECK(std::isnan(r.rows.back()[1]));
  CHECK(r.column("y") == 2);
  CHECK_THROWS_AS(r.column("z"), Error);
}
