// vfharm: epsilon sweeps, controller synthesis, PMSM simulation and equilibrium export.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "vfharm/io.hpp"
#include "vfharm/pmsm.hpp"

using namespace vfharm;
namespace fs = std::filesystem;

namespace {

struct Flags {
  std::string config, out = ".";
  int order = -1;
  unsigned seed = 1;
  bool no_mitigation = false;
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Infeasible: return 2;
    case ErrorKind::MissingArtifact: return 3;
    case ErrorKind::FixedPointDiverged:
    case ErrorKind::IntegrationBlewUp:
    case ErrorKind::SolverFailure:
    case ErrorKind::QuadratureFailure: return 4;
    default: return 1;
  }
}

struct Config {
  json root;
  fs::path dir;

  const json& section(const char* name) const {
    if (!root.contains(name)) raise(ErrorKind::ConfigError, std::string("config has no '") + name + "' section");
    return root.at(name);
  }
  fs::path resolve(const std::string& p) const { return fs::path(p).is_absolute() ? fs::path(p) : dir / p; }
};

Config load_config(const Flags& f) {
  if (f.config.empty()) raise(ErrorKind::ConfigError, "--config is required");
  Config c{read_json_file(f.config), fs::path(f.config).parent_path()};
  check_keys(c.root, {"schema", "profile", "epsilon", "model", "synthesis", "scenario", "equilibrium"}, "config");
  if (get_or<int>(c.root, "schema", 1) != 1) raise(ErrorKind::ConfigError, "unsupported config schema");
  return c;
}

fs::path out_path(const Flags& f, const std::string& name) {
  fs::create_directories(f.out);
  return fs::path(f.out) / name;
}

void write_csv_file(const fs::path& p, const CsvTable& t) {
  std::ofstream os(p);
  if (!os) raise(ErrorKind::ConfigError, "cannot write " + p.string());
  write_csv(os, t);
}

PmsmParams params_from_json(const json& j) {
  PmsmParams P;
  if (j.is_null()) return P;
  check_keys(j, {"r", "L", "psi_f", "J", "B_f", "p"}, "params");
  P.r = get_or(j, "r", P.r);
  P.L = get_or(j, "L", P.L);
  P.psi_f = get_or(j, "psi_f", P.psi_f);
  P.J = get_or(j, "J", P.J);
  P.B_f = get_or(j, "B_f", P.B_f);
  P.p = get_or(j, "p", P.p);
  P.validate();
  return P;
}

// { "W0": 1.0, "ripple": [{"k": 2, "re": 0.5, "im": 0.0}] }
std::map<int, cdouble> load_from_json(const json& j) {
  check_keys(j, {"W0", "ripple"}, "load");
  std::map<int, cdouble> W{{0, get_or(j, "W0", 0.0)}};
  for (const auto& r : j.value("ripple", json::array())) {
    check_keys(r, {"k", "re", "im"}, "ripple");
    const int k = r.at("k").get<int>();
    if (k <= 0) raise(ErrorKind::ConfigError, "ripple harmonics must be positive");
    const cdouble w(get_or(r, "re", 0.0), get_or(r, "im", 0.0));
    W[k] = w;
    W[-k] = std::conj(w);
  }
  return W;
}

int cmd_epsilon(const Flags& f) {
  const auto cfg = load_config(f);
  const auto phase = phase_from_json(cfg.section("profile"));
  const json e = cfg.root.value("epsilon", json::object());
  check_keys(e, {"t_start", "t_end", "steps", "samples"}, "epsilon");
  const double t0 = get_or(e, "t_start", phase.t_min()), t1 = get_or(e, "t_end", phase.t_max());
  const int steps = get_or(e, "steps", 100), samples = get_or(e, "samples", 10000);
  if (steps < 1 || !(t1 >= t0)) raise(ErrorKind::ConfigError, "epsilon: need t_end >= t_start and steps >= 1");
  const PseudoPeriodEvaluator ev{phase};
  CsvTable t{{"t", "omega", "theta", "T", "eps", "omega_dot", "rate"}, {}};
  for (int i = 0; i <= steps; ++i) {
    const double tt = t0 + (t1 - t0) * i / steps;
    double T = NAN, eps = NAN;
    try {
      T = pseudo_period(ev, tt).T;
      eps = epsilon_criterion(ev, tt, samples);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::InsufficientHistory) throw;
    }
    const double w = phase.omega(tt), wd = phase.omega_dot(tt);
    t.rows.push_back({tt, w, phase.theta(tt), T, eps, wd, wd / w});
  }
  const auto p = out_path(f, "epsilon.csv");
  write_csv_file(p, t);
  std::printf("wrote %zu rows to %s\n", t.rows.size(), p.string().c_str());
  return 0;
}

int cmd_synthesize(const Flags& f) {
  const auto cfg = load_config(f);
  const json& model = cfg.section("model");
  const json s = cfg.root.value("synthesis", json::object());
  check_keys(model, {"kind", "params", "omega_min", "omega_max", "a0", "a1", "b0", "b1"}, "model");
  check_keys(s, {"order", "band", "q_weight", "r_weight", "gain_band", "mitigation", "harmonics", "q_row", "gain_file"},
             "synthesis");
  const std::string kind = get_or<std::string>(model, "kind", "pmsm");
  const double wmin = get_or(model, "omega_min", 10.0), wmax = get_or(model, "omega_max", 200.0);
  const int N = f.order >= 0 ? f.order : get_or(s, "order", 8);
  const auto t_start = std::chrono::steady_clock::now();

  GainFile gf;
  gf.N = N;
  gf.omega_min = wmin;
  gf.omega_max = wmax;
  SynthesisResult res;
  if (kind == "pmsm") {
    PmsmDesignOptions o;
    o.N = N;
    o.omega_min = wmin;
    o.omega_max = wmax;
    o.q_weight = get_or(s, "q_weight", o.q_weight);
    o.r_weight = get_or(s, "r_weight", o.r_weight);
    o.gain_band = get_or(s, "gain_band", o.gain_band);
    o.synthesis.band = get_or(s, "band", std::min(o.synthesis.band, 2 * N));
    o.output.mitigation = get_or(s, "mitigation", true) && !f.no_mitigation;
    o.output.harmonics = get_or(s, "harmonics", o.output.harmonics);
    o.output.q_row = get_or(s, "q_row", false);
    const auto d = design_pmsm_controller(params_from_json(model.value("params", json())), o);
    res = d.synthesis;
    gf.K = d.controller.K;
    gf.C = d.controller.C;
    gf.q = d.controller.q();
    gf.mitigation = o.output.mitigation;
  } else if (kind == "scalar") {
    // ẋ = (a0 + ω a1)x + (b0 + ω b1)u
    auto sc = [](double v) { return scalar_symbol({{0, v}}); };
    AfmLppSystem sys(sc(get_or(model, "a0", -1.0)), sc(get_or(model, "a1", 0.0)), sc(get_or(model, "b0", 1.0)),
                     sc(get_or(model, "b1", 0.0)), N, wmin, wmax);
    const auto aug = augment_with_forwarding(sys, {}, {}, {});
    res = synthesize_state_feedback(aug, sc(get_or(s, "q_weight", 1.0)), sc(get_or(s, "r_weight", 1.0)));
    gf.K = pointwise_gain(res.S_symbol, res.Y_symbol, 0);
    gf.mitigation = false;
  } else {
    raise(ErrorKind::ConfigError, "unknown model kind '" + kind + "'");
  }
  gf.cost = res.cost;
  gf.gamma = res.gamma;
  gf.vertex_max_eig = res.vertex_max_eig;
  gf.S = res.S_symbol;
  gf.Y = res.Y_symbol;
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  const auto p = out_path(f, get_or<std::string>(s, "gain_file", "gain.json"));
  write_text_file(p.string(), to_json(gf).dump(1));
  std::printf("cost %.6g\n", res.cost);
  for (std::size_t v = 0; v < res.omegas.size(); ++v)
    std::printf("vertex omega=%g max eigenvalue %.6g\n", res.omegas[v], res.vertex_max_eig[v]);
  std::printf("sdp iterations %d%s\n", res.solution.iterations, res.solution.reduced_accuracy ? " (reduced accuracy)" : "");
  std::printf("wall time %.2f s\n", wall);
  std::printf("wrote %s\n", p.string().c_str());
  return 0;
}

int cmd_simulate(const Flags& f) {
  const auto cfg = load_config(f);
  const json& s = cfg.section("scenario");
  check_keys(s,
             {"params", "gain_file", "ablation_gain_file", "t_end", "dt", "record_every", "schedule", "load", "load_known",
              "K_eq", "theta0", "v_every", "k_max", "spectrum_every", "random_start"},
             "scenario");
  const std::string key = f.no_mitigation ? "ablation_gain_file" : "gain_file";
  if (!s.contains(key)) raise(ErrorKind::MissingArtifact, "scenario." + key + " is not set");
  const auto gf = gain_file_from_json(read_json_file(cfg.resolve(s.at(key).get<std::string>()).string(), ErrorKind::MissingArtifact));
  const PmsmParams P = params_from_json(s.value("params", json()));

  PmsmScenario sc;
  sc.t_end = get_or(s, "t_end", sc.t_end);
  sc.dt = get_or(s, "dt", sc.dt);
  sc.record_every = get_or(s, "record_every", 5);
  sc.K_eq = get_or(s, "K_eq", sc.K_eq);
  sc.theta0 = get_or(s, "theta0", 0.0);
  if (s.contains("load")) sc.W = load_from_json(s.at("load"));
  sc.W_known = s.contains("load_known") ? load_from_json(s.at("load_known")) : sc.W;
  if (s.contains("schedule")) {
    sc.schedule.clear();
    for (const auto& st : s.at("schedule")) {
      check_keys(st, {"t", "omega_ref0"}, "schedule entry");
      sc.schedule.push_back({st.at("t").get<double>(), st.at("omega_ref0").get<double>()});
    }
  }
  const PmsmController ctl{gf.K, gf.C};
  const int q = ctl.q();
  const Eigen::MatrixXcd Pm = lyapunov_matrix(gf.S, gf.N);
  if (s.contains("random_start")) {
    // offset along a seeded random direction at a fraction of L_max
    const double frac = s.at("random_start").get<double>();
    std::mt19937 rng(f.seed);
    std::normal_distribution<double> g;
    Eigen::VectorXd dir(4 + q);
    for (int i = 0; i < dir.size(); ++i) dir(i) = g(rng);
    const double L = lyapunov_level_max(gf.S, sc.schedule.front().omega_ref0, gf.omega_min, gf.omega_max);
    const Eigen::VectorXd e = offset_at_level(Pm, gf.N, dir, frac * L);
    sc.dx0 = e.head<4>();
    sc.z0 = e.tail(q);
  }
  const auto tr = simulate_closed_loop(P, ctl, sc);

  const int v_every = get_or(s, "v_every", 10);
  std::vector<double> V(tr.size(), NAN), Lm(tr.size(), NAN);
  double worst_v = 0.0;
  try {
    const auto lt = lyapunov_trace(tr, Pm, gf.N, gf.S, gf.omega_min, gf.omega_max, v_every);
    std::size_t c = 0;
    for (std::size_t i = 0; i < tr.size() && c < lt.t.size(); ++i)
      if (tr.t[i] == lt.t[c]) {
        V[i] = lt.V[c];
        Lm[i] = lt.L_max[c];
        worst_v = std::max(worst_v, lt.V[c] / lt.L_max[c]);
        ++c;
      }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::WindowUnavailable) throw;
  }

  CsvTable trace{{"t", "i_a", "i_b", "i_c", "i_d", "i_q", "omega_m", "v_a", "v_b", "v_c", "V", "L_max"}, {}};
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto dq = tr.i_dq(i, P.p);
    trace.rows.push_back({tr.t[i], tr.x(0, i), tr.x(1, i), tr.x(2, i), dq(0), dq(1), tr.x(3, i), tr.u(0, i), tr.u(1, i),
                          tr.u(2, i), V[i], Lm[i]});
  }
  const auto tp = out_path(f, "trace.csv");
  write_csv_file(tp, trace);

  const int k_max = get_or(s, "k_max", 10);
  const auto sp = harmonic_spectrum(tr, P.p, k_max, get_or<std::size_t>(s, "spectrum_every", 100));
  CsvTable spec{{"t"}, {}};
  for (const auto& n : sp.names)
    for (int k = 0; k <= k_max; ++k) spec.header.push_back(n + "_" + std::to_string(k));
  for (std::size_t r = 0; r < sp.t.size(); ++r) {
    std::vector<double> row{sp.t[r]};
    for (const auto& m : sp.magnitude)
      for (int k = 0; k <= k_max; ++k) row.push_back(m(static_cast<Eigen::Index>(r), k));
    spec.rows.push_back(std::move(row));
  }
  const auto spp = out_path(f, "spectra.csv");
  write_csv_file(spp, spec);

  std::vector<int> targeted{0};
  for (const auto& [k, w] : sc.W)
    if (k > 0) {
      if (k != P.p) targeted.push_back(std::abs(P.p - k));
      targeted.push_back(P.p + k);
    }
  std::sort(targeted.begin(), targeted.end());
  targeted.erase(std::unique(targeted.begin(), targeted.end()), targeted.end());
  const auto m = mitigation_summary(tr, P.p, targeted);
  std::printf("speed tracking error %.4g\n", m.speed_error);
  std::printf("I_d0 / I_q0 %.4g\n", m.id0_ratio);
  for (const auto& [k, r] : m.harmonic_ratio) std::printf("|I_a,%d| / |I_a,%d| %.4g\n", k, P.p, r);
  std::printf("max V / L_max %.4g\n", worst_v);
  std::printf("wrote %s and %s\n", tp.string().c_str(), spp.string().c_str());
  return 0;
}

int cmd_equilibrium(const Flags& f) {
  const auto cfg = load_config(f);
  const json& e = cfg.section("equilibrium");
  check_keys(e, {"params", "omega_ref0", "load", "K_eq", "tol", "samples"}, "equilibrium");
  const PmsmParams P = params_from_json(e.value("params", json()));
  const auto W = e.contains("load") ? load_from_json(e.at("load")) : ripple(1.0);
  const auto eq = equilibrium_fixed_point(P, e.at("omega_ref0").get<double>(), W, get_or(e, "K_eq", 4), get_or(e, "tol", 1e-10));
  std::printf("%4s %14s %14s %14s\n", "k", "Re Omega_k", "Im Omega_k", "|Omega_k|");
  for (const auto& [k, c] : eq.Omega)
    if (std::abs(c) > 0.0) std::printf("%4d %14.8g %14.8g %14.8g\n", k, c.real(), c.imag(), std::abs(c));
  std::printf("I_q0 %.8g\nresidual %.3g\niterations %d\n", eq.Iq0, eq.residual, eq.iterations);

  const int n = get_or(e, "samples", 360);
  CsvTable t{{"theta", "omega_ref", "i_a", "i_b", "i_c", "v_d", "v_q", "v_a", "v_b", "v_c"}, {}};
  for (int i = 0; i < n; ++i) {
    const double th = two_pi * i / n;
    const Vec3 ia = eq.i_abc(th), va = eq.v_abc(th);
    const auto vdq = eq.v_dq(th);
    t.rows.push_back({th, eq.omega_ref(th), ia(0), ia(1), ia(2), vdq(0), vdq(1), va(0), va(1), va(2)});
  }
  const auto p = out_path(f, "reference.csv");
  write_csv_file(p, t);
  std::printf("wrote %s\n", p.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"harmonic-domain modeling and control for variable-frequency systems"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "JSON config file");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--order", f.order, "harmonic truncation order N");
  app.add_option("--seed", f.seed, "seed for randomized initial states");
  app.add_flag("--no-mitigation", f.no_mitigation, "drop the oscillator rows / use the ablation gain");
  app.fallthrough();
  auto* eps = app.add_subcommand("epsilon", "PV-validity criterion along a frequency profile");
  auto* syn = app.add_subcommand("synthesize", "vertex state-feedback synthesis");
  auto* sim = app.add_subcommand("simulate", "closed-loop PMSM simulation");
  auto* equ = app.add_subcommand("equilibrium", "PMSM harmonic equilibrium");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    if (*eps) return cmd_epsilon(f);
    if (*syn) return cmd_synthesize(f);
    if (*sim) return cmd_simulate(f);
    if (*equ) return cmd_equilibrium(f);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
