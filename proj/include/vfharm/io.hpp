#pragma once

#include <fstream>
#include <iomanip>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vfharm/phase.hpp"
#include "vfharm/synthesis.hpp"

namespace vfharm {

using json = nlohmann::json;

// Rejects keys outside `allowed` so typos in config files surface early.
inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) raise(ErrorKind::ConfigError, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) raise(ErrorKind::ConfigError, "unknown key '" + k + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    raise(ErrorKind::ConfigError, std::string("bad value for '") + key + "': " + e.what());
  }
}

inline json matrix_to_json(const Eigen::MatrixXcd& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array(), c = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      r.push_back(m(i, k).real());
      c.push_back(m(i, k).imag());
    }
    re.push_back(std::move(r));
    im.push_back(std::move(c));
  }
  return {{"re", re}, {"im", im}};
}

inline Eigen::MatrixXcd matrix_from_json(const json& j) {
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  const auto rows = re.size(), cols = rows ? re.at(0).size() : 0;
  if (im.size() != rows) raise(ErrorKind::ConfigError, "matrix real/imag row count differs");
  Eigen::MatrixXcd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (re.at(i).size() != cols || im.at(i).size() != cols) raise(ErrorKind::ConfigError, "ragged matrix");
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = {re[i][k].get<double>(), im[i][k].get<double>()};
  }
  return m;
}

inline json symbol_to_json(const Symbol& s) {
  json arr = json::array();
  for (const auto& [h, c] : s) arr.push_back({{"h", h}, {"value", matrix_to_json(c)}});
  return arr;
}

inline Symbol symbol_from_json(const json& j) {
  Symbol s;
  for (const auto& e : j) {
    const int h = e.at("h").get<int>();
    if (s.count(h)) raise(ErrorKind::DuplicateHarmonic, "harmonic " + std::to_string(h) + " listed twice");
    s[h] = matrix_from_json(e.at("value"));
  }
  return s;
}

inline json gain_to_json(const PeriodicGain& g) {
  return {{"band", g.band}, {"rows", g.rows}, {"cols", g.cols}, {"coeffs", symbol_to_json(g.coeffs)}};
}

inline PeriodicGain gain_from_json(const json& j) {
  PeriodicGain g;
  g.band = j.at("band").get<int>();
  g.rows = j.at("rows").get<int>();
  g.cols = j.at("cols").get<int>();
  g.coeffs = symbol_from_json(j.at("coeffs"));
  for (const auto& [h, c] : g.coeffs)
    if (c.rows() != g.rows || c.cols() != g.cols) raise(ErrorKind::DimensionMismatch, "gain coefficient shape");
  return g;
}

// What `synthesize` writes and `simulate` reads back.
struct GainFile {
  int N = 0;
  int q = 0;
  bool mitigation = true;
  double cost = 0.0;
  double gamma = 0.0;
  double omega_min = 0.0, omega_max = 0.0;
  std::vector<double> vertex_max_eig;
  PeriodicGain K;
  Symbol C, S, Y;
};

inline json to_json(const GainFile& f) {
  return {{"schema", 1},
          {"N", f.N},
          {"q", f.q},
          {"mitigation", f.mitigation},
          {"cost", f.cost},
          {"gamma", f.gamma},
          {"omega_min", f.omega_min},
          {"omega_max", f.omega_max},
          {"vertex_max_eig", f.vertex_max_eig},
          {"K", gain_to_json(f.K)},
          {"C", symbol_to_json(f.C)},
          {"S", symbol_to_json(f.S)},
          {"Y", symbol_to_json(f.Y)}};
}

inline GainFile gain_file_from_json(const json& j) {
  try {
    if (j.at("schema").get<int>() != 1) raise(ErrorKind::ConfigError, "unsupported gain file schema");
    GainFile f;
    f.N = j.at("N").get<int>();
    f.q = j.at("q").get<int>();
    f.mitigation = j.at("mitigation").get<bool>();
    f.cost = j.at("cost").get<double>();
    f.gamma = j.at("gamma").get<double>();
    f.omega_min = j.at("omega_min").get<double>();
    f.omega_max = j.at("omega_max").get<double>();
    f.vertex_max_eig = j.at("vertex_max_eig").get<std::vector<double>>();
    f.K = gain_from_json(j.at("K"));
    f.C = symbol_from_json(j.at("C"));
    f.S = symbol_from_json(j.at("S"));
    f.Y = symbol_from_json(j.at("Y"));
    return f;
  } catch (const json::exception& e) {
    raise(ErrorKind::ConfigError, std::string("malformed gain file: ") + e.what());
  }
}

inline json read_json_file(const std::string& path, ErrorKind missing = ErrorKind::ConfigError) {
  std::ifstream is(path);
  if (!is) raise(missing, "cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    raise(ErrorKind::ConfigError, path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) raise(ErrorKind::ConfigError, "cannot write " + path);
  os << text;
}

// { "kind": "constant" | "ramp" | "blowup" | "sampled", ..., "domain": [t0, t1], "theta0" }
inline FrequencyProfile profile_from_json(const json& j) {
  const std::string kind = get_or<std::string>(j, "kind", "");
  if (kind == "constant") {
    check_keys(j, {"kind", "omega0", "domain", "theta0"}, "profile");
    return FrequencyProfile::constant(j.at("omega0").get<double>());
  }
  if (kind == "ramp") {
    check_keys(j, {"kind", "omega0", "a", "domain", "theta0"}, "profile");
    return FrequencyProfile::ramp(j.at("omega0").get<double>(), j.at("a").get<double>());
  }
  if (kind == "blowup") {
    check_keys(j, {"kind", "omega0", "eps_bar", "K", "domain", "theta0"}, "profile");
    if (j.contains("K")) return FrequencyProfile::blowup(j.at("omega0").get<double>(), j.at("K").get<double>());
    return blowup_profile(j.at("omega0").get<double>(), j.at("eps_bar").get<double>());
  }
  if (kind == "sampled") {
    check_keys(j, {"kind", "t", "omega", "domain", "theta0"}, "profile");
    return FrequencyProfile::sampled(j.at("t").get<std::vector<double>>(), j.at("omega").get<std::vector<double>>());
  }
  raise(ErrorKind::ConfigError, "unknown profile kind '" + kind + "'");
}

inline PhaseFunction phase_from_json(const json& j) {
  const auto prof = profile_from_json(j);
  if (!j.contains("domain")) raise(ErrorKind::ConfigError, "profile.domain is required");
  const auto d = j.at("domain").get<std::vector<double>>();
  if (d.size() != 2) raise(ErrorKind::ConfigError, "profile.domain must be [t_min, t_max]");
  return build_phase_function(prof, get_or<double>(j, "theta0", 0.0), {d[0], d[1]});
}

inline json profile_to_json(const FrequencyProfile& p) {
  using K = FrequencyProfile::Kind;
  switch (p.kind()) {
    case K::constant: return {{"kind", "constant"}, {"omega0", p.omega0()}};
    case K::ramp: return {{"kind", "ramp"}, {"omega0", p.omega0()}, {"a", p.rate()}};
    case K::blowup: return {{"kind", "blowup"}, {"omega0", p.omega0()}, {"K", p.rate()}};
    case K::sampled: return {{"kind", "sampled"}, {"t", p.sample_times()}, {"omega", p.sample_values()}};
    case K::composite: break;
  }
  raise(ErrorKind::ConfigError, "composite profiles are not serializable");
}

// Plain numeric CSV with one header line; values are written round-trip exact.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    raise(ErrorKind::ConfigError, "no CSV column " + name);
  }
};

inline void write_csv(std::ostream& os, const CsvTable& t) {
  for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
  os << '\n' << std::setprecision(17);
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
}

inline CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) raise(ErrorKind::ConfigError, "empty CSV");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception&) {
        // stod rejects "inf"/"nan" spellings from some streams
        r.push_back(cell.find("nan") != std::string::npos ? NAN : (cell[0] == '-' ? -INFINITY : INFINITY));
      }
    }
    if (r.size() != t.header.size()) raise(ErrorKind::ConfigError, "CSV row width differs from header");
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace vfharm
