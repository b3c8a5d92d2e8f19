#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nepv/experiments.hpp"
#include "nepv/io.hpp"

namespace nepv {

struct GridSpec {
  double start = 0.0;
  double stop = 0.0;
  int count = 1;

  std::vector<double> values() const { return linspace(start, stop, count); }
  std::string str() const {
    return format_double(start) + ":" + format_double(stop) + ":" + std::to_string(count);
  }
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw Error(ErrorKind::argument, "'" + key + "': '" + v + "' is not a number");
  }
  return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw Error(ErrorKind::argument, "'" + key + "': '" + v + "' is not an integer");
  }
  return out;
}

/// "start:stop:count"
inline GridSpec parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(trim(part));
  if (parts.size() != 3) throw Error(ErrorKind::argument, "grid '" + text + "' must be start:stop:count");
  GridSpec g;
  g.start = parse_double("grid", parts[0]);
  g.stop = parse_double("grid", parts[1]);
  const long long c = parse_int("grid", parts[2]);
  if (c < 1) throw Error(ErrorKind::argument, "grid '" + text + "' needs a positive count");
  g.count = static_cast<int>(c);
  return g;
}

inline Family parse_family(const std::string& v) {
  if (v == "alpha") return Family::alpha;
  if (v == "theta") return Family::theta;
  if (v == "custom") return Family::custom;
  throw Error(ErrorKind::argument, "unknown family '" + v + "' (alpha | theta | custom)");
}

struct ExperimentConfig {
  std::string preset;  // ex1 .. ex6, empty for explicit data
  Family family = Family::alpha;
  std::optional<double> param;  // alpha or theta
  std::optional<double> sigma;
  std::optional<GridSpec> grid;
  std::optional<GridSpec> shift_grid;
  double tol = 1e-13;
  int max_iters = 500;
  std::uint64_t seed = 7;
  std::string out = "out";
  std::string matrix_a, matrix_b, matrix_d;
  std::string gen_a = "file";  // file | tridiag
  std::string gen_b = "file";  // file | diag-iota | identity
  std::string gen_d = "file";  // file | random-gaussian | random-rank-r | zero
  Index n = 0, k = 0, r = 0;
  std::optional<double> fallback_sigma;
  unsigned threads = 0;

  /// Deterministic key=value rendering of every field that affects results.
  std::string canonical() const {
    std::ostringstream os;
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); };
    auto optg = [](const std::optional<GridSpec>& g) { return g ? g->str() : std::string("-"); };
    os << "preset=" << preset << ";family=" << to_string(family) << ";param=" << opt(param)
       << ";sigma=" << opt(sigma) << ";grid=" << optg(grid) << ";shift_grid=" << optg(shift_grid)
       << ";tol=" << format_double(tol) << ";max_iters=" << max_iters << ";seed=" << seed
       << ";matrix_a=" << matrix_a << ";matrix_b=" << matrix_b << ";matrix_d=" << matrix_d
       << ";a=" << gen_a << ";b=" << gen_b << ";d=" << gen_d << ";n=" << n << ";k=" << k
       << ";r=" << r << ";fallback_sigma=" << opt(fallback_sigma);
    return os.str();
  }
  std::string hash() const { return hex64(fnv1a(canonical())); }
};

inline void apply_setting(ExperimentConfig& c, const std::string& key_in, const std::string& value_in) {
  std::string key = trim(key_in);
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string v = trim(value_in);
  if (key == "preset") c.preset = v;
  else if (key == "family") c.family = parse_family(v);
  else if (key == "alpha" || key == "theta" || key == "param") c.param = parse_double(key, v);
  else if (key == "sigma") c.sigma = parse_double(key, v);
  else if (key == "grid") c.grid = parse_grid(v);
  else if (key == "shift_grid") c.shift_grid = parse_grid(v);
  else if (key == "tol") {
    c.tol = parse_double(key, v);
    if (!(c.tol > 0.0)) throw Error(ErrorKind::argument, "tol must be positive");
  } else if (key == "max_iters") {
    const long long m = parse_int(key, v);
    if (m < 1) throw Error(ErrorKind::argument, "max_iters must be >= 1");
    c.max_iters = static_cast<int>(m);
  } else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, v));
  else if (key == "out") c.out = v;
  else if (key == "matrix_a") { c.matrix_a = v; c.gen_a = "file"; }
  else if (key == "matrix_b") { c.matrix_b = v; c.gen_b = "file"; }
  else if (key == "matrix_d") { c.matrix_d = v; c.gen_d = "file"; }
  else if (key == "a") c.gen_a = v;
  else if (key == "b") c.gen_b = v;
  else if (key == "d") c.gen_d = v;
  else if (key == "n") c.n = static_cast<Index>(parse_int(key, v));
  else if (key == "k") c.k = static_cast<Index>(parse_int(key, v));
  else if (key == "r") c.r = static_cast<Index>(parse_int(key, v));
  else if (key == "fallback_sigma") c.fallback_sigma = parse_double(key, v);
  else if (key == "threads") c.threads = static_cast<unsigned>(parse_int(key, v));
  else throw Error(ErrorKind::argument, "unknown config key '" + key_in + "'");
}

/// Flat key = value file; '#' starts a comment.
inline void load_config_file(ExperimentConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::argument, path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    apply_setting(c, line.substr(0, eq), line.substr(eq + 1));
  }
}

struct ProblemData {
  Family family = Family::alpha;
  Mat a, b, d;
};

/// Matrices for the configured problem: a printed preset, the generated
/// n = 200 test set, or explicit files and generators.
inline ProblemData resolve_problem_data(const ExperimentConfig& c) {
  ProblemData pd;
  if (c.preset == "ex1" || c.preset == "ex2" || c.preset == "ex4" || c.preset == "ex5") {
    const ExamplePreset p = example_preset(c.preset);
    pd.family = p.family;
    pd.a = p.a;
    pd.b = p.b;
    pd.d = p.d;
    return pd;
  }
  ExperimentConfig g = c;
  if (c.preset == "ex3" || c.preset == "ex6") {
    g.family = c.preset == "ex3" ? Family::alpha : Family::theta;
    if (g.n == 0) g.n = 200;
    g.gen_a = "tridiag";
    g.gen_b = "diag-iota";
    if (g.gen_d == "file") g.gen_d = g.r > 0 ? "random-rank-r" : "random-gaussian";
  } else if (!c.preset.empty()) {
    throw Error(ErrorKind::argument, "unknown preset '" + c.preset + "' (ex1 .. ex6)");
  }
  pd.family = g.family;
  auto need_n = [&](const char* what) {
    if (g.n < 1) throw Error(ErrorKind::argument, std::string(what) + " generator needs n >= 1");
  };
  if (g.gen_a == "tridiag") {
    need_n("A");
    pd.a = tridiag_matrix(g.n);
  } else if (g.gen_a == "file") {
    if (g.matrix_a.empty()) throw Error(ErrorKind::argument, "no matrix A given");
    pd.a = read_matrix_market(g.matrix_a);
  } else {
    throw Error(ErrorKind::argument, "unknown generator for A: '" + g.gen_a + "'");
  }
  const Index n = pd.a.rows();
  if (g.gen_b == "diag-iota") pd.b = diag_iota_matrix(n);
  else if (g.gen_b == "identity") pd.b = Mat::Identity(n, n);
  else if (g.gen_b == "file") {
    if (g.matrix_b.empty()) {
      if (pd.family != Family::custom) throw Error(ErrorKind::argument, "no matrix B given");
      pd.b = Mat::Identity(n, n);
    } else {
      pd.b = read_matrix_market(g.matrix_b);
    }
  } else {
    throw Error(ErrorKind::argument, "unknown generator for B: '" + g.gen_b + "'");
  }
  if (g.gen_d == "random-gaussian") {
    if (g.k < 1) throw Error(ErrorKind::argument, "random-gaussian D needs k >= 1");
    pd.d = random_gaussian_matrix(n, g.k, g.seed);
  } else if (g.gen_d == "random-rank-r") {
    if (g.k < 1 || g.r < 1) throw Error(ErrorKind::argument, "random-rank-r D needs k and r");
    pd.d = random_rank_matrix(n, g.k, g.r, g.seed);
  } else if (g.gen_d == "zero") {
    if (g.k < 1) throw Error(ErrorKind::argument, "zero D needs k >= 1");
    pd.d = Mat::Zero(n, g.k);
  } else if (g.gen_d == "file") {
    if (g.matrix_d.empty()) throw Error(ErrorKind::argument, "no matrix D given");
    pd.d = read_matrix_market(g.matrix_d);
  } else {
    throw Error(ErrorKind::argument, "unknown generator for D: '" + g.gen_d + "'");
  }
  if (pd.b.rows() != n || pd.b.cols() != n || pd.d.rows() != n) {
    throw Error(ErrorKind::argument, "matrix dimensions of A, B, D disagree");
  }
  return pd;
}

}  // namespace nepv
