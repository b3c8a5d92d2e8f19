#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nepv/config.hpp"
#include "nepv/experiments.hpp"
#include "nepv/io.hpp"
#include "nepv/nepv.hpp"

namespace nepv::cli {

using json = nlohmann::ordered_json;

enum ExitCode { kOk = 0, kValidationFailure = 1, kConfigError = 2 };

/// Command-line values layered over the config file.
struct Overrides {
  std::optional<std::string> config, preset, family, grid, shift_grid, out;
  std::optional<std::string> matrix_a, matrix_b, matrix_d, gen_d;
  std::optional<double> alpha, theta, sigma, tol, fallback_sigma;
  std::optional<int> max_iters;
  std::optional<long long> seed, n, k, r;
  std::optional<unsigned> threads;
  std::string fault;
};

inline ExperimentConfig build_config(const Overrides& o) {
  ExperimentConfig c;
  if (o.config) load_config_file(c, *o.config);
  auto set = [&c](const char* key, const auto& v) {
    if (!v) return;
    if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>) {
      apply_setting(c, key, *v);
    } else {
      apply_setting(c, key, format_double(static_cast<double>(*v)));
    }
  };
  set("preset", o.preset);
  set("family", o.family);
  set("grid", o.grid);
  set("shift_grid", o.shift_grid);
  set("out", o.out);
  set("matrix_a", o.matrix_a);
  set("matrix_b", o.matrix_b);
  set("matrix_d", o.matrix_d);
  set("d", o.gen_d);
  if (o.alpha) c.param = *o.alpha;
  if (o.theta) c.param = *o.theta;
  if (o.sigma) c.sigma = *o.sigma;
  if (o.tol) apply_setting(c, "tol", format_double(*o.tol));
  if (o.fallback_sigma) c.fallback_sigma = *o.fallback_sigma;
  if (o.max_iters) apply_setting(c, "max_iters", std::to_string(*o.max_iters));
  if (o.seed) apply_setting(c, "seed", std::to_string(*o.seed));
  if (o.n) c.n = static_cast<Index>(*o.n);
  if (o.k) c.k = static_cast<Index>(*o.k);
  if (o.r) c.r = static_cast<Index>(*o.r);
  if (o.threads) c.threads = *o.threads;
  if ((o.alpha || o.theta) && !o.family && c.preset.empty()) {
    c.family = o.alpha ? Family::alpha : Family::theta;
  }
  return c;
}

inline bool is_printed_preset(const std::string& id) {
  return id == "ex1" || id == "ex2" || id == "ex4" || id == "ex5";
}

inline std::vector<std::string> meta_lines(const ExperimentConfig& c, const std::string& what) {
  return {"nepv " + what, "config_hash=" + c.hash(), "seed=" + std::to_string(c.seed),
          "tol=" + format_double(c.tol), "max_iters=" + std::to_string(c.max_iters),
          "config=" + c.canonical()};
}

inline json meta_json(const ExperimentConfig& c) {
  json j;
  j["config_hash"] = c.hash();
  j["seed"] = c.seed;
  j["tol"] = c.tol;
  j["max_iters"] = c.max_iters;
  j["config"] = c.canonical();
  return j;
}

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(num(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

inline std::string ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

inline NepvProblem build_problem(const ProblemData& pd, double param, const std::string& fault) {
  NepvProblem p = make_family_problem(pd.family, pd.a, pd.b, pd.d, param);
  if (fault == "dh-phi-sign") {
    auto original = p.dh_phi;
    p.dh_phi = [original](const Mat& x, const Mat& e) -> Mat { return -original(x, e); };
  } else if (!fault.empty()) {
    throw Error(ErrorKind::argument, "unknown fault '" + fault + "'");
  }
  return p;
}

inline double resolve_param(const ExperimentConfig& c) {
  if (c.param) return *c.param;
  if (is_printed_preset(c.preset)) return example_preset(c.preset).rate_param;
  if (c.preset == "ex3" || c.preset == "ex6") return 0.5;
  if (c.family == Family::custom) return 0.0;
  throw Error(ErrorKind::argument, "no --alpha/--theta given");
}

inline double resolve_fallback(const ExperimentConfig& c) {
  if (c.fallback_sigma) return *c.fallback_sigma;
  if (c.sigma) return *c.sigma;
  if (is_printed_preset(c.preset)) return example_preset(c.preset).fallback_sigma;
  return 0.0;
}

inline StiefelPoint start_point(const ProblemData& pd) {
  return initial_guess_linear(pd.a, pd.b, pd.d.cols(), &pd.d);
}

inline ScfOptions scf_options(const ExperimentConfig& c) {
  ScfOptions o;
  o.tol = c.tol;
  o.max_iters = c.max_iters;
  return o;
}

/// A certified reference solution at `param`: continuation from parameter 0
/// for the printed presets, otherwise plain SCF with level-shift fallback.
inline std::optional<StiefelPoint> obtain_solution(const ExperimentConfig& c, const ProblemData& pd,
                                                   double param, const std::string& fault) {
  auto make = [&](double t) { return build_problem(pd, t, fault); };
  ScfOptions so = scf_options(c);
  so.max_iters = std::max(so.max_iters, 5000);
  so.stop_on_oscillation = true;
  if (is_printed_preset(c.preset)) {
    ExamplePreset pr = example_preset(c.preset);
    pr.fallback_sigma = resolve_fallback(c);
    return continue_to(make, pr, 0.0, param, 50, so).solution;
  }
  ReferenceOptions ro;
  ro.scf = so;
  ro.fallback_sigma = resolve_fallback(c);
  return solve_with_fallback(make(param), start_point(pd), ro).reference;
}

inline void write_history(const std::string& path, const ExperimentConfig& c, const ScfReport& rep,
                          const std::string& what) {
  CsvWriter w(path, meta_lines(c, what), {"iter", "nres", "objective", "sin_theta", "gap", "step_nres"});
  for (const ScfRecord& r : rep.history) {
    w.cell(r.iter).cell(r.nres).cell(r.objective).cell(r.sin_theta).cell(r.gap).cell(r.step_nres);
    w.end_row();
  }
}

inline void attach_sin_theta(ScfReport& rep, const StiefelPoint& ref) {
  for (std::size_t i = 0; i < rep.history.size() && i < rep.iterates.size(); ++i) {
    rep.history[i].sin_theta = sin_theta_fro(rep.iterates[i], ref);
  }
}

/// Certificate, rates and regularity for a converged point, or the error text.
inline json certificate_json(const NepvProblem& p, const StiefelPoint& x, const ScfReport* rep) {
  json j;
  try {
    const SolutionCertificate cert = certify(p, x);
    j["certified"] = true;
    j["gap"] = num(cert.gap);
    j["lambda_star"] = std::vector<double>(cert.lambda_star.data(), cert.lambda_star.data() + cert.lambda_star.size());
    const RateEstimate est = rho_L(cert, p);
    j["rho_L"] = num(est.rho);
    j["rho_method"] = to_string(est.method);
    j["rho_converged"] = est.converged;
    if (p.k < p.n && (p.n - p.k) * p.k <= 5000) {
      const SigmaLowerResult sl = sigma_lower(cert, p);
      j["sigma_L"] = num(sl.sigma_l);
      j["mu_min"] = num(sl.mu_min);
      j["q_asymmetry"] = num(sl.asymmetry);
    }
    if (rep != nullptr) {
      const ObservedRate ob = observed_rate(*rep, x);
      const ObservedRate on = observed_nres_rate(*rep);
      j["observed_rate"] = ob.defined ? json(ob.rate) : json(nullptr);
      j["observed_nres_rate"] = on.defined ? json(on.rate) : json(nullptr);
    }
  } catch (const Error& e) {
    j["certified"] = false;
    j["certificate_error"] = e.what();
  }
  return j;
}

// ---------------------------------------------------------------------------

inline int cmd_solve(const ExperimentConfig& c, const std::string& fault) {
  const ProblemData pd = resolve_problem_data(c);
  const double param = resolve_param(c);
  const NepvProblem p = build_problem(pd, param, fault);
  ScfOptions so = scf_options(c);
  so.shift = c.sigma;
  so.keep_iterates = true;
  ScfReport rep = run_scf(p, start_point(pd), so);
  if (rep.converged) attach_sin_theta(rep, rep.final_x);

  const std::string dir = ensure_dir(c.out);
  json j;
  j["command"] = "solve";
  j["family"] = to_string(pd.family);
  j["param"] = param;
  j["sigma"] = c.sigma ? json(*c.sigma) : json(nullptr);
  j["n"] = p.n;
  j["k"] = p.k;
  j["rank_d"] = p.dfact.r;
  j["converged"] = rep.converged;
  j["iterations"] = rep.iterations;
  j["divergence_kind"] = to_string(rep.divergence_kind);
  j["oscillation_detected"] = rep.oscillation_detected;
  j["nres"] = num(rep.history.back().nres);
  j["objective"] = num(rep.history.back().objective);
  j["alignment"] = "Q = U V^T (Omega = I)";
  const RegularityRecord reg = regularity_check(rep.final_x, p.dfact);
  j["regularity"] = {{"definite", reg.definite}, {"rank_preserving", reg.rank_preserving},
                     {"min_eig", num(reg.min_eig)}, {"ell", reg.ell}, {"r", reg.r}};
  j["final_x"] = matrix_json(rep.final_x.matrix());
  j["final_lambda"] = matrix_json(rep.final_lambda);
  if (rep.converged) j["certificate"] = certificate_json(p, rep.final_x, &rep);
  j["meta"] = meta_json(c);
  write_json(dir + "/report.json", j);
  write_history(dir + "/history.csv", c, rep, "solve history");
  std::cout << "converged=" << (rep.converged ? "true" : "false") << " iterations=" << rep.iterations
            << " nres=" << format_double(rep.history.back().nres);
  if (j.contains("certificate") && j["certificate"].value("certified", false)) {
    std::cout << " rho_L=" << format_double(j["certificate"]["rho_L"].get<double>());
  }
  std::cout << "\n";
  return kOk;
}

inline std::vector<double> resolve_sweep_grid(const ExperimentConfig& c, int default_count) {
  if (c.grid) return c.grid->values();
  if (is_printed_preset(c.preset)) {
    const ExamplePreset pr = example_preset(c.preset);
    return linspace(pr.sweep_lo, pr.sweep_hi, default_count);
  }
  if (c.preset == "ex3") return linspace(0.0, 1.0, default_count);
  if (c.preset == "ex6") return linspace(-0.5, 1.5, default_count);
  throw Error(ErrorKind::argument, "sweep needs --grid start:stop:count");
}

inline SweepResult sweep_and_write(const ExperimentConfig& c, const ProblemData& pd,
                                   const std::vector<double>& grid, const std::string& fault,
                                   const std::string& csv_path, json& summary) {
  auto make = [&](double t) { return build_problem(pd, t, fault); };
  SweepOptions so;
  so.reference.scf = scf_options(c);
  so.reference.scf.max_iters = std::max(c.max_iters, pd.a.rows() <= 10 ? 5000 : 3000);
  so.reference.scf.stop_on_oscillation = true;
  so.reference.fallback_sigma = resolve_fallback(c);
  so.threads = c.threads;
  const SweepResult res = run_sweep(make, grid, start_point(pd), so);
  CsvWriter w(csv_path, meta_lines(c, "sweep"),
              {"param", "converged", "observed_rate", "rho_L", "gap", "sigma_used",
               "observed_nres_rate", "iterations", "divergence", "error"});
  int violations = 0;
  for (const SweepRow& r : res.rows) {
    w.cell(r.param).cell(r.converged).cell(r.observed_rate).cell(r.rho_l).cell(r.gap)
        .cell(r.sigma_used).cell(r.observed_nres_rate).cell(r.iterations).cell(r.divergence)
        .cell(r.error);
    w.end_row();
    if ((r.rho_l < 0.98 && !r.converged) || (r.rho_l > 1.02 && r.converged)) ++violations;
  }
  json intervals = json::array();
  for (const auto& [lo, hi] : divergence_intervals(res.rows)) intervals.push_back({lo, hi});
  summary["points"] = res.rows.size();
  summary["rho_above_one_intervals"] = intervals;
  summary["dichotomy_violations"] = violations;
  return res;
}

inline int cmd_sweep(const ExperimentConfig& c, const std::string& fault) {
  const ProblemData pd = resolve_problem_data(c);
  const std::vector<double> grid = resolve_sweep_grid(c, 200);
  const std::string dir = ensure_dir(c.out);
  json summary;
  summary["command"] = "sweep";
  summary["family"] = to_string(pd.family);
  sweep_and_write(c, pd, grid, fault, dir + "/sweep.csv", summary);
  summary["meta"] = meta_json(c);
  write_json(dir + "/sweep_summary.json", summary);
  std::cout << "points=" << grid.size() << " intervals=" << summary["rho_above_one_intervals"].dump()
            << " dichotomy_violations=" << summary["dichotomy_violations"].get<int>() << "\n";
  return kOk;
}

inline std::vector<double> resolve_shift_grid(const ExperimentConfig& c) {
  if (c.shift_grid) return c.shift_grid->values();
  if (c.grid) return c.grid->values();
  if (is_printed_preset(c.preset)) {
    const ExamplePreset pr = example_preset(c.preset);
    return linspace(pr.shift_lo, pr.shift_hi, 221);
  }
  throw Error(ErrorKind::argument, "shift-sweep needs --grid start:stop:count");
}

inline json shift_sweep_and_write(const ExperimentConfig& c, const ProblemData& pd, double param,
                                  const std::vector<double>& sigmas, const std::string& fault,
                                  const std::string& csv_path) {
  const NepvProblem p = build_problem(pd, param, fault);
  const std::optional<StiefelPoint> x = obtain_solution(c, pd, param, fault);
  if (!x) throw Error(ErrorKind::argument, "no reference solution found at parameter " + format_double(param));
  const SolutionCertificate cert = certify(p, *x);
  ShiftSweepOptions so;
  so.threads = c.threads;
  so.tol = c.tol;
  const ShiftSweepResult res = run_shift_sweep(p, cert, sigmas, so);
  CsvWriter w(csv_path, meta_lines(c, "shift-sweep"), {"sigma", "rho_L_sigma", "observed_rate", "converged", "error"});
  for (const ShiftRow& r : res.rows) {
    w.cell(r.sigma).cell(r.rho).cell(r.observed_rate).cell(r.converged).cell(r.error);
    w.end_row();
  }
  json j;
  j["param"] = param;
  j["rho_L"] = num(rho_L(cert, p).rho);
  j["gap"] = num(cert.gap);
  j["sigma_L"] = num(res.lower.sigma_l);
  j["mu_min"] = num(res.lower.mu_min);
  j["q_asymmetry"] = num(res.lower.asymmetry);
  j["asymmetry_warning"] = res.lower.asymmetry_warning;
  j["argmin_sigma"] = num(res.argmin_sigma);
  j["min_rho"] = num(res.min_rho);
  double first_contracting = kNaN;
  for (const ShiftRow& r : res.rows) {
    if (std::isfinite(r.rho) && r.rho >= 1.0) first_contracting = kNaN;
    else if (std::isfinite(r.rho) && !std::isfinite(first_contracting)) first_contracting = r.sigma;
  }
  j["rho_below_one_from_sigma"] = num(first_contracting);
  return j;
}

inline int cmd_shift_sweep(const ExperimentConfig& c, const std::string& fault) {
  const ProblemData pd = resolve_problem_data(c);
  const double param = c.param ? *c.param
                                : (is_printed_preset(c.preset) ? example_preset(c.preset).shift_param
                                                               : resolve_param(c));
  const std::string dir = ensure_dir(c.out);
  json j = shift_sweep_and_write(c, pd, param, resolve_shift_grid(c), fault, dir + "/shifts.csv");
  j["command"] = "shift-sweep";
  j["meta"] = meta_json(c);
  write_json(dir + "/shift_summary.json", j);
  std::cout << "sigma_L=" << format_double(j["sigma_L"].get<double>())
            << " argmin_sigma=" << format_double(j["argmin_sigma"].get<double>())
            << " min_rho=" << format_double(j["min_rho"].get<double>()) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// check

struct CheckLine {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool applicable = true;
  bool passed() const { return !applicable || (std::isfinite(value) && value <= threshold); }
};

/// Derivative checks plus the structural invariants at a random point.
inline std::vector<CheckLine> run_checks(const NepvProblem& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const StiefelPoint x = random_stiefel(p.n, p.k, rng);
  const bool polar = p.dfact.r > 0;
  std::vector<CheckLine> lines;
  FdOptions fo;
  fo.seed = seed;
  const FdReport fd = fd_validate(p, x, fo);
  lines.push_back({"fd grad phi", fd.grad_phi, 1e-6});
  lines.push_back({"fd grad psi", fd.grad_psi, 1e-6});
  lines.push_back({"fd DH_phi", fd.dh_phi, 1e-6});
  lines.push_back({"fd DH_psi", fd.dh_psi, 1e-6});
  lines.push_back({"fd DM", fd.dm, 1e-6, polar});
  lines.push_back({"fd DQ_o", fd.dq_o, 1e-6, polar});
  lines.push_back({"fd DG", fd.dg, 1e-6});

  const Mat h = build_h(p, x);
  lines.push_back({"H symmetric", symmetry_defect(h) / std::max(h.norm(), 1e-300), 1e-12});
  const Mat xth = x.matrix().transpose() * p.h_phi(x) * x.matrix();
  lines.push_back({"X^T H_phi X symmetric", symmetry_defect(xth) / std::max(xth.norm(), 1e-300), 1e-10});

  double inv_h = 0.0, inv_g = 0.0;
  const Mat hphi = p.h_phi(x), hpsi = p.h_psi(x);
  const Mat g = g_matrix(p, x).g;
  for (int i = 0; i < 20; ++i) {
    const Mat q = random_orthogonal(p.k, rng);
    const StiefelPoint xq(x.matrix() * q, 1e-9, true);
    inv_h = std::max({inv_h, (p.h_phi(xq) - hphi).norm() / std::max(hphi.norm(), 1e-300),
                      (p.h_psi(xq) - hpsi).norm() / std::max(hpsi.norm(), 1e-300)});
    inv_g = std::max(inv_g, (g_matrix(p, xq).g - g).norm() / std::max(g.norm(), 1e-300));
  }
  lines.push_back({"H_phi, H_psi unitary invariance", inv_h, 1e-10});
  lines.push_back({"G unitary invariance", inv_g, 1e-10});

  const AlignmentResult al = align(x, p.d);
  const double aligned_gap = std::abs(aligned_objective(p, x) - objective(p, al.aligned_x));
  lines.push_back({"aligned objective = objective(align X)",
                   aligned_gap / std::max(1.0, std::abs(objective(p, al.aligned_x))), 1e-12});
  const Mat xtd = al.aligned_x.matrix().transpose() * p.d;
  double min_eig = 0.0;
  if (xtd.norm() > 0.0) {
    min_eig = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (xtd + xtd.transpose())).eigenvalues()(0);
  }
  lines.push_back({"aligned X^T D symmetric", symmetry_defect(xtd) / std::max(1.0, p.dfact.sigma_max), 1e-10});
  lines.push_back({"aligned X^T D PSD (-min eig)", std::max(0.0, -min_eig) / std::max(1.0, p.dfact.sigma_max), 1e-10, polar});
  double best_sampled = -INFINITY;
  for (int i = 0; i < 1000; ++i) {
    const Mat q = random_orthogonal(p.k, rng);
    best_sampled = std::max(best_sampled, (q.transpose() * x.matrix().transpose() * p.d).trace());
  }
  lines.push_back({"alignment beats sampled rotations", std::max(0.0, best_sampled - xtd.trace()), 1e-12});

  const Mat e1 = random_gaussian(p.n, p.k, rng), e2 = random_gaussian(p.n, p.k, rng);
  const Mat lin = dg(p, x, 0.7 * e1 - 1.3 * e2) - (0.7 * dg(p, x, e1) - 1.3 * dg(p, x, e2));
  lines.push_back({"DG linearity", lin.norm() / std::max(dg(p, x, e1).norm(), 1e-300), 1e-10});
  if (polar) {
    const CanonicalPolarBundle b = canonical_polar(x, p.dfact);
    const PolarDerivative dp = d_canonical_polar(x, e1, p.dfact, b);
    const double lhs = dp.dm.trace(), rhs = (b.q_o * p.d.transpose() * e1).trace();
    lines.push_back({"tr(DM) = tr(Q_o D^T E)", std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)), 1e-10});
  } else {
    lines.push_back({"tr(DM) = tr(Q_o D^T E)", 0.0, 1e-10, false});
  }
  return lines;
}

inline int cmd_check(const ExperimentConfig& c, const std::string& fault) {
  const ProblemData pd = resolve_problem_data(c);
  const double param = c.param ? *c.param : (pd.family == Family::custom ? 0.0 : 0.5);
  const NepvProblem p = build_problem(pd, param, fault);
  const std::vector<CheckLine> lines = run_checks(p, c.seed);
  bool ok = true;
  std::printf("%-40s %-12s %-10s %s\n", "check", "value", "threshold", "result");
  for (const CheckLine& l : lines) {
    const char* verdict = !l.applicable ? "N/A" : (l.passed() ? "PASS" : "FAIL");
    std::printf("%-40s %-12.3e %-10.1e %s\n", l.name.c_str(), l.applicable ? l.value : 0.0, l.threshold, verdict);
    ok = ok && l.passed();
  }
  std::printf("%s\n", ok ? "all checks passed" : "some checks FAILED");
  return ok ? kOk : kValidationFailure;
}

// ---------------------------------------------------------------------------
// reproduce

inline json reproduce_printed(const ExperimentConfig& base, const std::string& id, const std::string& dir,
                              const std::string& fault) {
  ExperimentConfig c = base;
  c.preset = id;
  const ExamplePreset pr = example_preset(id);
  const ProblemData pd = resolve_problem_data(c);
  json summary;
  summary["example"] = id;
  summary["family"] = to_string(pr.family);

  json sweep;
  sweep_and_write(c, pd, resolve_sweep_grid(c, 200), fault, dir + "/sweep.csv", sweep);
  summary["sweep"] = sweep;

  // Rate at the reported parameter: plain SCF from a perturbed reference.
  const double param = pr.rate_param;
  const NepvProblem p = build_problem(pd, param, fault);
  const std::optional<StiefelPoint> x = obtain_solution(c, pd, param, fault);
  json rate;
  rate["param"] = param;
  if (x) {
    std::mt19937_64 rng(c.seed);
    const Mat x0 = x->matrix() + 1e-3 * random_tangent(*x, rng);
    ScfOptions so = scf_options(c);
    so.max_iters = std::max(c.max_iters, 20000);
    so.keep_iterates = true;
    ScfReport rep = run_scf(p, StiefelPoint::from_any(x0), so);
    attach_sin_theta(rep, rep.converged ? rep.final_x : *x);
    write_history(dir + "/rate_history.csv", c, rep, "rate history");
    rate["converged"] = rep.converged;
    rate["certificate"] = certificate_json(p, rep.converged ? rep.final_x : *x, rep.converged ? &rep : nullptr);
  } else {
    rate["error"] = "no reference solution";
  }
  summary["rate"] = rate;

  ExperimentConfig sc = c;
  sc.grid.reset();
  summary["shift"] = shift_sweep_and_write(sc, pd, pr.shift_param, resolve_shift_grid(sc), fault,
                                           dir + "/shifts.csv");

  if (id == "ex5") {
    // Plain SCF at the shift-study parameter, where it does not converge.
    const NepvProblem p3 = build_problem(pd, pr.shift_param, fault);
    ScfOptions so = scf_options(c);
    so.max_iters = 60;
    const ScfReport rep = run_scf(p3, start_point(pd), so);
    write_history(dir + "/oscillation_history.csv", c, rep, "plain SCF oscillation");
    const auto& h = rep.history;
    summary["oscillation"] = {{"param", pr.shift_param},
                              {"detected", rep.oscillation_detected},
                              {"nres_levels", {h[h.size() - 2].nres, h.back().nres}},
                              {"step_nres_levels", {h[h.size() - 2].step_nres, h.back().step_nres}}};
  }
  return summary;
}

/// The n = 200 test set: full-rank D (k = 10..40) and rank-deficient D
/// (k = 50, r = 10..40). `k`/`r` in the config restrict to one instance.
inline json reproduce_generated(const ExperimentConfig& base, const std::string& id, const std::string& dir,
                                const std::string& fault) {
  struct Instance { Index k, r; };
  std::vector<Instance> instances;
  if (base.k > 0 || base.r > 0) {
    instances.push_back({base.k > 0 ? base.k : 50, base.r});
  } else {
    for (Index k : {10, 20, 30, 40}) instances.push_back({k, 0});
    for (Index r : {10, 20, 30, 40}) instances.push_back({50, r});
  }
  json summary;
  summary["example"] = id;
  json runs = json::array();
  for (const Instance& in : instances) {
    ExperimentConfig c = base;
    c.preset = id;
    c.k = in.k;
    c.r = in.r;
    c.gen_d = in.r > 0 ? "random-rank-r" : "random-gaussian";
    const ProblemData pd = resolve_problem_data(c);
    const std::string name = in.r > 0 ? "sweep_k50_r" + std::to_string(in.r) : "sweep_k" + std::to_string(in.k);
    json s;
    const SweepResult res = sweep_and_write(c, pd, resolve_sweep_grid(c, 11), fault, dir + "/" + name + ".csv", s);
    double worst = 0.0;
    int compared = 0;
    for (const SweepRow& r : res.rows) {
      if (std::isfinite(r.observed_rate) && std::isfinite(r.rho_l)) {
        worst = std::max(worst, std::abs(r.observed_rate - r.rho_l) / r.rho_l);
        ++compared;
      }
    }
    s["k"] = in.k;
    s["r"] = in.r;
    s["file"] = name + ".csv";
    s["observed_vs_rho_max_rel_diff"] = compared ? json(worst) : json(nullptr);
    s["compared_points"] = compared;
    runs.push_back(s);
    std::cerr << id << " " << name << ": " << res.rows.size() << " points\n";
  }
  summary["runs"] = runs;
  return summary;
}

inline int cmd_reproduce(const ExperimentConfig& c, const std::string& id, const std::string& fault) {
  const std::string dir = ensure_dir(c.out + "/" + id);
  json summary;
  if (is_printed_preset(id)) {
    summary = reproduce_printed(c, id, dir, fault);
  } else if (id == "ex3" || id == "ex6") {
    summary = reproduce_generated(c, id, dir, fault);
  } else {
    throw Error(ErrorKind::argument, "unknown example '" + id + "' (ex1 .. ex6)");
  }
  summary["meta"] = meta_json(c);
  write_json(dir + "/summary.json", summary);
  std::cout << "wrote " << dir << "/summary.json\n";
  return kOk;
}

// ---------------------------------------------------------------------------

inline void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "key = value config file");
  sub->add_option("--preset", o.preset, "ex1 .. ex6");
  sub->add_option("--family", o.family, "alpha | theta | custom");
  sub->add_option("--alpha", o.alpha, "alpha-family parameter");
  sub->add_option("--theta", o.theta, "theta-family parameter");
  sub->add_option("--sigma", o.sigma, "level shift (solve) or fallback shift (sweeps)");
  sub->add_option("--fallback-sigma", o.fallback_sigma, "level shift used when plain SCF fails");
  sub->add_option("--grid", o.grid, "start:stop:count");
  sub->add_option("--shift-grid", o.shift_grid, "start:stop:count for shift sweeps");
  sub->add_option("--tol", o.tol, "NRes stopping tolerance (default 1e-13)");
  sub->add_option("--max-iters", o.max_iters, "SCF iteration cap (default 500)");
  sub->add_option("--seed", o.seed, "RNG seed for generated data and probes");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--matrix-a", o.matrix_a, "Matrix Market file for A");
  sub->add_option("--matrix-b", o.matrix_b, "Matrix Market file for B");
  sub->add_option("--matrix-d", o.matrix_d, "Matrix Market file for D");
  sub->add_option("--d-generator", o.gen_d, "random-gaussian | random-rank-r | zero");
  sub->add_option("--n", o.n, "dimension for generated matrices");
  sub->add_option("--k", o.k, "columns of generated D");
  sub->add_option("--r", o.r, "rank of generated D");
  sub->add_option("--threads", o.threads, "worker threads (0 = hardware)");
  sub->add_option("--inject-fault", o.fault)->group("");  // hidden: dh-phi-sign
}

inline const char* kCsvHelp =
    "Outputs (CSV files start with '#' metadata lines: config hash, seed, tol):\n"
    "  solve        report.json, history.csv: iter,nres,objective,sin_theta,gap,step_nres\n"
    "  sweep        sweep.csv: param,converged,observed_rate,rho_L,gap,sigma_used,\n"
    "               observed_nres_rate,iterations,divergence,error; sweep_summary.json\n"
    "  shift-sweep  shifts.csv: sigma,rho_L_sigma,observed_rate,converged,error;\n"
    "               shift_summary.json (sigma_L, argmin sigma, min rho)\n"
    "  reproduce    <out>/<id>/ with the files above and summary.json\n"
    "Exit codes: 0 ok, 1 validation failure, 2 config or IO error.";

inline int run(int argc, char** argv) {
  CLI::App app{"SCF solver and local convergence analysis for NEPv without unitary invariance"};
  app.footer(kCsvHelp);
  app.require_subcommand(1);
  Overrides o;
  std::string example;
  CLI::App* solve = app.add_subcommand("solve", "single SCF solve with certificate and rates");
  CLI::App* sweep = app.add_subcommand("sweep", "warm-started parameter sweep with rho(L)");
  CLI::App* shift = app.add_subcommand("shift-sweep", "rho(L_sigma) over a grid of level shifts");
  CLI::App* check = app.add_subcommand("check", "finite-difference and invariant checks");
  CLI::App* repro = app.add_subcommand("reproduce", "regenerate the data behind an example");
  for (CLI::App* s : {solve, sweep, shift, check, repro}) add_common(s, o);
  repro->add_option("example", example, "ex1 | ex2 | ex3 | ex4 | ex5 | ex6")->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  try {
    const ExperimentConfig c = build_config(o);
    if (*solve) return cmd_solve(c, o.fault);
    if (*sweep) return cmd_sweep(c, o.fault);
    if (*shift) return cmd_shift_sweep(c, o.fault);
    if (*check) return cmd_check(c, o.fault);
    if (*repro) return cmd_reproduce(c, example, o.fault);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace nepv::cli
