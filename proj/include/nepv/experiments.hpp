#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "nepv/analysis.hpp"
#include "nepv/problem.hpp"
#include "nepv/scf.hpp"

namespace nepv {

/// Runs fn(i) for i in [0, count) on `threads` workers; each index runs once.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn,
                         unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < count; i = next++) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::vector<double> linspace(double a, double b, int count) {
  if (count < 1) throw Error(ErrorKind::argument, "grid needs at least one point");
  std::vector<double> g(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    g[static_cast<std::size_t>(i)] = count == 1 ? a : a + (b - a) * i / (count - 1);
  }
  return g;
}

inline NepvProblem make_family_problem(Family fam, const Mat& a, const Mat& b, const Mat& d,
                                       double param) {
  switch (fam) {
    case Family::alpha: return make_alpha_problem(a, b, d, param);
    case Family::theta: return make_theta_problem(a, b, d, param);
    case Family::custom: return make_quadratic_problem(a, d);
  }
  throw Error(ErrorKind::argument, "unknown family");
}

// ---------------------------------------------------------------------------
// Test matrices.

inline Mat tridiag_matrix(Index n) {
  Mat a = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    a(i, i) = 2.0;
    if (i + 1 < n) a(i, i + 1) = a(i + 1, i) = -1.0;
  }
  return a;
}

inline Mat diag_iota_matrix(Index n) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = static_cast<double>(i + 1);
  return v.asDiagonal();
}

/// D = D1 P^T with Gaussian D1 (n x r) and P (k x r) with orthonormal columns.
inline Mat random_rank_matrix(Index n, Index k, Index r, std::uint64_t seed) {
  if (r < 1 || r > k) throw Error(ErrorKind::argument, "rank r must satisfy 1 <= r <= k");
  std::mt19937_64 rng(seed);
  const Mat d1 = random_gaussian(n, r, rng);
  const Mat p = orthonormalize(random_gaussian(k, r, rng));
  return d1 * p.transpose();
}

inline Mat random_gaussian_matrix(Index n, Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_gaussian(n, k, rng);
}

struct ExamplePreset {
  std::string id;
  Family family = Family::alpha;
  Mat a, b, d;
  double sweep_lo = 0.0, sweep_hi = 1.0;
  double rate_param = 0.0;    // parameter of the reported rate
  double shift_param = 0.0;   // parameter of the shift study
  double fallback_sigma = 0.0;
  double shift_lo = 0.0, shift_hi = 0.0;
  bool has_shift_study = false;
};

namespace presets {

inline Mat ex1_a() {
  Mat a(3, 3);
  a << -3.242, -0.450, 1.807, -0.450, -1.630, 0.790, 1.807, 0.790, 0.226;
  return a;
}
inline Mat ex1_b() {
  Mat b(3, 3);
  b << 0.592, 1.873, 0.175, 1.873, 6.332, 0.617, 0.175, 0.617, 0.488;
  return b;
}
inline Mat ex1_d() {
  Mat d(3, 1);
  d << -9.122, 0.421, 3.134;
  return d;
}
inline Mat ex2_d() {
  Mat d(3, 2);
  d << -1.430, 2.768, -0.120, -0.630, 1.098, 2.229;
  return d;
}
inline Mat ex5_a() {
  Mat a(3, 3);
  a << 1.145, -0.095, 0.514, -0.095, 0.838, 1.022, 0.514, 1.022, -1.223;
  return a;
}
inline Mat ex5_b() {
  Mat b(3, 3);
  b << 0.582, -0.037, 0.025, -0.037, 0.183, 0.043, 0.025, 0.043, 0.239;
  return b;
}
inline Mat ex5_d() {
  Mat d(3, 2);
  d << 0.760, 0.258, 0.011, 0.774, 0.180, 0.520;
  return d;
}

}  // namespace presets

/// The small printed examples: ex1, ex2, ex4, ex5.
inline ExamplePreset example_preset(const std::string& id) {
  ExamplePreset p;
  p.id = id;
  if (id == "ex1") {
    p.family = Family::alpha;
    p.a = presets::ex1_a(); p.b = presets::ex1_b(); p.d = presets::ex1_d();
    p.sweep_lo = 0.0; p.sweep_hi = 1.0;
    p.rate_param = 0.46; p.shift_param = 0.6;
    p.fallback_sigma = 100.0;
    p.shift_lo = 0.0; p.shift_hi = 120.0;
  } else if (id == "ex2") {
    p.family = Family::alpha;
    p.a = presets::ex1_a(); p.b = presets::ex1_b(); p.d = presets::ex2_d();
    p.sweep_lo = 0.0; p.sweep_hi = 1.0;
    p.rate_param = 0.305; p.shift_param = 0.5;
    p.fallback_sigma = 50.0;
    p.shift_lo = 0.0; p.shift_hi = 20.0;
  } else if (id == "ex4") {
    p.family = Family::theta;
    p.a = presets::ex1_a(); p.b = presets::ex1_b(); p.d = presets::ex1_d();
    p.sweep_lo = -0.5; p.sweep_hi = 1.5;
    p.rate_param = 0.1; p.shift_param = 0.0;
    p.fallback_sigma = 100.0;
    p.shift_lo = -12.0; p.shift_hi = 10.0;
  } else if (id == "ex5") {
    p.family = Family::theta;
    p.a = presets::ex5_a(); p.b = presets::ex5_b(); p.d = presets::ex5_d();
    p.sweep_lo = 0.0; p.sweep_hi = 6.0;
    p.rate_param = 4.75; p.shift_param = 3.0;
    p.fallback_sigma = 40.0;
    p.shift_lo = 5.0; p.shift_hi = 60.0;
  } else {
    throw Error(ErrorKind::argument, "unknown example preset '" + id + "'");
  }
  p.has_shift_study = true;
  return p;
}

// ---------------------------------------------------------------------------
// Reference solutions and parameter sweeps.

struct SolveAttempt {
  bool plain_converged = false;     // plain SCF reached the reference solution
  std::optional<StiefelPoint> reference;
  double sigma_used = 0.0;
  ScfReport plain;
  std::string error;
};

struct ReferenceOptions {
  ScfOptions scf;          // used for the plain run
  double fallback_sigma = 0.0;
  int fallback_max_iters = 20000;
  double same_solution_tol = 1e-6;
};

/// Plain SCF from x0; if that fails to reach a certifiable solution, a
/// level-shifted run with the fallback shift provides the reference.
inline SolveAttempt solve_with_fallback(const NepvProblem& p, const StiefelPoint& x0,
                                        const ReferenceOptions& opts) {
  SolveAttempt out;
  ScfOptions plain_opts = opts.scf;
  plain_opts.shift.reset();
  plain_opts.keep_iterates = true;
  out.plain = run_scf(p, x0, plain_opts);
  if (out.plain.converged) {
    try {
      (void)certify(p, out.plain.final_x);
      out.reference = out.plain.final_x;
      out.plain_converged = true;
      return out;
    } catch (const Error&) {
      // converged to a point that is not a top-k solution of G; fall through
    }
  }
  if (opts.fallback_sigma != 0.0) {
    ScfOptions ls = opts.scf;
    ls.max_iters = opts.fallback_max_iters;
    ls.keep_iterates = false;
    ls.stop_on_oscillation = false;
    const ScfReport shifted = run_level_shifted_scf(p, x0, opts.fallback_sigma, ls);
    if (shifted.converged) {
      out.reference = shifted.final_x;
      out.sigma_used = opts.fallback_sigma;
      if (out.plain.converged &&
          sin_theta_fro(out.plain.final_x, *out.reference) <= opts.same_solution_tol) {
        out.plain_converged = true;
      }
      return out;
    }
  }
  out.error = "no converged reference solution";
  return out;
}

struct SweepRow {
  double param = 0.0;
  bool converged = false;       // plain SCF converged to the reference
  double observed_rate = kNaN;  // subspace-angle based
  double observed_nres_rate = kNaN;
  double rho_l = kNaN;
  double gap = kNaN;
  double sigma_used = 0.0;
  int iterations = 0;
  std::string divergence = "none";
  bool rate_converged = false;
  std::string error;
};

struct SweepOptions {
  ReferenceOptions reference;
  RadiusOptions radius;
  RateWindow window;
  unsigned threads = 0;
  bool observe = true;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::optional<StiefelPoint>> solutions;
};

/// Warm-started continuation over `grid`; certification and rate computation
/// run in a worker pool afterwards, rows stay in grid order.
inline SweepResult run_sweep(const std::function<NepvProblem(double)>& make,
                             const std::vector<double>& grid, const StiefelPoint& start,
                             const SweepOptions& opts) {
  SweepResult res;
  res.rows.resize(grid.size());
  res.solutions.resize(grid.size());
  std::vector<ScfReport> plains(grid.size());
  StiefelPoint warm = start;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    SweepRow& row = res.rows[i];
    row.param = grid[i];
    try {
      const NepvProblem p = make(grid[i]);
      SolveAttempt at = solve_with_fallback(p, warm, opts.reference);
      row.converged = at.plain_converged;
      row.sigma_used = at.sigma_used;
      row.iterations = at.plain.iterations;
      row.divergence = at.plain_converged ? "none" : to_string(at.plain.divergence_kind);
      row.error = at.error;
      res.solutions[i] = at.reference;
      if (at.reference) warm = *at.reference;
      plains[i] = std::move(at.plain);
    } catch (const Error& e) {
      row.error = e.what();
    }
  }
  parallel_for(
      grid.size(),
      [&](std::size_t i) {
        SweepRow& row = res.rows[i];
        if (!res.solutions[i]) return;
        try {
          const NepvProblem p = make(grid[i]);
          const SolutionCertificate cert = certify(p, *res.solutions[i]);
          row.gap = cert.gap;
          const RateEstimate est = rho_L(cert, p, std::nullopt, opts.radius);
          row.rho_l = est.rho;
          row.rate_converged = est.converged;
          if (opts.observe && row.converged) {
            const ObservedRate ob = observed_rate(plains[i], *res.solutions[i], opts.window);
            if (ob.defined) row.observed_rate = ob.rate;
            const ObservedRate on = observed_nres_rate(plains[i], opts.window);
            if (on.defined) row.observed_nres_rate = on.rate;
          }
        } catch (const Error& e) {
          row.error = e.what();
        }
        plains[i].iterates.clear();
      },
      opts.threads);
  return res;
}

/// Contiguous parameter intervals where rho_L > 1, with endpoints linearly
/// interpolated between grid points.
inline std::vector<std::pair<double, double>> divergence_intervals(const std::vector<SweepRow>& rows) {
  std::vector<std::pair<double, double>> out;
  auto crossing = [](const SweepRow& a, const SweepRow& b) {
    const double fa = a.rho_l - 1.0, fb = b.rho_l - 1.0;
    return a.param + (b.param - a.param) * fa / (fa - fb);
  };
  bool inside = false;
  double lo = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!std::isfinite(rows[i].rho_l)) continue;
    const bool above = rows[i].rho_l > 1.0;
    if (above && !inside) {
      inside = true;
      lo = rows[i].param;
      for (std::size_t j = i; j-- > 0;) {
        if (std::isfinite(rows[j].rho_l)) {
          lo = crossing(rows[j], rows[i]);
          break;
        }
      }
    } else if (!above && inside) {
      inside = false;
      double hi = rows[i].param;
      for (std::size_t j = i; j-- > 0;) {
        if (std::isfinite(rows[j].rho_l)) {
          hi = crossing(rows[j], rows[i]);
          break;
        }
      }
      out.emplace_back(lo, hi);
    }
  }
  if (inside) out.emplace_back(lo, rows.back().param);
  return out;
}

// ---------------------------------------------------------------------------
// Level-shift studies.

struct ShiftRow {
  double sigma = 0.0;
  double rho = kNaN;
  double observed_rate = kNaN;
  bool converged = false;
  std::string error;
};

struct ShiftSweepResult {
  std::vector<ShiftRow> rows;
  SigmaLowerResult lower;
  double argmin_sigma = kNaN;
  double min_rho = kNaN;
};

struct ShiftSweepOptions {
  RadiusOptions radius;
  RateWindow window;
  bool observe = true;
  int observe_max_iters = 3000;
  double perturbation = 1e-4;
  std::uint64_t seed = 7;
  bool refine = true;
  int refine_iters = 80;
  unsigned threads = 0;
  double tol = 1e-13;
};

/// Golden-section search for the minimum of f on [a, b].
inline std::pair<double, double> golden_min(const std::function<double(double)>& f, double a,
                                            double b, int iters) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc <= fd) {
      b = d; d = c; fd = fc;
      c = b - g * (b - a); fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + g * (b - a); fd = f(d);
    }
  }
  return fc <= fd ? std::make_pair(c, fc) : std::make_pair(d, fd);
}

inline ShiftSweepResult run_shift_sweep(const NepvProblem& p, const SolutionCertificate& cert,
                                        const std::vector<double>& sigmas,
                                        const ShiftSweepOptions& opts) {
  ShiftSweepResult res;
  res.lower = sigma_lower(cert, p);
  res.rows.resize(sigmas.size());
  auto rho_at = [&](double s) -> double {
    try {
      return rho_L(cert, p, s, opts.radius).rho;
    } catch (const Error&) {
      return kNaN;
    }
  };
  parallel_for(
      sigmas.size(),
      [&](std::size_t i) {
        ShiftRow& row = res.rows[i];
        row.sigma = sigmas[i];
        try {
          row.rho = rho_L(cert, p, sigmas[i], opts.radius).rho;
        } catch (const Error& e) {
          row.error = e.what();
          return;
        }
        if (!opts.observe) return;
        std::mt19937_64 rng(opts.seed + i);
        const Mat x0 = cert.x_star.matrix() + opts.perturbation * random_tangent(cert.x_star, rng);
        ScfOptions so;
        so.tol = opts.tol;
        so.max_iters = opts.observe_max_iters;
        so.keep_iterates = true;
        so.stop_on_oscillation = true;
        const ScfReport rep = run_level_shifted_scf(p, StiefelPoint::from_any(x0), sigmas[i], so);
        row.converged = rep.converged && sin_theta_fro(rep.final_x, cert.x_star) <= 1e-6;
        if (row.converged) {
          const ObservedRate ob = observed_rate(rep, cert.x_star, opts.window);
          if (ob.defined) row.observed_rate = ob.rate;
        }
      },
      opts.threads);
  std::size_t best = sigmas.size();
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    if (std::isfinite(res.rows[i].rho) && (best == sigmas.size() || res.rows[i].rho < res.rows[best].rho)) {
      best = i;
    }
  }
  if (best == sigmas.size()) return res;
  res.argmin_sigma = res.rows[best].sigma;
  res.min_rho = res.rows[best].rho;
  if (opts.refine && sigmas.size() >= 3) {
    const double lo = res.rows[best == 0 ? 0 : best - 1].sigma;
    const double hi = res.rows[std::min(best + 1, sigmas.size() - 1)].sigma;
    auto f = [&](double s) {
      const double r = rho_at(s);
      return std::isfinite(r) ? r : INFINITY;
    };
    const auto [s, r] = golden_min(f, lo, hi, opts.refine_iters);
    if (r < res.min_rho) {
      res.argmin_sigma = s;
      res.min_rho = r;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Continuation to a single parameter value.

struct ContinuationResult {
  std::optional<StiefelPoint> solution;
  double sigma_used = 0.0;
};

/// Follows the solution from the linear-pencil guess at `from` to `to` in
/// `steps` warm-started solves, falling back to a level shift when needed.
inline ContinuationResult continue_to(const std::function<NepvProblem(double)>& make,
                                      const ExamplePreset& preset, double from, double to,
                                      int steps, const ScfOptions& scf) {
  ContinuationResult out;
  StiefelPoint x = initial_guess_linear(preset.a, preset.b, preset.d.cols(), &preset.d);
  ReferenceOptions ro;
  ro.scf = scf;
  ro.fallback_sigma = preset.fallback_sigma;
  for (const double t : linspace(from, to, steps)) {
    SolveAttempt at = solve_with_fallback(make(t), x, ro);
    if (!at.reference) return out;
    x = *at.reference;
    out.sigma_used = at.sigma_used;
  }
  out.solution = x;
  return out;
}

}  // namespace nepv
