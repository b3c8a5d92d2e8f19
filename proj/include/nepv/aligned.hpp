#pragma once

#include <string>

#include "nepv/alignment.hpp"
#include "nepv/problem.hpp"

namespace nepv {

/// G(X) = H_phi + tr(M) H_psi + psi (D Q_o^T X^T + X Q_o D^T).
struct AlignedEvaluation {
  Mat g;
  CanonicalPolarBundle bundle;
  double psi_val = 0.0;
  double phi_val = 0.0;
  double tr_m = 0.0;
  Mat h_psi;
  Mat coupling;  // D Q_o^T X^T + X Q_o D^T
};

inline AlignedEvaluation g_matrix_ambient(const NepvProblem& p, const Mat& x) {
  check_shape(p, x);
  AlignedEvaluation ev;
  ev.bundle = canonical_polar(x, p.dfact);
  ev.psi_val = p.psi(x);
  ev.phi_val = p.phi(x);
  ev.tr_m = ev.bundle.m.trace();
  ev.h_psi = p.h_psi(x);
  const Mat xqd = x * ev.bundle.q_o * p.d.transpose();
  ev.coupling = xqd + xqd.transpose();
  Mat g = p.h_phi(x) + ev.tr_m * ev.h_psi + ev.psi_val * ev.coupling;
  ev.g = 0.5 * (g + g.transpose());
  return ev;
}

inline AlignedEvaluation g_matrix(const NepvProblem& p, const StiefelPoint& x) {
  return g_matrix_ambient(p, x);
}

/// DG(X)[E] given the evaluation of G at X.
inline Mat dg_ambient(const NepvProblem& p, const Mat& x, const AlignedEvaluation& ev,
                      const Mat& e) {
  if (!p.has_derivatives()) {
    throw Error(ErrorKind::capability, "problem has no derivative callbacks");
  }
  check_shape(p, e);
  const PolarDerivative dpol = d_canonical_polar(x, e, p.dfact, ev.bundle);
  const Mat dq_term = x * dpol.dq_o * p.d.transpose();
  const Mat e_term = e * ev.bundle.q_o * p.d.transpose();
  Mat out = p.dh_phi(x, e);
  out += dpol.dm.trace() * ev.h_psi;
  out += ev.tr_m * p.dh_psi(x, e);
  out += p.dpsi(x, e) * ev.coupling;
  out += ev.psi_val * (dq_term + dq_term.transpose() + e_term + e_term.transpose());
  return 0.5 * (out + out.transpose());
}

inline Mat dg_ambient(const NepvProblem& p, const Mat& x, const Mat& e) {
  return dg_ambient(p, x, g_matrix_ambient(p, x), e);
}

inline Mat dg(const NepvProblem& p, const StiefelPoint& x, const Mat& e) {
  return dg_ambient(p, x, e);
}

/// g(X) = phi(X) + psi(X) * sum_i sigma_i(X^T D), the objective at the best alignment.
inline double aligned_objective(const NepvProblem& p, const StiefelPoint& x) {
  check_shape(p, x);
  const Vec s = Eigen::JacobiSVD<Mat>(x.matrix().transpose() * p.d).singularValues();
  return p.phi(x) + p.psi(x) * s.sum();
}

}  // namespace nepv
