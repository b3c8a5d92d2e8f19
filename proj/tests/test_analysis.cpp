#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace nepv;
using fixture::preset_problem;
using fixture::reference;

namespace {

struct Certified {
  NepvProblem p;
  SolutionCertificate c;
};

/// Printed example at parameter t with its certified reference solution.
std::unique_ptr<Certified> certified(const std::string& id, double t) {
  auto out = std::make_unique<Certified>();
  out->p = preset_problem(id, t);
  out->c = certify(out->p, reference(id, t));
  return out;
}

NepvProblem constant_h(const Mat& a, Index k) { return make_quadratic_problem(a, Mat::Zero(a.rows(), k)); }

}  // namespace

// ---------------------------------------------------------------------------
// certify

TEST(Certify, ConstantHGap) {
  const Mat a = Vec(Eigen::Vector4d(4, 3, 1, -2)).asDiagonal();
  const NepvProblem p = constant_h(a, 2);
  const SolutionCertificate c = certify(p, StiefelPoint(Mat::Identity(4, 2)));
  EXPECT_NEAR(c.gap, 2.0, 1e-14);
  EXPECT_NEAR(c.lambda_star(0), 4.0, 1e-14);
  EXPECT_NEAR(c.lambda_perp(1), -2.0, 1e-14);
  Mat basis(4, 4);
  basis << c.x_star.matrix(), c.x_perp;
  EXPECT_LE(orthonormality_defect(basis), 1e-10);
}

TEST(Certify, ExampleOneSolutionIsRegular) {
  const auto s = certified("ex1", 0.46);
  EXPECT_TRUE(s->c.regular.definite);
  EXPECT_TRUE(s->c.regular.rank_preserving);
  EXPECT_GT(s->c.gap, 0.0);
}

TEST(Certify, RotatedSolutionRejectedUntilRealigned) {
  const NepvProblem p = preset_problem("ex5", 1.0);
  const StiefelPoint x = reference("ex5", 1.0);
  std::mt19937_64 rng(1);
  const StiefelPoint xq(x.matrix() * random_orthogonal(2, rng), 1e-12, true);
  EXPECT_THROW(certify(p, xq), Error);
  const SolutionCertificate a = certify(p, x), b = certify(p, align(xq, p.d).aligned_x);
  EXPECT_NEAR(a.gap, b.gap, 1e-10);
  EXPECT_LE((a.lambda_star - b.lambda_star).norm(), 1e-10);
  EXPECT_LE((a.lambda_perp - b.lambda_perp).norm(), 1e-10);
}

TEST(Certify, BottomEigenspaceIsMispositioned) {
  const Mat a = Vec(Eigen::Vector4d(4, 3, 1, -2)).asDiagonal();
  const NepvProblem p = constant_h(a, 2);
  try {
    certify(p, StiefelPoint(Mat::Identity(4, 4).rightCols(2)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::mispositioning);
  }
}

TEST(Certify, RejectsNonSolutionsAndZeroGap) {
  const Mat a = Vec(Eigen::Vector4d(3, 1, 1, 0)).asDiagonal();
  const NepvProblem p = constant_h(a, 2);
  std::mt19937_64 rng(2);
  EXPECT_THROW(certify(p, random_stiefel(4, 2, rng)), Error);
  try {
    certify(p, StiefelPoint(Mat::Identity(4, 2)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::gap || e.kind() == ErrorKind::mispositioning) << e.what();
  }
}

TEST(Certify, FullDimensionHasNoComplement) {
  std::mt19937_64 rng(3);
  const NepvProblem p = constant_h(oracle::random_symmetric(3, rng), 3);
  const SolutionCertificate c = certify(p, StiefelPoint(Mat::Identity(3, 3)));
  EXPECT_TRUE(std::isinf(c.gap));
  EXPECT_EQ(rho_L(c, p).rho, 0.0);
}

// ---------------------------------------------------------------------------
// rate operators

TEST(RateOperators, LinearAndMatricizationConsistent) {
  const auto s = certified("ex5", 4.75);
  std::mt19937_64 rng(4);
  const Index m = s->c.lambda_perp.size(), k = s->c.lambda_star.size();
  EXPECT_LE(apply_L(s->c, s->p, Mat::Zero(m, k)).norm(), 0.0);
  const Mat z1 = random_gaussian(m, k, rng), z2 = random_gaussian(m, k, rng);
  const Mat lhs = apply_L(s->c, s->p, 1.5 * z1 + 2.0 * z2);
  const Mat rhs = 1.5 * apply_L(s->c, s->p, z1) + 2.0 * apply_L(s->c, s->p, z2);
  EXPECT_LE((lhs - rhs).norm(), 1e-12 * rhs.norm());
  const Mat k_mat = matricize(make_L_operator(s->c, s->p));
  const Vec y = k_mat * Eigen::Map<const Vec>(z1.data(), z1.size());
  const Mat direct = apply_L(s->c, s->p, z1);
  EXPECT_LE((y - Eigen::Map<const Vec>(direct.data(), direct.size())).norm(), 1e-12 * direct.norm());
}

TEST(RateOperators, ShiftedOperatorLimits) {
  const auto s = certified("ex1", 0.46);
  std::mt19937_64 rng(5);
  const Mat z = random_gaussian(2, 1, rng);
  EXPECT_LE((apply_L_shifted(s->c, s->p, z, 0.0) - apply_L(s->c, s->p, z)).norm(), 1e-12 * z.norm());
  EXPECT_LE((apply_L_shifted(s->c, s->p, z, 1e8) - z).norm(), 1e-6 * z.norm());
  const Mat sq = scaling_matrix(s->c, 7.0).cwiseProduct(apply_Q(s->c, s->p, z)) + z;
  EXPECT_LE((sq - apply_L_shifted(s->c, s->p, z, 7.0)).norm(), 1e-12 * z.norm());
}

TEST(RateOperators, SingularScaling) {
  const auto s = certified("ex1", 0.46);
  try {
    apply_L_shifted(s->c, s->p, Mat::Ones(2, 1), -s->c.gap);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singular_scaling);
  }
}

TEST(RateOperators, ConstantHQ) {
  const Mat a = Vec(Eigen::Vector4d(4, 3, 1, -2)).asDiagonal();
  const NepvProblem p = constant_h(a, 2);
  const SolutionCertificate c = certify(p, StiefelPoint(Mat::Identity(4, 2)));
  std::mt19937_64 rng(6);
  const Mat z = random_gaussian(2, 2, rng);
  const Mat expected = c.lambda_perp.asDiagonal() * z - z * c.lambda_star.asDiagonal();
  EXPECT_LE((apply_Q(c, p, z) - expected).norm(), 1e-13);
  EXPECT_EQ(rho_L(c, p).rho, 0.0);
}

TEST(RateOperators, QuadraticFormNonPositiveAtMaximizer) {
  const auto s = certified("ex1", 0.46);
  std::mt19937_64 rng(7);
  double worst = -INFINITY;
  for (int i = 0; i < 200; ++i) {
    Mat z = random_gaussian(2, 1, rng);
    z /= z.norm();
    worst = std::max(worst, trace_of_product(z, apply_Q(s->c, s->p, z)));
  }
  EXPECT_LE(worst, 1e-8);
}

// ---------------------------------------------------------------------------
// spectral radii

TEST(RhoL, PrintedRates) {
  {
    const auto s = certified("ex1", 0.46);
    EXPECT_NEAR(rho_L(s->c, s->p).rho, 0.894490, 1e-6);
  }
  {
    const auto s = certified("ex4", 0.1);
    EXPECT_NEAR(rho_L(s->c, s->p).rho, 0.348739, 1e-6);
  }
  {
    const auto s = certified("ex5", 4.75);
    EXPECT_NEAR(rho_L(s->c, s->p).rho, 0.977613, 1e-6);
  }
}

TEST(RhoL, MethodsAgree) {
  const auto s = certified("ex5", 4.75);
  RadiusOptions o;
  o.method = RadiusMethod::dense;
  const double dense = rho_L(s->c, s->p, std::nullopt, o).rho;
  o.method = RadiusMethod::power;
  EXPECT_NEAR(rho_L(s->c, s->p, std::nullopt, o).rho, dense, 1e-6);
  o.method = RadiusMethod::krylov;
  EXPECT_NEAR(rho_L(s->c, s->p, std::nullopt, o).rho, dense, 1e-6);
}

TEST(RhoL, ShiftedRateNearOptimalShift) {
  const auto s = certified("ex1", 0.6);
  EXPECT_NEAR(rho_L(s->c, s->p, 41.88).rho, 0.239, 0.01);
}

TEST(RhoL, ShiftedRateTendsToOne) {
  const auto s = certified("ex2", 0.5);
  const double r3 = rho_L(s->c, s->p, 1e3).rho, r4 = rho_L(s->c, s->p, 1e4).rho,
               r5 = rho_L(s->c, s->p, 1e5).rho;
  EXPECT_LT(r3, r4);
  EXPECT_LT(r4, r5);
  EXPECT_LT(r5, 1.0);
  EXPECT_GT(r5, 0.999);
}

TEST(SigmaLower, PrintedBounds) {
  struct Case {
    const char* id;
    double t, sigma_l;
  };
  for (const Case& c : {Case{"ex1", 0.6, 85.83}, Case{"ex2", 0.5, 2.44}, Case{"ex4", 0.0, -6.81},
                        Case{"ex5", 3.0, 10.02}}) {
    const auto s = certified(c.id, c.t);
    const SigmaLowerResult r = sigma_lower(s->c, s->p);
    EXPECT_NEAR(r.sigma_l, c.sigma_l, 0.01) << c.id;
    EXPECT_NEAR(r.sigma_l, -0.5 * r.mu_min - s->c.gap, 1e-12 * std::abs(r.mu_min));
    EXPECT_LE(r.asymmetry, 1e-6) << c.id;
    EXPECT_FALSE(r.asymmetry_warning);
    for (double above : {0.1, 1.0, 10.0, 100.0}) {
      EXPECT_LT(rho_L(s->c, s->p, r.sigma_l + above).rho, 1.0) << c.id << " +" << above;
    }
  }
}

TEST(SigmaLower, IterativePathMatchesDense) {
  const auto s = certified("ex5", 3.0);
  const SigmaLowerResult dense = sigma_lower(s->c, s->p);
  SigmaLowerOptions o;
  o.dense_cap = 0;
  const SigmaLowerResult it = sigma_lower(s->c, s->p, o);
  EXPECT_TRUE(it.iterative);
  EXPECT_NEAR(it.mu_min, dense.mu_min, 1e-6 * std::abs(dense.mu_min));
  o.allow_iterative = false;
  try {
    sigma_lower(s->c, s->p, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability);
  }
}

// ---------------------------------------------------------------------------
// observed rates

TEST(ObservedRate, SyntheticGeometricHistory) {
  const ObservedRate r = observed_rate_of(oracle::geometric_history(0.5, 0.3, 40));
  ASSERT_TRUE(r.defined);
  EXPECT_NEAR(r.rate, 0.3, 1e-6);
  EXPECT_GE(r.ratios, 2);
}

TEST(ObservedRate, UndefinedCases) {
  EXPECT_FALSE(observed_rate_of(oracle::geometric_history(0.5, 0.3, 4)).defined);
  EXPECT_FALSE(observed_rate_of(std::vector<double>(30, 1e-4)).defined);
  EXPECT_FALSE(observed_rate_of(oracle::geometric_history(1e-5, 1.1, 30)).defined);
  EXPECT_FALSE(observed_rate_of(oracle::geometric_history(0.5, 0.9, 30)).defined);  // never below 1e-3
}

TEST(ObservedRate, NresAndAngleAgreeOnExampleTwo) {
  const NepvProblem p = preset_problem("ex2", 0.305);
  const StiefelPoint ref = reference("ex2", 0.305);
  ScfOptions o;
  o.max_iters = 20000;
  o.keep_iterates = true;
  const ScfReport rep = run_scf(p, fixture::perturbed(ref, 1e-3, 8), o);
  ASSERT_TRUE(rep.converged);
  const ObservedRate a = observed_rate(rep, rep.final_x), n = observed_nres_rate(rep);
  ASSERT_TRUE(a.defined);
  ASSERT_TRUE(n.defined);
  EXPECT_NEAR(a.rate, n.rate, 1e-4);
}

// ---------------------------------------------------------------------------
// finite-difference validation

TEST(FdValidate, ConstantHToy) {
  std::mt19937_64 rng(9);
  const NepvProblem p = constant_h(oracle::random_symmetric(5, rng), 2);
  const FdReport r = fd_validate(p, random_stiefel(5, 2, rng).matrix());
  EXPECT_LE(r.worst(), 1e-10);
  EXPECT_FALSE(r.polar_applicable);
}

TEST(FdValidate, PrintedInstances) {
  std::mt19937_64 rng(10);
  for (const NepvProblem& p : {preset_problem("ex1", 0.5), preset_problem("ex5", 3.0)}) {
    FdOptions o;
    o.trials = 20;
    const FdReport r = fd_validate(p, random_stiefel(p.n, p.k, rng).matrix(), o);
    EXPECT_LE(r.grad_phi, 1e-6);
    EXPECT_LE(r.grad_psi, 1e-6);
    EXPECT_LE(r.dh_phi, 1e-6);
    EXPECT_LE(r.dh_psi, 1e-6);
    EXPECT_LE(r.dm, 1e-6);
    EXPECT_LE(r.dq_o, 1e-6);
    EXPECT_LE(r.dg, 1e-6);
  }
}

TEST(FdValidate, DetectsSignFault) {
  NepvProblem p = preset_problem("ex1", 0.5);
  auto good = p.dh_phi;
  p.dh_phi = [good](const Mat& x, const Mat& e) -> Mat { return -good(x, e); };
  std::mt19937_64 rng(11);
  const FdReport r = fd_validate(p, random_stiefel(3, 1, rng).matrix());
  EXPECT_GT(r.dh_phi, 0.5);
  EXPECT_GT(r.dg, 1e-3);
}
