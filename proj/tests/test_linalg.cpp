#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nepv/linalg.hpp"
#include "nepv/stiefel.hpp"
#include "oracles.hpp"

using namespace nepv;

TEST(SymEig, DiagonalTopTwo) {
  Mat s = Vec(Eigen::Vector3d(3, 1, 2)).asDiagonal();
  const SymEigResult r = sym_eig_topk(s, 2);
  EXPECT_NEAR(r.values(0), 3.0, 1e-14);
  EXPECT_NEAR(r.values(1), 2.0, 1e-14);
  EXPECT_NEAR(r.gap(), 1.0, 1e-14);
  // span {e1, e3}
  EXPECT_NEAR(r.vectors.row(1).norm(), 0.0, 1e-14);
}

TEST(SymEig, TridiagonalAnalyticTop) {
  const Index n = 4;
  Mat t = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    t(i, i) = 2;
    if (i + 1 < n) t(i, i + 1) = t(i + 1, i) = -1;
  }
  const SymEigResult r = sym_eig_topk(t, 1);
  EXPECT_NEAR(r.values(0), 2.0 - 2.0 * std::cos(4.0 * M_PI / 5.0), 1e-13);
}

TEST(SymEig, MatchesFullDecompositionOracle) {
  std::mt19937_64 rng(11);
  const Mat s = oracle::random_symmetric(8, rng);
  const SymEigResult r = sym_eig(s);
  const oracle::SortedEig o = oracle::full_eig_sorted(s);
  for (Index i = 0; i < 8; ++i) {
    EXPECT_NEAR(r.values(i), o.values[i], 1e-10);
    EXPECT_NEAR(std::abs(r.vectors.col(i).dot(o.vectors.col(i))), 1.0, 1e-10);
  }
  EXPECT_LE(orthonormality_defect(r.vectors), 1e-12);
  EXPECT_LE((s - r.vectors * r.values.asDiagonal() * r.vectors.transpose()).norm(), 1e-10 * s.norm());
}

TEST(SymEig, TopKResidual) {
  std::mt19937_64 rng(3);
  const Mat s = oracle::random_symmetric(20, rng);
  const SymEigResult r = sym_eig_topk(s, 5);
  ASSERT_EQ(r.vectors.cols(), 5);
  EXPECT_LE((s * r.vectors - r.vectors * r.values.asDiagonal()).norm(), 1e-10 * s.norm());
  for (Index i = 0; i + 1 < 5; ++i) EXPECT_GE(r.values(i), r.values(i + 1));
}

TEST(SymEig, Errors) {
  Mat a(2, 2);
  a << 1, 2, 0, 1;
  try {
    sym_eig(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::symmetry);
  }
  EXPECT_THROW(sym_eig_topk(Mat::Identity(3, 3), 4), Error);
  EXPECT_THROW(sym_eig_topk(Mat::Identity(3, 3), 0), Error);
}

TEST(Svd, RankAndFactors) {
  Mat d = Vec(Eigen::Vector2d(2, 0)).asDiagonal();
  SvdResult s = svd_econ(d);
  EXPECT_DOUBLE_EQ(s.sigma(0), 2.0);
  EXPECT_DOUBLE_EQ(s.sigma(1), 0.0);
  EXPECT_EQ(s.numerical_rank, 1);

  std::mt19937_64 rng(5);
  const Mat q = random_orthogonal(4, rng);
  s = svd_econ(q);
  EXPECT_EQ(s.numerical_rank, 4);
  EXPECT_NEAR((s.sigma - Vec::Ones(4)).norm(), 0.0, 1e-13);

  const Vec u1 = random_gaussian(5, 1, rng), u2 = random_gaussian(5, 1, rng);
  const Vec v1 = random_gaussian(3, 1, rng), v2 = random_gaussian(3, 1, rng);
  const Mat a = u1 * v1.transpose() + u2 * v2.transpose();
  s = svd_econ(a);
  EXPECT_EQ(s.numerical_rank, 2);
  EXPECT_LE((a - s.u * s.sigma.asDiagonal() * s.v.transpose()).norm(), 1e-12);
  EXPECT_LE(orthonormality_defect(s.u), 1e-12);
  EXPECT_LE(orthonormality_defect(s.v), 1e-12);
}

TEST(Lyapunov, IdentityAndScalar) {
  std::mt19937_64 rng(1);
  const Mat c = oracle::random_symmetric(3, rng);
  EXPECT_LE((solve_lyapunov_spd(Mat::Identity(3, 3), c) - 0.5 * c).norm(), 1e-14);
  Mat m(1, 1), c1(1, 1);
  m << 2;
  c1 << 8;
  EXPECT_NEAR(solve_lyapunov_spd(m, c1)(0, 0), 2.0, 1e-15);
}

TEST(Lyapunov, MatchesKroneckerOracle) {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 5; ++t) {
    const Mat m = oracle::random_spd(4, rng);
    const Mat c = oracle::random_symmetric(4, rng);
    const Mat l = solve_lyapunov_spd(m, c);
    const Mat ref = oracle::kronecker_lyapunov(m, c);
    EXPECT_LE((l - ref).norm() / ref.norm(), 1e-10);
    EXPECT_LE(symmetry_defect(l), 1e-12 * l.norm());
  }
}

TEST(Lyapunov, RejectsIndefinite) {
  Mat m = Vec(Eigen::Vector2d(1, -1)).asDiagonal();
  try {
    solve_lyapunov_spd(m, Mat::Identity(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::definiteness);
  }
}

TEST(PrincipalAngles, Cases) {
  std::mt19937_64 rng(2);
  const StiefelPoint x = random_stiefel(6, 2, rng);
  EXPECT_LE(principal_angles(x, x).angles.maxCoeff(), 1e-12);
  const Mat xq = x.matrix() * random_orthogonal(2, rng);
  EXPECT_LE(principal_angles(x, xq).angles.maxCoeff(), 1e-7);
  EXPECT_LE(principal_angles(x, xq).sin_theta_fro, 1e-12);

  const Mat e12 = Mat::Identity(4, 4).leftCols(2), e34 = Mat::Identity(4, 4).rightCols(2);
  const Vec a = principal_angles(e12, e34).angles;
  EXPECT_NEAR(a(0), M_PI / 2, 1e-14);
  EXPECT_NEAR(a(1), M_PI / 2, 1e-14);

  Mat u(2, 1), v(2, 1);
  u << 1, 0;
  v << std::cos(0.3), std::sin(0.3);
  EXPECT_NEAR(principal_angles(u, v).angles(0), 0.3, 1e-14);

  try {
    principal_angles(2.0 * u, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::orthonormality);
  }
}

namespace {
LinearOperator from_matrix(const Mat& k, Index rows, Index cols) {
  LinearOperator op;
  op.rows = rows;
  op.cols = cols;
  op.apply = [k, rows, cols](const Mat& z) -> Mat {
    const Vec y = k * Eigen::Map<const Vec>(z.data(), z.size());
    return Eigen::Map<const Mat>(y.data(), rows, cols);
  };
  return op;
}
}  // namespace

TEST(SpectralRadius, TrivialOperators) {
  LinearOperator id;
  id.rows = id.cols = 2;
  id.apply = [](const Mat& z) -> Mat { return z; };
  for (RadiusMethod m : {RadiusMethod::dense, RadiusMethod::power, RadiusMethod::krylov}) {
    RadiusOptions o;
    o.method = m;
    EXPECT_NEAR(spectral_radius(id, o).rho, 1.0, 1e-10) << to_string(m);
  }

  Mat n = Mat::Zero(3, 3);
  n(0, 1) = 1;
  n(1, 2) = 1;
  LinearOperator nil;
  nil.rows = 3;
  nil.cols = 2;
  nil.apply = [n](const Mat& z) -> Mat { return n * z; };
  EXPECT_NEAR(spectral_radius(nil).rho, 0.0, 1e-7);

  Mat k(2, 2);
  k << 0, 2, 0.5, 0;
  const LinearOperator pm = from_matrix(k, 2, 1);
  EXPECT_NEAR(spectral_radius(pm).rho, 1.0, 1e-12);
  RadiusOptions po;
  po.method = RadiusMethod::power;
  EXPECT_NEAR(spectral_radius(pm, po).rho, 1.0, 1e-8);
}

TEST(SpectralRadius, MatricizeMatchesBasisApplication) {
  std::mt19937_64 rng(9);
  const Mat k = random_gaussian(6, 6, rng);
  const Mat m = matricize(from_matrix(k, 3, 2));
  EXPECT_LE((m - k).norm(), 1e-14);
}

TEST(SpectralRadius, DensePowerKrylovAgreeOnRandomOperators) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 6; ++t) {
    const Index rows = 5 + t, cols = 1 + t % 3;
    const Index m = rows * cols;
    // Diagonalizable with a dominant real eigenvalue.
    Vec lam = Vec::LinSpaced(m, -0.6, 0.6);
    lam(0) = 0.9;
    const Mat v = random_gaussian(m, m, rng) + 3.0 * Mat::Identity(m, m);
    const Mat k = v * lam.asDiagonal() * v.inverse();
    const LinearOperator op = from_matrix(k, rows, cols);
    const double ref = oracle::dense_radius(k);
    RadiusOptions o;
    o.method = RadiusMethod::dense;
    const double dense = spectral_radius(op, o).rho;
    o.method = RadiusMethod::power;
    const RadiusResult power = spectral_radius(op, o);
    o.method = RadiusMethod::krylov;
    const RadiusResult krylov = spectral_radius(op, o);
    EXPECT_NEAR(dense, ref, 1e-10);
    EXPECT_TRUE(power.converged);
    EXPECT_NEAR(power.rho, dense, 1e-6);
    EXPECT_NEAR(krylov.rho, dense, 1e-6);
  }
}

TEST(SpectralRadius, ComplexDominantPair) {
  Mat k = Mat::Zero(4, 4);
  k(0, 1) = -0.8;
  k(1, 0) = 0.8;
  k(2, 2) = 0.3;
  k(3, 3) = -0.1;
  const LinearOperator op = from_matrix(k, 4, 1);
  RadiusOptions o;
  o.method = RadiusMethod::power;
  EXPECT_NEAR(spectral_radius(op, o).rho, 0.8, 1e-8);
  o.method = RadiusMethod::krylov;
  EXPECT_NEAR(spectral_radius(op, o).rho, 0.8, 1e-8);
}

TEST(SpectralRadius, DenseAboveCapIsCapabilityError) {
  LinearOperator id;
  id.rows = 10;
  id.cols = 10;
  id.apply = [](const Mat& z) -> Mat { return z; };
  RadiusOptions o;
  o.method = RadiusMethod::dense;
  o.dense_cap = 50;
  try {
    spectral_radius(id, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability);
  }
  o.method = RadiusMethod::automatic;
  const RadiusResult r = spectral_radius(id, o);
  EXPECT_NE(r.method, RadiusMethod::dense);
  EXPECT_NEAR(r.rho, 1.0, 1e-10);
}

TEST(SpectralRadius, PowerReportsNonConvergence) {
  // Clustered spectrum and a budget of three iterations.
  Mat k = Vec::LinSpaced(40, 0.0, 0.99).asDiagonal();
  const LinearOperator op = from_matrix(k, 40, 1);
  RadiusOptions o;
  o.method = RadiusMethod::power;
  o.block_size = 1;
  o.max_iters = 3;
  const RadiusResult r = spectral_radius(op, o);
  EXPECT_FALSE(r.converged);
  EXPECT_TRUE(std::isfinite(r.rho));
}
