#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "certri/certify.hpp"
#include "certri/sdp.hpp"

using namespace certri;

namespace {

TriangulationProblem scaled_problem(int n, std::uint64_t seed, double sigma = 0.0, int outliers = 0) {
  SimulationConfig cfg;
  cfg.n_views = n;
  cfg.sigma = sigma;
  cfg.n_outliers = outliers;
  return scale_problem(simulate_problem(cfg, seed));
}

SpMat unit_matrix(int d, int a, int b) {
  SpMat A(d, d);
  A.insert(a, b) = a == b ? 1.0 : 0.5;
  if (a != b) A.insert(b, a) = 0.5;
  return A;
}

SdpStandardForm trace_form() {
  SdpStandardForm f;
  f.d = 2;
  f.C = Eigen::Matrix2d::Identity();
  f.constraints.push_back({unit_matrix(2, 0, 0), 1.0});
  return f;
}

Eigen::MatrixXd random_symmetric(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd A(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) A(i, j) = g(rng);
  }
  return 0.5 * (A + A.transpose());
}

}  // namespace

TEST(StandardForm, EpipolarThreeViews) {
  const auto q = build_relaxation(scaled_problem(3, 1), RelaxationKind::T);
  const auto f = to_standard_form(q);
  EXPECT_EQ(f.d, 7);
  ASSERT_EQ(f.constraints.size(), 4u);
  for (const auto& c : f.constraints) EXPECT_EQ(c.A.rows(), 7);
  EXPECT_EQ(f.constraints.back().b, 1.0);
  EXPECT_EQ(f.C, q.M);
}

TEST(StandardForm, RankOneGroundTruthIsFeasible) {
  const auto p = scaled_problem(3, 2);
  for (auto kind : {RelaxationKind::T, RelaxationKind::RT, RelaxationKind::TF, RelaxationKind::RTF}) {
    const auto f = to_standard_form(build_relaxation(p, kind));
    const Eigen::VectorXd z = lift(kind, observations(p), {}, p.ground_truth->X);
    const Eigen::MatrixXd Z = z * z.transpose();
    ASSERT_FALSE(f.constraints.empty());
    for (const auto& c : f.constraints) EXPECT_NEAR(detail::trace_product(c.A, Z), c.b, 1e-9);
  }
}

TEST(Solve, AnalyticTwoByTwo) {
  for (auto method : {SolverMethod::InteriorPoint, SolverMethod::Splitting}) {
    SolverSettings s;
    s.method = method;
    const auto sol = solve(trace_form(), s);
    EXPECT_EQ(sol.status, SolverStatus::Solved) << to_string(method);
    EXPECT_NEAR(sol.Z.trace(), 1.0, 1e-8);
    EXPECT_NEAR(sol.Z(0, 0), 1.0, 1e-8);
    EXPECT_NEAR(sol.Z(1, 1), 0.0, 1e-8);
    EXPECT_NEAR(sol.lambda, 1.0, 1e-8);
  }
}

TEST(Solve, NoiseFreeRobustEpipolarIsRankOneAtGroundTruth) {
  const auto p = scaled_problem(3, 4);
  const auto q = build_relaxation(p, RelaxationKind::RT);
  const auto sol = solve(to_standard_form(q));
  EXPECT_EQ(sol.status, SolverStatus::Solved);
  EXPECT_NEAR(q.M.cwiseProduct(sol.Z).sum(), 0.0, 1e-8);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sol.Z);
  const Eigen::VectorXd ev = es.eigenvalues();
  EXPECT_LT(ev(ev.size() - 2) / ev(ev.size() - 1), 1e-6);
  Eigen::VectorXd v = es.eigenvectors().col(ev.size() - 1);
  v /= v(v.size() - 1);
  const Eigen::VectorXd z = lift(RelaxationKind::RT, observations(p), {}, p.ground_truth->X);
  EXPECT_LT((v - z).norm(), 1e-6);
}

TEST(Solve, NoiseFreeEpipolarRecoversObservations) {
  const auto p = scaled_problem(4, 5);
  const auto q = build_relaxation(p, RelaxationKind::T);
  const auto sol = solve(to_standard_form(q));
  EXPECT_EQ(sol.status, SolverStatus::Solved);
  EXPECT_NEAR(q.M.cwiseProduct(sol.Z).sum(), 0.0, 1e-8);
  // Column of Z at the homogeneous coordinate is z * z_last = (x; 1).
  const Eigen::VectorXd col = sol.Z.col(q.dim() - 1) / sol.Z(q.dim() - 1, q.dim() - 1);
  for (int i = 0; i < p.size(); ++i) EXPECT_LT((col.segment<2>(2 * i) - p.views[i].observation).norm(), 1e-6);
}

TEST(Solve, SolvedMeansResidualsWithinTolerance) {
  for (auto kind : {RelaxationKind::RT, RelaxationKind::RTF}) {
    const auto f = to_standard_form(build_relaxation(scaled_problem(3, 6, 10.0, 1), kind));
    SolverSettings s;
    const auto sol = solve(f, s);
    ASSERT_EQ(sol.status, SolverStatus::Solved);
    EXPECT_LE(sol.primal_residual, s.eps_primal);
    EXPECT_LE(sol.dual_residual, s.eps_dual);
    EXPECT_LE(sol.gap, s.eps_gap);
    const Residuals r = residuals(f, sol.Z, sol.lambda, sol.xi);
    EXPECT_DOUBLE_EQ(r.primal, sol.primal_residual);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sol.Z).eigenvalues().minCoeff(), -1e-8 * (1.0 + sol.Z.norm()));
    // Weak duality.
    EXPECT_LE(sol.lambda, f.C.cwiseProduct(sol.Z).sum() + 1e-8);
  }
}

TEST(Solve, DeterministicOutput) {
  const auto f = to_standard_form(build_relaxation(scaled_problem(4, 7, 5.0, 1), RelaxationKind::RT));
  const auto a = solve(f);
  const auto b = solve(f);
  EXPECT_EQ(a.Z, b.Z);
  EXPECT_EQ(a.xi, b.xi);
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Solve, IterationLogIsCsv) {
  std::ostringstream log;
  SolverSettings s;
  s.log = &log;
  const auto sol = solve(to_standard_form(build_relaxation(scaled_problem(3, 8), RelaxationKind::RT)), s);
  std::istringstream in(log.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3) << line;
  }
  EXPECT_GT(lines, 0);
  EXPECT_LE(lines, sol.iterations + 1);
}

TEST(Solve, InvalidInputsRejected) {
  SolverSettings s;
  s.eps_gap = 0.0;
  try {
    solve(trace_form(), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
  }
  auto f = trace_form();
  f.C(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    solve(f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NumericalBreakdown);
  }
  f = trace_form();
  f.constraints.clear();
  EXPECT_THROW(solve(f), Error);
}

TEST(Solve, UnscaledInputMatchesScaled) {
  const auto raw = simulate_problem(SimulationConfig{5, 5.0, 1}, 9);
  const auto scaled = scale_problem(raw);
  const auto qs = build_relaxation(scaled, RelaxationKind::RT);
  const auto qr = build_relaxation(raw, RelaxationKind::RT);
  const auto ss = solve(to_standard_form(qs));
  const auto sr = solve(to_standard_form(qr));
  const double W = scaled.scale;
  // Objectives differ by the W^2 factor.
  EXPECT_NEAR(qr.M.cwiseProduct(sr.Z).sum(), W * W * qs.M.cwiseProduct(ss.Z).sum(),
              1e-6 * (1.0 + std::abs(qr.M.cwiseProduct(sr.Z).sum())));
}

TEST(PsdProject, PsdInputUnchanged) {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd A = random_symmetric(6, rng);
  const Eigen::MatrixXd P = A * A.transpose();
  EXPECT_LT((psd_project(P) - P).cwiseAbs().maxCoeff(), 1e-14 * (1.0 + P.norm()));
}

TEST(PsdProject, ClampsNegativeEigenvalue) {
  const Eigen::MatrixXd S = Eigen::Vector2d(1.0, -1.0).asDiagonal();
  const Eigen::MatrixXd expected = Eigen::Vector2d(1.0, 0.0).asDiagonal();
  EXPECT_LT((psd_project(S) - expected).norm(), 1e-15);
}

TEST(PsdProject, DistanceMatchesNegativeSpectrum) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd S = random_symmetric(8, rng);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues();
    const double expected = std::sqrt(ev.cwiseMin(0.0).squaredNorm());
    const Eigen::MatrixXd P = psd_project(S);
    EXPECT_NEAR((S - P).norm(), expected, 1e-12);
    EXPECT_LT((psd_project(P) - P).norm(), 1e-12);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(Residuals, AnalyticPairIsExact) {
  const auto p = scaled_problem(4, 10);
  const auto q = build_relaxation(p, RelaxationKind::RT);
  const auto cert = analytic_certificate(p, RelaxationKind::RT);
  const Eigen::MatrixXd Z = cert.z_hat * cert.z_hat.transpose();
  const Residuals r = residuals(to_standard_form(q), Z, cert.lambda, cert.xi);
  EXPECT_LT(r.primal, 1e-10);
  EXPECT_LT(r.dual, 1e-10);
  EXPECT_LT(r.gap, 1e-10);
}

TEST(Residuals, ZeroMatrixViolatesNormalisation) {
  const auto q = build_relaxation(scaled_problem(3, 11), RelaxationKind::T);
  const Residuals r = residuals(to_standard_form(q), Eigen::MatrixXd::Zero(q.dim(), q.dim()), 0.0,
                                Eigen::VectorXd::Zero(q.num_homogeneous()));
  EXPECT_DOUBLE_EQ(r.primal, 0.5);
}

TEST(Residuals, PerturbedMultipliersLoseDualFeasibility) {
  const auto f = to_standard_form(build_relaxation(scaled_problem(3, 12, 5.0), RelaxationKind::RT));
  const auto sol = solve(f);
  ASSERT_EQ(sol.status, SolverStatus::Solved);
  const double base = residuals(f, sol.Z, sol.lambda, sol.xi).dual;
  double worst = 0.0;
  for (int i = 0; i < sol.xi.size(); ++i) {
    for (double sign : {-1.0, 1.0}) {
      Eigen::VectorXd xi = sol.xi;
      xi(i) += sign * 1e-3;
      worst = std::max(worst, residuals(f, sol.Z, sol.lambda, xi).dual);
    }
  }
  EXPECT_GT(worst, base);
  EXPECT_GT(worst, 0.0);
}

TEST(Residuals, SizeMismatchThrows) {
  const auto f = trace_form();
  EXPECT_THROW(residuals(f, Eigen::MatrixXd::Zero(3, 3), 0.0, Eigen::VectorXd()), Error);
  EXPECT_THROW(residuals(f, Eigen::MatrixXd::Zero(2, 2), 0.0, Eigen::VectorXd::Zero(2)), Error);
}
