#include <gtest/gtest.h>

#include <random>

#include "certri/certify.hpp"

using namespace certri;

namespace {

constexpr RelaxationKind kAllKinds[] = {RelaxationKind::T, RelaxationKind::RT, RelaxationKind::TF, RelaxationKind::RTF};

TriangulationProblem scaled_problem(int n, std::uint64_t seed, double sigma = 0.0, int outliers = 0) {
  SimulationConfig cfg;
  cfg.n_views = n;
  cfg.sigma = sigma;
  cfg.n_outliers = outliers;
  return scale_problem(simulate_problem(cfg, seed));
}

int corank(const Eigen::MatrixXd& S) {
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues();
  const double tol = 1e-8 * ev.cwiseAbs().maxCoeff();
  int k = 0;
  for (int i = 0; i < ev.size(); ++i) k += ev(i) < tol ? 1 : 0;
  return k;
}

}  // namespace

TEST(MultiplierMatrix, ZeroMultipliersGiveCost) {
  const auto q = build_relaxation(scaled_problem(3, 1), RelaxationKind::RT);
  EXPECT_EQ(multiplier_matrix(q, 0.0, Eigen::VectorXd::Zero(q.num_homogeneous())), q.M);
}

TEST(MultiplierMatrix, RobustEpipolarClosedFormBlocks) {
  const auto p = scaled_problem(3, 2);
  const auto q = build_relaxation(p, RelaxationKind::RT);
  const auto a = analytic_certificate(p, RelaxationKind::RT);
  const Eigen::MatrixXd S = multiplier_matrix(q, a.lambda, a.xi);
  const int n = p.size();
  double csum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double c = p.views[i].inlier_threshold_sq;
    csum += c;
    EXPECT_NEAR(S(2 * n + i, 2 * n + i), p.views[i].observation.squaredNorm() + c, 1e-14);
    EXPECT_NEAR(S(2 * n + i, 3 * n), -c, 1e-14);
    EXPECT_NEAR(S(2 * i, 2 * n + i), -p.views[i].observation.x(), 1e-14);
  }
  EXPECT_NEAR(S(3 * n, 3 * n), csum, 1e-14);
}

TEST(MultiplierMatrix, LinearInMultipliers) {
  const auto q = build_relaxation(scaled_problem(3, 3, 4.0, 1), RelaxationKind::RTF);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd xi(q.num_homogeneous());
  for (int i = 0; i < xi.size(); ++i) xi(i) = g(rng);
  const double lambda = g(rng);
  Eigen::MatrixXd expected = q.M - lambda * Eigen::MatrixXd(q.E);
  for (int i = 0; i < xi.size(); ++i) expected += xi(i) * Eigen::MatrixXd(q.constraints[i].A);
  EXPECT_LT((multiplier_matrix(q, lambda, xi) - expected).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(MultiplierMatrix, WrongCountThrows) {
  const auto q = build_relaxation(scaled_problem(3, 1), RelaxationKind::T);
  try {
    multiplier_matrix(q, 0.0, Eigen::VectorXd::Zero(q.num_constraints()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(DualCertificate, AnalyticRobustEpipolarPasses) {
  const auto p = scaled_problem(4, 4);
  const auto q = build_relaxation(p, RelaxationKind::RT);
  const auto a = analytic_certificate(p, RelaxationKind::RT);
  const auto r = verify_dual_certificate(q, a.z_hat, a.lambda, a.xi);
  EXPECT_TRUE(r.passed());
  EXPECT_GE(r.S_min_eig, -1e-12);
  EXPECT_LE(r.Sz_norm, 1e-12);
}

TEST(DualCertificate, NegatedThetaMultiplierFailsDualFeasibility) {
  const auto p = scaled_problem(4, 4);
  const auto q = build_relaxation(p, RelaxationKind::RT);
  auto a = analytic_certificate(p, RelaxationKind::RT);
  // eta_i = -c_i on the undoubled form is -c_i / 2 on the stored one.
  a.xi(p.size() * (p.size() - 1) / 2) = -0.5 * p.views[0].inlier_threshold_sq;
  const auto r = verify_dual_certificate(q, a.z_hat, a.lambda, a.xi);
  EXPECT_FALSE(r.dual_ok);
  EXPECT_FALSE(r.passed());
}

TEST(DualCertificate, ZeroMultipliersOnEpipolar) {
  const auto p = scaled_problem(5, 5);
  const auto q = build_relaxation(p, RelaxationKind::T);
  const Eigen::VectorXd z = lift(RelaxationKind::T, observations(p), {}, p.ground_truth->X);
  const auto r = verify_dual_certificate(q, z, 0.0, Eigen::VectorXd::Zero(q.num_homogeneous()));
  EXPECT_TRUE(r.passed());
}

TEST(DualCertificate, AnalyticCertificatesOverSeedsAndSizes) {
  for (int n : {3, 5, 7}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = scaled_problem(n, 100 * seed + n);
      for (auto kind : kAllKinds) {
        if (is_fractional(kind) && n == 7 && seed > 2) continue;
        const auto q = build_relaxation(p, kind);
        const auto a = analytic_certificate(p, kind);
        const auto r = verify_dual_certificate(q, a.z_hat, a.lambda, a.xi);
        EXPECT_TRUE(r.passed()) << to_string(kind) << " n=" << n << " seed=" << seed;
        EXPECT_GE(r.S_min_eig, -1e-10);
        EXPECT_LE(r.Sz_norm, 1e-10);
        EXPECT_EQ(corank(multiplier_matrix(q, a.lambda, a.xi)), is_fractional(kind) ? 4 : 1);
      }
    }
  }
}

TEST(DualCertificate, RobustEpipolarQuadraticFormIdentity) {
  const auto p = scaled_problem(3, 6);
  const auto q = build_relaxation(p, RelaxationKind::RT);
  const auto a = analytic_certificate(p, RelaxationKind::RT);
  const Eigen::MatrixXd S = multiplier_matrix(q, a.lambda, a.xi);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = p.size();
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd z(3 * n + 1);
    for (int i = 0; i < z.size(); ++i) z(i) = g(rng);
    const double alpha = z(3 * n);
    double expected = 0.0;
    for (int i = 0; i < n; ++i) {
      const double th = z(2 * n + i);
      expected += (z.segment<2>(2 * i) - th * p.views[i].observation).squaredNorm();
      expected += p.views[i].inlier_threshold_sq * (alpha - th) * (alpha - th);
    }
    ASSERT_NEAR(z.dot(S * z), expected, 1e-10 * (1.0 + expected));
  }
}

TEST(DualCertificate, FractionalRobustCertificateIsKroneckerStructured) {
  const auto p = scaled_problem(3, 7);
  const auto q = build_relaxation(p, RelaxationKind::RTF);
  const auto a = analytic_certificate(p, RelaxationKind::RTF);
  const Eigen::MatrixXd S = multiplier_matrix(q, a.lambda, a.xi);
  const int P = q.dim() / 4;
  Eigen::MatrixXd small(P, P);
  for (int r = 0; r < P; ++r) {
    for (int c = 0; c < P; ++c) small(r, c) = S(4 * r, 4 * c);
  }
  Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(q.dim(), q.dim());
  for (int r = 0; r < P; ++r) {
    for (int c = 0; c < P; ++c) kron.block<4, 4>(4 * r, 4 * c) = small(r, c) * Eigen::Matrix4d::Identity();
  }
  EXPECT_LT((S - kron).cwiseAbs().maxCoeff(), 1e-12);
  // The small matrix is the robust epipolar certificate over (y; theta; 1).
  const auto rt = analytic_certificate(p, RelaxationKind::RT);
  const Eigen::MatrixXd Srt = multiplier_matrix(build_relaxation(p, RelaxationKind::RT), rt.lambda, rt.xi);
  EXPECT_LT((small - Srt).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DualCertificate, FractionalZeroMultipliersPass) {
  const auto p = scaled_problem(4, 8);
  const auto q = build_relaxation(p, RelaxationKind::TF);
  const auto a = analytic_certificate(p, RelaxationKind::TF);
  EXPECT_EQ(a.xi.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(verify_dual_certificate(q, a.z_hat, a.lambda, a.xi).passed());
}

TEST(AnalyticCertificate, NoisyInstanceRejected) {
  for (auto kind : kAllKinds) {
    try {
      analytic_certificate(scaled_problem(3, 9, 5.0), kind);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NotNoiseFree);
    }
  }
  EXPECT_THROW(analytic_certificate(scaled_problem(4, 9, 0.0, 1), RelaxationKind::RT), Error);
}

TEST(CheckTightness, NoiseFreeFractionalRobustIsTight) {
  const auto p = scaled_problem(3, 10);
  const auto q = build_relaxation(p, RelaxationKind::RTF);
  const auto c = check_tightness(solve(to_standard_form(q)), q);
  EXPECT_EQ(c.status, TightnessStatus::Tight);
  EXPECT_LT(c.rank_ratio, 1e-6);
}

TEST(CheckTightness, RankTwoMixtureIsNotTight) {
  const auto p = scaled_problem(3, 11);
  const auto q = build_relaxation(p, RelaxationKind::RT);
  const int n = p.size();
  // z1: all views inliers. z2: only view 1 kept, with y_1 chosen so that
  // z1 and z2 are orthogonal; the other views are rejected.
  const Eigen::VectorXd z1 = lift(RelaxationKind::RT, observations(p), {}, p.ground_truth->X);
  Eigen::VectorXd z2 = Eigen::VectorXd::Zero(3 * n + 1);
  const Vec2 x1 = p.views[0].observation;
  z2.segment<2>(0) = -2.0 * x1 / x1.squaredNorm();
  z2(2 * n) = 1.0;
  z2(3 * n) = 1.0;
  ASSERT_NEAR(z1.dot(z2), 0.0, 1e-12);
  ASSERT_LT(primal_feasibility(q, z2), 1e-12);
  SdpSolution sol;
  sol.Z = 0.5 * (z1 * z1.transpose() + z2 * z2.transpose());
  sol.xi = Eigen::VectorXd::Zero(q.num_homogeneous());
  EXPECT_EQ(check_tightness(sol, q).status, TightnessStatus::NotTight);
}

TEST(CheckTightness, TightVerdictIsSound) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = scaled_problem(4, 200 + seed, 10.0, 1);
    for (auto kind : {RelaxationKind::RT, RelaxationKind::RTF}) {
      const auto q = build_relaxation(p, kind);
      const auto sol = solve(to_standard_form(q));
      const auto c = check_tightness(sol, q);
      if (c.status != TightnessStatus::Tight) continue;
      EXPECT_LT(c.rank_ratio, 1e-4);
      EXPECT_LE(primal_feasibility(q, c.z_hat), 1e-6);
      const double obj = q.M.cwiseProduct(sol.Z).sum();
      EXPECT_NEAR(c.z_hat.dot(q.M * c.z_hat), obj, 1e-6 * (1.0 + std::abs(obj)));
    }
  }
}

TEST(CheckTightness, HighNoiseRobustEpipolarDegrades) {
  // Expected trend: more non-tight verdicts at 100px noise than at 10px.
  int not_tight_high = 0, not_tight_low = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    for (double sigma : {10.0, 100.0}) {
      const auto p = scaled_problem(3, 300 + t, sigma, 1);
      const auto q = build_relaxation(p, RelaxationKind::RT);
      const auto c = check_tightness(solve(to_standard_form(q)), q);
      if (c.status != TightnessStatus::Tight) (sigma > 50.0 ? not_tight_high : not_tight_low) += 1;
    }
  }
  EXPECT_GT(not_tight_high, not_tight_low);
}

TEST(Stability, NoiseFreeDiagnosticsForEveryKind) {
  const auto p = scaled_problem(3, 12);
  for (auto kind : kAllKinds) {
    const auto q = build_relaxation(p, kind);
    const auto a = analytic_certificate(p, kind);
    const auto S = multiplier_matrix(q, a.lambda, a.xi);
    const auto d = stability_diagnostics(q, a.z_hat, S, restricted_slater_witness(p, kind));
    EXPECT_EQ(d.corank_S, is_fractional(kind) ? 4 : 1) << to_string(kind);
    EXPECT_TRUE(d.nonbranch_ok) << to_string(kind);
    EXPECT_TRUE(d.restricted_slater_ok) << to_string(kind);
    if (is_fractional(kind)) EXPECT_GT(d.min_restricted_eig, 0.0);
  }
}

TEST(Stability, NonComplementaryPairThrows) {
  const auto p = scaled_problem(3, 13);
  const auto q = build_relaxation(p, RelaxationKind::RT);
  const auto a = analytic_certificate(p, RelaxationKind::RT);
  const Eigen::MatrixXd S = multiplier_matrix(q, a.lambda, a.xi) + Eigen::MatrixXd::Identity(q.dim(), q.dim());
  try {
    stability_diagnostics(q, a.z_hat, S, restricted_slater_witness(p, RelaxationKind::RT));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotComplementary);
  }
}
