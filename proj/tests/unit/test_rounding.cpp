#include <gtest/gtest.h>

#include <random>

#include "certri/certify.hpp"
#include "certri/harness.hpp"
#include "certri/rounding.hpp"

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

Eigen::VectorXd kron(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd z(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) z.segment(i * b.size(), b.size()) = a(i) * b;
  return z;
}

struct Solved {
  QcqpProblem q;
  SdpSolution sol;
  Certificate cert;
};

Solved solve_and_certify(const TriangulationProblem& p, RelaxationKind kind) {
  Solved s;
  s.q = build_relaxation(p, kind);
  s.sol = solve(to_standard_form(s.q));
  s.cert = check_tightness(s.sol, s.q);
  return s;
}

}  // namespace

TEST(ExtractLeading, ExactRankOne) {
  Eigen::VectorXd z(4);
  z << 0.3, -1.2, 0.7, 1.0;
  SpMat E(4, 4);
  E.insert(3, 3) = 1.0;
  for (double sign : {1.0, -1.0}) {
    const Eigen::VectorXd zs = sign * z;
    EXPECT_LT((extract_leading(zs * zs.transpose(), E) - z).norm(), 1e-10);
  }
}

TEST(ExtractLeading, DominantEigenvectorNotMinimal) {
  const Eigen::MatrixXd Z = Eigen::Vector3d(0.0, 1.0, 2.0).asDiagonal();
  SpMat E(3, 3);
  E.insert(2, 2) = 1.0;
  EXPECT_LT((extract_leading(Z, E) - Eigen::Vector3d(0, 0, 1)).norm(), 1e-14);
}

TEST(ExtractLeading, NoWeightOnNormalisationThrows) {
  const Eigen::MatrixXd Z = Eigen::Vector3d(2.0, 1.0, 0.0).asDiagonal();
  SpMat E(3, 3);
  E.insert(2, 2) = 1.0;
  try {
    extract_leading(Z, E);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NormalizationFailure);
  }
}

TEST(ExtractLeading, SolvedNoiseFreeRobustEpipolar) {
  const auto p = scaled_problem(3, 1);
  const auto s = solve_and_certify(p, RelaxationKind::RT);
  const Eigen::VectorXd z = lift(RelaxationKind::RT, observations(p), {}, p.ground_truth->X);
  EXPECT_LT((extract_leading(s.sol.Z, s.q.E) - z).norm(), 1e-6);
}

TEST(RoundThetas, NoiseFreeAllInliers) {
  const auto p = scaled_problem(4, 2);
  for (auto kind : {RelaxationKind::RT, RelaxationKind::RTF}) {
    const auto s = solve_and_certify(p, kind);
    ASSERT_EQ(s.cert.status, TightnessStatus::Tight);
    EXPECT_EQ(round_thetas(s.cert.z_hat, kind, p.size()), std::vector<bool>(4, true));
  }
}

TEST(RoundThetas, PlantedOutliersRecovered) {
  int checked = 0;
  int matches_planted = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = scaled_problem(5, 40 + seed, 5.0, 2);
    const auto s = solve_and_certify(p, RelaxationKind::RTF);
    if (s.cert.status != TightnessStatus::Tight) continue;
    ++checked;
    const auto theta = round_thetas(s.cert.z_hat, RelaxationKind::RTF, p.size());
    // A planted outlier can land near the epipolar lines, so the reference is
    // the enumerated TLS optimum rather than the planted mask.
    const auto oracle = brute_force_oracle(p);
    EXPECT_EQ(theta, oracle.theta_star) << "seed " << seed;
    bool planted = true;
    for (int i = 0; i < p.size(); ++i) planted = planted && theta[i] == !p.ground_truth->outliers[i];
    matches_planted += planted ? 1 : 0;
  }
  EXPECT_GT(checked, 0);
  EXPECT_GT(matches_planted, 0);
}

TEST(RoundThetas, AllSmallEntriesThrow) {
  const int n = 3;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(3 * n + 1);
  z.segment(2 * n, n).setConstant(0.2);
  z(3 * n) = 1.0;
  try {
    round_thetas(z, RelaxationKind::RT, n);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllOutliers);
  }
  EXPECT_THROW(round_thetas(Eigen::VectorXd::Zero(7), RelaxationKind::T, n), Error);
}

TEST(NearestKron, ExactProductRecovered) {
  Eigen::VectorXd a(5);
  a << 0.4, -2.0, 0.1, 3.0, 1.0;
  const Eigen::Vector4d b = Eigen::Vector4d(0.2, -0.5, 0.9, 0.7).normalized();
  const auto k = nearest_kron(kron(-3.0 * a, -b), 5, 4);
  EXPECT_LT((k.u_bar - a).norm(), 1e-12);
  EXPECT_LT((k.X_bar - b).norm(), 1e-12);
  EXPECT_NEAR(k.X_bar.norm(), 1.0, 1e-14);
}

TEST(NearestKron, ResidualMatchesTrailingSingularValues) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd z(24);
    for (int i = 0; i < 24; ++i) z(i) = g(rng);
    Eigen::MatrixXd Zm(6, 4);
    for (int r = 0; r < 6; ++r) Zm.row(r) = z.segment<4>(4 * r).transpose();
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(Zm).singularValues();
    const double expected = sv.tail(3).norm();
    const auto k = detail::nearest_kron_impl(z, 6, 4);
    EXPECT_NEAR(k.residual, expected, 1e-12);
    // Best multiple of the returned product leaves the same residual.
    const Eigen::VectorXd w = kron(k.u_bar, k.X_bar);
    const Eigen::VectorXd fit = (z.dot(w) / w.squaredNorm()) * w;
    EXPECT_NEAR((z - fit).norm(), expected, 1e-12);
  }
}

TEST(NearestKron, AmbiguousFactorisationThrows) {
  Eigen::VectorXd z = kron(Eigen::Vector3d(1, 0, 1), Eigen::Vector4d(1, 0, 0, 1)) +
                      kron(Eigen::Vector3d(0, 1, 0), Eigen::Vector4d(0, 1, 0, 0));
  try {
    nearest_kron(z, 3, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RankAmbiguity);
  }
}

TEST(NearestKron, NoiseFreeFractionalPoint) {
  const auto p = scaled_problem(3, 4);
  const auto s = solve_and_certify(p, RelaxationKind::TF);
  ASSERT_EQ(s.cert.status, TightnessStatus::Tight);
  const auto k = nearest_kron(s.cert.z_hat, 7, 4);
  const Vec4 truth = p.ground_truth->X.homogeneous().normalized();
  EXPECT_LT((k.X_bar - truth).norm(), 1e-6);
}

TEST(Recover, NoiseFreeTightForEveryKind) {
  const auto p = scaled_problem(4, 5);
  for (auto kind : kAllKinds) {
    const auto s = solve_and_certify(p, kind);
    ASSERT_EQ(s.cert.status, TightnessStatus::Tight) << to_string(kind);
    const double bound = s.q.M.cwiseProduct(s.sol.Z).sum();
    const auto r = recover_solution(kind, s.cert.z_hat, p, bound, true);
    EXPECT_LT((r.X_hat - p.ground_truth->X).norm(), 1e-5) << to_string(kind);
    EXPECT_LT(std::abs(r.gap_to_lower_bound), 1e-6);
    EXPECT_TRUE(r.certified);
    for (int i = 0; i < p.size(); ++i) EXPECT_EQ(r.reprojections[i], project(p.views[i], r.X_hat));
    if (is_fractional(kind)) {
      const auto k = detail::nearest_kron_impl(s.cert.z_hat, s.q.dim() / 4, 4);
      EXPECT_LT(k.residual / s.cert.z_hat.norm(), 1e-5);
    }
  }
}

TEST(Recover, HighNoiseRobustEpipolarStaysAboveLowerBound) {
  int non_tight = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto p = scaled_problem(3, 60 + seed, 100.0, 1);
    const auto s = solve_and_certify(p, RelaxationKind::RT);
    const double bound = s.q.M.cwiseProduct(s.sol.Z).sum();
    const bool tight = s.cert.status == TightnessStatus::Tight;
    non_tight += tight ? 0 : 1;
    RoundedSolution r;
    try {
      r = recover_solution(RelaxationKind::RT, s.cert.z_hat, p, bound);
    } catch (const Error& e) {
      // Rejecting every view is a reported outcome only off the tight regime.
      EXPECT_EQ(e.code(), ErrorCode::AllOutliers);
      EXPECT_FALSE(tight) << "seed " << seed;
      continue;
    }
    EXPECT_TRUE(r.X_hat.allFinite());
    EXPECT_TRUE(std::isfinite(r.objective));
    EXPECT_GE(r.objective, bound - 1e-6 * (1.0 + std::abs(bound)));
  }
  EXPECT_GT(non_tight, 0);
}

TEST(Recover, TightWithOutliersDecomposesObjective) {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = scaled_problem(5, 80 + seed, 5.0, 2);
    const auto s = solve_and_certify(p, RelaxationKind::RTF);
    if (s.cert.status != TightnessStatus::Tight) continue;
    ++checked;
    const double bound = s.q.M.cwiseProduct(s.sol.Z).sum();
    const auto r = recover_solution(RelaxationKind::RTF, s.cert.z_hat, p, bound, true);
    double expected = 0.0;
    for (int i = 0; i < p.size(); ++i) {
      const auto& v = p.views[i];
      expected += r.theta_hat[i] ? (v.observation - project(v, r.X_hat)).squaredNorm() : v.inlier_threshold_sq;
    }
    EXPECT_NEAR(r.objective, expected, 1e-12);
    EXPECT_NEAR(expected, bound, 1e-6 * (1.0 + bound));
    // Re-lifting the rounded solution reproduces the lower bound.
    const Eigen::VectorXd z = lift(RelaxationKind::RTF, r.reprojections, r.theta_hat, r.X_hat);
    EXPECT_NEAR(z.dot(s.q.M * z), bound, 1e-6 * (1.0 + bound));
  }
  EXPECT_GT(checked, 0);
}

TEST(Recover, ThresholdScalingLeavesArgmaxUnchanged) {
  const auto p = scaled_problem(4, 90, 5.0, 1);
  auto p2 = p;
  const double f = 4.0;
  for (auto& v : p2.views) v.inlier_threshold_sq *= f;
  // Scaling every c_i and the squared residuals by f is the same as
  // measuring pixels in units scaled by sqrt(f).
  for (auto& v : p2.views) {
    v.observation *= std::sqrt(f);
    v.intrinsics.fx *= std::sqrt(f);
    v.intrinsics.fy *= std::sqrt(f);
    v.intrinsics.cx *= std::sqrt(f);
    v.intrinsics.cy *= std::sqrt(f);
  }
  const auto a = solve_and_certify(p, RelaxationKind::RT);
  const auto b = solve_and_certify(p2, RelaxationKind::RT);
  ASSERT_EQ(a.cert.status, TightnessStatus::Tight);
  ASSERT_EQ(b.cert.status, TightnessStatus::Tight);
  const auto ra = recover_solution(RelaxationKind::RT, a.cert.z_hat, p, 0.0);
  const auto rb = recover_solution(RelaxationKind::RT, b.cert.z_hat, p2, 0.0);
  EXPECT_EQ(ra.theta_hat, rb.theta_hat);
  EXPECT_LT((ra.X_hat - rb.X_hat).norm(), 1e-6);
  EXPECT_NEAR(rb.objective, f * ra.objective, 1e-6 * (1.0 + rb.objective));
}

TEST(Objective, ZeroAtNoiseFreeTruth) {
  const auto p = scaled_problem(5, 6);
  EXPECT_NEAR(tls_objective(p, p.ground_truth->X, std::vector<bool>(5, true)), 0.0, 1e-20);
}

TEST(Objective, AllRejectedIsThresholdSum) {
  const auto p = scaled_problem(5, 7, 3.0);
  double csum = 0.0;
  for (const auto& v : p.views) csum += v.inlier_threshold_sq;
  for (const Vec3& X : {Vec3(0, 0, 0), Vec3(0.3, -0.2, 0.1)}) {
    EXPECT_DOUBLE_EQ(tls_objective(p, X, std::vector<bool>(5, false)), csum);
  }
}

TEST(Objective, ExhaustiveBinaryMinimumIsTruncatedForm) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  const auto p = scaled_problem(5, 8, 20.0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 X(u(rng), u(rng), u(rng));
    double best = std::numeric_limits<double>::infinity();
    for (int mask = 0; mask < 32; ++mask) {
      std::vector<bool> theta;
      for (int i = 0; i < 5; ++i) theta.push_back((mask >> i) & 1);
      best = std::min(best, tls_objective(p, X, theta));
    }
    EXPECT_NEAR(best, tls_objective(p, X), 1e-14);
    EXPECT_NEAR(tls_objective(p, X, optimal_thetas(p, X)), best, 1e-14);
  }
}
