#pragma once

// Tightness classification, dual certificate checks, the closed-form
// noise-free multipliers and the local-stability diagnostics.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <limits>
#include <string_view>
#include <vector>

#include "certri/error.hpp"
#include "certri/geometry.hpp"
#include "certri/relaxations.hpp"
#include "certri/rounding.hpp"
#include "certri/sdp.hpp"

namespace certri {

enum class TightnessStatus { Tight, NotTight, Inconclusive };

inline constexpr std::string_view to_string(TightnessStatus s) {
  switch (s) {
    case TightnessStatus::Tight: return "Tight";
    case TightnessStatus::NotTight: return "NotTight";
    case TightnessStatus::Inconclusive: return "Inconclusive";
  }
  return "?";
}

struct CertifyTolerances {
  double tau_rank = 1e-4;
  /// Dual feasibility: lambda_min(S) >= -tau_psd * (1 + ||M||).
  double tau_psd = 1e-7;
  double tau_comp = 1e-6;
  /// Primal feasibility of the extracted vector.
  double tau_feas = 1e-6;
  /// Rank ratio above which a solution is reported NotTight.
  double not_tight_ratio = 1e-2;
  /// Relative gap allowed between the rounded objective and the lower bound.
  double tau_gap = 1e-6;
  /// Eigenvalues below corank_rel * lambda_max count as zero.
  double corank_rel = 1e-8;
};

struct Certificate {
  TightnessStatus status = TightnessStatus::Inconclusive;
  Eigen::VectorXd eigenvalues;  // spectrum of Z, descending
  double rank_ratio = 1.0;
  double S_min_eig = 0.0;
  double complementarity = 0.0;
  double relative_gap = 0.0;
  double primal_feasibility = 0.0;
  Eigen::VectorXd z_hat;
};

struct DualCheck {
  double primal_residual = 0.0;
  double S_min_eig = 0.0;
  double Sz_norm = 0.0;
  bool primal_ok = false;
  bool dual_ok = false;
  bool complementary_ok = false;
  bool passed() const { return primal_ok && dual_ok && complementary_ok; }
};

struct AnalyticCertificate {
  Eigen::VectorXd z_hat;
  double lambda = 0.0;
  Eigen::VectorXd xi;
};

struct StabilityDiagnostics {
  int corank_S = 0;
  bool nonbranch_ok = false;
  bool restricted_slater_ok = false;
  /// +infinity when ker(S) contains nothing orthogonal to z_hat.
  double min_restricted_eig = std::numeric_limits<double>::infinity();
  double min_principal_angle = 0.0;
};

/// S = M + sum xi_i A_i - lambda E.
inline Eigen::MatrixXd multiplier_matrix(const QcqpProblem& q, double lambda, const Eigen::VectorXd& xi) {
  if (xi.size() != q.num_homogeneous()) throw Error(ErrorCode::DimensionMismatch, "one multiplier per homogeneous constraint");
  Eigen::MatrixXd S = q.M;
  for (int i = 0; i < q.num_homogeneous(); ++i) detail::add_scaled(S, q.constraints[i].A, xi(i));
  detail::add_scaled(S, q.E, -lambda);
  return S;
}

/// max_i |z^T A_i z - b_i| / (1 + |b_i|) over all constraints.
inline double primal_feasibility(const QcqpProblem& q, const Eigen::VectorXd& z) {
  double worst = 0.0;
  for (const auto& c : q.constraints) worst = std::max(worst, std::abs(z.dot(c.A * z) - c.rhs) / (1.0 + std::abs(c.rhs)));
  return worst;
}

inline DualCheck verify_dual_certificate(const QcqpProblem& q, const Eigen::VectorXd& z, double lambda,
                                         const Eigen::VectorXd& xi, const CertifyTolerances& tol = {}) {
  if (z.size() != q.dim()) throw Error(ErrorCode::DimensionMismatch, "vector does not match the basis");
  DualCheck r;
  const Eigen::MatrixXd S = multiplier_matrix(q, lambda, xi);
  r.primal_residual = primal_feasibility(q, z);
  r.S_min_eig = detail::min_eigenvalue(S);
  r.Sz_norm = (S * z).norm();
  r.primal_ok = r.primal_residual <= tol.tau_feas;
  r.dual_ok = r.S_min_eig >= -tol.tau_psd * (1.0 + q.M.norm());
  r.complementary_ok = r.Sz_norm / (1.0 + z.norm()) <= tol.tau_comp;
  return r;
}

/// Tight when Z is numerically rank one and the solver multipliers certify
/// the extracted vector; NotTight when the rank ratio exceeds
/// not_tight_ratio; Inconclusive otherwise.
inline Certificate check_tightness(const SdpSolution& sol, const QcqpProblem& q, const CertifyTolerances& tol = {}) {
  if (sol.Z.rows() != q.dim()) throw Error(ErrorCode::DimensionMismatch, "solution does not match the problem");
  Certificate c;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sol.Z + sol.Z.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
  c.eigenvalues = es.eigenvalues().reverse();
  const double l1 = c.eigenvalues(0);
  c.rank_ratio = l1 > 0.0 ? std::max(0.0, c.eigenvalues.size() > 1 ? c.eigenvalues(1) : 0.0) / l1 : 1.0;

  const Eigen::MatrixXd S = multiplier_matrix(q, sol.lambda, sol.xi);
  c.S_min_eig = detail::min_eigenvalue(S);
  try {
    c.z_hat = extract_leading(sol.Z, q.E);
  } catch (const Error&) {
    c.status = c.rank_ratio > tol.not_tight_ratio ? TightnessStatus::NotTight : TightnessStatus::Inconclusive;
    return c;
  }
  c.complementarity = (S * c.z_hat).norm() / (1.0 + c.z_hat.norm());
  c.primal_feasibility = primal_feasibility(q, c.z_hat);
  const double candidate = c.z_hat.dot(q.M * c.z_hat);
  c.relative_gap = std::abs(candidate - sol.lambda) / (1.0 + std::abs(sol.lambda));

  const bool fact_ok = c.S_min_eig >= -tol.tau_psd * (1.0 + q.M.norm()) && c.complementarity <= tol.tau_comp &&
                       c.primal_feasibility <= tol.tau_feas;
  if (c.rank_ratio < tol.tau_rank && fact_ok) {
    c.status = TightnessStatus::Tight;
  } else if (c.rank_ratio > tol.not_tight_ratio) {
    c.status = TightnessStatus::NotTight;
  } else {
    c.status = TightnessStatus::Inconclusive;
  }
  return c;
}

namespace detail {

// Noise-free, outlier-free guard; returns the exact 3D point.
inline Vec3 noise_free_point(const TriangulationProblem& problem) {
  Vec3 X;
  if (problem.ground_truth) {
    for (bool o : problem.ground_truth->outliers) {
      if (o) throw Error(ErrorCode::NotNoiseFree, "problem has planted outliers");
    }
    X = problem.ground_truth->X;
  } else {
    X = triangulate_linear_point(problem.views, observations(problem));
  }
  for (const auto& v : problem.views) {
    if ((project(v, X) - v.observation).norm() > 1e-8 * std::max(1.0, v.intrinsics.width)) {
      throw Error(ErrorCode::NotNoiseFree, "observations deviate from exact reprojections");
    }
  }
  return X;
}

inline int reprojection_index(const BasisLayout& L, int i, int k, int j) { return (2 * i + k) * L.dim() + j; }

}  // namespace detail

/// Closed-form multipliers for noise-free (RT): eta_i = c_i / 2 on the
/// doubled theta constraints, everything else zero; z = (x~; 1_n; 1).
/// For (T) the same call returns zero multipliers and z = (x~; 1).
inline AnalyticCertificate analytic_certificate_rt(const TriangulationProblem& problem,
                                                   RelaxationKind kind = RelaxationKind::RT) {
  if (is_fractional(kind)) throw Error(ErrorCode::ConfigInvalid, "use analytic_certificate_rtf for fractional kinds");
  const Vec3 X = detail::noise_free_point(problem);
  const int n = problem.size();
  const auto obs = observations(problem);
  AnalyticCertificate a;
  a.z_hat = lift(kind, obs, {}, X);
  a.xi = Eigen::VectorXd::Zero(expected_constraint_count(kind, n) - 1);
  if (kind == RelaxationKind::RT) {
    const int first_theta = n * (n - 1) / 2;
    for (int i = 0; i < n; ++i) a.xi(first_theta + i) = 0.5 * problem.views[i].inlier_threshold_sq;
  }
  return a;
}

/// Closed-form multipliers for noise-free (RTF): H_i = c_i I_4 on the theta
/// idempotency block, giving S = (M^c + sum c_i T_i) kron I_4. For (TF) all
/// multipliers are zero. z = u_bar kron X_hat with ||X_hat|| = 1.
inline AnalyticCertificate analytic_certificate_rtf(const TriangulationProblem& problem,
                                                    RelaxationKind kind = RelaxationKind::RTF) {
  if (!is_fractional(kind)) throw Error(ErrorCode::ConfigInvalid, "use analytic_certificate_rt for epipolar kinds");
  const Vec3 X = detail::noise_free_point(problem);
  const int n = problem.size();
  const auto obs = observations(problem);
  AnalyticCertificate a;
  a.z_hat = lift(kind, obs, {}, X);
  a.xi = Eigen::VectorXd::Zero(expected_constraint_count(kind, n) - 1);
  if (kind == RelaxationKind::RTF) {
    const BasisLayout L{kind, n};
    const int P = L.factor_dim();
    const int reproj = 2 * n * L.dim();
    const int kron = (P * (P - 1) / 2) * 6;
    for (int i = 0; i < n; ++i) {
      for (int s = 0; s < 4; ++s) a.xi(reproj + kron + 16 * i + 4 * s + s) = problem.views[i].inlier_threshold_sq;
    }
  }
  return a;
}

inline AnalyticCertificate analytic_certificate(const TriangulationProblem& problem, RelaxationKind kind) {
  return is_fractional(kind) ? analytic_certificate_rtf(problem, kind) : analytic_certificate_rt(problem, kind);
}

/// Restricted Slater witness: phi'_ik = x~_ik b_i - a_ik on the reprojection
/// rows multiplied by X_bar, all other multipliers zero. Zero for the
/// epipolar kinds, where ker(S) is spanned by z_hat alone.
inline AnalyticCertificate restricted_slater_witness(const TriangulationProblem& problem, RelaxationKind kind) {
  const int n = problem.size();
  AnalyticCertificate w;
  w.xi = Eigen::VectorXd::Zero(expected_constraint_count(kind, n) - 1);
  if (!is_fractional(kind)) return w;
  const BasisLayout L{kind, n};
  for (int i = 0; i < n; ++i) {
    const Mat34 P = camera_matrix(problem.views[i]);
    for (int k = 0; k < 2; ++k) {
      const Vec4 phi = problem.views[i].observation(k) * P.row(2).transpose() - P.row(k).transpose();
      for (int s = 0; s < 4; ++s) w.xi(detail::reprojection_index(L, i, k, L.kron(L.factor_one(), s))) = phi(s);
    }
  }
  return w;
}

/// Corank of S, non-branch condition ker(S) & T_z = {0} (via the smallest
/// principal angle between ker(S) and T_z) and restricted Slater on
/// ker(S) & z^perp for the witness multipliers.
inline StabilityDiagnostics stability_diagnostics(const QcqpProblem& q, const Eigen::VectorXd& z_hat,
                                                  const Eigen::MatrixXd& S, const AnalyticCertificate& slater,
                                                  const CertifyTolerances& tol = {}) {
  const int d = q.dim();
  if (z_hat.size() != d || S.rows() != d) throw Error(ErrorCode::DimensionMismatch, "sizes do not match the problem");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
  if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
  const double smax = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  if ((S * z_hat).norm() > tol.tau_comp * (1.0 + z_hat.norm()) * std::max(1.0, smax)) {
    throw Error(ErrorCode::NotComplementary, "S z_hat is not numerically zero");
  }
  StabilityDiagnostics out;
  while (out.corank_S < d && es.eigenvalues()(out.corank_S) < tol.corank_rel * smax) ++out.corank_S;
  const Eigen::MatrixXd N = es.eigenvectors().leftCols(out.corank_S);

  // T_z = ker(J), J rows z^T A_i; sin of the smallest angle between ker(S)
  // and ker(J) is the smallest singular value of the row-space projection.
  Eigen::MatrixXd J(q.num_constraints(), d);
  for (int i = 0; i < q.num_constraints(); ++i) J.row(i) = (q.constraints[i].A * z_hat).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  int rank = 0;
  while (rank < sv.size() && sv(rank) > 1e-10 * std::max(sv(0), 1e-300)) ++rank;
  const Eigen::MatrixXd rowspace = svd.matrixV().leftCols(rank);
  if (out.corank_S > 0 && rank > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> ang(rowspace.transpose() * N);
    out.min_principal_angle = std::asin(std::clamp(ang.singularValues().minCoeff(), 0.0, 1.0));
    if (ang.singularValues().size() < out.corank_S) out.min_principal_angle = 0.0;
  }
  out.nonbranch_ok = out.corank_S > 0 && out.min_principal_angle > 1e-6;

  // Basis of ker(S) orthogonal to z_hat.
  const Eigen::VectorXd zn = z_hat.normalized();
  const Eigen::MatrixXd P = N - zn * (zn.transpose() * N);
  // N is orthonormal, so singular values of P are absolute.
  Eigen::JacobiSVD<Eigen::MatrixXd> psvd(P, Eigen::ComputeThinU);
  int keep = 0;
  while (keep < psvd.singularValues().size() && psvd.singularValues()(keep) > 1e-6) ++keep;
  const Eigen::MatrixXd K = psvd.matrixU().leftCols(keep);
  if (keep == 0) {
    out.restricted_slater_ok = true;
    return out;
  }
  const Eigen::MatrixXd Aw = multiplier_matrix(q, slater.lambda, slater.xi) - q.M;
  const Eigen::MatrixXd R = K.transpose() * Aw * K;
  out.min_restricted_eig = detail::min_eigenvalue(0.5 * (R + R.transpose()));
  out.restricted_slater_ok = out.min_restricted_eig > 1e-10 * std::max(1.0, Aw.norm());
  return out;
}

}  // namespace certri
