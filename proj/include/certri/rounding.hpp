#pragma once

// Candidate extraction from a lifted solution: dominant eigenvector, inlier
// rounding, nearest Kronecker factorisation and point recovery.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "certri/error.hpp"
#include "certri/geometry.hpp"
#include "certri/relaxations.hpp"

namespace certri {

struct RoundedSolution {
  Vec3 X_hat = Vec3::Zero();
  std::vector<bool> theta_hat;
  std::vector<Vec2> reprojections;
  double objective = 0.0;
  bool certified = false;
  double gap_to_lower_bound = 0.0;
  /// Fewer than two inliers were rounded; X_hat is the all-view DLT point.
  bool fallback = false;
  /// The Kronecker factorisation was not clearly rank one.
  bool rank_ambiguous = false;
  std::vector<std::string> warnings;
};

struct KronFactors {
  Eigen::VectorXd u_bar;  // homogeneous (last) entry equal to one
  Vec4 X_bar = Vec4::Zero();
  double sigma_ratio = 0.0;  // sigma_1 / sigma_2 (infinity for exact products)
  double residual = 0.0;     // || z - s * u (x) v || for the leading pair
};

/// Dominant eigenvector of Z scaled to z^T E z = 1, with its last entry made
/// non-negative (homogeneous coordinate for T/RT, X_bar_4 for TF/RTF).
inline Eigen::VectorXd extract_leading(const Eigen::MatrixXd& Z, const SpMat& E) {
  if (Z.rows() != Z.cols() || Z.rows() != E.rows()) throw Error(ErrorCode::DimensionMismatch, "Z and E sizes differ");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Z + Z.transpose()));
  if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
  Eigen::VectorXd v = es.eigenvectors().col(Z.rows() - 1);
  const double vEv = v.dot(E * v);
  if (!(vEv > 1e-12)) throw Error(ErrorCode::NormalizationFailure, "dominant eigenvector has no weight on the normalisation block");
  v /= std::sqrt(vEv);
  Eigen::Index sign_at = v.size() - 1;
  if (std::abs(v(sign_at)) < 1e-12) v.cwiseAbs().maxCoeff(&sign_at);
  if (v(sign_at) < 0.0) v = -v;
  return v;
}

namespace detail {

inline KronFactors nearest_kron_impl(const Eigen::VectorXd& z, int p, int q) {
  if (p <= 0 || q <= 0 || z.size() != static_cast<Eigen::Index>(p) * q) {
    throw Error(ErrorCode::DimensionMismatch, "vector length is not p * q");
  }
  // Row-major reshape: block r holds entries q*r .. q*r + q - 1.
  const Eigen::MatrixXd Zm = Eigen::Map<const Eigen::MatrixXd>(z.data(), q, p).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Zm, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  KronFactors out;
  out.sigma_ratio = sv.size() > 1 && sv(1) > 0.0 ? sv(0) / sv(1) : std::numeric_limits<double>::infinity();
  out.residual = sv.size() > 1 ? sv.tail(sv.size() - 1).norm() : 0.0;
  Eigen::VectorXd u = sv(0) * svd.matrixU().col(0);
  Eigen::VectorXd v = svd.matrixV().col(0);
  if (q == 4) {
    if (v(3) < 0.0) {
      v = -v;
      u = -u;
    }
    out.X_bar = v;
  }
  const double h = u(p - 1);
  if (std::abs(h) < 1e-12 * std::max(1.0, u.norm())) {
    throw Error(ErrorCode::DehomogenizationFailure, "homogeneous entry of the factor vanishes");
  }
  out.u_bar = u / h;
  return out;
}

inline bool thetas_from(const Eigen::VectorXd& f, const BasisLayout& L, std::vector<bool>& theta) {
  theta.assign(L.n, false);
  bool any = false;
  for (int i = 0; i < L.n; ++i) {
    theta[i] = f(L.factor_theta(i)) >= 0.5;
    any = any || theta[i];
  }
  return any;
}

inline Vec3 dehomogenize(const Vec4& X) {
  if (std::abs(X(3)) < 1e-12) throw Error(ErrorCode::DehomogenizationFailure, "point at infinity");
  return X.head<3>() / X(3);
}

}  // namespace detail

/// Best rank-one approximation of z viewed as p blocks of length q.
/// Throws RankAmbiguity when sigma_1 / sigma_2 < 10.
inline KronFactors nearest_kron(const Eigen::VectorXd& z, int p, int q = 4) {
  KronFactors k = detail::nearest_kron_impl(z, p, q);
  if (k.sigma_ratio < 10.0) throw Error(ErrorCode::RankAmbiguity, "leading singular value is not dominant");
  return k;
}

/// Inlier flags from an extracted vector (RT: theta entries; RTF: theta
/// entries of the Kronecker factor). Threshold 0.5.
inline std::vector<bool> round_thetas(const Eigen::VectorXd& z_hat, RelaxationKind kind, int n) {
  if (!is_robust(kind)) throw Error(ErrorCode::ConfigInvalid, "relaxation has no inlier variables");
  const BasisLayout L{kind, n};
  if (z_hat.size() != L.dim()) throw Error(ErrorCode::DimensionMismatch, "vector does not match the basis");
  const Eigen::VectorXd f = is_fractional(kind) ? detail::nearest_kron_impl(z_hat, L.factor_dim(), 4).u_bar : z_hat;
  std::vector<bool> theta;
  if (!detail::thetas_from(f, L, theta)) throw Error(ErrorCode::AllOutliers, "every inlier flag rounds to zero");
  return theta;
}

/// Binary-form objective sum theta_i r_i^2 + (1 - theta_i) c_i.
inline double tls_objective(const TriangulationProblem& problem, const Vec3& X, const std::vector<bool>& theta) {
  if (theta.size() != problem.views.size()) throw Error(ErrorCode::DimensionMismatch, "one flag per view");
  double total = 0.0;
  for (std::size_t i = 0; i < problem.views.size(); ++i) {
    const auto& v = problem.views[i];
    total += theta[i] ? (v.observation - project(v, X)).squaredNorm() : v.inlier_threshold_sq;
  }
  return total;
}

/// Truncated form sum min(r_i^2, c_i).
inline double tls_objective(const TriangulationProblem& problem, const Vec3& X) {
  double total = 0.0;
  for (const auto& v : problem.views) total += std::min((v.observation - project(v, X)).squaredNorm(), v.inlier_threshold_sq);
  return total;
}

/// Per-view minimiser of the binary form; reproduces the truncated value.
inline std::vector<bool> optimal_thetas(const TriangulationProblem& problem, const Vec3& X) {
  std::vector<bool> theta;
  for (const auto& v : problem.views) theta.push_back((v.observation - project(v, X)).squaredNorm() <= v.inlier_threshold_sq);
  return theta;
}

/// Point, inlier mask, reprojections and objective from an extracted vector.
inline RoundedSolution recover_solution(RelaxationKind kind, const Eigen::VectorXd& z_hat,
                                        const TriangulationProblem& problem, double lower_bound,
                                        bool certified = false) {
  const int n = problem.size();
  const BasisLayout L{kind, n};
  if (z_hat.size() != L.dim()) throw Error(ErrorCode::DimensionMismatch, "vector does not match the basis");
  RoundedSolution out;
  out.certified = certified;
  out.theta_hat.assign(n, true);

  Eigen::VectorXd f = z_hat;
  Vec4 X_bar = Vec4::Zero();
  if (is_fractional(kind)) {
    const KronFactors k = detail::nearest_kron_impl(z_hat, L.factor_dim(), 4);
    if (k.sigma_ratio < 10.0) {
      out.rank_ambiguous = true;
      out.warnings.push_back("Kronecker factorisation is not clearly rank one");
    }
    f = k.u_bar;
    X_bar = k.X_bar;
  }
  if (is_robust(kind) && !detail::thetas_from(f, L, out.theta_hat)) {
    throw Error(ErrorCode::AllOutliers, "every inlier flag rounds to zero");
  }
  int inliers = 0;
  for (bool t : out.theta_hat) inliers += t ? 1 : 0;

  if (inliers < 2) {
    // Too few inliers to triangulate: all-view DLT, never certified.
    out.fallback = true;
    out.certified = false;
    out.warnings.push_back("fewer than two inliers; using the all-view linear estimate");
    out.X_hat = triangulate_linear_point(problem.views, observations(problem));
  } else if (is_fractional(kind)) {
    out.X_hat = detail::dehomogenize(X_bar);
  } else {
    std::vector<CameraView> views;
    std::vector<Vec2> x;
    for (int i = 0; i < n; ++i) {
      if (!out.theta_hat[i]) continue;
      views.push_back(problem.views[i]);
      x.emplace_back(f(L.factor_y(i, 0)), f(L.factor_y(i, 1)));
    }
    out.X_hat = triangulate_linear_point(views, x);
  }
  for (const auto& v : problem.views) out.reprojections.push_back(project(v, out.X_hat));
  out.objective = tls_objective(problem, out.X_hat, out.theta_hat);
  out.gap_to_lower_bound = out.objective - lower_bound;
  return out;
}

}  // namespace certri
