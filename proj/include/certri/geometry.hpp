#pragma once

// Pinhole cameras, epipolar geometry, linear triangulation and the synthetic
// problem generator. Everything here works in whatever pixel units the views
// carry; see scale_problem() for the normalised coordinates the relaxations
// are solved in.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "certri/error.hpp"

namespace certri {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double width = 1.0;
  double height = 1.0;

  Mat3 K() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::ConfigInvalid, "focal lengths must be positive");
    if (!(width > 0.0) || !(height > 0.0)) throw Error(ErrorCode::ConfigInvalid, "image size must be positive");
  }
};

/// Pinhole model used by the benchmark: a 2108x1162 image with f = 1012.0027.
inline CameraIntrinsics default_intrinsics() {
  return CameraIntrinsics{1012.0027, 1012.0027, 1054.0, 581.0, 2108.0, 1162.0};
}

/// R maps camera coordinates to world coordinates; t is the camera centre.
struct CameraPose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  bool is_valid(double tol = 1e-12) const {
    return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(R.determinant() - 1.0) <= tol;
  }
};

struct CameraView {
  CameraIntrinsics intrinsics;
  CameraPose pose;
  Vec2 observation = Vec2::Zero();
  /// Squared inlier threshold c_i, in squared (possibly scaled) pixels.
  double inlier_threshold_sq = 1.0;
};

struct GroundTruth {
  Vec3 X = Vec3::Zero();
  std::vector<bool> outliers;
};

struct TriangulationProblem {
  std::vector<CameraView> views;
  std::optional<GroundTruth> ground_truth;
  /// Pixel coordinates have been divided by this factor (1 = raw pixels).
  double scale = 1.0;

  int size() const { return static_cast<int>(views.size()); }
};

struct SimulationConfig {
  int n_views = 3;
  double sigma = 0.0;
  int n_outliers = 0;
  double sphere_radius = 2.0;
  CameraIntrinsics intrinsics = default_intrinsics();
  /// Inlier threshold in pixels; c_i is its square.
  double inlier_threshold = 50.0;
};

inline Mat3 skew(const Vec3& t) {
  Mat3 s;
  s << 0.0, -t.z(), t.y(), t.z(), 0.0, -t.x(), -t.y(), t.x(), 0.0;
  return s;
}

/// K (R^T | -R^T t). Rows are a_1^T, a_2^T and b^T.
inline Mat34 camera_matrix(const CameraView& view) {
  Mat34 rt;
  rt.leftCols<3>() = view.pose.R.transpose();
  rt.col(3) = -view.pose.R.transpose() * view.pose.t;
  return view.intrinsics.K() * rt;
}

inline Vec2 project(const CameraView& view, const Vec3& X) {
  const Mat34 P = camera_matrix(view);
  const Vec3 h = P * X.homogeneous();
  if (std::abs(h.z()) < 1e-12) throw Error(ErrorCode::DegenerateDepth, "point lies on the camera plane");
  return h.hnormalized();
}

/// F_ij with x_i^T F_ij x_j = 0 for corresponding homogeneous pixels.
inline Mat3 fundamental_matrix(const CameraView& vi, const CameraView& vj) {
  if ((vi.pose.t - vj.pose.t).norm() < 1e-12) {
    throw Error(ErrorCode::CoincidentCenters, "camera centres coincide");
  }
  const Mat3 R_ij = vi.pose.R.transpose() * vj.pose.R;
  const Vec3 t_ij = vi.pose.R.transpose() * (vj.pose.t - vi.pose.t);
  const Mat3 Ki_inv = vi.intrinsics.K().inverse();
  const Mat3 Kj_inv = vj.intrinsics.K().inverse();
  return Ki_inv.transpose() * skew(t_ij) * R_ij * Kj_inv;
}

struct LinearTriangulation {
  Vec3 X = Vec3::Zero();
  Vec4 X_homogeneous = Vec4::Zero();
  Eigen::Vector4d singular_values = Eigen::Vector4d::Zero();
  /// Algebraic residual ||A X_bar|| for unit X_bar; zero when the smallest
  /// singular value is rounded away.
  double residual = 0.0;
};

/// Linear (DLT) triangulation from the rows x_i^k b_i^T - a_ik^T.
inline LinearTriangulation triangulate_linear(std::span<const CameraView> views,
                                              std::span<const Vec2> reprojections,
                                              bool round_smallest_sv = true) {
  const std::size_t n = views.size();
  if (n < 2 || reprojections.size() != n) {
    throw Error(ErrorCode::DegenerateConfiguration, "need at least two views with one reprojection each");
  }
  Eigen::MatrixXd A(2 * n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    const Mat34 P = camera_matrix(views[i]);
    for (int k = 0; k < 2; ++k) A.row(2 * i + k) = reprojections[i](k) * P.row(2) - P.row(k);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  LinearTriangulation out;
  for (int k = 0; k < 4; ++k) out.singular_values(k) = k < sv.size() ? sv(k) : 0.0;
  const double tie_tol = 1e-10 * std::max(1.0, out.singular_values(0));
  if (std::abs(out.singular_values(2) - out.singular_values(3)) < tie_tol) {
    throw Error(ErrorCode::DegenerateConfiguration, "null space of the data matrix is not one-dimensional");
  }
  out.X_homogeneous = svd.matrixV().col(3);
  if (std::abs(out.X_homogeneous(3)) < 1e-12) {
    throw Error(ErrorCode::DehomogenizationFailure, "triangulated point is at infinity");
  }
  out.X = out.X_homogeneous.hnormalized();
  out.residual = round_smallest_sv ? 0.0 : out.singular_values(3);
  return out;
}

inline Vec3 triangulate_linear_point(std::span<const CameraView> views, std::span<const Vec2> reprojections) {
  return triangulate_linear(views, reprojections, true).X;
}

namespace detail {

inline Vec3 random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    Vec3 v(g(rng), g(rng), g(rng));
    const double nrm = v.norm();
    if (nrm > 1e-8) return v / nrm;
  }
}

// Camera at `centre` looking at the world origin, rolled by `up`.
inline std::optional<Mat3> look_at_origin(const Vec3& centre, const Vec3& up) {
  const Vec3 z = -centre.normalized();
  Vec3 x = up - up.dot(z) * z;
  if (x.norm() < 1e-3) return std::nullopt;
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  return R;
}

inline bool centres_coplanar(const std::vector<CameraView>& views, double tol) {
  if (views.size() < 4) return false;
  Vec3 mean = Vec3::Zero();
  for (const auto& v : views) mean += v.pose.t;
  mean /= static_cast<double>(views.size());
  Eigen::MatrixXd D(views.size(), 3);
  for (std::size_t i = 0; i < views.size(); ++i) D.row(i) = (views[i].pose.t - mean).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeFullV);
  const Vec3 normal = svd.matrixV().col(2);
  return (D * normal).cwiseAbs().maxCoeff() < tol;
}

}  // namespace detail

/// Cameras on a sphere looking at the origin, a point in the unit cube
/// centred at the origin, Gaussian pixel noise and uniformly placed outliers.
inline TriangulationProblem simulate_problem(const SimulationConfig& config, std::uint64_t seed) {
  config.intrinsics.validate();
  if (config.n_views < 2) throw Error(ErrorCode::ConfigInvalid, "need at least two views");
  if (config.n_outliers < 0 || config.n_outliers > config.n_views - 2) {
    throw Error(ErrorCode::ConfigInvalid, "outlier count must lie in [0, n_views - 2]");
  }
  if (!(config.sigma >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "sigma must be non-negative");
  if (!(config.sphere_radius > 0.0)) throw Error(ErrorCode::ConfigInvalid, "sphere radius must be positive");
  if (!(config.inlier_threshold > 0.0)) throw Error(ErrorCode::ConfigInvalid, "inlier threshold must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> cube(-0.5, 0.5);
  std::normal_distribution<double> noise(0.0, 1.0);

  TriangulationProblem problem;
  const auto n = static_cast<std::size_t>(config.n_views);
  do {
    problem.views.clear();
    while (problem.views.size() < n) {
      const Vec3 centre = config.sphere_radius * detail::random_unit_vector(rng);
      const auto R = detail::look_at_origin(centre, detail::random_unit_vector(rng));
      if (!R) continue;
      CameraView view;
      view.intrinsics = config.intrinsics;
      view.pose.R = *R;
      view.pose.t = centre;
      view.inlier_threshold_sq = config.inlier_threshold * config.inlier_threshold;
      problem.views.push_back(view);
    }
  } while (detail::centres_coplanar(problem.views, 1e-3));

  const Vec3 X(cube(rng), cube(rng), cube(rng));
  for (auto& view : problem.views) {
    view.observation = project(view, X);
    if (config.sigma > 0.0) view.observation += config.sigma * Vec2(noise(rng), noise(rng));
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<bool> outliers(n, false);
  std::uniform_real_distribution<double> ux(0.0, config.intrinsics.width);
  std::uniform_real_distribution<double> uy(0.0, config.intrinsics.height);
  for (int k = 0; k < config.n_outliers; ++k) {
    // Partial Fisher-Yates: draw without replacement among remaining inliers.
    std::uniform_int_distribution<int> pick(k, config.n_views - 1);
    std::swap(order[k], order[pick(rng)]);
    const int v = order[k];
    outliers[v] = true;
    const double u = ux(rng);
    problem.views[v].observation = Vec2(u, uy(rng));
  }
  problem.ground_truth = GroundTruth{X, outliers};
  return problem;
}

/// Divides every pixel quantity by the image width of the first view; the
/// feasible set of 3D points is unchanged. Already-scaled input is returned
/// unchanged.
inline TriangulationProblem scale_problem(const TriangulationProblem& problem) {
  if (problem.views.empty() || problem.scale != 1.0) return problem;
  const double w = problem.views.front().intrinsics.width;
  if (w == 1.0) return problem;
  TriangulationProblem out = problem;
  for (auto& v : out.views) {
    v.intrinsics.fx /= w;
    v.intrinsics.fy /= w;
    v.intrinsics.cx /= w;
    v.intrinsics.cy /= w;
    v.intrinsics.width /= w;
    v.intrinsics.height /= w;
    v.observation /= w;
    v.inlier_threshold_sq /= w * w;
  }
  out.scale = w;
  return out;
}

inline std::vector<Vec2> observations(const TriangulationProblem& problem) {
  std::vector<Vec2> out;
  out.reserve(problem.views.size());
  for (const auto& v : problem.views) out.push_back(v.observation);
  return out;
}

}  // namespace certri
