#pragma once

// JSON persistence for problems and results.

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "certri/certify.hpp"
#include "certri/error.hpp"
#include "certri/geometry.hpp"
#include "certri/rounding.hpp"

namespace certri {

using Json = nlohmann::json;

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ParseError, path + ": " + what);
}

inline const Json& field(const Json& j, const std::string& path, const char* key) {
  if (!j.is_object()) parse_fail(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) parse_fail(path + "/" + key, "missing field");
  return *it;
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) parse_fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) parse_fail(path, "non-finite number");
  return v;
}

inline double number_field(const Json& j, const std::string& path, const char* key) {
  return number(field(j, path, key), path + "/" + key);
}

template <int Rows>
Eigen::Matrix<double, Rows, 1> vector_field(const Json& j, const std::string& path, const char* key) {
  const Json& a = field(j, path, key);
  const std::string p = path + "/" + key;
  if (!a.is_array() || a.size() != Rows) parse_fail(p, "expected an array of " + std::to_string(Rows) + " numbers");
  Eigen::Matrix<double, Rows, 1> v;
  for (int i = 0; i < Rows; ++i) v(i) = number(a[i], p + "/" + std::to_string(i));
  return v;
}

// 3x3 matrix stored as 9 numbers, row-major.
inline Mat3 matrix3_field(const Json& j, const std::string& path, const char* key) {
  const Eigen::Matrix<double, 9, 1> v = vector_field<9>(j, path, key);
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = v(3 * r + c);
  }
  return m;
}

template <typename Derived>
Json to_json_array(const Eigen::MatrixBase<Derived>& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json to_json_row_major(const Mat3& m) {
  Json a = Json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  }
  return a;
}

inline Json to_json_triplets(const SpMat& A) {
  Json t = Json::array();
  for (int o = 0; o < A.outerSize(); ++o) {
    for (SpMat::InnerIterator it(A, o); it; ++it) t.push_back({it.row(), it.col(), it.value()});
  }
  return t;
}

}  // namespace detail

/// Schema: {"views": [{"K": [9, row-major], "R": [9, row-major], "t": [3],
/// "obs": [2], "c": number, "width": number, "height": number}],
/// "ground_truth": {"X": [3], "outliers": [bool]} | null, "scale": number}.
/// "width" and "height" are optional on input and default to 2 cx and 2 cy.
inline Json problem_to_json(const TriangulationProblem& p) {
  Json j;
  j["views"] = Json::array();
  for (const auto& v : p.views) {
    j["views"].push_back({{"K", detail::to_json_row_major(v.intrinsics.K())},
                          {"R", detail::to_json_row_major(v.pose.R)},
                          {"t", detail::to_json_array(v.pose.t)},
                          {"obs", detail::to_json_array(v.observation)},
                          {"c", v.inlier_threshold_sq},
                          {"width", v.intrinsics.width},
                          {"height", v.intrinsics.height}});
  }
  if (p.ground_truth) {
    Json outliers = Json::array();
    for (bool o : p.ground_truth->outliers) outliers.push_back(o);
    j["ground_truth"] = {{"X", detail::to_json_array(p.ground_truth->X)}, {"outliers", outliers}};
  } else {
    j["ground_truth"] = nullptr;
  }
  j["scale"] = p.scale;
  return j;
}

/// Throws ParseError naming the offending field as a JSON pointer.
inline TriangulationProblem problem_from_json(const Json& j) {
  using namespace detail;
  TriangulationProblem p;
  if (!j.is_object()) parse_fail("", "expected an object");
  if (j.contains("scale")) {
    p.scale = number(j["scale"], "/scale");
    if (!(p.scale > 0.0)) parse_fail("/scale", "must be positive");
  }
  const Json& views = field(j, "", "views");
  if (!views.is_array()) parse_fail("/views", "expected an array");
  if (views.size() < 2) parse_fail("/views", "need at least two views");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const std::string path = "/views/" + std::to_string(i);
    const Json& v = views[i];
    CameraView view;
    const Mat3 K = matrix3_field(v, path, "K");
    if (K(0, 1) != 0.0 || K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 || K(2, 2) != 1.0) {
      parse_fail(path + "/K", "expected [fx, 0, cx, 0, fy, cy, 0, 0, 1]");
    }
    if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0)) parse_fail(path + "/K", "focal lengths must be positive");
    auto& in = view.intrinsics;
    in.fx = K(0, 0);
    in.fy = K(1, 1);
    in.cx = K(0, 2);
    in.cy = K(1, 2);
    in.width = v.contains("width") ? number(v["width"], path + "/width") : 2.0 * in.cx;
    in.height = v.contains("height") ? number(v["height"], path + "/height") : 2.0 * in.cy;
    if (!(in.width > 0.0) || !(in.height > 0.0)) parse_fail(path + "/width", "image size must be positive");
    view.pose.R = matrix3_field(v, path, "R");
    if (!view.pose.is_valid(1e-9)) parse_fail(path + "/R", "not a rotation matrix");
    view.pose.t = vector_field<3>(v, path, "t");
    view.observation = vector_field<2>(v, path, "obs");
    view.inlier_threshold_sq = number_field(v, path, "c");
    if (!(view.inlier_threshold_sq > 0.0)) parse_fail(path + "/c", "must be positive");
    p.views.push_back(view);
  }
  if (j.contains("ground_truth") && !j["ground_truth"].is_null()) {
    const Json& g = j["ground_truth"];
    GroundTruth gt;
    gt.X = vector_field<3>(g, "/ground_truth", "X");
    const Json& o = field(g, "/ground_truth", "outliers");
    if (!o.is_array() || o.size() != p.views.size()) parse_fail("/ground_truth/outliers", "expected one boolean per view");
    for (std::size_t i = 0; i < o.size(); ++i) {
      if (!o[i].is_boolean()) parse_fail("/ground_truth/outliers/" + std::to_string(i), "expected a boolean");
      gt.outliers.push_back(o[i].get<bool>());
    }
    p.ground_truth = gt;
  }
  return p;
}

inline Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path + " at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline TriangulationProblem load_problem(const std::string& path) { return problem_from_json(read_json(path)); }

inline void save_problem(const TriangulationProblem& problem, const std::string& path) {
  write_text(path, problem_to_json(problem).dump(2) + "\n");
}

/// Diagnostic dump: basis labels and triplet-format matrices.
inline Json qcqp_to_json(const QcqpProblem& q) {
  Json basis = Json::array();
  for (const auto& m : q.basis) basis.push_back(m.label());
  Json constraints = Json::array();
  for (const auto& c : q.constraints) {
    constraints.push_back({{"label", c.label}, {"rhs", c.rhs}, {"A", detail::to_json_triplets(c.A)}});
  }
  return {{"kind", std::string(to_string(q.kind))},
          {"n", q.n},
          {"basis", basis},
          {"M", detail::to_json_triplets(q.M.sparseView())},
          {"E", detail::to_json_triplets(q.E)},
          {"constraints", constraints}};
}

inline Json certificate_to_json(const Certificate& c) {
  return {{"status", std::string(to_string(c.status))},
          {"rank_ratio", c.rank_ratio},
          {"S_min_eig", c.S_min_eig},
          {"complementarity", c.complementarity},
          {"relative_gap", c.relative_gap},
          {"primal_feasibility", c.primal_feasibility}};
}

inline Json solution_to_json(const RoundedSolution& s) {
  Json theta = Json::array();
  for (bool t : s.theta_hat) theta.push_back(t);
  Json reproj = Json::array();
  for (const auto& x : s.reprojections) reproj.push_back(detail::to_json_array(x));
  return {{"X_hat", detail::to_json_array(s.X_hat)},
          {"theta_hat", theta},
          {"reprojections", reproj},
          {"objective", s.objective},
          {"certified", s.certified},
          {"gap_to_lower_bound", s.gap_to_lower_bound},
          {"fallback", s.fallback},
          {"warnings", s.warnings}};
}

}  // namespace certri
