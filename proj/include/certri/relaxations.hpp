#pragma once

// Lifted QCQPs for the four triangulation relaxations:
//   T   epipolar constraints,            z = (x; 1)
//   RT  robust epipolar constraints,     z = (y; theta; 1)
//   TF  fractional reprojection rows,    z = (x; 1) kron X_bar
//   RTF robust fractional rows,          z = (y; theta; 1) kron X_bar
// Every constraint is stored as a symmetric sparse matrix A with the trace
// form tr(A Z) = rhs; the normalisation constraint is always the last entry.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "certri/error.hpp"
#include "certri/geometry.hpp"

namespace certri {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class RelaxationKind { T, RT, TF, RTF };

inline constexpr std::string_view to_string(RelaxationKind kind) {
  switch (kind) {
    case RelaxationKind::T: return "T";
    case RelaxationKind::RT: return "RT";
    case RelaxationKind::TF: return "TF";
    case RelaxationKind::RTF: return "RTF";
  }
  return "?";
}

inline RelaxationKind parse_relaxation(std::string_view s) {
  std::string lower(s);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "t") return RelaxationKind::T;
  if (lower == "rt") return RelaxationKind::RT;
  if (lower == "tf") return RelaxationKind::TF;
  if (lower == "rtf") return RelaxationKind::RTF;
  throw Error(ErrorCode::ConfigInvalid, "unknown relaxation '" + std::string(s) + "'");
}

inline constexpr bool is_robust(RelaxationKind kind) {
  return kind == RelaxationKind::RT || kind == RelaxationKind::RTF;
}

inline constexpr bool is_fractional(RelaxationKind kind) {
  return kind == RelaxationKind::TF || kind == RelaxationKind::RTF;
}

/// One basis element of the lifted vector. For the fractional relaxations
/// every element is a product of a factor with X_bar_s (xbar >= 0).
struct Monomial {
  enum class Factor { X, Y, Theta, One };
  Factor factor = Factor::One;
  int view = -1;   // 0-based view index for X, Y, Theta
  int coord = -1;  // 0 or 1 for X, Y
  int xbar = -1;   // 0..3 when multiplied by X_bar_s, -1 otherwise

  std::string label() const {
    std::string f;
    switch (factor) {
      case Factor::X: f = "x" + std::to_string(view + 1) + "_" + std::to_string(coord + 1); break;
      case Factor::Y: f = "y" + std::to_string(view + 1) + "_" + std::to_string(coord + 1); break;
      case Factor::Theta: f = "theta" + std::to_string(view + 1); break;
      case Factor::One: f = "1"; break;
    }
    if (xbar < 0) return f;
    const std::string xs = "Xbar" + std::to_string(xbar + 1);
    return factor == Factor::One ? xs : f + "*" + xs;
  }
};

struct SymmetricConstraint {
  SpMat A;
  double rhs = 0.0;
  std::string label;
};

struct QcqpProblem {
  RelaxationKind kind = RelaxationKind::T;
  int n = 0;
  std::vector<Monomial> basis;
  Eigen::MatrixXd M;
  SpMat E;
  /// Homogeneous constraints followed by the normalisation (rhs 1).
  std::vector<SymmetricConstraint> constraints;
  /// d x d' basis of a subspace containing every feasible z; empty when the
  /// whole space is admissible (T, RT).
  SpMat face;

  int dim() const { return static_cast<int>(basis.size()); }
  int num_constraints() const { return static_cast<int>(constraints.size()); }
  int num_homogeneous() const { return num_constraints() - 1; }
};

/// Index layout of the lifted vector for each relaxation (0-based views).
struct BasisLayout {
  RelaxationKind kind;
  int n;

  // Index into the small factor vector (x; 1) or (y; theta; 1).
  int factor_y(int i, int k) const { return 2 * i + k; }
  int factor_theta(int i) const { return 2 * n + i; }
  int factor_one() const { return is_robust(kind) ? 3 * n : 2 * n; }
  int factor_dim() const { return factor_one() + 1; }

  int dim() const { return is_fractional(kind) ? 4 * factor_dim() : factor_dim(); }
  // Fractional layouts: element (factor p) * X_bar_s lives at 4p + s.
  int kron(int p, int s) const { return 4 * p + s; }
};

// Number of variables and constraints of each relaxation.
inline int expected_dimension(RelaxationKind kind, int n) {
  switch (kind) {
    case RelaxationKind::T: return 2 * n + 1;
    case RelaxationKind::RT: return 3 * n + 1;
    case RelaxationKind::TF: return 8 * n + 4;
    case RelaxationKind::RTF: return 12 * n + 4;
  }
  return 0;
}

inline int expected_constraint_count(RelaxationKind kind, int n) {
  switch (kind) {
    case RelaxationKind::T: return n * (n - 1) / 2 + 1;
    case RelaxationKind::RT: return n * (n - 1) / 2 + 3 * n + 1;
    case RelaxationKind::TF: return 28 * n * n + 14 * n + 1;
    case RelaxationKind::RTF: return 51 * n * n + 65 * n + 1;
  }
  return 0;
}

namespace detail {

// Sums duplicates and drops exact zeros. Constraints carry a handful of
// entries, so the compressed arrays are filled directly from sorted triplets.
// Sorts `t` in place.
inline SpMat from_triplets(int d, std::vector<Triplet>& t) {
  std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
    return a.col() != b.col() ? a.col() < b.col() : a.row() < b.row();
  });
  std::size_t m = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (m > 0 && t[m - 1].row() == t[k].row() && t[m - 1].col() == t[k].col()) {
      t[m - 1] = Triplet(t[k].row(), t[k].col(), t[m - 1].value() + t[k].value());
    } else {
      t[m++] = t[k];
    }
  }
  SpMat A(d, d);
  std::size_t nnz = 0;
  for (std::size_t k = 0; k < m; ++k) nnz += t[k].value() != 0.0 ? 1 : 0;
  A.resizeNonZeros(static_cast<Eigen::Index>(nnz));
  auto* outer = A.outerIndexPtr();
  std::size_t pos = 0;
  for (std::size_t k = 0; k < m; ++k) {
    if (t[k].value() == 0.0) continue;
    A.valuePtr()[pos] = t[k].value();
    A.innerIndexPtr()[pos] = t[k].row();
    ++outer[t[k].col() + 1];
    ++pos;
  }
  for (int c = 0; c < d; ++c) outer[c + 1] += outer[c];
  return A;
}

// Appends 0.5 * w * (e_a e_b^T + e_b e_a^T).
inline void add_sym(std::vector<Triplet>& t, int a, int b, double w) {
  if (w == 0.0) return;
  if (a == b) {
    t.emplace_back(a, a, w);
  } else {
    t.emplace_back(a, b, 0.5 * w);
    t.emplace_back(b, a, 0.5 * w);
  }
}

// Eigen 3.4 sparse matrices have no move constructor, so the matrix is
// swapped into place instead of copied.
inline void push_homogeneous(std::vector<SymmetricConstraint>& out, SpMat&& A, std::string label) {
  SymmetricConstraint& c = out.emplace_back();
  c.A.swap(A);
  c.label = std::move(label);
}

inline SpMat normalisation_matrix(const BasisLayout& layout) {
  std::vector<Triplet> t;
  if (is_fractional(layout.kind)) {
    for (int s = 0; s < 4; ++s) t.emplace_back(layout.kron(layout.factor_one(), s), layout.kron(layout.factor_one(), s), 1.0);
  } else {
    t.emplace_back(layout.factor_one(), layout.factor_one(), 1.0);
  }
  return from_triplets(layout.dim(), t);
}

inline std::vector<Monomial> make_basis(const BasisLayout& layout) {
  std::vector<Monomial> factors;
  const bool robust = is_robust(layout.kind);
  for (int i = 0; i < layout.n; ++i) {
    for (int k = 0; k < 2; ++k) {
      factors.push_back({robust ? Monomial::Factor::Y : Monomial::Factor::X, i, k, -1});
    }
  }
  if (robust) {
    for (int i = 0; i < layout.n; ++i) factors.push_back({Monomial::Factor::Theta, i, -1, -1});
  }
  factors.push_back({Monomial::Factor::One, -1, -1, -1});
  if (!is_fractional(layout.kind)) return factors;
  std::vector<Monomial> basis;
  basis.reserve(factors.size() * 4);
  for (const auto& f : factors) {
    for (int s = 0; s < 4; ++s) {
      Monomial m = f;
      m.xbar = s;
      basis.push_back(m);
    }
  }
  return basis;
}

inline std::string pair_label(std::string_view name, std::initializer_list<int> idx) {
  std::string s(name);
  s += '(';
  bool first = true;
  for (int v : idx) {
    if (!first) s += ',';
    s += std::to_string(v);
    first = false;
  }
  return s + ')';
}

inline void check_problem(const TriangulationProblem& problem) {
  if (problem.size() < 2) throw Error(ErrorCode::ConfigInvalid, "triangulation needs at least two views");
}

// Epipolar constraint between (u_i; w_i) and (u_j; w_j) where w is the
// homogeneous slot (1 for T, theta for RT).
inline SpMat epipolar_matrix(const BasisLayout& L, const Mat3& F, int i, int j, bool robust) {
  const int hi = robust ? L.factor_theta(i) : L.factor_one();
  const int hj = robust ? L.factor_theta(j) : L.factor_one();
  const int idx_i[3] = {L.factor_y(i, 0), L.factor_y(i, 1), hi};
  const int idx_j[3] = {L.factor_y(j, 0), L.factor_y(j, 1), hj};
  std::vector<Triplet> t;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) add_sym(t, idx_i[a], idx_j[b], F(a, b));
  }
  return from_triplets(L.dim(), t);
}

inline void append_kron_constraints(const BasisLayout& L, std::vector<SymmetricConstraint>& out) {
  const int P = L.factor_dim();
  std::vector<Triplet> tr;
  for (int p = 0; p < P; ++p) {
    for (int q = p + 1; q < P; ++q) {
      for (int s = 0; s < 4; ++s) {
        for (int t = s + 1; t < 4; ++t) {
          tr.clear();
          add_sym(tr, L.kron(p, s), L.kron(q, t), 1.0);
          add_sym(tr, L.kron(p, t), L.kron(q, s), -1.0);
          push_homogeneous(out, from_triplets(L.dim(), tr), pair_label("kron", {p + 1, q + 1, s + 1, t + 1}));
        }
      }
    }
  }
}

// Reprojection row (u_k b - w a)^T X_bar multiplied by every basis element.
inline void append_reprojection_constraints(const BasisLayout& L, const TriangulationProblem& problem,
                                            std::vector<SymmetricConstraint>& out) {
  const bool robust = is_robust(L.kind);
  const int d = L.dim();
  std::vector<Triplet> tr;
  for (int i = 0; i < L.n; ++i) {
    const Mat34 P = camera_matrix(problem.views[i]);
    const int w = robust ? L.factor_theta(i) : L.factor_one();
    for (int k = 0; k < 2; ++k) {
      for (int j = 0; j < d; ++j) {
        tr.clear();
        for (int s = 0; s < 4; ++s) {
          add_sym(tr, L.kron(L.factor_y(i, k), s), j, P(2, s));
          add_sym(tr, L.kron(w, s), j, -P(k, s));
        }
        push_homogeneous(out, from_triplets(d, tr), pair_label("reproj", {i + 1, k + 1, j + 1}));
      }
    }
  }
}

// Each reprojection row forces w_ik^T z = 0 for a fixed vector w_ik supported
// on the blocks y_ik (x) X_bar and w_i (x) X_bar. The returned columns span the
// orthogonal complement of all w_ik: one column per coordinate except the
// pivot coordinate of every y_ik block, which absorbs the correction.
inline SpMat fractional_face(const BasisLayout& L, const TriangulationProblem& problem) {
  const bool robust = is_robust(L.kind);
  const int d = L.dim();
  std::vector<int> pivot(L.n);
  std::vector<Mat34> P;
  for (int i = 0; i < L.n; ++i) {
    P.push_back(camera_matrix(problem.views[i]));
    int best = 0;
    for (int s = 1; s < 4; ++s) {
      if (std::abs(P[i](2, s)) > std::abs(P[i](2, best))) best = s;
    }
    pivot[i] = best;
  }
  std::vector<bool> is_pivot(d, false);
  for (int i = 0; i < L.n; ++i) {
    for (int k = 0; k < 2; ++k) is_pivot[L.kron(L.factor_y(i, k), pivot[i])] = true;
  }
  std::vector<Triplet> t;
  int col = 0;
  for (int p = 0; p < L.factor_dim(); ++p) {
    for (int s = 0; s < 4; ++s) {
      const int row = L.kron(p, s);
      if (is_pivot[row]) continue;
      t.emplace_back(row, col, 1.0);
      for (int i = 0; i < L.n; ++i) {
        const double bp = P[i](2, pivot[i]);
        const int w = robust ? L.factor_theta(i) : L.factor_one();
        for (int k = 0; k < 2; ++k) {
          const int y = L.factor_y(i, k);
          if (p == y) t.emplace_back(L.kron(y, pivot[i]), col, -P[i](2, s) / bp);
          if (p == w) t.emplace_back(L.kron(y, pivot[i]), col, P[i](k, s) / bp);
        }
      }
      ++col;
    }
  }
  SpMat V(d, col);
  V.setFromTriplets(t.begin(), t.end());
  return V;
}

inline QcqpProblem start_problem(RelaxationKind kind, const TriangulationProblem& problem) {
  check_problem(problem);
  QcqpProblem q;
  q.kind = kind;
  q.n = problem.size();
  const BasisLayout L{kind, q.n};
  q.basis = make_basis(L);
  q.E = normalisation_matrix(L);
  q.constraints.reserve(static_cast<std::size_t>(expected_constraint_count(kind, q.n)));
  return q;
}

inline void finish_problem(QcqpProblem& q) { q.constraints.push_back({q.E, 1.0, "norm"}); }

inline Eigen::MatrixXd kron_identity4(const Eigen::MatrixXd& A) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(4 * A.rows(), 4 * A.cols());
  for (Eigen::Index p = 0; p < A.rows(); ++p) {
    for (Eigen::Index q = 0; q < A.cols(); ++q) {
      if (A(p, q) == 0.0) continue;
      for (int s = 0; s < 4; ++s) out(4 * p + s, 4 * q + s) = A(p, q);
    }
  }
  return out;
}

}  // namespace detail

/// M_x = [[I, -x], [-x^T, |x|^2]] over the stacked observations.
inline Eigen::MatrixXd cost_matrix_plain(std::span<const Vec2> obs) {
  const int n = static_cast<int>(obs.size());
  const int d = 2 * n + 1;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
  M.topLeftCorner(2 * n, 2 * n).setIdentity();
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 2; ++k) {
      M(2 * i + k, d - 1) = -obs[i](k);
      M(d - 1, 2 * i + k) = -obs[i](k);
    }
    sq += obs[i].squaredNorm();
  }
  M(d - 1, d - 1) = sq;
  return M;
}

/// Robust cost over (y; theta; 1). On theta_i^2 = theta_i, y_i = theta_i x_i
/// the quadratic form equals sum theta_i |x_i - x~_i|^2 + (1 - theta_i) c_i.
inline Eigen::MatrixXd cost_matrix_robust(std::span<const Vec2> obs, std::span<const double> c) {
  const int n = static_cast<int>(obs.size());
  if (static_cast<int>(c.size()) != n) throw Error(ErrorCode::DimensionMismatch, "one threshold per observation");
  const int d = 3 * n + 1;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
  double csum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!(c[i] > 0.0)) throw Error(ErrorCode::ThresholdInvalid, "inlier thresholds must be positive");
    const int th = 2 * n + i;
    for (int k = 0; k < 2; ++k) {
      M(2 * i + k, 2 * i + k) = 1.0;
      M(2 * i + k, th) = -obs[i](k);
      M(th, 2 * i + k) = -obs[i](k);
    }
    M(th, th) = obs[i].squaredNorm();
    M(th, d - 1) = -0.5 * c[i];
    M(d - 1, th) = -0.5 * c[i];
    csum += c[i];
  }
  M(d - 1, d - 1) = csum;
  return M;
}

inline std::vector<double> thresholds(const TriangulationProblem& problem) {
  std::vector<double> c;
  c.reserve(problem.views.size());
  for (const auto& v : problem.views) c.push_back(v.inlier_threshold_sq);
  return c;
}

/// Relaxation T.
inline QcqpProblem build_epipolar(const TriangulationProblem& problem) {
  QcqpProblem q = detail::start_problem(RelaxationKind::T, problem);
  const BasisLayout L{q.kind, q.n};
  const auto obs = observations(problem);
  q.M = cost_matrix_plain(obs);
  for (int i = 0; i < q.n; ++i) {
    for (int j = i + 1; j < q.n; ++j) {
      const Mat3 F = fundamental_matrix(problem.views[i], problem.views[j]);
      detail::push_homogeneous(q.constraints, detail::epipolar_matrix(L, F, i, j, false), detail::pair_label("epipolar", {i + 1, j + 1}));
    }
  }
  detail::finish_problem(q);
  return q;
}

/// Relaxation RT. The theta constraints use the doubled form
/// z^T A z = 2 (theta_i^2 - theta_i) and 2 (theta_i y_ik - y_ik).
inline QcqpProblem build_epipolar_robust(const TriangulationProblem& problem) {
  QcqpProblem q = detail::start_problem(RelaxationKind::RT, problem);
  const BasisLayout L{q.kind, q.n};
  const auto obs = observations(problem);
  const auto c = thresholds(problem);
  q.M = cost_matrix_robust(obs, c);
  const int h = L.factor_one();
  for (int i = 0; i < q.n; ++i) {
    for (int j = i + 1; j < q.n; ++j) {
      const Mat3 F = fundamental_matrix(problem.views[i], problem.views[j]);
      detail::push_homogeneous(q.constraints, detail::epipolar_matrix(L, F, i, j, true), detail::pair_label("epipolar", {i + 1, j + 1}));
    }
  }
  for (int i = 0; i < q.n; ++i) {
    std::vector<Triplet> t;
    detail::add_sym(t, L.factor_theta(i), L.factor_theta(i), 2.0);
    detail::add_sym(t, L.factor_theta(i), h, -2.0);
    detail::push_homogeneous(q.constraints, detail::from_triplets(L.dim(), t), detail::pair_label("theta_idem", {i + 1}));
  }
  for (int i = 0; i < q.n; ++i) {
    for (int k = 0; k < 2; ++k) {
      std::vector<Triplet> t;
      detail::add_sym(t, L.factor_theta(i), L.factor_y(i, k), 2.0);
      detail::add_sym(t, h, L.factor_y(i, k), -2.0);
      detail::push_homogeneous(q.constraints, detail::from_triplets(L.dim(), t), detail::pair_label("theta_y", {i + 1, k + 1}));
    }
  }
  detail::finish_problem(q);
  return q;
}

/// Relaxation TF.
inline QcqpProblem build_fractional(const TriangulationProblem& problem) {
  QcqpProblem q = detail::start_problem(RelaxationKind::TF, problem);
  const BasisLayout L{q.kind, q.n};
  q.M = detail::kron_identity4(cost_matrix_plain(observations(problem)));
  detail::append_reprojection_constraints(L, problem, q.constraints);
  detail::append_kron_constraints(L, q.constraints);
  detail::finish_problem(q);
  q.face = detail::fractional_face(L, problem);
  return q;
}

/// Relaxation RTF. The cost is M^c kron I_4, which already spans all
/// 12n + 4 basis elements.
inline QcqpProblem build_fractional_robust(const TriangulationProblem& problem) {
  QcqpProblem q = detail::start_problem(RelaxationKind::RTF, problem);
  const BasisLayout L{q.kind, q.n};
  q.M = detail::kron_identity4(cost_matrix_robust(observations(problem), thresholds(problem)));
  detail::append_reprojection_constraints(L, problem, q.constraints);
  detail::append_kron_constraints(L, q.constraints);
  const int h = L.factor_one();
  std::vector<Triplet> tr;
  for (int i = 0; i < q.n; ++i) {
    const int th = L.factor_theta(i);
    for (int s = 0; s < 4; ++s) {
      for (int t = 0; t < 4; ++t) {
        tr.clear();
        detail::add_sym(tr, L.kron(th, s), L.kron(th, t), 1.0);
        detail::add_sym(tr, L.kron(h, s), L.kron(th, t), -1.0);
        detail::push_homogeneous(q.constraints, detail::from_triplets(L.dim(), tr), detail::pair_label("theta_idem", {i + 1, s + 1, t + 1}));
      }
    }
  }
  for (int i = 0; i < q.n; ++i) {
    const int th = L.factor_theta(i);
    for (int k = 0; k < 2; ++k) {
      for (int s = 0; s < 4; ++s) {
        for (int t = 0; t < 4; ++t) {
          tr.clear();
          detail::add_sym(tr, L.kron(th, s), L.kron(L.factor_y(i, k), t), 1.0);
          detail::add_sym(tr, L.kron(h, s), L.kron(L.factor_y(i, k), t), -1.0);
          detail::push_homogeneous(q.constraints, detail::from_triplets(L.dim(), tr),
                                   detail::pair_label("theta_y", {i + 1, k + 1, s + 1, t + 1}));
        }
      }
    }
  }
  detail::finish_problem(q);
  q.face = detail::fractional_face(L, problem);
  return q;
}

inline QcqpProblem build_relaxation(const TriangulationProblem& problem, RelaxationKind kind) {
  switch (kind) {
    case RelaxationKind::T: return build_epipolar(problem);
    case RelaxationKind::RT: return build_epipolar_robust(problem);
    case RelaxationKind::TF: return build_fractional(problem);
    case RelaxationKind::RTF: return build_fractional_robust(problem);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown relaxation kind");
}

/// Lifted vector of a candidate (reprojections, inlier flags, point) in the
/// basis of `kind`. X_bar is normalised to unit length for fractional kinds.
inline Eigen::VectorXd lift(RelaxationKind kind, std::span<const Vec2> x, const std::vector<bool>& inlier, const Vec3& X) {
  const int n = static_cast<int>(x.size());
  const BasisLayout L{kind, n};
  Eigen::VectorXd f = Eigen::VectorXd::Zero(L.factor_dim());
  for (int i = 0; i < n; ++i) {
    const double th = (is_robust(kind) && !inlier.empty() && !inlier[i]) ? 0.0 : 1.0;
    f(L.factor_y(i, 0)) = th * x[i](0);
    f(L.factor_y(i, 1)) = th * x[i](1);
    if (is_robust(kind)) f(L.factor_theta(i)) = th;
  }
  f(L.factor_one()) = 1.0;
  if (!is_fractional(kind)) return f;
  const Vec4 Xbar = X.homogeneous().normalized();
  Eigen::VectorXd z(L.dim());
  for (int p = 0; p < L.factor_dim(); ++p) z.segment<4>(4 * p) = f(p) * Xbar;
  return z;
}

}  // namespace certri
