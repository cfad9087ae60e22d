#pragma once

// Dense-regime conic solver for
//
//   min tr(C Z)  s.t.  tr(A_i Z) = b_i,  Z >= 0.
//
// Pipeline:
//   1. optional facial reduction Z = V Z' V^T onto a known face; constraints
//      that vanish on the face are dropped and their multipliers recovered
//      afterwards,
//   2. removal of linearly dependent constraints (pivoted Cholesky of the
//      constraint Gram matrix),
//   3. row and cost equilibration,
//   4. a primal-dual interior-point method (default) or alternating-direction
//      splitting on the dual,
//   5. polish: the numerical rank of Z is fixed and the KKT system of the
//      factorised problem is solved by Newton's method, with least-squares
//      multiplier corrections on the detected face of S.
// Multipliers are reported with S = C - sum_i y_i A_i; for a QCQP form that is
// S = M + sum xi_i A_i - lambda E.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "certri/error.hpp"
#include "certri/relaxations.hpp"

namespace certri {

struct SdpConstraint {
  SpMat A;
  double b = 0.0;
};

struct SdpStandardForm {
  int d = 0;
  Eigen::MatrixXd C;
  /// The last constraint is the normalisation tr(E Z) = 1.
  std::vector<SdpConstraint> constraints;
  /// Optional d x d' basis with range(Z) inside range(face) for every
  /// feasible Z. Empty means no reduction.
  SpMat face;
};

enum class SolverMethod { InteriorPoint, Splitting };

inline constexpr std::string_view to_string(SolverMethod m) {
  return m == SolverMethod::InteriorPoint ? "interior-point" : "splitting";
}

struct SolverSettings {
  double eps_primal = 1e-9;
  double eps_dual = 1e-9;
  double eps_gap = 1e-9;
  int max_iterations = 200000;
  bool polish = true;
  /// Row and cost equilibration of the constraint operator.
  bool scaling = true;
  SolverMethod method = SolverMethod::InteriorPoint;
  /// Splitting only: multiplier step length in (0, 1.618) and penalty
  /// adaptation schedule.
  double step_length = 1.6;
  int adapt_every = 25;
  double adapt_ratio = 1.5;
  /// Wall-clock budget in seconds; 0 disables it.
  double time_limit = 0.0;
  /// Optional CSV iteration log: iteration,primal_res,dual_res,gap.
  std::ostream* log = nullptr;
  int log_every = 1;
};

enum class SolverStatus { Solved, MaxIter, Infeasible };

inline constexpr std::string_view to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Solved: return "Solved";
    case SolverStatus::MaxIter: return "MaxIter";
    case SolverStatus::Infeasible: return "Infeasible";
  }
  return "?";
}

struct SdpSolution {
  Eigen::MatrixXd Z;
  double lambda = 0.0;
  Eigen::VectorXd xi;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  int iterations = 0;
  SolverStatus status = SolverStatus::MaxIter;
  bool polished = false;
};

struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;

  double worst(const SolverSettings& s) const {
    return std::max({primal / s.eps_primal, dual / s.eps_dual, gap / s.eps_gap});
  }
};

inline SdpStandardForm to_standard_form(const QcqpProblem& qcqp) {
  SdpStandardForm f;
  f.d = qcqp.dim();
  f.C = qcqp.M;
  f.constraints.reserve(qcqp.constraints.size());
  for (const auto& c : qcqp.constraints) f.constraints.push_back({c.A, c.rhs});
  f.face = qcqp.face;
  return f;
}

inline Eigen::MatrixXd psd_project(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

namespace detail {

inline double trace_product(const SpMat& A, const Eigen::MatrixXd& Z) {
  double s = 0.0;
  for (int k = 0; k < A.outerSize(); ++k) {
    for (SpMat::InnerIterator it(A, k); it; ++it) s += it.value() * Z(it.row(), it.col());
  }
  return s;
}

inline void add_scaled(Eigen::MatrixXd& out, const SpMat& A, double w) {
  if (w == 0.0) return;
  for (int k = 0; k < A.outerSize(); ++k) {
    for (SpMat::InnerIterator it(A, k); it; ++it) out(it.row(), it.col()) += w * it.value();
  }
}

/// S = C - sum y_i A_i.
inline Eigen::MatrixXd dual_slack(const SdpStandardForm& f, const Eigen::VectorXd& y) {
  Eigen::MatrixXd S = f.C;
  for (std::size_t i = 0; i < f.constraints.size(); ++i) add_scaled(S, f.constraints[i].A, -y(i));
  return S;
}

inline Eigen::VectorXd multipliers_to_y(double lambda, const Eigen::VectorXd& xi) {
  Eigen::VectorXd y(xi.size() + 1);
  y.head(xi.size()) = -xi;
  y(xi.size()) = lambda;
  return y;
}

inline double min_eigenvalue(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
  return es.eigenvalues()(0);
}

inline Residuals residuals_y(const SdpStandardForm& f, const Eigen::MatrixXd& Z, const Eigen::VectorXd& y) {
  Residuals r;
  for (const auto& c : f.constraints) {
    r.primal = std::max(r.primal, std::abs(trace_product(c.A, Z) - c.b) / (1.0 + std::abs(c.b)));
  }
  const Eigen::MatrixXd S = dual_slack(f, y);
  r.dual = std::max(0.0, -min_eigenvalue(S)) / (1.0 + f.C.norm());
  double dual_obj = 0.0;
  for (std::size_t i = 0; i < f.constraints.size(); ++i) dual_obj += f.constraints[i].b * y(i);
  const double primal_obj = (f.C.cwiseProduct(Z)).sum();
  r.gap = std::abs(primal_obj - dual_obj) / (1.0 + std::abs(primal_obj));
  return r;
}

// Symmetric-vector layout: entry (p, q), p <= q, at q (q + 1) / 2 + p, with
// off-diagonal entries weighted by sqrt(2) so inner products are preserved.
struct SvecLayout {
  int d = 0;
  int size() const { return d * (d + 1) / 2; }
  static int index(int p, int q) { return p <= q ? q * (q + 1) / 2 + p : p * (p + 1) / 2 + q; }

  Eigen::VectorXd pack(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd v(size());
    for (int q = 0; q < d; ++q) {
      for (int p = 0; p < q; ++p) v(index(p, q)) = M_SQRT2 * X(p, q);
      v(index(q, q)) = X(q, q);
    }
    return v;
  }

  // Packs (X + X^T) / 2 without forming it.
  Eigen::VectorXd pack_sym(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd v(size());
    for (int q = 0; q < d; ++q) {
      for (int p = 0; p < q; ++p) v(index(p, q)) = M_SQRT1_2 * (X(p, q) + X(q, p));
      v(index(q, q)) = X(q, q);
    }
    return v;
  }

  void unpack(const Eigen::VectorXd& v, Eigen::MatrixXd& X) const {
    X.resize(d, d);
    for (int q = 0; q < d; ++q) {
      for (int p = 0; p < q; ++p) {
        const double x = v(index(p, q)) * M_SQRT1_2;
        X(p, q) = x;
        X(q, p) = x;
      }
      X(q, q) = v(index(q, q));
    }
  }
};

inline SpMat svec_rows(const SdpStandardForm& f) {
  std::vector<Triplet> trip;
  for (std::size_t i = 0; i < f.constraints.size(); ++i) {
    const SpMat& A = f.constraints[i].A;
    for (int k = 0; k < A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(A, k); it; ++it) {
        const int p = static_cast<int>(it.row());
        const int q = static_cast<int>(it.col());
        if (p > q) continue;
        trip.emplace_back(static_cast<int>(i), SvecLayout::index(p, q), (p == q ? 1.0 : M_SQRT2) * it.value());
      }
    }
  }
  SpMat out(static_cast<Eigen::Index>(f.constraints.size()), SvecLayout{f.d}.size());
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

// Indices of a maximal linearly independent subset of the rows of `rows`
// (sorted). Eigen's LDLT pivots on the largest remaining diagonal entry, so on
// the PSD row Gram matrix it is a rank-revealing pivoted Cholesky.
inline std::vector<int> independent_rows(const SpMat& rows, double rel_tol = 1e-10) {
  const int m = static_cast<int>(rows.rows());
  Eigen::MatrixXd G = Eigen::MatrixXd(rows * rows.transpose());
  const double gmax = G.diagonal().maxCoeff();
  std::vector<int> keep;
  if (!(gmax > 0.0)) return keep;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  Eigen::VectorXi perm = Eigen::VectorXi::LinSpaced(m, 0, m - 1);
  const auto& tr = ldlt.transpositionsP();
  for (int k = 0; k < m; ++k) std::swap(perm(k), perm(tr.coeff(k)));
  const Eigen::VectorXd D = ldlt.vectorD();
  for (int k = 0; k < m; ++k) {
    if (D(k) > rel_tol * gmax) keep.push_back(perm(k));
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

// The problem actually handed to the iterative method, plus the maps back to
// the caller's form.
struct ReducedProblem {
  SdpStandardForm form;
  std::vector<int> kept;     // caller constraint index of every reduced constraint
  std::vector<int> dropped;  // constraints that vanish on the face
  bool reduced = false;      // a face basis was applied
  Eigen::MatrixXd V;         // dense face basis (d x d')
  bool consistent = true;
};

inline ReducedProblem reduce_problem(const SdpStandardForm& f) {
  ReducedProblem r;
  const int m = static_cast<int>(f.constraints.size());
  SdpStandardForm face_form;
  std::vector<int> face_index;
  if (f.face.cols() > 0 && f.face.cols() < f.d) {
    r.reduced = true;
    // Unit columns keep the reduced variable as well scaled as the original.
    SpMat face = f.face;
    for (int j = 0; j < face.outerSize(); ++j) {
      double nrm = 0.0;
      for (SpMat::InnerIterator it(face, j); it; ++it) nrm += it.value() * it.value();
      nrm = std::sqrt(nrm);
      if (nrm > 0.0) {
        for (SpMat::InnerIterator it(face, j); it; ++it) it.valueRef() /= nrm;
      }
    }
    r.V = Eigen::MatrixXd(face);
    const SpMat Vt = face.transpose();
    face_form.d = static_cast<int>(face.cols());
    face_form.C = r.V.transpose() * f.C * r.V;
    for (int i = 0; i < m; ++i) {
      SpMat Ar = (Vt * f.constraints[i].A * face).pruned(1e-14 * std::max(1.0, f.constraints[i].A.norm()));
      const double scale = f.constraints[i].A.norm();
      if (Ar.norm() <= 1e-10 * scale) {
        r.dropped.push_back(i);
        if (std::abs(f.constraints[i].b) > 0.0) r.consistent = false;
        continue;
      }
      face_form.constraints.push_back({std::move(Ar), f.constraints[i].b});
      face_index.push_back(i);
    }
  } else {
    face_form.d = f.d;
    face_form.C = f.C;
    face_form.constraints = f.constraints;
    for (int i = 0; i < m; ++i) face_index.push_back(i);
  }
  const std::vector<int> indep = independent_rows(svec_rows(face_form));
  r.form.d = face_form.d;
  r.form.C = face_form.C;
  for (int k : indep) {
    r.form.constraints.push_back(std::move(face_form.constraints[k]));
    r.kept.push_back(face_index[k]);
  }
  return r;
}

// Problem after row and cost scaling:
//   A^_i = r_i A_i,  b^_i = r_i b_i,  C^ = C / cost_scale,
// so Z is unchanged and y_i = cost_scale * r_i * y^_i.
struct ScaledForm {
  int d = 0;
  SvecLayout layout;
  std::vector<SpMat> A;  // scaled matrices
  SpMat Asv;             // m x nv, rows are svec(A^_i)
  SpMat Asv_t;           // nv x m
  Eigen::VectorXd b;
  Eigen::MatrixXd C;
  Eigen::VectorXd c;     // svec(C^)
  Eigen::VectorXd row_scale;
  double cost_scale = 1.0;

  int m() const { return static_cast<int>(b.size()); }
  Eigen::VectorXd apply(const Eigen::MatrixXd& X) const { return Asv * layout.pack_sym(X); }
  Eigen::MatrixXd adjoint(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd out;
    layout.unpack(Asv_t * y, out);
    return out;
  }
};

inline ScaledForm scale_form(const SdpStandardForm& f, bool equilibrate) {
  const int m = static_cast<int>(f.constraints.size());
  ScaledForm s;
  s.d = f.d;
  s.layout.d = f.d;
  s.Asv = svec_rows(f);
  s.row_scale = Eigen::VectorXd::Ones(m);
  if (equilibrate) {
    for (int i = 0; i < m; ++i) {
      const double nrm = f.constraints[i].A.norm();
      if (nrm > 0.0) s.row_scale(i) = 1.0 / nrm;
    }
  }
  s.Asv = s.row_scale.asDiagonal() * s.Asv;
  s.Asv.makeCompressed();
  s.Asv_t = s.Asv.transpose();
  s.A.reserve(m);
  s.b.resize(m);
  for (int i = 0; i < m; ++i) {
    s.A.push_back(f.constraints[i].A * s.row_scale(i));
    s.b(i) = f.constraints[i].b * s.row_scale(i);
  }
  s.cost_scale = equilibrate ? std::max(1.0, f.C.norm()) : 1.0;
  s.C = f.C / s.cost_scale;
  s.c = s.layout.pack(s.C);
  return s;
}

// Iterate of a method in the scaled space.
struct Iterate {
  Eigen::MatrixXd X;
  Eigen::MatrixXd S;
  Eigen::VectorXd y;
  int iterations = 0;
  bool diverged = false;
};

// Largest alpha with X + alpha dX >= 0 (infinity if unbounded, 0 when X is
// not positive definite).
inline double max_step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& dX) {
  Eigen::LLT<Eigen::MatrixXd> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  Eigen::MatrixXd M = llt.matrixL().solve(dX);
  M = llt.matrixL().solve(M.transpose()).transpose();
  M = 0.5 * (M + M.transpose());
  const double lmin = min_eigenvalue(M);
  return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

// Sparse entries of every constraint in a flat array for Schur assembly.
struct ConstraintEntries {
  struct Entry {
    int p, q;
    double v;
  };
  std::vector<Entry> entries;
  std::vector<int> offset;               // m + 1
  std::vector<std::vector<int>> rows;    // nonzero rows of A_j
  std::vector<std::vector<int>> row_of;  // per entry: local row position

  explicit ConstraintEntries(const std::vector<SpMat>& A) {
    offset.push_back(0);
    for (const auto& Ai : A) {
      std::vector<int> r;
      for (int k = 0; k < Ai.outerSize(); ++k) {
        for (SpMat::InnerIterator it(Ai, k); it; ++it) {
          entries.push_back({static_cast<int>(it.row()), static_cast<int>(it.col()), it.value()});
          r.push_back(static_cast<int>(it.row()));
        }
      }
      offset.push_back(static_cast<int>(entries.size()));
      std::sort(r.begin(), r.end());
      r.erase(std::unique(r.begin(), r.end()), r.end());
      rows.push_back(std::move(r));
    }
  }
};

// Schur complement H_ij = tr(A_i X A_j S^{-1}).
inline Eigen::MatrixXd schur_matrix(const ConstraintEntries& ce, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Sinv) {
  const int m = static_cast<int>(ce.rows.size());
  const int d = static_cast<int>(X.rows());
  Eigen::MatrixXd H(m, m);
  Eigen::MatrixXd Xr, Tt, B(d, d);
  std::vector<int> local(d, -1);
  for (int j = 0; j < m; ++j) {
    const auto& rj = ce.rows[j];
    const int k = static_cast<int>(rj.size());
    for (int l = 0; l < k; ++l) local[rj[l]] = l;
    Xr.resize(d, k);
    Tt.setZero(d, k);
    for (int l = 0; l < k; ++l) Xr.col(l) = X.col(rj[l]);
    for (int e = ce.offset[j]; e < ce.offset[j + 1]; ++e) {
      const auto& en = ce.entries[e];
      Tt.col(local[en.p]) += en.v * Sinv.col(en.q);
    }
    // B = X A_j S^{-1} = Xr * Tt^T
    B.noalias() = Xr * Tt.transpose();
    for (int i = j; i < m; ++i) {
      double h = 0.0;
      for (int e = ce.offset[i]; e < ce.offset[i + 1]; ++e) {
        const auto& en = ce.entries[e];
        h += en.v * B(en.q, en.p);
      }
      H(i, j) = h;
      H(j, i) = h;
    }
    for (int l = 0; l < k; ++l) local[rj[l]] = -1;
  }
  return H;
}

struct IpmMeasures {
  double primal = 1.0;
  double dual = 1.0;
  double gap = 1.0;
  double worst() const { return std::max({primal, dual, gap}); }
};

inline IpmMeasures ipm_measures(const ScaledForm& sf, const Eigen::MatrixXd& X, const Eigen::MatrixXd& S,
                                const Eigen::VectorXd& y) {
  IpmMeasures r;
  r.primal = (sf.apply(X) - sf.b).norm() / (1.0 + sf.b.norm());
  r.dual = (sf.C - S - sf.adjoint(y)).norm() / (1.0 + sf.C.norm());
  const double pobj = sf.C.cwiseProduct(X).sum();
  const double dobj = sf.b.dot(y);
  r.gap = std::max(std::abs(pobj - dobj), X.cwiseProduct(S).sum()) / (1.0 + std::abs(pobj) + std::abs(dobj));
  return r;
}

// Infeasible primal-dual path following with the HKM direction and a
// Mehrotra predictor-corrector.
template <typename Clock>
Iterate interior_point(const ScaledForm& sf, const SolverSettings& settings, typename Clock::time_point t0) {
  const int d = sf.d;
  const int m = sf.m();
  const ConstraintEntries ce(sf.A);
  const double tol = 0.1 * std::min({settings.eps_primal, settings.eps_dual, settings.eps_gap});

  double bmax = 0.0;
  for (int i = 0; i < m; ++i) bmax = std::max(bmax, (1.0 + std::abs(sf.b(i))));
  const double xi0 = std::max({10.0, std::sqrt(static_cast<double>(d)), d * bmax / 2.0});
  const double eta0 = std::max({10.0, std::sqrt(static_cast<double>(d)), sf.C.norm()});

  Iterate it;
  it.X = xi0 * Eigen::MatrixXd::Identity(d, d);
  it.S = eta0 * Eigen::MatrixXd::Identity(d, d);
  it.y = Eigen::VectorXd::Zero(m);
  Iterate best = it;
  double best_worst = std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  int stall = 0;

  const int max_iter = std::min(settings.max_iterations, 200);
  for (int k = 0; k <= max_iter; ++k) {
    const IpmMeasures meas = ipm_measures(sf, it.X, it.S, it.y);
    if (!std::isfinite(meas.worst())) throw Error(ErrorCode::NumericalBreakdown, "non-finite interior-point iterate");
    if (settings.log && k % std::max(1, settings.log_every) == 0) {
      *settings.log << k << ',' << meas.primal << ',' << meas.dual << ',' << meas.gap << '\n';
    }
    if (meas.worst() < best_worst) {
      best_worst = meas.worst();
      best = it;
      best.iterations = k;
      stall = 0;
    } else if (++stall >= 12) {
      // Badly scaled data can spend several iterations with a rising gap
      // before the fast phase, so the limit is generous.
      break;
    }
    if (meas.worst() <= tol || k == max_iter) break;
    if (it.X.norm() > 1e12 || it.y.norm() > 1e12) {
      best.diverged = true;
      break;
    }
    if (settings.time_limit > 0.0 && std::chrono::duration<double>(Clock::now() - t0).count() > settings.time_limit) break;

    Eigen::LLT<Eigen::MatrixXd> sllt(it.S);
    if (sllt.info() != Eigen::Success) break;
    Eigen::MatrixXd Sinv = sllt.solve(I);
    Sinv = 0.5 * (Sinv + Sinv.transpose());
    const double mu = it.X.cwiseProduct(it.S).sum() / d;

    Eigen::MatrixXd H = schur_matrix(ce, it.X, Sinv);
    const double hmax = std::max(H.diagonal().maxCoeff(), 1e-300);
    Eigen::LLT<Eigen::MatrixXd> hllt;
    for (double reg = 1e-15; reg < 1.0; reg *= 100.0) {
      Eigen::MatrixXd Hr = H;
      Hr.diagonal().array() += reg * hmax;
      hllt.compute(Hr);
      if (hllt.info() == Eigen::Success) break;
    }
    if (hllt.info() != Eigen::Success) break;

    const Eigen::VectorXd rp = sf.b - sf.apply(it.X);
    const Eigen::MatrixXd Rd = sf.C - it.S - sf.adjoint(it.y);
    const Eigen::VectorXd base = rp + sf.apply(it.X * Rd * Sinv);

    // Direction for the complementarity target Rc (given as Rc S^{-1}).
    auto direction = [&](const Eigen::MatrixXd& RcSinv, Eigen::MatrixXd& dX, Eigen::MatrixXd& dS, Eigen::VectorXd& dy) {
      const Eigen::VectorXd rhs = base - sf.apply(RcSinv);
      dy = hllt.solve(rhs);
      dy += hllt.solve(rhs - H * dy);
      dS = Rd - sf.adjoint(dy);
      const Eigen::MatrixXd T = RcSinv - it.X * dS * Sinv;
      dX = 0.5 * (T + T.transpose());
    };

    Eigen::MatrixXd dXa, dSa, dX, dS;
    Eigen::VectorXd dya, dy;
    direction(-it.X, dXa, dSa, dya);
    const double ap_a = std::min(1.0, max_step(it.X, dXa));
    const double ad_a = std::min(1.0, max_step(it.S, dSa));
    const double mu_aff = (it.X + ap_a * dXa).cwiseProduct(it.S + ad_a * dSa).sum() / d;
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

    const Eigen::MatrixXd RcSinv = sigma * mu * Sinv - it.X - dXa * dSa * Sinv;
    direction(RcSinv, dX, dS, dy);
    const double gamma = 0.9 + 0.09 * std::min(ap_a, ad_a);
    const double ap = std::min(1.0, gamma * max_step(it.X, dX));
    const double ad = std::min(1.0, gamma * max_step(it.S, dS));
    if (!(ap > 1e-12) && !(ad > 1e-12)) break;
    it.X += ap * dX;
    it.X = 0.5 * (it.X + it.X.transpose());
    it.S += ad * dS;
    it.S = 0.5 * (it.S + it.S.transpose());
    it.y += ad * dy;
    it.iterations = k + 1;
  }
  return best;
}

// Alternating-direction augmented Lagrangian on the dual with a cached
// Cholesky factor of the constraint Gram matrix. `checkpoint` is called when
// the residuals pass successive levels and may end the run.
template <typename Clock, typename Checkpoint>
Iterate splitting(const ScaledForm& sf, const SolverSettings& settings, typename Clock::time_point t0, Checkpoint&& checkpoint) {
  const int d = sf.d;
  const int m = sf.m();
  const int nv = sf.layout.size();
  SpMat gram = sf.Asv * sf.Asv_t;
  for (int i = 0; i < m; ++i) gram.coeffRef(i, i) += 1e-12;
  Eigen::SimplicialLLT<SpMat> chol(gram);
  if (chol.info() != Eigen::Success) throw Error(ErrorCode::NumericalBreakdown, "constraint Gram factorisation failed");

  Eigen::VectorXd x = Eigen::VectorXd::Zero(nv);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(nv);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd V(d, d), Xm(d, d), Sm(d, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(d);
  double mu = 1.0;
  const double bnorm = 1.0 + sf.b.norm();
  const double cnorm = 1.0 + sf.c.norm();
  const double target = std::min({settings.eps_primal, settings.eps_dual, settings.eps_gap});
  double level = 1e-3;

  Iterate out;
  int iter = 1;
  for (; iter <= settings.max_iterations; ++iter) {
    const Eigen::VectorXd rhs = mu * sf.b - sf.Asv * (mu * x + s - sf.c);
    y = chol.solve(rhs);
    const Eigen::VectorXd v = sf.c - sf.Asv_t * y - mu * x;
    sf.layout.unpack(v, V);
    eig.compute(V);
    if (eig.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigendecomposition did not converge");
    const Eigen::VectorXd& lam = eig.eigenvalues();
    const Eigen::MatrixXd& U = eig.eigenvectors();
    int npos = 0;
    while (npos < d && lam(d - 1 - npos) > 0.0) ++npos;
    const int nneg = d - npos;
    // S is the positive part of V, X the negative part scaled by 1/mu.
    Sm.setZero();
    Xm.setZero();
    if (npos > 0) Sm.noalias() = U.rightCols(npos) * lam.tail(npos).asDiagonal() * U.rightCols(npos).transpose();
    if (nneg > 0) Xm.noalias() = U.leftCols(nneg) * (-lam.head(nneg) / mu).asDiagonal() * U.leftCols(nneg).transpose();
    const Eigen::VectorXd x_new = (1.0 - settings.step_length) * x + settings.step_length * sf.layout.pack(Xm);
    s = sf.layout.pack(Sm);
    const double dinf = mu * (x_new - x).norm() / cnorm;
    x = x_new;
    const double pinf = (sf.Asv * x - sf.b).norm() / bnorm;
    const double pobj = sf.c.dot(x);
    const double dobj = sf.b.dot(y);
    const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    if (!std::isfinite(pinf) || !std::isfinite(dinf) || !std::isfinite(gap)) {
      throw Error(ErrorCode::NumericalBreakdown, "non-finite splitting iterate");
    }
    if (settings.log && iter % std::max(1, settings.log_every) == 0) {
      *settings.log << iter << ',' << pinf << ',' << dinf << ',' << gap << '\n';
    }
    const double worst = std::max({pinf, dinf, gap});
    if (worst <= target) break;
    if (worst <= level) {
      sf.layout.unpack(x, Xm);
      sf.layout.unpack(s, Sm);
      if (checkpoint(Xm, Sm, y)) break;
      level = std::max(0.1 * worst, 1e-14);
    }
    // Residual balancing: a dominant primal residual asks for a larger penalty.
    if (iter % settings.adapt_every == 0 && pinf > 0.0 && dinf > 0.0) {
      const double ratio = std::sqrt(pinf / dinf);
      if (ratio > settings.adapt_ratio || ratio < 1.0 / settings.adapt_ratio) {
        mu = std::clamp(mu * std::clamp(ratio, 0.2, 5.0), 1e-6, 1e6);
      }
    }
    if (settings.time_limit > 0.0 && iter % 16 == 0 &&
        std::chrono::duration<double>(Clock::now() - t0).count() > settings.time_limit) {
      break;
    }
  }
  sf.layout.unpack(x, out.X);
  sf.layout.unpack(s, out.S);
  out.y = y;
  out.iterations = std::min(iter, settings.max_iterations);
  return out;
}

struct PolishCandidate {
  Eigen::MatrixXd Z;
  Eigen::VectorXd y;
  Residuals res;
  double score = std::numeric_limits<double>::infinity();
};

// Newton iteration on the KKT system of the rank-r factorisation
//   S(y) Y = 0,  tr(A_i Y Y^T) = b_i,
// with minimum-norm corrections in both Y and y. Returns the final KKT
// residual (scaled like the primal/dual residuals).
inline double kkt_newton(const SdpStandardForm& f, Eigen::MatrixXd& Y, Eigen::VectorXd& y, double tol, int max_iter = 20) {
  const int d = f.d;
  const int r = static_cast<int>(Y.cols());
  const int m = static_cast<int>(f.constraints.size());
  const int n = d * r;
  const double cscale = 1.0 + f.C.norm();

  auto evaluate = [&](const Eigen::MatrixXd& Yc, const Eigen::VectorXd& yc, Eigen::MatrixXd& S, Eigen::MatrixXd& SY,
                      Eigen::VectorXd& c) {
    S = dual_slack(f, yc);
    SY = S * Yc;
    const Eigen::MatrixXd Z = Yc * Yc.transpose();
    c.resize(m);
    double worst = SY.cwiseAbs().maxCoeff() / cscale;
    for (int i = 0; i < m; ++i) {
      c(i) = trace_product(f.constraints[i].A, Z) - f.constraints[i].b;
      worst = std::max(worst, std::abs(c(i)) / (1.0 + std::abs(f.constraints[i].b)));
    }
    return worst;
  };

  Eigen::MatrixXd S, SY;
  Eigen::VectorXd c;
  double err = evaluate(Y, y, S, SY, c);
  for (int it = 0; it < max_iter && err > tol; ++it) {
    std::vector<Triplet> trip;
    for (int i = 0; i < m; ++i) {
      const SpMat& A = f.constraints[i].A;
      for (int k = 0; k < A.outerSize(); ++k) {
        for (SpMat::InnerIterator e(A, k); e; ++e) {
          for (int l = 0; l < r; ++l) {
            const double v = e.value() * Y(e.col(), l);
            if (v != 0.0) trip.emplace_back(static_cast<int>(e.row()) + d * l, i, v);
          }
        }
      }
    }
    SpMat G(n, m);
    G.setFromTriplets(trip.begin(), trip.end());
    const Eigen::MatrixXd GGt = Eigen::MatrixXd(G * G.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eg(GGt);
    if (eg.info() != Eigen::Success) break;
    const double gmax = std::max(eg.eigenvalues().maxCoeff(), 1e-300);
    Eigen::VectorXd ginv = Eigen::VectorXd::Zero(n);
    int keep = 0;
    for (int j = 0; j < n; ++j) {
      if (eg.eigenvalues()(j) > 1e-12 * gmax) {
        ginv(j) = 1.0 / eg.eigenvalues()(j);
        ++keep;
      }
    }
    const Eigen::MatrixXd Urange = eg.eigenvectors().rightCols(keep);
    auto gpinv = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      return eg.eigenvectors() * ginv.asDiagonal() * (eg.eigenvectors().transpose() * v);
    };
    auto project_null = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return v - Urange * (Urange.transpose() * v); };
    auto apply_S = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      Eigen::VectorXd out(n);
      Eigen::Map<Eigen::MatrixXd>(out.data(), d, r) = S * Eigen::Map<const Eigen::MatrixXd>(v.data(), d, r);
      return out;
    };

    // The range part fixes the constraints, the tangent part the stationarity.
    const Eigen::VectorXd delta_p = -0.5 * gpinv(G * c);
    const Eigen::VectorXd sy = Eigen::Map<const Eigen::VectorXd>(SY.data(), n);
    const Eigen::VectorXd rhs = -project_null(sy + apply_S(delta_p));
    const Eigen::MatrixXd Qb = Eigen::MatrixXd::Identity(n, n) - Urange * Urange.transpose();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (int l = 0; l < r; ++l) H.block(l * d, l * d, d, d) = S;
    const Eigen::MatrixXd B = Qb * H * Qb;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(B);
    if (eb.info() != Eigen::Success) break;
    const double bmax = std::max(eb.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
    const Eigen::VectorXd bt = eb.eigenvectors().transpose() * rhs;

    // Damped tangent steps: near-singular curvature (degenerate faces,
    // inaccurate multipliers) otherwise produces huge moves.
    bool accepted = false;
    for (const double damping : {0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0}) {
      Eigen::VectorXd w = bt;
      for (int j = 0; j < n; ++j) {
        const double lam = std::abs(eb.eigenvalues()(j));
        w(j) = lam > 1e-10 * bmax ? w(j) / (lam + damping * bmax) : 0.0;
      }
      const Eigen::VectorXd delta = delta_p + project_null(eb.eigenvectors() * w);
      const Eigen::VectorXd dy = G.transpose() * gpinv(sy + apply_S(delta));
      Eigen::MatrixXd Yn = Y + Eigen::Map<const Eigen::MatrixXd>(delta.data(), d, r);
      Eigen::VectorXd yn = y + dy;
      Eigen::MatrixXd Sn, SYn;
      Eigen::VectorXd cn;
      const double en = evaluate(Yn, yn, Sn, SYn, cn);
      if (std::isfinite(en) && en < err) {
        Y = std::move(Yn);
        y = std::move(yn);
        S = std::move(Sn);
        SY = std::move(SYn);
        c = std::move(cn);
        err = en;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return err;
}

// Minimum-norm change of y such that (C - sum y_i A_i) N = 0.
inline Eigen::VectorXd face_dual_correction(const SdpStandardForm& f, const Eigen::VectorXd& y, const Eigen::MatrixXd& N) {
  const int d = f.d;
  const int k = static_cast<int>(N.cols());
  const int m = static_cast<int>(f.constraints.size());
  std::vector<Triplet> trip;
  for (int i = 0; i < m; ++i) {
    const SpMat& A = f.constraints[i].A;
    for (int kk = 0; kk < A.outerSize(); ++kk) {
      for (SpMat::InnerIterator it(A, kk); it; ++it) {
        for (int l = 0; l < k; ++l) {
          const double v = it.value() * N(it.col(), l);
          if (v != 0.0) trip.emplace_back(static_cast<int>(it.row()) + d * l, i, v);
        }
      }
    }
  }
  SpMat G(d * k, m);
  G.setFromTriplets(trip.begin(), trip.end());
  const Eigen::MatrixXd SN = dual_slack(f, y) * N;
  const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(SN.data(), d * k);
  Eigen::MatrixXd GGt = Eigen::MatrixXd(G * G.transpose());
  const double reg = 1e-12 * std::max(1.0, GGt.diagonal().maxCoeff());
  GGt.diagonal().array() += reg;
  Eigen::LLT<Eigen::MatrixXd> llt(GGt);
  Eigen::VectorXd w = llt.solve(rhs);
  // One refinement pass against the unregularised system.
  const Eigen::VectorXd Gtw = G.transpose() * w;
  w += llt.solve(rhs - G * Gtw);
  return y + G.transpose() * w;
}

inline Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& V, double rel_tol = 1e-8) {
  if (V.cols() == 0) return V;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(V, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  int keep = 0;
  while (keep < sv.size() && sv(keep) > rel_tol * sv(0)) ++keep;
  return svd.matrixU().leftCols(keep);
}

// Polish attempts: caller-supplied rank-one candidates first, then every
// plausible rank of Z; for each, the face of S is grown by near-null
// eigenvectors until the multipliers become dual feasible.
inline PolishCandidate polish(const SdpStandardForm& f, const Eigen::MatrixXd& Z0, const Eigen::MatrixXd& S0,
                              const Eigen::VectorXd& y0, const SolverSettings& settings,
                              std::span<const Eigen::VectorXd> hints) {
  PolishCandidate best;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ez(Z0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S0);
  if (ez.info() != Eigen::Success || es.info() != Eigen::Success) return best;
  const int d = f.d;
  const Eigen::VectorXd zl = ez.eigenvalues().reverse();
  const Eigen::MatrixXd zv = ez.eigenvectors().rowwise().reverse();
  const double s_max = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  const double kkt_tol = 1e-3 * std::min(settings.eps_primal, settings.eps_dual);

  auto attempt = [&](Eigen::MatrixXd Y) {
    Eigen::VectorXd ynewton = y0;
    kkt_newton(f, Y, ynewton, kkt_tol);
    const Eigen::MatrixXd Z = Y * Y.transpose();
    const Eigen::MatrixXd Q = orthonormal_columns(Y);

    // Near-null directions of S outside range(Z), smallest first.
    std::vector<Eigen::VectorXd> extras;
    for (int j = 0; j < d && static_cast<int>(extras.size()) < 6; ++j) {
      if (es.eigenvalues()(j) > 1e-2 * s_max) break;
      Eigen::VectorXd v = es.eigenvectors().col(j);
      v -= Q * (Q.transpose() * v);
      for (const auto& e : extras) v -= e * e.dot(v);
      const double nv = v.norm();
      if (nv > 0.3) extras.push_back(v / nv);
    }
    for (std::size_t extra = 0; extra <= extras.size(); ++extra) {
      Eigen::MatrixXd N(d, Q.cols() + static_cast<Eigen::Index>(extra));
      N.leftCols(Q.cols()) = Q;
      for (std::size_t e = 0; e < extra; ++e) N.col(Q.cols() + static_cast<Eigen::Index>(e)) = extras[e];
      PolishCandidate cand;
      cand.y = extra == 0 ? ynewton : face_dual_correction(f, ynewton, N);
      cand.Z = Z;
      cand.res = residuals_y(f, cand.Z, cand.y);
      cand.score = cand.res.worst(settings);
      if (cand.score < best.score) best = std::move(cand);
      if (best.score <= 1e-3) return true;
    }
    return false;
  };

  for (const auto& h : hints) {
    if (h.size() == d && attempt(Eigen::MatrixXd(h))) return best;
  }
  if (!(zl(0) > 0.0)) return best;
  const int r_max = std::min(d - 1, 6);
  for (int r = 1; r <= r_max; ++r) {
    if (r > 1 && zl(r) > 1e-2 * zl(r - 1)) continue;
    if (zl(r - 1) <= 0.0) break;
    if (attempt(zv.leftCols(r) * zl.head(r).cwiseSqrt().asDiagonal())) return best;
  }
  return best;
}

// Multipliers of the constraints dropped by facial reduction. With
// R = C - sum_kept y_i A_i and P the orthogonal projector onto range(V), the
// dropped matrices span every symmetric matrix with a factor (I - P), so
// S = P R P + alpha (I - P) is attainable and is PSD iff V^T R V is.
inline Eigen::VectorXd recover_dropped(const SdpStandardForm& f, const ReducedProblem& red, const Eigen::VectorXd& y_kept,
                                       Eigen::VectorXd& y_full) {
  const int d = f.d;
  y_full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.constraints.size()));
  for (std::size_t k = 0; k < red.kept.size(); ++k) y_full(red.kept[k]) = y_kept(static_cast<Eigen::Index>(k));
  if (!red.reduced || red.dropped.empty()) return y_full;

  const Eigen::MatrixXd R = dual_slack(f, y_full);
  const Eigen::MatrixXd VtV = red.V.transpose() * red.V;
  const Eigen::MatrixXd P = red.V * VtV.ldlt().solve(red.V.transpose());
  const Eigen::MatrixXd PRP = P * R * P;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (PRP + PRP.transpose()), Eigen::EigenvaluesOnly);
  double alpha = es.info() == Eigen::Success ? es.eigenvalues().cwiseAbs().maxCoeff() : 1.0;
  if (!(alpha > 0.0)) alpha = 1.0;
  const Eigen::MatrixXd T = PRP + alpha * (Eigen::MatrixXd::Identity(d, d) - P);
  const SvecLayout layout{d};
  const Eigen::VectorXd target = layout.pack_sym(R - T);

  std::vector<Triplet> trip;
  for (std::size_t k = 0; k < red.dropped.size(); ++k) {
    const SpMat& A = f.constraints[red.dropped[k]].A;
    for (int o = 0; o < A.outerSize(); ++o) {
      for (SpMat::InnerIterator it(A, o); it; ++it) {
        const int p = static_cast<int>(it.row());
        const int q = static_cast<int>(it.col());
        if (p > q) continue;
        trip.emplace_back(SvecLayout::index(p, q), static_cast<int>(k), (p == q ? 1.0 : M_SQRT2) * it.value());
      }
    }
  }
  SpMat B(layout.size(), static_cast<Eigen::Index>(red.dropped.size()));
  B.setFromTriplets(trip.begin(), trip.end());
  SpMat N = B.transpose() * B;
  double nmax = 0.0;
  for (int i = 0; i < N.rows(); ++i) nmax = std::max(nmax, N.coeff(i, i));
  const double reg = 1e-12 * std::max(1.0, nmax);
  for (int i = 0; i < N.rows(); ++i) N.coeffRef(i, i) += reg;
  Eigen::SimplicialLDLT<SpMat> ldlt(N);
  if (ldlt.info() != Eigen::Success) return y_full;
  const Eigen::VectorXd rhs = B.transpose() * target;
  Eigen::VectorXd nu = ldlt.solve(rhs);
  for (int pass = 0; pass < 2; ++pass) nu += ldlt.solve(rhs - B.transpose() * (B * nu));
  for (std::size_t k = 0; k < red.dropped.size(); ++k) y_full(red.dropped[k]) = nu(static_cast<Eigen::Index>(k));
  return y_full;
}

}  // namespace detail

/// Residuals of a primal-dual pair in the QCQP multiplier convention.
inline Residuals residuals(const SdpStandardForm& form, const Eigen::MatrixXd& Z, double lambda, const Eigen::VectorXd& xi) {
  if (static_cast<int>(xi.size()) + 1 != static_cast<int>(form.constraints.size()) || Z.rows() != form.d ||
      Z.cols() != form.d) {
    throw Error(ErrorCode::DimensionMismatch, "multiplier or matrix size does not match the form");
  }
  return detail::residuals_y(form, Z, detail::multipliers_to_y(lambda, xi));
}

namespace detail {

// Ruiz equilibration by congruence: Z = D Z' D with C' = D C D and
// A'_i = D A_i D leaves the multipliers unchanged. D balances the rows of the
// cost, which carries the units of the data (the constraint rows are
// normalised separately by row scaling).
inline Eigen::VectorXd congruence_scaling(const SdpStandardForm& f, int passes = 20) {
  const int d = f.d;
  Eigen::VectorXd D = Eigen::VectorXd::Ones(d);
  const Eigen::MatrixXd absC = f.C.cwiseAbs();
  for (int pass = 0; pass < passes; ++pass) {
    const Eigen::MatrixXd Cs = D.asDiagonal() * absC * D.asDiagonal();
    const Eigen::VectorXd r = Cs.rowwise().maxCoeff();
    bool settled = true;
    for (int i = 0; i < d; ++i) {
      if (!(r(i) > 0.0)) continue;
      const double step = 1.0 / std::sqrt(r(i));
      D(i) *= step;
      settled = settled && std::abs(step - 1.0) < 1e-3;
    }
    if (settled) break;
  }
  // A mild spread means the data is already in consistent units; rescaling
  // then only perturbs the interior-point path.
  if (D.maxCoeff() < 100.0 * D.minCoeff()) return Eigen::VectorXd::Ones(d);
  // Only ratios matter; keep the overall level of D near one.
  return D / std::sqrt(D.maxCoeff() * D.minCoeff());
}

inline SdpStandardForm congruent_form(const SdpStandardForm& f, const Eigen::VectorXd& D) {
  SdpStandardForm g;
  g.d = f.d;
  g.C = D.asDiagonal() * f.C * D.asDiagonal();
  const SpMat Ds = SpMat(Eigen::MatrixXd(D.asDiagonal()).sparseView());
  for (const auto& c : f.constraints) g.constraints.push_back({SpMat(Ds * c.A * Ds), c.b});
  if (f.face.cols() > 0) {
    const SpMat Dinv = SpMat(Eigen::MatrixXd(D.cwiseInverse().asDiagonal()).sparseView());
    g.face = Dinv * f.face;
  }
  return g;
}

template <typename Clock>
SdpSolution solve_core(const SdpStandardForm& form, const SolverSettings& settings, std::span<const Eigen::VectorXd> hints,
                       typename Clock::time_point t0) {
  const int d = form.d;
  const int m = static_cast<int>(form.constraints.size());
  const detail::ReducedProblem red = detail::reduce_problem(form);
  const SdpStandardForm& rf = red.form;
  const detail::ScaledForm sf = detail::scale_form(rf, settings.scaling);

  auto finish = [&](const Eigen::MatrixXd& Zr, const Eigen::VectorXd& yr, int iters, bool pol, bool infeasible) {
    SdpSolution sol;
    sol.Z = red.reduced ? Eigen::MatrixXd(red.V * Zr * red.V.transpose()) : Zr;
    sol.Z = 0.5 * (sol.Z + sol.Z.transpose());
    Eigen::VectorXd y;
    detail::recover_dropped(form, red, yr, y);
    sol.lambda = y(m - 1);
    sol.xi = -y.head(m - 1);
    const Residuals r = detail::residuals_y(form, sol.Z, y);
    sol.primal_residual = r.primal;
    sol.dual_residual = r.dual;
    sol.gap = r.gap;
    sol.iterations = iters;
    sol.polished = pol;
    if (infeasible) {
      sol.status = SolverStatus::Infeasible;
    } else {
      sol.status = r.worst(settings) <= 1.0 ? SolverStatus::Solved : SolverStatus::MaxIter;
    }
    return sol;
  };

  const int dr = rf.d;
  const int mr = static_cast<int>(rf.constraints.size());
  // The kept rows are linearly independent, so every b is reachable; only a
  // dropped constraint with non-zero right-hand side makes the system
  // inconsistent.
  const bool consistent = red.consistent;
  if (!consistent) return finish(Eigen::MatrixXd::Zero(dr, dr), Eigen::VectorXd::Zero(mr), 0, false, true);

  std::vector<Eigen::VectorXd> reduced_hints;
  if (red.reduced) {
    const Eigen::MatrixXd VtV = red.V.transpose() * red.V;
    const Eigen::LDLT<Eigen::MatrixXd> vldlt(VtV);
    for (const auto& h : hints) {
      if (h.size() == d) reduced_hints.push_back(vldlt.solve(red.V.transpose() * h));
    }
  } else {
    for (const auto& h : hints) reduced_hints.push_back(h);
  }

  auto unscale_y = [&](const Eigen::VectorXd& ys) { return Eigen::VectorXd(sf.cost_scale * sf.row_scale.cwiseProduct(ys)); };
  detail::PolishCandidate best_polish;
  auto try_polish = [&](const Eigen::MatrixXd& X, const Eigen::MatrixXd& S, const Eigen::VectorXd& ys) {
    if (!settings.polish) return false;
    detail::PolishCandidate cand =
        detail::polish(rf, X, sf.cost_scale * S, unscale_y(ys), settings, reduced_hints);
    if (cand.score < best_polish.score) best_polish = std::move(cand);
    return best_polish.score <= 1e-3;
  };

  detail::Iterate it;
  if (settings.method == SolverMethod::InteriorPoint) {
    it = detail::interior_point<Clock>(sf, settings, t0);
    if (!it.diverged) try_polish(it.X, it.S, it.y);
  } else {
    it = detail::splitting<Clock>(sf, settings, t0, try_polish);
    if (best_polish.score > 1e-3) try_polish(it.X, it.S, it.y);
  }

  const Eigen::VectorXd y_raw = unscale_y(it.y);
  const Residuals raw = detail::residuals_y(rf, it.X, y_raw);
  if (best_polish.score < raw.worst(settings)) {
    return finish(best_polish.Z, best_polish.y, it.iterations, true, false);
  }
  return finish(it.X, y_raw, it.iterations, false, it.diverged);
}

}  // namespace detail

/// `hints` are optional rank-one candidates z (e.g. from a local method)
/// that the polish step tries before the factors of the iterate.
inline SdpSolution solve(const SdpStandardForm& form, const SolverSettings& settings = {},
                         std::span<const Eigen::VectorXd> hints = {}) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const int d = form.d;
  const int m = static_cast<int>(form.constraints.size());
  if (m == 0 || d <= 0) throw Error(ErrorCode::DimensionMismatch, "empty standard form");
  if (form.C.rows() != d || form.C.cols() != d) throw Error(ErrorCode::DimensionMismatch, "cost matrix size");
  if (!form.C.allFinite()) throw Error(ErrorCode::NumericalBreakdown, "non-finite cost matrix");
  for (const auto& c : form.constraints) {
    if (c.A.rows() != d || c.A.cols() != d) throw Error(ErrorCode::DimensionMismatch, "constraint matrix size");
  }
  if (!(settings.eps_primal > 0.0 && settings.eps_dual > 0.0 && settings.eps_gap > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "solver tolerances must be positive");
  }
  const Eigen::VectorXd D = settings.scaling ? detail::congruence_scaling(form) : Eigen::VectorXd::Ones(d);
  if ((D.array() == 1.0).all()) return detail::solve_core<Clock>(form, settings, hints, t0);
  std::vector<Eigen::VectorXd> scaled_hints;
  for (const auto& h : hints) {
    if (h.size() == d) scaled_hints.push_back(h.cwiseQuotient(D));
  }
  SdpSolution sol = detail::solve_core<Clock>(detail::congruent_form(form, D), settings, scaled_hints, t0);
  sol.Z = D.asDiagonal() * sol.Z * D.asDiagonal();
  const Residuals r = residuals(form, sol.Z, sol.lambda, sol.xi);
  sol.primal_residual = r.primal;
  sol.dual_residual = r.dual;
  sol.gap = r.gap;
  if (sol.status != SolverStatus::Infeasible) {
    sol.status = r.worst(settings) <= 1.0 ? SolverStatus::Solved : SolverStatus::MaxIter;
  }
  return sol;
}

}  // namespace certri
