#pragma once

// Trial pipeline, benchmark grid, brute-force TLS oracle and CSV output.

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "certri/certify.hpp"
#include "certri/error.hpp"
#include "certri/geometry.hpp"
#include "certri/io.hpp"
#include "certri/relaxations.hpp"
#include "certri/rounding.hpp"
#include "certri/sdp.hpp"

namespace certri {

/// One benchmark row. Objectives are in squared pixels of the input problem.
struct TrialRecord {
  std::uint64_t seed = 0;
  RelaxationKind kind = RelaxationKind::RT;
  int n = 0;
  double sigma = 0.0;
  int n_outliers = 0;
  /// Tight, NotTight, Inconclusive, or the name of the error that ended the trial.
  std::string status;
  double rank_ratio = std::numeric_limits<double>::quiet_NaN();
  double sdp_objective = std::numeric_limits<double>::quiet_NaN();
  double rounded_objective = std::numeric_limits<double>::quiet_NaN();
  double position_error = std::numeric_limits<double>::quiet_NaN();
  bool inlier_mask_correct = false;
  double solve_seconds = 0.0;

  bool tight() const { return status == "Tight"; }
};

inline const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols{"seed",          "kind",          "n",
                                             "sigma",         "n_outliers",    "status",
                                             "rank_ratio",    "sdp_objective", "rounded_objective",
                                             "position_error", "inlier_mask_correct", "solve_seconds"};
  return cols;
}

struct TrialOptions {
  CertifyTolerances tolerances;
  /// Divide pixel quantities by the image width before building the SDP.
  bool scale = true;
  /// Offer the local TLS estimate to the solver's polish step.
  bool local_hint = false;
  bool record_timing = true;
};

/// Every intermediate of a trial, in the scaled units used for solving.
struct TrialOutcome {
  TrialRecord record;
  TriangulationProblem scaled;
  QcqpProblem qcqp;
  std::optional<SdpSolution> solution;
  std::optional<Certificate> certificate;
  std::optional<RoundedSolution> rounded;
  std::string error;
};

struct OracleResult {
  double objective = std::numeric_limits<double>::infinity();
  std::vector<bool> theta_star;
  Vec3 X_star = Vec3::Zero();
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Pinhole residuals of the selected views; no depth test, matching the
// relaxations, which do not see the sign of the depth either.
struct ReprojectionFunctor : Eigen::DenseFunctor<double> {
  std::vector<Mat34> P;
  std::vector<Vec2> x;

  ReprojectionFunctor(std::vector<Mat34> cams, std::vector<Vec2> obs)
      : Eigen::DenseFunctor<double>(3, static_cast<int>(2 * obs.size())), P(std::move(cams)), x(std::move(obs)) {}

  int operator()(const Eigen::VectorXd& X, Eigen::VectorXd& f) const {
    for (std::size_t i = 0; i < P.size(); ++i) {
      const Vec3 h = P[i] * Vec3(X).homogeneous();
      f.segment<2>(2 * i) = h.head<2>() / h(2) - x[i];
    }
    return 0;
  }

  int df(const Eigen::VectorXd& X, Eigen::MatrixXd& J) const {
    for (std::size_t i = 0; i < P.size(); ++i) {
      const Vec3 h = P[i] * Vec3(X).homogeneous();
      for (int k = 0; k < 2; ++k) {
        J.row(2 * i + k) = (P[i].block<1, 3>(k, 0) * h(2) - P[i].block<1, 3>(2, 0) * h(k)) / (h(2) * h(2));
      }
    }
    return 0;
  }

  double cost(const Vec3& X) const {
    double c = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      const Vec3 h = P[i] * X.homogeneous();
      if (h(2) == 0.0) return std::numeric_limits<double>::infinity();
      c += (h.head<2>() / h(2) - x[i]).squaredNorm();
    }
    return c;
  }
};

inline Vec3 refine_point(const ReprojectionFunctor& f, const Vec3& start) {
  Eigen::VectorXd X = start;
  Eigen::LevenbergMarquardt<ReprojectionFunctor> lm(const_cast<ReprojectionFunctor&>(f));
  lm.setMaxfev(400);
  lm.minimize(X);
  return X.allFinite() ? Vec3(X) : start;
}

inline bool same_mask(const std::vector<bool>& theta, const std::vector<bool>& outliers) {
  if (theta.size() != outliers.size()) return false;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (theta[i] == outliers[i]) return false;
  }
  return true;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s.precision(12);
  s << v;
  return s.str();
}

}  // namespace detail

/// Per-trial seed from the master seed and the cell coordinates. The
/// relaxation kind is excluded so every kind sees the same instances.
inline std::uint64_t trial_seed(std::uint64_t master, int n, double sigma, int n_outliers, int index) {
  std::uint64_t h = detail::splitmix64(master);
  h = detail::splitmix64(h ^ static_cast<std::uint64_t>(n));
  h = detail::splitmix64(h ^ static_cast<std::uint64_t>(std::llround(sigma * 1000.0)));
  h = detail::splitmix64(h ^ static_cast<std::uint64_t>(n_outliers));
  return detail::splitmix64(h ^ static_cast<std::uint64_t>(index));
}

/// Global TLS optimum by enumeration of every inlier set. Sets with at least
/// two views are refined by Levenberg-Marquardt from the inlier DLT point
/// plus `multistarts` perturbed starts; single views contribute zero
/// residual; the all-reject value is sum c_i.
inline OracleResult brute_force_oracle(const TriangulationProblem& problem, int multistarts = 3, std::uint64_t seed = 0) {
  const int n = problem.size();
  if (n > 10) throw Error(ErrorCode::TooManyViews, "oracle enumerates 2^n inlier sets; n must not exceed 10");
  if (n < 1) throw Error(ErrorCode::DegenerateConfiguration, "problem has no views");
  std::vector<Mat34> P;
  double total_c = 0.0;
  for (const auto& v : problem.views) {
    P.push_back(camera_matrix(v));
    total_c += v.inlier_threshold_sq;
  }
  const Vec3 X_all = triangulate_linear_point(problem.views, observations(problem));
  double spread = 0.0;
  for (const auto& v : problem.views) spread += (v.pose.t - X_all).norm() / n;

  OracleResult best;
  best.objective = total_c;
  best.theta_star.assign(n, false);
  best.X_star = X_all;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    std::vector<Mat34> cams;
    std::vector<Vec2> obs;
    std::vector<CameraView> views;
    double rejected = 0.0;
    std::vector<bool> theta(n, false);
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        theta[i] = true;
        cams.push_back(P[i]);
        obs.push_back(problem.views[i].observation);
        views.push_back(problem.views[i]);
      } else {
        rejected += problem.views[i].inlier_threshold_sq;
      }
    }
    if (rejected >= best.objective) continue;
    if (views.size() == 1) {
      // Any point on the viewing ray has zero residual.
      const auto& v = views.front();
      const Vec3 ray = v.pose.R * (v.intrinsics.K().inverse() * v.observation.homogeneous());
      best = {rejected, theta, Vec3(v.pose.t + ray.normalized() * (X_all - v.pose.t).norm())};
      continue;
    }
    const detail::ReprojectionFunctor f(cams, obs);
    std::vector<Vec3> starts;
    try {
      starts.push_back(triangulate_linear_point(views, obs));
    } catch (const Error&) {
      starts.push_back(X_all);
    }
    for (int s = 0; s < multistarts; ++s) {
      starts.push_back(starts.front() + 0.1 * spread * Vec3(gauss(rng), gauss(rng), gauss(rng)));
    }
    for (const Vec3& s : starts) {
      const Vec3 X = detail::refine_point(f, s);
      const double value = f.cost(X) + rejected;
      if (value < best.objective) best = {value, theta, X};
    }
  }
  return best;
}

/// Local TLS estimate: alternate the optimal inlier set and an LM refinement,
/// starting from the all-view DLT point.
inline std::pair<Vec3, std::vector<bool>> local_tls_estimate(const TriangulationProblem& problem, int rounds = 5) {
  Vec3 X = triangulate_linear_point(problem.views, observations(problem));
  std::vector<bool> theta(problem.views.size(), true);
  for (int r = 0; r < rounds; ++r) {
    std::vector<Mat34> cams;
    std::vector<Vec2> obs;
    for (std::size_t i = 0; i < problem.views.size(); ++i) {
      if (!theta[i]) continue;
      cams.push_back(camera_matrix(problem.views[i]));
      obs.push_back(problem.views[i].observation);
    }
    if (cams.size() < 2) break;
    X = detail::refine_point(detail::ReprojectionFunctor(cams, obs), X);
    const auto next = optimal_thetas(problem, X);
    if (next == theta) break;
    theta = next;
  }
  return {X, theta};
}

/// Scale, build, solve, certify and round one problem. Errors are recorded
/// in the status field instead of being thrown.
inline TrialOutcome run_trial_detailed(const TriangulationProblem& problem, RelaxationKind kind,
                                       const SolverSettings& settings = {}, const TrialOptions& options = {}) {
  TrialOutcome out;
  TrialRecord& rec = out.record;
  rec.kind = kind;
  rec.n = problem.size();
  if (problem.ground_truth) {
    for (bool o : problem.ground_truth->outliers) rec.n_outliers += o ? 1 : 0;
  }
  try {
    out.scaled = options.scale ? scale_problem(problem) : problem;
    const double w2 = out.scaled.scale * out.scaled.scale;
    out.qcqp = build_relaxation(out.scaled, kind);
    std::vector<Eigen::VectorXd> hints;
    if (options.local_hint) {
      try {
        const auto [X, theta] = local_tls_estimate(out.scaled);
        std::vector<Vec2> x;
        for (const auto& v : out.scaled.views) x.push_back(project(v, X));
        hints.push_back(lift(kind, x, theta, X));
      } catch (const Error&) {
      }
    }
    const auto t0 = std::chrono::steady_clock::now();
    out.solution = solve(to_standard_form(out.qcqp), settings, hints);
    if (options.record_timing) {
      rec.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    const SdpSolution& sol = *out.solution;
    rec.sdp_objective = out.qcqp.M.cwiseProduct(sol.Z).sum() * w2;
    if (sol.status == SolverStatus::Infeasible) {
      rec.status = "Infeasible";
      return out;
    }
    out.certificate = check_tightness(sol, out.qcqp, options.tolerances);
    const Certificate& cert = *out.certificate;
    rec.rank_ratio = cert.rank_ratio;
    rec.status = std::string(to_string(cert.status));
    if (cert.z_hat.size() == 0) {
      out.error = "leading eigenvector has no weight on the normalisation block";
      rec.status = std::string(to_string(ErrorCode::NormalizationFailure));
      return out;
    }
    try {
      out.rounded = recover_solution(kind, cert.z_hat, out.scaled, rec.sdp_objective / w2,
                                     cert.status == TightnessStatus::Tight);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AllOutliers) throw;
      // The record still needs a feasible estimate: the all-view DLT point
      // with the inlier set that is optimal for it.
      RoundedSolution r;
      r.X_hat = triangulate_linear_point(out.scaled.views, observations(out.scaled));
      r.theta_hat = optimal_thetas(out.scaled, r.X_hat);
      for (const auto& v : out.scaled.views) r.reprojections.push_back(project(v, r.X_hat));
      r.objective = tls_objective(out.scaled, r.X_hat, r.theta_hat);
      r.gap_to_lower_bound = r.objective - rec.sdp_objective / w2;
      r.fallback = true;
      r.warnings.push_back(e.what());
      out.rounded = r;
    }
    RoundedSolution& r = *out.rounded;
    rec.rounded_objective = r.objective * w2;
    // A rank-one Z certifies the lifted problem only. The epipolar lifts admit
    // pairwise-consistent points that no single 3D point explains, so a tight
    // verdict also needs the rounded objective to meet the lower bound.
    if (cert.status == TightnessStatus::Tight && r.gap_to_lower_bound > options.tolerances.tau_gap * (1.0 + std::abs(r.objective))) {
      r.certified = false;
      r.warnings.push_back("rank one but the rounded objective exceeds the lower bound");
      rec.status = std::string(to_string(TightnessStatus::NotTight));
    }
    if (problem.ground_truth) {
      rec.position_error = (r.X_hat - problem.ground_truth->X).norm();
      rec.inlier_mask_correct = detail::same_mask(r.theta_hat, problem.ground_truth->outliers);
    }
  } catch (const Error& e) {
    out.error = e.what();
    rec.status = std::string(to_string(e.code()));
  }
  return out;
}

inline TrialRecord run_trial(const TriangulationProblem& problem, RelaxationKind kind, const SolverSettings& settings = {},
                             const TrialOptions& options = {}) {
  return run_trial_detailed(problem, kind, settings, options).record;
}

struct BenchConfig {
  std::vector<RelaxationKind> kinds{RelaxationKind::RT, RelaxationKind::RTF};
  std::vector<int> n_views{3, 5, 7};
  std::vector<double> sigmas{0.0, 10.0, 50.0};
  std::vector<int> outliers{0, 1};
  int trials = 20;
  std::uint64_t master_seed = 1;
  SolverSettings solver;
  TrialOptions options;
  double inlier_threshold = 50.0;
  std::string output = "results";

  void validate() const {
    if (kinds.empty() || n_views.empty() || sigmas.empty() || outliers.empty()) {
      throw Error(ErrorCode::ConfigInvalid, "every grid axis needs at least one value");
    }
    if (trials < 1) throw Error(ErrorCode::ConfigInvalid, "trials must be positive");
    for (int n : n_views) {
      if (n < 2) throw Error(ErrorCode::ConfigInvalid, "n_views entries must be at least 2");
    }
    for (double s : sigmas) {
      if (!(s >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "sigma entries must be non-negative");
    }
    for (int k : outliers) {
      if (k < 0) throw Error(ErrorCode::ConfigInvalid, "outlier counts must be non-negative");
    }
    if (!(inlier_threshold > 0.0)) throw Error(ErrorCode::ConfigInvalid, "inlier threshold must be positive");
  }
};

/// Missing keys keep their defaults.
inline BenchConfig bench_config_from_json(const Json& j) {
  BenchConfig c;
  try {
    if (j.contains("kinds")) {
      c.kinds.clear();
      for (const auto& k : j.at("kinds")) c.kinds.push_back(parse_relaxation(k.get<std::string>()));
    }
    if (j.contains("n_views")) c.n_views = j.at("n_views").get<std::vector<int>>();
    if (j.contains("sigmas")) c.sigmas = j.at("sigmas").get<std::vector<double>>();
    if (j.contains("outliers")) c.outliers = j.at("outliers").get<std::vector<int>>();
    if (j.contains("trials")) c.trials = j.at("trials").get<int>();
    if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("inlier_threshold")) c.inlier_threshold = j.at("inlier_threshold").get<double>();
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    if (j.contains("record_timing")) c.options.record_timing = j.at("record_timing").get<bool>();
    if (j.contains("local_hint")) c.options.local_hint = j.at("local_hint").get<bool>();
    if (j.contains("solver")) {
      const Json& s = j.at("solver");
      if (s.contains("eps")) {
        const double eps = s.at("eps").get<double>();
        c.solver.eps_primal = c.solver.eps_dual = c.solver.eps_gap = eps;
      }
      if (s.contains("max_iterations")) c.solver.max_iterations = s.at("max_iterations").get<int>();
      if (s.contains("polish")) c.solver.polish = s.at("polish").get<bool>();
      if (s.contains("time_limit")) c.solver.time_limit = s.at("time_limit").get<double>();
      if (s.contains("method")) {
        const auto m = s.at("method").get<std::string>();
        if (m == "interior-point") {
          c.solver.method = SolverMethod::InteriorPoint;
        } else if (m == "splitting") {
          c.solver.method = SolverMethod::Splitting;
        } else {
          throw Error(ErrorCode::ParseError, "/solver/method: expected interior-point or splitting");
        }
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bench config: ") + e.what());
  }
  c.validate();
  return c;
}

inline std::string csv_header() {
  std::string h;
  for (const auto& c : record_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

inline std::string csv_row(const TrialRecord& r) {
  std::ostringstream s;
  s << r.seed << ',' << to_string(r.kind) << ',' << r.n << ',' << detail::format_double(r.sigma) << ',' << r.n_outliers
    << ',' << r.status << ',' << detail::format_double(r.rank_ratio) << ',' << detail::format_double(r.sdp_objective)
    << ',' << detail::format_double(r.rounded_objective) << ',' << detail::format_double(r.position_error) << ','
    << (r.inlier_mask_correct ? 1 : 0) << ',' << detail::format_double(r.solve_seconds);
  return s.str();
}

inline void save_records(const std::vector<TrialRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << csv_header() << '\n';
  for (const auto& r : records) out << csv_row(r) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

struct CellSummary {
  RelaxationKind kind = RelaxationKind::RT;
  int n = 0;
  double sigma = 0.0;
  int n_outliers = 0;
  int trials = 0;
  int tight = 0;
  double mean_position_error = 0.0;
  double mean_solve_seconds = 0.0;

  double tight_fraction() const { return trials > 0 ? static_cast<double>(tight) / trials : 0.0; }
};

/// Cells in first-appearance order; NaN errors are skipped in the mean.
inline std::vector<CellSummary> aggregate(const std::vector<TrialRecord>& records) {
  std::vector<CellSummary> cells;
  std::vector<int> finite;
  for (const auto& r : records) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSummary& c) {
      return c.kind == r.kind && c.n == r.n && c.sigma == r.sigma && c.n_outliers == r.n_outliers;
    });
    if (it == cells.end()) {
      cells.push_back({r.kind, r.n, r.sigma, r.n_outliers});
      finite.push_back(0);
      it = cells.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - cells.begin());
    ++it->trials;
    it->tight += r.tight() ? 1 : 0;
    it->mean_solve_seconds += r.solve_seconds;
    if (std::isfinite(r.position_error)) {
      it->mean_position_error += r.position_error;
      ++finite[k];
    }
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    cells[k].mean_solve_seconds /= cells[k].trials;
    cells[k].mean_position_error =
        finite[k] > 0 ? cells[k].mean_position_error / finite[k] : std::numeric_limits<double>::quiet_NaN();
  }
  return cells;
}

inline void save_aggregate(const std::vector<CellSummary>& cells, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << "kind,n,sigma,n_outliers,trials,tight_fraction,mean_position_error,mean_solve_seconds\n";
  for (const auto& c : cells) {
    out << to_string(c.kind) << ',' << c.n << ',' << detail::format_double(c.sigma) << ',' << c.n_outliers << ','
        << c.trials << ',' << detail::format_double(c.tight_fraction()) << ','
        << detail::format_double(c.mean_position_error) << ',' << detail::format_double(c.mean_solve_seconds) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

/// Runs the grid kind x n x sigma x outliers x trial in that order, skipping
/// outlier counts above n - 2. With an output directory, trials.csv is
/// appended and flushed row by row and aggregate.csv is written at the end
/// (also after an interrupt through `stop`).
inline std::vector<TrialRecord> run_bench(const BenchConfig& config, const std::atomic<bool>* stop = nullptr,
                                          std::ostream* progress = nullptr) {
  config.validate();
  std::vector<TrialRecord> records;
  std::ofstream trials;
  const bool to_disk = !config.output.empty();
  if (to_disk) {
    std::error_code ec;
    std::filesystem::create_directories(config.output, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + config.output + ": " + ec.message());
    trials.open(std::filesystem::path(config.output) / "trials.csv");
    if (!trials) throw Error(ErrorCode::IoError, "cannot write trials.csv in " + config.output);
    trials << csv_header() << '\n' << std::flush;
  }
  auto interrupted = [&] { return stop != nullptr && stop->load(); };
  for (RelaxationKind kind : config.kinds) {
    for (int n : config.n_views) {
      for (double sigma : config.sigmas) {
        for (int k : config.outliers) {
          if (k > n - 2) continue;
          for (int t = 0; t < config.trials && !interrupted(); ++t) {
            SimulationConfig sim;
            sim.n_views = n;
            sim.sigma = sigma;
            sim.n_outliers = k;
            sim.inlier_threshold = config.inlier_threshold;
            TrialRecord r;
            const std::uint64_t seed = trial_seed(config.master_seed, n, sigma, k, t);
            try {
              r = run_trial(simulate_problem(sim, seed), kind, config.solver, config.options);
            } catch (const Error& e) {
              r.kind = kind;
              r.n = n;
              r.n_outliers = k;
              r.status = std::string(to_string(e.code()));
            }
            r.seed = seed;
            r.sigma = sigma;
            records.push_back(r);
            if (to_disk) trials << csv_row(r) << '\n' << std::flush;
            if (progress != nullptr) *progress << csv_row(r) << '\n';
          }
        }
      }
    }
  }
  if (to_disk) save_aggregate(aggregate(records), (std::filesystem::path(config.output) / "aggregate.csv").string());
  return records;
}

}  // namespace certri
