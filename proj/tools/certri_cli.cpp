// Command-line front end: simulate, solve, certify, bench and oracle.
//
// Exit codes: 0 success, 1 other failure, 2 solver did not converge,
// 3 input/output or parse error.

#include <atomic>
#include <csignal>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "certri/certri.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_interrupt(int) { g_stop.store(true); }

int exit_code(const certri::Error& e) {
  switch (e.code()) {
    case certri::ErrorCode::IoError:
    case certri::ErrorCode::ParseError: return 3;
    default: return 1;
  }
}

certri::SolverSettings settings_with_tol(double tol) {
  certri::SolverSettings s;
  s.eps_primal = s.eps_dual = s.eps_gap = tol;
  return s;
}

certri::Json trial_json(const certri::TrialOutcome& t, double tol) {
  using certri::Json;
  Json j;
  j["relaxation"] = std::string(certri::to_string(t.record.kind));
  j["status"] = t.record.status;
  j["sdp_objective"] = t.record.sdp_objective;
  j["tolerance"] = tol;
  if (t.solution) {
    j["solver"] = {{"status", std::string(certri::to_string(t.solution->status))},
                   {"iterations", t.solution->iterations},
                   {"primal_residual", t.solution->primal_residual},
                   {"dual_residual", t.solution->dual_residual},
                   {"gap", t.solution->gap},
                   {"seconds", t.record.solve_seconds}};
  }
  if (t.certificate) j["certificate"] = certri::certificate_to_json(*t.certificate);
  if (t.rounded) {
    // Report reprojections in the pixel units of the input, like the objectives.
    certri::RoundedSolution pixels = *t.rounded;
    for (auto& x : pixels.reprojections) x *= t.scaled.scale;
    j["solution"] = certri::solution_to_json(pixels);
    j["solution"]["objective"] = t.record.rounded_objective;
    j["solution"]["gap_to_lower_bound"] = t.record.rounded_objective - t.record.sdp_objective;
  }
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

bool converged(const certri::TrialOutcome& t) {
  return t.solution && t.solution->status == certri::SolverStatus::Solved;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certifiable multiview triangulation with semidefinite relaxations"};
  app.require_subcommand(1);

  int views = 5;
  double sigma = 0.0;
  int outliers = 0;
  std::uint64_t seed = 0;
  double threshold = 50.0;
  std::string out;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic problem as JSON");
  simulate->add_option("--views", views, "Number of views")->check(CLI::Range(2, 1000));
  simulate->add_option("--sigma", sigma, "Pixel noise standard deviation")->check(CLI::NonNegativeNumber);
  simulate->add_option("--outliers", outliers, "Number of planted outliers")->check(CLI::NonNegativeNumber);
  simulate->add_option("--seed", seed, "Random seed");
  simulate->add_option("--threshold", threshold, "Inlier threshold in pixels")->check(CLI::PositiveNumber);
  simulate->add_option("--out", out, "Output JSON file")->required();

  std::string problem_path;
  std::string relaxation = "rtf";
  double tol = 1e-9;
  bool as_json = false;
  auto* solve = app.add_subcommand("solve", "Solve a relaxation and round the result");
  solve->add_option("--problem", problem_path, "Problem JSON")->required();
  solve->add_option("--relaxation", relaxation, "t, rt, tf or rtf");
  solve->add_option("--tol", tol, "Solver tolerance")->check(CLI::PositiveNumber);
  solve->add_flag("--json", as_json, "Print JSON instead of a summary");

  auto* certify = app.add_subcommand("certify", "Solve, certify and report stability diagnostics");
  certify->add_option("--problem", problem_path, "Problem JSON")->required();
  certify->add_option("--relaxation", relaxation, "t, rt, tf or rtf");

  std::string config_path;
  auto* bench = app.add_subcommand("bench", "Run a benchmark grid");
  bench->add_option("--config", config_path, "Benchmark configuration JSON")->required();
  bench->add_option("--out", out, "Output directory (overrides the config)");

  int multistarts = 3;
  auto* oracle = app.add_subcommand("oracle", "Brute-force truncated least squares optimum");
  oracle->add_option("--problem", problem_path, "Problem JSON")->required();
  oracle->add_option("--multistarts", multistarts, "Perturbed starts per inlier set")->check(CLI::NonNegativeNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      certri::SimulationConfig cfg;
      cfg.n_views = views;
      cfg.sigma = sigma;
      cfg.n_outliers = outliers;
      cfg.inlier_threshold = threshold;
      certri::save_problem(certri::simulate_problem(cfg, seed), out);
      return 0;
    }
    if (*solve) {
      const auto kind = certri::parse_relaxation(relaxation);
      const auto t = certri::run_trial_detailed(certri::load_problem(problem_path), kind, settings_with_tol(tol));
      if (as_json) {
        std::cout << trial_json(t, tol).dump(2) << '\n';
      } else {
        const auto& r = t.record;
        std::cout << "relaxation " << certri::to_string(kind) << '\n'
                  << "status     " << r.status << '\n'
                  << "rank_ratio " << r.rank_ratio << '\n'
                  << "lower bound " << r.sdp_objective << '\n';
        if (t.rounded) {
          std::cout << "objective  " << r.rounded_objective << '\n'
                    << "X          " << t.rounded->X_hat.transpose() << '\n'
                    << "inliers    ";
          for (bool b : t.rounded->theta_hat) std::cout << (b ? '1' : '0');
          std::cout << '\n';
        }
        if (!t.error.empty()) std::cout << "error      " << t.error << '\n';
      }
      return converged(t) ? 0 : 2;
    }
    if (*certify) {
      const auto kind = certri::parse_relaxation(relaxation);
      const auto t = certri::run_trial_detailed(certri::load_problem(problem_path), kind);
      certri::Json j = trial_json(t, 1e-9);
      if (t.certificate && t.certificate->status == certri::TightnessStatus::Tight) {
        const auto& sol = *t.solution;
        const auto S = certri::multiplier_matrix(t.qcqp, sol.lambda, sol.xi);
        try {
          const auto d = certri::stability_diagnostics(t.qcqp, t.certificate->z_hat, S,
                                                       certri::restricted_slater_witness(t.scaled, kind));
          j["stability"] = {{"corank_S", d.corank_S},
                            {"nonbranch_ok", d.nonbranch_ok},
                            {"restricted_slater_ok", d.restricted_slater_ok},
                            {"min_restricted_eig", std::isfinite(d.min_restricted_eig) ? certri::Json(d.min_restricted_eig)
                                                                                         : certri::Json(nullptr)},
                            {"min_principal_angle", d.min_principal_angle}};
        } catch (const certri::Error& e) {
          j["stability"] = {{"error", e.what()}};
        }
      }
      std::cout << j.dump(2) << '\n';
      return converged(t) ? 0 : 2;
    }
    if (*bench) {
      auto cfg = certri::bench_config_from_json(certri::read_json(config_path));
      if (!out.empty()) cfg.output = out;
      std::signal(SIGINT, on_interrupt);
      const auto records = certri::run_bench(cfg, &g_stop, &std::cerr);
      for (const auto& c : certri::aggregate(records)) {
        std::cout << certri::to_string(c.kind) << " n=" << c.n << " sigma=" << c.sigma << " outliers=" << c.n_outliers
                  << " tight=" << c.tight << "/" << c.trials << " mean_error=" << c.mean_position_error << '\n';
      }
      return g_stop.load() ? 130 : 0;
    }
    if (*oracle) {
      const auto problem = certri::load_problem(problem_path);
      const auto r = certri::brute_force_oracle(problem, multistarts);
      certri::Json theta = certri::Json::array();
      for (bool b : r.theta_star) theta.push_back(b);
      std::cout << certri::Json{{"objective", r.objective},
                                {"theta_star", theta},
                                {"X_star", {r.X_star.x(), r.X_star.y(), r.X_star.z()}}}
                       .dump(2)
                << '\n';
      return 0;
    }
  } catch (const certri::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
