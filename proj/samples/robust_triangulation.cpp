// Triangulate a point seen by seven cameras, two of which are outliers,
// and check that the fractional relaxation certifies the result.

#include <iostream>

#include "certri/certri.hpp"

int main() {
  certri::SimulationConfig cfg;
  cfg.n_views = 7;
  cfg.sigma = 5.0;
  cfg.n_outliers = 2;
  const auto problem = certri::simulate_problem(cfg, 42);

  const auto t = certri::run_trial_detailed(problem, certri::RelaxationKind::RTF);
  std::cout << "status          " << t.record.status << '\n'
            << "lower bound     " << t.record.sdp_objective << " px^2\n"
            << "rounded value   " << t.record.rounded_objective << " px^2\n"
            << "position error  " << t.record.position_error << '\n';
  if (t.rounded) {
    std::cout << "inlier mask     ";
    for (bool b : t.rounded->theta_hat) std::cout << (b ? '1' : '0');
    std::cout << "\nplanted mask    ";
    for (bool o : problem.ground_truth->outliers) std::cout << (o ? '0' : '1');
    std::cout << '\n';
  }
  return t.record.tight() ? 0 : 1;
}
