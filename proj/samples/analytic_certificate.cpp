// Build the closed-form dual certificate for a noise-free problem and
// verify it without running the solver.

#include <iostream>

#include "certri/certri.hpp"

int main() {
  certri::SimulationConfig cfg;
  cfg.n_views = 4;
  const auto problem = certri::scale_problem(certri::simulate_problem(cfg, 7));

  bool ok = true;
  for (auto kind : {certri::RelaxationKind::T, certri::RelaxationKind::RT, certri::RelaxationKind::TF,
                    certri::RelaxationKind::RTF}) {
    const auto q = certri::build_relaxation(problem, kind);
    const auto a = certri::analytic_certificate(problem, kind);
    const auto check = certri::verify_dual_certificate(q, a.z_hat, a.lambda, a.xi);
    const auto S = certri::multiplier_matrix(q, a.lambda, a.xi);
    const auto d = certri::stability_diagnostics(q, a.z_hat, S, certri::restricted_slater_witness(problem, kind));
    std::cout << certri::to_string(kind) << ": lambda_min(S) = " << check.S_min_eig << ", ||S z|| = " << check.Sz_norm
              << ", corank " << d.corank_S << ", non-branch " << d.nonbranch_ok << ", restricted Slater "
              << d.restricted_slater_ok << (check.passed() ? "  [certified]" : "  [failed]") << '\n';
    ok = ok && check.passed();
  }
  return ok ? 0 : 1;
}
