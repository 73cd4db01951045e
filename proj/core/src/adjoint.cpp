#include "robusto/adjoint.hpp"

#include <cmath>
#include <stdexcept>

namespace robusto {

Eigen::VectorXd compliance_gradient_physical(InnerSolver& solver) {
  const InnerSolution& sol = solver.last_solution();
  if (!(sol.kkt_residual_inf <= 1e-8)) {
    throw std::runtime_error("compliance gradient requires a converged inner solution, residual " +
                             std::to_string(sol.kkt_residual_inf));
  }
  const auto w = solver.adjoint_solve(solver.load().force);

  const StructuredGrid& grid = solver.grid();
  const MaterialParams& mat = solver.material();
  const DefectConstraints& con = solver.last_constraints();
  const Eigen::VectorXd& rho = solver.last_rho();
  const Eigen::VectorXd& qbar = solver.last_qbar();
  const ElemMatrix& Ke = solver.elem_template();
  const int n = grid.num_elems();
  const bool material_norm = con.mean_norm == MeanNorm::Material;

  // Rank-one pieces of d a / d rho under the material normalization:
  // da_j/drho_e = coup_e * ([j == e] - a_j), coup_e = p v rho_e^{p-1} / W.
  const double mean_delta = con.a.dot(sol.delta);
  const double a_dot_wd = con.a.dot(w.w_delta);

  Eigen::VectorXd grad(n);
  Eigen::Matrix<double, 8, 1> ue;
  for (int e = 0; e < n; ++e) {
    const auto dofs = grid.elem_dofs(e);
    for (int i = 0; i < 8; ++i) ue[i] = sol.u[dofs[i]];
    const Eigen::Matrix<double, 8, 1> keu = Ke * ue;
    const double dscale = mat.p * std::pow(rho[e], mat.p - 1.0);
    const double E = effective_modulus(sol.delta[e], mat);
    const auto der = effective_modulus_derivatives(sol.delta[e], mat);

    double t_u = 0.0;
    for (int i = 0; i < 8; ++i) t_u += w.w_u[dofs[i]] * 2.0 * dscale * E * keu[i];
    const double t_d = w.w_delta[e] * dscale * der.dE * qbar[e];
    const double coup = dscale * con.elem_volume / con.weight_norm;
    const double t_a =
        sol.lambda_mean * coup * (material_norm ? (w.w_delta[e] - a_dot_wd) : w.w_delta[e]);
    const double t_mean = w.w_mean * coup * (material_norm ? (sol.delta[e] - mean_delta)
                                                           : sol.delta[e]);
    grad[e] = -(t_u + t_d + t_a + t_mean);
  }
  return grad;
}

Eigen::VectorXd compliance_gradient(InnerSolver& solver, const FilterOperator& filter) {
  return filter.chain_rule(compliance_gradient_physical(solver));
}

Eigen::VectorXd volume_gradient(const FilterOperator& filter, const StructuredGrid& grid) {
  const Eigen::VectorXd per_elem = Eigen::VectorXd::Constant(
      grid.num_elems(), grid.elem_volume() / grid.domain_volume());
  return filter.chain_rule(per_elem);
}

}  // namespace robusto
