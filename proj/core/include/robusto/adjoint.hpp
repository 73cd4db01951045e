#pragma once

#include <Eigen/Dense>
#include <vector>

#include "robusto/density_filter.hpp"
#include "robusto/inner_worst_case.hpp"

namespace robusto {

struct FdProbe {
  int index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct SensitivityReport {
  Eigen::VectorXd grad_compliance;  // with respect to design densities
  Eigen::VectorXd grad_volume;
  std::vector<FdProbe> fd_check;
  double fd_max_rel_error = 0.0;
};

// d(worst-case compliance)/d(physical densities): adjoint solve against the
// converged inner KKT system, contracted with the rho-derivative of the KKT
// residual. The mean-constraint weights' normalization couples all elements
// through a rank-one term, handled in closed form. Requires the solver's last
// solve converged to 1e-8 or better.
Eigen::VectorXd compliance_gradient_physical(InnerSolver& solver);

// Same gradient chained through the filter transpose onto design densities.
Eigen::VectorXd compliance_gradient(InnerSolver& solver, const FilterOperator& filter);

// Gradient of the volume fraction sum_e v_e rho_phys_e / |Omega| with respect
// to design densities.
Eigen::VectorXd volume_gradient(const FilterOperator& filter, const StructuredGrid& grid);

}  // namespace robusto
