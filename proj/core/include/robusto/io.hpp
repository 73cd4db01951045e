#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace robusto {

// One line per outer iteration in convergence.csv; row 0 is the initial
// design before any update.
struct ConvergenceRow {
  int iter = 0;
  double objective = 0.0;
  double worst_case_compliance = 0.0;
  double volume = 0.0;
  double design_change_inf = 0.0;
  int inner_newton_iters = 0;
  double inner_kkt_residual = 0.0;
};

// Plain-text density field: "nx ny" header, then ny lines of nx values,
// bottom row first. Values are printed with 17 significant digits so a
// write/read round trip reproduces the field bit for bit.
void write_density_txt(const std::string& path, int nx, int ny, const Eigen::VectorXd& field);
Eigen::VectorXd read_density_txt(const std::string& path, int expect_nx, int expect_ny);

// 8-bit binary PGM, top image row = top element row. Density 0 maps to
// white, 1 to black.
void write_density_pgm(const std::string& path, int nx, int ny, const Eigen::VectorXd& rho);

// Defect field restricted to solid material: elements with physical density
// below 0.4 render mid-gray, the rest map delta 0 to black and 1 to white.
void write_defects_pgm(const std::string& path, int nx, int ny, const Eigen::VectorXd& rho_phys,
                       const Eigen::VectorXd& delta);

void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRow>& rows);

}  // namespace robusto
