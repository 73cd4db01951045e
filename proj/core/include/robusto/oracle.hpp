#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "robusto/grid.hpp"
#include "robusto/inner_worst_case.hpp"
#include "robusto/material.hpp"

// Brute-force reference implementations for tests and the `oracle` CLI mode.
// Nothing here shares assembly, factorization, or update code with the main
// pipeline: elements use 3x3 quadrature through a generic isoparametric
// Jacobian, systems are dense, the worst case is found by enumerating the
// constraint manifold, and the nominal-SIMP reference runs optimality
// criteria instead of moving asymptotes.
namespace robusto::oracle {

struct TinyInstance {
  int nx = 0, ny = 0;
  double elem_w = 1.0, elem_h = 1.0;
  MaterialParams mat;
  std::vector<int> fixed;  // sorted DOF indices
  Eigen::VectorXd force;

  int num_nodes() const { return (nx + 1) * (ny + 1); }
  int num_dofs() const { return 2 * num_nodes(); }
  int num_elems() const { return nx * ny; }

  // Throws when the instance exceeds the tiny-problem bounds (50 DOFs).
  static TinyInstance from(const StructuredGrid& grid, const LoadCase& load,
                           const MaterialParams& mat);
};

// 8x8 element stiffness at unit modulus by 3x3 Gauss quadrature.
Eigen::Matrix<double, 8, 8> dense_element_matrix(double w, double h, const MaterialParams& mat);

struct DenseSolveResult {
  Eigen::VectorXd u;  // full-length
  double compliance = 0.0;
};
DenseSolveResult dense_solve(const TinyInstance& inst, const Eigen::VectorXd& rho,
                             const Eigen::VectorXd& delta);

struct BruteForceResult {
  Eigen::VectorXd delta;
  double compliance = 0.0;
  long candidates = 0;
};

// Exhaustive maximization of compliance over the defect-constraint manifold
// {weighted mean 0.5, weighted variance D} intersected with (0,1)^n, for
// n in {2, 3, 4}: the manifold is 0-, 1-, or 2-dimensional and is enumerated
// at the given angular resolution. Ties break toward the earliest candidate.
BruteForceResult brute_force_worst_case(const TinyInstance& inst, const Eigen::VectorXd& rho,
                                        double D, int resolution,
                                        MeanNorm norm = MeanNorm::Material);

// Central differences (J(x + h e_i) - J(x - h e_i)) / (2h) at the probed
// indices; h must lie in [1e-8, 1e-4].
std::vector<double> fd_gradient(const std::function<double(const Eigen::VectorXd&)>& J,
                                const Eigen::VectorXd& x, const std::vector<int>& probes,
                                double h);

struct OcResult {
  Eigen::VectorXd rho_design;
  Eigen::VectorXd rho_phys;
  double compliance = 0.0;
  int iterations = 0;
};

// Nominal SIMP cantilever by optimality-criteria iteration with its own
// density filter, for cross-checking the MMA pipeline's compliance level.
OcResult simp_reference(int nx, int ny, double width, double height, double volfrac, double p,
                        double radius_elements, double load_extent, int max_iters = 200,
                        double change_tol = 0.01);

}  // namespace robusto::oracle
