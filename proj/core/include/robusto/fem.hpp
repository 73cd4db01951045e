#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "robusto/grid.hpp"
#include "robusto/material.hpp"

namespace robusto {

using ElemMatrix = Eigen::Matrix<double, 8, 8>;

// 8x8 stiffness of one rectangular bilinear element at unit Young's modulus,
// 2x2 Gauss quadrature (exact for affine rectangles). Every element of the
// grid shares this template; per-element stiffness is rho^p * E_eff * Ke.
ElemMatrix element_stiffness_template(const StructuredGrid& grid, const MaterialParams& mat);

// Full <-> reduced (Dirichlet-eliminated) DOF numbering.
class DofMap {
 public:
  DofMap() = default;
  DofMap(const StructuredGrid& grid, const std::vector<int>& fixed_dofs);

  int num_free() const { return (int)free_to_full_.size(); }
  int to_reduced(int full) const { return full_to_free_[full]; }  // -1 if fixed
  int to_full(int red) const { return free_to_full_[red]; }

  Eigen::VectorXd reduce(const Eigen::VectorXd& full) const;
  Eigen::VectorXd expand(const Eigen::VectorXd& red) const;  // zeros on fixed DOFs

 private:
  std::vector<int> full_to_free_;
  std::vector<int> free_to_full_;
};

struct SolveError : std::runtime_error {
  double residual;  // relative residual (or NaN if factorization failed outright)
  explicit SolveError(const std::string& msg, double res = std::numeric_limits<double>::quiet_NaN())
      : std::runtime_error(msg), residual(res) {}
};

enum class StateSolver { Direct, Cg };

// Reduced global stiffness with a reusable factorization. The sparsity
// pattern depends only on grid + fixed DOFs, so the symbolic analysis is
// done once and numeric refactorizations reuse it.
class SparseSpdSystem {
 public:
  SparseSpdSystem(const StructuredGrid& grid, const std::vector<int>& fixed_dofs);

  // K(rho, delta) = sum_e rho_e^p E_eff(delta_e) Ke; both fields are
  // per-element (nominal material is delta == 0.5 everywhere).
  void assemble(const Eigen::VectorXd& rho_phys, const Eigen::VectorXd& delta,
                const MaterialParams& mat);

  const Eigen::SparseMatrix<double>& matrix() const { return K_; }
  const DofMap& dofs() const { return dof_map_; }
  const ElemMatrix& elem_template() const { return Ke_; }

  // Solves K x = rhs (reduced coordinates). Direct = SimplicialLDLT,
  // Cg = conjugate gradients with incomplete-Cholesky preconditioning.
  // Throws SolveError if factorization fails or the iteration stalls.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs_reduced, StateSolver solver = StateSolver::Direct) const;

 private:
  const StructuredGrid grid_;
  DofMap dof_map_;
  ElemMatrix Ke_;
  MaterialParams mat_;
  Eigen::SparseMatrix<double> K_;
  mutable Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  mutable bool factored_ = false;
  bool analyzed_ = false;
};

// Equilibrium displacement for the currently assembled system; returns the
// full-length vector (zeros on fixed DOFs) and enforces a residual check
// ||K u - f|| <= 1e-10 * max(1, ||f||).
Eigen::VectorXd solve_state(SparseSpdSystem& system, const LoadCase& load,
                            StateSolver solver = StateSolver::Direct);

double compliance(const LoadCase& load, const Eigen::VectorXd& u);

// Per-element strain energies u_e^T K_e u_e (with the full SIMP/defect
// scaling). Nonnegative; sums to u^T K u.
Eigen::VectorXd element_energies(const StructuredGrid& grid, const Eigen::VectorXd& rho_phys,
                                 const Eigen::VectorXd& delta, const Eigen::VectorXd& u_full,
                                 const MaterialParams& mat);

// Unscaled energies u_e^T Ke u_e against the shared template.
Eigen::VectorXd element_template_energies(const StructuredGrid& grid, const ElemMatrix& Ke,
                                          const Eigen::VectorXd& u_full);

}  // namespace robusto
