#include "robusto/fem.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <cmath>
#include <vector>

#include "robusto/parallel.hpp"

namespace robusto {

ElemMatrix element_stiffness_template(const StructuredGrid& grid, const MaterialParams& mat) {
  const double w = grid.elem_w(), h = grid.elem_h();
  const Eigen::Matrix3d C = plane_tensor(mat);
  const double g = 1.0 / std::sqrt(3.0);
  const double pts[2] = {-g, g};

  ElemMatrix Ke = ElemMatrix::Zero();
  // Bilinear shape functions on [-1,1]^2, corners CCW from bottom-left; the
  // Jacobian is constant (w/2, h/2) for axis-aligned rectangles.
  const double xs[4] = {-1.0, 1.0, 1.0, -1.0};
  const double ys[4] = {-1.0, -1.0, 1.0, 1.0};
  for (double xi : pts) {
    for (double eta : pts) {
      Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
      for (int a = 0; a < 4; ++a) {
        const double dN_dxi = 0.25 * xs[a] * (1.0 + ys[a] * eta);
        const double dN_deta = 0.25 * ys[a] * (1.0 + xs[a] * xi);
        const double dN_dx = dN_dxi * 2.0 / w;
        const double dN_dy = dN_deta * 2.0 / h;
        B(0, 2 * a) = dN_dx;
        B(1, 2 * a + 1) = dN_dy;
        B(2, 2 * a) = dN_dy;
        B(2, 2 * a + 1) = dN_dx;
      }
      Ke += (w * h / 4.0) * B.transpose() * C * B;
    }
  }
  // Symmetrize away rounding asymmetry from the accumulation order.
  Ke = 0.5 * (Ke + Ke.transpose()).eval();
  return Ke;
}

DofMap::DofMap(const StructuredGrid& grid, const std::vector<int>& fixed_dofs) {
  const int ndof = grid.num_dofs();
  full_to_free_.assign(ndof, 0);
  for (int d : fixed_dofs) full_to_free_[d] = -1;
  free_to_full_.reserve(ndof - (int)fixed_dofs.size());
  for (int d = 0; d < ndof; ++d) {
    if (full_to_free_[d] == 0) {
      full_to_free_[d] = (int)free_to_full_.size();
      free_to_full_.push_back(d);
    }
  }
}

Eigen::VectorXd DofMap::reduce(const Eigen::VectorXd& full) const {
  Eigen::VectorXd r(num_free());
  for (int i = 0; i < num_free(); ++i) r[i] = full[free_to_full_[i]];
  return r;
}

Eigen::VectorXd DofMap::expand(const Eigen::VectorXd& red) const {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(full_to_free_.size());
  for (int i = 0; i < num_free(); ++i) full[free_to_full_[i]] = red[i];
  return full;
}

SparseSpdSystem::SparseSpdSystem(const StructuredGrid& grid, const std::vector<int>& fixed_dofs)
    : grid_(grid), dof_map_(grid, fixed_dofs) {
  K_.resize(dof_map_.num_free(), dof_map_.num_free());
}

void SparseSpdSystem::assemble(const Eigen::VectorXd& rho_phys, const Eigen::VectorXd& delta,
                               const MaterialParams& mat) {
  const int n = grid_.num_elems();
  if (rho_phys.size() != n || delta.size() != n) {
    throw std::invalid_argument("assemble: field lengths must equal element count " +
                                std::to_string(n));
  }
  mat_ = mat;
  Ke_ = element_stiffness_template(grid_, mat);

  std::vector<Eigen::Triplet<double>> trips(64 * (size_t)n);
  parallel_chunks(n, [&](int begin, int end, int) {
    for (int e = begin; e < end; ++e) {
      const double s = simp_scale(rho_phys[e], mat_) * effective_modulus(delta[e], mat_);
      const auto dofs = grid_.elem_dofs(e);
      int red[8];
      for (int i = 0; i < 8; ++i) red[i] = dof_map_.to_reduced(dofs[i]);
      size_t slot = 64 * (size_t)e;
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j, ++slot) {
          // Dead triplets (fixed DOFs) target (0,0) with value 0: harmless.
          if (red[i] >= 0 && red[j] >= 0) {
            trips[slot] = {red[i], red[j], s * Ke_(i, j)};
          } else {
            trips[slot] = {0, 0, 0.0};
          }
        }
      }
    }
  });
  K_.setFromTriplets(trips.begin(), trips.end());
  if (!analyzed_) {
    ldlt_.analyzePattern(K_);
    analyzed_ = true;
  }
  factored_ = false;
}

Eigen::VectorXd SparseSpdSystem::solve(const Eigen::VectorXd& rhs_reduced, StateSolver solver) const {
  if (solver == StateSolver::Direct) {
    if (!factored_) {
      ldlt_.factorize(K_);
      if (ldlt_.info() != Eigen::Success) {
        throw SolveError("stiffness factorization failed (unconstrained rigid-body modes or invalid data)");
      }
      factored_ = true;
    }
    return ldlt_.solve(rhs_reduced);
  }
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                           Eigen::IncompleteCholesky<double>>
      cg;
  cg.setTolerance(1e-13);
  cg.setMaxIterations(20 * K_.rows());
  cg.compute(K_);
  if (cg.info() != Eigen::Success) {
    throw SolveError("CG preconditioner setup failed");
  }
  Eigen::VectorXd x = cg.solve(rhs_reduced);
  const double rel = (K_ * x - rhs_reduced).norm() / std::max(1.0, rhs_reduced.norm());
  if (rel > 1e-10) {
    throw SolveError("CG did not reach the required residual, achieved " + std::to_string(rel), rel);
  }
  return x;
}

Eigen::VectorXd solve_state(SparseSpdSystem& system, const LoadCase& load, StateSolver solver) {
  const Eigen::VectorXd f_red = system.dofs().reduce(load.force);
  const Eigen::VectorXd u_red = system.solve(f_red, solver);
  const double fnorm = f_red.norm();
  const double rel = (system.matrix() * u_red - f_red).norm() / std::max(1.0, fnorm);
  if (!(rel <= 1e-10)) {
    throw SolveError("state solve residual " + std::to_string(rel) + " exceeds 1e-10", rel);
  }
  return system.dofs().expand(u_red);
}

double compliance(const LoadCase& load, const Eigen::VectorXd& u) { return load.force.dot(u); }

Eigen::VectorXd element_energies(const StructuredGrid& grid, const Eigen::VectorXd& rho_phys,
                                 const Eigen::VectorXd& delta, const Eigen::VectorXd& u_full,
                                 const MaterialParams& mat) {
  const ElemMatrix Ke = element_stiffness_template(grid, mat);
  Eigen::VectorXd q = element_template_energies(grid, Ke, u_full);
  for (int e = 0; e < grid.num_elems(); ++e) {
    q[e] *= simp_scale(rho_phys[e], mat) * effective_modulus(delta[e], mat);
  }
  return q;
}

Eigen::VectorXd element_template_energies(const StructuredGrid& grid, const ElemMatrix& Ke,
                                          const Eigen::VectorXd& u_full) {
  const int n = grid.num_elems();
  Eigen::VectorXd q(n);
  parallel_chunks(n, [&](int begin, int end, int) {
    Eigen::Matrix<double, 8, 1> ue;
    for (int e = begin; e < end; ++e) {
      const auto dofs = grid.elem_dofs(e);
      for (int i = 0; i < 8; ++i) ue[i] = u_full[dofs[i]];
      q[e] = ue.dot(Ke * ue);
    }
  });
  return q;
}

}  // namespace robusto
