#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "robusto/fem.hpp"
#include "robusto/grid.hpp"
#include "robusto/material.hpp"

namespace robusto {

enum class MeanNorm { Material, Domain };
enum class KktSolver { Schur, Lu };

// Admissible-defect description: weighted mean of delta pinned to 0.5 and
// v-weighted variance pinned to the budget D.
struct DefectConstraints {
  double D = 0.02;
  MeanNorm mean_norm = MeanNorm::Material;
  Eigen::VectorXd a;  // mean-constraint weights v_e rho_e^p / weight_norm
  double elem_volume = 0.0;
  double domain_volume = 0.0;
  double weight_norm = 0.0;

  // Weights follow the physical (filtered) densities. Material normalization
  // divides by sum(v rho^p) so delta == 0.5 always has weighted mean 0.5;
  // Domain keeps the literal |Omega| normalization (often infeasible for
  // sparse designs; kept for experimentation).
  static DefectConstraints build(const StructuredGrid& grid, const Eigen::VectorXd& rho_phys,
                                 const MaterialParams& mat, double D,
                                 MeanNorm norm = MeanNorm::Material);

  double mean_residual(const Eigen::VectorXd& delta) const { return a.dot(delta) - 0.5; }
  double variance_residual(const Eigen::VectorXd& delta) const;
};

struct InnerSolution {
  Eigen::VectorXd delta;
  Eigen::VectorXd u;  // full-length displacements, zeros on fixed DOFs
  double lambda_mean = 0.0;
  double lambda_var = 0.0;
  double mu = 0.0;
  double kkt_residual_inf = std::numeric_limits<double>::infinity();
  int newton_iters = 0;
};

struct InnerSettings {
  double mu_star = 1e-6;
  double kkt_tol = 1e-10;  // final-stage target, scaled by multiplier size
  int max_newton = 100;    // budget per Newton run (per barrier stage)
  KktSolver kkt_solver = KktSolver::Schur;
  double mu_init = 1e-4;  // floor for the energy-scaled initial barrier weight
  double tau = 0.995;     // fraction-to-boundary
};

struct InfeasibleBudgetError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InnerError : std::runtime_error {
  double kkt_residual;
  int iters;
  InnerSolution best;
  InnerError(const std::string& msg, double res, int it, InnerSolution b)
      : std::runtime_error(msg), kkt_residual(res), iters(it), best(std::move(b)) {}
};

// Strictly interior delta satisfying both equalities to 1e-10: an alternating
// +-amplitude pattern around 0.5 whose offset and amplitude are Newton-corrected
// on the two scalar constraint residuals. Throws InfeasibleBudgetError when the
// budget cannot fit inside (0,1)^n (including n < 2).
Eigen::VectorXd initialize_feasible(const DefectConstraints& con, int n);

// Barrier objective: -2 f.u + sum_e u_e.K_e(rho,delta).u_e - mu sum_e (log
// delta_e + log(1-delta_e)). Jointly convex in (delta, u). Throws
// std::domain_error when delta touches the boundary.
double inner_objective(const StructuredGrid& grid, const LoadCase& load,
                       const Eigen::VectorXd& rho_phys, const Eigen::VectorXd& delta,
                       const Eigen::VectorXd& u_full, double mu, const MaterialParams& mat);

struct KktResidual {
  Eigen::VectorXd r_u;      // reduced coordinates, block 2(Ku - f)
  Eigen::VectorXd r_delta;  // stationarity in delta
  double g_mean = 0.0;
  double g_var = 0.0;
  double inf_norm = 0.0;
};

KktResidual kkt_residual(const StructuredGrid& grid, const LoadCase& load,
                         const Eigen::VectorXd& rho_phys, const InnerSolution& sol,
                         const DefectConstraints& con, double mu, const MaterialParams& mat);

// Damped Newton on the KKT system of the barrier-smoothed worst-case problem.
// Holds the symbolic factorization caches, so reuse one instance across many
// solves on the same grid/load. After a successful solve the converged KKT
// matrix can be refactored once for adjoint solves.
class InnerSolver {
 public:
  InnerSolver(const StructuredGrid& grid, const LoadCase& load, const MaterialParams& mat);

  // Cold start: a small deterministic multistart (energy-aligned sign pattern
  // plus checkerboard parities) of barrier continuations, each starting at a
  // mu0 matched to the local energy scale and stepping mu down to mu_star;
  // the converged start with the largest compliance wins. Warm start: clamp
  // the given delta strictly inside (0,1) and run Newton directly at mu_star,
  // restoring the slightly drifted equalities along the way (falls back to
  // the cold path on failure).
  InnerSolution solve(const Eigen::VectorXd& rho_phys, const DefectConstraints& con,
                      const InnerSettings& settings, const InnerSolution* warm = nullptr);

  struct AdjointVector {
    Eigen::VectorXd w_u;  // full-length
    Eigen::VectorXd w_delta;
    double w_mean = 0.0;
    double w_var = 0.0;
  };
  // Solves A w = (rhs_u, 0, 0, 0) with A the (symmetric) KKT Jacobian at the
  // converged point of the last solve().
  AdjointVector adjoint_solve(const Eigen::VectorXd& rhs_u_full);

  const StructuredGrid& grid() const { return grid_; }
  const LoadCase& load() const { return load_; }
  const MaterialParams& material() const { return mat_; }
  const DofMap& dofs() const { return dof_map_; }
  const ElemMatrix& elem_template() const { return Ke_; }

  // Converged data of the last solve (valid after solve() returned).
  const Eigen::VectorXd& last_qbar() const { return eval_qbar_; }
  const InnerSolution& last_solution() const { return last_sol_; }
  const DefectConstraints& last_constraints() const { return con_; }
  const Eigen::VectorXd& last_rho() const { return rho_; }

 private:
  struct Eval {
    Eigen::VectorXd r_u, r_delta;
    double g1 = 0.0, g2 = 0.0, inf = 0.0;
    double nrm2sq = 0.0;  // squared 2-norm of the stacked residual
    Eigen::VectorXd qbar;
    Eigen::Matrix<double, 8, Eigen::Dynamic> keu;  // Ke * u_e per element
  };
  struct Step {
    Eigen::VectorXd du, ddelta;
    double dl1 = 0.0, dl2 = 0.0;
  };

  Eval evaluate(const Eigen::VectorXd& delta, const Eigen::VectorXd& u_red, double l1, double l2,
                double mu) const;
  // Solves the KKT system A x = (bu, bd, b1, b2) at the current point using
  // the cached element data in `ev`. base_shift is added to the delta diagonal
  // up front; further shifts are applied on factorization breakdown when
  // allow_regularization is set.
  Step solve_kkt(const Eval& ev, const Eigen::VectorXd& delta, double l2, double mu,
                 const Eigen::VectorXd& bu, const Eigen::VectorXd& bd, double b1, double b2,
                 bool allow_regularization, double base_shift = 0.0);
  Eigen::VectorXd hessian_dd(const Eval& ev, const Eigen::VectorXd& delta, double l2,
                             double mu) const;
  // One Newton run at fixed mu; updates the point in place, accumulates the
  // total iteration count, throws InnerError when a single run exceeds
  // settings.max_newton or stops halving its residual (stagnation). On
  // line-search breakdown the step is recomputed with an escalating diagonal
  // shift before giving up.
  void newton(double mu, double tol, const InnerSettings& settings, Eigen::VectorXd& delta,
              Eigen::VectorXd& u_red, double& l1, double& l2, int& iters, double& res_out);
  // Deterministic cold-start sign patterns: energy-aligned first, then the
  // +/- checkerboard parities, then +/- cyclic shifts of the parity for tiny
  // element counts (the feasible set degenerates to isolated points there).
  std::vector<Eigen::VectorXd> cold_start_patterns();
  // Full barrier continuation from a feasible delta0: state solve, energy
  // scaled mu0, mu *= 0.1 stages with mu-proportional tolerances, final stage
  // at mu_star under settings.kkt_tol. Throws InnerError on a stalled stage.
  void run_continuation(const Eigen::VectorXd& delta0, const InnerSettings& settings,
                        Eigen::VectorXd& delta, Eigen::VectorXd& u_red, double& l1, double& l2,
                        int& iters, double& res);
  // First-order continuation step from the converged stage at mu toward
  // mu_next: solves the KKT system for the path tangent dz/dmu and moves the
  // whole point along it, capped by fraction-to-boundary. Best effort.
  void predictor_step(double mu, double mu_next, const InnerSettings& settings,
                      Eigen::VectorXd& delta, Eigen::VectorXd& u_red, double& l1, double& l2);

  StructuredGrid grid_;
  LoadCase load_;
  MaterialParams mat_;
  DofMap dof_map_;
  ElemMatrix Ke_;
  Eigen::VectorXd f_red_;
  std::vector<std::array<int, 8>> red_dofs_;

  // Per-solve data
  Eigen::VectorXd rho_, scale_;  // physical densities and rho^p
  DefectConstraints con_;
  InnerSettings settings_;
  InnerSolution last_sol_;
  Eigen::VectorXd eval_qbar_;
  Eigen::Matrix<double, 8, Eigen::Dynamic> last_eval_keu_;
  std::unique_ptr<SparseSpdSystem> state_sys_;
  bool solved_ = false;

  // Schur path: S = 2K - sum_e g_e g_e^T / Hdd_e shares K's sparsity.
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> schur_ldlt_;
  bool schur_analyzed_ = false;
  // Full bordered-matrix path.
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
  bool lu_analyzed_ = false;

  bool adjoint_ready_ = false;
};

double worst_case_compliance(const LoadCase& load, const InnerSolution& sol);

}  // namespace robusto
