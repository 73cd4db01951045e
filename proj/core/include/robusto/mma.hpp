#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace robusto {

struct MmaSettings {
  double asyinit = 0.5;
  double asyincr = 1.2;
  double asydecr = 0.7;
  double move_limit = 0.2;
  double albefa = 0.1;
  double raa0 = 1e-5;
  int max_outer = 300;
  double change_tol = 1e-3;
  bool conservative = false;  // optional CCSA inner acceptance loop
  int max_conservative_rounds = 10;
};

struct MmaState {
  Eigen::VectorXd x, xold1, xold2, low, upp;
  int iter = 0;

  void reset(const Eigen::VectorXd& x0);
  void advance(const Eigen::VectorXd& x_new);
};

// Moving-asymptote update: symmetric half-box spread for the first two
// iterations, then per-coordinate gap shrink x0.7 on sign oscillation of the
// last two steps and grow x1.2 otherwise, with the gap clamped per side to
// [0.005, 5] box widths (total gap stays within [0.01, 10] box widths).
void update_asymptotes(MmaState& state, const Eigen::VectorXd& xmin, const Eigen::VectorXd& xmax,
                       const MmaSettings& settings);

struct MmaError : std::runtime_error {
  double residual_at_zero;
  double residual_at_max;
  MmaError(const std::string& msg, double h0, double hmax)
      : std::runtime_error(msg), residual_at_zero(h0), residual_at_max(hmax) {}
};

struct SubproblemResult {
  Eigen::VectorXd x;
  double dual_multiplier = 0.0;
  double constraint_residual = 0.0;  // subproblem constraint value at x
  int dual_iters = 0;
  // Approximation deltas at x relative to the expansion point, used by the
  // conservative acceptance check.
  double approx_objective_delta = 0.0;
  double approx_constraint_value = 0.0;
};

// One separable MMA subproblem with a single constraint, solved in the dual:
// the constraint residual is monotone in the multiplier, so bracketing plus
// bisection is exact. Throws MmaError if no finite multiplier brackets the
// root (bad gradients).
SubproblemResult solve_subproblem(const Eigen::VectorXd& x, const Eigen::VectorXd& grad_f,
                                  double g_value, const Eigen::VectorXd& grad_g,
                                  const Eigen::VectorXd& low, const Eigen::VectorXd& upp,
                                  const Eigen::VectorXd& xmin, const Eigen::VectorXd& xmax,
                                  const MmaSettings& settings);

struct MmaEval {
  double value = 0.0;
  Eigen::VectorXd grad;
  int inner_newton_iters = 0;      // diagnostics echoed into the history
  double inner_kkt_residual = 0.0;
};

using MmaCallback = std::function<MmaEval(const Eigen::VectorXd&)>;

struct MmaRecord {
  int iter = 0;
  double objective = 0.0;
  double constraint = 0.0;
  double change_inf = 0.0;
  int inner_newton_iters = 0;
  double inner_kkt_residual = 0.0;
};

struct MmaResult {
  Eigen::VectorXd x;
  std::vector<MmaRecord> history;  // one row per iteration plus the initial point
  bool converged = false;
  int iterations = 0;
};

// Outer loop: evaluate, build subproblem, step, until the design change
// infinity norm drops below change_tol or max_outer is hit. The constraint
// callback must return g(x) <= 0 form. Callback exceptions propagate with
// iteration context prepended.
MmaResult run_mma(const MmaCallback& objective, const MmaCallback& constraint,
                  const Eigen::VectorXd& x0, const Eigen::VectorXd& xmin,
                  const Eigen::VectorXd& xmax, const MmaSettings& settings,
                  const std::function<void(const MmaRecord&, const Eigen::VectorXd&)>& on_iter =
                      nullptr);

}  // namespace robusto
