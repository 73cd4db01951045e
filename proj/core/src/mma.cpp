#include "robusto/mma.hpp"

#include <algorithm>
#include <cmath>

namespace robusto {

void MmaState::reset(const Eigen::VectorXd& x0) {
  x = x0;
  xold1 = x0;
  xold2 = x0;
  low = x0;
  upp = x0;
  iter = 0;
}

void MmaState::advance(const Eigen::VectorXd& x_new) {
  xold2 = xold1;
  xold1 = x;
  x = x_new;
  ++iter;
}

void update_asymptotes(MmaState& st, const Eigen::VectorXd& xmin, const Eigen::VectorXd& xmax,
                       const MmaSettings& s) {
  const int n = (int)st.x.size();
  if (st.low.size() != n) st.low.resize(n);
  if (st.upp.size() != n) st.upp.resize(n);
  for (int e = 0; e < n; ++e) {
    const double w = xmax[e] - xmin[e];
    if (st.iter < 2) {
      st.low[e] = st.x[e] - s.asyinit * w;
      st.upp[e] = st.x[e] + s.asyinit * w;
      continue;
    }
    const double osc = (st.x[e] - st.xold1[e]) * (st.xold1[e] - st.xold2[e]);
    const double gamma = (osc < 0.0) ? s.asydecr : s.asyincr;
    double low = st.x[e] - gamma * (st.xold1[e] - st.low[e]);
    double upp = st.x[e] + gamma * (st.upp[e] - st.xold1[e]);
    low = std::clamp(low, st.x[e] - 5.0 * w, st.x[e] - 0.005 * w);
    upp = std::clamp(upp, st.x[e] + 0.005 * w, st.x[e] + 5.0 * w);
    st.low[e] = low;
    st.upp[e] = upp;
  }
}

namespace {

struct Separable {
  // Coefficients of sum_e p_e/(upp_e - y_e) + q_e/(y_e - low_e).
  Eigen::VectorXd p0, q0, P, Q;
  Eigen::VectorXd alpha, beta;
  double r1 = 0.0;  // constant so that the constraint approx equals g at y = x
};

Eigen::VectorXd primal_minimizer(const Separable& sp, const Eigen::VectorXd& low,
                                 const Eigen::VectorXd& upp, double eta) {
  const int n = (int)sp.p0.size();
  Eigen::VectorXd y(n);
  for (int e = 0; e < n; ++e) {
    const double ph = std::sqrt(sp.p0[e] + eta * sp.P[e]);
    const double qh = std::sqrt(sp.q0[e] + eta * sp.Q[e]);
    const double yy = (low[e] * ph + upp[e] * qh) / (ph + qh);
    y[e] = std::clamp(yy, sp.alpha[e], sp.beta[e]);
  }
  return y;
}

double constraint_value(const Separable& sp, const Eigen::VectorXd& low,
                        const Eigen::VectorXd& upp, const Eigen::VectorXd& y) {
  double s = sp.r1;
  for (int e = 0; e < y.size(); ++e) {
    s += sp.P[e] / (upp[e] - y[e]) + sp.Q[e] / (y[e] - low[e]);
  }
  return s;
}

}  // namespace

SubproblemResult solve_subproblem(const Eigen::VectorXd& x, const Eigen::VectorXd& grad_f,
                                  double g_value, const Eigen::VectorXd& grad_g,
                                  const Eigen::VectorXd& low, const Eigen::VectorXd& upp,
                                  const Eigen::VectorXd& xmin, const Eigen::VectorXd& xmax,
                                  const MmaSettings& s) {
  const int n = (int)x.size();
  Separable sp;
  sp.p0.resize(n);
  sp.q0.resize(n);
  sp.P.resize(n);
  sp.Q.resize(n);
  sp.alpha.resize(n);
  sp.beta.resize(n);
  double g_at_x = 0.0;
  for (int e = 0; e < n; ++e) {
    const double w = xmax[e] - xmin[e];
    const double ux = upp[e] - x[e], xl = x[e] - low[e];
    sp.alpha[e] = std::max({xmin[e], low[e] + s.albefa * xl, x[e] - s.move_limit * w});
    sp.beta[e] = std::min({xmax[e], upp[e] - s.albefa * ux, x[e] + s.move_limit * w});

    const double fp = std::max(grad_f[e], 0.0), fm = std::max(-grad_f[e], 0.0);
    sp.p0[e] = ux * ux * (1.001 * fp + 0.001 * fm + s.raa0 / w);
    sp.q0[e] = xl * xl * (0.001 * fp + 1.001 * fm + s.raa0 / w);
    const double gp = std::max(grad_g[e], 0.0), gm = std::max(-grad_g[e], 0.0);
    sp.P[e] = ux * ux * (1.001 * gp + 0.001 * gm + s.raa0 / w);
    sp.Q[e] = xl * xl * (0.001 * gp + 1.001 * gm + s.raa0 / w);
    g_at_x += sp.P[e] / ux + sp.Q[e] / xl;
  }
  sp.r1 = g_value - g_at_x;

  SubproblemResult out;
  Eigen::VectorXd y = primal_minimizer(sp, low, upp, 0.0);
  double h0 = constraint_value(sp, low, upp, y);
  if (h0 <= 0.0) {
    out.x = y;
    out.dual_multiplier = 0.0;
    out.constraint_residual = h0;
  } else {
    double lo = 0.0, hi = 1.0;
    double h_hi = constraint_value(sp, low, upp, primal_minimizer(sp, low, upp, hi));
    int guard = 0;
    while (h_hi > 0.0 && hi < 1e12) {
      lo = hi;
      hi *= 2.0;
      h_hi = constraint_value(sp, low, upp, primal_minimizer(sp, low, upp, hi));
      ++guard;
    }
    if (h_hi > 0.0) {
      throw MmaError("MMA dual bracketing failed: constraint cannot be met within the "
                     "asymptote box (check constraint gradients)",
                     h0, h_hi);
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      y = primal_minimizer(sp, low, upp, mid);
      const double h = constraint_value(sp, low, upp, y);
      if (h > 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
      ++out.dual_iters;
      if (hi - lo <= 1e-14 * std::max(1.0, hi)) break;
    }
    y = primal_minimizer(sp, low, upp, hi);  // feasible side of the bracket
    out.x = y;
    out.dual_multiplier = hi;
    out.constraint_residual = constraint_value(sp, low, upp, y);
  }

  // Approximation values at the solution, for conservative acceptance tests.
  double obj_delta = 0.0;
  for (int e = 0; e < n; ++e) {
    obj_delta += sp.p0[e] / (upp[e] - out.x[e]) + sp.q0[e] / (out.x[e] - low[e]);
    obj_delta -= sp.p0[e] / (upp[e] - x[e]) + sp.q0[e] / (x[e] - low[e]);
  }
  out.approx_objective_delta = obj_delta;
  out.approx_constraint_value = out.constraint_residual;
  return out;
}

MmaResult run_mma(const MmaCallback& objective, const MmaCallback& constraint,
                  const Eigen::VectorXd& x0, const Eigen::VectorXd& xmin,
                  const Eigen::VectorXd& xmax, const MmaSettings& settings,
                  const std::function<void(const MmaRecord&, const Eigen::VectorXd&)>& on_iter) {
  auto eval_with_context = [](const MmaCallback& cb, const Eigen::VectorXd& x, int iter,
                              const char* what) {
    try {
      return cb(x);
    } catch (const std::exception& ex) {
      throw std::runtime_error("outer iteration " + std::to_string(iter) + ", " + what +
                               " evaluation: " + ex.what());
    }
  };

  MmaState st;
  st.reset(x0);
  MmaEval f = eval_with_context(objective, st.x, 0, "objective");
  MmaEval g = eval_with_context(constraint, st.x, 0, "constraint");

  MmaResult res;
  MmaRecord row{0, f.value, g.value, 0.0, f.inner_newton_iters, f.inner_kkt_residual};
  res.history.push_back(row);
  if (on_iter) on_iter(row, st.x);

  for (int k = 1; k <= settings.max_outer; ++k) {
    update_asymptotes(st, xmin, xmax, settings);

    MmaSettings sub_settings = settings;
    SubproblemResult sub =
        solve_subproblem(st.x, f.grad, g.value, g.grad, st.low, st.upp, xmin, xmax, sub_settings);
    MmaEval f_new = eval_with_context(objective, sub.x, k, "objective");
    MmaEval g_new = eval_with_context(constraint, sub.x, k, "constraint");

    if (settings.conservative) {
      // CCSA: re-solve with stiffer approximations until they upper-bound the
      // true functions at the candidate.
      for (int round = 0; round < settings.max_conservative_rounds; ++round) {
        const double eps_f = 1e-10 * (1.0 + std::abs(f.value));
        const double eps_g = 1e-10 * (1.0 + std::abs(g.value));
        const bool f_ok = f_new.value <= f.value + sub.approx_objective_delta + eps_f;
        const bool g_ok = g_new.value <= sub.approx_constraint_value + eps_g;
        if (f_ok && g_ok) break;
        sub_settings.raa0 *= 10.0;
        sub = solve_subproblem(st.x, f.grad, g.value, g.grad, st.low, st.upp, xmin, xmax,
                               sub_settings);
        f_new = eval_with_context(objective, sub.x, k, "objective");
        g_new = eval_with_context(constraint, sub.x, k, "constraint");
      }
    }

    const double change = (sub.x - st.x).lpNorm<Eigen::Infinity>();
    st.advance(sub.x);
    f = std::move(f_new);
    g = std::move(g_new);

    row = MmaRecord{k, f.value, g.value, change, f.inner_newton_iters, f.inner_kkt_residual};
    res.history.push_back(row);
    if (on_iter) on_iter(row, st.x);

    if (change < settings.change_tol) {
      res.converged = true;
      break;
    }
  }
  res.x = st.x;
  res.iterations = st.iter;
  return res;
}

}  // namespace robusto
