#include "robusto/inner_worst_case.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "robusto/parallel.hpp"

namespace robusto {

namespace {

// Solves for (offset, amplitude) so that delta = 0.5 + offset + amplitude*dir
// meets both equality constraints; 2x2 Newton, quadratic convergence.
std::optional<Eigen::VectorXd> feasible_on_line(const DefectConstraints& con,
                                                const Eigen::VectorXd& dir, double offset0,
                                                double amplitude0) {
  const int n = (int)dir.size();
  const double vw = con.elem_volume / con.domain_volume;
  double o = offset0, al = amplitude0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd d = (0.5 + o) + al * dir.array();
    const double g1 = con.mean_residual(d);
    const double g2 = con.variance_residual(d);
    if (std::abs(g1) <= 1e-12 && std::abs(g2) <= 1e-12) {
      return d;
    }
    const double j11 = con.a.sum();
    const double j12 = con.a.dot(dir);
    double j21 = 0.0, j22 = 0.0;
    for (int e = 0; e < n; ++e) {
      j21 += 2.0 * vw * (d[e] - 0.5);
      j22 += 2.0 * vw * (d[e] - 0.5) * dir[e];
    }
    const double det = j11 * j22 - j12 * j21;
    if (!(std::abs(det) > 1e-300)) return std::nullopt;
    o += (-g1 * j22 + g2 * j12) / det;
    al += (-j11 * g2 + j21 * g1) / det;
    if (!std::isfinite(o) || !std::isfinite(al)) return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

DefectConstraints DefectConstraints::build(const StructuredGrid& grid,
                                           const Eigen::VectorXd& rho_phys,
                                           const MaterialParams& mat, double D, MeanNorm norm) {
  if (!(D > 0.0 && D < 0.25)) {
    throw std::invalid_argument("defect budget D must lie in (0, 0.25), got " + std::to_string(D));
  }
  if (rho_phys.size() != grid.num_elems()) {
    throw std::invalid_argument("rho_phys length does not match element count");
  }
  DefectConstraints con;
  con.D = D;
  con.mean_norm = norm;
  con.elem_volume = grid.elem_volume();
  con.domain_volume = grid.domain_volume();
  Eigen::VectorXd w(rho_phys.size());
  for (int e = 0; e < rho_phys.size(); ++e) {
    w[e] = con.elem_volume * simp_scale(rho_phys[e], mat);
  }
  con.weight_norm = (norm == MeanNorm::Material) ? w.sum() : con.domain_volume;
  con.a = w / con.weight_norm;
  return con;
}

double DefectConstraints::variance_residual(const Eigen::VectorXd& delta) const {
  double s = 0.0;
  for (int e = 0; e < delta.size(); ++e) {
    s += elem_volume * (delta[e] - 0.5) * (delta[e] - 0.5);
  }
  return s / domain_volume - D;
}

Eigen::VectorXd initialize_feasible(const DefectConstraints& con, int n) {
  if (n < 2) {
    throw InfeasibleBudgetError("cannot satisfy mean=0.5 and variance=" + std::to_string(con.D) +
                                " with " + std::to_string(n) + " element(s)");
  }
  Eigen::VectorXd pattern(n);
  for (int e = 0; e < n; ++e) pattern[e] = (e % 2 == 0) ? 1.0 : -1.0;
  auto d = feasible_on_line(con, pattern, 0.0, std::sqrt(con.D));
  if (!d || d->minCoeff() <= 0.0 || d->maxCoeff() >= 1.0) {
    throw InfeasibleBudgetError("defect budget D=" + std::to_string(con.D) +
                                " admits no strictly interior feasible point");
  }
  return *d;
}

double inner_objective(const StructuredGrid& grid, const LoadCase& load,
                       const Eigen::VectorXd& rho_phys, const Eigen::VectorXd& delta,
                       const Eigen::VectorXd& u_full, double mu, const MaterialParams& mat) {
  if (delta.minCoeff() <= 0.0 || delta.maxCoeff() >= 1.0) {
    throw std::domain_error("inner objective requires delta strictly inside (0, 1)");
  }
  const Eigen::VectorXd q = element_energies(grid, rho_phys, delta, u_full, mat);
  double barrier = 0.0;
  for (int e = 0; e < delta.size(); ++e) {
    barrier += std::log(delta[e]) + std::log(1.0 - delta[e]);
  }
  return -2.0 * load.force.dot(u_full) + q.sum() - mu * barrier;
}

KktResidual kkt_residual(const StructuredGrid& grid, const LoadCase& load,
                         const Eigen::VectorXd& rho_phys, const InnerSolution& sol,
                         const DefectConstraints& con, double mu, const MaterialParams& mat) {
  const int n = grid.num_elems();
  const ElemMatrix Ke = element_stiffness_template(grid, mat);
  const DofMap map(grid, load.fixed_dofs);
  const double vw = con.elem_volume / con.domain_volume;

  Eigen::VectorXd r_u_full = -2.0 * load.force;
  KktResidual r;
  r.r_delta.resize(n);
  for (int e = 0; e < n; ++e) {
    const auto dofs = grid.elem_dofs(e);
    Eigen::Matrix<double, 8, 1> ue;
    for (int i = 0; i < 8; ++i) ue[i] = sol.u[dofs[i]];
    const Eigen::Matrix<double, 8, 1> keu = Ke * ue;
    const double qbar = ue.dot(keu);
    const double s = simp_scale(rho_phys[e], mat);
    const double d = sol.delta[e];
    const double E = effective_modulus(d, mat);
    const auto der = effective_modulus_derivatives(d, mat);
    for (int i = 0; i < 8; ++i) r_u_full[dofs[i]] += 2.0 * s * E * keu[i];
    r.r_delta[e] = s * der.dE * qbar - mu * (1.0 / d - 1.0 / (1.0 - d)) +
                   sol.lambda_mean * con.a[e] + sol.lambda_var * 2.0 * vw * (d - 0.5);
  }
  r.r_u = map.reduce(r_u_full);
  r.g_mean = con.mean_residual(sol.delta);
  r.g_var = con.variance_residual(sol.delta);
  r.inf_norm = std::max({r.r_u.size() ? r.r_u.cwiseAbs().maxCoeff() : 0.0,
                         r.r_delta.cwiseAbs().maxCoeff(), std::abs(r.g_mean), std::abs(r.g_var)});
  return r;
}

InnerSolver::InnerSolver(const StructuredGrid& grid, const LoadCase& load,
                         const MaterialParams& mat)
    : grid_(grid), load_(load), mat_(mat), dof_map_(grid, load.fixed_dofs) {
  load_.validate(grid_);
  mat_.validate();
  Ke_ = element_stiffness_template(grid_, mat_);
  f_red_ = dof_map_.reduce(load_.force);
  red_dofs_.resize(grid_.num_elems());
  for (int e = 0; e < grid_.num_elems(); ++e) {
    const auto dofs = grid_.elem_dofs(e);
    for (int i = 0; i < 8; ++i) red_dofs_[e][i] = dof_map_.to_reduced(dofs[i]);
  }
}

InnerSolver::Eval InnerSolver::evaluate(const Eigen::VectorXd& delta,
                                        const Eigen::VectorXd& u_red, double l1, double l2,
                                        double mu) const {
  const int n = grid_.num_elems();
  const double vw = con_.elem_volume / con_.domain_volume;
  Eval ev;
  ev.qbar.resize(n);
  ev.r_delta.resize(n);
  ev.keu.resize(8, n);

  parallel_chunks(n, [&](int begin, int end, int) {
    Eigen::Matrix<double, 8, 1> ue;
    for (int e = begin; e < end; ++e) {
      for (int i = 0; i < 8; ++i) {
        const int r = red_dofs_[e][i];
        ue[i] = (r >= 0) ? u_red[r] : 0.0;
      }
      ev.keu.col(e) = Ke_ * ue;
      ev.qbar[e] = ue.dot(ev.keu.col(e));
      const double d = delta[e];
      const auto der = effective_modulus_derivatives(d, mat_);
      ev.r_delta[e] = scale_[e] * der.dE * ev.qbar[e] - mu * (1.0 / d - 1.0 / (1.0 - d)) +
                      l1 * con_.a[e] + l2 * 2.0 * vw * (d - 0.5);
    }
  });

  ev.r_u = -2.0 * f_red_;
  double g2sum = 0.0;
  for (int e = 0; e < n; ++e) {
    const double sE = 2.0 * scale_[e] * effective_modulus(delta[e], mat_);
    for (int i = 0; i < 8; ++i) {
      const int r = red_dofs_[e][i];
      if (r >= 0) ev.r_u[r] += sE * ev.keu(i, e);
    }
    g2sum += con_.elem_volume * (delta[e] - 0.5) * (delta[e] - 0.5);
  }
  ev.g1 = con_.a.dot(delta) - 0.5;
  ev.g2 = g2sum / con_.domain_volume - con_.D;
  ev.inf = std::max({ev.r_u.size() ? ev.r_u.cwiseAbs().maxCoeff() : 0.0,
                     ev.r_delta.cwiseAbs().maxCoeff(), std::abs(ev.g1), std::abs(ev.g2)});
  ev.nrm2sq = ev.r_u.squaredNorm() + ev.r_delta.squaredNorm() + ev.g1 * ev.g1 + ev.g2 * ev.g2;
  return ev;
}

Eigen::VectorXd InnerSolver::hessian_dd(const Eval& ev, const Eigen::VectorXd& delta, double l2,
                                        double mu) const {
  const int n = grid_.num_elems();
  const double vw = con_.elem_volume / con_.domain_volume;
  Eigen::VectorXd Hdd(n);
  for (int e = 0; e < n; ++e) {
    const double d = delta[e];
    const auto der = effective_modulus_derivatives(d, mat_);
    Hdd[e] = scale_[e] * der.d2E * ev.qbar[e] +
             mu * (1.0 / (d * d) + 1.0 / ((1.0 - d) * (1.0 - d))) + 2.0 * l2 * vw;
  }
  return Hdd;
}

InnerSolver::Step InnerSolver::solve_kkt(const Eval& ev, const Eigen::VectorXd& delta, double l2,
                                         double mu, const Eigen::VectorXd& bu,
                                         const Eigen::VectorXd& bd, double b1, double b2,
                                         bool allow_regularization, double base_shift) {
  const int n = grid_.num_elems();
  const int nf = dof_map_.num_free();
  const double vw = con_.elem_volume / con_.domain_volume;
  Eigen::VectorXd Hdd0 = hessian_dd(ev, delta, l2, mu);
  Hdd0.array() += base_shift;

  // Element data shared by both paths: per-element H_ud column g_e (8 values
  // on the element DOFs) and the constraint gradients a_e, c_e.
  Eigen::Matrix<double, 8, Eigen::Dynamic> g(8, n);
  Eigen::VectorXd c(n);
  for (int e = 0; e < n; ++e) {
    const auto der = effective_modulus_derivatives(delta[e], mat_);
    g.col(e) = 2.0 * scale_[e] * der.dE * ev.keu.col(e);
    c[e] = 2.0 * vw * (delta[e] - 0.5);
  }

  if (settings_.kkt_solver == KktSolver::Schur) {
    const double ref = std::max(1.0, Hdd0.cwiseAbs().maxCoeff());
    double shift = 0.0;
    const int max_attempts = allow_regularization ? 9 : 1;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      Eigen::VectorXd Hdd = Hdd0.array() + shift;
      // The joint Hessian must stay positive definite for the step to be a
      // descent direction; a nonpositive delta diagonal already rules that
      // out, so convexify before paying for a factorization.
      if (Hdd.minCoeff() <= 1e-12 * ref) {
        if (!allow_regularization) break;
        shift = std::max(1e-8 * ref, shift * 100.0);
        continue;
      }

      std::vector<Eigen::Triplet<double>> trips(64 * (size_t)n);
      parallel_chunks(n, [&](int begin, int end, int) {
        ElemMatrix block;
        for (int e = begin; e < end; ++e) {
          const double sE = 2.0 * scale_[e] * effective_modulus(delta[e], mat_);
          block = sE * Ke_ - (g.col(e) * g.col(e).transpose()) / Hdd[e];
          size_t slot = 64 * (size_t)e;
          for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j, ++slot) {
              const int ri = red_dofs_[e][i], rj = red_dofs_[e][j];
              trips[slot] = (ri >= 0 && rj >= 0) ? Eigen::Triplet<double>(ri, rj, block(i, j))
                                                 : Eigen::Triplet<double>(0, 0, 0.0);
            }
          }
        }
      });
      Eigen::SparseMatrix<double> S(nf, nf);
      S.setFromTriplets(trips.begin(), trips.end());
      if (!schur_analyzed_) {
        schur_ldlt_.analyzePattern(S);
        schur_analyzed_ = true;
      }
      schur_ldlt_.factorize(S);
      // LDLT "succeeds" on indefinite matrices, so check the inertia through
      // the D diagonal: any nonpositive pivot means the condensed system is
      // not positive definite and the step would aim at a saddle.
      if (schur_ldlt_.info() != Eigen::Success || schur_ldlt_.vectorD().minCoeff() <= 0.0) {
        if (!allow_regularization) break;  // fall through to the LU path
        shift = std::max(1e-8 * ref, shift * 100.0);
        continue;
      }

      // Border vectors B = H_ud D^-1 [a c] and the 2x2 block M = [a c]^T D^-1 [a c].
      Eigen::VectorXd B1 = Eigen::VectorXd::Zero(nf), B2 = Eigen::VectorXd::Zero(nf);
      Eigen::VectorXd r1 = bu;
      Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
      Eigen::Vector2d r2(b1, b2);
      for (int e = 0; e < n; ++e) {
        const double inv = 1.0 / Hdd[e];
        const double ga = con_.a[e] * inv, gc = c[e] * inv, gb = bd[e] * inv;
        for (int i = 0; i < 8; ++i) {
          const int r = red_dofs_[e][i];
          if (r < 0) continue;
          B1[r] += g(i, e) * ga;
          B2[r] += g(i, e) * gc;
          r1[r] -= g(i, e) * gb;
        }
        M(0, 0) += con_.a[e] * ga;
        M(0, 1) += con_.a[e] * gc;
        M(1, 1) += c[e] * gc;
        r2[0] -= con_.a[e] * gb;
        r2[1] -= c[e] * gb;
      }
      M(1, 0) = M(0, 1);

      const Eigen::VectorXd x1 = schur_ldlt_.solve(r1);
      const Eigen::VectorXd xB1 = schur_ldlt_.solve(B1);
      const Eigen::VectorXd xB2 = schur_ldlt_.solve(B2);
      Eigen::Matrix2d Msys = M;
      Msys(0, 0) += B1.dot(xB1);
      Msys(0, 1) += B1.dot(xB2);
      Msys(1, 0) += B2.dot(xB1);
      Msys(1, 1) += B2.dot(xB2);
      const Eigen::Vector2d rhs_l = -(r2 + Eigen::Vector2d(B1.dot(x1), B2.dot(x1)));
      Eigen::FullPivLU<Eigen::Matrix2d> lu2(Msys);
      if (!lu2.isInvertible()) {
        if (!allow_regularization) break;
        shift = std::max(1e-8 * ref, shift * 100.0);
        continue;
      }
      const Eigen::Vector2d dl = lu2.solve(rhs_l);

      Step st;
      st.du = x1 + xB1 * dl[0] + xB2 * dl[1];
      st.dl1 = dl[0];
      st.dl2 = dl[1];
      st.ddelta.resize(n);
      for (int e = 0; e < n; ++e) {
        double gTdu = 0.0;
        for (int i = 0; i < 8; ++i) {
          const int r = red_dofs_[e][i];
          if (r >= 0) gTdu += g(i, e) * st.du[r];
        }
        st.ddelta[e] = (bd[e] - gTdu - con_.a[e] * dl[0] - c[e] * dl[1]) / Hdd[e];
      }
      return st;
    }
    if (settings_.kkt_solver == KktSolver::Schur && allow_regularization) {
      throw InnerError("inner KKT factorization failed after regularization retries", ev.inf, -1,
                       last_sol_);
    }
    // Unregularized Schur failed: solve the bordered system exactly below.
  }

  // Full bordered sparse LU on (u, delta, lambda_mean, lambda_var).
  const int N = nf + n + 2;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(64 * (size_t)n + 20 * (size_t)n + 8);
  for (int e = 0; e < n; ++e) {
    const double sE = 2.0 * scale_[e] * effective_modulus(delta[e], mat_);
    for (int i = 0; i < 8; ++i) {
      const int ri = red_dofs_[e][i];
      if (ri < 0) continue;
      for (int j = 0; j < 8; ++j) {
        const int rj = red_dofs_[e][j];
        if (rj >= 0) trips.emplace_back(ri, rj, sE * Ke_(i, j));
      }
      trips.emplace_back(ri, nf + e, g(i, e));
      trips.emplace_back(nf + e, ri, g(i, e));
    }
    trips.emplace_back(nf + e, nf + e, Hdd0[e]);
    trips.emplace_back(nf + e, nf + n, con_.a[e]);
    trips.emplace_back(nf + n, nf + e, con_.a[e]);
    trips.emplace_back(nf + e, nf + n + 1, c[e]);
    trips.emplace_back(nf + n + 1, nf + e, c[e]);
  }
  Eigen::SparseMatrix<double> A(N, N);
  A.setFromTriplets(trips.begin(), trips.end());
  if (!lu_analyzed_) {
    lu_.analyzePattern(A);
    lu_analyzed_ = true;
  }
  lu_.factorize(A);
  if (lu_.info() != Eigen::Success) {
    throw InnerError("bordered KKT matrix is singular", ev.inf, -1, last_sol_);
  }
  Eigen::VectorXd rhs(N);
  rhs.head(nf) = bu;
  rhs.segment(nf, n) = bd;
  rhs[nf + n] = b1;
  rhs[nf + n + 1] = b2;
  const Eigen::VectorXd x = lu_.solve(rhs);
  Step st;
  st.du = x.head(nf);
  st.ddelta = x.segment(nf, n);
  st.dl1 = x[nf + n];
  st.dl2 = x[nf + n + 1];
  return st;
}

void InnerSolver::newton(double mu, double tol, const InnerSettings& settings,
                         Eigen::VectorXd& delta, Eigen::VectorXd& u_red, double& l1, double& l2,
                         int& iters, double& res_out) {
  int stage_iters = 0;
  Eval ev = evaluate(delta, u_red, l1, l2, mu);
  // Dual residual blocks scale with the multipliers, so an absolute tolerance
  // below their floating-point floor is unreachable; widen it accordingly.
  const auto dual_scale = [&l1, &l2]() {
    return std::max(1.0, (std::abs(l1) + std::abs(l2)) / 200.0);
  };
  // Stagnation watermark: a run that cannot halve its residual norm within a
  // window is creeping along a bad basin and should be abandoned early so
  // the caller's fallbacks (other starts, cold restart) take over.
  double mark_res = ev.nrm2sq;
  int mark_iter = 0;
  while (ev.inf > tol * dual_scale()) {
    const bool out_of_budget = stage_iters >= settings.max_newton;
    if (out_of_budget || stage_iters - mark_iter >= 30) {
      InnerSolution best;
      best.delta = delta;
      best.u = dof_map_.expand(u_red);
      best.lambda_mean = l1;
      best.lambda_var = l2;
      best.mu = mu;
      best.kkt_residual_inf = ev.inf;
      best.newton_iters = iters;
      throw InnerError(out_of_budget
                           ? ("inner solve exceeded " + std::to_string(settings.max_newton) +
                              " Newton iterations, residual " + std::to_string(ev.inf))
                           : ("inner solve stagnated at residual " + std::to_string(ev.inf)),
                       ev.inf, iters, std::move(best));
    }
    // When backtracking bottoms out the Newton matrix is effectively singular
    // along the step; retry with an escalating shift on the delta diagonal and
    // take whatever the last attempt produced.
    const double shift_ref = 1.0 + hessian_dd(ev, delta, l2, mu).cwiseAbs().maxCoeff();
    double shift = 0.0;
    for (int attempt = 0; attempt < 9; ++attempt) {
      const Step st =
          solve_kkt(ev, delta, l2, mu, -ev.r_u, -ev.r_delta, -ev.g1, -ev.g2, true, shift);

      // Fraction-to-boundary on delta, then backtracking on the residual norm.
      double alpha = 1.0;
      for (int e = 0; e < delta.size(); ++e) {
        if (st.ddelta[e] < 0.0) alpha = std::min(alpha, -settings.tau * delta[e] / st.ddelta[e]);
        if (st.ddelta[e] > 0.0) {
          alpha = std::min(alpha, settings.tau * (1.0 - delta[e]) / st.ddelta[e]);
        }
      }
      // Armijo on the squared residual 2-norm: the Newton direction gives
      // phi'(0) = -2 phi(0), and unlike the max norm a single overshooting
      // element near its bound cannot veto a step that improves the rest.
      Eigen::VectorXd delta_t = delta + alpha * st.ddelta;
      Eigen::VectorXd u_t = u_red + alpha * st.du;
      Eval trial = evaluate(delta_t, u_t, l1 + alpha * st.dl1, l2 + alpha * st.dl2, mu);
      while (alpha > 1e-8 && trial.nrm2sq > (1.0 - 2e-4 * alpha) * ev.nrm2sq) {
        alpha *= 0.5;
        delta_t = delta + alpha * st.ddelta;
        u_t = u_red + alpha * st.du;
        trial = evaluate(delta_t, u_t, l1 + alpha * st.dl1, l2 + alpha * st.dl2, mu);
      }
      const bool decreased = trial.nrm2sq <= (1.0 - 2e-4 * alpha) * ev.nrm2sq;
      if (decreased || attempt == 8) {
        delta.swap(delta_t);
        u_red.swap(u_t);
        l1 += alpha * st.dl1;
        l2 += alpha * st.dl2;
        ev = std::move(trial);
        break;
      }
      shift = (shift == 0.0) ? 1e-8 * shift_ref : shift * 100.0;
    }
    ++iters;
    ++stage_iters;
    if (ev.nrm2sq <= 0.25 * mark_res) {
      mark_res = ev.nrm2sq;
      mark_iter = stage_iters;
    }
  }
  res_out = ev.inf;
  eval_qbar_ = ev.qbar;
  last_eval_keu_ = ev.keu;
}

std::vector<Eigen::VectorXd> InnerSolver::cold_start_patterns() {
  const int n = grid_.num_elems();
  Eigen::VectorXd parity(n);
  for (int e = 0; e < n; ++e) {
    const int ex = e % grid_.nx;
    const int ey = e / grid_.nx;
    parity[e] = ((ex + ey) % 2 == 0) ? 1.0 : -1.0;
  }

  // Energy-aligned pattern: put extra defect on the elements whose strain
  // energy reacts most at the homogeneous midpoint delta = 0.5.
  if (!state_sys_) state_sys_ = std::make_unique<SparseSpdSystem>(grid_, load_.fixed_dofs);
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(n, 0.5);
  state_sys_->assemble(rho_, half, mat_);
  const Eigen::VectorXd u_half = state_sys_->solve(f_red_);
  const Eval ev = evaluate(half, u_half, 0.0, 0.0, settings_.mu_star);
  const auto der_half = effective_modulus_derivatives(0.5, mat_);
  Eigen::VectorXd s(n);
  for (int e = 0; e < n; ++e) s[e] = scale_[e] * std::abs(der_half.dE) * ev.qbar[e];
  std::vector<double> sorted(s.data(), s.data() + n);
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double median = sorted[n / 2];
  Eigen::VectorXd energy(n);
  for (int e = 0; e < n; ++e) energy[e] = (s[e] > median) ? 1.0 : -1.0;
  if (std::abs(energy.sum()) == (double)n) {
    int argmin = 0;
    for (int e = 1; e < n; ++e) {
      if (s[e] < s[argmin]) argmin = e;
    }
    energy[argmin] = -energy[argmin];
  }

  std::vector<Eigen::VectorXd> patterns{energy, parity, -parity};
  if (n <= 4) {
    // With so few elements the feasible set is a handful of isolated points;
    // cyclic shifts of the parity pattern reach all of them.
    for (int roll = 1; roll < n; ++roll) {
      Eigen::VectorXd shifted(n);
      for (int e = 0; e < n; ++e) shifted[e] = parity[(e - roll + n) % n];
      patterns.push_back(shifted);
      patterns.push_back(-shifted);
    }
  }
  return patterns;
}

void InnerSolver::run_continuation(const Eigen::VectorXd& delta0, const InnerSettings& settings,
                                   Eigen::VectorXd& delta, Eigen::VectorXd& u_red, double& l1,
                                   double& l2, int& iters, double& res) {
  delta = delta0;
  if (!state_sys_) state_sys_ = std::make_unique<SparseSpdSystem>(grid_, load_.fixed_dofs);
  state_sys_->assemble(rho_, delta, mat_);
  u_red = state_sys_->solve(f_red_);
  l1 = 0.0;
  l2 = 0.0;

  // Start the barrier at the energy scale of the load-bearing bulk, not the
  // single hottest element: the multipliers then sit on the energy-dominated
  // branch (lambda_var > 0) from the first stage onward. A max-based mu0 on a
  // heterogeneous design puts stage one on the barrier-dominated branch, and
  // the path from there has to cross a pitchfork where every near-void
  // element's Hessian diagonal vanishes at once. mu_init only acts as a floor.
  const int n = (int)delta.size();
  const Eval ev0 = evaluate(delta, u_red, 0.0, 0.0, settings.mu_star);
  Eigen::VectorXd s(n);
  for (int e = 0; e < n; ++e) {
    const auto der = effective_modulus_derivatives(delta[e], mat_);
    s[e] = std::abs(scale_[e] * der.dE * ev0.qbar[e]);
  }
  Eigen::VectorXd s_sorted = s;
  std::nth_element(s_sorted.data(), s_sorted.data() + (3 * n) / 4, s_sorted.data() + n);
  const double bulk_scale = s_sorted[(3 * n) / 4];
  double mu = std::max({settings.mu_init, 10.0 * settings.mu_star, bulk_scale});
  std::vector<double> stages;
  while (mu > settings.mu_star * (1.0 + 1e-9)) {
    stages.push_back(mu);
    mu *= 0.1;
  }
  // Intermediate stages only track the central path, so a mu-proportional
  // tolerance is enough; the tight tolerance applies at mu_star alone.
  stages.push_back(settings.mu_star);
  for (size_t k = 0; k < stages.size(); ++k) {
    const double m = stages[k];
    const double tol =
        (k + 1 == stages.size()) ? settings.kkt_tol : std::max({1e-8, settings.kkt_tol, 10.0 * m});
    newton(m, tol, settings, delta, u_red, l1, l2, iters, res);
    if (k + 1 < stages.size()) predictor_step(m, stages[k + 1], settings, delta, u_red, l1, l2);
  }
}

void InnerSolver::predictor_step(double mu, double mu_next, const InnerSettings& settings,
                                 Eigen::VectorXd& delta, Eigen::VectorXd& u_red, double& l1,
                                 double& l2) {
  // Tangent continuation: bound-hugging entries follow near-hyperbolic paths
  // delta(mu) ~ 1 - mu/z that are linear in mu, so the first-order predictor
  // lands almost on the next stage's central point and spares the corrector
  // the large re-entry residual a plain mu drop would cause.
  const int n = (int)delta.size();
  const Eval ev = evaluate(delta, u_red, l1, l2, mu);
  Eigen::VectorXd b(n);
  for (int e = 0; e < n; ++e) b[e] = 1.0 / delta[e] - 1.0 / (1.0 - delta[e]);
  Step st;
  try {
    st = solve_kkt(ev, delta, l2, mu, Eigen::VectorXd::Zero(u_red.size()), b, 0.0, 0.0, true, 0.0);
  } catch (const InnerError&) {
    return;  // predictor is an accelerator only; the corrector handles the rest
  }
  const double dmu = mu_next - mu;
  double alpha = 1.0;
  for (int e = 0; e < n; ++e) {
    const double move = dmu * st.ddelta[e];
    if (move < 0.0) alpha = std::min(alpha, -settings.tau * delta[e] / move);
    if (move > 0.0) alpha = std::min(alpha, settings.tau * (1.0 - delta[e]) / move);
  }
  // A heavily clipped tangent means the Jacobian is nearly singular along the
  // path; extrapolating there would hand the corrector a worse point than the
  // converged one it already has.
  if (alpha < 0.1) return;
  delta += (alpha * dmu) * st.ddelta;
  u_red += (alpha * dmu) * st.du;
  l1 += alpha * dmu * st.dl1;
  l2 += alpha * dmu * st.dl2;
}

InnerSolution InnerSolver::solve(const Eigen::VectorXd& rho_phys, const DefectConstraints& con,
                                 const InnerSettings& settings, const InnerSolution* warm) {
  const int n = grid_.num_elems();
  if (rho_phys.size() != n) throw std::invalid_argument("rho_phys length mismatch");
  rho_ = rho_phys;
  scale_.resize(n);
  for (int e = 0; e < n; ++e) scale_[e] = simp_scale(rho_phys[e], mat_);
  con_ = con;
  settings_ = settings;
  solved_ = false;
  adjoint_ready_ = false;

  Eigen::VectorXd delta;
  Eigen::VectorXd u_red;
  double l1 = 0.0, l2 = 0.0;
  int iters = 0;
  double res = std::numeric_limits<double>::infinity();

  bool warm_ok = false;
  if (warm != nullptr && warm->delta.size() == n && warm->u.size() == grid_.num_dofs()) {
    // The KKT Newton iterates on primal and dual feasibility together, so the
    // warm point only needs strict interiority, not restored equalities: the
    // constraint drift from the changed densities is wiped out in one step.
    // (Reprojecting along the old pattern would shove bound-hugging entries
    // out of the box and lose the warm start altogether.) The margin must sit
    // below the barrier's natural boundary distance (about mu over the energy
    // scale), else the clamp drags converged entries inward and the following
    // fraction-to-boundary steps creep back out in tiny increments.
    const double margin = std::min(1e-4, 1e-2 * settings.mu_star);
    delta = warm->delta.cwiseMax(margin).cwiseMin(1.0 - margin);
    u_red = dof_map_.reduce(warm->u);
    l1 = warm->lambda_mean;
    l2 = warm->lambda_var;
    warm_ok = true;
    try {
      newton(settings.mu_star, settings.kkt_tol, settings, delta, u_red, l1, l2, iters, res);
    } catch (const InnerError&) {
      warm_ok = false;  // fall back to the cold multistart
      l1 = 0.0;
      l2 = 0.0;
    }
  }

  if (!warm_ok) {
    if (n < 2) {
      throw InfeasibleBudgetError("cannot satisfy mean=0.5 and variance=" +
                                  std::to_string(con_.D) + " with " + std::to_string(n) +
                                  " element(s)");
    }
    const auto patterns = cold_start_patterns();
    bool have_best = false;
    double best_wc = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_delta, best_u;
    double best_l1 = 0.0, best_l2 = 0.0, best_res = res;
    int feasible_starts = 0;
    std::string last_failure;
    for (const auto& pattern : patterns) {
      auto d0 = feasible_on_line(con_, pattern, 0.0, std::sqrt(con_.D));
      if (!d0 || d0->minCoeff() <= 0.0 || d0->maxCoeff() >= 1.0) continue;
      ++feasible_starts;
      Eigen::VectorXd d_run, u_run;
      double l1_run = 0.0, l2_run = 0.0, res_run = res;
      try {
        run_continuation(*d0, settings, d_run, u_run, l1_run, l2_run, iters, res_run);
      } catch (const InnerError& err) {
        last_failure = err.what();
        continue;
      }
      const double wc = f_red_.dot(u_run);
      if (!have_best || wc > best_wc) {
        have_best = true;
        best_wc = wc;
        best_delta = std::move(d_run);
        best_u = std::move(u_run);
        best_l1 = l1_run;
        best_l2 = l2_run;
        best_res = res_run;
      }
    }
    if (feasible_starts == 0) {
      throw InfeasibleBudgetError("defect budget D=" + std::to_string(con_.D) +
                                  " admits no strictly interior feasible point");
    }
    if (!have_best) {
      InnerSolution ctx;
      ctx.mu = settings.mu_star;
      ctx.newton_iters = iters;
      throw InnerError("all cold starts failed; last: " + last_failure,
                       std::numeric_limits<double>::infinity(), iters, std::move(ctx));
    }
    delta = std::move(best_delta);
    u_red = std::move(best_u);
    l1 = best_l1;
    l2 = best_l2;
    res = best_res;
    // The Newton caches belong to whichever start ran last; refresh them at
    // the winning point for the adjoint path.
    const Eval ev = evaluate(delta, u_red, l1, l2, settings.mu_star);
    eval_qbar_ = ev.qbar;
    last_eval_keu_ = ev.keu;
  }

  last_sol_.delta = std::move(delta);
  last_sol_.u = dof_map_.expand(u_red);
  last_sol_.lambda_mean = l1;
  last_sol_.lambda_var = l2;
  last_sol_.mu = settings.mu_star;
  last_sol_.kkt_residual_inf = res;
  last_sol_.newton_iters = iters;
  solved_ = true;
  return last_sol_;
}

InnerSolver::AdjointVector InnerSolver::adjoint_solve(const Eigen::VectorXd& rhs_u_full) {
  if (!solved_) throw std::logic_error("adjoint_solve requires a completed solve()");
  if (rhs_u_full.size() != grid_.num_dofs()) {
    throw std::invalid_argument("adjoint rhs length mismatch");
  }
  // Rebuild the element cache at the converged point (the Newton loop's last
  // accepted evaluation is exactly this point, kept in eval_qbar_/keu).
  Eval ev;
  ev.qbar = eval_qbar_;
  ev.keu = last_eval_keu_;
  ev.inf = last_sol_.kkt_residual_inf;
  const Eigen::VectorXd bu = dof_map_.reduce(rhs_u_full);
  const Eigen::VectorXd bd = Eigen::VectorXd::Zero(grid_.num_elems());
  const Step w = solve_kkt(ev, last_sol_.delta, last_sol_.lambda_var, last_sol_.mu, bu, bd, 0.0,
                           0.0, false);
  AdjointVector out;
  out.w_u = dof_map_.expand(w.du);
  out.w_delta = w.ddelta;
  out.w_mean = w.dl1;
  out.w_var = w.dl2;
  return out;
}

double worst_case_compliance(const LoadCase& load, const InnerSolution& sol) {
  return load.force.dot(sol.u);
}

}  // namespace robusto
