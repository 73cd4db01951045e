#include <doctest.h>

#include <robusto/mma.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

using robusto::MmaCallback;
using robusto::MmaError;
using robusto::MmaEval;
using robusto::MmaRecord;
using robusto::MmaResult;
using robusto::MmaSettings;
using robusto::MmaState;

namespace {

Eigen::VectorXd vec1(double v) { return Eigen::VectorXd::Constant(1, v); }

}  // namespace

TEST_CASE("state reset and advance shift the iterate history") {
  MmaState st;
  st.reset(vec1(0.5));
  CHECK(st.iter == 0);
  CHECK(st.x[0] == 0.5);
  CHECK(st.xold1[0] == 0.5);
  CHECK(st.xold2[0] == 0.5);

  st.advance(vec1(0.6));
  CHECK(st.iter == 1);
  CHECK(st.x[0] == 0.6);
  CHECK(st.xold1[0] == 0.5);
  st.advance(vec1(0.55));
  CHECK(st.iter == 2);
  CHECK(st.x[0] == 0.55);
  CHECK(st.xold1[0] == 0.6);
  CHECK(st.xold2[0] == 0.5);
}

TEST_CASE("asymptotes spread symmetrically for the first two iterations") {
  const Eigen::VectorXd xmin = vec1(0.001), xmax = vec1(1.0);
  MmaSettings s;
  MmaState st;
  st.reset(vec1(0.5));

  robusto::update_asymptotes(st, xmin, xmax, s);
  CHECK(st.low[0] == doctest::Approx(0.5 - 0.5 * 0.999).epsilon(1e-14));
  CHECK(st.upp[0] == doctest::Approx(0.5 + 0.5 * 0.999).epsilon(1e-14));

  st.advance(vec1(0.6));
  robusto::update_asymptotes(st, xmin, xmax, s);
  CHECK(st.low[0] == doctest::Approx(0.6 - 0.4995).epsilon(1e-14));
  CHECK(st.upp[0] == doctest::Approx(0.6 + 0.4995).epsilon(1e-14));
}

TEST_CASE("oscillation shrinks the gap, steady progress grows it") {
  const Eigen::VectorXd xmin = vec1(0.001), xmax = vec1(1.0);
  MmaSettings s;
  MmaState st;
  st.reset(vec1(0.5));
  robusto::update_asymptotes(st, xmin, xmax, s);
  st.advance(vec1(0.6));
  robusto::update_asymptotes(st, xmin, xmax, s);

  // 0.5 -> 0.6 -> 0.55 flips direction: both gaps contract by 0.7.
  st.advance(vec1(0.55));
  robusto::update_asymptotes(st, xmin, xmax, s);
  CHECK(st.low[0] == doctest::Approx(0.55 - 0.7 * 0.4995).epsilon(1e-13));
  CHECK(st.upp[0] == doctest::Approx(0.55 + 0.7 * 0.4995).epsilon(1e-13));

  // 0.6 -> 0.55 -> 0.5 keeps direction: gaps expand by 1.2.
  st.advance(vec1(0.5));
  robusto::update_asymptotes(st, xmin, xmax, s);
  CHECK(st.low[0] == doctest::Approx(0.5 - 1.2 * 0.7 * 0.4995).epsilon(1e-13));
  CHECK(st.upp[0] == doctest::Approx(0.5 + 1.2 * 0.7 * 0.4995).epsilon(1e-13));
}

TEST_CASE("asymptote gaps are clamped to the box-width window") {
  const Eigen::VectorXd xmin = vec1(0.001), xmax = vec1(1.0);
  const double w = 0.999;
  MmaSettings s;
  MmaState st;
  st.reset(vec1(0.5));
  st.iter = 5;  // force the adaptive branch

  SUBCASE("repeated oscillation floors the gap at 0.005 box widths") {
    st.xold1 = vec1(0.51);
    st.xold2 = vec1(0.5);
    st.low = vec1(0.5 - 0.4995);
    st.upp = vec1(0.5 + 0.4995);
    for (int k = 0; k < 60; ++k) {
      // keep (x - xold1)(xold1 - xold2) < 0
      robusto::update_asymptotes(st, xmin, xmax, s);
      st.low[0] = st.x[0] - (st.xold1[0] - st.low[0]);  // re-anchor gap on xold1
      st.upp[0] = st.x[0] + (st.upp[0] - st.xold1[0]);
    }
    robusto::update_asymptotes(st, xmin, xmax, s);
    CHECK(st.low[0] >= 0.5 - 0.005 * w - 1e-12);
    CHECK(st.upp[0] <= 0.5 + 0.005 * w + 1e-12);
  }

  SUBCASE("repeated growth caps the gap at 5 box widths") {
    st.xold1 = vec1(0.49);
    st.xold2 = vec1(0.48);
    st.low = vec1(0.5 - 0.4995);
    st.upp = vec1(0.5 + 0.4995);
    for (int k = 0; k < 60; ++k) {
      robusto::update_asymptotes(st, xmin, xmax, s);
      st.low[0] = st.x[0] - (st.xold1[0] - st.low[0]);
      st.upp[0] = st.x[0] + (st.upp[0] - st.xold1[0]);
    }
    robusto::update_asymptotes(st, xmin, xmax, s);
    CHECK(st.low[0] == doctest::Approx(0.5 - 5.0 * w).epsilon(1e-13));
    CHECK(st.upp[0] == doctest::Approx(0.5 + 5.0 * w).epsilon(1e-13));
  }
}

TEST_CASE("zero objective gradient with an inactive constraint is a fixed point") {
  const int n = 4;
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 0.5);
  const Eigen::VectorXd xmin = Eigen::VectorXd::Constant(n, 0.001);
  const Eigen::VectorXd xmax = Eigen::VectorXd::Ones(n);
  MmaSettings s;
  MmaState st;
  st.reset(x);
  robusto::update_asymptotes(st, xmin, xmax, s);

  Eigen::VectorXd grad_g(n);
  grad_g << -1.0, -0.5, 0.3, -2.0;
  const auto sub = robusto::solve_subproblem(x, Eigen::VectorXd::Zero(n), -0.5, grad_g, st.low,
                                             st.upp, xmin, xmax, s);
  CHECK((sub.x - x).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(sub.dual_multiplier == 0.0);
  CHECK(sub.constraint_residual < 0.0);
}

TEST_CASE("steep descent pull lands exactly on the move limit") {
  const Eigen::VectorXd x = vec1(0.5), xmin = vec1(0.001), xmax = vec1(1.0);
  MmaSettings s;
  MmaState st;
  st.reset(x);
  robusto::update_asymptotes(st, xmin, xmax, s);

  const auto sub = robusto::solve_subproblem(x, vec1(-1.0), -1.0, vec1(0.0), st.low, st.upp,
                                             xmin, xmax, s);
  const double w = xmax[0] - xmin[0];
  const double beta =
      std::min({xmax[0], st.upp[0] - s.albefa * (st.upp[0] - x[0]), x[0] + s.move_limit * w});
  CHECK(sub.x[0] == beta);

  const auto sub2 = robusto::solve_subproblem(x, vec1(1.0), -1.0, vec1(0.0), st.low, st.upp,
                                              xmin, xmax, s);
  const double alpha =
      std::max({xmin[0], st.low[0] + s.albefa * (x[0] - st.low[0]), x[0] - s.move_limit * w});
  CHECK(sub2.x[0] == alpha);
}

TEST_CASE("a violated constraint activates the dual and restores feasibility") {
  const int n = 3;
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 0.4);
  const Eigen::VectorXd xmin = Eigen::VectorXd::Constant(n, 0.001);
  const Eigen::VectorXd xmax = Eigen::VectorXd::Ones(n);
  MmaSettings s;
  MmaState st;
  st.reset(x);
  robusto::update_asymptotes(st, xmin, xmax, s);

  // g decreases when x grows; current point violates by 0.1.
  const auto sub = robusto::solve_subproblem(x, Eigen::VectorXd::Zero(n), 0.1,
                                             Eigen::VectorXd::Constant(n, -1.0), st.low, st.upp,
                                             xmin, xmax, s);
  CHECK(sub.dual_multiplier > 0.0);
  CHECK((sub.x.array() > x.array()).all());
  CHECK(sub.constraint_residual <= 0.0);
  CHECK(sub.constraint_residual >= -1e-6);
  CHECK(sub.dual_iters > 0);
}

TEST_CASE("useless constraint gradients raise a diagnosable error") {
  const Eigen::VectorXd x = vec1(0.5), xmin = vec1(0.001), xmax = vec1(1.0);
  MmaSettings s;
  MmaState st;
  st.reset(x);
  robusto::update_asymptotes(st, xmin, xmax, s);

  try {
    robusto::solve_subproblem(x, vec1(0.0), 0.5, vec1(0.0), st.low, st.upp, xmin, xmax, s);
    FAIL("expected MmaError");
  } catch (const MmaError& e) {
    CHECK(e.residual_at_zero > 0.0);
    CHECK(e.residual_at_max > 0.0);
  }
}

namespace {

// min (x0-0.1)^2 + (x1-0.1)^2  s.t.  1 - x0 - x1 <= 0: optimum (0.5, 0.5).
MmaCallback quadratic_objective() {
  return [](const Eigen::VectorXd& x) {
    MmaEval ev;
    ev.value = (x[0] - 0.1) * (x[0] - 0.1) + (x[1] - 0.1) * (x[1] - 0.1);
    ev.grad = 2.0 * (x.array() - 0.1).matrix();
    return ev;
  };
}

MmaCallback sum_constraint() {
  return [](const Eigen::VectorXd& x) {
    MmaEval ev;
    ev.value = 1.0 - x.sum();
    ev.grad = Eigen::VectorXd::Constant(x.size(), -1.0);
    return ev;
  };
}

}  // namespace

TEST_CASE("outer loop solves the projected quadratic to four digits") {
  Eigen::VectorXd x0(2);
  x0 << 0.9, 0.2;
  const Eigen::VectorXd xmin = Eigen::VectorXd::Constant(2, 0.001);
  const Eigen::VectorXd xmax = Eigen::VectorXd::Ones(2);
  MmaSettings s;
  s.change_tol = 1e-7;
  s.max_outer = 200;

  std::vector<Eigen::VectorXd> seen;
  const MmaResult res = robusto::run_mma(quadratic_objective(), sum_constraint(), x0, xmin, xmax,
                                         s, [&](const MmaRecord&, const Eigen::VectorXd& x) {
                                           seen.push_back(x);
                                         });

  CHECK(res.converged);
  CHECK(res.iterations < 200);
  CHECK(std::abs(res.x[0] - 0.5) < 1e-4);
  CHECK(std::abs(res.x[1] - 0.5) < 1e-4);
  CHECK(std::abs(1.0 - res.x.sum()) < 1e-3);  // constraint active at the optimum

  CHECK(res.history.size() == (size_t)res.iterations + 1);
  for (size_t k = 0; k < res.history.size(); ++k) CHECK(res.history[k].iter == (int)k);
  CHECK(seen.size() == res.history.size());
  CHECK((seen.back() - res.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK(seen.front() == x0);

  // Every iterate respects the box.
  for (const auto& xk : seen) {
    CHECK(xk.minCoeff() >= xmin[0]);
    CHECK(xk.maxCoeff() <= xmax[0]);
  }
}

TEST_CASE("conservative acceptance still reaches the same optimum") {
  Eigen::VectorXd x0(2);
  x0 << 0.2, 0.9;
  const Eigen::VectorXd xmin = Eigen::VectorXd::Constant(2, 0.001);
  const Eigen::VectorXd xmax = Eigen::VectorXd::Ones(2);
  MmaSettings s;
  s.change_tol = 1e-7;
  s.max_outer = 300;
  s.conservative = true;

  const MmaResult res =
      robusto::run_mma(quadratic_objective(), sum_constraint(), x0, xmin, xmax, s);
  CHECK(res.converged);
  CHECK(std::abs(res.x[0] - 0.5) < 1e-3);
  CHECK(std::abs(res.x[1] - 0.5) < 1e-3);
}

TEST_CASE("an already stationary start stops after one outer iteration") {
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(3, 0.4);
  const Eigen::VectorXd xmin = Eigen::VectorXd::Constant(3, 0.001);
  const Eigen::VectorXd xmax = Eigen::VectorXd::Ones(3);

  MmaCallback flat = [](const Eigen::VectorXd& x) {
    MmaEval ev;
    ev.value = 2.5;
    ev.grad = Eigen::VectorXd::Zero(x.size());
    ev.inner_newton_iters = 7;
    ev.inner_kkt_residual = 3.25e-9;
    return ev;
  };
  MmaCallback slack = [](const Eigen::VectorXd& x) {
    MmaEval ev;
    ev.value = -1.0;
    ev.grad = Eigen::VectorXd::Zero(x.size());
    return ev;
  };

  const MmaResult res = robusto::run_mma(flat, slack, x0, xmin, xmax, MmaSettings{});
  CHECK(res.converged);
  CHECK(res.iterations == 1);
  CHECK(res.history.size() == 2);
  CHECK((res.x - x0).cwiseAbs().maxCoeff() < 1e-13);
  // Objective diagnostics are echoed into every history row.
  CHECK(res.history[0].inner_newton_iters == 7);
  CHECK(res.history[1].inner_newton_iters == 7);
  CHECK(res.history[1].inner_kkt_residual == 3.25e-9);
}

TEST_CASE("iteration cap reports non-convergence honestly") {
  Eigen::VectorXd x0(2);
  x0 << 0.9, 0.2;
  const Eigen::VectorXd xmin = Eigen::VectorXd::Constant(2, 0.001);
  const Eigen::VectorXd xmax = Eigen::VectorXd::Ones(2);
  MmaSettings s;
  s.change_tol = 1e-16;
  s.max_outer = 3;

  const MmaResult res = robusto::run_mma(quadratic_objective(), sum_constraint(), x0, xmin, xmax, s);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 3);
  CHECK(res.history.size() == 4);
}

TEST_CASE("callback failures surface with their outer-iteration context") {
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(2, 0.5);
  const Eigen::VectorXd xmin = Eigen::VectorXd::Constant(2, 0.001);
  const Eigen::VectorXd xmax = Eigen::VectorXd::Ones(2);

  int calls = 0;
  MmaCallback fragile = [&calls](const Eigen::VectorXd& x) {
    if (++calls > 1) throw std::runtime_error("boom");
    MmaEval ev;
    ev.value = x.sum();
    ev.grad = Eigen::VectorXd::Ones(x.size());
    return ev;
  };

  try {
    robusto::run_mma(fragile, sum_constraint(), x0, xmin, xmax, MmaSettings{});
    FAIL("expected wrapped exception");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("outer iteration 1") != std::string::npos);
    CHECK(msg.find("boom") != std::string::npos);
  }
}
