#include "robusto/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "robusto/adjoint.hpp"
#include "robusto/density_filter.hpp"
#include "robusto/fem.hpp"
#include "robusto/inner_worst_case.hpp"
#include "robusto/io.hpp"
#include "robusto/mma.hpp"
#include "robusto/oracle.hpp"
#include "robusto/parallel.hpp"

namespace robusto {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Problem {
  StructuredGrid grid;
  LoadCase load;
  FilterOperator filter;
};

Problem make_problem(const RunConfig& cfg) {
  Problem p;
  p.grid = StructuredGrid(cfg.nx, cfg.ny, cfg.width, cfg.height);
  p.load = cantilever_load(p.grid, cfg.load_extent);
  p.filter = FilterOperator::build(p.grid, cfg.radius_elements);
  return p;
}

Eigen::VectorXd initial_design(const RunConfig& cfg, int n) {
  if (cfg.input_density_path.empty()) {
    return Eigen::VectorXd::Constant(n, cfg.V);
  }
  Eigen::VectorXd x = read_density_txt(cfg.input_density_path, cfg.nx, cfg.ny);
  for (Eigen::Index e = 0; e < x.size(); ++e) {
    x[e] = std::clamp(x[e], cfg.material.rho_min, 1.0);
  }
  return x;
}

double nominal_compliance(SparseSpdSystem& sys, const Problem& p, const Eigen::VectorXd& rho_phys,
                          const RunConfig& cfg) {
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(rho_phys.size(), 0.5);
  sys.assemble(rho_phys, half, cfg.material);
  const Eigen::VectorXd u = solve_state(sys, p.load, cfg.state_solver);
  return compliance(p.load, u);
}

std::vector<ConvergenceRow> history_rows(const std::vector<MmaRecord>& hist, double V) {
  std::vector<ConvergenceRow> rows;
  rows.reserve(hist.size());
  for (const auto& r : hist) {
    ConvergenceRow row;
    row.iter = r.iter;
    row.objective = r.objective;
    row.worst_case_compliance = r.objective;
    row.volume = r.constraint + V;
    row.design_change_inf = r.change_inf;
    row.inner_newton_iters = r.inner_newton_iters;
    row.inner_kkt_residual = r.inner_kkt_residual;
    rows.push_back(row);
  }
  return rows;
}

double median_warm_newton(const std::vector<MmaRecord>& hist) {
  std::vector<double> counts;
  for (const auto& r : hist) {
    if (r.iter >= 10) counts.push_back(r.inner_newton_iters);
  }
  if (counts.empty()) {
    for (const auto& r : hist) {
      if (r.iter >= 1) counts.push_back(r.inner_newton_iters);
    }
  }
  if (counts.empty()) return 0.0;
  std::sort(counts.begin(), counts.end());
  const size_t m = counts.size() / 2;
  return counts.size() % 2 ? counts[m] : 0.5 * (counts[m - 1] + counts[m]);
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["run"] = {{"mode", to_string(cfg.mode)},
              {"preset", cfg.preset},
              {"seed", cfg.seed},
              {"threads", cfg.threads}};
  j["grid"] = {{"nx", cfg.nx},
               {"ny", cfg.ny},
               {"width", cfg.width},
               {"height", cfg.height},
               {"load_extent", cfg.load_extent}};
  j["material"] = {
      {"E0", cfg.material.E0},
      {"ED", cfg.material.ED},
      {"nu", cfg.material.nu},
      {"p", cfg.material.p},
      {"rho_min", cfg.material.rho_min},
      {"plane_model", cfg.material.plane_model == PlaneModel::Strain ? "strain" : "stress"}};
  j["constraints"] = {{"V", cfg.V},
                      {"D", cfg.D},
                      {"mean_norm", cfg.mean_norm == MeanNorm::Material ? "material" : "domain"}};
  j["filter"] = {{"radius_elements", cfg.radius_elements}};
  j["inner"] = {{"mu_star", cfg.inner.mu_star},
                {"kkt_tol", cfg.inner.kkt_tol},
                {"max_newton", cfg.inner.max_newton}};
  j["outer"] = {{"max_iters", cfg.outer.max_outer},
                {"move_limit", cfg.outer.move_limit},
                {"change_tol", cfg.outer.change_tol},
                {"conservative", cfg.outer.conservative}};
  j["solver"] = {{"kkt", cfg.inner.kkt_solver == KktSolver::Schur ? "schur" : "lu"},
                 {"state", cfg.state_solver == StateSolver::Direct ? "direct" : "cg"}};
  j["io"] = {{"output_dir", cfg.output_dir}, {"input_density_path", cfg.input_density_path}};
  return j;
}

void write_outputs(const RunConfig& cfg, const Eigen::VectorXd& design,
                   const Eigen::VectorXd& rho_phys, const Eigen::VectorXd* delta,
                   const std::vector<ConvergenceRow>& rows, const RunSummary& summary) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const auto path = [&](const char* name) { return (fs::path(cfg.output_dir) / name).string(); };
  write_density_txt(path("density.txt"), cfg.nx, cfg.ny, design);
  write_density_pgm(path("density.pgm"), cfg.nx, cfg.ny, rho_phys);
  if (delta) {
    write_defects_pgm(path("defects.pgm"), cfg.nx, cfg.ny, rho_phys, *delta);
  }
  write_convergence_csv(path("convergence.csv"), rows);
  write_summary_json(path("summary.json"), summary, cfg);
}

}  // namespace

void write_summary_json(const std::string& path, const RunSummary& s, const RunConfig& cfg) {
  nlohmann::json j;
  j["mode"] = s.mode;
  j["grid"] = {{"nx", s.nx}, {"ny", s.ny}};
  j["reference_compliance"] = s.reference_compliance;
  j["worst_case_compliance"] = s.worst_case_compliance;
  j["worst_case_percent"] = s.worst_case_percent;
  j["volume_fraction"] = s.volume_fraction;
  j["outer_iterations"] = s.outer_iterations;
  j["converged"] = s.converged;
  j["inner"] = {{"total_newton_iters", s.total_inner_newton},
                {"median_warm_newton_iters", s.median_warm_newton}};
  j["wall_seconds"] = s.wall_seconds;
  if (s.has_baseline) {
    j["baseline"] = {{"reference_compliance", s.baseline_reference_compliance},
                     {"worst_case_compliance", s.baseline_worst_case_compliance},
                     {"worst_case_percent", s.baseline_worst_case_percent},
                     {"worst_case_vs_baseline_percent", s.worst_case_vs_baseline_percent}};
  }
  j["config"] = config_to_json(cfg);
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  out << j.dump(2) << "\n";
}

RunSummary run_baseline(const RunConfig& cfg) {
  cfg.validate();
  set_num_threads(cfg.threads);
  const auto t0 = Clock::now();
  const Problem p = make_problem(cfg);
  const int n = p.grid.num_elems();
  const MaterialParams& mat = cfg.material;
  const double E_half = effective_modulus(0.5, mat);

  SparseSpdSystem sys(p.grid, p.load.fixed_dofs);
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(n, 0.5);
  const Eigen::VectorXd vol_grad = volume_gradient(p.filter, p.grid);

  const MmaCallback objective = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd rho_phys = p.filter.apply(x);
    sys.assemble(rho_phys, half, mat);
    const Eigen::VectorXd u = solve_state(sys, p.load, cfg.state_solver);
    MmaEval ev;
    ev.value = compliance(p.load, u);
    const Eigen::VectorXd qbar = element_template_energies(p.grid, sys.elem_template(), u);
    Eigen::VectorXd gphys(n);
    for (int e = 0; e < n; ++e) {
      gphys[e] = -mat.p * std::pow(rho_phys[e], mat.p - 1.0) * E_half * qbar[e];
    }
    ev.grad = p.filter.chain_rule(gphys);
    return ev;
  };
  const MmaCallback constraint = [&](const Eigen::VectorXd& x) {
    MmaEval ev;
    ev.value = p.filter.apply(x).mean() - cfg.V;
    ev.grad = vol_grad;
    return ev;
  };

  const Eigen::VectorXd x0 = initial_design(cfg, n);
  const Eigen::VectorXd xmin = Eigen::VectorXd::Constant(n, mat.rho_min);
  const Eigen::VectorXd xmax = Eigen::VectorXd::Ones(n);
  const MmaResult res = run_mma(objective, constraint, x0, xmin, xmax, cfg.outer);

  const Eigen::VectorXd rho_phys = p.filter.apply(res.x);
  RunSummary s;
  s.mode = to_string(RunMode::Baseline);
  s.nx = cfg.nx;
  s.ny = cfg.ny;
  s.reference_compliance = res.history.back().objective;
  s.worst_case_compliance = s.reference_compliance;
  s.worst_case_percent = 100.0;
  s.volume_fraction = rho_phys.mean();
  s.outer_iterations = res.iterations;
  s.converged = res.converged;
  s.wall_seconds = seconds_since(t0);

  write_outputs(cfg, res.x, rho_phys, nullptr, history_rows(res.history, cfg.V), s);
  return s;
}

RunSummary run_evaluate(const RunConfig& cfg) {
  cfg.validate();
  set_num_threads(cfg.threads);
  const auto t0 = Clock::now();
  const Problem p = make_problem(cfg);
  const int n = p.grid.num_elems();

  const Eigen::VectorXd x = initial_design(cfg, n);
  const Eigen::VectorXd rho_phys = p.filter.apply(x);

  SparseSpdSystem sys(p.grid, p.load.fixed_dofs);
  const double c_ref = nominal_compliance(sys, p, rho_phys, cfg);

  InnerSolver solver(p.grid, p.load, cfg.material);
  const DefectConstraints con =
      DefectConstraints::build(p.grid, rho_phys, cfg.material, cfg.D, cfg.mean_norm);
  const InnerSolution sol = solver.solve(rho_phys, con, cfg.inner);
  const double wc = worst_case_compliance(p.load, sol);

  RunSummary s;
  s.mode = to_string(RunMode::Evaluate);
  s.nx = cfg.nx;
  s.ny = cfg.ny;
  s.reference_compliance = c_ref;
  s.worst_case_compliance = wc;
  s.worst_case_percent = 100.0 * wc / c_ref;
  s.volume_fraction = rho_phys.mean();
  s.outer_iterations = 0;
  s.converged = true;
  s.total_inner_newton = sol.newton_iters;
  s.wall_seconds = seconds_since(t0);

  std::vector<ConvergenceRow> rows(1);
  rows[0].iter = 0;
  rows[0].objective = wc;
  rows[0].worst_case_compliance = wc;
  rows[0].volume = s.volume_fraction;
  rows[0].design_change_inf = 0.0;
  rows[0].inner_newton_iters = sol.newton_iters;
  rows[0].inner_kkt_residual = sol.kkt_residual_inf;
  write_outputs(cfg, x, rho_phys, &sol.delta, rows, s);
  return s;
}

RunSummary run_robust(const RunConfig& cfg) {
  cfg.validate();
  set_num_threads(cfg.threads);
  const auto t0 = Clock::now();
  const Problem p = make_problem(cfg);
  const int n = p.grid.num_elems();
  const MaterialParams& mat = cfg.material;

  const Eigen::VectorXd x0 = initial_design(cfg, n);
  SparseSpdSystem sys(p.grid, p.load.fixed_dofs);
  InnerSolver solver(p.grid, p.load, mat);

  RunSummary s;
  s.mode = to_string(RunMode::Robust);
  s.nx = cfg.nx;
  s.ny = cfg.ny;

  InnerSolution warm;
  bool have_warm = false;

  // When starting from a stored design, score it first so the summary can
  // report the improvement over that baseline.
  if (!cfg.input_density_path.empty()) {
    const Eigen::VectorXd rho0 = p.filter.apply(x0);
    const DefectConstraints con0 =
        DefectConstraints::build(p.grid, rho0, mat, cfg.D, cfg.mean_norm);
    const InnerSolution sol0 = solver.solve(rho0, con0, cfg.inner);
    s.has_baseline = true;
    s.baseline_reference_compliance = nominal_compliance(sys, p, rho0, cfg);
    s.baseline_worst_case_compliance = worst_case_compliance(p.load, sol0);
    s.baseline_worst_case_percent =
        100.0 * s.baseline_worst_case_compliance / s.baseline_reference_compliance;
    warm = sol0;
    have_warm = true;
  }

  long total_newton = 0;
  const MmaCallback objective = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd rho_phys = p.filter.apply(x);
    const DefectConstraints con =
        DefectConstraints::build(p.grid, rho_phys, mat, cfg.D, cfg.mean_norm);
    const InnerSolution sol = solver.solve(rho_phys, con, cfg.inner, have_warm ? &warm : nullptr);
    warm = sol;
    have_warm = true;
    total_newton += sol.newton_iters;
    MmaEval ev;
    ev.value = worst_case_compliance(p.load, sol);
    ev.grad = compliance_gradient(solver, p.filter);
    ev.inner_newton_iters = sol.newton_iters;
    ev.inner_kkt_residual = sol.kkt_residual_inf;
    return ev;
  };
  const Eigen::VectorXd vol_grad = volume_gradient(p.filter, p.grid);
  const MmaCallback constraint = [&](const Eigen::VectorXd& x) {
    MmaEval ev;
    ev.value = p.filter.apply(x).mean() - cfg.V;
    ev.grad = vol_grad;
    return ev;
  };

  const Eigen::VectorXd xmin = Eigen::VectorXd::Constant(n, mat.rho_min);
  const Eigen::VectorXd xmax = Eigen::VectorXd::Ones(n);
  const MmaResult res = run_mma(objective, constraint, x0, xmin, xmax, cfg.outer);

  const Eigen::VectorXd rho_phys = p.filter.apply(res.x);
  s.reference_compliance = nominal_compliance(sys, p, rho_phys, cfg);
  s.worst_case_compliance = res.history.back().objective;
  s.worst_case_percent = 100.0 * s.worst_case_compliance / s.reference_compliance;
  s.volume_fraction = rho_phys.mean();
  s.outer_iterations = res.iterations;
  s.converged = res.converged;
  s.total_inner_newton = total_newton;
  s.median_warm_newton = median_warm_newton(res.history);
  if (s.has_baseline) {
    s.worst_case_vs_baseline_percent =
        100.0 * s.worst_case_compliance / s.baseline_worst_case_compliance;
  }
  s.wall_seconds = seconds_since(t0);

  write_outputs(cfg, res.x, rho_phys, have_warm ? &warm.delta : nullptr,
                history_rows(res.history, cfg.V), s);
  return s;
}

int run_gradcheck(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  set_num_threads(cfg.threads);
  const Problem p = make_problem(cfg);
  const int n = p.grid.num_elems();
  const MaterialParams& mat = cfg.material;

  // Solves sharp enough for central differences; pushing the tolerance much
  // further runs into the floating-point floor of the KKT residual on tiny
  // meshes, where the multipliers reach the thousands.
  InnerSettings tight = cfg.inner;
  tight.kkt_tol = std::min(tight.kkt_tol, 1e-10);

  const Eigen::VectorXd x0 = initial_design(cfg, n);
  const Eigen::VectorXd rho0 = p.filter.apply(x0);
  const DefectConstraints con0 = DefectConstraints::build(p.grid, rho0, mat, cfg.D, cfg.mean_norm);

  InnerSolver solver(p.grid, p.load, mat);
  solver.solve(rho0, con0, tight);
  const Eigen::VectorXd grad = compliance_gradient(solver, p.filter);

  std::vector<int> probes;
  {
    std::vector<int> all(n);
    for (int e = 0; e < n; ++e) all[e] = e;
    std::mt19937 gen(static_cast<unsigned long>(cfg.seed));
    std::shuffle(all.begin(), all.end(), gen);
    const int k = std::min(cfg.gradcheck_probes, n);
    probes.assign(all.begin(), all.begin() + k);
    std::sort(probes.begin(), probes.end());
  }

  InnerSolver fd_solver(p.grid, p.load, mat);
  const auto J = [&](const Eigen::VectorXd& xq) {
    const Eigen::VectorXd rho = p.filter.apply(xq);
    const DefectConstraints con =
        DefectConstraints::build(p.grid, rho, mat, cfg.D, cfg.mean_norm);
    const InnerSolution sol = fd_solver.solve(rho, con, tight);
    return worst_case_compliance(p.load, sol);
  };
  const std::vector<double> numeric = oracle::fd_gradient(J, x0, probes, cfg.gradcheck_step);

  double max_rel = 0.0;
  std::ostringstream csv;
  csv << "element,analytic,numeric,rel_error\n";
  char buf[160];
  for (size_t i = 0; i < probes.size(); ++i) {
    const double a = grad[probes[i]];
    const double nu = numeric[i];
    const double rel = std::abs(a - nu) / std::max({std::abs(a), std::abs(nu), 1e-12});
    max_rel = std::max(max_rel, rel);
    std::snprintf(buf, sizeof(buf), "%d,%.12e,%.12e,%.3e\n", probes[i], a, nu, rel);
    csv << buf;
  }
  std::snprintf(buf, sizeof(buf), "# max_rel_error = %.3e\n", max_rel);
  csv << buf;
  out << csv.str();

  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  std::ofstream file((fs::path(cfg.output_dir) / "fd_check.csv").string());
  file << csv.str();
  return max_rel <= 1e-5 ? 0 : 1;
}

int run_oracle(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  set_num_threads(cfg.threads);
  const MaterialParams& mat = cfg.material;

  struct Case {
    const char* name;
    int nx;
    double D;
  };
  const Case cases[] = {{"strip_2x1", 2, 0.04}, {"strip_3x1", 3, 0.02}, {"strip_4x1", 4, 0.01}};

  out << "instance,elements,oracle_worst,solver_worst,gap,bound,ok\n";
  bool all_ok = true;
  for (const Case& c : cases) {
    const StructuredGrid grid(c.nx, 1, static_cast<double>(c.nx), 1.0);
    const LoadCase load = cantilever_load(grid, 1.0);
    Eigen::VectorXd rho(c.nx);
    for (int e = 0; e < c.nx; ++e) {
      rho[e] = 0.6 + 0.35 * e / std::max(1, c.nx - 1);  // graded density
    }

    InnerSolver solver(grid, load, mat);
    const DefectConstraints con = DefectConstraints::build(grid, rho, mat, c.D, cfg.mean_norm);
    const InnerSolution sol = solver.solve(rho, con, cfg.inner);
    const double wc_solver = worst_case_compliance(load, sol);

    const auto inst = oracle::TinyInstance::from(grid, load, mat);
    const auto bf =
        oracle::brute_force_worst_case(inst, rho, c.D, cfg.oracle_resolution, cfg.mean_norm);

    const double gap = wc_solver - bf.compliance;
    const double bound =
        0.005 * bf.compliance + 10.0 * cfg.inner.mu_star * c.nx / grid.domain_volume();
    const bool ok = std::abs(gap) <= bound;
    all_ok = all_ok && ok;
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.12e,%.12e,%.3e,%.3e,%s\n", c.name, c.nx,
                  bf.compliance, wc_solver, gap, bound, ok ? "yes" : "no");
    out << buf;
  }
  return all_ok ? 0 : 1;
}

int run_dispatch(const RunConfig& cfg, std::ostream& out) {
  switch (cfg.mode) {
    case RunMode::Gradcheck:
      return run_gradcheck(cfg, out);
    case RunMode::Oracle:
      return run_oracle(cfg, out);
    default:
      break;
  }
  RunSummary s;
  switch (cfg.mode) {
    case RunMode::Baseline:
      s = run_baseline(cfg);
      break;
    case RunMode::Evaluate:
      s = run_evaluate(cfg);
      break;
    default:
      s = run_robust(cfg);
      break;
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s: grid %dx%d, volume fraction %.4f\n", s.mode.c_str(), s.nx,
                s.ny, s.volume_fraction);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "worst-case compliance %.6f (%.2f%% of defect-free %.6f)\n",
                s.worst_case_compliance, s.worst_case_percent, s.reference_compliance);
  out << buf;
  if (s.has_baseline) {
    std::snprintf(buf, sizeof(buf),
                  "baseline worst case %.6f (%.2f%%); this design reaches %.2f%% of it\n",
                  s.baseline_worst_case_compliance, s.baseline_worst_case_percent,
                  s.worst_case_vs_baseline_percent);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%d outer iterations (%s) in %.1f s, outputs in %s\n",
                s.outer_iterations, s.converged ? "converged" : "iteration limit",
                s.wall_seconds, cfg.output_dir.c_str());
  out << buf;
  return 0;
}

}  // namespace robusto
