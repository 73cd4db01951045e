#pragma once

#include <iosfwd>
#include <string>

#include "robusto/config.hpp"

namespace robusto {

struct RunSummary {
  std::string mode;
  int nx = 0, ny = 0;
  double reference_compliance = 0.0;   // final design, defect-free solve
  double worst_case_compliance = 0.0;  // final design under worst-case defects
  double worst_case_percent = 0.0;     // 100 * worst_case / reference
  double volume_fraction = 0.0;
  int outer_iterations = 0;
  bool converged = false;
  long total_inner_newton = 0;
  double median_warm_newton = 0.0;  // median inner Newton count, outer iters >= 10
  double wall_seconds = 0.0;

  // Filled when a robust run was given a starting design to compare against.
  bool has_baseline = false;
  double baseline_reference_compliance = 0.0;
  double baseline_worst_case_compliance = 0.0;
  double baseline_worst_case_percent = 0.0;
  double worst_case_vs_baseline_percent = 0.0;
};

void write_summary_json(const std::string& path, const RunSummary& summary, const RunConfig& cfg);

// Nominal compliance minimization at the halfway defect level everywhere.
RunSummary run_baseline(const RunConfig& cfg);

// Worst-case evaluation of a stored design (no optimization).
RunSummary run_evaluate(const RunConfig& cfg);

// Full worst-case-aware optimization; warm-starts each inner solve from the
// previous outer iteration.
RunSummary run_robust(const RunConfig& cfg);

// Adjoint gradient vs central differences on seeded probe elements; prints a
// CSV table and returns 0 when the worst relative error is below 1e-5.
int run_gradcheck(const RunConfig& cfg, std::ostream& out);

// Brute-force worst-case comparison on built-in tiny instances; prints a CSV
// table and returns 0 when every solver value sits within tolerance.
int run_oracle(const RunConfig& cfg, std::ostream& out);

// Dispatch on cfg.mode; returns a process exit code.
int run_dispatch(const RunConfig& cfg, std::ostream& out);

}  // namespace robusto
