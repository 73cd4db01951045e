#pragma once

#include <string>

#include "robusto/fem.hpp"
#include "robusto/inner_worst_case.hpp"
#include "robusto/material.hpp"
#include "robusto/mma.hpp"

namespace robusto {

enum class RunMode { Baseline, Evaluate, Robust, Gradcheck, Oracle };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& name);

// Complete description of a run. Defaults reproduce the desk-scale cantilever
// study: 120x60 elements on a 2x1 domain, half the material available,
// defect softening to 75% stiffness with variance budget 0.02.
struct RunConfig {
  RunMode mode = RunMode::Robust;

  // [grid]
  int nx = 120;
  int ny = 60;
  double width = 2.0;
  double height = 1.0;
  double load_extent = 0.05;  // fraction of the right edge carrying the load

  // [material]
  MaterialParams material;

  // [constraints]
  double V = 0.5;
  double D = 0.02;
  MeanNorm mean_norm = MeanNorm::Material;

  // [filter]
  double radius_elements = 2.1;

  // [inner]
  InnerSettings inner;

  // [outer]
  MmaSettings outer;

  // [solver]
  StateSolver state_solver = StateSolver::Direct;

  // [io]
  std::string output_dir = "out";
  std::string input_density_path;

  // [run]
  std::string preset;
  long seed = 0;
  int threads = 1;

  // [gradcheck]
  int gradcheck_probes = 8;
  double gradcheck_step = 1e-6;

  // [oracle]
  int oracle_resolution = 720;

  // Collects every violated range into a single exception message.
  void validate() const;
};

// Applies a named preset ("cantilever" is the only one) on top of cfg.
void apply_preset(RunConfig& cfg, const std::string& name);

// Applies one "section.key=value" assignment; unknown keys are hard errors.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// INI-style text: [section] headers, key = value lines, # or ; comments.
// A preset named in the file is applied before the file's other keys.
RunConfig parse_config_text(const std::string& text, const std::string& source_name);
RunConfig parse_config_file(const std::string& path);

}  // namespace robusto
