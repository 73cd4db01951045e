#include "robusto/config.hpp"

#include <cctype>
#include <climits>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace robusto {
namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
  throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "' as " + want);
}

double parse_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, value, "a number");
  return x;
}

long parse_long(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, value, "an integer");
  return x;
}

int parse_int(const std::string& key, const std::string& value) {
  const long x = parse_long(key, value);
  if (x < INT_MIN || x > INT_MAX) bad_value(key, value, "an integer");
  return static_cast<int>(x);
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = lower(trim(value));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, value, "a boolean");
}

}  // namespace

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Baseline:
      return "baseline";
    case RunMode::Evaluate:
      return "evaluate";
    case RunMode::Robust:
      return "robust";
    case RunMode::Gradcheck:
      return "gradcheck";
    case RunMode::Oracle:
      return "oracle";
  }
  return "robust";
}

RunMode run_mode_from_string(const std::string& name) {
  const std::string v = lower(trim(name));
  if (v == "baseline") return RunMode::Baseline;
  if (v == "evaluate") return RunMode::Evaluate;
  if (v == "robust") return RunMode::Robust;
  if (v == "gradcheck") return RunMode::Gradcheck;
  if (v == "oracle") return RunMode::Oracle;
  throw std::invalid_argument("unknown run mode '" + name + "'");
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (lower(trim(name)) != "cantilever") {
    throw std::invalid_argument("unknown preset '" + name + "' (available: cantilever)");
  }
  cfg.preset = "cantilever";
  cfg.nx = 120;
  cfg.ny = 60;
  cfg.width = 2.0;
  cfg.height = 1.0;
  cfg.load_extent = 0.05;
  cfg.material = MaterialParams{};
  cfg.V = 0.5;
  cfg.D = 0.02;
  cfg.mean_norm = MeanNorm::Material;
  cfg.radius_elements = 2.1;
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  const std::string k = lower(trim(key));
  // [run]
  if (k == "run.mode") {
    cfg.mode = run_mode_from_string(value);
  } else if (k == "run.preset") {
    apply_preset(cfg, value);
  } else if (k == "run.seed") {
    cfg.seed = parse_long(k, value);
  } else if (k == "run.threads") {
    cfg.threads = parse_int(k, value);
  }
  // [grid]
  else if (k == "grid.nx") {
    cfg.nx = parse_int(k, value);
  } else if (k == "grid.ny") {
    cfg.ny = parse_int(k, value);
  } else if (k == "grid.width") {
    cfg.width = parse_double(k, value);
  } else if (k == "grid.height") {
    cfg.height = parse_double(k, value);
  } else if (k == "grid.load_extent") {
    cfg.load_extent = parse_double(k, value);
  }
  // [material]
  else if (k == "material.e0") {
    cfg.material.E0 = parse_double(k, value);
  } else if (k == "material.ed") {
    cfg.material.ED = parse_double(k, value);
  } else if (k == "material.nu") {
    cfg.material.nu = parse_double(k, value);
  } else if (k == "material.p") {
    cfg.material.p = parse_double(k, value);
  } else if (k == "material.rho_min") {
    cfg.material.rho_min = parse_double(k, value);
  } else if (k == "material.plane_model") {
    const std::string v = lower(trim(value));
    if (v == "strain") {
      cfg.material.plane_model = PlaneModel::Strain;
    } else if (v == "stress") {
      cfg.material.plane_model = PlaneModel::Stress;
    } else {
      bad_value(k, value, "'strain' or 'stress'");
    }
  }
  // [constraints]
  else if (k == "constraints.v") {
    cfg.V = parse_double(k, value);
  } else if (k == "constraints.d") {
    cfg.D = parse_double(k, value);
  } else if (k == "constraints.mean_norm") {
    const std::string v = lower(trim(value));
    if (v == "material") {
      cfg.mean_norm = MeanNorm::Material;
    } else if (v == "domain") {
      cfg.mean_norm = MeanNorm::Domain;
    } else {
      bad_value(k, value, "'material' or 'domain'");
    }
  }
  // [filter]
  else if (k == "filter.radius_elements") {
    cfg.radius_elements = parse_double(k, value);
  }
  // [inner]
  else if (k == "inner.mu_star") {
    cfg.inner.mu_star = parse_double(k, value);
  } else if (k == "inner.kkt_tol") {
    cfg.inner.kkt_tol = parse_double(k, value);
  } else if (k == "inner.max_newton") {
    cfg.inner.max_newton = parse_int(k, value);
  }
  // [outer]
  else if (k == "outer.max_iters") {
    cfg.outer.max_outer = parse_int(k, value);
  } else if (k == "outer.move_limit") {
    cfg.outer.move_limit = parse_double(k, value);
  } else if (k == "outer.change_tol") {
    cfg.outer.change_tol = parse_double(k, value);
  } else if (k == "outer.conservative") {
    cfg.outer.conservative = parse_bool(k, value);
  }
  // [solver]
  else if (k == "solver.kkt") {
    const std::string v = lower(trim(value));
    if (v == "schur") {
      cfg.inner.kkt_solver = KktSolver::Schur;
    } else if (v == "lu") {
      cfg.inner.kkt_solver = KktSolver::Lu;
    } else {
      bad_value(k, value, "'schur' or 'lu'");
    }
  } else if (k == "solver.state") {
    const std::string v = lower(trim(value));
    if (v == "direct") {
      cfg.state_solver = StateSolver::Direct;
    } else if (v == "cg") {
      cfg.state_solver = StateSolver::Cg;
    } else {
      bad_value(k, value, "'direct' or 'cg'");
    }
  }
  // [io]
  else if (k == "io.output_dir") {
    cfg.output_dir = trim(value);
  } else if (k == "io.input_density_path") {
    cfg.input_density_path = trim(value);
  }
  // [gradcheck]
  else if (k == "gradcheck.probes") {
    cfg.gradcheck_probes = parse_int(k, value);
  } else if (k == "gradcheck.step") {
    cfg.gradcheck_step = parse_double(k, value);
  }
  // [oracle]
  else if (k == "oracle.resolution") {
    cfg.oracle_resolution = parse_int(k, value);
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

RunConfig parse_config_text(const std::string& text, const std::string& source_name) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string preset_value;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source_name + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument(where + ": malformed section header '" + line + "'");
      }
      section = lower(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) {
        throw std::invalid_argument(where + ": empty section name");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(where + ": expected 'key = value', got '" + line + "'");
    }
    std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument(where + ": empty key");
    }
    if (key.find('.') == std::string::npos) {
      if (section.empty()) {
        throw std::invalid_argument(where + ": key '" + key + "' appears before any [section]");
      }
      key = section + "." + key;
    }
    if (key == "run.preset") {
      preset_value = value;
    } else {
      entries.emplace_back(key, value);
    }
  }

  RunConfig cfg;
  if (!preset_value.empty()) apply_preset(cfg, preset_value);
  for (const auto& [key, value] : entries) {
    try {
      apply_override(cfg, key, value);
    } catch (const std::invalid_argument& err) {
      throw std::invalid_argument(source_name + ": " + err.what());
    }
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open config file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void RunConfig::validate() const {
  std::vector<std::string> errs;
  const auto req = [&](bool ok, const std::string& msg) {
    if (!ok) errs.push_back(msg);
  };
  req(nx >= 1 && ny >= 1, "grid.nx and grid.ny must be at least 1");
  req(width > 0.0 && height > 0.0, "grid.width and grid.height must be positive");
  req(load_extent > 0.0 && load_extent <= 1.0, "grid.load_extent must lie in (0, 1]");
  try {
    material.validate();
  } catch (const std::invalid_argument& err) {
    errs.push_back(err.what());
  }
  req(V > 0.0 && V <= 1.0, "constraints.V must lie in (0, 1]");
  req(D > 0.0 && D < 0.25, "constraints.D must lie in (0, 0.25)");
  req(radius_elements > 0.0, "filter.radius_elements must be positive");
  req(inner.mu_star > 0.0 && inner.mu_star <= 1e-2, "inner.mu_star must lie in (0, 1e-2]");
  req(inner.kkt_tol >= 1e-14 && inner.kkt_tol <= 1e-4, "inner.kkt_tol must lie in [1e-14, 1e-4]");
  req(inner.max_newton >= 1, "inner.max_newton must be at least 1");
  req(outer.max_outer >= 0, "outer.max_iters must be non-negative");
  req(outer.move_limit > 0.0 && outer.move_limit <= 1.0, "outer.move_limit must lie in (0, 1]");
  req(outer.change_tol >= 0.0, "outer.change_tol must be non-negative");
  req(threads >= 1, "run.threads must be at least 1");
  req(gradcheck_probes >= 1, "gradcheck.probes must be at least 1");
  req(gradcheck_step >= 1e-8 && gradcheck_step <= 1e-4, "gradcheck.step must lie in [1e-8, 1e-4]");
  req(oracle_resolution >= 8, "oracle.resolution must be at least 8");
  if (mode == RunMode::Evaluate) {
    req(!input_density_path.empty(), "evaluate mode requires io.input_density_path");
  }
  if (!errs.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw std::invalid_argument(msg);
  }
}

}  // namespace robusto
