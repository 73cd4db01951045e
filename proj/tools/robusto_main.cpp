#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "robusto/config.hpp"
#include "robusto/run.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string preset;
  std::string out_dir;
  int threads = 0;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "INI-style configuration file");
  sub->add_option("--preset", args.preset, "named parameter preset (cantilever)");
  sub->add_option("--out", args.out_dir, "output directory");
  sub->add_option("--threads", args.threads, "worker threads for element loops");
  sub->add_option("overrides", args.overrides, "section.key=value assignments");
}

robusto::RunConfig build_config(const CommonArgs& args, robusto::RunMode mode) {
  robusto::RunConfig cfg;
  if (!args.config_path.empty()) {
    cfg = robusto::parse_config_file(args.config_path);
  }
  if (!args.preset.empty()) {
    robusto::apply_preset(cfg, args.preset);
  }
  for (const std::string& ov : args.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("override '" + ov + "' is not of the form section.key=value");
    }
    robusto::apply_override(cfg, ov.substr(0, eq), ov.substr(eq + 1));
  }
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.threads > 0) cfg.threads = args.threads;
  cfg.mode = mode;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"worst-case-defect-aware topology optimization"};
  app.require_subcommand(1);

  struct SubDef {
    const char* name;
    const char* help;
    robusto::RunMode mode;
  };
  const SubDef defs[] = {
      {"baseline", "nominal compliance minimization (no defects)", robusto::RunMode::Baseline},
      {"evaluate", "worst-case evaluation of a stored design", robusto::RunMode::Evaluate},
      {"robust", "worst-case-aware optimization", robusto::RunMode::Robust},
      {"gradcheck", "adjoint gradient vs finite differences", robusto::RunMode::Gradcheck},
      {"oracle", "solver vs brute force on tiny instances", robusto::RunMode::Oracle},
  };

  CommonArgs args[std::size(defs)];
  CLI::App* subs[std::size(defs)];
  for (size_t i = 0; i < std::size(defs); ++i) {
    subs[i] = app.add_subcommand(defs[i].name, defs[i].help);
    add_common(subs[i], args[i]);
  }

  CLI11_PARSE(app, argc, argv);

  size_t chosen = 0;
  for (size_t i = 0; i < std::size(defs); ++i) {
    if (subs[i]->parsed()) chosen = i;
  }

  try {
    const robusto::RunConfig cfg = build_config(args[chosen], defs[chosen].mode);
    return robusto::run_dispatch(cfg, std::cout);
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}
