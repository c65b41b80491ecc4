// Command-line driver: run one experiment or compare several.

#include "conformal/cli/runner.hpp"

#include <CLI11.hpp>

using namespace conformal;
using namespace conformal::cli;

namespace {

int run_command(const std::string& config_path, const RunOptions& opts) {
  const RunConfig cfg = load_config(config_path);
  if (cfg.sweep) {
    const auto rows = alpha_sweep(cfg, opts);
    std::cout << sweep_csv(rows);
    return ExitOk;
  }
  const RunResult r = execute(cfg, opts);
  if (!opts.quiet) {
    std::cout << summary_json(r).dump(2) << '\n';
    if (!r.message.empty()) std::cerr << cfg.name << ": " << to_string(r.status) << ": " << r.message << '\n';
  }
  return exit_code_for(r.status);
}

int compare_command(const std::vector<std::string>& inputs, bool from_artifacts, const RunOptions& opts) {
  std::vector<CompareRow> rows;
  if (from_artifacts) {
    std::vector<std::filesystem::path> dirs(inputs.begin(), inputs.end());
    rows = compare_from_artifacts(dirs);
    if (opts.output_dir) {
      std::filesystem::create_directories(*opts.output_dir);
      std::ofstream(*opts.output_dir / "comparison.csv") << compare_csv(rows);
    }
  } else {
    std::vector<RunConfig> configs;
    for (const auto& p : inputs) configs.push_back(load_config(p));
    rows = compare(configs, opts);
  }
  std::cout << compare_csv(rows);
  return ExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nearly conformal mesh deformations for shape optimisation"};
  app.require_subcommand(1);
  RunOptions opts;
  std::string output_dir;
  int snapshot_every = -1;
  app.add_option("--output-dir", output_dir, "Directory for run artifacts");
  app.add_option("--snapshot-every", snapshot_every, "Write a VTK snapshot every N iterations")->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", opts.quiet, "Suppress progress output");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one configuration (or its alpha sweep)");
  run->fallthrough();
  run->add_option("config", config_path, "TOML configuration")->required();

  std::vector<std::string> inputs;
  bool from_artifacts = false;
  auto* cmp = app.add_subcommand("compare", "Compare runs that share a problem and mesh");
  cmp->fallthrough();
  cmp->add_option("inputs", inputs, "TOML configurations, or run directories with --from-artifacts")->required();
  cmp->add_flag("--from-artifacts", from_artifacts, "Read summary.json from existing run directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ExitOk : ExitUsage;
  }
  if (!output_dir.empty()) opts.output_dir = output_dir;
  if (snapshot_every >= 0) opts.snapshot_every = snapshot_every;

  try {
    if (*run) return run_command(config_path, opts);
    return compare_command(inputs, from_artifacts, opts);
  } catch (...) {
    return exit_code_for_exception(std::cerr);
  }
}
