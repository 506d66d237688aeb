// Command-line front end: run, validate and list-experiments.
//
// Exit codes: 0 success, 1 an in-run check failed, 2 bad usage or config,
// 3 a numerical or I/O error during the run.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lclab/config.hpp"
#include "lclab/runners.hpp"

namespace {

constexpr int kExitChecksFailed = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitRunError = 3;

int list_experiments(bool verbose) {
  for (const auto kind : lclab::all_experiment_kinds()) {
    std::cout << lclab::to_string(kind) << "  " << lclab::describe(kind) << '\n';
    if (!verbose) continue;
    for (const auto& spec : lclab::config_registry()) {
      const auto it = spec.defaults.find(kind);
      if (it == spec.defaults.end()) continue;
      std::cout << "    " << spec.key << " = " << it->second << "  (" << lclab::to_string(spec.type) << ") "
                << spec.doc << '\n';
    }
  }
  return 0;
}

int validate(const std::string& path) {
  try {
    const auto cfg = lclab::parse_config(path, lclab::process_environment);
    std::cout << lclab::serialize_config(cfg);
    return 0;
  } catch (const lclab::Error& e) {
    std::cerr << "FAIL config: " << e.what() << '\n';
    return kExitBadConfig;
  }
}

struct RunFlags {
  std::string outdir;
  long long threads = 0;
  long long seed = 0;
};

int run(const std::string& path, const RunFlags& flags, const CLI::App& cmd) {
  lclab::ExperimentConfig cfg;
  try {
    cfg = lclab::parse_config(path, lclab::process_environment);
    if (cmd.count("--outdir")) cfg.set("output.dir", flags.outdir, "--outdir");
    if (cmd.count("--threads")) cfg.set("run.threads", std::to_string(flags.threads), "--threads");
    if (cmd.count("--seed")) cfg.set("run.seed", std::to_string(flags.seed), "--seed");
    lclab::validate_config(cfg);
  } catch (const lclab::Error& e) {
    std::cerr << "FAIL config: " << e.what() << '\n';
    return kExitBadConfig;
  }
  try {
    const auto outcome = lclab::run_experiment(cfg);
    lclab::write_outputs(cfg, outcome, cfg.text("output.dir"));
    for (const auto& f : outcome.failures()) std::cerr << "FAIL " << f << '\n';
    std::cout << lclab::summary_text(cfg, outcome);
    return outcome.passed() ? 0 : kExitChecksFailed;
  } catch (const std::exception& e) {
    std::cerr << "FAIL run: " << e.what() << '\n';
    return kExitRunError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Light-cone bounds for open quantum systems on lattices"};
  app.require_subcommand(1);

  std::string run_path;
  RunFlags flags;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a config file");
  run_cmd->add_option("config", run_path, "Config file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--outdir", flags.outdir, "Output directory (overrides output.dir)");
  run_cmd->add_option("--threads", flags.threads, "Worker threads (overrides run.threads)");
  run_cmd->add_option("--seed", flags.seed, "Random seed (overrides run.seed)");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Parse and validate a config, then print it resolved");
  validate_cmd->add_option("config", validate_path, "Config file")->required()->check(CLI::ExistingFile);

  bool verbose = false;
  auto* list_cmd = app.add_subcommand("list-experiments", "List experiment kinds");
  list_cmd->add_flag("--verbose,-v", verbose, "Also list every key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadConfig;
  }
  if (*run_cmd) return run(run_path, flags, *run_cmd);
  if (*validate_cmd) return validate(validate_path);
  return list_experiments(verbose);
}
