// erbeam: command-line driver for the early-rejection beam search simulator.
//
//   erbeam simulate     --config cfg.json [--out dir] [--seed n] [--trace]
//   erbeam sweep        --config cfg.json [--out dir] [--trials n] [--workers n]
//   erbeam correlate    --config cfg.json [--out dir] [--trials n] [--workers n]
//   erbeam verify-bound --config cfg.json [--out dir] [--trials n] [--workers n]
//   erbeam plan-tau <rho> <L>
//
// Exit status: 0 success, 1 internal failure (or bound violated), 2 usage or
// config error.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "erbeam/harness.hpp"

int main(int argc, char** argv) {
  using namespace erbeam;

  CLI::App app{"Simulator for PRM-guided beam search with early rejection"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> trials;
  std::optional<std::string> out;
  unsigned workers = 1;
  bool trace = false;

  app.add_option("--config", config_path, "JSON experiment config");
  app.add_option("--out", out, "Output directory (overrides output_dir)");
  app.add_option("--seed", seed, "Base seed (overrides search.seed)");
  app.add_option("--trials", trials, "Monte Carlo trials (overrides trials)");
  app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "One coupled vanilla / early-rejection run");
  simulate->add_flag("--trace", trace, "Also dump per-step survivor records (trace.jsonl)");
  auto* sweep = app.add_subcommand("sweep", "Cross-product sweep over N, tau and strategy");
  auto* correlate = app.add_subcommand("correlate", "Partial/final reward correlation vs tau");
  auto* verify = app.add_subcommand("verify-bound", "Monte Carlo check of the mis-rejection bound");
  auto* plan = app.add_subcommand("plan-tau", "Smallest tau reaching a target correlation");
  double rho = 0.0;
  std::uint32_t horizon = 0;
  plan->add_option("rho", rho, "Target correlation in (0, 1]")->required();
  plan->add_option("L", horizon, "Horizon length in tokens")->required()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (plan->parsed()) {
      if (!(rho > 0.0 && rho <= 1.0)) {
        std::cerr << "error: rho must lie in (0, 1]\n";
        return kExitUsage;
      }
      return cmd_plan_tau(rho, horizon, std::cout);
    }
    if (config_path.empty()) {
      std::cerr << "error: --config is required\n";
      return kExitUsage;
    }
    const RunOptions opt{seed, trials, out, workers, trace};
    const ExperimentSpec spec = apply_overrides(load_experiment(config_path), opt);
    if (simulate->parsed()) return cmd_simulate(spec, opt, std::cout);
    if (sweep->parsed()) return cmd_sweep(spec, opt, std::cout);
    if (correlate->parsed()) return cmd_correlate(spec, opt, std::cout);
    if (verify->parsed()) return cmd_verify_bound(spec, opt, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
