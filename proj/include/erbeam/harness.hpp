#pragma once

// Experiment driver behind the `erbeam` command line: config ingestion,
// sweeps, coupled comparisons, bound verification and correlation studies.
// Every command writes its artifacts into an output directory and returns a
// process exit code (0 success, 1 internal failure, 2 usage/config error).

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "erbeam/analysis.hpp"
#include "erbeam/core.hpp"
#include "erbeam/io.hpp"
#include "erbeam/oracle.hpp"
#include "erbeam/parallel.hpp"
#include "erbeam/search.hpp"

namespace erbeam {

namespace fs = std::filesystem;

class ConfigNotFound : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

struct SweepAxes {
  std::vector<std::uint32_t> prefix_lens{32, 64};
  std::vector<std::uint32_t> beam_widths{8, 16};
  std::vector<StrategyKind> strategies{StrategyKind::vanilla, StrategyKind::early_rejection};
};

struct ExperimentSpec {
  SearchConfig search;
  OracleSpec oracle;
  CostModel cost;
  SweepAxes sweep;
  bool rescore_after_completion = false;
  std::uint64_t trials = 1000;
  std::string output_dir = "out";
};

inline json to_json(const ExperimentSpec& e) {
  json strategies = json::array();
  for (auto k : e.sweep.strategies) strategies.push_back(to_string(k));
  return json{{"search", to_json(e.search)},
              {"oracle", to_json(e.oracle)},
              {"cost", to_json(e.cost)},
              {"sweep",
               {{"prefix_lens", e.sweep.prefix_lens},
                {"beam_widths", e.sweep.beam_widths},
                {"strategies", strategies},
                {"rescore_after_completion", e.rescore_after_completion}}},
              {"trials", e.trials},
              {"output_dir", e.output_dir}};
}

inline ExperimentSpec experiment_from_json(const json& j) {
  detail::reject_unknown_keys(j, "config", {"search", "oracle", "cost", "sweep", "trials", "output_dir"});
  ExperimentSpec e;
  if (!j.contains("search")) throw ConfigError("missing key 'search' in config");
  e.search = validate_config(search_config_from_json(j.at("search")));
  if (j.contains("oracle")) e.oracle = oracle_spec_from_json(j.at("oracle"));
  if (j.contains("cost")) e.cost = cost_model_from_json(j.at("cost"));
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    detail::reject_unknown_keys(s, "sweep", {"prefix_lens", "beam_widths", "strategies",
                                             "rescore_after_completion"});
    e.sweep.prefix_lens = detail::get_or(s, "prefix_lens", e.sweep.prefix_lens, "sweep");
    e.sweep.beam_widths = detail::get_or(s, "beam_widths", e.sweep.beam_widths, "sweep");
    if (s.contains("strategies")) {
      e.sweep.strategies.clear();
      for (const auto& name : detail::require<std::vector<std::string>>(s, "strategies", "sweep"))
        e.sweep.strategies.push_back(parse_strategy(name));
    }
    e.rescore_after_completion = detail::get_or(s, "rescore_after_completion", false, "sweep");
  }
  if (e.sweep.prefix_lens.empty() || e.sweep.beam_widths.empty() || e.sweep.strategies.empty())
    throw ConfigError("sweep axes must be non-empty");
  e.trials = detail::get_or<std::uint64_t>(j, "trials", e.trials, "config");
  if (e.trials == 0) throw ConfigError("trials must be at least 1");
  e.output_dir = detail::get_or<std::string>(j, "output_dir", e.output_dir, "config");
  return e;
}

inline ExperimentSpec load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigNotFound("config not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return experiment_from_json(j);
}

// Command-line overrides applied on top of the config document.
struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> trials;
  std::optional<std::string> out;
  unsigned workers = 1;
  bool trace = false;
};

inline ExperimentSpec apply_overrides(ExperimentSpec e, const RunOptions& opt) {
  if (opt.seed) e.search.seed = *opt.seed;
  if (opt.trials) {
    if (*opt.trials == 0) throw ConfigError("trials must be at least 1");
    e.trials = *opt.trials;
  }
  if (opt.out) e.output_dir = *opt.out;
  return e;
}

struct SweepRow {
  StrategyKind strategy = StrategyKind::vanilla;
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::uint32_t prefix_len = 0;
  double success_rate = 0.0;
  double mean_gen_tokens = 0.0;
  double mean_total_flops = 0.0;
  double flop_ratio_vs_vanilla = 1.0;
  std::uint64_t n_trials = 0;
};

inline constexpr std::string_view kSweepCsvNote =
    "# success_rate: fraction of trials whose returned path equals the exhaustive-completion "
    "argmax on the same keyed stream (oracle-relative, not task accuracy)";
inline constexpr std::string_view kSweepCsvHeader =
    "strategy,N,M,tau,success_rate,mean_gen_tokens,mean_total_flops,flop_ratio_vs_vanilla,n_trials";

inline std::string to_csv_row(const SweepRow& r) {
  return std::string(to_string(r.strategy)) + ',' + std::to_string(r.n) + ',' +
         std::to_string(r.m) + ',' + std::to_string(r.prefix_len) + ',' +
         format_double(r.success_rate) + ',' + format_double(r.mean_gen_tokens) + ',' +
         format_double(r.mean_total_flops) + ',' + format_double(r.flop_ratio_vs_vanilla) + ',' +
         std::to_string(r.n_trials);
}

// Runs the cross-product of the sweep axes. Trial t of cell (N, tau) uses
// the seed derived from (base seed, N, tau, t), so cells are independent of
// axis order and both strategies of a cell share their streams.
inline std::vector<SweepRow> run_sweep(const ExperimentSpec& spec, unsigned workers = 1) {
  std::vector<SweepRow> rows;
  for (std::uint32_t n : spec.sweep.beam_widths) {
    for (std::uint32_t tau : spec.sweep.prefix_lens) {
      SearchConfig cfg = spec.search;
      cfg.beam_width = n;
      cfg.prefix_len = tau;
      validate_config(cfg);
      const BeamPopulation pop = spec.oracle.population(n);

      struct TrialOutcome {
        bool vanilla_hit = false;
        bool er_hit = false;
        std::uint64_t vanilla_tokens = 0;
        std::uint64_t er_tokens = 0;
        double vanilla_flops = 0.0;
        double er_flops = 0.0;
      };
      const auto outcomes = parallel_map(spec.trials, workers, [&](std::size_t t) {
        SearchConfig trial_cfg = cfg;
        trial_cfg.seed = derive_seed(spec.search.seed, {n, tau, t});
        const auto runs = coupled_run(trial_cfg, pop, spec.rescore_after_completion);
        const ExhaustiveBest best = exhaustive_best(trial_cfg, pop);
        return TrialOutcome{runs.vanilla.best_path == best.path,
                            runs.early_rejection.best_path == best.path,
                            runs.vanilla.gen_tokens_total(),
                            runs.early_rejection.gen_tokens_total(),
                            run_flops(runs.vanilla, spec.cost).total,
                            run_flops(runs.early_rejection, spec.cost).total};
      });

      double hits[2] = {0, 0}, tokens[2] = {0, 0}, flops[2] = {0, 0};
      for (const auto& o : outcomes) {
        hits[0] += o.vanilla_hit;
        hits[1] += o.er_hit;
        tokens[0] += static_cast<double>(o.vanilla_tokens);
        tokens[1] += static_cast<double>(o.er_tokens);
        flops[0] += o.vanilla_flops;
        flops[1] += o.er_flops;
      }
      const double trials = static_cast<double>(spec.trials);
      for (StrategyKind kind : spec.sweep.strategies) {
        const int k = kind == StrategyKind::vanilla ? 0 : 1;
        SweepRow row;
        row.strategy = kind;
        row.n = n;
        row.m = cfg.expansion_factor;
        row.prefix_len = tau;
        row.success_rate = hits[k] / trials;
        row.mean_gen_tokens = tokens[k] / trials;
        row.mean_total_flops = flops[k] / trials;
        row.flop_ratio_vs_vanilla = flops[0] / flops[k];
        row.n_trials = spec.trials;
        rows.push_back(row);
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tuple(to_string(a.strategy), a.n, a.prefix_len) <
           std::tuple(to_string(b.strategy), b.n, b.prefix_len);
  });
  return rows;
}

inline std::vector<CorrelationReport> run_correlation(const ExperimentSpec& spec,
                                                      unsigned workers = 1) {
  std::vector<std::uint32_t> taus = spec.sweep.prefix_lens;
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  std::vector<CorrelationReport> rows;
  for (std::uint32_t tau : taus)
    rows.push_back(correlation_study(spec.oracle.base_model(), tau, spec.search.horizon,
                                     spec.trials, spec.search.seed, workers));
  return rows;
}

// Linear fit of the mapped final reward on the normalized partial reward,
// one entry per prefix length.
inline json run_mapped_fit(const ExperimentSpec& spec, unsigned workers = 1) {
  json out = json::array();
  if (!spec.oracle.mapped) return out;
  const MonotoneNoiseModel& mapped = *spec.oracle.mapped;
  const BeamPopulation pop{{spec.oracle.base_model()}, 0.0};
  std::vector<std::uint32_t> taus = spec.sweep.prefix_lens;
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  for (std::uint32_t tau : taus) {
    const auto pairs = parallel_map(spec.trials, workers, [&](std::size_t t) {
      const KeyedStream stream(derive_seed(spec.search.seed, {tau, t, 1}));
      const Path root{0};
      const double p = std::clamp(token_sums<1>(pop, root, stream, {tau})[0] / tau, 0.0, 1.0);
      return std::pair{p, final_reward_mapped(mapped, p, stream, root)};
    });
    std::vector<double> xs, ys;
    for (const auto& [p, f] : pairs) {
      xs.push_back(p);
      ys.push_back(f);
    }
    const LinearFit fit = linear_fit(xs, ys);
    out.push_back(json{{"tau", tau}, {"slope", fit.slope}, {"intercept", fit.intercept},
                       {"r2", fit.r2}, {"n_trials", spec.trials}});
  }
  return out;
}

namespace detail {

inline void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline fs::path prepare_output(const ExperimentSpec& spec) {
  fs::path dir(spec.output_dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace detail

inline int cmd_simulate(const ExperimentSpec& spec, const RunOptions& opt, std::ostream& log) {
  const BeamPopulation pop = spec.oracle.population(spec.search.beam_width);
  const CoupledLedgers runs = coupled_run(spec.search, pop, spec.rescore_after_completion);
  const fs::path dir = detail::prepare_output(spec);
  detail::write_file(dir / "vanilla_ledger.json", to_json(runs.vanilla).dump(2) + "\n");
  detail::write_file(dir / "er_ledger.json", to_json(runs.early_rejection).dump(2) + "\n");
  if (opt.trace)
    detail::write_file(dir / "trace.jsonl",
                       survivor_trace(runs.vanilla) + survivor_trace(runs.early_rejection));

  const FlopReport fv = run_flops(runs.vanilla, spec.cost);
  const FlopReport fe = run_flops(runs.early_rejection, spec.cost);
  std::ostringstream s;
  s << "config: N=" << spec.search.beam_width << " M=" << spec.search.expansion_factor
    << " tau=" << spec.search.prefix_len << " s=" << spec.search.step_len
    << " K=" << spec.search.num_steps << " seed=" << spec.search.seed
    << " partial_scale=" << to_string(spec.oracle.partial_scale) << "\n";
  for (const auto* l : {&runs.vanilla, &runs.early_rejection}) {
    const FlopReport& f = l == &runs.vanilla ? fv : fe;
    s << to_string(l->strategy.kind) << ": gen_tokens=" << l->gen_tokens_total()
      << " prm_calls=" << l->prm_calls << " prm_tokens=" << l->prm_tokens_scored
      << " total_flops=" << format_double(f.total)
      << " best_reward=" << format_double(l->best_final_reward) << "\n";
  }
  s << "gen_flop_ratio=" << format_double(fv.gen_flops / fe.gen_flops)
    << " total_flop_ratio=" << format_double(fv.total / fe.total)
    << " same_best_path=" << (runs.vanilla.best_path == runs.early_rejection.best_path ? "yes" : "no")
    << "\n";
  detail::write_file(dir / "summary.txt", s.str());
  log << s.str();
  return kExitOk;
}

inline int cmd_sweep(const ExperimentSpec& spec, const RunOptions& opt, std::ostream& log) {
  const auto rows = run_sweep(spec, opt.workers);
  std::string csv = std::string(kSweepCsvNote) + "\n" + std::string(kSweepCsvHeader) + "\n";
  for (const auto& r : rows) csv += to_csv_row(r) + "\n";
  const fs::path dir = detail::prepare_output(spec);
  detail::write_file(dir / "sweep.csv", csv);
  log << "wrote " << rows.size() << " rows to " << (dir / "sweep.csv").string() << "\n";
  return kExitOk;
}

inline int cmd_correlate(const ExperimentSpec& spec, const RunOptions& opt, std::ostream& log) {
  const auto rows = run_correlation(spec, opt.workers);
  std::string csv = std::string(kCorrelationCsvHeader) + "\n";
  json reports = json::array();
  for (const auto& r : rows) {
    csv += to_csv_row(r) + "\n";
    reports.push_back(to_json(r));
  }
  const fs::path dir = detail::prepare_output(spec);
  detail::write_file(dir / "correlation.csv", csv);
  detail::write_file(dir / "correlation.json", reports.dump(2) + "\n");
  if (spec.oracle.mapped)
    detail::write_file(dir / "mapped_fit.json", run_mapped_fit(spec, opt.workers).dump(2) + "\n");
  log << csv;
  return kExitOk;
}

// Exit 0 iff the empirical rate is within three standard errors of the bound.
inline int cmd_verify_bound(const ExperimentSpec& spec, const RunOptions& opt, std::ostream& log) {
  const BeamPopulation pop = spec.oracle.population(spec.search.beam_width);
  const BoundReport rep = verify_bound(spec.search, pop, spec.trials, opt.workers);
  const fs::path dir = detail::prepare_output(spec);
  detail::write_file(dir / "bound.json", to_json(rep).dump(2) + "\n");
  log << "empirical_rate=" << format_double(rep.empirical_rate)
      << " bound_prob=" << format_double(rep.bound_prob)
      << " se=" << format_double(rep.standard_error);
  if (rep.vacuous()) log << " (vacuous bound)";
  log << (rep.dominated() ? " dominated\n" : " VIOLATED\n");
  return rep.dominated() ? kExitOk : kExitFailure;
}

inline int cmd_plan_tau(double target, std::uint32_t horizon, std::ostream& out) {
  out << min_tau_for_rho(target, horizon) << "\n";
  return kExitOk;
}

}  // namespace erbeam
