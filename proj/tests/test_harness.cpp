#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "erbeam/harness.hpp"

namespace erbeam {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("erbeam_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json small_config() {
  return json::parse(R"({
    "search": {"beam_width": 8, "expansion_factor": 4, "prefix_len": 32, "step_len": 64,
               "num_steps": 2, "horizon": 128, "seed": 5},
    "oracle": {"gap": 0.05, "base_mean": 0.5, "token_std": 0.2, "token_dist": "gaussian"},
    "cost": {"gen_params": 1e9, "prm_params": 1e9, "flops_per_param_token": 2},
    "sweep": {"prefix_lens": [32, 64], "beam_widths": [8, 16],
              "strategies": ["vanilla", "early_rejection"]},
    "trials": 20
  })");
}

TEST(Config, ParsesFullDocument) {
  const ExperimentSpec e = experiment_from_json(small_config());
  EXPECT_EQ(e.search, (SearchConfig{8, 4, 32, 64, 2, 128, 5}));
  EXPECT_EQ(e.trials, 20u);
  EXPECT_EQ(e.sweep.prefix_lens, (std::vector<std::uint32_t>{32, 64}));
  EXPECT_DOUBLE_EQ(e.cost.gen_params, 1e9);
  EXPECT_FALSE(e.oracle.mapped.has_value());
}

TEST(Config, RoundTripsThroughJson) {
  json doc = small_config();
  doc["oracle"]["mapped"] = json::parse(
      R"({"g": {"kind": "piecewise_linear", "knots": [[0, 0], [0.5, 0.7], [1, 1]]}, "noise_std": 0.1})");
  const ExperimentSpec e = experiment_from_json(doc);
  const json again = to_json(e);
  EXPECT_EQ(to_json(experiment_from_json(again)), again);
}

TEST(Config, UnknownKeysAreErrors) {
  for (const char* where : {"", "search", "oracle", "cost", "sweep"}) {
    json doc = small_config();
    if (*where) doc[where]["bogus"] = 1;
    else doc["bogus"] = 1;
    EXPECT_THROW(experiment_from_json(doc), ConfigError) << where;
  }
}

TEST(Config, MissingSearchFieldIsError) {
  json doc = small_config();
  doc["search"].erase("horizon");
  EXPECT_THROW(experiment_from_json(doc), ConfigError);
}

TEST(Config, InvariantViolationsAreErrors) {
  json doc = small_config();
  doc["search"]["beam_width"] = 6;
  try {
    experiment_from_json(doc);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "N not divisible by M");
  }
  doc = small_config();
  doc["sweep"]["beam_widths"] = json::array();
  EXPECT_THROW(experiment_from_json(doc), ConfigError);
  doc = small_config();
  doc["oracle"]["token_dist"] = "cauchy";
  EXPECT_THROW(experiment_from_json(doc), ConfigError);
}

TEST(Config, MissingFile) {
  EXPECT_THROW(load_experiment("/nonexistent/erbeam.json"), ConfigNotFound);
}

TEST(Config, OverridesApply) {
  const ExperimentSpec e = apply_overrides(experiment_from_json(small_config()),
                                           RunOptions{99, 7, std::string("elsewhere"), 1, false});
  EXPECT_EQ(e.search.seed, 99u);
  EXPECT_EQ(e.trials, 7u);
  EXPECT_EQ(e.output_dir, "elsewhere");
}

// Golden schemas: header text and JSON key order are part of the contract.
TEST(Schema, CsvHeaders) {
  EXPECT_EQ(kCorrelationCsvHeader, "tau,L,pearson_emp,pearson_theory,kendall,slope,intercept,r2,n_trials");
  EXPECT_EQ(kSweepCsvHeader,
            "strategy,N,M,tau,success_rate,mean_gen_tokens,mean_total_flops,flop_ratio_vs_vanilla,n_trials");
}

std::vector<std::string> keys(const json& j) {
  std::vector<std::string> out;
  for (const auto& [k, _] : j.items()) out.push_back(k);
  return out;
}

TEST(Schema, LedgerKeys) {
  const json j = to_json(RunLedger{});
  EXPECT_EQ(keys(j), (std::vector<std::string>{
                         "strategy", "rescore_after_completion", "gen_tokens_total",
                         "gen_tokens_by_phase", "prm_calls", "prm_tokens_scored", "steps_executed",
                         "survivors_per_step", "best_path", "best_final_reward"}));
  EXPECT_EQ(keys(j["gen_tokens_by_phase"]),
            (std::vector<std::string>{"prefix_tokens", "completion_tokens"}));
}

TEST(Schema, BoundKeys) {
  EXPECT_EQ(keys(to_json(BoundReport{})),
            (std::vector<std::string>{"N", "M", "tau", "L", "gap", "sigma", "bound_raw", "bound_prob",
                                      "empirical_rate", "misrejections", "n_trials",
                                      "standard_error", "vacuous_bound", "dominated"}));
}

TEST(Schema, CorrelationRowFormat) {
  CorrelationReport r;
  r.prefix_len = 32;
  r.horizon = 512;
  r.pearson_empirical = 0.25;
  r.pearson_theoretical = 0.25;
  r.kendall_tau = 0.125;
  r.fit_slope = 1.0;
  r.fit_intercept = -0.5;
  r.fit_r2 = 0.0625;
  r.n_trials = 10000;
  EXPECT_EQ(to_csv_row(r), "32,512,0.25,0.25,0.125,1,-0.5,0.0625,10000");
}

TEST(Sweep, CrossProductSortedRows) {
  const ExperimentSpec e = experiment_from_json(small_config());
  const auto rows = run_sweep(e);
  ASSERT_EQ(rows.size(), 8u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& a = rows[i - 1];
    const auto& b = rows[i];
    EXPECT_LT(std::tuple(to_string(a.strategy), a.n, a.prefix_len),
              std::tuple(to_string(b.strategy), b.n, b.prefix_len));
  }
  for (const auto& r : rows) {
    EXPECT_GE(r.success_rate, 0.0);
    EXPECT_LE(r.success_rate, 1.0);
    EXPECT_EQ(r.n_trials, 20u);
    if (r.strategy == StrategyKind::vanilla) {
      EXPECT_EQ(r.mean_gen_tokens, double(e.search.num_steps) * r.n * e.search.step_len);
      EXPECT_EQ(r.flop_ratio_vs_vanilla, 1.0);
    } else {
      EXPECT_GE(r.flop_ratio_vs_vanilla, 1.0);
    }
  }
  // ER flops grow with tau at fixed N.
  for (const auto& a : rows)
    for (const auto& b : rows)
      if (a.strategy == StrategyKind::early_rejection && b.strategy == a.strategy && a.n == b.n &&
          a.prefix_len < b.prefix_len)
        EXPECT_LE(a.mean_total_flops, b.mean_total_flops);
}

TEST(Sweep, WorkerCountInvariant) {
  const ExperimentSpec e = experiment_from_json(small_config());
  const auto a = run_sweep(e, 1);
  const auto b = run_sweep(e, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_csv_row(a[i]), to_csv_row(b[i]));
}

TEST(Commands, SimulateWritesDeterministicLedgers) {
  ExperimentSpec e = experiment_from_json(small_config());
  const fs::path dir = scratch("simulate");
  e.output_dir = dir.string();
  std::ostringstream log;
  ASSERT_EQ(cmd_simulate(e, RunOptions{}, log), kExitOk);
  const std::string v1 = slurp(dir / "vanilla_ledger.json");
  const std::string e1 = slurp(dir / "er_ledger.json");
  ASSERT_EQ(cmd_simulate(e, RunOptions{}, log), kExitOk);
  EXPECT_EQ(slurp(dir / "vanilla_ledger.json"), v1);
  EXPECT_EQ(slurp(dir / "er_ledger.json"), e1);
  const json ledger = json::parse(e1);
  EXPECT_EQ(ledger["strategy"], "early_rejection");
  EXPECT_EQ(ledger["gen_tokens_total"], 2u * (8 * 32 + 2 * 32));
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));
}

TEST(Commands, SimulateTrace) {
  ExperimentSpec e = experiment_from_json(small_config());
  const fs::path dir = scratch("trace");
  e.output_dir = dir.string();
  std::ostringstream log;
  ASSERT_EQ(cmd_simulate(e, RunOptions{{}, {}, {}, 1, true}, log), kExitOk);
  std::ifstream in(dir / "trace.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const json rec = json::parse(line);
    EXPECT_EQ(rec["survivors"].size(), 2u);
    ++lines;
  }
  EXPECT_EQ(lines, 4);  // two strategies, two steps
}

TEST(Commands, CorrelateFullPrefixRow) {
  json doc = small_config();
  doc["sweep"]["prefix_lens"] = {32, 128};
  doc["search"]["horizon"] = 128;
  doc["trials"] = 500;
  ExperimentSpec e = experiment_from_json(doc);
  const fs::path dir = scratch("correlate");
  e.output_dir = dir.string();
  std::ostringstream log;
  ASSERT_EQ(cmd_correlate(e, RunOptions{}, log), kExitOk);
  const json rows = json::parse(slurp(dir / "correlation.json"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(rows[1]["pearson_emp"].get<double>(), 1.0, 1e-3);
  EXPECT_LT(rows[0]["pearson_theory"].get<double>(), rows[1]["pearson_theory"].get<double>());
  const std::string csv = slurp(dir / "correlation.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kCorrelationCsvHeader);
}

TEST(Commands, CorrelateMappedFit) {
  json doc = small_config();
  doc["oracle"]["mapped"] = json::parse(R"({"g": {"kind": "identity"}, "noise_std": 0.05})");
  doc["trials"] = 500;
  ExperimentSpec e = experiment_from_json(doc);
  const fs::path dir = scratch("mapped");
  e.output_dir = dir.string();
  std::ostringstream log;
  ASSERT_EQ(cmd_correlate(e, RunOptions{}, log), kExitOk);
  const json fits = json::parse(slurp(dir / "mapped_fit.json"));
  ASSERT_EQ(fits.size(), 2u);
  EXPECT_EQ(fits[0]["tau"], 32);
}

TEST(Commands, VerifyBoundNoiseless) {
  json doc = small_config();
  doc["oracle"]["token_std"] = 0.0;
  doc["trials"] = 200;
  ExperimentSpec e = experiment_from_json(doc);
  const fs::path dir = scratch("bound0");
  e.output_dir = dir.string();
  std::ostringstream log;
  EXPECT_EQ(cmd_verify_bound(e, RunOptions{}, log), kExitOk);
  const json rep = json::parse(slurp(dir / "bound.json"));
  EXPECT_EQ(rep["empirical_rate"], 0.0);
  EXPECT_EQ(rep["bound_prob"], 0.0);
}

TEST(Commands, VerifyBoundFlagsVacuous) {
  json doc = small_config();
  doc["oracle"]["gap"] = 0.0;
  doc["trials"] = 200;
  ExperimentSpec e = experiment_from_json(doc);
  const fs::path dir = scratch("vacuous");
  e.output_dir = dir.string();
  std::ostringstream log;
  EXPECT_EQ(cmd_verify_bound(e, RunOptions{}, log), kExitOk);
  EXPECT_NE(log.str().find("vacuous bound"), std::string::npos);
  EXPECT_EQ(json::parse(slurp(dir / "bound.json"))["vacuous_bound"], true);
}

TEST(Commands, PlanTau) {
  std::ostringstream out;
  EXPECT_EQ(cmd_plan_tau(0.9, 512, out), kExitOk);
  EXPECT_EQ(out.str(), "415\n");
}

// The CLI binary itself: exit codes and byte-identical reruns.
class Cli : public ::testing::Test {
 protected:
  static int run(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(ERBEAM_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

TEST_F(Cli, MissingConfigExitsTwo) {
  const fs::path dir = scratch("cli_missing");
  EXPECT_EQ(run("simulate --config /nonexistent.json", dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("config not found"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  const fs::path dir = scratch("cli_usage");
  EXPECT_EQ(run("plan-tau 1.5 100", dir / "log"), 2);
  EXPECT_EQ(run("frobnicate", dir / "log"), 2);
  EXPECT_EQ(run("simulate", dir / "log"), 2);
}

TEST_F(Cli, InvalidConfigExitsTwo) {
  const fs::path dir = scratch("cli_invalid");
  json doc = small_config();
  doc["search"]["beam_width"] = 6;
  std::ofstream(dir / "cfg.json") << doc.dump();
  EXPECT_EQ(run("simulate --config " + (dir / "cfg.json").string(), dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("N not divisible by M"), std::string::npos);
}

TEST_F(Cli, PlanTauPrints) {
  const fs::path dir = scratch("cli_plan");
  EXPECT_EQ(run("plan-tau 0.8 100", dir / "log"), 0);
  EXPECT_EQ(slurp(dir / "log"), "64\n");
}

TEST_F(Cli, SimulateTwiceIsByteIdentical) {
  const fs::path dir = scratch("cli_sim");
  std::ofstream(dir / "cfg.json") << small_config().dump();
  const std::string base = "simulate --config " + (dir / "cfg.json").string() + " --out ";
  ASSERT_EQ(run(base + (dir / "a").string(), dir / "log"), 0);
  ASSERT_EQ(run(base + (dir / "b").string(), dir / "log"), 0);
  for (const char* f : {"vanilla_ledger.json", "er_ledger.json", "summary.txt"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

}  // namespace
}  // namespace erbeam
