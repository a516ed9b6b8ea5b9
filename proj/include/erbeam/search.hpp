#pragma once

// PRM-guided beam search over the synthetic oracles, in two flavours:
//
//   vanilla          every beam generates the full step of s tokens, the PRM
//                    scores all N completed steps, the top N/M survive.
//   early_rejection  every beam generates only the first tau tokens, the PRM
//                    scores those prefixes, the top N/M survive and only they
//                    complete the remaining s - tau tokens.
//
// Survivors spawn M children each so that N beams are active again. Beam
// identity is the path of child indices, and all token scores come from a
// KeyedStream, so a node expanded by both strategies sees the same scores.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "erbeam/core.hpp"
#include "erbeam/oracle.hpp"

namespace erbeam {

enum class StrategyKind { vanilla, early_rejection };

inline std::string_view to_string(StrategyKind k) {
  return k == StrategyKind::vanilla ? "vanilla" : "early_rejection";
}

inline StrategyKind parse_strategy(std::string_view name) {
  if (name == "vanilla") return StrategyKind::vanilla;
  if (name == "early_rejection" || name == "er") return StrategyKind::early_rejection;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

struct StrategySpec {
  StrategyKind kind = StrategyKind::vanilla;
  // ER only: score survivors again once their step is complete.
  bool rescore_after_completion = false;

  static constexpr StrategySpec vanilla() { return {StrategyKind::vanilla, false}; }
  static constexpr StrategySpec early_rejection(bool rescore = false) {
    return {StrategyKind::early_rejection, rescore};
  }
};

struct RunLedger {
  StrategySpec strategy;
  std::uint64_t prefix_tokens = 0;      // first tau tokens of every generated step
  std::uint64_t completion_tokens = 0;  // tokens tau..s-1
  std::uint64_t prm_calls = 0;
  std::uint64_t prm_tokens_scored = 0;
  std::uint32_t steps_executed = 0;
  std::vector<std::vector<Path>> survivors_per_step;
  Path best_path;
  double best_final_reward = -std::numeric_limits<double>::infinity();

  [[nodiscard]] std::uint64_t gen_tokens_total() const { return prefix_tokens + completion_tokens; }

  friend bool operator==(const RunLedger& a, const RunLedger& b) {
    return a.strategy.kind == b.strategy.kind &&
           a.strategy.rescore_after_completion == b.strategy.rescore_after_completion &&
           a.prefix_tokens == b.prefix_tokens && a.completion_tokens == b.completion_tokens &&
           a.prm_calls == b.prm_calls && a.prm_tokens_scored == b.prm_tokens_scored &&
           a.steps_executed == b.steps_executed && a.survivors_per_step == b.survivors_per_step &&
           a.best_path == b.best_path && a.best_final_reward == b.best_final_reward;
  }
};

struct Selection {
  std::vector<std::size_t> indices;  // ascending
  double threshold = 0.0;            // k-th largest score
};

// Keeps the k highest scores. Equal scores are resolved in favour of the
// lower index; callers keep beams sorted by path so that this is the
// ascending-path rule.
inline Selection select_top(std::span<const double> scores, std::size_t k) {
  if (scores.empty()) throw std::invalid_argument("select_top: empty score list");
  if (k == 0 || k > scores.size())
    throw std::invalid_argument("select_top: k must be in [1, |scores|]");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(),
                   better);
  Selection sel;
  sel.threshold = scores[order[k - 1]];
  sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(sel.indices.begin(), sel.indices.end());
  return sel;
}

struct SearchState {
  std::uint32_t step = 0;
  std::vector<BeamNode> beams;    // active, sorted by path
  std::vector<BeamNode> retired;  // every node that finished or was rejected
};

inline SearchState initial_state(const SearchConfig& cfg) {
  SearchState state;
  state.beams.reserve(cfg.beam_width);
  for (std::uint32_t i = 0; i < cfg.beam_width; ++i) state.beams.push_back(BeamNode{Path{i}});
  return state;
}

inline Path child_path(const Path& parent, std::uint32_t child) {
  Path p = parent;
  p.push_back(child);
  return p;
}

namespace detail {

inline void check_population(const SearchConfig& cfg, const BeamPopulation& pop) {
  if (pop.size() != cfg.beam_width)
    throw ConfigError("population size does not match beam width");
}

// Generate, score and select for one step. Returns the survivors (completed
// nodes); everything else is moved to state.retired.
inline std::vector<BeamNode> generate_and_select(SearchState& state, const SearchConfig& cfg,
                                                 const BeamPopulation& pop,
                                                 const KeyedStream& stream, RunLedger& ledger,
                                                 const StrategySpec& spec) {
  const std::size_t n = state.beams.size();
  if (n != cfg.beam_width) throw std::logic_error("step requires exactly N active beams");
  const std::uint32_t tau = cfg.prefix_len;
  const std::uint32_t s = cfg.step_len;
  const std::size_t keep = cfg.keep_count();

  std::vector<double> scores(n);
  if (spec.kind == StrategyKind::vanilla) {
    for (std::size_t i = 0; i < n; ++i) {
      BeamNode& b = state.beams[i];
      const auto [partial, full] = token_sums<2>(pop, b.path, stream, {tau, s});
      b.tokens_generated = s;
      b.record_partial(partial, tau);
      b.record_final(full, s);
      scores[i] = full;
    }
    ledger.prefix_tokens += std::uint64_t{n} * tau;
    ledger.completion_tokens += std::uint64_t{n} * (s - tau);
    ledger.prm_calls += n;
    ledger.prm_tokens_scored += std::uint64_t{n} * s;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      BeamNode& b = state.beams[i];
      b.tokens_generated = tau;
      const double partial = token_sums<1>(pop, b.path, stream, {tau})[0];
      b.record_partial(partial, tau);
      scores[i] = partial;
    }
    ledger.prefix_tokens += std::uint64_t{n} * tau;
    ledger.prm_calls += n;
    ledger.prm_tokens_scored += std::uint64_t{n} * tau;
  }

  const Selection sel = select_top(scores, keep);
  std::vector<bool> kept(n, false);
  for (std::size_t i : sel.indices) kept[i] = true;

  std::vector<BeamNode> survivors;
  survivors.reserve(keep);
  for (std::size_t i = 0; i < n; ++i) {
    BeamNode& b = state.beams[i];
    if (!kept[i]) {
      b.retire(spec.kind == StrategyKind::vanilla ? BeamStatus::completed
                                                  : BeamStatus::rejected_early);
      state.retired.push_back(std::move(b));
      continue;
    }
    if (spec.kind == StrategyKind::early_rejection) {
      b.tokens_generated = s;
      ledger.completion_tokens += s - tau;
      if (spec.rescore_after_completion) {
        b.record_final(token_sums<1>(pop, b.path, stream, {s})[0], s);
        ledger.prm_calls += 1;
        ledger.prm_tokens_scored += s;
      }
    }
    b.retire(BeamStatus::completed);
    survivors.push_back(std::move(b));
  }
  state.beams.clear();

  std::vector<Path> kept_paths;
  kept_paths.reserve(survivors.size());
  for (const auto& b : survivors) kept_paths.push_back(b.path);
  ledger.survivors_per_step.push_back(std::move(kept_paths));
  ledger.steps_executed += 1;
  state.step += 1;
  return survivors;
}

inline void expand(SearchState& state, std::vector<BeamNode> survivors, std::uint32_t fanout) {
  state.beams.reserve(survivors.size() * fanout);
  for (auto& parent : survivors) {
    for (std::uint32_t c = 0; c < fanout; ++c) state.beams.push_back(BeamNode{child_path(parent.path, c)});
    state.retired.push_back(std::move(parent));
  }
}

}  // namespace detail

// One full step of conventional PRM-guided beam search, ending with N
// active beams.
inline SearchState vanilla_step(SearchState state, const SearchConfig& cfg,
                                const BeamPopulation& pop, const KeyedStream& stream,
                                RunLedger& ledger) {
  auto survivors = detail::generate_and_select(state, cfg, pop, stream, ledger, StrategySpec::vanilla());
  detail::expand(state, std::move(survivors), cfg.expansion_factor);
  return state;
}

// One full step of beam search with early rejection, ending with N active
// beams.
inline SearchState er_step(SearchState state, const SearchConfig& cfg, const BeamPopulation& pop,
                           const KeyedStream& stream, RunLedger& ledger, bool rescore = false) {
  auto survivors = detail::generate_and_select(state, cfg, pop, stream, ledger,
                                               StrategySpec::early_rejection(rescore));
  detail::expand(state, std::move(survivors), cfg.expansion_factor);
  return state;
}

// Score of a whole sequence: all s tokens of every step along the path.
inline double sequence_reward(const BeamPopulation& pop, const Path& path, std::uint32_t step_len,
                              const KeyedStream& stream) {
  double total = 0.0;
  for (std::size_t depth = 1; depth <= path.size(); ++depth)
    total += token_sums<1>(pop, std::span(path.data(), depth), stream, {step_len})[0];
  return total;
}

// Runs num_steps steps. The last step is not expanded; its survivors are
// scored once as full sequences and the best is returned. That terminal
// scoring is charged to the ledger.
inline RunLedger run_search(const SearchConfig& config, const BeamPopulation& pop,
                            const StrategySpec& spec) {
  const SearchConfig cfg = validate_config(config);
  detail::check_population(cfg, pop);
  const KeyedStream stream(cfg.seed);

  RunLedger ledger;
  ledger.strategy = spec;
  SearchState state = initial_state(cfg);
  std::vector<BeamNode> survivors;
  for (std::uint32_t k = 0; k < cfg.num_steps; ++k) {
    survivors = detail::generate_and_select(state, cfg, pop, stream, ledger, spec);
    if (k + 1 < cfg.num_steps) detail::expand(state, std::move(survivors), cfg.expansion_factor);
  }

  const std::uint64_t sequence_len = std::uint64_t{cfg.step_len} * cfg.num_steps;
  for (const auto& b : survivors) {
    const double reward = sequence_reward(pop, b.path, cfg.step_len, stream);
    ledger.prm_calls += 1;
    ledger.prm_tokens_scored += sequence_len;
    if (reward > ledger.best_final_reward) {
      ledger.best_final_reward = reward;
      ledger.best_path = b.path;
    }
  }
  return ledger;
}

struct CoupledLedgers {
  RunLedger vanilla;
  RunLedger early_rejection;
};

// Both strategies on the stream keyed by cfg.seed.
inline CoupledLedgers coupled_run(const SearchConfig& cfg, const BeamPopulation& pop,
                                  bool rescore = false) {
  return {run_search(cfg, pop, StrategySpec::vanilla()),
          run_search(cfg, pop, StrategySpec::early_rejection(rescore))};
}

struct ExhaustiveBest {
  Path path;
  double reward = -std::numeric_limits<double>::infinity();
};

// Completes every node of the unpruned tree (N roots, M children per node,
// num_steps levels) and returns the leaf with the highest sequence reward,
// lowest path on ties.
inline ExhaustiveBest exhaustive_best(const SearchConfig& config, const BeamPopulation& pop) {
  const SearchConfig cfg = validate_config(config);
  detail::check_population(cfg, pop);
  const KeyedStream stream(cfg.seed);
  ExhaustiveBest best;
  Path path;
  path.reserve(cfg.num_steps);

  auto visit = [&](auto&& self, double acc) -> void {
    acc += token_sums<1>(pop, path, stream, {cfg.step_len})[0];
    if (path.size() == cfg.num_steps) {
      if (acc > best.reward) {
        best.reward = acc;
        best.path = path;
      }
      return;
    }
    for (std::uint32_t c = 0; c < cfg.expansion_factor; ++c) {
      path.push_back(c);
      self(self, acc);
      path.pop_back();
    }
  };
  for (std::uint32_t root = 0; root < cfg.beam_width; ++root) {
    path.assign(1, root);
    visit(visit, 0.0);
  }
  return best;
}

// Single-step, flat-population trial: N beams, partial rewards over the
// first prefix_len tokens and final rewards over the full horizon on the
// same draws. True iff the beam with the highest final reward is not among
// the top N/M partial rewards.
inline bool misrejection_trial(std::uint32_t n, std::uint32_t m, std::uint32_t prefix_len,
                               std::uint32_t horizon, const BeamPopulation& pop,
                               std::uint64_t seed) {
  if (m == 0 || n % m != 0) throw ConfigError("N not divisible by M");
  if (prefix_len == 0 || prefix_len > horizon) throw ConfigError("τ must lie in [1, L]");
  if (pop.size() != n) throw ConfigError("population size does not match beam width");
  const KeyedStream stream(seed);
  std::vector<double> partial(n), final(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const Path path{i};
    const auto [p, f] = token_sums<2>(pop, path, stream, {prefix_len, horizon});
    partial[i] = p;
    final[i] = f;
  }
  const auto best = static_cast<std::size_t>(
      std::distance(final.begin(), std::max_element(final.begin(), final.end())));
  const Selection sel = select_top(partial, n / m);
  return !std::binary_search(sel.indices.begin(), sel.indices.end(), best);
}

}  // namespace erbeam
