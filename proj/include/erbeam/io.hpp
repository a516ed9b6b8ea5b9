#pragma once

// JSON and CSV encodings of configurations and reports. Key names and
// column orders are part of the output contract.

#include <charconv>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "erbeam/analysis.hpp"
#include "erbeam/core.hpp"
#include "erbeam/oracle.hpp"
#include "erbeam/search.hpp"

namespace erbeam {

using json = nlohmann::ordered_json;

// Shortest representation that round-trips; identical on every run.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, res.ptr);
}

namespace detail {

inline void reject_unknown_keys(const json& obj, std::string_view where,
                                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, std::string_view where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + std::string(where));
  }
}

template <typename T>
T require(const json& obj, const char* key, std::string_view where) {
  if (!obj.contains(key))
    throw ConfigError("missing key '" + std::string(key) + "' in " + std::string(where));
  return get_or<T>(obj, key, T{}, where);
}

inline std::uint32_t require_u32(const json& obj, const char* key, std::string_view where) {
  const auto& v = obj.contains(key) ? obj.at(key) : json();
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
      v.get<std::int64_t>() > std::int64_t{UINT32_MAX})
    throw ConfigError("'" + std::string(key) + "' in " + std::string(where) +
                      " must be a non-negative integer");
  return v.get<std::uint32_t>();
}

}  // namespace detail

inline json to_json(const SearchConfig& c) {
  return json{{"beam_width", c.beam_width}, {"expansion_factor", c.expansion_factor},
              {"prefix_len", c.prefix_len}, {"step_len", c.step_len},
              {"num_steps", c.num_steps},   {"horizon", c.horizon},
              {"seed", c.seed}};
}

// Every field is required and unknown keys are rejected.
inline SearchConfig search_config_from_json(const json& j) {
  constexpr std::string_view where = "search";
  detail::reject_unknown_keys(j, where, {"beam_width", "expansion_factor", "prefix_len",
                                         "step_len", "num_steps", "horizon", "seed"});
  SearchConfig c;
  c.beam_width = detail::require_u32(j, "beam_width", where);
  c.expansion_factor = detail::require_u32(j, "expansion_factor", where);
  c.prefix_len = detail::require_u32(j, "prefix_len", where);
  c.step_len = detail::require_u32(j, "step_len", where);
  c.num_steps = detail::require_u32(j, "num_steps", where);
  c.horizon = detail::require_u32(j, "horizon", where);
  if (!j.contains("seed") || !j.at("seed").is_number_unsigned())
    throw ConfigError("'seed' in search must be an unsigned 64-bit integer");
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline json to_json(const MonotoneMap& g) {
  if (std::holds_alternative<IdentityMap>(g)) return json{{"kind", "identity"}};
  if (const auto* l = std::get_if<LogisticMap>(&g))
    return json{{"kind", "logistic"}, {"steepness", l->steepness}, {"midpoint", l->midpoint}};
  json knots = json::array();
  for (const auto& [x, y] : std::get<PiecewiseLinearMap>(g).knots) knots.push_back({x, y});
  return json{{"kind", "piecewise_linear"}, {"knots", knots}};
}

inline MonotoneMap monotone_map_from_json(const json& j) {
  constexpr std::string_view where = "oracle.mapped.g";
  const auto kind = detail::require<std::string>(j, "kind", where);
  if (kind == "identity") {
    detail::reject_unknown_keys(j, where, {"kind"});
    return IdentityMap{};
  }
  if (kind == "logistic") {
    detail::reject_unknown_keys(j, where, {"kind", "steepness", "midpoint"});
    return LogisticMap{detail::get_or(j, "steepness", 10.0, where),
                       detail::get_or(j, "midpoint", 0.5, where)};
  }
  if (kind == "piecewise_linear") {
    detail::reject_unknown_keys(j, where, {"kind", "knots"});
    PiecewiseLinearMap pw;
    pw.knots = detail::require<std::vector<std::pair<double, double>>>(j, "knots", where);
    return pw;
  }
  throw ConfigError("unknown monotone map kind '" + kind + "'");
}

// Population and mapped-model parameters, stored under the "oracle" key.
struct OracleSpec {
  double gap = 0.05;       // per-token mean advantage of beam 0; 0 = exchangeable beams
  double base_mean = 0.5;  // per-token mean of every other beam
  double token_std = 0.2;
  NoiseFamily token_dist = NoiseFamily::gaussian;
  RewardScale partial_scale = RewardScale::sum;
  std::optional<MonotoneNoiseModel> mapped;

  [[nodiscard]] BeamPopulation population(std::size_t n) const {
    if (gap == 0.0) return make_homogeneous_population(n, base_mean, token_std, token_dist);
    return make_population(n, gap, base_mean, token_std, token_dist);
  }

  [[nodiscard]] BeamScoreModel base_model() const { return {base_mean, token_std, token_dist}; }
};

inline json to_json(const OracleSpec& o) {
  json j{{"gap", o.gap},
         {"base_mean", o.base_mean},
         {"token_std", o.token_std},
         {"token_dist", to_string(o.token_dist)},
         {"partial_scale", to_string(o.partial_scale)}};
  if (o.mapped)
    j["mapped"] = json{{"g", to_json(o.mapped->g)},
                       {"noise_std", o.mapped->noise_std},
                       {"noise_dist", to_string(o.mapped->noise)}};
  return j;
}

inline OracleSpec oracle_spec_from_json(const json& j) {
  constexpr std::string_view where = "oracle";
  detail::reject_unknown_keys(j, where, {"gap", "base_mean", "token_std", "token_dist",
                                         "partial_scale", "mapped"});
  OracleSpec o;
  o.gap = detail::get_or(j, "gap", o.gap, where);
  o.base_mean = detail::get_or(j, "base_mean", o.base_mean, where);
  o.token_std = detail::get_or(j, "token_std", o.token_std, where);
  o.token_dist = parse_noise_family(detail::get_or<std::string>(j, "token_dist", "gaussian", where));
  const auto scale = detail::get_or<std::string>(j, "partial_scale", "sum", where);
  if (scale == "sum") o.partial_scale = RewardScale::sum;
  else if (scale == "mean") o.partial_scale = RewardScale::mean;
  else throw ConfigError("partial_scale must be 'sum' or 'mean'");
  if (o.gap < 0.0) throw ConfigError("oracle gap must be non-negative");
  if (o.token_std < 0.0) throw ConfigError("oracle token_std must be non-negative");
  if (j.contains("mapped")) {
    const json& m = j.at("mapped");
    detail::reject_unknown_keys(m, "oracle.mapped", {"g", "noise_std", "noise_dist"});
    MonotoneNoiseModel model;
    if (m.contains("g")) model.g = monotone_map_from_json(m.at("g"));
    model.noise_std = detail::get_or(m, "noise_std", 0.0, "oracle.mapped");
    model.noise = parse_noise_family(detail::get_or<std::string>(m, "noise_dist", "gaussian", "oracle.mapped"));
    model.validate();
    o.mapped = model;
  }
  return o;
}

inline json to_json(const CostModel& c) {
  return json{{"gen_params", c.gen_params},
              {"prm_params", c.prm_params},
              {"flops_per_param_token", c.flops_per_param_token}};
}

inline CostModel cost_model_from_json(const json& j) {
  constexpr std::string_view where = "cost";
  detail::reject_unknown_keys(j, where, {"gen_params", "prm_params", "flops_per_param_token"});
  CostModel c;
  c.gen_params = detail::get_or(j, "gen_params", c.gen_params, where);
  c.prm_params = detail::get_or(j, "prm_params", c.prm_params, where);
  c.flops_per_param_token = detail::get_or(j, "flops_per_param_token", c.flops_per_param_token, where);
  c.validate();
  return c;
}

inline json path_to_json(const Path& p) { return json(p); }

inline json to_json(const RunLedger& l) {
  json survivors = json::array();
  for (const auto& step : l.survivors_per_step) {
    json paths = json::array();
    for (const auto& p : step) paths.push_back(path_to_json(p));
    survivors.push_back(std::move(paths));
  }
  return json{
      {"strategy", to_string(l.strategy.kind)},
      {"rescore_after_completion", l.strategy.rescore_after_completion},
      {"gen_tokens_total", l.gen_tokens_total()},
      {"gen_tokens_by_phase",
       {{"prefix_tokens", l.prefix_tokens}, {"completion_tokens", l.completion_tokens}}},
      {"prm_calls", l.prm_calls},
      {"prm_tokens_scored", l.prm_tokens_scored},
      {"steps_executed", l.steps_executed},
      {"survivors_per_step", std::move(survivors)},
      {"best_path", path_to_json(l.best_path)},
      {"best_final_reward", l.best_final_reward},
  };
}

inline json to_json(const BoundReport& r) {
  return json{{"N", r.n},
              {"M", r.m},
              {"tau", r.prefix_len},
              {"L", r.horizon},
              {"gap", r.gap},
              {"sigma", r.sigma},
              {"bound_raw", r.bound_raw},
              {"bound_prob", r.bound_prob},
              {"empirical_rate", r.empirical_rate},
              {"misrejections", r.misrejections},
              {"n_trials", r.n_trials},
              {"standard_error", r.standard_error},
              {"vacuous_bound", r.vacuous()},
              {"dominated", r.dominated()}};
}

inline json to_json(const CorrelationReport& r) {
  return json{{"tau", r.prefix_len},
              {"L", r.horizon},
              {"pearson_emp", r.pearson_empirical},
              {"pearson_theory", r.pearson_theoretical},
              {"kendall", r.kendall_tau},
              {"slope", r.fit_slope},
              {"intercept", r.fit_intercept},
              {"r2", r.fit_r2},
              {"n_trials", r.n_trials}};
}

inline constexpr std::string_view kCorrelationCsvHeader =
    "tau,L,pearson_emp,pearson_theory,kendall,slope,intercept,r2,n_trials";

inline std::string to_csv_row(const CorrelationReport& r) {
  return std::to_string(r.prefix_len) + ',' + std::to_string(r.horizon) + ',' +
         format_double(r.pearson_empirical) + ',' + format_double(r.pearson_theoretical) + ',' +
         format_double(r.kendall_tau) + ',' + format_double(r.fit_slope) + ',' +
         format_double(r.fit_intercept) + ',' + format_double(r.fit_r2) + ',' +
         std::to_string(r.n_trials);
}

// Line-delimited survivor trace, one record per step.
inline std::string survivor_trace(const RunLedger& l) {
  std::string out;
  for (std::size_t k = 0; k < l.survivors_per_step.size(); ++k) {
    json rec{{"strategy", to_string(l.strategy.kind)}, {"step", k}, {"survivors", json::array()}};
    for (const auto& p : l.survivors_per_step[k]) rec["survivors"].push_back(path_to_json(p));
    out += rec.dump();
    out += '\n';
  }
  return out;
}

}  // namespace erbeam
