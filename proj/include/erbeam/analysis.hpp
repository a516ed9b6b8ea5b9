#pragma once

// Estimators, the sqrt(tau/L) correlation law, the sub-Gaussian
// mis-rejection bound with its Monte Carlo check, and the FLOP / batching
// cost model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "erbeam/core.hpp"
#include "erbeam/oracle.hpp"
#include "erbeam/parallel.hpp"
#include "erbeam/search.hpp"

namespace erbeam {

class DegenerateSample : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

inline void check_paired(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("sample sizes differ");
  if (xs.size() < 2) throw std::invalid_argument("need at least two observations");
}

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct Moments {
  double mean_x, mean_y, sxx, syy, sxy;
};

// Centered second moments, two-pass.
inline Moments moments(std::span<const double> xs, std::span<const double> ys) {
  Moments m{mean(xs), mean(ys), 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - m.mean_x;
    const double dy = ys[i] - m.mean_y;
    m.sxx += dx * dx;
    m.syy += dy * dy;
    m.sxy += dx * dy;
  }
  return m;
}

}  // namespace detail

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  detail::check_paired(xs, ys);
  const auto m = detail::moments(xs, ys);
  if (m.sxx == 0.0 || m.syy == 0.0) throw DegenerateSample("degenerate sample");
  return std::clamp(m.sxy / std::sqrt(m.sxx * m.syy), -1.0, 1.0);
}

// Kendall's tau-a: (concordant - discordant) / C(n, 2). Tied pairs count as
// neither.
inline double kendall_tau(std::span<const double> xs, std::span<const double> ys) {
  detail::check_paired(xs, ys);
  const std::size_t n = xs.size();
  std::int64_t score = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double xi = xs[i];
    const double yi = ys[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      const int sx = (xs[j] > xi) - (xs[j] < xi);
      const int sy = (ys[j] > yi) - (ys[j] < yi);
      score += sx * sy;
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return static_cast<double>(score) / pairs;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

// Ordinary least squares of ys on xs. A constant ys gives slope 0 and, by
// convention, r2 = 0.
inline LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
  detail::check_paired(xs, ys);
  const auto m = detail::moments(xs, ys);
  if (m.sxx == 0.0) throw DegenerateSample("zero variance in x");
  LinearFit fit;
  fit.slope = m.sxy / m.sxx;
  fit.intercept = m.mean_y - fit.slope * m.mean_x;
  if (m.syy == 0.0) return fit;
  // 1 - SSE/SST, written as Sxy^2 / (Sxx Syy) to avoid cancellation when
  // the fit is poor.
  fit.r2 = std::clamp((m.sxy / m.sxx) * (m.sxy / m.syy), 0.0, 1.0);
  return fit;
}

// Pearson correlation between a tau-token prefix sum and the L-token sum of
// the same i.i.d. scores.
inline double theoretical_correlation(std::uint32_t prefix_len, std::uint32_t horizon) {
  if (prefix_len == 0) throw std::invalid_argument("τ must be at least 1");
  if (prefix_len > horizon) throw std::invalid_argument("τ exceeds horizon");
  return std::sqrt(static_cast<double>(prefix_len) / static_cast<double>(horizon));
}

// Smallest tau with sqrt(tau/L) >= target, i.e. ceil(target^2 * L). Products
// within 1e-9 of an integer are snapped so that decimal inputs such as 0.8
// hit the exact value.
inline std::uint32_t min_tau_for_rho(double target, std::uint32_t horizon) {
  if (!(target > 0.0 && target <= 1.0)) throw std::invalid_argument("ρ* must lie in (0, 1]");
  if (horizon == 0) throw std::invalid_argument("horizon must be positive");
  const double x = target * target * horizon;
  const double nearest = std::round(x);
  const double tau = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
  return static_cast<std::uint32_t>(std::clamp(tau, 1.0, static_cast<double>(horizon)));
}

struct GapEstimate {
  double gap = 0.0;    // best sample mean minus the runner-up
  double sigma = 0.0;  // pooled within-beam standard deviation
  std::size_t best = 0;
};

inline GapEstimate estimate_gap_and_noise(std::span<const std::vector<double>> samples) {
  if (samples.size() < 2) throw std::invalid_argument("need at least two beams");
  std::vector<double> means(samples.size());
  double ss = 0.0;
  double dof = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.size() < 2) throw std::invalid_argument("need at least two samples per beam");
    means[i] = detail::mean(s);
    for (double v : s) ss += (v - means[i]) * (v - means[i]);
    dof += static_cast<double>(s.size() - 1);
  }
  GapEstimate est;
  est.best = static_cast<std::size_t>(
      std::distance(means.begin(), std::max_element(means.begin(), means.end())));
  double runner_up = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < means.size(); ++i)
    if (i != est.best) runner_up = std::max(runner_up, means[i]);
  est.gap = means[est.best] - runner_up;
  est.sigma = std::sqrt(ss / dof);
  return est;
}

struct BoundValue {
  double raw = 0.0;   // (N-1) exp(-gap^2 / 4 sigma^2), unclamped
  double prob = 0.0;  // min(1, raw)
};

inline BoundValue misrejection_bound(std::uint32_t n, double gap, double sigma) {
  if (n == 0) throw std::invalid_argument("N must be positive");
  if (gap < 0.0 || sigma < 0.0) throw std::invalid_argument("gap and sigma must be non-negative");
  if (n == 1) return {0.0, 0.0};
  if (sigma == 0.0) {
    if (gap == 0.0) throw std::invalid_argument("vacuous configuration");
    return {0.0, 0.0};
  }
  const double raw = static_cast<double>(n - 1) * std::exp(-(gap * gap) / (4.0 * sigma * sigma));
  return {raw, std::min(1.0, raw)};
}

struct BoundReport {
  std::uint32_t n = 0;
  std::uint32_t m = 0;
  std::uint32_t prefix_len = 0;
  std::uint32_t horizon = 0;
  double gap = 0.0;    // prefix-sum gap, prefix_len * per-token gap
  double sigma = 0.0;  // prefix-sum sub-Gaussian scale, sqrt(prefix_len) * per-token std
  double bound_raw = 0.0;
  double bound_prob = 0.0;
  double empirical_rate = 0.0;
  std::uint64_t misrejections = 0;
  std::uint64_t n_trials = 0;
  double standard_error = 0.0;

  [[nodiscard]] bool vacuous() const { return bound_prob >= 1.0; }
  [[nodiscard]] bool dominated() const {
    return empirical_rate <= bound_prob + 3.0 * standard_error;
  }
};

// Monte Carlo mis-rejection rate against the bound evaluated at the
// population's true prefix-sum gap and scale. Trial t uses the seed derived
// from (cfg.seed, t), so the report does not depend on `workers`.
inline BoundReport verify_bound(const SearchConfig& cfg, const BeamPopulation& pop,
                                std::uint64_t n_trials, unsigned workers = 1) {
  if (n_trials == 0) throw std::invalid_argument("need at least one trial");
  if (cfg.expansion_factor == 0 || cfg.beam_width % cfg.expansion_factor != 0)
    throw ConfigError("N not divisible by M");
  if (pop.size() != cfg.beam_width) throw ConfigError("population size does not match beam width");

  BoundReport rep;
  rep.n = cfg.beam_width;
  rep.m = cfg.expansion_factor;
  rep.prefix_len = cfg.prefix_len;
  rep.horizon = cfg.horizon;
  rep.n_trials = n_trials;

  const std::size_t best = pop.best_index();
  double token_gap = std::numeric_limits<double>::infinity();
  double token_sigma = 0.0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    token_sigma = std::max(token_sigma, pop.models[i].stddev);
    if (i != best) token_gap = std::min(token_gap, pop.models[best].mean - pop.models[i].mean);
  }
  if (pop.size() < 2) token_gap = 0.0;
  rep.gap = cfg.prefix_len * token_gap;
  rep.sigma = std::sqrt(static_cast<double>(cfg.prefix_len)) * token_sigma;
  const BoundValue bound = misrejection_bound(rep.n, rep.gap, rep.sigma);
  rep.bound_raw = bound.raw;
  rep.bound_prob = bound.prob;

  const auto hits = parallel_map(n_trials, workers, [&](std::size_t t) -> char {
    return misrejection_trial(cfg.beam_width, cfg.expansion_factor, cfg.prefix_len, cfg.horizon,
                              pop, derive_seed(cfg.seed, {t}));
  });
  rep.misrejections = static_cast<std::uint64_t>(std::count(hits.begin(), hits.end(), 1));
  rep.empirical_rate = static_cast<double>(rep.misrejections) / static_cast<double>(n_trials);
  rep.standard_error =
      std::sqrt(rep.empirical_rate * (1.0 - rep.empirical_rate) / static_cast<double>(n_trials));
  return rep;
}

struct CorrelationReport {
  std::uint32_t prefix_len = 0;
  std::uint32_t horizon = 0;
  double pearson_empirical = 0.0;
  double pearson_theoretical = 0.0;
  double kendall_tau = 0.0;
  double fit_slope = 0.0;
  double fit_intercept = 0.0;
  double fit_r2 = 0.0;
  std::uint64_t n_trials = 0;
};

// Partial vs final rewards of a single toy-model beam across trials.
inline CorrelationReport correlation_study(const BeamScoreModel& model, std::uint32_t prefix_len,
                                           std::uint32_t horizon, std::uint64_t n_trials,
                                           std::uint64_t seed, unsigned workers = 1) {
  CorrelationReport rep;
  rep.prefix_len = prefix_len;
  rep.horizon = horizon;
  rep.pearson_theoretical = theoretical_correlation(prefix_len, horizon);
  rep.n_trials = n_trials;

  const BeamPopulation pop{{model}, 0.0};
  const auto pairs = parallel_map(n_trials, workers, [&](std::size_t t) {
    const KeyedStream stream(derive_seed(seed, {prefix_len, t}));
    const Path root{0};
    return token_sums<2>(pop, root, stream, {prefix_len, horizon});
  });
  std::vector<double> partial(n_trials), final(n_trials);
  for (std::size_t t = 0; t < n_trials; ++t) {
    partial[t] = pairs[t][0];
    final[t] = pairs[t][1];
  }
  rep.pearson_empirical = pearson(partial, final);
  rep.kendall_tau = kendall_tau(partial, final);
  const LinearFit fit = linear_fit(partial, final);
  rep.fit_slope = fit.slope;
  rep.fit_intercept = fit.intercept;
  rep.fit_r2 = fit.r2;
  return rep;
}

struct CostModel {
  double gen_params = 7e9;
  double prm_params = 7e9;
  double flops_per_param_token = 2.0;

  void validate() const {
    if (!(gen_params > 0.0 && prm_params > 0.0 && flops_per_param_token > 0.0))
      throw ConfigError("cost model parameters must be positive");
  }
};

struct FlopReport {
  double gen_flops = 0.0;
  double prm_flops = 0.0;
  double total = 0.0;
};

inline FlopReport run_flops(const RunLedger& ledger, const CostModel& cost) {
  FlopReport r;
  r.gen_flops = cost.flops_per_param_token * cost.gen_params *
                static_cast<double>(ledger.gen_tokens_total());
  r.prm_flops = cost.flops_per_param_token * cost.prm_params *
                static_cast<double>(ledger.prm_tokens_scored);
  r.total = r.gen_flops + r.prm_flops;
  return r;
}

struct BatchPlan {
  std::uint64_t large = 0;  // beams per batch while generating the prefix
  std::uint64_t small = 0;  // beams per batch while completing survivors
};

// Two batch sizes under one memory budget: prefixes of tau tokens and full
// steps of s tokens.
inline BatchPlan batching_plan(double memory_budget, double per_beam_token_mem,
                               std::uint32_t prefix_len, std::uint32_t step_len) {
  if (!(memory_budget > 0.0 && per_beam_token_mem > 0.0) || prefix_len == 0 || step_len == 0)
    throw std::invalid_argument("batching inputs must be positive");
  if (prefix_len > step_len) throw std::invalid_argument("τ exceeds step length");
  BatchPlan plan;
  plan.large = static_cast<std::uint64_t>(std::floor(memory_budget / (per_beam_token_mem * prefix_len)));
  plan.small = static_cast<std::uint64_t>(std::floor(memory_budget / (per_beam_token_mem * step_len)));
  if (plan.small == 0) throw std::invalid_argument("step does not fit in memory");
  return plan;
}

}  // namespace erbeam
