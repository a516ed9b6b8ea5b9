#pragma once

// Synthetic reward oracles standing in for a process reward model:
// i.i.d. per-token scores summed over a prefix (toy model) and a monotone
// map plus sub-Gaussian noise on the normalized partial reward.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "erbeam/core.hpp"

namespace erbeam {

// Both families are sigma-sub-Gaussian for the declared standard deviation.
enum class NoiseFamily { gaussian, uniform_bounded };

inline std::string_view to_string(NoiseFamily f) {
  return f == NoiseFamily::gaussian ? "gaussian" : "uniform";
}

inline NoiseFamily parse_noise_family(std::string_view name) {
  if (name == "gaussian") return NoiseFamily::gaussian;
  if (name == "uniform" || name == "uniform-bounded") return NoiseFamily::uniform_bounded;
  throw ConfigError("unknown noise family '" + std::string(name) + "'");
}

// Whether a partial reward is reported as a raw sum or a per-token mean.
enum class RewardScale { sum, mean };

inline std::string_view to_string(RewardScale s) { return s == RewardScale::sum ? "sum" : "mean"; }

struct BeamScoreModel {
  double mean = 0.0;
  double stddev = 0.0;
  NoiseFamily family = NoiseFamily::gaussian;

  // Support of the bounded family, [mean - sqrt(3) sd, mean + sqrt(3) sd].
  [[nodiscard]] std::pair<double, double> support() const {
    if (family == NoiseFamily::gaussian)
      return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    const double half = std::sqrt(3.0) * stddev;
    return {mean - half, mean + half};
  }

  [[nodiscard]] double draw(const KeyedStream::Cursor& cursor, std::uint64_t t) const {
    if (stddev == 0.0) return mean;
    if (family == NoiseFamily::gaussian) return mean + stddev * cursor.normal(t);
    return mean + std::sqrt(3.0) * stddev * (2.0 * cursor.uniform(t) - 1.0);
  }
};

struct BeamPopulation {
  std::vector<BeamScoreModel> models;
  double gap_design = 0.0;

  [[nodiscard]] std::size_t size() const { return models.size(); }

  // Index of the beam with the highest mean; lowest index on ties.
  [[nodiscard]] std::size_t best_index() const {
    return static_cast<std::size_t>(
        std::distance(models.begin(), std::max_element(models.begin(), models.end(),
                                                       [](const auto& a, const auto& b) {
                                                         return a.mean < b.mean;
                                                       })));
  }

  [[nodiscard]] const BeamScoreModel& model_for(std::span<const std::uint32_t> path) const {
    const std::size_t slot = path.empty() ? 0 : path.front();
    if (slot >= models.size()) throw std::out_of_range("beam lineage outside population");
    return models[slot];
  }
};

// One elevated beam (index 0) at base_mean + gap, N-1 beams at base_mean.
inline BeamPopulation make_population(std::size_t n, double gap, double base_mean, double stddev,
                                      NoiseFamily family = NoiseFamily::gaussian) {
  if (n < 2) throw ConfigError("population needs at least 2 beams for a gap");
  if (!(gap > 0.0)) throw ConfigError("gap must be positive");
  if (stddev < 0.0) throw ConfigError("token std must be non-negative");
  BeamPopulation pop;
  pop.gap_design = gap;
  pop.models.assign(n, BeamScoreModel{base_mean, stddev, family});
  pop.models.front().mean = base_mean + gap;
  return pop;
}

// Exchangeable beams; the gap is zero and any bound on it is vacuous.
inline BeamPopulation make_homogeneous_population(std::size_t n, double mean, double stddev,
                                                  NoiseFamily family = NoiseFamily::gaussian) {
  if (n == 0) throw ConfigError("population must be non-empty");
  if (stddev < 0.0) throw ConfigError("token std must be non-negative");
  return BeamPopulation{std::vector<BeamScoreModel>(n, BeamScoreModel{mean, stddev, family}), 0.0};
}

inline double token_score(const BeamPopulation& pop, std::span<const std::uint32_t> path,
                          std::uint64_t t, const KeyedStream& stream) {
  return pop.model_for(path).draw(stream.at(path), t);
}

// Running sums of the token scores on one path, reported at each cutoff.
// Cutoffs must be non-decreasing; draws are shared across cutoffs.
template <std::size_t K>
std::array<double, K> token_sums(const BeamPopulation& pop, std::span<const std::uint32_t> path,
                                 const KeyedStream& stream,
                                 const std::array<std::uint32_t, K>& cutoffs) {
  const BeamScoreModel& model = pop.model_for(path);
  std::array<double, K> out{};
  if (model.stddev == 0.0) {
    for (std::size_t k = 0; k < K; ++k) out[k] = model.mean * cutoffs[k];
    return out;
  }
  const auto cursor = stream.at(path);
  constexpr std::size_t kChunk = 256;
  std::array<double, kChunk> buf{};
  double acc = 0.0;
  std::uint32_t t = 0;
  for (std::size_t k = 0; k < K; ++k) {
    while (t < cutoffs[k]) {
      const std::size_t n = std::min<std::size_t>(kChunk, cutoffs[k] - t);
      std::span<double> chunk(buf.data(), n);
      if (model.family == NoiseFamily::gaussian) {
        cursor.fill_normal(t, chunk);
        for (double z : chunk) acc += model.mean + model.stddev * z;
      } else {
        for (std::size_t i = 0; i < n; ++i) acc += model.draw(cursor, t + i);
      }
      t += static_cast<std::uint32_t>(n);
    }
    out[k] = acc;
  }
  return out;
}

// Sum (or mean) of the first prefix_len token scores of a step.
inline double partial_reward(const BeamPopulation& pop, std::span<const std::uint32_t> path,
                             std::uint32_t prefix_len, std::uint32_t step_len,
                             const KeyedStream& stream, RewardScale scale = RewardScale::sum) {
  if (prefix_len == 0) throw ConfigError("τ must be at least 1");
  if (prefix_len > step_len) throw ConfigError("τ exceeds step length");
  const double sum = token_sums<1>(pop, path, stream, {prefix_len})[0];
  return scale == RewardScale::sum ? sum : sum / prefix_len;
}

// Sum of all horizon token scores; the first tokens coincide with the
// ones used by partial_reward on the same path.
inline double final_reward_toy(const BeamPopulation& pop, std::span<const std::uint32_t> path,
                               std::uint32_t horizon, const KeyedStream& stream) {
  return token_sums<1>(pop, path, stream, {horizon})[0];
}

// Monotone maps g: [0,1] -> [0,1].
struct IdentityMap {
  [[nodiscard]] double operator()(double x) const { return x; }
};

struct LogisticMap {
  double steepness = 10.0;
  double midpoint = 0.5;
  [[nodiscard]] double operator()(double x) const {
    return 1.0 / (1.0 + std::exp(-steepness * (x - midpoint)));
  }
};

// Linear interpolation through (x, y) knots sorted by x; flat outside.
struct PiecewiseLinearMap {
  std::vector<std::pair<double, double>> knots;
  [[nodiscard]] double operator()(double x) const {
    if (knots.empty()) return x;
    if (x <= knots.front().first) return knots.front().second;
    if (x >= knots.back().first) return knots.back().second;
    const auto hi = std::upper_bound(knots.begin(), knots.end(), x,
                                     [](double v, const auto& k) { return v < k.first; });
    const auto lo = std::prev(hi);
    const double w = (x - lo->first) / (hi->first - lo->first);
    return lo->second + w * (hi->second - lo->second);
  }
};

using MonotoneMap = std::variant<IdentityMap, LogisticMap, PiecewiseLinearMap>;

inline double apply(const MonotoneMap& g, double x) {
  return std::visit([x](const auto& f) { return f(x); }, g);
}

// Checks g is non-decreasing and stays inside [0,1] on a uniform grid.
inline bool is_monotone(const MonotoneMap& g, std::size_t grid = 1000) {
  double prev = apply(g, 0.0);
  if (prev < 0.0 || prev > 1.0) return false;
  for (std::size_t i = 1; i <= grid; ++i) {
    const double y = apply(g, static_cast<double>(i) / grid);
    if (y < prev || y > 1.0) return false;
    prev = y;
  }
  return true;
}

struct MonotoneNoiseModel {
  MonotoneMap g = IdentityMap{};
  double noise_std = 0.0;
  NoiseFamily noise = NoiseFamily::gaussian;

  void validate() const {
    if (noise_std < 0.0) throw ConfigError("noise std must be non-negative");
    if (const auto* pw = std::get_if<PiecewiseLinearMap>(&g)) {
      for (std::size_t i = 1; i < pw->knots.size(); ++i)
        if (!(pw->knots[i].first > pw->knots[i - 1].first))
          throw ConfigError("piecewise knots must have strictly increasing x");
    }
    if (!is_monotone(g)) throw ConfigError("g is not monotone into [0,1]");
  }
};

// g(P) + eta clamped to [0,1]. eta is keyed on the noise channel of path,
// so it is independent of the token scores that produced P.
inline double final_reward_mapped(const MonotoneNoiseModel& model, double partial,
                                  const KeyedStream& stream, std::span<const std::uint32_t> path) {
  const BeamScoreModel eta{0.0, model.noise_std, model.noise};
  const double f = apply(model.g, partial) + eta.draw(stream.at(path, Channel::noise), 0);
  return std::clamp(f, 0.0, 1.0);
}

}  // namespace erbeam
