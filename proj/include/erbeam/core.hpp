#pragma once

// Domain types shared by every part of the simulator: the search
// configuration, beam identities (paths) and the keyed random stream that
// couples strategies running over the same expansion tree.

#include <cmath>
#include <compare>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace erbeam {

// Raised for any violated precondition on user-supplied configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A beam is identified by the child indices taken from the root. The first
// element selects one of the N initial beams, later elements select one of
// the M children spawned at each expansion.
using Path = std::vector<std::uint32_t>;

struct SearchConfig {
  std::uint32_t beam_width = 8;        // N
  std::uint32_t expansion_factor = 4;  // M
  std::uint32_t prefix_len = 32;       // tau
  std::uint32_t step_len = 128;        // s
  std::uint32_t num_steps = 4;         // K
  std::uint32_t horizon = 512;         // L
  std::uint64_t seed = 0;

  // Number of beams kept at every selection, N / M.
  [[nodiscard]] std::uint32_t keep_count() const noexcept {
    return expansion_factor == 0 ? 0 : beam_width / expansion_factor;
  }

  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

// Returns cfg unchanged, or throws ConfigError naming the first violated
// invariant. The horizon is only required to cover one prefix; runs that
// use the toy model over the whole search set horizon = step_len * num_steps.
inline SearchConfig validate_config(const SearchConfig& cfg) {
  if (cfg.beam_width == 0) throw ConfigError("N must be positive");
  if (cfg.expansion_factor == 0) throw ConfigError("M must be positive");
  if (cfg.beam_width % cfg.expansion_factor != 0)
    throw ConfigError("N not divisible by M");
  if (cfg.step_len == 0) throw ConfigError("step length must be positive");
  if (cfg.num_steps == 0) throw ConfigError("step count must be positive");
  if (cfg.prefix_len == 0) throw ConfigError("τ must be at least 1");
  if (cfg.prefix_len > cfg.step_len) throw ConfigError("τ exceeds step length");
  if (cfg.horizon == 0) throw ConfigError("horizon must be positive");
  if (cfg.horizon < cfg.prefix_len) throw ConfigError("horizon shorter than τ");
  return cfg;
}

enum class BeamStatus { active, rejected_early, completed };

inline std::string_view to_string(BeamStatus s) {
  switch (s) {
    case BeamStatus::active: return "active";
    case BeamStatus::rejected_early: return "rejected_early";
    case BeamStatus::completed: return "completed";
  }
  return "unknown";
}

// One node of the expansion tree, scoped to the step it was generated in.
struct BeamNode {
  Path path;
  std::uint32_t tokens_generated = 0;
  std::optional<double> partial_reward;
  std::optional<double> final_reward;
  BeamStatus status = BeamStatus::active;

  // Model slot in the population: beams inherit the model of their root.
  [[nodiscard]] std::size_t lineage() const { return path.empty() ? 0 : path.front(); }

  void record_partial(double reward, std::uint32_t prefix_len) {
    if (tokens_generated < prefix_len)
      throw std::logic_error("partial reward before prefix was generated");
    partial_reward = reward;
  }

  void record_final(double reward, std::uint32_t step_len) {
    if (tokens_generated < step_len)
      throw std::logic_error("final reward before step was completed");
    final_reward = reward;
  }

  void retire(BeamStatus next) {
    if (status != BeamStatus::active || next == BeamStatus::active)
      throw std::logic_error("beam status transitions are one-way");
    status = next;
  }
};

namespace detail {

// splitmix64 finalizer; a bijection on 64-bit words with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h ^ mix64(v + 0x632be59bd9b4e019ULL));
}

// 53 high bits mapped to (0, 1]; never returns 0 so log() is safe.
constexpr double to_unit_open(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace detail

// Independent sub-streams carved out of one seed.
enum class Channel : std::uint64_t {
  token = 0x746f6b656eULL,
  noise = 0x6e6f697365ULL,
  trial = 0x747269616cULL,
};

// Distribution of a single keyed variate.
struct DrawSpec {
  enum class Kind { uniform, normal } kind = Kind::normal;
  double a = 0.0;  // uniform: lower bound; normal: mean
  double b = 1.0;  // uniform: upper bound; normal: standard deviation

  static constexpr DrawSpec standard_normal() { return {Kind::normal, 0.0, 1.0}; }
  static constexpr DrawSpec unit_uniform() { return {Kind::uniform, 0.0, 1.0}; }
};

// Counter-based generator: every variate is a pure function of
// (seed, channel, path, index). Two strategies that touch the same tree node
// therefore observe the same token scores.
class KeyedStream {
 public:
  constexpr explicit KeyedStream(std::uint64_t seed) noexcept : seed_(seed) {}

  [[nodiscard]] constexpr std::uint64_t seed() const noexcept { return seed_; }

  // Hash state for all variates hanging off one path.
  class Cursor {
   public:
    [[nodiscard]] constexpr std::uint64_t bits(std::uint64_t index) const noexcept {
      return detail::combine(state_, index);
    }

    [[nodiscard]] constexpr double uniform(std::uint64_t index) const noexcept {
      return detail::to_unit_open(bits(index));
    }

    // Standard normal. Indices 2k and 2k+1 are the two halves of one
    // Box-Muller pair, which are exactly independent.
    [[nodiscard]] double normal(std::uint64_t index) const noexcept {
      const auto [z0, z1] = normal_pair(index >> 1);
      return (index & 1U) ? z1 : z0;
    }

    // Fills out[i] with normal(first + i).
    void fill_normal(std::uint64_t first, std::span<double> out) const noexcept {
      std::size_t i = 0;
      std::uint64_t index = first;
      if ((index & 1U) && i < out.size()) out[i++] = normal(index++);
      for (; i + 1 < out.size(); i += 2, index += 2) {
        const auto [z0, z1] = normal_pair(index >> 1);
        out[i] = z0;
        out[i + 1] = z1;
      }
      if (i < out.size()) out[i] = normal(index);
    }

    [[nodiscard]] double draw(std::uint64_t index, const DrawSpec& spec) const noexcept {
      if (spec.kind == DrawSpec::Kind::uniform)
        return spec.a + (spec.b - spec.a) * uniform(index);
      return spec.a + spec.b * normal(index);
    }

   private:
    friend class KeyedStream;
    constexpr explicit Cursor(std::uint64_t state) noexcept : state_(state) {}

    struct Pair { double z0, z1; };

    [[nodiscard]] Pair normal_pair(std::uint64_t pair_index) const noexcept {
      const std::uint64_t h = detail::combine(state_ ^ 0x5bd1e9955bd1e995ULL, pair_index);
      const double u1 = detail::to_unit_open(h);
      const double u2 = detail::to_unit_open(detail::mix64(h));
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double theta = 2.0 * std::numbers::pi * u2;
      return {r * std::cos(theta), r * std::sin(theta)};
    }

    std::uint64_t state_;
  };

  [[nodiscard]] Cursor at(std::span<const std::uint32_t> path,
                          Channel channel = Channel::token) const noexcept {
    std::uint64_t h = detail::combine(seed_, static_cast<std::uint64_t>(channel));
    h = detail::combine(h, path.size());
    for (std::uint32_t step : path) h = detail::combine(h, step);
    return Cursor(h);
  }

  [[nodiscard]] double draw(std::span<const std::uint32_t> path, std::uint64_t index,
                            const DrawSpec& spec = DrawSpec::standard_normal(),
                            Channel channel = Channel::token) const noexcept {
    return at(path, channel).draw(index, spec);
  }

  // Seed for an independent sub-experiment (trial, sweep cell, ...).
  [[nodiscard]] constexpr std::uint64_t derive(std::uint64_t index) const noexcept {
    return detail::combine(detail::combine(seed_, static_cast<std::uint64_t>(Channel::trial)), index);
  }

 private:
  std::uint64_t seed_;
};

// Free-function form of the keyed draw.
inline double keyed_draw(const KeyedStream& stream, std::span<const std::uint32_t> path,
                         std::uint64_t t, const DrawSpec& spec = DrawSpec::standard_normal()) {
  return stream.draw(path, t, spec);
}

// Seed derived from a base seed and a list of coordinates.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = detail::combine(base, static_cast<std::uint64_t>(Channel::trial));
  for (std::uint64_t c : coords) h = detail::combine(h, c);
  return h;
}

}  // namespace erbeam
