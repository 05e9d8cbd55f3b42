#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "icp/errors.hpp"

namespace icp {

enum class ScheduleMode { cyclic, shuffled };

inline std::string to_string(ScheduleMode mode) { return mode == ScheduleMode::cyclic ? "cyclic" : "shuffled"; }

inline ScheduleMode parse_schedule_mode(const std::string& s) {
  if (s == "cyclic") return ScheduleMode::cyclic;
  if (s == "shuffled") return ScheduleMode::shuffled;
  throw ConfigError("unknown schedule mode '" + s + "' (expected cyclic or shuffled)");
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Uniform integer in [0, bound) by rejection; portable across standard libraries.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do r = rng();
  while (r >= limit);
  return r % bound;
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_interval(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Evaluation schedule: a stream of permutations of {0, ..., m-1} from which
/// each iteration removes the next p entries.
class Schedule {
 public:
  Schedule(std::size_t components, std::size_t batch_size, ScheduleMode mode = ScheduleMode::cyclic,
           std::uint64_t seed = 0)
      : m_(components), p_(batch_size), mode_(mode), seed_(seed) {
    if (m_ == 0) throw ConfigError("schedule needs at least one component");
    if (p_ == 0 || p_ > m_) throw ConfigError("batch size must satisfy 1 <= p <= m");
    load_pass();
  }

  std::vector<std::size_t> next_batch() {
    std::vector<std::size_t> batch;
    batch.reserve(p_);
    while (batch.size() < p_) {
      if (cursor_ == m_) {
        ++pass_;
        load_pass();
      }
      batch.push_back(permutation_[cursor_++]);
    }
    return batch;
  }

  std::size_t components() const noexcept { return m_; }
  std::size_t batch_size() const noexcept { return p_; }
  ScheduleMode mode() const noexcept { return mode_; }

 private:
  void load_pass() {
    permutation_.resize(m_);
    std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
    if (mode_ == ScheduleMode::shuffled) {
      // Counter-based: the permutation of pass r depends only on (seed, r).
      std::mt19937_64 rng(detail::splitmix64(seed_ ^ detail::splitmix64(pass_)));
      for (std::size_t j = m_ - 1; j > 0; --j) std::swap(permutation_[j], permutation_[detail::bounded(rng, j + 1)]);
    }
    cursor_ = 0;
  }

  std::size_t m_;
  std::size_t p_;
  ScheduleMode mode_;
  std::uint64_t seed_;
  std::uint64_t pass_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> permutation_;
};

/// Smallest finite window for which every component keeps a cut under any
/// permutation stream: ceil(2m/p), or 1 when every batch is complete.
inline std::size_t minimum_window(std::size_t m, std::size_t p) {
  if (p == 0 || p > m) throw ConfigError("batch size must satisfy 1 <= p <= m");
  if (p == m) return 1;
  return (2 * m + p - 1) / p;
}

/// t = t_adj * p / m, the inverse of t_adj = m t / p.
inline double adjusted_to_actual(double adjusted, std::size_t p, std::size_t m) {
  if (p == 0 || m == 0 || !(adjusted > 0.0)) throw ConfigError("adjusted step needs p, m >= 1 and t_adj > 0");
  return adjusted * static_cast<double>(p) / static_cast<double>(m);
}

inline double actual_to_adjusted(double actual, std::size_t p, std::size_t m) {
  if (p == 0 || m == 0 || !(actual > 0.0)) throw ConfigError("adjusted step needs p, m >= 1 and t > 0");
  return static_cast<double>(m) * actual / static_cast<double>(p);
}

class StepSizeRule {
 public:
  enum class Kind { constant, harmonic };

  static StepSizeRule constant(double t) { return StepSizeRule(Kind::constant, t); }
  static StepSizeRule constant_adjusted(double adjusted, std::size_t p, std::size_t m) {
    return StepSizeRule(Kind::constant, adjusted_to_actual(adjusted, p, m));
  }
  /// t_k = t0 / (k + 1)
  static StepSizeRule harmonic(double t0) { return StepSizeRule(Kind::harmonic, t0); }

  /// Negative k returns t0.
  double at(std::int64_t k) const {
    if (kind_ == Kind::constant || k < 0) return base_;
    return base_ / static_cast<double>(k + 1);
  }

  Kind kind() const noexcept { return kind_; }
  double base() const noexcept { return base_; }

 private:
  StepSizeRule(Kind kind, double base) : kind_(kind), base_(base) {
    if (!(base > 0.0) || !std::isfinite(base)) throw ConfigError("step size must be positive and finite");
  }

  Kind kind_;
  double base_;
};

inline double step_size(const StepSizeRule& rule, std::int64_t k) { return rule.at(k); }

}  // namespace icp
