#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "icp/errors.hpp"
#include "icp/linalg.hpp"

namespace icp {

/// Affine minorant x -> <gradient, x> + intercept of one component, built from
/// one oracle evaluation at iteration `birth_iter`.
struct Cut {
  std::size_t component = 0;
  std::int64_t birth_iter = 0;
  Vector gradient;
  double intercept = 0.0;

  double value_at(std::span<const double> x) const { return dot(gradient, x) + intercept; }
};

/// Builds the cut through (x, value) with slope `gradient`.
inline Cut make_cut(std::size_t component, std::span<const double> x, double value,
                    std::span<const double> gradient, std::int64_t iteration) {
  if (x.size() != gradient.size()) throw InvalidInput("make_cut: point and gradient dimensions differ");
  if (!std::isfinite(value) || !all_finite(gradient))
    throw InvalidInput("make_cut: non-finite value or gradient for component " + std::to_string(component));
  Cut cut;
  cut.component = component;
  cut.birth_iter = iteration;
  cut.gradient.assign(gradient.begin(), gradient.end());
  cut.intercept = value - dot(gradient, x);
  return cut;
}

/// Memory size: number of most recent iterations whose cuts are kept.
class Window {
 public:
  explicit Window(std::size_t size) : size_(size) {
    if (size == 0) throw ConfigError("window size must be at least 1");
  }
  static Window infinite() { return Window(); }

  bool is_infinite() const noexcept { return size_ == kInfinite; }
  std::size_t size() const {
    if (is_infinite()) throw ConfigError("infinite window has no finite size");
    return size_;
  }

  /// Oldest birth iteration still retained at iteration k.
  std::int64_t oldest_retained(std::int64_t k) const {
    if (is_infinite()) return std::numeric_limits<std::int64_t>::min();
    return k - static_cast<std::int64_t>(size_) + 1;
  }

  /// Largest lag l admitted at iteration k (min(k, W - 1)).
  std::int64_t max_lag(std::int64_t k) const {
    if (is_infinite()) return k;
    return std::min<std::int64_t>(k, static_cast<std::int64_t>(size_) - 1);
  }

  std::string to_string() const { return is_infinite() ? "inf" : std::to_string(size_); }

  friend bool operator==(const Window&, const Window&) = default;

 private:
  static constexpr std::size_t kInfinite = std::numeric_limits<std::size_t>::max();
  Window() : size_(kInfinite) {}
  std::size_t size_;
};

/// Per-component cut collection, in birth order.
struct Bundle {
  std::size_t component = 0;
  std::vector<Cut> cuts;

  bool empty() const noexcept { return cuts.empty(); }
  std::size_t size() const noexcept { return cuts.size(); }

  /// Duplicates are kept; they do not change the max.
  void add(Cut cut) {
    if (!cuts.empty() && cut.birth_iter < cuts.back().birth_iter)
      throw InvalidInput("bundle cuts must be appended in birth order");
    cuts.push_back(std::move(cut));
  }

  /// Drops cuts born before k - W + 1; returns how many were removed
  /// (always a prefix, since cuts are kept in birth order).
  std::size_t prune(std::int64_t k, const Window& window) {
    const std::int64_t oldest = window.oldest_retained(k);
    auto keep = std::find_if(cuts.begin(), cuts.end(),
                             [oldest](const Cut& c) { return c.birth_iter >= oldest; });
    const auto removed = static_cast<std::size_t>(keep - cuts.begin());
    cuts.erase(cuts.begin(), keep);
    return removed;
  }

  /// Pointwise max of the cuts; 0 for an empty bundle.
  double model_value(std::span<const double> x) const {
    if (cuts.empty()) return 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (const Cut& c : cuts) best = std::max(best, c.value_at(x));
    return best;
  }
};

inline Bundle prune_bundle(Bundle bundle, std::int64_t k, const Window& window) {
  bundle.prune(k, window);
  return bundle;
}

inline double model_value(const Bundle& bundle, std::span<const double> x) { return bundle.model_value(x); }

/// Lags l in [0, min(k, W-1)] such that component i was evaluated at
/// iteration k - l. `history[j]` lists the components evaluated at iteration j.
inline std::vector<std::int64_t> window_set(std::int64_t k, std::size_t component, const Window& window,
                                            std::span<const std::vector<std::size_t>> history) {
  if (k < 0 || static_cast<std::size_t>(k) >= history.size())
    throw InvalidInput("window_set: history does not cover iteration " + std::to_string(k));
  std::vector<std::int64_t> lags;
  for (std::int64_t l = 0; l <= window.max_lag(k); ++l) {
    const auto& batch = history[static_cast<std::size_t>(k - l)];
    if (std::find(batch.begin(), batch.end(), component) != batch.end()) lags.push_back(l);
  }
  return lags;
}

}  // namespace icp
