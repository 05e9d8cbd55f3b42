#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icp/box_set.hpp"
#include "icp/errors.hpp"
#include "icp/linalg.hpp"

namespace icp {

struct Evaluation {
  double value = 0.0;
  Vector subgradient;
};

/// One convex component f_i: value and a subgradient at points of its domain.
/// Implementations are immutable once built, so evaluation is thread-safe.
class ComponentOracle {
 public:
  virtual ~ComponentOracle() = default;

  Evaluation evaluate(std::span<const double> x) const {
    if (x.size() != dimension()) throw DomainError("oracle: point has wrong dimension");
    if (!domain_.contains(x)) throw DomainError("oracle: point lies outside the domain");
    Evaluation e = do_evaluate(x);
    if (!std::isfinite(e.value) || !all_finite(e.subgradient))
      throw InvalidInput("oracle returned a non-finite value or subgradient");
    return e;
  }

  std::size_t dimension() const noexcept { return domain_.dimension(); }
  const BoxSet& domain() const noexcept { return domain_; }
  /// C_i with ||g|| <= C_i on the domain, when known analytically.
  std::optional<double> subgradient_bound() const noexcept { return bound_; }

 protected:
  ComponentOracle(BoxSet domain, std::optional<double> bound) : domain_(std::move(domain)), bound_(bound) {}

 private:
  virtual Evaluation do_evaluate(std::span<const double> x) const = 0;

  BoxSet domain_;
  std::optional<double> bound_;
};

using OraclePtr = std::shared_ptr<const ComponentOracle>;

/// f(x) = ||x - center||_1, with sign(0) := +1 at kinks.
class AbsDeviationOracle final : public ComponentOracle {
 public:
  AbsDeviationOracle(Vector center, BoxSet domain)
      : ComponentOracle(std::move(domain), std::sqrt(static_cast<double>(center.size()))),
        center_(std::move(center)) {
    if (center_.size() != dimension()) throw InvalidInput("abs oracle: center dimension mismatch");
  }

  const Vector& center() const noexcept { return center_; }

 private:
  Evaluation do_evaluate(std::span<const double> x) const override {
    Evaluation e;
    e.subgradient.resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = x[j] - center_[j];
      e.value += std::abs(d);
      e.subgradient[j] = d >= 0.0 ? 1.0 : -1.0;
    }
    return e;
  }

  Vector center_;
};

/// f(x) = max_j (<slopes_j, x> + offsets_j); ties resolve to the lowest j.
class MaxAffineOracle final : public ComponentOracle {
 public:
  MaxAffineOracle(std::vector<Vector> slopes, Vector offsets, BoxSet domain)
      : ComponentOracle(std::move(domain), max_norm(slopes)), slopes_(std::move(slopes)), offsets_(std::move(offsets)) {
    if (slopes_.empty() || slopes_.size() != offsets_.size())
      throw InvalidInput("max-affine oracle needs matching, nonempty slopes and offsets");
    for (const auto& a : slopes_)
      if (a.size() != dimension()) throw InvalidInput("max-affine oracle: slope dimension mismatch");
  }

 private:
  static double max_norm(const std::vector<Vector>& slopes) {
    double c = 0.0;
    for (const auto& a : slopes) c = std::max(c, norm(a));
    return c;
  }

  Evaluation do_evaluate(std::span<const double> x) const override {
    std::size_t best = 0;
    double best_value = dot(slopes_[0], x) + offsets_[0];
    for (std::size_t j = 1; j < slopes_.size(); ++j) {
      const double v = dot(slopes_[j], x) + offsets_[j];
      if (v > best_value) {
        best_value = v;
        best = j;
      }
    }
    return {best_value, slopes_[best]};
  }

  std::vector<Vector> slopes_;
  Vector offsets_;
};

/// f(x) = <slope, x> + offset. A zero slope gives a constant component.
class AffineOracle final : public ComponentOracle {
 public:
  AffineOracle(Vector slope, double offset, BoxSet domain)
      : ComponentOracle(std::move(domain), norm(slope)), slope_(std::move(slope)), offset_(offset) {
    if (slope_.size() != dimension()) throw InvalidInput("affine oracle: slope dimension mismatch");
  }

 private:
  Evaluation do_evaluate(std::span<const double> x) const override { return {dot(slope_, x) + offset_, slope_}; }

  Vector slope_;
  double offset_;
};

/// f = sum_i f_i over a box X.
struct Problem {
  std::vector<OraclePtr> components;
  BoxSet domain;

  std::size_t size() const noexcept { return components.size(); }
  std::size_t dimension() const noexcept { return domain.dimension(); }

  double objective(std::span<const double> x) const {
    double f = 0.0;
    for (const auto& c : components) f += c->evaluate(x).value;
    return f;
  }

  /// max_i C_i when every component declares a bound.
  std::optional<double> subgradient_bound() const {
    double c = 0.0;
    for (const auto& comp : components) {
      const auto b = comp->subgradient_bound();
      if (!b) return std::nullopt;
      c = std::max(c, *b);
    }
    return c;
  }
};

/// Problem with a known optimal value and one minimizer.
struct SyntheticProblem {
  Problem problem;
  double f_star = 0.0;
  Vector minimizer;
};

/// sum_i ||x - c_i||_1 over a box. The objective separates by coordinate; in
/// each coordinate the minimum over an interval is attained at a center
/// coordinate or an interval end, so enumerating those candidates is exact.
inline SyntheticProblem make_abs_problem(const std::vector<Vector>& centers, const BoxSet& box) {
  if (centers.empty()) throw InvalidInput("abs problem needs at least one component");
  const std::size_t n = box.dimension();
  SyntheticProblem sp{Problem{{}, box}, 0.0, Vector(n, 0.0)};
  for (const auto& c : centers) {
    if (c.size() != n) throw InvalidInput("abs problem: center dimension mismatch");
    if (!box.contains(c)) throw InvalidInput("abs problem: center outside the feasible box");
    sp.problem.components.push_back(std::make_shared<AbsDeviationOracle>(c, box));
  }

  const bool unbounded = std::all_of(box.lower().begin(), box.lower().end(), [](double v) { return std::isinf(v); }) &&
                         std::all_of(box.upper().begin(), box.upper().end(), [](double v) { return std::isinf(v); });
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> coords;
    for (const auto& c : centers) coords.push_back(c[j]);
    std::sort(coords.begin(), coords.end());
    if (unbounded) {
      // Lower median; any point between the two middle values is optimal.
      sp.minimizer[j] = coords[(coords.size() - 1) / 2];
    } else {
      std::vector<double> candidates = coords;
      if (std::isfinite(box.lower()[j])) candidates.push_back(box.lower()[j]);
      if (std::isfinite(box.upper()[j])) candidates.push_back(box.upper()[j]);
      double best = std::numeric_limits<double>::infinity();
      for (double v : candidates) {
        if (v < box.lower()[j] || v > box.upper()[j]) continue;
        double s = 0.0;
        for (double c : coords) s += std::abs(v - c);
        if (s < best) {
          best = s;
          sp.minimizer[j] = v;
        }
      }
    }
  }
  sp.f_star = sp.problem.objective(sp.minimizer);
  return sp;
}

}  // namespace icp
