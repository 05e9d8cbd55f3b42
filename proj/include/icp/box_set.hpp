#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "icp/errors.hpp"
#include "icp/linalg.hpp"

namespace icp {

/// Axis-aligned box {x : lower <= x <= upper}; infinite bounds allowed.
class BoxSet {
 public:
  BoxSet(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size())
      throw InvalidInput("box bounds have different dimensions");
    for (std::size_t j = 0; j < lower_.size(); ++j) {
      if (std::isnan(lower_[j]) || std::isnan(upper_[j]))
        throw InvalidInput("box bound is NaN at coordinate " + std::to_string(j));
      if (lower_[j] == kInf || upper_[j] == -kInf || lower_[j] > upper_[j])
        throw InvalidInput("empty box at coordinate " + std::to_string(j));
    }
  }

  static BoxSet whole_space(std::size_t n) { return BoxSet(Vector(n, -kInf), Vector(n, kInf)); }
  static BoxSet nonnegative_orthant(std::size_t n) { return BoxSet(Vector(n, 0.0), Vector(n, kInf)); }

  std::size_t dimension() const noexcept { return lower_.size(); }
  const Vector& lower() const noexcept { return lower_; }
  const Vector& upper() const noexcept { return upper_; }

  bool contains(std::span<const double> x, double tolerance = 0.0) const {
    if (x.size() != dimension()) return false;
    for (std::size_t j = 0; j < x.size(); ++j)
      if (!(x[j] >= lower_[j] - tolerance && x[j] <= upper_[j] + tolerance)) return false;
    return true;
  }

  double clamp(std::size_t j, double v) const { return std::clamp(v, lower_[j], upper_[j]); }

  void project_in_place(std::span<double> v) const {
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = clamp(j, v[j]);
  }

  Vector project(std::span<const double> v) const {
    Vector out(v.begin(), v.end());
    project_in_place(out);
    return out;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  Vector lower_;
  Vector upper_;
};

/// Euclidean projection onto a box: componentwise clamp.
inline Vector project(const BoxSet& box, std::span<const double> v) {
  if (v.size() != box.dimension()) throw InvalidInput("projection: dimension mismatch");
  return box.project(v);
}

}  // namespace icp
