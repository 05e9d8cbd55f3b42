#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "icp/errors.hpp"
#include "icp/linalg.hpp"
#include "icp/uc/instance.hpp"

namespace icp::uc {

/// Slack (MW) when comparing power levels against limits.
inline constexpr double kPowerTolerance = 1e-7;

/// One generator's trajectory: commitment, startup and shutdown indicators
/// and power output per period.
struct UnitSchedule {
  std::vector<int> on;
  std::vector<int> start;
  std::vector<int> stop;
  Vector power;

  std::size_t size() const noexcept { return on.size(); }

  static UnitSchedule all_off(std::size_t n_t) {
    return {std::vector<int>(n_t, 0), std::vector<int>(n_t, 0), std::vector<int>(n_t, 0), Vector(n_t, 0.0)};
  }

  /// Derives startup/shutdown indicators from commitment, starting off.
  static UnitSchedule from_commitment(std::vector<int> on, Vector power) {
    UnitSchedule s;
    const std::size_t n = on.size();
    s.start.assign(n, 0);
    s.stop.assign(n, 0);
    int prev = 0;
    for (std::size_t t = 0; t < n; ++t) {
      s.start[t] = on[t] > prev ? 1 : 0;
      s.stop[t] = on[t] < prev ? 1 : 0;
      prev = on[t];
    }
    s.on = std::move(on);
    s.power = std::move(power);
    return s;
  }

  friend bool operator==(const UnitSchedule&, const UnitSchedule&) = default;
};

/// Admissible output levels when on: p_min, p_min + delta, ..., p_max.
struct UnitLevels {
  Vector on_levels;

  /// Every admissible output including 0 (off).
  Vector levels() const {
    Vector all{0.0};
    for (double v : on_levels)
      if (v != 0.0) all.push_back(v);
    return all;
  }
};

inline UnitLevels make_levels(const Generator& g, std::size_t divisions = 8) {
  if (divisions == 0) throw InvalidInput("power grid needs at least one division");
  UnitLevels lv;
  if (g.p_max == g.p_min) {
    lv.on_levels = {g.p_min};
    return lv;
  }
  const double delta = (g.p_max - g.p_min) / static_cast<double>(divisions);
  for (std::size_t j = 0; j < divisions; ++j) lv.on_levels.push_back(g.p_min + static_cast<double>(j) * delta);
  lv.on_levels.push_back(g.p_max);
  return lv;
}

using PowerGrid = std::vector<UnitLevels>;

inline PowerGrid make_grid(const Instance& inst, std::size_t divisions = 8) {
  PowerGrid grid;
  for (const auto& g : inst.generators) grid.push_back(make_levels(g, divisions));
  return grid;
}

/// Checks one unit's trajectory against the per-generator constraint
/// families (bounds, ramps, minimum up/down, switching). The unit is off
/// before the first period, so startup and shutdown ramps apply from t = 1.
/// Returns one message per violated constraint; empty means feasible.
inline std::vector<std::string> unit_violations(const Generator& g, const UnitSchedule& s) {
  std::vector<std::string> out;
  const std::size_t n = s.on.size();
  if (s.start.size() != n || s.stop.size() != n || s.power.size() != n) {
    out.push_back("schedule vectors have inconsistent lengths");
    return out;
  }
  auto flag = [&out](const std::string& what, std::size_t t) { out.push_back(what + " at t=" + std::to_string(t + 1)); };
  const double tol = kPowerTolerance;
  for (std::size_t t = 0; t < n; ++t) {
    const int a = s.on[t], up = s.start[t], dn = s.stop[t];
    if ((a != 0 && a != 1) || (up != 0 && up != 1) || (dn != 0 && dn != 1)) {
      flag("non-binary indicator", t);
      continue;
    }
    const double p = s.power[t];
    const int a_prev = t == 0 ? 0 : s.on[t - 1];
    const double p_prev = t == 0 ? 0.0 : s.power[t - 1];
    if (p < g.p_min * a - tol || p > g.p_max * a + tol) flag("output bounds", t);
    if (p - p_prev > g.p_ru * a_prev + g.p_su * up + tol) flag("ramp up", t);
    if (p_prev - p > g.p_rd * a + g.p_sd * dn + tol) flag("ramp down", t);

    int starts = 0, stops = 0;
    const std::size_t up_from = t + 1 >= static_cast<std::size_t>(g.t_u) ? t + 1 - static_cast<std::size_t>(g.t_u) : 0;
    const std::size_t dn_from = t + 1 >= static_cast<std::size_t>(g.t_d) ? t + 1 - static_cast<std::size_t>(g.t_d) : 0;
    for (std::size_t i = up_from; i <= t; ++i) starts += s.start[i];
    for (std::size_t i = dn_from; i <= t; ++i) stops += s.stop[i];
    if (starts > a) flag("minimum uptime", t);
    if (stops > 1 - a) flag("minimum downtime", t);

    if (a - a_prev != up - dn) flag("switching balance", t);
    if (up + dn > 1) flag("simultaneous start and stop", t);
  }
  return out;
}

inline double schedule_cost(const Generator& g, const UnitSchedule& s) {
  double c = 0.0;
  for (std::size_t t = 0; t < s.size(); ++t) c += g.c_nl * s.on[t] + g.c_mr * s.power[t] + g.c_up * s.start[t];
  return c;
}

struct UnitDecision {
  /// max over the discretized feasible set of
  /// sum_t lambda_t p_t + mu_t (p_max on_t - p_t) - cost
  double value = 0.0;
  UnitSchedule schedule;
};

/// Exact maximization of the priced unit problem over the discretized
/// feasible set by dynamic programming over (period, commitment counter,
/// output level). Off states count periods off (saturating at t_d), on states
/// count periods on (saturating at t_u).
inline UnitDecision solve_unit_dp(const Generator& g, std::span<const double> lambda, std::span<const double> mu,
                                  const UnitLevels& levels) {
  const std::size_t n_t = lambda.size();
  if (mu.size() != n_t) throw InvalidInput("unit DP: multiplier lengths differ");
  for (std::size_t t = 0; t < n_t; ++t)
    if (!(lambda[t] >= 0.0) || !(mu[t] >= 0.0) || !std::isfinite(lambda[t]) || !std::isfinite(mu[t]))
      throw DomainError("unit DP: multipliers must be finite and nonnegative");

  const auto& lv = levels.on_levels;
  const std::size_t L = lv.size();
  const auto Tu = static_cast<std::size_t>(g.t_u);
  const auto Td = static_cast<std::size_t>(g.t_d);
  // State ids: off counter c in [1, Td] -> c - 1; on counter c in [1, Tu] at level j -> Td + (c - 1) L + j.
  const std::size_t n_states = Td + Tu * L;
  auto off_id = [](std::size_t c) { return c - 1; };
  auto on_id = [Td, L](std::size_t c, std::size_t j) { return Td + (c - 1) * L + j; };
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

  std::vector<double> value(n_states, kNone), next(n_states);
  std::vector<std::size_t> parent(n_t * n_states, kNoParent);
  value[off_id(Td)] = 0.0;

  std::vector<double> on_reward(L);
  for (std::size_t t = 0; t < n_t; ++t) {
    std::fill(next.begin(), next.end(), kNone);
    std::size_t* par = parent.data() + t * n_states;
    for (std::size_t j = 0; j < L; ++j) {
      const double p = lv[j];
      on_reward[j] = lambda[t] * p + mu[t] * (g.p_max - p) - (g.c_nl + g.c_mr * p);
    }
    auto relax = [&](std::size_t to, std::size_t from, double v) {
      if (v > next[to]) {
        next[to] = v;
        par[to] = from;
      }
    };
    // Predecessors in fixed order (off states, then on states) with strict
    // improvement, so ties resolve deterministically toward staying off.
    for (std::size_t c = 1; c <= Td; ++c) {
      const std::size_t from = off_id(c);
      if (value[from] == kNone) continue;
      relax(off_id(std::min(c + 1, Td)), from, value[from]);
      if (c == Td)
        for (std::size_t j = 0; j < L; ++j)
          if (lv[j] <= g.p_su + kPowerTolerance) relax(on_id(1, j), from, value[from] + on_reward[j] - g.c_up);
    }
    for (std::size_t c = 1; c <= Tu; ++c) {
      for (std::size_t j = 0; j < L; ++j) {
        const std::size_t from = on_id(c, j);
        if (value[from] == kNone) continue;
        if (c == Tu && lv[j] <= g.p_sd + kPowerTolerance) relax(off_id(1), from, value[from]);
        const std::size_t c_next = std::min(c + 1, Tu);
        for (std::size_t jn = 0; jn < L; ++jn) {
          const double change = lv[jn] - lv[j];
          if (change > g.p_ru + kPowerTolerance || -change > g.p_rd + kPowerTolerance) continue;
          relax(on_id(c_next, jn), from, value[from] + on_reward[jn]);
        }
      }
    }
    value.swap(next);
  }

  std::size_t best = kNoParent;
  double best_value = kNone;
  for (std::size_t s = 0; s < n_states; ++s)
    if (value[s] > best_value) {
      best_value = value[s];
      best = s;
    }
  if (best == kNoParent) throw InstanceError("unit has no feasible discretized schedule");

  std::vector<int> on(n_t, 0);
  Vector power(n_t, 0.0);
  std::size_t state = best;
  for (std::size_t t = n_t; t-- > 0;) {
    if (state >= Td) {
      on[t] = 1;
      power[t] = lv[(state - Td) % L];
    }
    state = parent[t * n_states + state];
  }
  return {best_value, UnitSchedule::from_commitment(std::move(on), std::move(power))};
}

}  // namespace icp::uc
