#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "icp/box_set.hpp"
#include "icp/errors.hpp"
#include "icp/linalg.hpp"
#include "icp/oracle.hpp"
#include "icp/uc/instance.hpp"
#include "icp/uc/unit.hpp"

namespace icp::uc {

/// Dual point layout: x = (lambda_1..lambda_T, mu_1..mu_T).
inline std::span<const double> load_multipliers(std::span<const double> x, std::size_t n_t) { return x.first(n_t); }
inline std::span<const double> reserve_multipliers(std::span<const double> x, std::size_t n_t) {
  return x.subspan(n_t, n_t);
}

/// Negated Lagrangian term of one generator, with a 1/n_G share of the
/// dualized demand and reserve requirements:
///   f_g(lambda, mu) = max_schedule [lambda.p + mu.(p_max on - p) - cost]
///                     - (lambda.P_d + mu.P_r) / n_G
class GeneratorDualOracle final : public ComponentOracle {
 public:
  GeneratorDualOracle(std::shared_ptr<const Instance> instance, std::size_t generator, UnitLevels levels)
      : ComponentOracle(BoxSet::nonnegative_orthant(2 * instance->n_t()), bound(*instance, generator)),
        instance_(std::move(instance)),
        generator_(generator),
        levels_(std::move(levels)) {}

  /// sqrt(sum_t (p_max + P_d/n_G)^2 + sum_t (p_max + P_r/n_G)^2)
  static double bound(const Instance& inst, std::size_t g) {
    const double share = 1.0 / static_cast<double>(inst.n_g());
    const double p_max = inst.generators.at(g).p_max;
    double s = 0.0;
    for (std::size_t t = 0; t < inst.n_t(); ++t) {
      const double a = p_max + inst.demand[t] * share;
      const double b = p_max + inst.reserve[t] * share;
      s += a * a + b * b;
    }
    return std::sqrt(s);
  }

  std::size_t generator() const noexcept { return generator_; }
  const UnitLevels& levels() const noexcept { return levels_; }

  UnitDecision best_response(std::span<const double> x) const {
    const std::size_t n_t = instance_->n_t();
    return solve_unit_dp(instance_->generators[generator_], load_multipliers(x, n_t), reserve_multipliers(x, n_t),
                         levels_);
  }

 private:
  Evaluation do_evaluate(std::span<const double> x) const override {
    const Instance& inst = *instance_;
    const std::size_t n_t = inst.n_t();
    const double share = 1.0 / static_cast<double>(inst.n_g());
    const double p_max = inst.generators[generator_].p_max;
    const UnitDecision d = best_response(x);
    Evaluation e;
    e.value = d.value;
    e.subgradient.resize(2 * n_t);
    for (std::size_t t = 0; t < n_t; ++t) {
      e.value -= share * (x[t] * inst.demand[t] + x[n_t + t] * inst.reserve[t]);
      e.subgradient[t] = d.schedule.power[t] - share * inst.demand[t];
      e.subgradient[n_t + t] = p_max * d.schedule.on[t] - d.schedule.power[t] - share * inst.reserve[t];
    }
    return e;
  }

  std::shared_ptr<const Instance> instance_;
  std::size_t generator_;
  UnitLevels levels_;
};

/// Decomposes the dual by generator: m = n_G components over the nonnegative
/// orthant of R^{2 n_T}. Minimizing their sum maximizes the dual bound.
inline Problem dualize(std::shared_ptr<const Instance> instance, const PowerGrid& grid) {
  instance->validate();
  if (grid.size() != instance->n_g()) throw InstanceError("power grid does not cover every generator");
  Problem problem{{}, BoxSet::nonnegative_orthant(2 * instance->n_t())};
  for (std::size_t g = 0; g < instance->n_g(); ++g) {
    const auto& lv = grid[g].on_levels;
    const auto& u = instance->generators[g];
    if (lv.empty() || lv.front() < u.p_min - kPowerTolerance || lv.back() > u.p_max + kPowerTolerance)
      throw InstanceError("power grid levels outside [p_min, p_max] for generator " + std::to_string(g));
    problem.components.push_back(std::make_shared<GeneratorDualOracle>(instance, g, grid[g]));
  }
  return problem;
}

inline Problem dualize(const Instance& instance, const PowerGrid& grid) {
  return dualize(std::make_shared<const Instance>(instance), grid);
}

/// sum_g f_g(x); its negation is a lower bound on the discretized primal cost.
inline double dual_value(const Instance& instance, const PowerGrid& grid, std::span<const double> x) {
  return dualize(instance, grid).objective(x);
}

struct PrimalReport {
  double cost = 0.0;
  /// 1-based periods where supply falls short of demand.
  std::vector<std::size_t> load_shortfalls;
  /// 1-based periods where spinning reserve falls short.
  std::vector<std::size_t> reserve_shortfalls;
  /// Per-generator constraint violations.
  std::vector<std::vector<std::string>> unit_violations;

  bool feasible() const {
    if (!load_shortfalls.empty() || !reserve_shortfalls.empty()) return false;
    for (const auto& v : unit_violations)
      if (!v.empty()) return false;
    return true;
  }
};

inline PrimalReport primal_cost(const Instance& instance, std::span<const UnitSchedule> schedules) {
  if (schedules.size() != instance.n_g()) throw InvalidInput("primal_cost: one schedule per generator required");
  const std::size_t n_t = instance.n_t();
  PrimalReport r;
  Vector supply(n_t, 0.0), spare(n_t, 0.0);
  for (std::size_t g = 0; g < instance.n_g(); ++g) {
    const auto& u = instance.generators[g];
    const auto& s = schedules[g];
    if (s.size() != n_t || s.power.size() != n_t) throw InvalidInput("primal_cost: schedule length mismatch");
    r.cost += schedule_cost(u, s);
    r.unit_violations.push_back(icp::uc::unit_violations(u, s));
    for (std::size_t t = 0; t < n_t; ++t) {
      supply[t] += s.power[t];
      spare[t] += u.p_max * s.on[t] - s.power[t];
    }
  }
  for (std::size_t t = 0; t < n_t; ++t) {
    if (supply[t] < instance.demand[t] - kPowerTolerance) r.load_shortfalls.push_back(t + 1);
    if (spare[t] < instance.reserve[t] - kPowerTolerance) r.reserve_shortfalls.push_back(t + 1);
  }
  return r;
}

}  // namespace icp::uc
