#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "icp/errors.hpp"
#include "icp/linalg.hpp"
#include "icp/schedule.hpp"

namespace icp::uc {

/// Thermal unit data. Costs are per period (no-load), per MWh (marginal) and
/// per start; powers in MW; ramps in MW per period; min up/down in periods.
struct Generator {
  double c_nl = 0.0;
  double c_mr = 0.0;
  double c_up = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double p_ru = 0.0;
  double p_rd = 0.0;
  double p_su = 0.0;
  double p_sd = 0.0;
  int t_u = 1;
  int t_d = 1;

  friend bool operator==(const Generator&, const Generator&) = default;
};

/// Every unit starts off with its minimum downtime already served.
struct Instance {
  std::vector<Generator> generators;
  Vector demand;
  Vector reserve;

  std::size_t n_g() const noexcept { return generators.size(); }
  std::size_t n_t() const noexcept { return demand.size(); }

  void validate() const {
    if (generators.empty()) throw InstanceError("instance has no generators");
    if (demand.empty()) throw InstanceError("instance has no periods");
    if (reserve.size() != demand.size()) throw InstanceError("reserve and demand lengths differ");
    for (std::size_t t = 0; t < demand.size(); ++t)
      if (!std::isfinite(demand[t]) || !std::isfinite(reserve[t]) || demand[t] < 0.0 || reserve[t] < 0.0)
        throw InstanceError("demand and reserve must be finite and nonnegative (period " + std::to_string(t + 1) + ")");
    for (std::size_t g = 0; g < generators.size(); ++g) {
      const Generator& u = generators[g];
      const std::string where = " (generator " + std::to_string(g) + ")";
      for (double v : {u.c_nl, u.c_mr, u.c_up, u.p_min, u.p_max, u.p_ru, u.p_rd, u.p_su, u.p_sd})
        if (!std::isfinite(v) || v < 0.0) throw InstanceError("parameters must be finite and nonnegative" + where);
      if (u.p_min > u.p_max) throw InstanceError("p_min exceeds p_max" + where);
      if (u.p_max <= 0.0) throw InstanceError("p_max must be positive" + where);
      if (u.t_u < 1 || u.t_d < 1) throw InstanceError("minimum up/down times must be at least 1" + where);
      if (u.p_su < u.p_min || u.p_sd < u.p_min) throw InstanceError("startup/shutdown ramps below p_min" + where);
    }
  }

  friend bool operator==(const Instance&, const Instance&) = default;
};

/// Parameter ranges for generated instances.
struct GeneratorRanges {
  double p_max_lo = 100.0, p_max_hi = 400.0;
  double p_min_frac_lo = 0.25, p_min_frac_hi = 0.5;
  double c_mr_lo = 10.0, c_mr_hi = 40.0;
  double c_nl_per_mw_lo = 1.0, c_nl_per_mw_hi = 4.0;
  double c_up_per_mw_lo = 2.0, c_up_per_mw_hi = 10.0;
  double ramp_frac_lo = 0.3, ramp_frac_hi = 0.7;
  double startup_frac_lo = 0.5, startup_frac_hi = 0.9;
  int min_updown_lo = 1, min_updown_hi = 6;
  /// sum(p_max) / max(demand)
  double capacity_margin = 1.5;
  double reserve_fraction = 0.1;
  /// Demand at the daily trough relative to the peak.
  double trough = 0.6;
  double demand_noise = 0.02;
};

/// Seeded synthetic instance: daily sinusoidal demand (trough at the first
/// period) with multiplicative noise, scaled to the fleet capacity margin.
inline Instance generate_instance(std::uint64_t seed, std::size_t n_g, std::size_t n_t,
                                  const GeneratorRanges& r = {}) {
  if (n_g == 0 || n_t == 0) throw InstanceError("instance sizes must be positive");
  std::mt19937_64 rng(icp::detail::splitmix64(seed));
  auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * icp::detail::unit_interval(rng); };
  auto integer = [&rng](int lo, int hi) {
    return lo + static_cast<int>(icp::detail::bounded(rng, static_cast<std::uint64_t>(hi - lo + 1)));
  };

  Instance inst;
  double capacity = 0.0;
  for (std::size_t g = 0; g < n_g; ++g) {
    Generator u;
    u.p_max = uniform(r.p_max_lo, r.p_max_hi);
    u.p_min = u.p_max * uniform(r.p_min_frac_lo, r.p_min_frac_hi);
    u.c_mr = uniform(r.c_mr_lo, r.c_mr_hi);
    u.c_nl = u.p_max * uniform(r.c_nl_per_mw_lo, r.c_nl_per_mw_hi);
    u.c_up = u.p_max * uniform(r.c_up_per_mw_lo, r.c_up_per_mw_hi);
    u.p_ru = u.p_max * uniform(r.ramp_frac_lo, r.ramp_frac_hi);
    u.p_rd = u.p_ru;
    u.p_su = std::max(u.p_min, u.p_max * uniform(r.startup_frac_lo, r.startup_frac_hi));
    u.p_sd = u.p_su;
    const int cap = static_cast<int>(std::min<std::size_t>(n_t, static_cast<std::size_t>(r.min_updown_hi)));
    const int hi = std::max(r.min_updown_lo, cap);
    u.t_u = integer(r.min_updown_lo, hi);
    u.t_d = integer(r.min_updown_lo, hi);
    capacity += u.p_max;
    inst.generators.push_back(u);
  }

  inst.demand.resize(n_t);
  double peak = 0.0;
  for (std::size_t t = 0; t < n_t; ++t) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / 24.0;
    const double shape = r.trough + (1.0 - r.trough) * 0.5 * (1.0 - std::cos(phase));
    // Box-Muller keeps the noise stream identical across standard libraries.
    const double u1 = 1.0 - icp::detail::unit_interval(rng);
    const double u2 = icp::detail::unit_interval(rng);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    inst.demand[t] = std::max(0.0, shape * (1.0 + r.demand_noise * z));
    peak = std::max(peak, inst.demand[t]);
  }
  const double scale = peak > 0.0 ? capacity / r.capacity_margin / peak : 0.0;
  inst.reserve.resize(n_t);
  for (std::size_t t = 0; t < n_t; ++t) {
    inst.demand[t] *= scale;
    inst.reserve[t] = r.reserve_fraction * inst.demand[t];
  }
  inst.validate();
  return inst;
}

inline nlohmann::json to_json(const Instance& inst) {
  nlohmann::json j;
  j["n_G"] = inst.n_g();
  j["n_T"] = inst.n_t();
  j["generators"] = nlohmann::json::array();
  for (const auto& u : inst.generators)
    j["generators"].push_back({{"c_nl", u.c_nl}, {"c_mr", u.c_mr}, {"c_up", u.c_up}, {"p_min", u.p_min},
                               {"p_max", u.p_max}, {"p_ru", u.p_ru}, {"p_rd", u.p_rd}, {"p_su", u.p_su},
                               {"p_sd", u.p_sd}, {"t_u", u.t_u}, {"t_d", u.t_d}});
  j["demand"] = inst.demand;
  j["reserve"] = inst.reserve;
  return j;
}

inline Instance instance_from_json(const nlohmann::json& j) {
  Instance inst;
  try {
    const auto n_g = j.at("n_G").get<std::size_t>();
    const auto n_t = j.at("n_T").get<std::size_t>();
    for (const auto& g : j.at("generators")) {
      Generator u;
      u.c_nl = g.at("c_nl").get<double>();
      u.c_mr = g.at("c_mr").get<double>();
      u.c_up = g.at("c_up").get<double>();
      u.p_min = g.at("p_min").get<double>();
      u.p_max = g.at("p_max").get<double>();
      u.p_ru = g.at("p_ru").get<double>();
      u.p_rd = g.at("p_rd").get<double>();
      u.p_su = g.at("p_su").get<double>();
      u.p_sd = g.at("p_sd").get<double>();
      u.t_u = g.at("t_u").get<int>();
      u.t_d = g.at("t_d").get<int>();
      inst.generators.push_back(u);
    }
    inst.demand = j.at("demand").get<Vector>();
    inst.reserve = j.at("reserve").get<Vector>();
    if (inst.generators.size() != n_g) throw InstanceError("n_G does not match the generator list");
    if (inst.demand.size() != n_t) throw InstanceError("n_T does not match the demand length");
  } catch (const nlohmann::json::exception& e) {
    throw InstanceError(std::string("malformed instance JSON: ") + e.what());
  }
  inst.validate();
  return inst;
}

inline Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InstanceError("cannot open instance file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InstanceError("cannot parse instance file " + path + ": " + e.what());
  }
  return instance_from_json(j);
}

inline void save_instance(const Instance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InstanceError("cannot write instance file " + path);
  out << to_json(inst).dump(2) << '\n';
}

/// Warmstart dual point: JSON array of 2 n_T nonnegative numbers, the load
/// multipliers followed by the reserve multipliers.
inline Vector load_warmstart(const std::string& path, std::size_t n_t) {
  std::ifstream in(path);
  if (!in) throw InstanceError("cannot open warmstart file " + path);
  Vector x;
  try {
    nlohmann::json j;
    in >> j;
    x = j.get<Vector>();
  } catch (const nlohmann::json::exception& e) {
    throw InstanceError("malformed warmstart file " + path + ": " + e.what());
  }
  if (x.size() != 2 * n_t)
    throw InstanceError("warmstart has " + std::to_string(x.size()) + " entries, expected " + std::to_string(2 * n_t));
  for (double v : x)
    if (!std::isfinite(v) || v < 0.0) throw InstanceError("warmstart entries must be finite and nonnegative");
  return x;
}

}  // namespace icp::uc
