#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "icp/errors.hpp"
#include "icp/oracle.hpp"
#include "icp/schedule.hpp"
#include "icp/solver.hpp"
#include "icp/uc/dual.hpp"
#include "icp/uc/instance.hpp"

namespace icp::experiment {

inline constexpr const char* kTraceHeader = "k,t_k,cum_evals,wall_s,f_xk,dual_bound";
inline constexpr const char* kSummaryHeader = "cell,p_over_m,stepsize_adjusted,W,start,tol,time_s,comp_eval,iter";
inline constexpr const char* kNotReached = "not-reached";

/// Shortest decimal that round-trips; empty for NaN.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_number(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw InvalidInput("not a number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// ---- trace files ----------------------------------------------------------

inline void write_trace_csv(std::ostream& out, std::span<const IterationRecord> rows) {
  out << kTraceHeader << '\n';
  for (const auto& r : rows)
    out << r.k << ',' << format_number(r.step) << ',' << r.cum_evals << ',' << format_number(r.wall_s) << ','
        << format_number(r.f_xk) << ',' << format_number(-r.f_xk) << '\n';
}

inline std::vector<IterationRecord> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw InvalidInput("trace CSV: unexpected header");
  std::vector<IterationRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw InvalidInput("trace CSV: expected 6 fields in '" + line + "'");
    IterationRecord r;
    r.k = static_cast<std::int64_t>(parse_number(f[0]));
    r.step = parse_number(f[1]);
    r.cum_evals = static_cast<std::size_t>(parse_number(f[2]));
    r.wall_s = parse_number(f[3]);
    r.f_xk = parse_number(f[4]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Recorded iterates, one row per kept k: k,x0,...,x{n-1}.
inline void write_iterates_csv(std::ostream& out, const RunTrace& trace, const RecordPolicy& policy = {}) {
  out << 'k';
  for (std::size_t j = 0; j < trace.dimension; ++j) out << ",x" << j;
  out << '\n';
  for (std::size_t k = 0; k < trace.rows.size(); ++k) {
    if (trace.iterates[k].empty() || !policy.keeps(static_cast<std::int64_t>(k))) continue;
    out << k;
    for (double v : trace.iterates[k]) out << ',' << format_number(v);
    out << '\n';
  }
}

inline std::map<std::int64_t, Vector> read_iterates_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("k", 0) != 0) throw InvalidInput("iterates CSV: unexpected header");
  const std::size_t n = split(line, ',').size() - 1;
  std::map<std::int64_t, Vector> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != n + 1) throw InvalidInput("iterates CSV: wrong field count");
    Vector x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = parse_number(f[j + 1]);
    out[static_cast<std::int64_t>(parse_number(f[0]))] = std::move(x);
  }
  return out;
}

/// Fills f(x_k) post hoc for the requested rows (every row when empty) from
/// recorded iterates; other columns are left untouched.
inline std::vector<IterationRecord> evaluate_trace(std::vector<IterationRecord> rows,
                                                   const std::map<std::int64_t, Vector>& iterates,
                                                   const Problem& problem,
                                                   std::optional<std::vector<std::int64_t>> iterations = std::nullopt) {
  std::vector<std::int64_t> wanted;
  if (iterations) {
    wanted = *iterations;
  } else {
    for (const auto& r : rows) wanted.push_back(r.k);
  }
  for (std::int64_t k : wanted) {
    auto row = std::find_if(rows.begin(), rows.end(), [k](const IterationRecord& r) { return r.k == k; });
    if (row == rows.end()) throw InvalidInput("evaluate_trace: iteration " + std::to_string(k) + " not in trace");
    if (row->has_objective()) continue;
    const auto it = iterates.find(k);
    if (it == iterates.end())
      throw InvalidInput("evaluate_trace: missing replay data for iteration " + std::to_string(k));
    row->f_xk = problem.objective(it->second);
  }
  return rows;
}

// ---- problems --------------------------------------------------------------

struct LoadedProblem {
  Problem problem{{}, BoxSet::whole_space(0)};
  std::shared_ptr<const uc::Instance> instance;  // set for unit-commitment duals
  std::optional<double> f_star;                  // set for synthetic problems with known optimum
  Vector minimizer;
};

/// Synthetic problem descriptor "kind:key=value,...":
///   uc:seed=S,ng=N,nt=T      generated unit-commitment dual
///   abs:seed=S,m=M,n=N       sum of l1 deviations from seeded centers in [-1,1]^n
inline LoadedProblem make_synthetic(const std::string& descriptor, std::size_t grid_divisions = 8) {
  const auto colon = descriptor.find(':');
  const std::string kind = descriptor.substr(0, colon);
  std::map<std::string, std::uint64_t> kv;
  if (colon != std::string::npos) {
    for (const auto& item : split(descriptor.substr(colon + 1), ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("synthetic descriptor: expected key=value, got '" + item + "'");
      try {
        kv[item.substr(0, eq)] = std::stoull(item.substr(eq + 1));
      } catch (const std::exception&) {
        throw ConfigError("synthetic descriptor: bad value in '" + item + "'");
      }
    }
  }
  auto get = [&kv, &descriptor](const std::string& key, std::uint64_t fallback) {
    const auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  };
  LoadedProblem lp{Problem{{}, BoxSet::whole_space(0)}, nullptr, std::nullopt, {}};
  if (kind == "uc") {
    auto inst = std::make_shared<const uc::Instance>(uc::generate_instance(get("seed", 0), get("ng", 20), get("nt", 24)));
    lp.problem = uc::dualize(inst, uc::make_grid(*inst, grid_divisions));
    lp.instance = inst;
    return lp;
  }
  if (kind == "abs") {
    const std::size_t m = get("m", 20), n = get("n", 3);
    if (m == 0 || n == 0) throw ConfigError("abs problem needs m, n >= 1");
    std::mt19937_64 rng(icp::detail::splitmix64(get("seed", 0)));
    std::vector<Vector> centers(m, Vector(n));
    for (auto& c : centers)
      for (double& v : c) v = 2.0 * icp::detail::unit_interval(rng) - 1.0;
    auto sp = make_abs_problem(centers, BoxSet::whole_space(n));
    lp.problem = std::move(sp.problem);
    lp.f_star = sp.f_star;
    lp.minimizer = std::move(sp.minimizer);
    return lp;
  }
  throw ConfigError("unknown synthetic problem kind '" + kind + "' (expected uc or abs)");
}

// ---- experiment configuration ---------------------------------------------

/// Batch size given either as a count ("20") or as a fraction of m ("0.1").
struct BatchSpec {
  bool fraction = true;
  double value = 1.0;

  static BatchSpec parse(const std::string& s) {
    BatchSpec b;
    b.fraction = s.find('.') != std::string::npos;
    try {
      b.value = parse_number(s);
    } catch (const InvalidInput&) {
      throw ConfigError("bad batch size '" + s + "'");
    }
    if (!(b.value > 0.0) || (b.fraction && b.value > 1.0) || (!b.fraction && b.value != std::floor(b.value)))
      throw ConfigError("batch size must be a positive integer or a fraction in (0, 1]: '" + s + "'");
    return b;
  }

  std::size_t resolve(std::size_t m) const {
    if (!fraction) {
      const auto p = static_cast<std::size_t>(value);
      if (p > m) throw ConfigError("batch size " + std::to_string(p) + " exceeds m = " + std::to_string(m));
      return p;
    }
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(value * static_cast<double>(m))), 1, m);
  }
};

struct StepSpec {
  bool adjusted = true;
  double value = 0.01;

  double actual(std::size_t p, std::size_t m) const { return adjusted ? adjusted_to_actual(value, p, m) : value; }
};

struct Cell {
  BatchSpec batch;
  StepSpec step;
  Window window = Window::infinite();
  ScheduleMode mode = ScheduleMode::cyclic;
  std::uint64_t seed = 0;
};

enum class SeriousMode { automatic, on, off };

struct FReference {
  enum class Kind { best_of_batch, value, known };
  Kind kind = Kind::best_of_batch;
  double value = 0.0;

  static FReference parse(const std::string& s) {
    if (s == "best-of-batch") return {};
    if (s == "known") return {Kind::known, 0.0};
    try {
      return {Kind::value, parse_number(s)};
    } catch (const InvalidInput&) {
      throw ConfigError("--fstar expects a number, 'best-of-batch' or 'known', got '" + s + "'");
    }
  }
};

struct ExperimentConfig {
  std::string instance_path;
  std::string synthetic;
  std::size_t grid_divisions = 8;
  std::vector<Cell> cells;
  /// Empty: coldstart at the origin.
  std::string warmstart_path;
  std::vector<double> tolerances{0.001, 0.0005};
  FReference f_reference;
  std::string out_dir;
  std::size_t max_iters = 100;
  /// When set, each cell runs ceil(max_evals / p) iterations instead.
  std::optional<std::size_t> max_evals;
  /// Iterates written to iterates_<cell>.csv.
  RecordPolicy record_x;
  /// Evaluate f at every iterate after each run (outside the timed loop).
  /// When off, only rows whose f is known during the run carry f_xk.
  bool evaluate_posthoc = true;
  /// automatic: serious steps exactly for full-step cells.
  SeriousMode serious = SeriousMode::automatic;
  bool allow_short_window = false;
  MasterOptions master;
};

struct CellResult {
  std::string id;
  std::size_t p = 0;
  double step = 0.0;
  double step_adjusted = 0.0;
  Window window = Window::infinite();
  RunTrace trace;
};

struct SummaryRow {
  std::string cell;
  double p_over_m = 0.0;
  double stepsize_adjusted = 0.0;
  Window window = Window::infinite();
  std::string start;
  double tol = 0.0;
  std::optional<TargetHit> hit;
};

struct ExperimentResult {
  LoadedProblem problem;
  std::vector<CellResult> cells;
  double f_reference = 0.0;
  std::vector<SummaryRow> summary;

  bool any_aborted() const {
    return std::any_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.trace.aborted; });
  }
};

inline LoadedProblem load_problem(const ExperimentConfig& config) {
  if (config.instance_path.empty() == config.synthetic.empty())
    throw ConfigError("exactly one of an instance file or a synthetic descriptor is required");
  if (!config.synthetic.empty()) return make_synthetic(config.synthetic, config.grid_divisions);
  auto inst = std::make_shared<const uc::Instance>(uc::load_instance(config.instance_path));
  LoadedProblem lp{uc::dualize(inst, uc::make_grid(*inst, config.grid_divisions)), inst, std::nullopt, {}};
  return lp;
}

inline Vector starting_point(const ExperimentConfig& config, const LoadedProblem& lp) {
  const std::size_t n = lp.problem.dimension();
  if (config.warmstart_path.empty()) return lp.problem.domain.project(Vector(n, 0.0));
  if (lp.instance) return uc::load_warmstart(config.warmstart_path, lp.instance->n_t());
  std::ifstream in(config.warmstart_path);
  if (!in) throw ConfigError("cannot open warmstart file " + config.warmstart_path);
  Vector x;
  try {
    nlohmann::json j;
    in >> j;
    x = j.get<Vector>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed warmstart file: ") + e.what());
  }
  if (x.size() != n || !lp.problem.domain.contains(x)) throw ConfigError("warmstart point has wrong size or is infeasible");
  return x;
}

inline std::string cell_id(std::size_t p, const StepSpec& step, const Window& w, ScheduleMode mode,
                           std::uint64_t seed) {
  return "p" + std::to_string(p) + "-t" + (step.adjusted ? "a" : "") + format_number(step.value) + "-W" +
         w.to_string() + "-" + to_string(mode) + "-s" + std::to_string(seed);
}

inline void validate(const ExperimentConfig& config) {
  if (config.cells.empty()) throw ConfigError("experiment has no cells");
  if (config.tolerances.empty()) throw ConfigError("experiment needs at least one tolerance");
  for (double tol : config.tolerances)
    if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("tolerances must lie in (0, 1)");
  if (config.max_evals && *config.max_evals == 0) throw ConfigError("max_evals must be positive");
}

inline void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << r.cell << ',' << format_number(r.p_over_m) << ',' << format_number(r.stepsize_adjusted) << ','
        << r.window.to_string() << ',' << r.start << ',' << format_number(r.tol) << ',';
    if (r.hit)
      out << format_number(r.hit->wall_s) << ',' << r.hit->cum_evals << ',' << r.hit->iterations << '\n';
    else
      out << kNotReached << ',' << kNotReached << ',' << kNotReached << '\n';
  }
}

/// Gap metrics per (cell, tolerance) against a reference objective.
inline std::vector<SummaryRow> summarize(std::span<const CellResult> cells, std::size_t m, double f_reference,
                                         std::span<const double> tolerances, const std::string& start) {
  std::vector<SummaryRow> rows;
  for (const auto& c : cells)
    for (double tol : tolerances)
      rows.push_back({c.id, static_cast<double>(c.p) / static_cast<double>(m), c.step_adjusted, c.window, start, tol,
                      gap_to_target(c.trace.rows, f_reference, tol)});
  return rows;
}

inline double best_of_batch(std::span<const CellResult> cells) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : cells)
    for (const auto& r : c.trace.rows)
      if (r.has_objective()) best = std::min(best, r.f_xk);
  return best;
}

inline RunConfig cell_run_config(const ExperimentConfig& config, const Cell& cell, std::size_t m, const Vector& x0) {
  RunConfig rc;
  rc.batch_size = cell.batch.resolve(m);
  rc.window = cell.window;
  rc.schedule = cell.mode;
  rc.seed = cell.seed;
  rc.step = StepSizeRule::constant(cell.step.actual(rc.batch_size, m));
  rc.x0 = x0;
  rc.max_iters = config.max_evals ? (*config.max_evals + rc.batch_size - 1) / rc.batch_size : config.max_iters;
  rc.serious_step = config.serious == SeriousMode::on ||
                    (config.serious == SeriousMode::automatic && rc.batch_size == m);
  rc.allow_short_window = config.allow_short_window;
  rc.record_x = config.evaluate_posthoc ? RecordPolicy{} : config.record_x;
  rc.evaluate_objective = config.evaluate_posthoc;
  rc.master = config.master;
  return rc;
}

/// Runs every cell, computes gap metrics and, when `out_dir` is set, writes
/// summary.csv, trace_<cell>.csv and iterates_<cell>.csv there.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  ExperimentResult result;
  result.problem = load_problem(config);
  const Problem& problem = result.problem.problem;
  const std::size_t m = problem.size();
  const Vector x0 = starting_point(config, result.problem);

  for (const auto& cell : config.cells) {
    const RunConfig rc = cell_run_config(config, cell, m, x0);
    CellResult cr;
    cr.p = rc.batch_size;
    cr.step = rc.step.base();
    cr.step_adjusted = cell.step.adjusted ? cell.step.value : actual_to_adjusted(cr.step, cr.p, m);
    cr.window = cell.window;
    cr.id = cell_id(cr.p, cell.step, cell.window, cell.mode, cell.seed);
    cr.trace = run(problem, rc);
    result.cells.push_back(std::move(cr));
  }

  switch (config.f_reference.kind) {
    case FReference::Kind::value: result.f_reference = config.f_reference.value; break;
    case FReference::Kind::known:
      if (!result.problem.f_star) throw ConfigError("--fstar known needs a problem with a known optimum");
      result.f_reference = *result.problem.f_star;
      break;
    case FReference::Kind::best_of_batch: result.f_reference = best_of_batch(result.cells); break;
  }
  if (!std::isfinite(result.f_reference)) throw ConfigError("no finite reference objective (were iterates recorded?)");
  const std::string start = config.warmstart_path.empty() ? "cold" : "warm";
  result.summary = summarize(result.cells, m, result.f_reference, config.tolerances, start);

  if (!config.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    auto open = [&config](const std::string& name) {
      std::ofstream out(fs::path(config.out_dir) / name);
      if (!out) throw std::runtime_error("cannot write " + name + " in " + config.out_dir);
      return out;
    };
    {
      auto out = open("summary.csv");
      write_summary_csv(out, result.summary);
    }
    for (const auto& c : result.cells) {
      auto trace_out = open("trace_" + c.id + ".csv");
      write_trace_csv(trace_out, c.trace.rows);
      if (config.record_x.kind != RecordPolicy::Kind::none) {
        auto x_out = open("iterates_" + c.id + ".csv");
        write_iterates_csv(x_out, c.trace, config.record_x);
      }
    }
  }
  return result;
}

}  // namespace icp::experiment
