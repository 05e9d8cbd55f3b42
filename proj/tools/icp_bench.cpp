// Batch runner for the incremental cutting-plane solver.
// Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icp/icp.hpp"

namespace {

namespace ex = icp::experiment;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct CellFlags {
  std::vector<std::string> p{"1.0"};
  std::vector<double> step_adjusted;
  std::vector<double> step;
  std::vector<std::string> window{"inf"};
  std::vector<std::string> schedule{"cyclic"};
  std::vector<std::uint64_t> seed{0};
};

struct ProblemFlags {
  std::string instance;
  std::string synthetic;
  std::size_t divisions = 8;
};

void add_problem_flags(CLI::App* app, ProblemFlags& f) {
  auto* inst = app->add_option("--instance", f.instance, "Unit-commitment instance JSON");
  auto* syn = app->add_option("--synthetic", f.synthetic, "uc:seed=S,ng=N,nt=T or abs:seed=S,m=M,n=N");
  inst->excludes(syn);
  app->add_option("--grid-divisions", f.divisions, "Power levels per unit between p_min and p_max")
      ->check(CLI::PositiveNumber);
}

void add_cell_flags(CLI::App* app, CellFlags& f) {
  app->add_option("--p", f.p, "Batch size: integer count or fraction of m (contains '.')")->delimiter(',');
  app->add_option("--stepsize-adjusted", f.step_adjusted, "Adjusted step m t / p")->delimiter(',');
  app->add_option("--stepsize", f.step, "Actual step t")->delimiter(',');
  app->add_option("--window", f.window, "Memory window: N or inf")->delimiter(',');
  app->add_option("--schedule", f.schedule, "cyclic or shuffled")->delimiter(',');
  app->add_option("--seed", f.seed, "Schedule seed")->delimiter(',');
}

icp::Window parse_window(const std::string& s) {
  if (s == "inf") return icp::Window::infinite();
  try {
    std::size_t used = 0;
    const unsigned long long w = std::stoull(s, &used);
    if (used == s.size() && w >= 1) return icp::Window(static_cast<std::size_t>(w));
  } catch (const std::exception&) {
  }
  throw icp::ConfigError("--window expects a positive integer or 'inf', got '" + s + "'");
}

std::vector<ex::Cell> make_cells(const CellFlags& f) {
  std::vector<ex::StepSpec> steps;
  for (double v : f.step_adjusted) steps.push_back({true, v});
  for (double v : f.step) steps.push_back({false, v});
  if (steps.empty()) steps.push_back({true, 0.01});
  for (const auto& s : steps)
    if (!(s.value > 0.0)) throw icp::ConfigError("step sizes must be positive");
  std::vector<ex::Cell> cells;
  for (const auto& p : f.p)
    for (const auto& s : steps)
      for (const auto& w : f.window)
        for (const auto& mode : f.schedule)
          for (auto seed : f.seed)
            cells.push_back({ex::BatchSpec::parse(p), s, parse_window(w), icp::parse_schedule_mode(mode), seed});
  return cells;
}

ex::SeriousMode parse_serious(const std::string& s) {
  if (s == "auto") return ex::SeriousMode::automatic;
  if (s == "on") return ex::SeriousMode::on;
  if (s == "off") return ex::SeriousMode::off;
  throw icp::ConfigError("--serious-step expects auto, on or off");
}

struct RunFlags {
  ProblemFlags problem;
  CellFlags cells;
  std::size_t max_iters = 100;
  std::optional<std::size_t> max_evals;
  std::string start = "cold";
  std::string fstar = "best-of-batch";
  std::vector<double> tol;
  std::string out = "out";
  std::string record_x = "none";
  std::string serious = "auto";
  bool allow_short_window = false;
  bool no_posthoc = false;
  double master_tol = 1e-8;
};

ex::ExperimentConfig make_config(const RunFlags& f) {
  ex::ExperimentConfig c;
  c.instance_path = f.problem.instance;
  c.synthetic = f.problem.synthetic;
  c.grid_divisions = f.problem.divisions;
  c.cells = make_cells(f.cells);
  if (f.start == "cold") {
    c.warmstart_path.clear();
  } else if (f.start.rfind("warm:", 0) == 0 && f.start.size() > 5) {
    c.warmstart_path = f.start.substr(5);
  } else {
    throw icp::ConfigError("--start expects cold or warm:PATH");
  }
  if (!f.tol.empty()) c.tolerances = f.tol;
  c.f_reference = ex::FReference::parse(f.fstar);
  c.out_dir = f.out;
  c.max_iters = f.max_iters;
  c.max_evals = f.max_evals;
  c.record_x = icp::RecordPolicy::parse(f.record_x);
  c.evaluate_posthoc = !f.no_posthoc;
  c.serious = parse_serious(f.serious);
  c.allow_short_window = f.allow_short_window;
  c.master.tolerance = f.master_tol;
  return c;
}

int cmd_run(const RunFlags& f) {
  const ex::ExperimentResult r = ex::run_experiment(make_config(f));
  std::size_t reached = 0;
  for (const auto& row : r.summary) reached += row.hit ? 1 : 0;
  std::cout << r.cells.size() << " cells, f_reference " << ex::format_number(r.f_reference) << ", " << reached << "/"
            << r.summary.size() << " targets reached; output in " << f.out << '\n';
  for (const auto& c : r.cells)
    if (c.trace.aborted) std::cerr << "cell " << c.id << " aborted: " << c.trace.failure << '\n';
  return r.any_aborted() ? kRuntimeError : kOk;
}

struct EvaluateFlags {
  ProblemFlags problem;
  CellFlags cell;
  std::string trace;
  std::string iterates;
  std::string out;
  std::vector<std::int64_t> iters;
  std::string start = "cold";
  std::string serious = "auto";
  bool allow_short_window = false;
};

int cmd_evaluate(const EvaluateFlags& f) {
  std::ifstream trace_in(f.trace);
  if (!trace_in) throw icp::ConfigError("cannot open trace " + f.trace);
  std::vector<icp::IterationRecord> rows = ex::read_trace_csv(trace_in);

  ex::ExperimentConfig c;
  c.instance_path = f.problem.instance;
  c.synthetic = f.problem.synthetic;
  c.grid_divisions = f.problem.divisions;
  const ex::LoadedProblem lp = ex::load_problem(c);

  std::map<std::int64_t, icp::Vector> iterates;
  if (!f.iterates.empty()) {
    std::ifstream in(f.iterates);
    if (!in) throw icp::ConfigError("cannot open iterates " + f.iterates);
    iterates = ex::read_iterates_csv(in);
  } else {
    // Replay the run from its cell parameters.
    const auto cells = make_cells(f.cell);
    if (cells.size() != 1) throw icp::ConfigError("replay needs exactly one cell");
    if (f.start.rfind("warm:", 0) == 0) c.warmstart_path = f.start.substr(5);
    c.serious = parse_serious(f.serious);
    c.allow_short_window = f.allow_short_window;
    c.max_iters = rows.size();
    c.evaluate_posthoc = false;
    icp::RunConfig rc = ex::cell_run_config(c, cells.front(), lp.problem.size(), ex::starting_point(c, lp));
    rc.record_x = icp::RecordPolicy{};
    const icp::RunTrace replay = icp::run(lp.problem, rc);
    if (replay.rows.size() != rows.size()) throw std::runtime_error("replay ended early: " + replay.failure);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (replay.rows[k].cum_evals != rows[k].cum_evals || replay.rows[k].step != rows[k].step)
        throw icp::ConfigError("replay does not match the trace at k = " + std::to_string(k));
      iterates[static_cast<std::int64_t>(k)] = replay.iterates[k];
    }
  }

  std::optional<std::vector<std::int64_t>> wanted;
  if (!f.iters.empty()) wanted = f.iters;
  rows = ex::evaluate_trace(std::move(rows), iterates, lp.problem, wanted);
  const std::string out_path = f.out.empty() ? f.trace : f.out;
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  ex::write_trace_csv(out, rows);
  return kOk;
}

struct GenerateFlags {
  std::uint64_t seed = 0;
  std::size_t n_g = 20;
  std::size_t n_t = 24;
  std::string out;
};

int cmd_generate(const GenerateFlags& f) {
  icp::uc::save_instance(icp::uc::generate_instance(f.seed, f.n_g, f.n_t), f.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incremental limited-memory cutting-plane experiments"};
  app.require_subcommand(1);

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "Run every cell and write summary and trace CSVs");
  add_problem_flags(run_cmd, run.problem);
  add_cell_flags(run_cmd, run.cells);
  run_cmd->add_option("--max-iters", run.max_iters, "Iterations per cell")->check(CLI::PositiveNumber);
  run_cmd->add_option("--max-evals", run.max_evals, "Component evaluations per cell (overrides --max-iters)")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--start", run.start, "cold or warm:PATH");
  run_cmd->add_option("--fstar", run.fstar, "Reference objective: number, best-of-batch or known");
  run_cmd->add_option("--tol", run.tol, "Relative gap targets (default 0.001 and 0.0005)")->delimiter(',');
  run_cmd->add_option("--out", run.out, "Output directory");
  run_cmd->add_option("--record-x", run.record_x, "Iterates to write: all, none or every:N");
  run_cmd->add_option("--serious-step", run.serious, "auto (full step only), on or off");
  run_cmd->add_flag("--allow-short-window", run.allow_short_window, "Accept windows below the coverage minimum");
  run_cmd->add_flag("--no-posthoc", run.no_posthoc, "Skip evaluating f at incremental iterates");
  run_cmd->add_option("--master-tol", run.master_tol, "Master KKT tolerance")->check(CLI::PositiveNumber);

  EvaluateFlags eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Fill f_xk in a trace from recorded iterates or a replay");
  add_problem_flags(eval_cmd, eval.problem);
  add_cell_flags(eval_cmd, eval.cell);
  eval_cmd->add_option("--trace", eval.trace, "Trace CSV")->required();
  eval_cmd->add_option("--iterates", eval.iterates, "Iterates CSV; replays the run when omitted");
  eval_cmd->add_option("--iters", eval.iters, "Iterations to evaluate (default all)")->delimiter(',');
  eval_cmd->add_option("--out", eval.out, "Output trace CSV (default: overwrite)");
  eval_cmd->add_option("--start", eval.start, "cold or warm:PATH (replay)");
  eval_cmd->add_option("--serious-step", eval.serious, "auto, on or off (replay)");
  eval_cmd->add_flag("--allow-short-window", eval.allow_short_window, "Accept short windows (replay)");

  GenerateFlags gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write a seeded synthetic unit-commitment instance");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--n-g", gen.n_g, "Generators")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--n-t", gen.n_t, "Periods")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--out", gen.out, "Output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*eval_cmd) return cmd_evaluate(eval);
    if (*gen_cmd) return cmd_generate(gen);
  } catch (const std::invalid_argument& e) {  // ConfigError, InvalidInput
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const icp::InstanceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kConfigError;
}
