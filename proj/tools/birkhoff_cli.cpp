// birkhoff: solve, benchmark and self-test front end.
//
// Exit codes: 0 success, 1 numerical failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "birkhoff/bench.hpp"
#include "birkhoff/ocp/problems.hpp"
#include "birkhoff/ocp/sqp.hpp"
#include "birkhoff/ocp/validate.hpp"
#include "birkhoff/selftest.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace birkhoff;

namespace {

constexpr int kOk = 0;
constexpr int kNumericalFailure = 1;
constexpr int kUsage = 2;
constexpr int kSchemaVersion = 1;
constexpr std::size_t kDefaultMaxOrder = std::size_t{1} << 17;
constexpr std::size_t kMaxRows = 10000;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string problem;
  std::string n_text;
  std::optional<double> tol;
  std::string out;
  std::string format;
  std::uint64_t seed = 1;
  bool huge = false;
  std::size_t repetitions = 21;
  std::string inject_fault;
};

// "1024", "64,128,256" or powers written as "2^10".
std::vector<std::size_t> parse_orders(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char c) { return std::isspace(c); }), tok.end());
    if (tok.empty()) continue;
    try {
      std::size_t pos = 0;
      long long v = 0;
      if (tok.rfind("2^", 0) == 0) {
        const int e = std::stoi(tok.substr(2), &pos);
        if (pos != tok.size() - 2 || e < 0 || e > 40) throw std::invalid_argument(tok);
        v = 1LL << e;
      } else {
        v = std::stoll(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
      }
      if (v < 2) throw UsageError("--n entries must be at least 2 (got " + tok + ")");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception&) {
      throw UsageError("cannot read '" + tok + "' as a grid order");
    }
  }
  if (out.empty()) throw UsageError("--n needs at least one order");
  return out;
}

std::string resolve_format(const RunConfig& c) {
  if (!c.format.empty()) return c.format;
  return fs::path(c.out).extension() == ".json" ? "json" : "csv";
}

// Fails early, before any computation, if the output cannot be written.
void check_writable(const std::string& path) {
  if (path.empty()) return;
  const fs::path p(path);
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw UsageError("output directory does not exist: " + dir.string());
  if (fs::is_directory(p, ec)) throw UsageError("output path is a directory: " + path);
  const bool existed = fs::exists(p, ec);
  {
    std::ofstream probe(p, std::ios::app);
    if (!probe) throw UsageError("cannot write to " + path);
  }
  if (!existed) fs::remove(p, ec);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path);
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

void check_orders(const RunConfig& c, const std::vector<std::size_t>& ns, const std::string& command,
                  const std::string& problem) {
  const std::size_t top = *std::max_element(ns.begin(), ns.end());
  if (top > kDefaultMaxOrder && !c.huge) {
    throw UsageError("N = " + std::to_string(top) + " is above 2^17; pass --huge to allow it");
  }
  if (c.huge) {
    const double gb = bench::memory_estimate(command, problem, top) / 1e9;
    std::fprintf(stderr, "memory estimate for N = %zu: %.2f GB\n", top, gb);
  }
}

// ---------------------------------------------------------------------------

json history_json(const ocp::SolveReport& r) {
  json h = json::array();
  for (const auto& it : r.history) {
    h.push_back({{"iteration", it.iteration},
                 {"objective", it.objective},
                 {"feasibility", it.feasibility},
                 {"stationarity", it.stationarity},
                 {"step_norm", it.step_length},
                 {"radius", it.radius},
                 {"ratio", it.ratio},
                 {"penalty", it.penalty},
                 {"cg_iterations", it.cg_iterations},
                 {"accepted", it.accepted},
                 {"second_order_correction", it.second_order_correction}});
  }
  return h;
}

std::vector<std::size_t> decimated_nodes(std::size_t nodes) {
  const std::size_t stride = (nodes + kMaxRows - 2) / (kMaxRows - 1);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < nodes; i += std::max<std::size_t>(stride, 1)) idx.push_back(i);
  if (idx.back() != nodes - 1) idx.push_back(nodes - 1);
  return idx;
}

int cmd_solve(const RunConfig& c) {
  const std::string name = c.problem.empty() ? "orbit-transfer" : c.problem;
  const auto ns = parse_orders(c.n_text.empty() ? "1024" : c.n_text);
  if (ns.size() != 1) throw UsageError("solve takes a single --n");
  const std::size_t n = ns.front();
  const std::string format = resolve_format(c);
  ocp::ProblemInstance inst;
  try {
    inst = ocp::make_problem(name);
  } catch (const Error& e) {
    std::string known;
    for (const auto& p : ocp::problem_names()) known += " " + p;
    throw UsageError(std::string(e.what()) + "; known problems:" + known);
  }
  check_orders(c, ns, "solve", name);
  check_writable(c.out);
  if (format == "csv" && !c.out.empty()) check_writable(sibling(c.out, "_trajectory.csv"));

  const auto nlp = ocp::discretize(inst.ocp, static_cast<long>(n));
  ocp::SqpConfig cfg;
  if (c.tol) cfg.feasibility_tol = *c.tol;
  ocp::SqpResult res;
  try {
    res = ocp::sqp_solve(nlp, inst.initial_guess(nlp), cfg);
  } catch (const ocp::SqpStalledError& e) {
    res = e.partial();
    res.report.message = e.what();
  }
  const auto& rep = res.report;
  const auto& sol = res.solution;
  const bool have_solution = sol.grid != nullptr && !sol.X.empty();
  ocp::SolutionCheck chk;
  if (have_solution) {
    chk = ocp::validate_solution(inst.ocp, sol);
  } else {
    chk.message = "no trajectory to validate";
  }
  const bool ok = rep.converged && chk.passed;

  const json report = {{"converged", rep.converged},
                       {"message", rep.message},
                       {"sqp_iterations", rep.sqp_iterations},
                       {"kkt_solves", rep.kkt_solves},
                       {"total_krylov_iterations", rep.total_krylov_iterations},
                       {"newton_iterations", rep.newton_iterations},
                       {"feasibility", rep.feasibility},
                       {"optimality", rep.optimality},
                       {"objective", rep.objective},
                       {"wall_time", rep.wall_time}};
  const json validation = {{"passed", chk.passed},
                           {"terminal_mismatch", chk.terminal_mismatch},
                           {"max_state_mismatch", chk.max_state_mismatch},
                           {"dynamics_residual", chk.dynamics_residual},
                           {"collocation_residual", chk.collocation_residual},
                           {"endpoint_violation", chk.endpoint_violation},
                           {"message", chk.message}};

  const std::size_t nodes = have_solution ? sol.grid->size() : 0;
  const auto rows = have_solution ? decimated_nodes(nodes) : std::vector<std::size_t>{};
  if (format == "json") {
    json traj = {{"t", json::array()}, {"tau", json::array()}, {"x", json::array()}, {"u", json::array()}};
    for (std::size_t i : rows) {
      traj["t"].push_back(sol.times[i]);
      traj["tau"].push_back(sol.grid->nodes()[i]);
      json x = json::array(), u = json::array();
      for (std::size_t k = 0; k < sol.n_states; ++k) x.push_back(sol.X[k * nodes + i]);
      for (std::size_t k = 0; k < sol.n_controls; ++k) u.push_back(sol.U[k * nodes + i]);
      traj["x"].push_back(x);
      traj["u"].push_back(u);
    }
    const json doc = {{"schema_version", kSchemaVersion},
                      {"command", "solve"},
                      {"problem", name},
                      {"N", n},
                      {"report", report},
                      {"validation", validation},
                      {"parameters", sol.p},
                      {"x_a", sol.xa},
                      {"x_b", sol.xb},
                      {"history", history_json(rep)},
                      {"trajectory", traj}};
    emit(c.out, doc.dump(2) + "\n");
  } else {
    std::ostringstream r;
    r << "key,value\n";
    r << "problem," << name << "\nN," << n << "\n";
    for (const auto& [k, v] : report.items()) {
      r << k << ',' << (v.is_string() ? "\"" + v.get<std::string>() + "\"" : v.dump()) << "\n";
    }
    r << "validation_passed," << (chk.passed ? "true" : "false") << "\n";
    r << "terminal_mismatch_max," << fmt(chk.max_terminal_mismatch) << "\n";
    r << "dynamics_residual," << fmt(chk.dynamics_residual) << "\n";
    r << "endpoint_violation," << fmt(chk.endpoint_violation) << "\n";
    for (std::size_t k = 0; k < sol.p.size(); ++k) r << "p" << k << ',' << fmt(sol.p[k]) << "\n";
    emit(c.out, r.str());
    if (!c.out.empty() && have_solution) {
      std::ostringstream t;
      t << "node,tau,t";
      for (std::size_t k = 0; k < sol.n_states; ++k) t << ",x" << k;
      for (std::size_t k = 0; k < sol.n_controls; ++k) t << ",u" << k;
      t << "\n";
      for (std::size_t i : rows) {
        t << i << ',' << fmt(sol.grid->nodes()[i]) << ',' << fmt(sol.times[i]);
        for (std::size_t k = 0; k < sol.n_states; ++k) t << ',' << fmt(sol.X[k * nodes + i]);
        for (std::size_t k = 0; k < sol.n_controls; ++k) t << ',' << fmt(sol.U[k * nodes + i]);
        t << "\n";
      }
      emit(sibling(c.out, "_trajectory.csv"), t.str());
    }
  }
  std::fprintf(stderr, "%s N=%zu: %s after %zu SQP iterations (%zu KKT solves), objective %.12g, "
               "feasibility %.2e, optimality %.2e, %.2fs\n%s\n",
               name.c_str(), n, rep.message.c_str(), rep.sqp_iterations, rep.kkt_solves, rep.objective,
               rep.feasibility, rep.optimality, rep.wall_time, chk.message.c_str());
  return ok ? kOk : kNumericalFailure;
}

// ---------------------------------------------------------------------------

struct BenchRow {
  std::size_t n = 0;
  std::string operation;
  double median = 0.0, min = 0.0;
  std::size_t repetitions = 0, batch = 1, iterations = 0, kkt_solves = 0;
  double normalized = 1.0;
};

int cmd_bench(const RunConfig& c) {
  std::vector<std::size_t> ns;
  if (c.n_text.empty()) {
    const std::size_t top = c.huge ? (std::size_t{1} << 20) : kDefaultMaxOrder;
    for (std::size_t n = 64; n <= top; n *= 2) ns.push_back(n);
  } else {
    ns = parse_orders(c.n_text);
  }
  if (!std::is_sorted(ns.begin(), ns.end())) throw UsageError("bench needs --n in ascending order");
  if (c.repetitions < 20) throw UsageError("--repetitions must be at least 20");
  const std::string format = resolve_format(c);
  if (!c.problem.empty()) {
    try {
      (void)ocp::make_problem(c.problem);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  check_orders(c, ns, c.problem.empty() ? "bench" : "solve", c.problem);
  check_writable(c.out);

  std::vector<BenchRow> rows;
  int status = kOk;
  if (!c.problem.empty()) {
    // Mesh-independence sweep: one full solve per order.
    const auto inst = ocp::make_problem(c.problem);
    for (std::size_t n : ns) {
      const auto nlp = ocp::discretize(inst.ocp, static_cast<long>(n));
      BenchRow r{n, "sqp"};
      try {
        const auto res = ocp::sqp_solve(nlp, inst.initial_guess(nlp));
        r.median = r.min = res.report.wall_time;
        r.iterations = res.report.sqp_iterations;
        r.kkt_solves = res.report.kkt_solves;
        if (!res.report.converged) status = kNumericalFailure;
      } catch (const ocp::SqpStalledError& e) {
        r.median = r.min = e.partial().report.wall_time;
        r.iterations = e.partial().report.sqp_iterations;
        r.kkt_solves = e.partial().report.kkt_solves;
        status = kNumericalFailure;
      }
      r.repetitions = 1;
      rows.push_back(r);
      std::fprintf(stderr, "N=%zu sqp %.3fs, %zu iterations, %zu KKT solves\n", n, r.median, r.iterations,
                   r.kkt_solves);
    }
  } else {
    spectral::set_plan_rigor(spectral::PlanRigor::measure);
    const auto add = [&](std::size_t n, const char* op, const bench::Timing& t, std::size_t iters) {
      rows.push_back({n, op, t.median, t.min, t.repetitions, t.batch, iters, 0, 1.0});
      std::fprintf(stderr, "N=%zu %-12s %.3e s\n", n, op, t.median);
    };
    for (std::size_t n : ns) {
      add(n, "fast_bv", bench::fast_bv(n, c.seed, c.repetitions), 0);
      if (n <= bench::kDenseProductLimit) add(n, "dense_bv", bench::dense_bv(n, c.seed, c.repetitions), 0);
      const auto ls = bench::fast_lin_sol(n, c.seed, c.repetitions);
      add(n, "fast_lin_sol", ls.timing, ls.iterations);
      if (n <= bench::kDenseSolveLimit) add(n, "dense_lu", bench::dense_lu(n, c.seed, c.repetitions), 0);
    }
  }
  // Normalize each operation to its smallest N; raw times stay in the file.
  for (auto& r : rows) {
    const auto first = std::find_if(rows.begin(), rows.end(), [&](const BenchRow& q) { return q.operation == r.operation; });
    r.normalized = first->median > 0.0 ? r.median / first->median : 0.0;
  }

  if (format == "json") {
    json arr = json::array();
    for (const auto& r : rows) {
      arr.push_back({{"N", r.n},
                     {"operation", r.operation},
                     {"median_time", r.median},
                     {"min_time", r.min},
                     {"repetitions", r.repetitions},
                     {"batch", r.batch},
                     {"iterations", r.iterations},
                     {"kkt_solves", r.kkt_solves},
                     {"normalized_time", r.normalized}});
    }
    emit(c.out, json{{"schema_version", kSchemaVersion}, {"command", "bench"}, {"rows", arr}}.dump(2) + "\n");
  } else {
    std::ostringstream s;
    s << "N,operation,median_time,min_time,repetitions,batch,iterations,kkt_solves,normalized_time\n";
    for (const auto& r : rows) {
      s << r.n << ',' << r.operation << ',' << fmt(r.median) << ',' << fmt(r.min) << ',' << r.repetitions << ','
        << r.batch << ',' << r.iterations << ',' << r.kkt_solves << ',' << fmt(r.normalized) << "\n";
    }
    emit(c.out, s.str());
  }
  return status;
}

// ---------------------------------------------------------------------------

int cmd_selftest(const RunConfig& c) {
  selftest::Options o;
  o.seed = c.seed;
  if (!c.n_text.empty()) {
    const auto ns = parse_orders(c.n_text);
    o.max_order = *std::max_element(ns.begin(), ns.end());
    if (o.max_order > 1024) throw UsageError("selftest runs at N <= 1024");
  }
  if (c.inject_fault == "alias-fold") {
    o.disable_alias_fold = true;
  } else if (!c.inject_fault.empty()) {
    throw UsageError("unknown fault '" + c.inject_fault + "'");
  }
  const std::string format = resolve_format(c);
  check_writable(c.out);

  const auto groups = selftest::run(o);
  std::vector<std::string> failed;
  for (const auto& g : groups) {
    std::printf("%s %-11s %3zu cases, worst relative error %.2e (tolerance %.0e)\n", g.passed ? "PASS" : "FAIL",
                g.name.c_str(), g.cases, g.worst, g.tolerance);
    if (!g.passed) failed.push_back(g.name);
  }
  if (!c.out.empty()) {
    if (format == "json") {
      json arr = json::array();
      for (const auto& g : groups) {
        arr.push_back({{"group", g.name}, {"passed", g.passed}, {"cases", g.cases}, {"worst", g.worst},
                       {"tolerance", g.tolerance}});
      }
      emit(c.out, json{{"schema_version", kSchemaVersion}, {"command", "selftest"}, {"seed", c.seed}, {"groups", arr}}
                          .dump(2) + "\n");
    } else {
      std::ostringstream s;
      s << "group,passed,cases,worst,tolerance\n";
      for (const auto& g : groups) {
        s << g.name << ',' << (g.passed ? "true" : "false") << ',' << g.cases << ',' << fmt(g.worst) << ','
          << fmt(g.tolerance) << "\n";
      }
      emit(c.out, s.str());
    }
  }
  if (failed.empty()) return kOk;
  std::string list;
  for (const auto& f : failed) list += " " + f;
  std::fprintf(stderr, "failed groups:%s\n", list.c_str());
  return kNumericalFailure;
}

void add_common(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--problem", c.problem, "Built-in problem: orbit-transfer, exp-ode, lq-toy");
  cmd->add_option("--n", c.n_text, "Grid order or comma-separated list (2^k accepted)");
  cmd->add_option("--tol", c.tol, "Feasibility tolerance of the solver")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output file (default: standard output)");
  cmd->add_option("--format", c.format, "csv or json (default: from the --out extension, else csv)")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--seed", c.seed, "Seed for randomized inputs");
  cmd->add_flag("--huge", c.huge, "Allow N above 2^17 (prints a memory estimate first)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Birkhoff pseudospectral solver: solve, benchmark and self-test"};
  app.require_subcommand(1);
  RunConfig cfg;
  auto* solve = app.add_subcommand("solve", "Solve a built-in optimal control problem and validate the result");
  auto* bench = app.add_subcommand("bench", "Time fast and dense kernels over a sweep of N");
  auto* self = app.add_subcommand("selftest", "Check the fast kernels against dense oracles");
  for (auto* cmd : {solve, bench, self}) add_common(cmd, cfg);
  bench->add_option("--repetitions", cfg.repetitions, "Timed repetitions per point (at least 20)");
  self->add_option("--inject-fault", cfg.inject_fault, "Break a kernel on purpose (alias-fold)")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*solve) return cmd_solve(cfg);
    if (*bench) return cmd_bench(cfg);
    return cmd_selftest(cfg);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumericalFailure;
  }
}
