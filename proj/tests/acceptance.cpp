// Release acceptance checks. `acceptance <k>` runs check k (1-9) and prints
// one PASS/FAIL line; `acceptance all` runs them in order. `acceptance 8 --huge`
// adds the million-point orbit-transfer run.

#include <sys/resource.h>

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "birkhoff/bench.hpp"
#include "birkhoff/krylov/birkhoff_system.hpp"
#include "birkhoff/ocp/newton.hpp"
#include "birkhoff/ocp/problems.hpp"
#include "birkhoff/ocp/sqp.hpp"
#include "birkhoff/ocp/validate.hpp"
#include "birkhoff/ops/dense.hpp"
#include "printed_matrices.hpp"

using namespace birkhoff;

namespace {

using Vec = std::vector<double>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vec random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Vec v(n);
  for (double& x : v) x = d(rng);
  return v;
}

krylov::NodeJacobian random_jacobian(std::size_t nodes, std::size_t ch, std::uint64_t seed, double scale) {
  krylov::NodeJacobian j(nodes, ch);
  const Vec v = random_vector(nodes * ch * ch, seed, -scale, scale);
  for (std::size_t k = 0; k < nodes; ++k) {
    for (std::size_t r = 0; r < ch; ++r) {
      for (std::size_t q = 0; q < ch; ++q) j(k, r, q) = v[(k * ch + r) * ch + q];
    }
  }
  return j;
}

double inf(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.lpNorm<Eigen::Infinity>(); }
Eigen::Map<const Eigen::VectorXd> view(const Vec& v) { return {v.data(), static_cast<Eigen::Index>(v.size())}; }

double peak_rss_bytes() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return static_cast<double>(u.ru_maxrss) * 1024.0;
}

// ---------------------------------------------------------------------------

Outcome fast_bv_oracle() {
  double worst = 0.0;
  for (long n : {8L, 32L, 128L, 512L, 1024L}) {
    const auto grid = spectral::make_shared_grid(n);
    const Eigen::MatrixXd b = ops::dense_birkhoff(*grid);
    const ops::BirkhoffOperator op(grid);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const Vec v = random_vector(grid->size(), 1000 * static_cast<std::uint64_t>(n) + seed);
      Vec out(v.size());
      ops::fast_bv(op, v, out);
      worst = std::max(worst, inf(view(out) - b * view(v)) / inf(view(v)));
    }
  }
  return {worst <= 1e-9, format("fast B^a V against dense B^a V, 50 vectors: worst %.2e (limit 1e-9)", worst)};
}

Outcome printed_matrices() {
  const auto grid = spectral::make_grid(9);
  const Eigen::MatrixXd b = ops::dense_birkhoff(grid);
  const Eigen::MatrixXd s = ops::dense_surrogate(grid);
  const auto round2 = [](double v) { return std::round(v * 100.0) / 100.0 + 0.0; };
  std::vector<std::string> off_b, off_s;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      if (std::abs(round2(b(i, j)) - testing::kPrintedBirkhoff10[i][j]) > 1e-9) {
        off_b.push_back(format("(%d,%d) %.4f rounds to %.2f, printed %.2f", i, j, b(i, j), round2(b(i, j)), testing::kPrintedBirkhoff10[i][j] + 0.0));
      }
      if (std::abs(round2(s(i, j)) - testing::kPrintedSurrogate10[i][j]) > 1e-9) {
        off_s.push_back(format("(%d,%d) %.4f rounds to %.2f, printed %.2f", i, j, s(i, j), round2(s(i, j)), testing::kPrintedSurrogate10[i][j] + 0.0));
      }
    }
  }
  std::string d = format("10-point tables rounded to 2 decimals: B^a %zu mismatches, surrogate %zu", off_b.size(),
                         off_s.size());
  for (const auto& o : off_b) d += "; B^a " + o;
  for (const auto& o : off_s) d += "; surrogate " + o;
  return {off_b.empty() && off_s.empty(), d};
}

Outcome preconditioner_exactness() {
  double worst = 0.0;
  for (long n : {16L, 256L, 4096L}) {
    const auto grid = spectral::make_shared_grid(n);
    const ops::TriangularSurrogate sur(grid);
    for (std::size_t ch : {std::size_t{1}, std::size_t{4}}) {
      for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto jac = random_jacobian(grid->size(), ch, seed * 31 + ch, 1.0);
        const krylov::BirkhoffPreconditioner p(sur, jac);
        const Vec y = random_vector(grid->size() * ch, seed * 37 + ch);
        Vec x(y.size()), back(y.size());
        p.apply(y, x);
        p.multiply(x, back);
        worst = std::max(worst, inf(view(back) - view(y)) / inf(view(y)));
      }
    }
  }
  return {worst <= 1e-11, format("P applied to fast_pinv(Y), 60 cases: worst relative error %.2e (limit 1e-11)", worst)};
}

Outcome linear_solve() {
  double worst = 0.0;
  std::size_t cases = 0;
  bool all_converged = true;
  const krylov::KrylovConfig cfg{1e-12, 500, {}};
  for (long n : {16L, 64L, 256L, 512L}) {
    const auto grid = spectral::make_shared_grid(n);
    const ops::BirkhoffOperator op(grid);
    const Eigen::MatrixXd b = ops::dense_birkhoff(*grid);
    const std::size_t nodes = grid->size();
    std::vector<krylov::NodeJacobian> systems;
    systems.push_back(krylov::NodeJacobian::diagonal(random_vector(nodes, 11 * n, -1.0, 1.0)));
    systems.push_back(krylov::NodeJacobian::diagonal(random_vector(nodes, 13 * n, -50.0, 50.0)));
    systems.push_back(random_jacobian(nodes, 4, 17 * static_cast<std::uint64_t>(n), 1.0));
    for (const auto& jac : systems) {
      const Eigen::MatrixXd a = ops::dense_system(b, jac);
      const Vec rhs = random_vector(jac.dim(), 19 * static_cast<std::uint64_t>(n) + jac.channels());
      const Eigen::VectorXd want = a.partialPivLu().solve(view(rhs));
      const auto r = krylov::fast_lin_sol(op, jac, rhs, cfg);
      all_converged = all_converged && r.stats.converged;
      worst = std::max(worst, inf(view(r.x) - want) / inf(want));
      ++cases;
    }
  }
  return {all_converged && worst <= 1e-8,
          format("fast_lin_sol against dense LU, %zu systems incl. stiff diagonal in [-50, 50]: worst %.2e (limit "
                 "1e-8)%s",
                 cases, worst, all_converged ? "" : ", some solves did not converge")};
}

Outcome mesh_flat_counts() {
  const auto inst = ocp::orbit_transfer();
  const auto newton_krylov = [&](long n) {
    const auto nlp = ocp::discretize(inst.ocp, n);
    const auto g = inst.initial_guess(nlp);
    return ocp::newton_feasibility(nlp, g.U, g.xa, g.p).report;
  };
  const auto k10 = newton_krylov(1L << 10), k16 = newton_krylov(1L << 16);
  const double ratio = static_cast<double>(k16.krylov_iterations) / static_cast<double>(k10.krylov_iterations);
  // One linear solve of the same Newton matrix with a generic right-hand side.
  const auto l10 = bench::fast_lin_sol(1L << 10, 5, 1).iterations;
  const auto l16 = bench::fast_lin_sol(1L << 16, 5, 1).iterations;
  const double lratio = static_cast<double>(l16) / static_cast<double>(l10);

  std::vector<std::size_t> iters, kkt;
  bool converged = true;
  for (long n : {1L << 10, 1L << 12, 1L << 14}) {
    const auto nlp = ocp::discretize(inst.ocp, n);
    try {
      const auto r = ocp::sqp_solve(nlp, inst.initial_guess(nlp));
      converged = converged && r.report.converged;
      iters.push_back(r.report.sqp_iterations);
      kkt.push_back(r.report.kkt_solves);
    } catch (const ocp::SqpStalledError& e) {
      converged = false;
      iters.push_back(e.partial().report.sqp_iterations);
      kkt.push_back(e.partial().report.kkt_solves);
    }
  }
  const bool same = iters[0] == iters[1] && iters[1] == iters[2];
  return {ratio <= 1.5 && lratio <= 1.5 && same && converged,
          format("feasibility Newton Krylov iterations %zu (N=2^10) vs %zu (N=2^16), ratio %.2f; random right-hand "
                 "side %zu vs %zu, ratio %.2f (limit 1.5); SQP iterations "
                 "%zu/%zu/%zu and KKT solves %zu/%zu/%zu at N=2^10/2^12/2^14%s",
                 k10.krylov_iterations, k16.krylov_iterations, ratio, l10, l16, lratio, iters[0], iters[1], iters[2], kkt[0], kkt[1],
                 kkt[2], converged ? "" : " (not all converged)")};
}

Outcome scaling() {
  spectral::set_plan_rigor(spectral::PlanRigor::measure);
  std::vector<long> ns;
  for (long n = 64; n <= (1L << 17); n *= 2) ns.push_back(n);
  // Operands for every N are built up front; the sweep is then timed round-robin.
  struct Fast {
    ops::BirkhoffOperator op;
    Vec v, out;
  };
  struct Dense {
    Eigen::MatrixXd b;
    Eigen::VectorXd v, out;
  };
  std::vector<std::unique_ptr<Fast>> fast;
  std::vector<std::unique_ptr<Dense>> dense;
  std::vector<std::function<void()>> calls;
  for (long n : ns) {
    const auto grid = spectral::make_shared_grid(n);
    auto& f = fast.emplace_back(new Fast{ops::BirkhoffOperator(grid), random_vector(grid->size(), 5), Vec(grid->size())});
    calls.emplace_back([p = f.get()] { ops::fast_bv(p->op, p->v, p->out); });
  }
  for (long n : ns) {
    if (n > static_cast<long>(bench::kDenseProductLimit)) break;
    const auto grid = spectral::make_grid(n);
    auto& d = dense.emplace_back(new Dense{ops::dense_birkhoff(grid), view(random_vector(grid.size(), 5)),
                                           Eigen::VectorXd(static_cast<Eigen::Index>(grid.size()))});
    calls.emplace_back([p = d.get()] { p->out.noalias() = p->b * p->v; });
  }
  const auto t = bench::time_interleaved(calls, 31, 2e-3);
  std::vector<double> tf, td(ns.size(), -1.0);
  for (std::size_t i = 0; i < ns.size(); ++i) tf.push_back(t[i].median);
  for (std::size_t i = 0; i < dense.size(); ++i) td[i] = t[ns.size() + i].median;
  bool ok = true;
  std::string d = "fast ratios";
  for (std::size_t i = 0; i + 1 < ns.size(); ++i) {
    if (ns[i] < (1L << 13)) continue;
    const double r = tf[i + 1] / tf[i];
    ok = ok && r < 2.6;
    d += format(" %.2f", r);
  }
  d += " (limit < 2.6 from N=2^13); dense ratios";
  for (std::size_t i = 0; i + 1 < ns.size(); ++i) {
    if (ns[i] < (1L << 10) || td[i + 1] < 0.0) continue;
    const double r = td[i + 1] / td[i];
    ok = ok && r >= 3.2;
    d += format(" %.2f", r);
  }
  d += " (limit >= 3.2 from N=2^10)";
  long crossover = -1;
  for (std::size_t i = 0; i < ns.size() && td[i] >= 0.0; ++i) {
    if (tf[i] < td[i]) {
      crossover = ns[i];
      break;
    }
  }
  const bool cross_ok = crossover >= (1L << 7) && crossover <= (1L << 13);
  ok = ok && cross_ok;
  d += crossover > 0 ? format("; fast first wins at N=%ld (window 2^7..2^13)", crossover)
                     : std::string("; no crossover up to the dense limit");
  return {ok, d};
}

Outcome spectral_convergence() {
  ocp::NewtonConfig tight;
  tight.tol = 1e-14;
  tight.krylov.tol = 1e-14;
  std::vector<double> err;
  for (long n : {8L, 16L, 32L, 64L}) {
    const auto nlp = ocp::discretize(ocp::exp_ode().ocp, n);
    const Vec xa{1.0};
    const auto st = ocp::newton_feasibility(nlp, {}, xa, {}, tight);
    double e = 0.0;
    for (std::size_t i = 0; i < nlp.nodes(); ++i) {
      e = std::max(e, std::abs(st.X[i] - std::exp(nlp.grid().nodes()[i] + 1.0)));
    }
    err.push_back(e);
  }
  bool ok = true;
  std::string d = format("x' = x errors %.2e %.2e %.2e %.2e at N=8/16/32/64; drop factors", err[0], err[1], err[2],
                         err[3]);
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    const double r = err[i] / std::max(err[i + 1], 1e-300);
    ok = ok && r >= 10.0;
    d += format(" %.3g", r);
  }
  d += " (limit >= 10 each)";
  return {ok, d};
}

Outcome orbit_end_to_end(long n) {
  const auto inst = ocp::orbit_transfer();
  const auto nlp = ocp::discretize(inst.ocp, n);
  ocp::SqpResult r;
  try {
    r = ocp::sqp_solve(nlp, inst.initial_guess(nlp));
  } catch (const ocp::SqpStalledError& e) {
    return {false, std::string("solver stalled: ") + e.what()};
  }
  const auto& s = r.solution;
  const Vec start{1.0, 0.0, 1.0, 0.0};
  const Vec target{6.0, 0.0, 1.0 / std::sqrt(6.0)};
  double bc = 0.0;
  for (std::size_t c = 0; c < 4; ++c) bc = std::max(bc, std::abs(s.xa[c] - start[c]));
  for (std::size_t c = 0; c < 3; ++c) bc = std::max(bc, std::abs(s.xb[c] - target[c]));
  const auto chk = ocp::validate_solution(inst.ocp, s);
  double mis = 0.0;
  for (double m : chk.terminal_mismatch) mis = std::isfinite(m) ? std::max(mis, m) : m;
  const bool ok = r.report.converged && bc <= 1e-7 && mis <= 1e-4;
  return {ok, format("orbit transfer N=%ld: %s in %zu SQP iterations, T = %.10f, boundary error %.2e (limit 1e-7), "
                     "re-propagation mismatch %.2e (limit 1e-4), solve %.1fs",
                     n, r.report.converged ? "converged" : "not converged", r.report.sqp_iterations, s.p[0], bc, mis,
                     r.report.wall_time)};
}

Outcome orbit_huge() {
  const auto small = orbit_end_to_end(1L << 16);
  const double rss_small = peak_rss_bytes();
  const auto big = orbit_end_to_end(1L << 20);
  const double rss_big = peak_rss_bytes();
  const double growth = rss_big / rss_small;
  const bool linear = growth <= 16.0 * 1.5;
  return {small.pass && big.pass && linear,
          big.detail + format("; peak memory %.2f GB at N=2^16, %.2f GB at N=2^20 (growth %.1fx for 16x the nodes)",
                              rss_small / 1e9, rss_big / 1e9, growth)};
}

Outcome conditioning() {
  const auto cond_at = [](long n, const std::function<double(std::size_t)>& d) {
    const auto grid = spectral::make_grid(n);
    Vec diag(grid.size());
    for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = d(i);
    return ops::birkhoff_condition_number(grid, diag);
  };
  std::vector<std::pair<std::string, std::function<double(std::size_t)>>> cases = {
      {"d=+1", [](std::size_t) { return 1.0; }}, {"d=-1", [](std::size_t) { return -1.0; }}};
  for (std::uint64_t seed : {1, 2, 3}) {
    cases.emplace_back(format("random#%d", static_cast<int>(seed)), [seed](std::size_t i) {
      std::mt19937_64 rng(seed * 7919 + i);
      return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    });
  }
  bool ok = true;
  std::string d = "condition growth N=16 -> 1024:";
  for (const auto& [name, f] : cases) {
    const double c16 = cond_at(16, f), c1024 = cond_at(1024, f);
    ok = ok && c1024 / c16 < 3.0;
    d += format(" %s %.3g->%.3g (x%.2f)", name.c_str(), c16, c1024, c1024 / c16);
  }
  d += " (limit < 3x)";
  return {ok, d};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <1-9|all> [--huge]\n");
    return 2;
  }
  const std::string which = argv[1];
  const bool huge = argc > 2 && std::strcmp(argv[2], "--huge") == 0;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"fast B^a V oracle", fast_bv_oracle},
      {"printed 10-point matrices", printed_matrices},
      {"preconditioner exactness", preconditioner_exactness},
      {"linear solve vs dense LU", linear_solve},
      {"mesh-flat iteration counts", mesh_flat_counts},
      {"N log N scaling", scaling},
      {"spectral convergence", spectral_convergence},
      {"orbit transfer end to end", [huge] { return huge ? orbit_huge() : orbit_end_to_end(1L << 12); }},
      {"conditioning", conditioning},
  };
  bool all_pass = true;
  for (std::size_t k = 0; k < checks.size(); ++k) {
    if (which != "all" && which != std::to_string(k + 1)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = checks[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%zu] %s %s: %s [%.1fs]\n", k + 1, o.pass ? "PASS" : "FAIL", checks[k].first.c_str(), o.detail.c_str(),
                secs);
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
