// Solves the minimum-time orbit transfer from radius 1 to radius 6 and prints
// the iteration log, the transfer time, and a coarse table of the trajectory.
//
//   orbit_transfer_demo [N]      (default N = 512)

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "birkhoff/ocp/problems.hpp"
#include "birkhoff/ocp/sqp.hpp"
#include "birkhoff/ocp/validate.hpp"

int main(int argc, char** argv) {
  using namespace birkhoff;
  const long n = argc > 1 ? std::atol(argv[1]) : 512;
  if (n < 16) {
    std::fprintf(stderr, "N must be at least 16\n");
    return 2;
  }

  const auto inst = ocp::orbit_transfer();
  const auto nlp = ocp::discretize(inst.ocp, n);
  ocp::SqpResult r;
  try {
    r = ocp::sqp_solve(nlp, inst.initial_guess(nlp));
  } catch (const Error& e) {
    std::fprintf(stderr, "solve failed: %s\n", e.what());
    return 1;
  }

  std::printf("%4s %14s %10s %10s %10s %6s\n", "iter", "T", "infeas", "radius", "ratio", "step");
  for (const auto& it : r.report.history) {
    std::printf("%4zu %14.9f %10.2e %10.2e %10.3f %6s\n", it.iteration, it.objective, it.feasibility, it.radius,
                it.ratio, it.accepted ? "ok" : "rej");
  }

  const auto& s = r.solution;
  std::printf("\n%s after %zu iterations, %zu linearized-dynamics solves, %.2f s\n",
              r.report.converged ? "converged" : "NOT converged", r.report.sqp_iterations, r.report.kkt_solves,
              r.report.wall_time);
  std::printf("transfer time T = %.9f, final angle %.4f rad\n", s.p[0], s.xb[3]);

  const auto check = ocp::validate_solution(inst.ocp, s);
  std::printf("re-integrated with the collocated control: terminal mismatch %.2e\n\n", check.max_terminal_mismatch);

  // About a dozen nodes, evenly spaced in index (so clustered near the ends in time).
  const std::size_t nodes = nlp.nodes();
  std::printf("%10s %10s %10s %10s %10s %10s\n", "t", "r", "r'", "v_t", "theta", "u");
  for (std::size_t k = 0; k <= 12; ++k) {
    const std::size_t i = (k * (nodes - 1)) / 12;
    std::printf("%10.4f %10.5f %10.5f %10.5f %10.4f %10.4f\n", s.times[i], s.X[i], s.X[nodes + i], s.X[2 * nodes + i],
                s.X[3 * nodes + i], s.U[i]);
  }
  return r.report.converged ? 0 : 1;
}
