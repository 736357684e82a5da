#pragma once

// Timing harness for the scaling benchmarks: median wall time per call of
// fast and dense B^a V, and of the preconditioned linear solve against dense LU.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "birkhoff/krylov/birkhoff_system.hpp"
#include "birkhoff/ocp/newton.hpp"
#include "birkhoff/ocp/problems.hpp"
#include "birkhoff/ops/birkhoff_operator.hpp"
#include "birkhoff/ops/dense.hpp"

namespace birkhoff::bench {

struct Timing {
  double median = 0.0;  // seconds per call
  double min = 0.0;
  std::size_t repetitions = 0;
  std::size_t batch = 1;  // calls per timed repetition
};

/// Median over `reps` repetitions; each repetition times a batch of calls
/// sized so that it lasts at least `min_batch_time` seconds.
template <class F>
Timing time_call(F&& f, std::size_t reps = 21, double min_batch_time = 2e-4) {
  using clock = std::chrono::steady_clock;
  const auto seconds = [](clock::duration d) { return std::chrono::duration<double>(d).count(); };
  f();  // warm-up: plans, scratch buffers, caches
  auto t0 = clock::now();
  f();
  const double single = std::max(seconds(clock::now() - t0), 1e-9);
  Timing t;
  t.batch = static_cast<std::size_t>(std::max(1.0, std::ceil(min_batch_time / single)));
  t.repetitions = std::max<std::size_t>(reps, 1);
  std::vector<double> samples(t.repetitions);
  for (double& s : samples) {
    t0 = clock::now();
    for (std::size_t k = 0; k < t.batch; ++k) f();
    s = seconds(clock::now() - t0) / static_cast<double>(t.batch);
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t m = samples.size();
  t.median = m % 2 == 1 ? samples[m / 2] : 0.5 * (samples[m / 2 - 1] + samples[m / 2]);
  t.min = samples.front();
  return t;
}

/// Like time_call for several callables at once, but the repetitions go
/// round-robin over them, so a burst of outside load is shared by all of them
/// and does not skew one entry of a sweep.
inline std::vector<Timing> time_interleaved(const std::vector<std::function<void()>>& fs, std::size_t reps = 21,
                                            double min_batch_time = 2e-4) {
  using clock = std::chrono::steady_clock;
  const auto seconds = [](clock::duration d) { return std::chrono::duration<double>(d).count(); };
  std::vector<Timing> out(fs.size());
  for (std::size_t i = 0; i < fs.size(); ++i) {
    fs[i]();
    const auto t0 = clock::now();
    fs[i]();
    const double single = std::max(seconds(clock::now() - t0), 1e-9);
    out[i].batch = static_cast<std::size_t>(std::max(1.0, std::ceil(min_batch_time / single)));
    out[i].repetitions = std::max<std::size_t>(reps, 1);
  }
  std::vector<std::vector<double>> samples(fs.size(), std::vector<double>(std::max<std::size_t>(reps, 1)));
  for (std::size_t r = 0; r < samples.front().size(); ++r) {
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const auto t0 = clock::now();
      for (std::size_t k = 0; k < out[i].batch; ++k) fs[i]();
      samples[i][r] = seconds(clock::now() - t0) / static_cast<double>(out[i].batch);
    }
  }
  for (std::size_t i = 0; i < fs.size(); ++i) {
    auto& v = samples[i];
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    out[i].median = m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
    out[i].min = v.front();
  }
  return out;
}

/// Largest N timed for the dense products and for dense LU of the 4-channel system.
inline constexpr std::size_t kDenseProductLimit = ops::kDenseOrderGuard;
inline constexpr std::size_t kDenseSolveLimit = 512;

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

inline Timing fast_bv(std::size_t n, std::uint64_t seed, std::size_t reps = 21, double min_batch_time = 2e-4) {
  const auto grid = spectral::make_shared_grid(static_cast<long>(n));
  const ops::BirkhoffOperator op(grid);
  const auto v = random_vector(n + 1, seed);
  std::vector<double> out(n + 1);
  return time_call([&] { ops::fast_bv(op, v, out); }, reps, min_batch_time);
}

inline Timing dense_bv(std::size_t n, std::uint64_t seed, std::size_t reps = 21, double min_batch_time = 2e-4) {
  const auto grid = spectral::make_grid(static_cast<long>(n));
  const Eigen::MatrixXd b = ops::dense_birkhoff(grid);
  const auto v = random_vector(n + 1, seed);
  const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n + 1));
  return time_call([&] { y.noalias() = b * x; }, reps, min_batch_time);
}

/// The Newton system of the orbit transfer at its documented initial guess
/// (coast on the starting orbit for T = 50), which is what the first
/// feasibility solve sees.
struct OrbitSystem {
  ocp::DiscreteNlp nlp;
  ocp::NodeDerivatives deriv;
  std::vector<double> rhs;
};

inline OrbitSystem orbit_system(std::size_t n, std::uint64_t seed) {
  const auto inst = ocp::orbit_transfer();
  OrbitSystem s{ocp::discretize(inst.ocp, static_cast<long>(n)), {}, {}};
  const auto g = inst.initial_guess(s.nlp);
  const auto X = ocp::surrogate_sweep(s.nlp, g.U, g.xa, g.p);
  s.nlp.node_derivatives(X, g.U, g.p, s.deriv, /*with_controls=*/false);
  s.rhs = random_vector(s.nlp.state_dim(), seed);
  return s;
}

struct SolveTiming {
  Timing timing;
  std::size_t iterations = 0;
};

inline SolveTiming fast_lin_sol(std::size_t n, std::uint64_t seed, std::size_t reps = 21) {
  const auto s = orbit_system(n, seed);
  const krylov::KrylovConfig cfg{1e-10, 500, {}};
  SolveTiming out;
  out.iterations = krylov::fast_lin_sol(s.nlp.birkhoff(), s.deriv.gx, s.rhs, cfg).stats.iterations;
  out.timing = time_call([&] { (void)krylov::fast_lin_sol(s.nlp.birkhoff(), s.deriv.gx, s.rhs, cfg); }, reps);
  return out;
}

inline Timing dense_lu(std::size_t n, std::uint64_t seed, std::size_t reps = 21) {
  const auto s = orbit_system(n, seed);
  const Eigen::MatrixXd a = ops::dense_system(ops::dense_birkhoff(s.nlp.grid()), s.deriv.gx);
  const Eigen::Map<const Eigen::VectorXd> b(s.rhs.data(), static_cast<Eigen::Index>(s.rhs.size()));
  Eigen::VectorXd x;
  return time_call([&] { x = a.partialPivLu().solve(b); }, reps, 0.0);
}

/// Rough peak working set of one command at order n, in bytes.
inline double memory_estimate(const std::string& command, const std::string& problem, std::size_t n) {
  const double nodes = static_cast<double>(n + 1);
  if (command == "bench") {
    // fast_lin_sol on 4 channels: Krylov basis plus a few work vectors.
    const double dim = 4.0 * nodes;
    double bytes = (krylov::kDefaultRestart + 16.0) * dim * 8.0;
    if (n <= kDenseProductLimit) bytes = std::max(bytes, nodes * nodes * 8.0 * 3.0);
    return bytes;
  }
  std::size_t nx = 4, nu = 1;
  if (problem == "exp-ode") nx = 1, nu = 0;
  if (problem == "lq-toy") nx = 2, nu = 1;
  const double dim = static_cast<double>(nx) * nodes;
  // Krylov basis of the state solves, adjoints, sensitivities and CG vectors.
  return ((krylov::kDefaultRestart + 16.0) + 3.0 * static_cast<double>(nx) + 40.0) * dim * 8.0 +
         40.0 * static_cast<double>(nu) * nodes * 8.0;
}

}  // namespace birkhoff::bench
