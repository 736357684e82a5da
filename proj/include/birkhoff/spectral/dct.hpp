#pragma once

#include <fftw3.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <unordered_map>
#include <vector>

#include "birkhoff/error.hpp"

namespace birkhoff::spectral {

/// Lengths below this use the O(N^2) summation; the FFT path only pays off
/// beyond a few dozen points.
inline constexpr std::size_t kDirectDctThreshold = 32;

/// Type-I DCT by direct summation:
///   out_j = in_0/2 + sum_{k=1}^{N-1} in_k cos(k j pi / N) + (-1)^j in_N/2.
inline void dct1_direct(std::span<const double> in, std::span<double> out) {
  detail::require(in.size() >= 2, Errc::invalid_size, "dct1 needs at least 2 samples");
  detail::require_size(out.size(), in.size(), "dct1 output");
  const std::size_t n = in.size() - 1;
  std::vector<double> result(in.size());
  for (std::size_t j = 0; j <= n; ++j) {
    double acc = 0.5 * (in[0] + ((j % 2 == 0) ? in[n] : -in[n]));
    for (std::size_t k = 1; k < n; ++k) {
      // Reduce k*j mod 2n before the cosine to keep the argument small.
      const std::size_t m = (k * j) % (2 * n);
      acc += in[k] * std::cos(std::numbers::pi * static_cast<double>(m) / static_cast<double>(n));
    }
    result[j] = acc;
  }
  std::copy(result.begin(), result.end(), out.begin());
}

/// How hard FFTW searches for a fast plan. `estimate` picks the same plan on
/// every run, so results are reproducible bit for bit; `measure` times
/// candidates and is faster for long transforms but may vary between runs.
enum class PlanRigor { estimate, measure };

namespace impl {

inline std::atomic<PlanRigor>& plan_rigor_setting() {
  static std::atomic<PlanRigor> r{PlanRigor::estimate};
  return r;
}

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class Redft00Plan {
 public:
  Redft00Plan(std::size_t length, PlanRigor rigor) {
    // Planner calls are not thread-safe; execution with new arrays is.
    std::lock_guard lock(fftw_planner_mutex());
    double* in = fftw_alloc_real(length);
    double* out = fftw_alloc_real(length);
    const unsigned flags = rigor == PlanRigor::measure ? FFTW_MEASURE : FFTW_ESTIMATE;
    plan_ = fftw_plan_r2r_1d(static_cast<int>(length), in, out, FFTW_REDFT00,
                             flags | FFTW_UNALIGNED | FFTW_PRESERVE_INPUT);
    fftw_free(in);
    fftw_free(out);
    if (plan_ == nullptr) throw Error(Errc::invalid_size, "FFTW could not plan a DCT-I");
  }
  Redft00Plan(const Redft00Plan&) = delete;
  Redft00Plan& operator=(const Redft00Plan&) = delete;
  ~Redft00Plan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }

  void execute(const double* in, double* out) const {
    fftw_execute_r2r(plan_, const_cast<double*>(in), out);
  }

 private:
  fftw_plan plan_ = nullptr;
};

// Per-thread scratch, reused across calls: large fresh allocations are
// mmap-backed and page-faulted on every call, which dominates at N ~ 1e5.
template <int Tag>
std::vector<double>& scratch(std::size_t length) {
  thread_local std::vector<double> buf;
  if (buf.size() < length) buf.resize(length);
  return buf;
}

inline const Redft00Plan& redft00_plan(std::size_t length) {
  thread_local std::unordered_map<std::size_t, std::unique_ptr<Redft00Plan>> cache[2];
  const PlanRigor rigor = plan_rigor_setting().load(std::memory_order_relaxed);
  auto& slot = cache[static_cast<int>(rigor)][length];
  if (!slot) slot = std::make_unique<Redft00Plan>(length, rigor);
  return *slot;
}

}  // namespace impl

/// Process-wide; affects transforms planned after the call.
inline void set_plan_rigor(PlanRigor rigor) { impl::plan_rigor_setting().store(rigor); }
inline PlanRigor plan_rigor() { return impl::plan_rigor_setting().load(); }

namespace impl {

// FFTW's REDFT00 scaling (twice the convention above). `in` and `out` must not alias.
inline void dct1_unscaled(std::span<const double> in, std::span<double> out) {
  if (in.size() < kDirectDctThreshold) {
    dct1_direct(in, out);
    for (double& x : out) x *= 2.0;
    return;
  }
  redft00_plan(in.size()).execute(in.data(), out.data());
}

}  // namespace impl

/// Type-I DCT in the convention above, O(N log N) for N+1 >= 32.
/// `in` and `out` may alias.
inline void dct1(std::span<const double> in, std::span<double> out) {
  detail::require(in.size() >= 2, Errc::invalid_size, "dct1 needs at least 2 samples");
  detail::require_size(out.size(), in.size(), "dct1 output");
  if (in.size() < kDirectDctThreshold) {
    dct1_direct(in, out);
    return;
  }
  const auto& plan = impl::redft00_plan(in.size());
  if (in.data() == out.data()) {
    auto& tmp = impl::scratch<0>(in.size());
    std::copy(in.begin(), in.end(), tmp.begin());
    plan.execute(tmp.data(), out.data());
  } else {
    plan.execute(in.data(), out.data());
  }
  for (double& x : out) x *= 0.5;
}

inline std::vector<double> dct1(std::span<const double> in) {
  std::vector<double> out(in.size());
  dct1(in, out);
  return out;
}

}  // namespace birkhoff::spectral
