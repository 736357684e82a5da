#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "birkhoff/error.hpp"
#include "birkhoff/krylov/linear_map.hpp"

namespace birkhoff::krylov {

/// Systems at least this large restart GMRES every kDefaultRestart steps
/// unless the caller says otherwise; smaller ones never restart.
inline constexpr std::size_t kRestartThreshold = 4096;
inline constexpr std::size_t kDefaultRestart = 60;

struct KrylovConfig {
  double tol = 1e-10;  // relative to ||rhs||
  std::size_t max_iter = 500;
  // nullopt: size-based default above. 0: never restart.
  std::optional<std::size_t> restart;
};

struct KrylovStats {
  std::size_t iterations = 0;
  double final_residual = 0.0;  // true ||b - A x||, not the Arnoldi estimate
  bool converged = false;
  std::size_t matvec_count = 0;
};

struct KrylovResult {
  std::vector<double> x;
  KrylovStats stats;
};

inline void validate(const KrylovConfig& cfg) {
  detail::require(cfg.tol > 0.0 && cfg.tol < 1.0, Errc::invalid_config, "Krylov tol must lie in (0, 1)");
  detail::require(cfg.max_iter >= 1, Errc::invalid_config, "Krylov max_iter must be >= 1");
}

inline std::size_t restart_length(const KrylovConfig& cfg, std::size_t dim) {
  const std::size_t r = cfg.restart.value_or(dim >= kRestartThreshold ? kDefaultRestart : 0);
  return r == 0 ? cfg.max_iter : std::min(r, cfg.max_iter);
}

namespace impl {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline void require_finite(std::span<const double> v, const char* where) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(Errc::numeric_breakdown, where);
  }
}

}  // namespace impl

/// Right-preconditioned restarted GMRES: solves A M^{-1} u = r, x = x0 + M^{-1} u.
/// Convergence is always decided on the true residual ||b - A x|| <= tol ||b||;
/// the Arnoldi estimate only decides when to stop a cycle and check it.
/// Running out of iterations is not an error: the best iterate comes back with
/// converged = false.
template <LinearMap Op, LinearMap Pre>
KrylovResult gmres(const Op& op, std::span<const double> b, const Pre& precond, const KrylovConfig& cfg,
                   std::span<const double> x0 = {}) {
  validate(cfg);
  const std::size_t n = op.dim();
  detail::require_size(b.size(), n, "gmres right-hand side");
  detail::require_size(precond.dim(), n, "gmres preconditioner");
  if (!x0.empty()) detail::require_size(x0.size(), n, "gmres initial guess");

  KrylovResult res;
  auto& st = res.stats;
  res.x.assign(n, 0.0);
  if (!x0.empty()) std::copy(x0.begin(), x0.end(), res.x.begin());

  const double bnorm = impl::norm2(b);
  if (bnorm == 0.0) {
    std::fill(res.x.begin(), res.x.end(), 0.0);
    st.converged = true;
    return res;
  }
  const double target = cfg.tol * bnorm;

  std::vector<double> r(n);
  std::vector<double> w(n);
  std::vector<double> z(n);
  auto true_residual = [&](std::span<const double> x) {
    op.apply(x, w);
    ++st.matvec_count;
    impl::require_finite(w, "non-finite value in operator apply");
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - w[i];
    return impl::norm2(r);
  };

  double rnorm;
  if (x0.empty()) {
    std::copy(b.begin(), b.end(), r.begin());
    rnorm = bnorm;
  } else {
    rnorm = true_residual(res.x);
  }
  st.final_residual = rnorm;
  if (rnorm <= target) {
    st.converged = true;
    return res;
  }

  std::vector<double> best = res.x;
  double best_norm = rnorm;

  const std::size_t m_max = restart_length(cfg, n);
  std::vector<std::vector<double>> basis;
  basis.reserve(m_max + 1);
  std::vector<double> h((m_max + 1) * m_max);  // column-major Hessenberg
  std::vector<double> cs(m_max), sn(m_max), g(m_max + 1), y(m_max);
  auto H = [&](std::size_t i, std::size_t j) -> double& { return h[j * (m_max + 1) + i]; };

  while (st.iterations < cfg.max_iter) {
    const std::size_t m = std::min(m_max, cfg.max_iter - st.iterations);
    if (basis.empty()) basis.emplace_back(n);
    for (std::size_t i = 0; i < n; ++i) basis[0][i] = r[i] / rnorm;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = rnorm;

    std::size_t k = 0;
    for (std::size_t j = 0; j < m; ++j) {
      precond.apply(basis[j], z);
      op.apply(z, w);
      ++st.matvec_count;
      ++st.iterations;
      impl::require_finite(w, "non-finite value in preconditioned operator apply");

      const double wnorm0 = impl::norm2(w);
      for (std::size_t i = 0; i <= j; ++i) {
        const double hij = impl::dot(w, basis[i]);
        H(i, j) = hij;
        for (std::size_t t = 0; t < n; ++t) w[t] -= hij * basis[i][t];
      }
      const double hnext = impl::norm2(w);
      H(j + 1, j) = hnext;

      for (std::size_t i = 0; i < j; ++i) {
        const double a = H(i, j);
        const double c = H(i + 1, j);
        H(i, j) = cs[i] * a + sn[i] * c;
        H(i + 1, j) = -sn[i] * a + cs[i] * c;
      }
      const double denom = std::hypot(H(j, j), H(j + 1, j));
      if (denom == 0.0) {
        cs[j] = 1.0;
        sn[j] = 0.0;
      } else {
        cs[j] = H(j, j) / denom;
        sn[j] = H(j + 1, j) / denom;
      }
      H(j, j) = cs[j] * H(j, j) + sn[j] * H(j + 1, j);
      H(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      k = j + 1;

      // Happy breakdown: the Krylov space is invariant, the cycle's answer is exact.
      const bool breakdown = hnext <= 1e-14 * std::max(wnorm0, std::numeric_limits<double>::min());
      if (breakdown || std::abs(g[j + 1]) <= target) break;
      if (basis.size() < j + 2) basis.emplace_back(n);
      for (std::size_t t = 0; t < n; ++t) basis[j + 1][t] = w[t] / hnext;
    }

    // Back substitution on the k x k triangle, skipping vanishing pivots.
    for (std::size_t ii = k; ii-- > 0;) {
      double s = g[ii];
      for (std::size_t jj = ii + 1; jj < k; ++jj) s -= H(ii, jj) * y[jj];
      y[ii] = H(ii, ii) != 0.0 ? s / H(ii, ii) : 0.0;
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t jj = 0; jj < k; ++jj) {
      for (std::size_t t = 0; t < n; ++t) w[t] += y[jj] * basis[jj][t];
    }
    precond.apply(w, z);
    for (std::size_t t = 0; t < n; ++t) res.x[t] += z[t];

    rnorm = true_residual(res.x);
    if (rnorm < best_norm) {
      best_norm = rnorm;
      best = res.x;
    }
    if (rnorm <= target) {
      st.converged = true;
      st.final_residual = rnorm;
      return res;
    }
  }

  res.x = std::move(best);
  st.final_residual = best_norm;
  return res;
}

template <LinearMap Op>
KrylovResult gmres(const Op& op, std::span<const double> b, const KrylovConfig& cfg,
                   std::span<const double> x0 = {}) {
  return gmres(op, b, IdentityMap{op.dim()}, cfg, x0);
}

}  // namespace birkhoff::krylov
