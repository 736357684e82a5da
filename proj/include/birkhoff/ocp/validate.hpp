#pragma once

// Independent check of a collocated solution: the dynamics are re-integrated
// with an adaptive Dormand-Prince method driven by the interpolated control,
// and compared with the collocated state interpolant.

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "birkhoff/ocp/discretization.hpp"
#include "birkhoff/ocp/problem.hpp"
#include "birkhoff/ocp/sqp.hpp"
#include "birkhoff/ops/birkhoff_operator.hpp"
#include "birkhoff/spectral/transforms.hpp"

namespace birkhoff::ocp {

struct SolutionCheckOptions {
  double rk_rel_tol = 1e-12;
  double rk_abs_tol = 1e-12;
  double tolerance = 1e-4;  // a solution passes when every figure below is within it
};

struct SolutionCheck {
  bool passed = false;
  bool finite = true;
  std::vector<double> terminal_mismatch;  // |x_rk(t_b) - x_b| per state
  double max_terminal_mismatch = 0.0;
  double max_state_mismatch = 0.0;        // over the check points
  double dynamics_residual = 0.0;         // ||V - s f(X, U)||_inf
  double collocation_residual = 0.0;      // ||X - x_a - B^a V||_inf
  double endpoint_violation = 0.0;        // ||e(x_a, x_b, p)||_inf
  std::size_t rk_steps = 0;
  std::string message;
};

namespace impl {

/// Chebyshev series of a nodal field with its negligible tail dropped, so that
/// evaluating a smooth control stays cheap on very fine grids.
inline std::vector<double> truncated_series(CSpan values, const spectral::ChebGrid& grid) {
  auto a = spectral::nodal_to_modal(values, grid).coeffs;
  double amax = 0.0;
  for (double v : a) amax = std::max(amax, std::abs(v));
  const double cut = 1e-16 * amax;
  std::size_t keep = a.size();
  while (keep > 1 && std::abs(a[keep - 1]) <= cut) --keep;
  a.resize(keep);
  return a;
}

inline bool all_finite(CSpan v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace impl

/// Checks `sol` against the dynamics and endpoint conditions of `ocp`.
/// The states are compared at `n_check` equally spaced points of [-1, 1]
/// (the last one is the final time). Never throws on bad numbers: non-finite
/// data makes the check fail.
inline SolutionCheck validate_solution(const OcpDefinition& ocp, const Trajectory& sol, std::size_t n_check = 200,
                                       const SolutionCheckOptions& opt = {}) {
  namespace odeint = boost::numeric::odeint;
  SolutionCheck out;
  const auto& grid = *sol.grid;
  const std::size_t n = grid.size(), nx = ocp.n_states, nu = ocp.n_controls;
  detail::require_size(sol.X.size(), n * nx, "solution states");
  detail::require_size(sol.U.size(), n * nu, "solution controls");
  detail::require_size(sol.V.size(), n * nx, "solution virtual controls");
  n_check = std::max<std::size_t>(n_check, 2);

  out.finite = impl::all_finite(sol.X) && impl::all_finite(sol.U) && impl::all_finite(sol.V) &&
               impl::all_finite(sol.xa) && impl::all_finite(sol.xb) && impl::all_finite(sol.p);
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  if (!out.finite) {
    out.terminal_mismatch.assign(nx, nan);
    out.max_terminal_mismatch = out.max_state_mismatch = nan;
    out.dynamics_residual = out.collocation_residual = out.endpoint_violation = nan;
    out.message = "solution contains non-finite values";
    return out;
  }

  const double tf = ocp.final_time_param ? sol.p[*ocp.final_time_param] : ocp.t_b;
  const double s = 0.5 * (tf - ocp.t_a);
  const auto time_of = [&](double tau) { return ocp.t_a + s * (tau + 1.0); };

  // Dynamics and collocation residuals on the grid.
  std::vector<double> x(nx), u(nu), f(nx);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < nx; ++c) x[c] = sol.X[c * n + i];
    for (std::size_t k = 0; k < nu; ++k) u[k] = sol.U[k * n + i];
    ocp.dynamics(x, u, time_of(grid.nodes()[i]), sol.p, f);
    for (std::size_t c = 0; c < nx; ++c) {
      out.dynamics_residual = std::max(out.dynamics_residual, std::abs(sol.V[c * n + i] - s * f[c]));
    }
  }
  if (grid.order() >= 2) {
    const ops::BirkhoffOperator op(sol.grid);
    std::vector<double> bv(n);
    for (std::size_t c = 0; c < nx; ++c) {
      ops::fast_bv(op, CSpan(sol.V.data() + c * n, n), bv);
      for (std::size_t i = 0; i < n; ++i) {
        out.collocation_residual =
            std::max(out.collocation_residual, std::abs(sol.X[c * n + i] - sol.xa[c] - bv[i]));
      }
    }
  }

  if (ocp.n_endpoint > 0) {
    std::vector<double> z;
    z.insert(z.end(), sol.xa.begin(), sol.xa.end());
    z.insert(z.end(), sol.xb.begin(), sol.xb.end());
    z.insert(z.end(), sol.p.begin(), sol.p.end());
    std::vector<double> e(ocp.n_endpoint);
    ocp.constraints(z, e);
    for (double v : e) out.endpoint_violation = std::max(out.endpoint_violation, std::abs(v));
  }

  // Re-propagation in tau with the interpolated control.
  std::vector<std::vector<double>> useries(nu), xseries(nx);
  for (std::size_t k = 0; k < nu; ++k) useries[k] = impl::truncated_series(CSpan(sol.U.data() + k * n, n), grid);
  for (std::size_t c = 0; c < nx; ++c) xseries[c] = impl::truncated_series(CSpan(sol.X.data() + c * n, n), grid);

  using State = std::vector<double>;
  const auto rhs = [&](const State& y, State& dy, double tau) {
    std::vector<double> uu(nu), ff(nx);
    const double t = std::clamp(tau, -1.0, 1.0);
    for (std::size_t k = 0; k < nu; ++k) uu[k] = spectral::clenshaw_eval(useries[k], t);
    ocp.dynamics(y, uu, time_of(t), sol.p, ff);
    for (std::size_t c = 0; c < nx; ++c) dy[c] = s * ff[c];
  };
  std::vector<double> taus(n_check);
  for (std::size_t k = 0; k < n_check; ++k) {
    taus[k] = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(n_check - 1);
  }
  taus.back() = 1.0;
  State y(sol.xa.begin(), sol.xa.end());
  bool blew_up = false;
  const auto observe = [&](const State& state, double tau) {
    for (std::size_t c = 0; c < nx; ++c) {
      const double d = std::abs(state[c] - spectral::clenshaw_eval(xseries[c], std::clamp(tau, -1.0, 1.0)));
      if (!std::isfinite(d)) blew_up = true;
      out.max_state_mismatch = std::max(out.max_state_mismatch, d);
    }
  };
  try {
    auto stepper = odeint::make_dense_output(opt.rk_abs_tol, opt.rk_rel_tol, odeint::runge_kutta_dopri5<State>());
    out.rk_steps = odeint::integrate_times(stepper, rhs, y, taus.begin(), taus.end(), 1e-3, observe);
  } catch (const std::exception& e) {
    blew_up = true;
    out.message = std::string("re-propagation failed: ") + e.what();
  }

  out.terminal_mismatch.assign(nx, nan);
  if (!blew_up) {
    out.max_terminal_mismatch = 0.0;
    for (std::size_t c = 0; c < nx; ++c) {
      out.terminal_mismatch[c] = std::abs(y[c] - sol.xb[c]);
      out.max_terminal_mismatch = std::max(out.max_terminal_mismatch, out.terminal_mismatch[c]);
    }
  } else {
    out.max_terminal_mismatch = out.max_state_mismatch = nan;
  }

  const double tol = opt.tolerance;
  out.passed = !blew_up && out.max_terminal_mismatch <= tol && out.max_state_mismatch <= tol &&
               out.dynamics_residual <= tol && out.collocation_residual <= tol && out.endpoint_violation <= tol;
  if (out.message.empty()) {
    std::ostringstream m;
    m << (out.passed ? "consistent" : "inconsistent") << ": terminal mismatch " << out.max_terminal_mismatch
      << ", state mismatch " << out.max_state_mismatch << ", dynamics residual " << out.dynamics_residual
      << ", endpoint violation " << out.endpoint_violation;
    out.message = m.str();
  }
  return out;
}

}  // namespace birkhoff::ocp
