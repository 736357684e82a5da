#pragma once

// Feasibility for fixed controls: with V = g(X, U, p) eliminated the
// collocation reduces to F(X) = X - x_a 1 - B^a g(X, U, p) = 0, solved by
// Newton with each step (I - B^a dg/dX) dX = -F handled by fast_lin_sol.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <sstream>
#include <span>
#include <vector>

#include "birkhoff/error.hpp"
#include "birkhoff/krylov/birkhoff_system.hpp"
#include "birkhoff/ocp/discretization.hpp"

namespace birkhoff::ocp {

struct NewtonConfig {
  double tol = 1e-10;  // on ||F||_inf
  std::size_t max_iter = 50;
  std::size_t divergence_window = 5;  // consecutive residual increases
  krylov::KrylovConfig krylov{1e-8, 500, {}};
};

struct NewtonReport {
  std::size_t newton_iterations = 0;
  std::size_t krylov_iterations = 0;
  std::size_t linear_solves = 0;
  double residual = 0.0;
  bool converged = false;
  std::vector<double> history;  // ||F||_inf before each step, then the final value
};

class NewtonDivergedError : public Error {
 public:
  NewtonDivergedError(const std::string& what, NewtonReport report)
      : Error(Errc::newton_diverged, what), report_(std::move(report)) {}
  const NewtonReport& report() const noexcept { return report_; }

 private:
  NewtonReport report_;
};

struct FeasibleState {
  std::vector<double> X;
  NewtonReport report;
};

/// F(X) = X - x_a 1 - B^a g(X, U, p), channel-major.
inline std::vector<double> feasibility_residual(const DiscreteNlp& nlp, CSpan X, CSpan U, CSpan xa, CSpan p) {
  const std::size_t n = nlp.nodes();
  auto G = nlp.node_dynamics(X, U, p);
  for (std::size_t c = 0; c < nlp.nx(); ++c) {
    std::span<double> gc(G.data() + c * n, n);
    ops::fast_bv(nlp.birkhoff(), gc, gc);
    for (std::size_t i = 0; i < n; ++i) gc[i] = X[c * n + i] - xa[c] - gc[i];
  }
  return G;
}

/// Marches X = x_a 1 + B~ g(X) node by node, B~ being the triangular
/// surrogate: node k solves x - (w_k/2) g(x) = x_a + sum_{j<k} w_j g_j with a
/// few local Newton steps. A cheap, usually very good start for Newton.
inline std::vector<double> surrogate_sweep(const DiscreteNlp& nlp, CSpan U, CSpan xa, CSpan p) {
  const std::size_t n = nlp.nodes(), nx = nlp.nx(), nu = nlp.nu(), np = nlp.np();
  const auto& ocp = nlp.ocp();
  const auto w = nlp.grid().cc_weights();
  const double s = nlp.time_scale(p);
  std::vector<double> X(n * nx);
  Eigen::VectorXd run = Eigen::Map<const Eigen::VectorXd>(xa.data(), static_cast<Eigen::Index>(nx));
  Eigen::VectorXd x = run, f(nx), rhs(nx);
  std::vector<double> u(nu), fv(nx);
  DynamicsJacobian jac;
  jac.resize(nx, nu, np);
  for (std::size_t k = 0; k < n; ++k) {
    nlp.gather(U, k, u);
    const double t = nlp.time_at(k, p);
    const double h = 0.5 * w[k] * s;
    const auto eval = [&](const Eigen::VectorXd& xv) {
      ocp.dynamics(std::span<const double>(xv.data(), nx), u, t, p, fv);
      return Eigen::Map<const Eigen::VectorXd>(fv.data(), static_cast<Eigen::Index>(nx)).eval();
    };
    for (int it = 0; it < 20; ++it) {
      f = eval(x);
      rhs = x - h * f - run;
      if (!rhs.allFinite()) break;
      if (rhs.lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + x.lpNorm<Eigen::Infinity>())) break;
      ocp.dynamics_jacobian(std::span<const double>(x.data(), nx), u, t, p, jac);
      Eigen::MatrixXd m = -h * jac.fx;
      m.diagonal().array() += 1.0;
      const Eigen::VectorXd dx = m.partialPivLu().solve(rhs);
      if (!dx.allFinite()) break;
      x -= dx;
    }
    f = eval(x);
    for (std::size_t c = 0; c < nx; ++c) X[c * n + k] = x(static_cast<Eigen::Index>(c));
    // Running sum over j <= k of w_j g_j.
    run += w[k] * s * f;
  }
  return X;
}

namespace impl {

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) return std::numeric_limits<double>::infinity();
    m = std::max(m, std::abs(x));
  }
  return m;
}

}  // namespace impl

/// Newton on F(X) = 0 for fixed (U, x_a, p). Starts from X0 when given, else
/// from surrogate_sweep. Throws NewtonDivergedError after `divergence_window`
/// consecutive steps without decrease, a non-finite residual, a stalled
/// linear solve, or max_iter steps.
inline FeasibleState newton_feasibility(const DiscreteNlp& nlp, CSpan U, CSpan xa, CSpan p,
                                        const NewtonConfig& cfg = {}, CSpan X0 = {}) {
  detail::require_size(U.size(), nlp.control_dim(), "U");
  detail::require_size(xa.size(), nlp.nx(), "x_a");
  detail::require_size(p.size(), nlp.np(), "p");
  FeasibleState st;
  auto& rep = st.report;
  if (X0.empty()) {
    st.X = surrogate_sweep(nlp, U, xa, p);
  } else {
    detail::require_size(X0.size(), nlp.state_dim(), "initial state field");
    st.X.assign(X0.begin(), X0.end());
  }
  auto F = feasibility_residual(nlp, st.X, U, xa, p);
  double res = impl::inf_norm(F);
  rep.history.push_back(res);
  NodeDerivatives d;
  std::size_t increases = 0;
  const auto fail = [&](const char* why) {
    rep.residual = res;
    std::ostringstream msg;
    msg << why << " after " << rep.newton_iterations << " Newton steps, residual history:";
    for (double h : rep.history) msg << ' ' << h;
    throw NewtonDivergedError(msg.str(), rep);
  };
  while (!(res <= cfg.tol)) {
    if (!std::isfinite(res)) fail("non-finite residual");
    if (rep.newton_iterations >= cfg.max_iter) fail("no convergence");
    nlp.node_derivatives(st.X, U, p, d, /*with_controls=*/false);
    for (double& v : F) v = -v;
    krylov::KrylovResult step;
    try {
      step = krylov::fast_lin_sol(nlp.birkhoff(), d.gx, F, cfg.krylov);
    } catch (const SingularPivotError&) {
      throw;  // a structural problem, not divergence
    } catch (const Error& e) {
      if (e.code() == Errc::numeric_breakdown) fail("numeric breakdown in the Newton step");
      throw;
    }
    ++rep.linear_solves;
    rep.krylov_iterations += step.stats.iterations;
    for (std::size_t i = 0; i < st.X.size(); ++i) st.X[i] += step.x[i];
    ++rep.newton_iterations;
    F = feasibility_residual(nlp, st.X, U, xa, p);
    const double next = impl::inf_norm(F);
    // An unconverged linear solve that buys nothing will not do better next time.
    const bool stalled = !step.stats.converged && !(next < res);
    increases = next >= res ? increases + 1 : 0;
    res = next;
    rep.history.push_back(res);
    if (stalled) fail("linear solve stalled");
    if (increases >= cfg.divergence_window) fail("residual grew in consecutive steps");
  }
  rep.residual = res;
  rep.converged = true;
  return st;
}

}  // namespace birkhoff::ocp
