#pragma once

// Built-in problems, registered by name.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "birkhoff/error.hpp"
#include "birkhoff/ocp/discretization.hpp"
#include "birkhoff/ocp/problem.hpp"

namespace birkhoff::ocp {

/// Starting point for sqp_solve. X is only a warm start for the first
/// feasibility solve and may be left empty.
struct InitialGuess {
  std::vector<double> U, p, xa, X;
};

struct ProblemInstance {
  OcpDefinition ocp;
  std::string description;
  std::function<InitialGuess(const DiscreteNlp&)> initial_guess;
};

struct OrbitTransferOptions {
  double thrust = 0.01;  // acceleration magnitude a, nondimensional
  double final_time_guess = 50.0;
};

/// Minimum-time low-thrust transfer between circular orbits of radius 1 and 6
/// in polar coordinates y = (r, r', v_t, theta) with thrust direction u:
///   r' = y1,  y1' = y2^2/y0 - 1/y0^2 + a sin u,  y2' = -y1 y2 / y0 + a cos u,  theta' = y2 / y0.
/// Boundary values y(0) = (1, 0, 1, 0), and (r, r', v_t)(T) = (6, 0, 1/sqrt 6);
/// the final angle is free.
inline ProblemInstance orbit_transfer(const OrbitTransferOptions& opt = {}) {
  ProblemInstance inst;
  auto& o = inst.ocp;
  o.name = "orbit-transfer";
  o.n_states = 4;
  o.n_controls = 1;
  o.n_params = 1;
  o.n_endpoint = 7;
  o.t_a = 0.0;
  o.final_time_param = 0;
  const double a = opt.thrust;
  o.dynamics = [a](CSpan y, CSpan u, double, CSpan, Span f) {
    f[0] = y[1];
    f[1] = y[2] * y[2] / y[0] - 1.0 / (y[0] * y[0]) + a * std::sin(u[0]);
    f[2] = -y[1] * y[2] / y[0] + a * std::cos(u[0]);
    f[3] = y[2] / y[0];
  };
  o.dynamics_jacobian = [a](CSpan y, CSpan u, double, CSpan, DynamicsJacobian& j) {
    const double r = y[0], r2 = r * r;
    j.fx.setZero();
    j.fx(0, 1) = 1.0;
    j.fx(1, 0) = -y[2] * y[2] / r2 + 2.0 / (r2 * r);
    j.fx(1, 2) = 2.0 * y[2] / r;
    j.fx(2, 0) = y[1] * y[2] / r2;
    j.fx(2, 1) = -y[2] / r;
    j.fx(2, 2) = -y[1] / r;
    j.fx(3, 0) = -y[2] / r2;
    j.fx(3, 2) = 1.0 / r;
    j.fu.setZero();
    j.fu(1, 0) = a * std::cos(u[0]);
    j.fu(2, 0) = -a * std::sin(u[0]);
    j.fp.setZero();
    j.ft.setZero();
  };
  // z = (x_a[4], x_b[4], T)
  o.cost = [](CSpan z) { return z[8]; };
  o.cost_gradient = [](CSpan, Span g) {
    std::fill(g.begin(), g.end(), 0.0);
    g[8] = 1.0;
  };
  const double vt_final = 1.0 / std::sqrt(6.0);
  o.constraints = [vt_final](CSpan z, Span e) {
    e[0] = z[0] - 1.0;
    e[1] = z[1];
    e[2] = z[2] - 1.0;
    e[3] = z[3];
    e[4] = z[4] - 6.0;
    e[5] = z[5];
    e[6] = z[6] - vt_final;
  };
  o.constraints_jacobian = [](CSpan, RowMajorMatrix& j) {
    j.setZero();
    for (Eigen::Index i = 0; i < 7; ++i) j(i, i) = 1.0;
  };
  o.probe_x = {1.5, 0.1, 0.8, 0.5};
  o.probe_u = {0.3};
  o.probe_p = {opt.final_time_guess};
  inst.description = "minimum-time low-thrust orbit transfer, r = 1 -> 6";
  const double t_guess = opt.final_time_guess;
  inst.initial_guess = [t_guess, vt_final](const DiscreteNlp& nlp) {
    InitialGuess g;
    const std::size_t n = nlp.nodes();
    g.U.assign(n, 0.0);
    g.p = {t_guess};
    g.xa = {1.0, 0.0, 1.0, 0.0};
    // Linear interpolation of the constrained states; the free angle starts at 0.
    const double from[4] = {1.0, 0.0, 1.0, 0.0};
    const double to[4] = {6.0, 0.0, vt_final, 0.0};
    g.X.resize(4 * n);
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double s = 0.5 * (nlp.grid().nodes()[i] + 1.0);
        g.X[c * n + i] = from[c] + s * (to[c] - from[c]);
      }
    }
    return g;
  };
  return inst;
}

/// x' = x on [-1, 1] with x(-1) = 1; the solution is exp(t + 1). No controls.
inline ProblemInstance exp_ode() {
  ProblemInstance inst;
  auto& o = inst.ocp;
  o.name = "exp-ode";
  o.n_states = 1;
  o.n_endpoint = 1;
  o.t_a = -1.0;
  o.t_b = 1.0;
  o.dynamics = [](CSpan x, CSpan, double, CSpan, Span f) { f[0] = x[0]; };
  o.dynamics_jacobian = [](CSpan, CSpan, double, CSpan, DynamicsJacobian& j) {
    j.fx(0, 0) = 1.0;
    j.ft.setZero();
  };
  o.cost = [](CSpan z) { return z[1]; };
  o.cost_gradient = [](CSpan, Span g) {
    g[0] = 0.0;
    g[1] = 1.0;
  };
  o.constraints = [](CSpan z, Span e) { e[0] = z[0] - 1.0; };
  o.constraints_jacobian = [](CSpan, RowMajorMatrix& j) {
    j.setZero();
    j(0, 0) = 1.0;
  };
  o.probe_x = {1.0};
  inst.description = "x' = x, x(-1) = 1 (closed form exp(t+1))";
  inst.initial_guess = [](const DiscreteNlp&) {
    InitialGuess g;
    g.xa = {0.5};
    return g;
  };
  return inst;
}

/// x' = u, z' = u^2/2 on [-1, 1], x(-1) = z(-1) = 0, x(1) = 1, minimize z(1).
/// The optimum is u = 1/2, x = (t+1)/2, z(1) = 1/4.
inline ProblemInstance lq_toy() {
  ProblemInstance inst;
  auto& o = inst.ocp;
  o.name = "lq-toy";
  o.n_states = 2;
  o.n_controls = 1;
  o.n_endpoint = 3;
  o.t_a = -1.0;
  o.t_b = 1.0;
  o.dynamics = [](CSpan, CSpan u, double, CSpan, Span f) {
    f[0] = u[0];
    f[1] = 0.5 * u[0] * u[0];
  };
  o.dynamics_jacobian = [](CSpan, CSpan u, double, CSpan, DynamicsJacobian& j) {
    j.fx.setZero();
    j.fu(0, 0) = 1.0;
    j.fu(1, 0) = u[0];
    j.ft.setZero();
  };
  // z = (x_a[2], x_b[2])
  o.cost = [](CSpan z) { return z[3]; };
  o.cost_gradient = [](CSpan, Span g) {
    std::fill(g.begin(), g.end(), 0.0);
    g[3] = 1.0;
  };
  o.constraints = [](CSpan z, Span e) {
    e[0] = z[0];
    e[1] = z[1];
    e[2] = z[2] - 1.0;
  };
  o.constraints_jacobian = [](CSpan, RowMajorMatrix& j) {
    j.setZero();
    j(0, 0) = 1.0;
    j(1, 1) = 1.0;
    j(2, 2) = 1.0;
  };
  o.probe_x = {0.2, 0.1};
  o.probe_u = {0.4};
  inst.description = "x' = u, z' = u^2/2, steer x from 0 to 1 minimizing z(1)";
  inst.initial_guess = [](const DiscreteNlp& nlp) {
    InitialGuess g;
    const std::size_t n = nlp.nodes();
    g.U.resize(n);
    // A deliberately non-optimal, non-feasible start.
    for (std::size_t i = 0; i < n; ++i) g.U[i] = 1.0 + nlp.grid().nodes()[i];
    g.xa = {0.0, 0.0};
    return g;
  };
  return inst;
}

inline std::vector<std::string> problem_names() { return {"orbit-transfer", "exp-ode", "lq-toy"}; }

inline ProblemInstance make_problem(const std::string& name) {
  if (name == "orbit-transfer") return orbit_transfer();
  if (name == "exp-ode") return exp_ode();
  if (name == "lq-toy") return lq_toy();
  throw Error(Errc::unknown_problem, "no built-in problem named '" + name + "'");
}

}  // namespace birkhoff::ocp
