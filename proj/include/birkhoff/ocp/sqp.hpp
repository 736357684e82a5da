#pragma once

// SQP for the collocated problem in reduced space.
//
// The states are not free variables: for every control/parameter/initial-state
// iterate w = (U, p, x_a) they are obtained by Newton feasibility, so the
// dynamics rows hold to Newton tolerance at every iterate and x_b = X_N. What
// remains is  min phi(w) = E(x_a, X_N(w), p)  s.t.  c(w) = e(x_a, X_N(w), p) = 0.
//
// Derivatives of X_N(w) come from adjoint solves with A^T = (I - B^a dg/dX)^T,
// the reduced Hessian of the Lagrangian from one forward and one adjoint solve
// per product. Each QP is solved by projected preconditioned CG in the metric
// of the quadrature-weighted control Hessian, which keeps iteration counts
// independent of the grid. Globalization is a trust region in that metric
// (normal step plus Steihaug tangential step) on the l2 merit function, with a
// second-order correction.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "birkhoff/error.hpp"
#include "birkhoff/krylov/birkhoff_system.hpp"
#include "birkhoff/ocp/discretization.hpp"
#include "birkhoff/ocp/newton.hpp"
#include "birkhoff/ocp/problems.hpp"

namespace birkhoff::ocp {

struct SqpConfig {
  double feasibility_tol = 1e-8;  // ||e||_inf and ||F||_inf
  double stationarity_tol = 1e-6;
  std::size_t max_iter = 50;
  std::size_t max_rejections = 30;  // consecutive rejected steps before giving up
  double accept_ratio = 1e-4;       // actual / predicted merit reduction
  double initial_radius = 1.0;      // trust radius in the QP metric
  double max_radius = 1e8;
  double cg_rel_tol = 1e-2;  // upper bound on the CG forcing term
  std::size_t cg_max_iter = 200;
  bool second_order_correction = true;
  NewtonConfig newton{};
  krylov::KrylovConfig adjoint_krylov{1e-12, 500, {}};
  krylov::KrylovConfig hessian_krylov{1e-10, 500, {}};
};

struct SqpIterate {
  std::size_t iteration = 0;
  double objective = 0.0;
  double feasibility = 0.0;
  double stationarity = 0.0;
  double step_length = 0.0;  // metric norm of the step
  double radius = 0.0;
  double ratio = 0.0;
  double penalty = 0.0;
  std::size_t cg_iterations = 0;
  bool accepted = false;
  bool second_order_correction = false;
};

struct SolveReport {
  bool converged = false;
  std::size_t sqp_iterations = 0;
  // Matrix-free solves with the linearized dynamics block of the KKT system
  // (sensitivities, adjoints, Hessian products); feasibility Newton excluded.
  std::size_t kkt_solves = 0;
  std::size_t total_krylov_iterations = 0;  // every GMRES iteration, Newton included
  std::size_t newton_iterations = 0;
  double feasibility = 0.0;
  double optimality = 0.0;
  double objective = 0.0;
  double wall_time = 0.0;
  std::string message;
  std::vector<SqpIterate> history;
};

/// A collocated trajectory. Fields are channel-major on the CGL grid.
struct Trajectory {
  spectral::GridPtr grid;
  std::size_t n_states = 0, n_controls = 0;
  std::vector<double> times, X, U, V, xa, xb, p;
};

struct SqpResult {
  Trajectory solution;
  SolveReport report;
};

class SqpStalledError : public Error {
 public:
  SqpStalledError(const std::string& what, SqpResult partial)
      : Error(Errc::sqp_stalled, what), partial_(std::move(partial)) {}
  const SqpResult& partial() const noexcept { return partial_; }

 private:
  SqpResult partial_;
};

namespace impl {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm1(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += std::abs(x);
  return s;
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// Everything the reduced problem knows at one iterate w = (U, p, x_a).
struct Iterate {
  Vec w;
  Vec X;
  Vec z;      // endpoint vector (x_a, x_b, p)
  double phi = 0.0;
  Vec c;      // endpoint constraints
  double newton_residual = 0.0;
  bool feasible = false;

  // Derivative data, filled by ReducedProblem::linearize.
  std::unique_ptr<NodeDerivatives> deriv;
  std::unique_ptr<krylov::BirkhoffPreconditioner> precond;
  Vec grad_E;                   // dE/dz
  RowMajorMatrix jac_e;         // de/dz
  std::vector<Vec> adjoints;    // A^{-T} e_{(c, N)} per state channel
  Vec g;                        // reduced gradient of phi
  Eigen::MatrixXd C;            // reduced constraint Jacobian, n_endpoint x nw
};

class ReducedProblem {
 public:
  ReducedProblem(const DiscreteNlp& nlp, const SqpConfig& cfg, SolveReport& report)
      : nlp_(nlp), cfg_(cfg), rep_(report) {}

  std::size_t nw() const { return nlp_.control_dim() + nlp_.np() + nlp_.nx(); }
  std::size_t p_offset() const { return nlp_.control_dim(); }
  std::size_t xa_offset() const { return nlp_.control_dim() + nlp_.np(); }

  CSpan U(const Vec& w) const { return CSpan(w.data(), nlp_.control_dim()); }
  CSpan p(const Vec& w) const { return CSpan(w.data() + p_offset(), nlp_.np()); }
  CSpan xa(const Vec& w) const { return CSpan(w.data() + xa_offset(), nlp_.nx()); }

  Vec pack(const InitialGuess& g) const {
    detail::require_size(g.U.size(), nlp_.control_dim(), "initial U");
    detail::require_size(g.p.size(), nlp_.np(), "initial p");
    detail::require_size(g.xa.size(), nlp_.nx(), "initial x_a");
    Vec w;
    w.reserve(nw());
    w.insert(w.end(), g.U.begin(), g.U.end());
    w.insert(w.end(), g.p.begin(), g.p.end());
    w.insert(w.end(), g.xa.begin(), g.xa.end());
    return w;
  }

  /// States, objective and constraints at w. Returns false when the
  /// feasibility Newton iteration fails there.
  bool evaluate(Iterate& it, CSpan X0) {
    const auto& ocp = nlp_.ocp();
    try {
      auto st = newton_feasibility(nlp_, U(it.w), xa(it.w), p(it.w), cfg_.newton, X0);
      count_newton(st.report);
      it.X = std::move(st.X);
      it.newton_residual = st.report.residual;
    } catch (const NewtonDivergedError& e) {
      count_newton(e.report());
      it.feasible = false;
      return false;
    } catch (const SingularPivotError&) {
      it.feasible = false;
      return false;
    }
    const auto xb = nlp_.terminal_state(it.X);
    it.z = nlp_.endpoint_vector(xa(it.w), xb, p(it.w));
    it.phi = ocp.cost(it.z);
    it.c.assign(ocp.n_endpoint, 0.0);
    if (ocp.n_endpoint > 0) ocp.constraints(it.z, it.c);
    it.feasible = std::isfinite(it.phi) && std::all_of(it.c.begin(), it.c.end(), [](double v) { return std::isfinite(v); });
    return it.feasible;
  }

  /// Gradient, constraint Jacobian and the factored Birkhoff preconditioner at an evaluated iterate.
  void linearize(Iterate& it) {
    const auto& ocp = nlp_.ocp();
    const std::size_t n = nlp_.nodes(), nx = nlp_.nx(), nz = ocp.endpoint_size(), ne = ocp.n_endpoint;
    it.deriv = std::make_unique<NodeDerivatives>();
    nlp_.node_derivatives(it.X, U(it.w), p(it.w), *it.deriv);
    it.precond = std::make_unique<krylov::BirkhoffPreconditioner>(ops::TriangularSurrogate(nlp_.grid_ptr()),
                                                                  it.deriv->gx);
    it.grad_E.assign(nz, 0.0);
    ocp.cost_gradient(it.z, it.grad_E);
    it.jac_e.setZero(static_cast<Eigen::Index>(ne), static_cast<Eigen::Index>(nz));
    if (ne > 0) ocp.constraints_jacobian(it.z, it.jac_e);

    // S = d X_N / d w, one adjoint solve per state channel.
    it.adjoints.assign(nx, Vec());
    Eigen::MatrixXd S(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nw()));
    for (std::size_t c = 0; c < nx; ++c) {
      Vec rhs(nlp_.state_dim(), 0.0);
      rhs[c * n + n - 1] = 1.0;
      it.adjoints[c] = solve(it, rhs, /*transpose=*/true, cfg_.adjoint_krylov);
      const Vec row = mw_transpose(it, it.adjoints[c]);
      for (std::size_t k = 0; k < nw(); ++k) S(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = row[k];
    }

    // Chain rule through z = (x_a, X_N(w), p).
    Eigen::MatrixXd dz(static_cast<Eigen::Index>(nz), static_cast<Eigen::Index>(nw()));
    dz.setZero();
    for (std::size_t c = 0; c < nx; ++c) {
      dz(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(xa_offset() + c)) = 1.0;
    }
    dz.middleRows(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nx)) = S;
    for (std::size_t k = 0; k < nlp_.np(); ++k) {
      dz(static_cast<Eigen::Index>(2 * nx + k), static_cast<Eigen::Index>(p_offset() + k)) = 1.0;
    }
    const Eigen::VectorXd g = dz.transpose() * Eigen::Map<const Eigen::VectorXd>(it.grad_E.data(), static_cast<Eigen::Index>(nz));
    it.g.assign(g.data(), g.data() + g.size());
    it.C = it.jac_e * dz;
  }

  /// Reduced Hessian of l = E + mu^T e (plus sigma * M) applied to d.
  Vec hessian_vector(const Iterate& it, std::span<const double> mu, CSpan d) {
    const auto& ocp = nlp_.ocp();
    const std::size_t n = nlp_.nodes(), nx = nlp_.nx(), np = nlp_.np();
    const std::size_t nz = ocp.endpoint_size();

    // Endpoint multiplier dl/dx_b picks the combination of channel adjoints.
    const Vec gl = endpoint_lagrangian_gradient(it.z, mu);
    Vec lambda(nlp_.state_dim(), 0.0);
    for (std::size_t c = 0; c < nx; ++c) axpy(gl[nx + c], it.adjoints[c], lambda);
    Vec nu_w(nlp_.state_dim());
    for (std::size_t c = 0; c < nx; ++c) {
      ops::fast_bv_transpose(nlp_.birkhoff(), CSpan(lambda.data() + c * n, n), Span(nu_w.data() + c * n, n));
    }

    // Tangent of the state trajectory.
    Vec dX = solve(it, mw_apply(it, d), /*transpose=*/false, cfg_.hessian_krylov);

    // Second derivatives of sum_j nu_j^T g(x_j, u_j, p) by central differences of first derivatives.
    double vmax = 0.0, zmax = 1.0;
    for (double v : dX) vmax = std::max(vmax, std::abs(v));
    for (double v : d) vmax = std::max(vmax, std::abs(v));
    for (double v : it.X) zmax = std::max(zmax, std::abs(v));
    for (double v : it.w) zmax = std::max(zmax, std::abs(v));
    Vec q_w(nw(), 0.0), q_X(nlp_.state_dim(), 0.0);
    if (vmax > 0.0) {
      const double eps = 1e-6 * zmax / vmax;
      Vec Xs(it.X.size()), ws(it.w.size());
      Vec gx_plus, gu_plus, gp_plus, gx_minus, gu_minus, gp_minus;
      for (int sign : {1, -1}) {
        for (std::size_t i = 0; i < Xs.size(); ++i) Xs[i] = it.X[i] + sign * eps * dX[i];
        for (std::size_t i = 0; i < ws.size(); ++i) ws[i] = it.w[i] + sign * eps * d[i];
        if (sign > 0) {
          node_gradients(Xs, ws, nu_w, gx_plus, gu_plus, gp_plus);
        } else {
          node_gradients(Xs, ws, nu_w, gx_minus, gu_minus, gp_minus);
        }
      }
      const double inv = 1.0 / (2.0 * eps);
      for (std::size_t i = 0; i < q_X.size(); ++i) q_X[i] = (gx_plus[i] - gx_minus[i]) * inv;
      for (std::size_t i = 0; i < nlp_.control_dim(); ++i) q_w[i] = (gu_plus[i] - gu_minus[i]) * inv;
      for (std::size_t k = 0; k < np; ++k) q_w[p_offset() + k] = (gp_plus[k] - gp_minus[k]) * inv;

      // Endpoint part along dz = (dx_a, dX_N, dp).
      Vec dzv(nz);
      for (std::size_t c = 0; c < nx; ++c) {
        dzv[c] = d[xa_offset() + c];
        dzv[nx + c] = dX[c * n + n - 1];
      }
      for (std::size_t k = 0; k < np; ++k) dzv[2 * nx + k] = d[p_offset() + k];
      double dzmax = 0.0, zzmax = 1.0;
      for (double v : dzv) dzmax = std::max(dzmax, std::abs(v));
      for (double v : it.z) zzmax = std::max(zzmax, std::abs(v));
      if (dzmax > 0.0) {
        const double h = 1e-6 * zzmax / dzmax;
        Vec zp(nz), zm(nz);
        for (std::size_t i = 0; i < nz; ++i) {
          zp[i] = it.z[i] + h * dzv[i];
          zm[i] = it.z[i] - h * dzv[i];
        }
        const Vec gp_ = endpoint_lagrangian_gradient(zp, mu);
        const Vec gm_ = endpoint_lagrangian_gradient(zm, mu);
        for (std::size_t c = 0; c < nx; ++c) {
          q_w[xa_offset() + c] += (gp_[c] - gm_[c]) / (2 * h);
          q_X[c * n + n - 1] += (gp_[nx + c] - gm_[nx + c]) / (2 * h);
        }
        for (std::size_t k = 0; k < np; ++k) q_w[p_offset() + k] += (gp_[2 * nx + k] - gm_[2 * nx + k]) / (2 * h);
      }
    }
    const Vec back = mw_transpose(it, solve(it, q_X, /*transpose=*/true, cfg_.hessian_krylov));
    for (std::size_t i = 0; i < q_w.size(); ++i) q_w[i] += back[i];
    return q_w;
  }

  /// Diagonal (block-diagonal in the controls) positive metric for the QP,
  /// stored as its inverse: per node nu x nu blocks, then p and x_a entries.
  struct Metric {
    std::size_t nu = 0, nodes = 0;
    Vec control_inv;  // node-major nu x nu blocks
    Vec scalar_inv;   // p then x_a
    Vec control;      // the metric itself, same layout
    Vec scalar;
  };

  Metric metric(const Iterate& it, std::span<const double> mu) {
    const std::size_t n = nlp_.nodes(), nu = nlp_.nu(), np = nlp_.np(), nx = nlp_.nx();
    const auto w = nlp_.grid().cc_weights();
    Metric m;
    m.nu = nu;
    m.nodes = n;
    m.control.assign(n * nu * nu, 0.0);
    m.control_inv.assign(n * nu * nu, 0.0);

    if (nu > 0) {
      // Local control Hessian of nu_j^T g(x_j, u_j, p), node by node.
      const Vec gl = endpoint_lagrangian_gradient(it.z, mu);
      Vec lambda(nlp_.state_dim(), 0.0);
      for (std::size_t c = 0; c < nx; ++c) axpy(gl[nx + c], it.adjoints[c], lambda);
      Vec nu_w(nlp_.state_dim());
      for (std::size_t c = 0; c < nx; ++c) {
        ops::fast_bv_transpose(nlp_.birkhoff(), CSpan(lambda.data() + c * n, n), Span(nu_w.data() + c * n, n));
      }
      double umax = 1.0;
      for (std::size_t i = 0; i < nlp_.control_dim(); ++i) umax = std::max(umax, std::abs(it.w[i]));
      const double h = 1e-5 * umax;
      std::vector<Eigen::MatrixXd> blocks(n, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nu), static_cast<Eigen::Index>(nu)));
      Vec ws = it.w, gxp, gup, gpp, gxm, gum, gpm;
      for (std::size_t k = 0; k < nu; ++k) {
        for (std::size_t i = 0; i < n; ++i) ws[k * n + i] = it.w[k * n + i] + h;
        node_gradients(it.X, ws, nu_w, gxp, gup, gpp);
        for (std::size_t i = 0; i < n; ++i) ws[k * n + i] = it.w[k * n + i] - h;
        node_gradients(it.X, ws, nu_w, gxm, gum, gpm);
        for (std::size_t i = 0; i < n; ++i) ws[k * n + i] = it.w[k * n + i];
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t r = 0; r < nu; ++r) {
            blocks[i](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = (gup[r * n + i] - gum[r * n + i]) / (2 * h);
          }
        }
      }
      // |H_j| with a floor relative to the largest curvature density.
      double dens = 0.0;
      std::vector<Eigen::VectorXd> evals(n);
      std::vector<Eigen::MatrixXd> evecs(n);
      for (std::size_t i = 0; i < n; ++i) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (blocks[i] + blocks[i].transpose()));
        evals[i] = es.eigenvalues().cwiseAbs();
        evecs[i] = es.eigenvectors();
        dens = std::max(dens, evals[i].maxCoeff() / w[i]);
      }
      if (!(dens > 0.0) || !std::isfinite(dens)) dens = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double floor = 1e-2 * dens * w[i];
        const Eigen::VectorXd ev = evals[i].cwiseMax(floor);
        const Eigen::MatrixXd mb = evecs[i] * ev.asDiagonal() * evecs[i].transpose();
        const Eigen::MatrixXd mi = evecs[i] * ev.cwiseInverse().asDiagonal() * evecs[i].transpose();
        for (std::size_t r = 0; r < nu; ++r) {
          for (std::size_t k = 0; k < nu; ++k) {
            m.control[(i * nu + r) * nu + k] = mb(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
            m.control_inv[(i * nu + r) * nu + k] = mi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
          }
        }
      }
    }

    // Parameters and initial states: exact Hessian diagonal, kept away from zero.
    const std::size_t ns = np + nx;
    m.scalar.assign(ns, 1.0);
    Vec diag(ns);
    double big = 0.0;
    for (std::size_t k = 0; k < ns; ++k) {
      Vec e(nw(), 0.0);
      e[p_offset() + k] = 1.0;
      diag[k] = std::abs(hessian_vector(it, mu, e)[p_offset() + k]);
      big = std::max(big, diag[k]);
    }
    for (std::size_t k = 0; k < ns; ++k) m.scalar[k] = std::max(diag[k], 1e-6 * std::max(1.0, big));
    m.scalar_inv.resize(ns);
    for (std::size_t k = 0; k < ns; ++k) m.scalar_inv[k] = 1.0 / m.scalar[k];
    return m;
  }

  Vec apply_metric(const Metric& m, CSpan v, bool inverse) const {
    const std::size_t n = m.nodes, nu = m.nu;
    const Vec& blk = inverse ? m.control_inv : m.control;
    const Vec& sc = inverse ? m.scalar_inv : m.scalar;
    Vec out(v.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < nu; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < nu; ++k) acc += blk[(i * nu + r) * nu + k] * v[k * n + i];
        out[r * n + i] = acc;
      }
    }
    const std::size_t off = n * nu;
    for (std::size_t k = 0; k < sc.size(); ++k) out[off + k] = sc[k] * v[off + k];
    return out;
  }

  /// Stationarity in grid-independent units: control entries are divided by
  /// their quadrature weight so that they measure a density.
  double stationarity(CSpan grad_l) const {
    const std::size_t n = nlp_.nodes();
    const auto w = nlp_.grid().cc_weights();
    double s = 0.0;
    for (std::size_t k = 0; k < nlp_.nu(); ++k) {
      for (std::size_t i = 0; i < n; ++i) s = std::max(s, std::abs(grad_l[k * n + i]) / w[i]);
    }
    for (std::size_t i = nlp_.control_dim(); i < grad_l.size(); ++i) s = std::max(s, std::abs(grad_l[i]));
    return s;
  }

  Trajectory trajectory(const Iterate& it) const {
    Trajectory t;
    t.grid = nlp_.grid_ptr();
    t.n_states = nlp_.nx();
    t.n_controls = nlp_.nu();
    t.X = it.X;
    t.U.assign(it.w.begin(), it.w.begin() + static_cast<std::ptrdiff_t>(nlp_.control_dim()));
    const auto pv = p(it.w);
    const auto xv = xa(it.w);
    t.p.assign(pv.begin(), pv.end());
    t.xa.assign(xv.begin(), xv.end());
    t.xb = nlp_.terminal_state(it.X);
    t.V = nlp_.node_dynamics(t.X, t.U, t.p);
    t.times.resize(nlp_.nodes());
    for (std::size_t i = 0; i < nlp_.nodes(); ++i) t.times[i] = nlp_.time_at(i, t.p);
    return t;
  }

  /// M_w d = B^a (g_U dU + g_p dp) + 1 dx_a: the forcing of the state tangent.
  Vec mw_apply(const Iterate& it, CSpan d) const {
    const std::size_t n = nlp_.nodes(), nx = nlp_.nx(), nu = nlp_.nu(), np = nlp_.np();
    const auto& der = *it.deriv;
    Vec t(nlp_.state_dim(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < nx; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < nu; ++k) acc += der.gu[(i * nx + r) * nu + k] * d[k * n + i];
        for (std::size_t k = 0; k < np; ++k) acc += der.gp[(i * nx + r) * np + k] * d[p_offset() + k];
        t[r * n + i] = acc;
      }
    }
    for (std::size_t c = 0; c < nx; ++c) {
      Span tc(t.data() + c * n, n);
      ops::fast_bv(nlp_.birkhoff(), tc, tc);
      for (double& v : tc) v += d[xa_offset() + c];
    }
    return t;
  }

  /// M_w^T y.
  Vec mw_transpose(const Iterate& it, CSpan y) const {
    const std::size_t n = nlp_.nodes(), nx = nlp_.nx(), nu = nlp_.nu(), np = nlp_.np();
    const auto& der = *it.deriv;
    Vec bt(nlp_.state_dim());
    for (std::size_t c = 0; c < nx; ++c) {
      ops::fast_bv_transpose(nlp_.birkhoff(), CSpan(y.data() + c * n, n), Span(bt.data() + c * n, n));
    }
    Vec out(nw(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < nx; ++r) {
        const double v = bt[r * n + i];
        for (std::size_t k = 0; k < nu; ++k) out[k * n + i] += der.gu[(i * nx + r) * nu + k] * v;
        for (std::size_t k = 0; k < np; ++k) out[p_offset() + k] += der.gp[(i * nx + r) * np + k] * v;
      }
    }
    for (std::size_t c = 0; c < nx; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += y[c * n + i];
      out[xa_offset() + c] = s;
    }
    return out;
  }

 private:
  Vec endpoint_lagrangian_gradient(CSpan z, std::span<const double> mu) const {
    const auto& ocp = nlp_.ocp();
    Vec g(ocp.endpoint_size(), 0.0);
    ocp.cost_gradient(z, g);
    if (ocp.n_endpoint > 0) {
      RowMajorMatrix j(static_cast<Eigen::Index>(ocp.n_endpoint), static_cast<Eigen::Index>(ocp.endpoint_size()));
      j.setZero();
      ocp.constraints_jacobian(z, j);
      const Eigen::VectorXd jt = j.transpose() * Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += jt(static_cast<Eigen::Index>(i));
    }
    return g;
  }

  /// Gradients of sum_j nu_j^T g(x_j, u_j, p) w.r.t. X (channel-major), U and p.
  void node_gradients(CSpan X, CSpan w, CSpan nu_w, Vec& gx, Vec& gu, Vec& gp) const {
    const std::size_t n = nlp_.nodes(), nx = nlp_.nx(), nu = nlp_.nu(), np = nlp_.np();
    NodeDerivatives d;
    nlp_.node_derivatives(X, U_of(w), p_of(w), d);
    gx.assign(nlp_.state_dim(), 0.0);
    d.gx.apply(nu_w, gx, /*transpose=*/true);
    gu.assign(nlp_.control_dim(), 0.0);
    gp.assign(np, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < nx; ++r) {
        const double v = nu_w[r * n + i];
        for (std::size_t k = 0; k < nu; ++k) gu[k * n + i] += d.gu[(i * nx + r) * nu + k] * v;
        for (std::size_t k = 0; k < np; ++k) gp[k] += d.gp[(i * nx + r) * np + k] * v;
      }
    }
  }

  CSpan U_of(CSpan w) const { return w.subspan(0, nlp_.control_dim()); }
  CSpan p_of(CSpan w) const { return w.subspan(p_offset(), nlp_.np()); }

  Vec solve(const Iterate& it, CSpan rhs, bool transpose, const krylov::KrylovConfig& kc) {
    const krylov::SystemOperator a(nlp_.birkhoff(), it.deriv->gx, transpose);
    const krylov::PreconditionerMap pm(*it.precond, transpose);
    auto r = krylov::gmres(a, rhs, pm, kc);
    ++rep_.kkt_solves;
    rep_.total_krylov_iterations += r.stats.iterations;
    return std::move(r.x);
  }

  void count_newton(const NewtonReport& r) {
    rep_.newton_iterations += r.newton_iterations;
    rep_.total_krylov_iterations += r.krylov_iterations;
  }

  const DiscreteNlp& nlp_;
  const SqpConfig& cfg_;
  SolveReport& rep_;
};

}  // namespace impl

/// Solves the collocated optimal control problem from `init`.
/// Returns a non-converged report after max_iter iterations; throws
/// SqpStalledError (carrying the last iterate) after max_rejections
/// consecutive rejected steps or when the initial point admits no feasible states.
inline SqpResult sqp_solve(const DiscreteNlp& nlp, const InitialGuess& init, const SqpConfig& cfg = {}) {
  using impl::Vec;
  using Eigen::VectorXd;
  const auto start = std::chrono::steady_clock::now();
  SqpResult result;
  auto& rep = result.report;
  impl::ReducedProblem rp(nlp, cfg, rep);
  const std::size_t ne = nlp.ocp().n_endpoint;
  const std::size_t nw = rp.nw();
  const auto ei = [](std::size_t k) { return static_cast<Eigen::Index>(k); };

  auto cur = std::make_unique<impl::Iterate>();
  cur->w = rp.pack(init);
  const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  const auto finish = [&](const impl::Iterate& it) {
    result.solution = rp.trajectory(it);
    rep.wall_time = elapsed();
    return result;
  };
  if (!rp.evaluate(*cur, init.X.empty() ? CSpan{} : CSpan(init.X))) {
    // A poor state guess should not sink the solve: retry from the sweep.
    if (init.X.empty() || !rp.evaluate(*cur, CSpan{})) {
      rep.message = "no feasible states at the initial guess";
      throw SqpStalledError(rep.message, result);
    }
  }
  rp.linearize(*cur);

  const auto cnorm = [](const impl::Iterate& it) {
    return Eigen::Map<const VectorXd>(it.c.data(), static_cast<Eigen::Index>(it.c.size())).norm();
  };
  double rho = 0.0;
  double radius = cfg.initial_radius;
  std::size_t rejections = 0;

  for (;;) {
    const Eigen::Map<const VectorXd> g(cur->g.data(), ei(nw));
    const Eigen::Map<const VectorXd> cvec(cur->c.data(), ei(ne));

    // Metric, projector and least-squares multipliers at the current point.
    // The local control Hessians in the metric use the multipliers of the
    // previous metric pass; one refresh is enough.
    Vec mu(ne, 0.0);
    std::unique_ptr<impl::ReducedProblem::Metric> mptr;
    Eigen::MatrixXd MinvCt(ei(nw), ei(ne));
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> kfac;
    const auto minv = [&](const VectorXd& v) {
      const Vec r = rp.apply_metric(*mptr, CSpan(v.data(), nw), true);
      return Eigen::Map<const VectorXd>(r.data(), ei(nw)).eval();
    };
    const auto mapply = [&](const VectorXd& v) {
      const Vec r = rp.apply_metric(*mptr, CSpan(v.data(), nw), false);
      return Eigen::Map<const VectorXd>(r.data(), ei(nw)).eval();
    };
    VectorXd mu_ls = VectorXd::Zero(ei(ne));
    for (int pass = 0; pass < 2; ++pass) {
      mptr = std::make_unique<impl::ReducedProblem::Metric>(rp.metric(*cur, mu));
      for (std::size_t i = 0; i < ne; ++i) MinvCt.col(ei(i)) = minv(cur->C.row(ei(i)).transpose());
      kfac.compute(cur->C * MinvCt);
      if (ne > 0) mu_ls = -kfac.solve(cur->C * minv(g));
      mu.assign(mu_ls.data(), mu_ls.data() + ne);
    }
    // Range-space correction of a vector, refined once against round-off.
    const auto range_solve = [&](const VectorXd& rhs) {
      VectorXd y = kfac.solve(rhs);
      y += kfac.solve(rhs - cur->C * (MinvCt * y));
      return y;
    };
    const auto project = [&](const VectorXd& r) -> VectorXd {
      VectorXd z = minv(r);
      if (ne > 0) z -= MinvCt * range_solve(cur->C * z);
      return z;
    };

    const VectorXd grad_l = g + cur->C.transpose() * mu_ls;
    const double stat = rp.stationarity(CSpan(grad_l.data(), nw));
    const double feas = std::max(cur->newton_residual, ne > 0 ? cvec.lpNorm<Eigen::Infinity>() : 0.0);
    rep.feasibility = feas;
    rep.optimality = stat;
    rep.objective = cur->phi;
    if (feas <= cfg.feasibility_tol && stat <= cfg.stationarity_tol) {
      rep.converged = true;
      rep.message = "converged";
      return finish(*cur);
    }

    const auto hv = [&](const VectorXd& v) {
      const Vec h = rp.hessian_vector(*cur, mu, CSpan(v.data(), nw));
      return Eigen::Map<const VectorXd>(h.data(), ei(nw)).eval();
    };
    const auto mnorm = [&](const VectorXd& v) { return std::sqrt(std::max(0.0, v.dot(mapply(v)))); };
    // Largest tau >= 0 with ||x + tau p||_M = radius.
    const auto to_boundary = [&](const VectorXd& x, const VectorXd& p) {
      const VectorXd mp = mapply(p);
      const double a = p.dot(mp), b = 2.0 * x.dot(mp), c = x.dot(mapply(x)) - radius * radius;
      if (!(a > 0.0)) return 0.0;
      return (-b + std::sqrt(std::max(0.0, b * b - 4.0 * a * c))) / (2.0 * a);
    };

    // Steps are tried from the same point with shrinking radius until one is accepted.
    for (;;) {
      if (rep.sqp_iterations >= cfg.max_iter) {
        rep.message = "iteration limit reached";
        return finish(*cur);
      }
      SqpIterate hist;
      hist.iteration = rep.sqp_iterations + 1;
      hist.objective = cur->phi;
      hist.feasibility = feas;
      hist.stationarity = stat;
      hist.radius = radius;

      // Normal step toward the linearized constraints, kept inside 0.8 of the radius.
      VectorXd v = VectorXd::Zero(ei(nw));
      if (ne > 0) v = -MinvCt * range_solve(cvec);
      bool boundary = false;
      if (const double vn = mnorm(v); vn > 0.8 * radius) {
        v *= 0.8 * radius / vn;
        boundary = true;
      }

      // Tangential step: Steihaug projected CG on the null space of C.
      VectorXd d = v;
      VectorXd Hd = hv(d);
      VectorXd r = Hd + g;
      VectorXd z = project(r);
      double rz = r.dot(z);
      // Inexact-Newton forcing: loose far from a solution, tightening as the
      // projected gradient vanishes, which keeps the local rate superlinear.
      const double cg_tol = std::min(cfg.cg_rel_tol, std::sqrt(std::sqrt(rz)));
      const double rz0 = rz;
      VectorXd dir = -z;
      for (std::size_t k = 0; k < cfg.cg_max_iter && rz > 0.0 && std::sqrt(rz) > cg_tol * std::sqrt(rz0); ++k) {
        const VectorXd hp = hv(dir);
        const double kappa = dir.dot(hp);
        ++hist.cg_iterations;
        double alpha = kappa > 0.0 ? rz / kappa : 0.0;
        if (kappa <= 0.0 || mnorm(d + alpha * dir) >= radius) {
          alpha = to_boundary(d, dir);
          d += alpha * dir;
          Hd += alpha * hp;
          boundary = true;
          break;
        }
        d += alpha * dir;
        Hd += alpha * hp;
        r += alpha * hp;
        if (ne > 0) r -= cur->C.transpose() * range_solve(cur->C * minv(r));
        z = project(r);
        const double rz_new = r.dot(z);
        dir = -z + (rz_new / rz) * dir;
        rz = rz_new;
      }
      const double dnorm = mnorm(d);

      // Predicted reduction of phi + rho ||c||_2, with rho raised until the
      // model decreases by a fixed share of the constraint improvement.
      const double c0 = ne > 0 ? cvec.norm() : 0.0;
      const double c1 = ne > 0 ? (cvec + cur->C * d).norm() : 0.0;
      const double vpred = c0 - c1;
      const double qd = g.dot(d) + 0.5 * d.dot(Hd);
      if (vpred > 1e-14 * std::max(1.0, c0)) rho = std::max(rho, qd / (0.7 * vpred) + 1e-8);
      hist.penalty = rho;
      const double pred = -qd + rho * vpred;
      const double m0 = cur->phi + rho * c0;

      // Tangent of the states along d warm-starts the feasibility solve.
      Vec X0 = cur->X;
      {
        const Vec rhs = rp.mw_apply(*cur, CSpan(d.data(), nw));
        const krylov::SystemOperator a(nlp.birkhoff(), cur->deriv->gx);
        const krylov::PreconditionerMap pm(*cur->precond);
        auto res = krylov::gmres(a, rhs, pm, cfg.hessian_krylov);
        ++rep.kkt_solves;
        rep.total_krylov_iterations += res.stats.iterations;
        impl::axpy(1.0, res.x, X0);
      }
      auto trial = std::make_unique<impl::Iterate>();
      trial->w = cur->w;
      impl::axpy(1.0, CSpan(d.data(), nw), trial->w);
      bool ok = rp.evaluate(*trial, X0);
      double ratio = ok && pred > 0.0 ? (m0 - (trial->phi + rho * cnorm(*trial))) / pred : -1.0;
      if (ok && ratio < cfg.accept_ratio && cfg.second_order_correction && ne > 0) {
        // Second-order correction: pull the step back onto the linearized constraints.
        const Eigen::Map<const VectorXd> ct(trial->c.data(), ei(ne));
        const VectorXd dsoc = -MinvCt * range_solve(ct);
        if (mnorm(d + dsoc) <= 1.5 * radius) {
          auto soc = std::make_unique<impl::Iterate>();
          soc->w = trial->w;
          impl::axpy(1.0, CSpan(dsoc.data(), nw), soc->w);
          if (rp.evaluate(*soc, trial->X)) {
            const double r2 = (m0 - (soc->phi + rho * cnorm(*soc))) / pred;
            if (r2 >= cfg.accept_ratio) {
              trial = std::move(soc);
              ratio = r2;
              hist.second_order_correction = true;
            }
          }
        }
      }
      hist.ratio = ratio;
      hist.step_length = dnorm;
      ++rep.sqp_iterations;

      if (ok && ratio >= cfg.accept_ratio) {
        hist.accepted = true;
        rep.history.push_back(hist);
        if (ratio > 0.75 && boundary) radius = std::min(2.0 * radius, cfg.max_radius);
        else if (ratio < 0.25) radius = 0.5 * dnorm;
        rejections = 0;
        rp.linearize(*trial);
        cur = std::move(trial);
        break;
      }
      rep.history.push_back(hist);
      radius = 0.3 * std::min(radius, dnorm);
      if (++rejections >= cfg.max_rejections || !(radius > 0.0)) {
        rep.message = "no acceptable step: the merit function could not be reduced";
        throw SqpStalledError(rep.message, finish(*cur));
      }
    }
  }
}

}  // namespace birkhoff::ocp
