#pragma once

// Birkhoff collocation of an OcpDefinition on a CGL grid (a-expansion):
//   X = x_a 1 + B^a V,   V = g(X, U, p),   x_b = x_a + w^T V,   e(x_a, x_b, p) = 0,
// where g = s(p) f(x, u, t(tau), p) is the dynamics rescaled to tau in [-1, 1]
// through t = t_a + s (tau + 1), s = (t_b - t_a) / 2.

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "birkhoff/error.hpp"
#include "birkhoff/krylov/node_jacobian.hpp"
#include "birkhoff/ocp/problem.hpp"
#include "birkhoff/ops/birkhoff_operator.hpp"
#include "birkhoff/spectral/grid.hpp"

namespace birkhoff::ocp {

/// All decision variables of the collocated problem. Grid functions are
/// channel-major: component c at node i is at [c * nodes + i].
struct NlpPoint {
  std::vector<double> X, U, V, xa, xb, p;
};

/// Per-node derivatives of g, laid out node-major for U and p.
struct NodeDerivatives {
  krylov::NodeJacobian gx;    // nodes x (nx x nx)
  std::vector<double> gu;     // node i: nx x nu row-major at i * nx * nu
  std::vector<double> gp;     // node i: nx x np row-major at i * nx * np
};

/// Residual blocks of the collocated constraint set, in the order above.
struct NlpResidual {
  std::vector<double> state, dynamics, quadrature, endpoint;

  double inf_norm() const {
    double m = 0.0;
    for (const auto* v : {&state, &dynamics, &quadrature, &endpoint}) {
      for (double x : *v) m = std::max(m, std::abs(x));
    }
    return m;
  }
};

class DiscreteNlp {
 public:
  DiscreteNlp(OcpDefinition ocp, spectral::GridPtr grid)
      : ocp_(std::move(ocp)), grid_(std::move(grid)), op_(grid_) {}

  const OcpDefinition& ocp() const noexcept { return ocp_; }
  const spectral::ChebGrid& grid() const noexcept { return *grid_; }
  const spectral::GridPtr& grid_ptr() const noexcept { return grid_; }
  const ops::BirkhoffOperator& birkhoff() const noexcept { return op_; }

  std::size_t nodes() const noexcept { return grid_->size(); }
  std::size_t nx() const noexcept { return ocp_.n_states; }
  std::size_t nu() const noexcept { return ocp_.n_controls; }
  std::size_t np() const noexcept { return ocp_.n_params; }
  std::size_t state_dim() const noexcept { return nodes() * nx(); }
  std::size_t control_dim() const noexcept { return nodes() * nu(); }

  double final_time(CSpan p) const { return ocp_.final_time_param ? p[*ocp_.final_time_param] : ocp_.t_b; }
  /// dt/dtau.
  double time_scale(CSpan p) const { return 0.5 * (final_time(p) - ocp_.t_a); }
  double time_at(std::size_t node, CSpan p) const {
    return ocp_.t_a + time_scale(p) * (grid_->nodes()[node] + 1.0);
  }

  /// g at every node, channel-major.
  void node_dynamics(CSpan X, CSpan U, CSpan p, Span G) const {
    const std::size_t n = nodes(), nx_ = nx(), nu_ = nu();
    detail::require_size(X.size(), n * nx_, "state field");
    detail::require_size(U.size(), n * nu_, "control field");
    detail::require_size(G.size(), n * nx_, "dynamics field");
    const double s = time_scale(p);
    std::vector<double> x(nx_), u(nu_), f(nx_);
    for (std::size_t i = 0; i < n; ++i) {
      gather(X, i, x);
      gather(U, i, u);
      ocp_.dynamics(x, u, time_at(i, p), p, f);
      for (std::size_t c = 0; c < nx_; ++c) G[c * n + i] = s * f[c];
    }
  }

  std::vector<double> node_dynamics(CSpan X, CSpan U, CSpan p) const {
    std::vector<double> G(state_dim());
    node_dynamics(X, U, p, G);
    return G;
  }

  /// dg/dx, dg/du, dg/dp at every node, including the chain rule through a
  /// free final time: dg/dT = f/2 + s (f_t (tau+1)/2 + f_T).
  void node_derivatives(CSpan X, CSpan U, CSpan p, NodeDerivatives& out, bool with_controls = true) const {
    const std::size_t n = nodes(), nx_ = nx(), nu_ = nu(), np_ = np();
    const double s = time_scale(p);
    if (out.gx.nodes() != n || out.gx.channels() != nx_) out.gx = krylov::NodeJacobian(n, nx_);
    if (with_controls) {
      out.gu.assign(n * nx_ * nu_, 0.0);
      out.gp.assign(n * nx_ * np_, 0.0);
    }
    std::vector<double> x(nx_), u(nu_), f(nx_);
    DynamicsJacobian jac;
    jac.resize(nx_, nu_, np_);
    for (std::size_t i = 0; i < n; ++i) {
      gather(X, i, x);
      gather(U, i, u);
      const double t = time_at(i, p);
      ocp_.dynamics_jacobian(x, u, t, p, jac);
      out.gx.block(i) = s * jac.fx;
      if (!with_controls) continue;
      for (std::size_t r = 0; r < nx_; ++r) {
        for (std::size_t k = 0; k < nu_; ++k) {
          out.gu[(i * nx_ + r) * nu_ + k] = s * jac.fu(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
        }
        for (std::size_t k = 0; k < np_; ++k) {
          out.gp[(i * nx_ + r) * np_ + k] = s * jac.fp(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
        }
      }
      if (ocp_.final_time_param) {
        ocp_.dynamics(x, u, t, p, f);
        const std::size_t k = *ocp_.final_time_param;
        const double dt_dT = 0.5 * (grid_->nodes()[i] + 1.0);
        for (std::size_t r = 0; r < nx_; ++r) {
          out.gp[(i * nx_ + r) * np_ + k] += 0.5 * f[r] + s * jac.ft(static_cast<Eigen::Index>(r)) * dt_dT;
        }
      }
    }
  }

  /// Packs (x_a, x_b, p) for the endpoint oracles.
  std::vector<double> endpoint_vector(CSpan xa, CSpan xb, CSpan p) const {
    std::vector<double> z;
    z.reserve(ocp_.endpoint_size());
    z.insert(z.end(), xa.begin(), xa.end());
    z.insert(z.end(), xb.begin(), xb.end());
    z.insert(z.end(), p.begin(), p.end());
    return z;
  }

  /// x_b read off the last node of a state field.
  std::vector<double> terminal_state(CSpan X) const {
    std::vector<double> xb(nx());
    gather(X, nodes() - 1, xb);
    return xb;
  }

  /// Residual of the full collocated constraint set.
  NlpResidual residual(const NlpPoint& z) const {
    check_point(z);
    const std::size_t n = nodes(), nx_ = nx();
    NlpResidual r;
    r.state.resize(n * nx_);
    r.dynamics = node_dynamics(z.X, z.U, z.p);
    r.quadrature.resize(nx_);
    const auto w = grid_->cc_weights();
    std::vector<double> bv(n);
    for (std::size_t c = 0; c < nx_; ++c) {
      CSpan vc(z.V.data() + c * n, n);
      ops::fast_bv(op_, vc, bv);
      double quad = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        r.state[c * n + i] = z.X[c * n + i] - z.xa[c] - bv[i];
        r.dynamics[c * n + i] = vc[i] - r.dynamics[c * n + i];
        quad += w[i] * vc[i];
      }
      r.quadrature[c] = z.xb[c] - z.xa[c] - quad;
    }
    r.endpoint.resize(ocp_.n_endpoint);
    if (ocp_.n_endpoint > 0) ocp_.constraints(endpoint_vector(z.xa, z.xb, z.p), r.endpoint);
    return r;
  }

  /// Directional derivative of `residual` at z along dz, assembled from the
  /// analytic oracles (never by differencing).
  NlpResidual residual_derivative(const NlpPoint& z, const NlpPoint& dz) const {
    check_point(z);
    check_point(dz);
    const std::size_t n = nodes(), nx_ = nx(), nu_ = nu(), np_ = np();
    NodeDerivatives d;
    node_derivatives(z.X, z.U, z.p, d);
    NlpResidual r;
    r.state.resize(n * nx_);
    r.dynamics.resize(n * nx_);
    r.quadrature.resize(nx_);
    std::vector<double> gdx(n * nx_);
    d.gx.apply(dz.X, gdx);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t rr = 0; rr < nx_; ++rr) {
        double acc = gdx[rr * n + i];
        for (std::size_t k = 0; k < nu_; ++k) acc += d.gu[(i * nx_ + rr) * nu_ + k] * dz.U[k * n + i];
        for (std::size_t k = 0; k < np_; ++k) acc += d.gp[(i * nx_ + rr) * np_ + k] * dz.p[k];
        r.dynamics[rr * n + i] = dz.V[rr * n + i] - acc;
      }
    }
    const auto w = grid_->cc_weights();
    std::vector<double> bv(n);
    for (std::size_t c = 0; c < nx_; ++c) {
      CSpan vc(dz.V.data() + c * n, n);
      ops::fast_bv(op_, vc, bv);
      double quad = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        r.state[c * n + i] = dz.X[c * n + i] - dz.xa[c] - bv[i];
        quad += w[i] * vc[i];
      }
      r.quadrature[c] = dz.xb[c] - dz.xa[c] - quad;
    }
    r.endpoint.assign(ocp_.n_endpoint, 0.0);
    if (ocp_.n_endpoint > 0) {
      RowMajorMatrix ej(static_cast<Eigen::Index>(ocp_.n_endpoint), static_cast<Eigen::Index>(ocp_.endpoint_size()));
      ej.setZero();
      ocp_.constraints_jacobian(endpoint_vector(z.xa, z.xb, z.p), ej);
      const auto dzv = endpoint_vector(dz.xa, dz.xb, dz.p);
      const Eigen::VectorXd de = ej * Eigen::Map<const Eigen::VectorXd>(dzv.data(), static_cast<Eigen::Index>(dzv.size()));
      for (std::size_t i = 0; i < ocp_.n_endpoint; ++i) r.endpoint[i] = de(static_cast<Eigen::Index>(i));
    }
    return r;
  }

  void gather(CSpan field, std::size_t node, Span out) const {
    const std::size_t n = nodes();
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = field[c * n + node];
  }

 private:
  void check_point(const NlpPoint& z) const {
    detail::require_size(z.X.size(), state_dim(), "X");
    detail::require_size(z.U.size(), control_dim(), "U");
    detail::require_size(z.V.size(), state_dim(), "V");
    detail::require_size(z.xa.size(), nx(), "x_a");
    detail::require_size(z.xb.size(), nx(), "x_b");
    detail::require_size(z.p.size(), np(), "p");
  }

  OcpDefinition ocp_;
  spectral::GridPtr grid_;
  ops::BirkhoffOperator op_;
};

/// Validates the definition's derivative oracles, then builds the collocated problem.
inline DiscreteNlp discretize(const OcpDefinition& ocp, long order, const ValidationOptions& check = {}) {
  detail::require(order >= 2, Errc::invalid_order, "discretization needs N >= 2");
  validate_definition(ocp, check);
  return DiscreteNlp(ocp, spectral::make_shared_grid(order));
}

}  // namespace birkhoff::ocp
