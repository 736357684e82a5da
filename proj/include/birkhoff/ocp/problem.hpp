#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "birkhoff/error.hpp"
#include "birkhoff/krylov/node_jacobian.hpp"

namespace birkhoff::ocp {

using CSpan = std::span<const double>;
using Span = std::span<double>;
using krylov::RowMajorMatrix;

/// Partial derivatives of f(x, u, t, p) at one point.
struct DynamicsJacobian {
  RowMajorMatrix fx;  // n_states x n_states
  RowMajorMatrix fu;  // n_states x n_controls
  RowMajorMatrix fp;  // n_states x n_params
  Eigen::VectorXd ft;  // n_states

  void resize(std::size_t nx, std::size_t nu, std::size_t np) {
    const auto x = static_cast<Eigen::Index>(nx);
    fx.setZero(x, x);
    fu.setZero(x, static_cast<Eigen::Index>(nu));
    fp.setZero(x, static_cast<Eigen::Index>(np));
    ft.setZero(x);
  }
};

/// An optimal control problem in the distilled Mayer form
///   minimize E(x(t_a), x(t_b), p)  s.t.  x' = f(x, u, t, p),  e(x(t_a), x(t_b), p) = 0.
///
/// Endpoint oracles take the packed vector z = (x_a, x_b, p). When the final
/// time is free it is the parameter p[final_time_param] and t_b is ignored.
/// All oracles must be reentrant.
struct OcpDefinition {
  std::string name;
  std::size_t n_states = 0;
  std::size_t n_controls = 0;
  std::size_t n_params = 0;
  std::size_t n_endpoint = 0;

  double t_a = 0.0;
  double t_b = 1.0;
  std::optional<std::size_t> final_time_param;

  std::function<void(CSpan x, CSpan u, double t, CSpan p, Span out)> dynamics;
  std::function<void(CSpan x, CSpan u, double t, CSpan p, DynamicsJacobian& jac)> dynamics_jacobian;

  std::function<double(CSpan z)> cost;
  std::function<void(CSpan z, Span grad)> cost_gradient;
  std::function<void(CSpan z, Span out)> constraints;
  std::function<void(CSpan z, RowMajorMatrix& jac)> constraints_jacobian;  // n_endpoint x |z|

  // Where the derivative check samples (perturbed randomly around this point).
  std::vector<double> probe_x, probe_u, probe_p;

  std::size_t endpoint_size() const noexcept { return 2 * n_states + n_params; }
};

struct ValidationOptions {
  std::uint64_t seed = 2024;
  int probes = 4;
  double rel_tol = 1e-5;
  double spread = 0.1;
};

namespace impl {

inline double inf_norm(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline void check_close(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd, double rel_tol,
                        const std::string& what, int probe) {
  const double err = impl::inf_norm(analytic - fd);
  const double scale = std::max(1.0, impl::inf_norm(analytic));
  if (!(err <= rel_tol * scale)) {
    std::ostringstream msg;
    msg << what << " disagrees with finite differences at probe " << probe << " (max error " << err
        << ", scale " << scale << ")";
    throw Error(Errc::definition_rejected, msg.str());
  }
}

}  // namespace impl

/// Checks sizes and compares every derivative oracle with central differences
/// of the value oracles at a few random points. Throws definition_rejected.
inline void validate_definition(const OcpDefinition& ocp, const ValidationOptions& opt = {}) {
  const auto fail = [&](const std::string& what) { throw Error(Errc::definition_rejected, ocp.name + ": " + what); };
  if (ocp.n_states == 0) fail("needs at least one state");
  if (!ocp.dynamics || !ocp.dynamics_jacobian) fail("dynamics oracles missing");
  if (!ocp.cost || !ocp.cost_gradient) fail("cost oracles missing");
  if (ocp.n_endpoint > 0 && (!ocp.constraints || !ocp.constraints_jacobian)) fail("constraint oracles missing");
  if (ocp.final_time_param && *ocp.final_time_param >= ocp.n_params) fail("final-time parameter out of range");
  if (!ocp.final_time_param && !(ocp.t_b > ocp.t_a)) fail("fixed horizon needs t_b > t_a");
  const auto nx = ocp.n_states, nu = ocp.n_controls, np = ocp.n_params;
  const auto sized = [](const std::vector<double>& v, std::size_t n) {
    return v.empty() ? std::vector<double>(n, 0.5) : v;
  };
  const auto px = sized(ocp.probe_x, nx), pu = sized(ocp.probe_u, nu), pp = sized(ocp.probe_p, np);
  if (px.size() != nx || pu.size() != nu || pp.size() != np) fail("probe point has wrong dimensions");

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const auto jitter = [&](std::vector<double> v) {
    for (double& e : v) e += opt.spread * (1.0 + std::abs(e)) * unit(rng);
    return v;
  };
  const auto step = [](double v) { return 1e-6 * (1.0 + std::abs(v)); };

  const double t_end = ocp.final_time_param ? ocp.t_a + 1.0 : ocp.t_b;
  for (int probe = 0; probe < opt.probes; ++probe) {
    auto x = jitter(px), u = jitter(pu), p = jitter(pp);
    const double t = ocp.t_a + (t_end - ocp.t_a) * 0.5 * (1.0 + unit(rng));

    DynamicsJacobian jac;
    jac.resize(nx, nu, np);
    ocp.dynamics_jacobian(x, u, t, p, jac);
    if (jac.fx.rows() != static_cast<Eigen::Index>(nx) || jac.fu.cols() != static_cast<Eigen::Index>(nu) ||
        jac.fp.cols() != static_cast<Eigen::Index>(np) || jac.ft.size() != static_cast<Eigen::Index>(nx)) {
      fail("dynamics Jacobian has wrong shape");
    }
    std::vector<double> fplus(nx), fminus(nx);
    const auto column = [&](std::vector<double>& var, std::size_t k, double& tt) {
      Eigen::VectorXd col(static_cast<Eigen::Index>(nx));
      double* slot = var.empty() ? &tt : &var[k];
      const double saved = *slot, h = step(saved);
      *slot = saved + h;
      ocp.dynamics(x, u, tt, p, fplus);
      *slot = saved - h;
      ocp.dynamics(x, u, tt, p, fminus);
      *slot = saved;
      for (std::size_t i = 0; i < nx; ++i) col(static_cast<Eigen::Index>(i)) = (fplus[i] - fminus[i]) / (2 * h);
      return col;
    };
    double tt = t;
    Eigen::MatrixXd fx(nx, nx), fu(nx, nu), fp(nx, np);
    for (std::size_t k = 0; k < nx; ++k) fx.col(static_cast<Eigen::Index>(k)) = column(x, k, tt);
    for (std::size_t k = 0; k < nu; ++k) fu.col(static_cast<Eigen::Index>(k)) = column(u, k, tt);
    for (std::size_t k = 0; k < np; ++k) fp.col(static_cast<Eigen::Index>(k)) = column(p, k, tt);
    std::vector<double> none;
    const Eigen::VectorXd ft = column(none, 0, tt);
    impl::check_close(jac.fx, fx, opt.rel_tol, "df/dx", probe);
    impl::check_close(jac.fu, fu, opt.rel_tol, "df/du", probe);
    impl::check_close(jac.fp, fp, opt.rel_tol, "df/dp", probe);
    impl::check_close(jac.ft, ft, opt.rel_tol, "df/dt", probe);

    // Endpoint oracles at z = (x_a, x_b, p).
    std::vector<double> z;
    z.insert(z.end(), x.begin(), x.end());
    const auto xb = jitter(px);
    z.insert(z.end(), xb.begin(), xb.end());
    z.insert(z.end(), p.begin(), p.end());
    const std::size_t nz = z.size();
    std::vector<double> grad(nz);
    ocp.cost_gradient(z, grad);
    Eigen::VectorXd g_fd(static_cast<Eigen::Index>(nz));
    for (std::size_t k = 0; k < nz; ++k) {
      const double saved = z[k], h = step(saved);
      z[k] = saved + h;
      const double cp = ocp.cost(z);
      z[k] = saved - h;
      const double cm = ocp.cost(z);
      z[k] = saved;
      g_fd(static_cast<Eigen::Index>(k)) = (cp - cm) / (2 * h);
    }
    impl::check_close(Eigen::Map<const Eigen::VectorXd>(grad.data(), static_cast<Eigen::Index>(nz)), g_fd,
                      opt.rel_tol, "cost gradient", probe);
    if (ocp.n_endpoint == 0) continue;
    RowMajorMatrix ej(static_cast<Eigen::Index>(ocp.n_endpoint), static_cast<Eigen::Index>(nz));
    ej.setZero();
    ocp.constraints_jacobian(z, ej);
    if (ej.rows() != static_cast<Eigen::Index>(ocp.n_endpoint) || ej.cols() != static_cast<Eigen::Index>(nz)) {
      fail("constraint Jacobian has wrong shape");
    }
    Eigen::MatrixXd e_fd(ocp.n_endpoint, nz);
    std::vector<double> ep(ocp.n_endpoint), em(ocp.n_endpoint);
    for (std::size_t k = 0; k < nz; ++k) {
      const double saved = z[k], h = step(saved);
      z[k] = saved + h;
      ocp.constraints(z, ep);
      z[k] = saved - h;
      ocp.constraints(z, em);
      z[k] = saved;
      for (std::size_t i = 0; i < ocp.n_endpoint; ++i) {
        e_fd(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (ep[i] - em[i]) / (2 * h);
      }
    }
    impl::check_close(ej, e_fd, opt.rel_tol, "constraint Jacobian", probe);
  }
}

}  // namespace birkhoff::ocp
