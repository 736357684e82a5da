#pragma once

// The Newton system of the Birkhoff collocation, A = I - B^a dX f, and its
// lower-triangular look-alike P = I - B~ dX f used as right preconditioner.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "birkhoff/error.hpp"
#include "birkhoff/krylov/gmres.hpp"
#include "birkhoff/krylov/node_jacobian.hpp"
#include "birkhoff/ops/birkhoff_operator.hpp"

namespace birkhoff::krylov {

using ops::BirkhoffOperator;
using ops::TriangularSurrogate;

namespace impl {

inline void check_system(std::size_t nodes, const NodeJacobian& jac, std::size_t in, std::size_t out) {
  detail::require_size(jac.nodes(), nodes, "NodeJacobian nodes vs grid");
  detail::require_size(in, jac.dim(), "system input (nodes * channels)");
  detail::require_size(out, jac.dim(), "system output (nodes * channels)");
}

}  // namespace impl

/// out = chi - B^a (dX f) chi, one fast_bv per channel.
inline void fast_ax(const BirkhoffOperator& op, const NodeJacobian& jac, std::span<const double> chi,
                    std::span<double> out) {
  const std::size_t n = op.size();
  impl::check_system(n, jac, chi.size(), out.size());
  std::vector<double> t(chi.size());
  jac.apply(chi, t);
  for (std::size_t c = 0; c < jac.channels(); ++c) {
    std::span<double> tc(t.data() + c * n, n);
    ops::fast_bv(op, tc, tc);
  }
  for (std::size_t i = 0; i < chi.size(); ++i) out[i] = chi[i] - t[i];
}

inline std::vector<double> fast_ax(const BirkhoffOperator& op, const NodeJacobian& jac,
                                   std::span<const double> chi) {
  std::vector<double> out(chi.size());
  fast_ax(op, jac, chi, out);
  return out;
}

/// out = A^T y = y - (dX f)^T (B^a)^T y.
inline void fast_ax_transpose(const BirkhoffOperator& op, const NodeJacobian& jac, std::span<const double> y,
                              std::span<double> out) {
  const std::size_t n = op.size();
  impl::check_system(n, jac, y.size(), out.size());
  std::vector<double> t(y.size());
  for (std::size_t c = 0; c < jac.channels(); ++c) {
    ops::fast_bv_transpose(op, y.subspan(c * n, n), std::span<double>(t.data() + c * n, n));
  }
  std::vector<double> u(y.size());
  jac.apply(t, u, /*transpose=*/true);
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] - u[i];
}

/// P = I - B~ (dX f) with every pivot block I - (w_k/2) J_k factored up front,
/// so that P^{-1} and P^{-T} are single O(N * channels^2) sweeps.
/// Holds a reference to `jac`, which must outlive the preconditioner.
class BirkhoffPreconditioner {
 public:
  BirkhoffPreconditioner(const TriangularSurrogate& s, const NodeJacobian& jac)
      : grid_(s.grid_ptr()), jac_(&jac) {
    const std::size_t n = s.size();
    const std::size_t c = jac.channels();
    detail::require_size(jac.nodes(), n, "NodeJacobian nodes vs grid");
    pivots_inv_.resize(n * c * c);
    const auto w = s.weights();
    for (std::size_t k = 0; k < n; ++k) {
      if (c == 1) {
        const double h = 0.5 * w[k] * jac(k, 0, 0);
        const double p = 1.0 - h;
        if (!(std::abs(p) > 1e-14 * std::max(1.0, std::abs(h)))) throw SingularPivotError(k);
        pivots_inv_[k] = 1.0 / p;
        continue;
      }
      RowMajorMatrix p = -0.5 * w[k] * jac.block(k);
      p.diagonal().array() += 1.0;
      Eigen::FullPivLU<RowMajorMatrix> lu(p);
      lu.setThreshold(1e-14);
      if (!lu.isInvertible() || !lu.inverse().allFinite()) throw SingularPivotError(k);
      Eigen::Map<RowMajorMatrix>(pivots_inv_.data() + k * c * c, static_cast<Eigen::Index>(c),
                                 static_cast<Eigen::Index>(c)) = lu.inverse();
    }
  }

  BirkhoffPreconditioner(const TriangularSurrogate&, NodeJacobian&&) = delete;

  std::size_t dim() const noexcept { return jac_->dim(); }

  /// out = P^{-1} in by a forward sweep; `out` may alias `in`.
  ///   xi_k = (I - w_k J_k / 2)^{-1} (in_k + s),   s <- s + w_k J_k xi_k
  void apply(std::span<const double> in, std::span<double> out) const {
    const std::size_t n = grid_->size();
    const std::size_t c = jac_->channels();
    impl::check_system(n, *jac_, in.size(), out.size());
    const auto w = grid_->cc_weights();
    if (c == 1) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double xi = pivots_inv_[k] * (in[k] + s);
        s += w[k] * (*jac_)(k, 0, 0) * xi;
        out[k] = xi;
      }
      return;
    }
    std::vector<double> s(c, 0.0), rhs(c), xi(c);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t r = 0; r < c; ++r) rhs[r] = in[r * n + k] + s[r];
      const double* pinv = pivots_inv_.data() + k * c * c;
      for (std::size_t r = 0; r < c; ++r) {
        double acc = 0.0;
        for (std::size_t q = 0; q < c; ++q) acc += pinv[r * c + q] * rhs[q];
        xi[r] = acc;
      }
      const double* jk = jac_->block_data(k);
      for (std::size_t r = 0; r < c; ++r) {
        double acc = 0.0;
        for (std::size_t q = 0; q < c; ++q) acc += jk[r * c + q] * xi[q];
        s[r] += w[k] * acc;
        out[r * n + k] = xi[r];
      }
    }
  }

  /// out = P^{-T} in by a backward sweep; `out` may alias `in`.
  ///   (I - w_k J_k^T / 2) eta_k = in_k + w_k J_k^T sum_{i>k} eta_i
  void apply_transpose(std::span<const double> in, std::span<double> out) const {
    const std::size_t n = grid_->size();
    const std::size_t c = jac_->channels();
    impl::check_system(n, *jac_, in.size(), out.size());
    const auto w = grid_->cc_weights();
    std::vector<double> tail(c, 0.0), rhs(c), eta(c);
    for (std::size_t k = n; k-- > 0;) {
      const double* jk = jac_->block_data(k);
      for (std::size_t r = 0; r < c; ++r) {
        double acc = 0.0;
        for (std::size_t q = 0; q < c; ++q) acc += jk[q * c + r] * tail[q];
        rhs[r] = in[r * n + k] + w[k] * acc;
      }
      const double* pinv = pivots_inv_.data() + k * c * c;
      for (std::size_t r = 0; r < c; ++r) {
        double acc = 0.0;
        for (std::size_t q = 0; q < c; ++q) acc += pinv[q * c + r] * rhs[q];
        eta[r] = acc;
      }
      for (std::size_t r = 0; r < c; ++r) {
        tail[r] += eta[r];
        out[r * n + k] = eta[r];
      }
    }
  }

  /// out = P in (forward product, for checks).
  void multiply(std::span<const double> in, std::span<double> out) const {
    const std::size_t n = grid_->size();
    impl::check_system(n, *jac_, in.size(), out.size());
    std::vector<double> t(in.size());
    jac_->apply(in, t);
    const TriangularSurrogate s(grid_);
    for (std::size_t ch = 0; ch < jac_->channels(); ++ch) {
      std::span<double> tc(t.data() + ch * n, n);
      ops::fast_bcc_v(s, tc, tc);
    }
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] - t[i];
  }

 private:
  ops::GridPtr grid_;
  const NodeJacobian* jac_;
  std::vector<double> pivots_inv_;
};

/// P^{-1} upsilon for a one-off application.
inline std::vector<double> fast_pinv(const TriangularSurrogate& s, const NodeJacobian& jac,
                                     std::span<const double> upsilon) {
  std::vector<double> out(upsilon.size());
  BirkhoffPreconditioner(s, jac).apply(upsilon, out);
  return out;
}

/// A as a LinearMap (optionally A^T). References its arguments.
class SystemOperator {
 public:
  SystemOperator(const BirkhoffOperator& op, const NodeJacobian& jac, bool transpose = false)
      : op_(&op), jac_(&jac), transpose_(transpose) {}

  std::size_t dim() const noexcept { return jac_->dim(); }
  void apply(std::span<const double> in, std::span<double> out) const {
    if (transpose_) {
      fast_ax_transpose(*op_, *jac_, in, out);
    } else {
      fast_ax(*op_, *jac_, in, out);
    }
  }

 private:
  const BirkhoffOperator* op_;
  const NodeJacobian* jac_;
  bool transpose_;
};

/// P^{-1} (or P^{-T}) as a LinearMap.
class PreconditionerMap {
 public:
  explicit PreconditionerMap(const BirkhoffPreconditioner& p, bool transpose = false)
      : p_(&p), transpose_(transpose) {}

  std::size_t dim() const noexcept { return p_->dim(); }
  void apply(std::span<const double> in, std::span<double> out) const {
    if (transpose_) {
      p_->apply_transpose(in, out);
    } else {
      p_->apply(in, out);
    }
  }

 private:
  const BirkhoffPreconditioner* p_;
  bool transpose_;
};

static_assert(LinearMap<SystemOperator>);
static_assert(LinearMap<PreconditionerMap>);

/// Solve (I - B^a dX f) dX = rhs by right-preconditioned GMRES with P^{-1}.
/// Returns immediately when the initial guess already meets the tolerance.
inline KrylovResult fast_lin_sol(const BirkhoffOperator& op, const NodeJacobian& jac, std::span<const double> rhs,
                                 const KrylovConfig& cfg, std::span<const double> x0 = {}) {
  const BirkhoffPreconditioner p(TriangularSurrogate(op.grid_ptr()), jac);
  return gmres(SystemOperator(op, jac), rhs, PreconditionerMap(p), cfg, x0);
}

/// Solve (I - B^a dX f)^T y = rhs, preconditioned with P^{-T}.
inline KrylovResult fast_lin_sol_transpose(const BirkhoffOperator& op, const NodeJacobian& jac,
                                           std::span<const double> rhs, const KrylovConfig& cfg,
                                           std::span<const double> x0 = {}) {
  const BirkhoffPreconditioner p(TriangularSurrogate(op.grid_ptr()), jac);
  return gmres(SystemOperator(op, jac, true), rhs, PreconditionerMap(p, true), cfg, x0);
}

}  // namespace birkhoff::krylov
