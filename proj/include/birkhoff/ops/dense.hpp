#pragma once

// Dense O(N^2)-memory constructions used as independent oracles and for
// diagnostics. None of this shares the FFT path with fast_bv.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

#include "birkhoff/error.hpp"
#include "birkhoff/krylov/node_jacobian.hpp"
#include "birkhoff/ops/birkhoff_operator.hpp"
#include "birkhoff/spectral/grid.hpp"

namespace birkhoff::ops {

/// Largest order accepted by the dense builders (a 4097^2 matrix is ~134 MB).
inline constexpr std::size_t kDenseOrderGuard = 4096;

namespace impl {

inline void check_dense_guard(const ChebGrid& grid, std::size_t guard) {
  if (grid.order() > guard) {
    throw Error(Errc::size_guard, "dense construction refused for N = " + std::to_string(grid.order()));
  }
}

// T_k(tau) via the trigonometric form.
inline double cheb_t(std::size_t k, double tau) {
  return std::cos(static_cast<double>(k) * std::acos(std::clamp(tau, -1.0, 1.0)));
}

// int_{-1}^{tau} T_k(xi) dxi in closed form.
inline double cheb_t_integral(std::size_t k, double tau) {
  if (k == 0) return tau + 1.0;
  if (k == 1) return 0.5 * (tau * tau - 1.0);
  const double kk = static_cast<double>(k);
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return cheb_t(k + 1, tau) / (2.0 * (kk + 1.0)) - cheb_t(k - 1, tau) / (2.0 * (kk - 1.0)) -
         sign / (kk * kk - 1.0);
}

}  // namespace impl

/// Dense B^a = T_int T^{-1} by explicit assembly and an LU solve;
/// B^b[i][j] = -B^a[N-i][N-j] from the tau -> -tau symmetry of the grid.
inline Eigen::MatrixXd dense_birkhoff(const ChebGrid& grid, Variant variant = Variant::A) {
  impl::check_dense_guard(grid, kDenseOrderGuard);
  const std::size_t n1 = grid.size();
  const auto tau = grid.nodes();
  Eigen::MatrixXd t(n1, n1);
  Eigen::MatrixXd t_int(n1, n1);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t k = 0; k < n1; ++k) {
      t(i, k) = impl::cheb_t(k, tau[i]);
      t_int(i, k) = impl::cheb_t_integral(k, tau[i]);
    }
  }
  t_int.row(0).setZero();
  // B T = T_int  <=>  T^T B^T = T_int^T
  Eigen::MatrixXd ba = t.transpose().partialPivLu().solve(t_int.transpose()).transpose();
  if (variant == Variant::A) return ba;
  Eigen::MatrixXd bb(n1, n1);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n1; ++j) bb(i, j) = -ba(n1 - 1 - i, n1 - 1 - j);
  }
  return bb;
}

/// Dense lower-triangular surrogate B~ (for tests and diagnostics only).
inline Eigen::MatrixXd dense_surrogate(const ChebGrid& grid) {
  impl::check_dense_guard(grid, kDenseOrderGuard);
  const std::size_t n1 = grid.size();
  const auto w = grid.cc_weights();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n1, n1);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < i; ++j) m(i, j) = w[j];
    m(i, i) = 0.5 * w[i];
  }
  return m;
}

/// ||B^a - B~||_inf, computed densely.
inline double surrogate_error_norm(const ChebGrid& grid) {
  impl::check_dense_guard(grid, 1024);
  return (dense_birkhoff(grid) - dense_surrogate(grid)).cwiseAbs().rowwise().sum().maxCoeff();
}

/// Dense I - B (dX f) for a per-node Jacobian, channel-major like the fast path.
inline Eigen::MatrixXd dense_system(const Eigen::MatrixXd& b, const krylov::NodeJacobian& jac) {
  const auto n = b.rows();
  const auto c = static_cast<Eigen::Index>(jac.channels());
  detail::require_size(jac.nodes(), static_cast<std::size_t>(n), "Jacobian nodes vs matrix");
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n * c, n * c);
  for (Eigen::Index r = 0; r < c; ++r) {
    for (Eigen::Index q = 0; q < c; ++q) {
      for (Eigen::Index j = 0; j < n; ++j) {
        a.block(r * n, q * n + j, n, 1) -= b.col(j) * jac(static_cast<std::size_t>(j), static_cast<std::size_t>(r), static_cast<std::size_t>(q));
      }
    }
  }
  return a;
}

/// 2-norm condition number of I - B^a diag(d).
inline double birkhoff_condition_number(const ChebGrid& grid, std::span<const double> d) {
  detail::require_size(d.size(), grid.size(), "diagonal vs grid");
  const std::size_t n1 = grid.size();
  Eigen::MatrixXd a = -dense_birkhoff(grid);
  for (std::size_t j = 0; j < n1; ++j) a.col(j) *= d[j];
  a.diagonal().array() += 1.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  return s(0) / s(s.size() - 1);
}

}  // namespace birkhoff::ops
