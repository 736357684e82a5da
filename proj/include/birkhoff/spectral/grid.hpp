#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "birkhoff/error.hpp"
#include "birkhoff/spectral/dct.hpp"

namespace birkhoff::spectral {

/// Chebyshev-Gauss-Lobatto grid of order N on [-1, 1], nodes ascending.
class ChebGrid {
 public:
  std::size_t order() const noexcept { return order_; }
  std::size_t size() const noexcept { return order_ + 1; }

  std::span<const double> nodes() const noexcept { return nodes_; }
  /// Gauss-Lobatto weights for the Chebyshev weight 1/sqrt(1-t^2).
  std::span<const double> cgl_weights() const noexcept { return cgl_weights_; }
  /// Clenshaw-Curtis weights: exact for polynomials of degree <= N.
  std::span<const double> cc_weights() const noexcept { return cc_weights_; }

 private:
  friend ChebGrid make_grid(long order);

  std::size_t order_ = 0;
  std::vector<double> nodes_;
  std::vector<double> cgl_weights_;
  std::vector<double> cc_weights_;
};

using GridPtr = std::shared_ptr<const ChebGrid>;

namespace impl {

// Clenshaw-Curtis weights as the transpose of the nodal->modal map applied to
// the exact moments m_k = int_{-1}^{1} T_k = 2/(1-k^2) (k even), 0 (k odd):
//   sum_j w_j v_j = sum_k m_k a_k(v)   =>   w = (nodal_to_modal)^T m.
inline std::vector<double> clenshaw_curtis_weights(std::size_t n) {
  std::vector<double> m(n + 1, 0.0);
  for (std::size_t k = 0; k <= n; k += 2) {
    const double kk = static_cast<double>(k);
    m[k] = 2.0 / (1.0 - kk * kk);
  }
  std::vector<double> t = dct1(m);
  t.front() *= 0.5;
  t.back() *= 0.5;
  const double scale = 2.0 / static_cast<double>(n);
  std::vector<double> w(n + 1);
  for (std::size_t j = 0; j <= n; ++j) w[j] = scale * t[n - j];
  return w;
}

}  // namespace impl

inline ChebGrid make_grid(long order) {
  detail::require(order >= 1, Errc::invalid_order, "grid order must be >= 1");
  const auto n = static_cast<std::size_t>(order);
  ChebGrid g;
  g.order_ = n;
  g.nodes_.resize(n + 1);
  for (std::size_t j = 0; j <= n; ++j) {
    // sin form is symmetric in j <-> N-j to the last bit and exact at the midpoint.
    const double arg = std::numbers::pi * (2.0 * static_cast<double>(j) - static_cast<double>(n)) /
                       (2.0 * static_cast<double>(n));
    g.nodes_[j] = std::sin(arg);
  }
  g.nodes_.front() = -1.0;
  g.nodes_.back() = 1.0;

  const double h = std::numbers::pi / static_cast<double>(n);
  g.cgl_weights_.assign(n + 1, h);
  g.cgl_weights_.front() = 0.5 * h;
  g.cgl_weights_.back() = 0.5 * h;

  g.cc_weights_ = impl::clenshaw_curtis_weights(n);
  // Symmetrize: the transform leaves O(eps) asymmetry.
  for (std::size_t j = 0; j < (n + 1) / 2; ++j) {
    const double avg = 0.5 * (g.cc_weights_[j] + g.cc_weights_[n - j]);
    g.cc_weights_[j] = avg;
    g.cc_weights_[n - j] = avg;
  }
  return g;
}

inline GridPtr make_shared_grid(long order) {
  return std::make_shared<const ChebGrid>(make_grid(order));
}

}  // namespace birkhoff::spectral
