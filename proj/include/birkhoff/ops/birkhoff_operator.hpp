#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "birkhoff/error.hpp"
#include "birkhoff/spectral/grid.hpp"
#include "birkhoff/spectral/transforms.hpp"

namespace birkhoff::ops {

using spectral::AliasFold;
using spectral::ChebGrid;
using spectral::GridPtr;

/// a-expansion (anchored at tau = -1) or b-expansion (anchored at tau = +1).
enum class Variant { A, B };

/// Birkhoff integration matrix B^a (or B^b) on a CGL grid, held as an
/// operator: [B^a V]_i = int_{-1}^{tau_i} of the interpolant of V.
class BirkhoffOperator {
 public:
  explicit BirkhoffOperator(GridPtr grid, Variant variant = Variant::A)
      : grid_(std::move(grid)), variant_(variant) {
    detail::require(grid_ != nullptr, Errc::invalid_order, "null grid");
  }

  const ChebGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  Variant variant() const noexcept { return variant_; }
  std::size_t size() const noexcept { return grid_->size(); }

 private:
  GridPtr grid_;
  Variant variant_;
};

namespace impl {

inline void check_fast_bv(const BirkhoffOperator& op, std::size_t in, std::size_t out) {
  if (op.variant() != Variant::A) {
    throw Error(Errc::unsupported_fast_path, "fast B*V exists only for the a-expansion");
  }
  detail::require(op.grid().order() >= 2, Errc::order_too_small, "fast B*V needs N >= 2");
  detail::require_size(in, op.size(), "fast_bv input");
  detail::require_size(out, op.size(), "fast_bv output");
}

}  // namespace impl

/// out = B^a v in O(N log N): nodal->modal, antiderivative with aliasing fold,
/// modal->nodal. `out` may alias `v`.
///
/// The three stages are fused so that, besides the two DCTs, the data is
/// streamed only three times; the separate kernels in spectral/ compute the
/// same thing and serve as the readable reference.
inline void fast_bv(const BirkhoffOperator& op, std::span<const double> v, std::span<double> out,
                    AliasFold fold = AliasFold::on) {
  impl::check_fast_bv(op, v.size(), out.size());
  const std::size_t n = v.size() - 1;
  std::span<double> b1(spectral::impl::scratch<4>(n + 1).data(), n + 1);
  std::span<double> b2(spectral::impl::scratch<5>(n + 1).data(), n + 1);

  std::reverse_copy(v.begin(), v.end(), b1.begin());
  spectral::impl::dct1_unscaled(b1, b2);
  // Chebyshev coefficients are a_k = b2[k] / N, with the two ends halved.
  const double s = 1.0 / static_cast<double>(n);
  const auto a = [&](std::size_t k) {
    if (k > n) return 0.0;
    return (k == 0 || k == n) ? 0.5 * s * b2[k] : s * b2[k];
  };

  double c0 = a(0) - 0.25 * a(1);
  for (std::size_t k = 2; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    const double term = a(k) / (kk * kk - 1.0);
    c0 -= (k % 2 == 0) ? term : -term;
  }
  // Antiderivative coefficients, stored with the modal->nodal end doubling.
  b1[0] = 2.0 * c0;
  b1[1] = a(0) - 0.5 * a(2);
  for (std::size_t k = 2; k <= n; ++k) b1[k] = (a(k - 1) - a(k + 1)) / (2.0 * static_cast<double>(k));
  if (fold == AliasFold::on) b1[n - 1] += a(n) / (2.0 * static_cast<double>(n + 1));
  b1[n] *= 2.0;

  spectral::impl::dct1_unscaled(b1, b2);
  for (std::size_t j = 0; j <= n; ++j) out[j] = 0.5 * b2[n - j];
}

inline std::vector<double> fast_bv(const BirkhoffOperator& op, std::span<const double> v) {
  std::vector<double> out(v.size());
  fast_bv(op, v, out);
  return out;
}

/// out = (B^a)^T y, same cost as fast_bv.
inline void fast_bv_transpose(const BirkhoffOperator& op, std::span<const double> y,
                              std::span<double> out) {
  impl::check_fast_bv(op, y.size(), out.size());
  std::span<double> t(spectral::impl::scratch<4>(y.size()).data(), y.size());
  spectral::modal_to_nodal_transpose(y, t);
  spectral::antiderivative_coeffs_transpose(t, t);
  spectral::nodal_to_modal_transpose(t, out);
}

/// Lower-triangular Clenshaw-Curtis surrogate of B^a:
///   0 above the diagonal, w_j/2 on it, w_j below it.
/// Only ever applied or inverted by sweeps.
class TriangularSurrogate {
 public:
  explicit TriangularSurrogate(GridPtr grid) : grid_(std::move(grid)) {
    detail::require(grid_ != nullptr, Errc::invalid_order, "null grid");
  }

  const ChebGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  std::size_t size() const noexcept { return grid_->size(); }
  std::span<const double> weights() const noexcept { return grid_->cc_weights(); }

 private:
  GridPtr grid_;
};

/// out = B~ v by one forward sweep. `out` may alias `v`.
inline void fast_bcc_v(const TriangularSurrogate& s, std::span<const double> v, std::span<double> out) {
  detail::require_size(v.size(), s.size(), "fast_bcc_v input");
  detail::require_size(out.size(), s.size(), "fast_bcc_v output");
  const auto w = s.weights();
  double run = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double xi = 0.5 * w[k] * v[k] + run;
    run = 2.0 * xi - run;
    out[k] = xi;
  }
}

inline std::vector<double> fast_bcc_v(const TriangularSurrogate& s, std::span<const double> v) {
  std::vector<double> out(v.size());
  fast_bcc_v(s, v, out);
  return out;
}

/// out = B~^T y by one backward sweep: out_k = w_k (y_k/2 + sum_{i>k} y_i).
inline void fast_bcc_v_transpose(const TriangularSurrogate& s, std::span<const double> y,
                                 std::span<double> out) {
  detail::require_size(y.size(), s.size(), "fast_bcc_v_transpose input");
  detail::require_size(out.size(), s.size(), "fast_bcc_v_transpose output");
  const auto w = s.weights();
  double tail = 0.0;
  for (std::size_t k = y.size(); k-- > 0;) {
    const double yk = y[k];
    out[k] = w[k] * (0.5 * yk + tail);
    tail += yk;
  }
}

}  // namespace birkhoff::ops
