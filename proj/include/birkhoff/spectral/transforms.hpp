#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "birkhoff/error.hpp"
#include "birkhoff/spectral/dct.hpp"
#include "birkhoff/spectral/grid.hpp"

namespace birkhoff::spectral {

/// Chebyshev-T coefficients a_0..a_N of a grid function.
struct ModalCoeffs {
  std::vector<double> coeffs;

  std::size_t size() const noexcept { return coeffs.size(); }
  double operator[](std::size_t k) const { return coeffs[k]; }
  double& operator[](std::size_t k) { return coeffs[k]; }
};

/// Whether the degree-(N+1) antiderivative term is folded onto T_{N-1}.
/// Turning it off is only useful for mutation checks of the test suite.
enum class AliasFold { on, off };

// ---------------------------------------------------------------------------
// Span-level kernels. `out` may alias `in` for every kernel below.

/// v_j = sum_k a_k T_k(tau_j): double the end coefficients, DCT-I, reverse.
inline void modal_to_nodal(std::span<const double> a, std::span<double> v) {
  detail::require(a.size() >= 2, Errc::invalid_size, "modal_to_nodal needs N >= 1");
  detail::require_size(v.size(), a.size(), "modal_to_nodal output");
  const std::size_t len = a.size();
  std::span<double> t(impl::scratch<1>(len).data(), len);
  std::copy(a.begin(), a.end(), t.begin());
  t.front() *= 2.0;
  t.back() *= 2.0;
  std::span<double> u(impl::scratch<2>(len).data(), len);
  dct1(t, u);
  std::reverse_copy(u.begin(), u.end(), v.begin());
}

/// Inverse of modal_to_nodal: reverse, DCT-I, scale 2/N, halve the ends.
inline void nodal_to_modal(std::span<const double> v, std::span<double> a) {
  detail::require(v.size() >= 2, Errc::invalid_size, "nodal_to_modal needs N >= 1");
  detail::require_size(a.size(), v.size(), "nodal_to_modal output");
  const std::size_t n = v.size() - 1;
  std::span<double> t(impl::scratch<1>(n + 1).data(), n + 1);
  std::reverse_copy(v.begin(), v.end(), t.begin());
  std::span<double> u(impl::scratch<2>(n + 1).data(), n + 1);
  dct1(t, u);
  const double scale = 2.0 / static_cast<double>(n);
  for (std::size_t k = 0; k <= n; ++k) a[k] = scale * u[k];
  a[0] *= 0.5;
  a[n] *= 0.5;
}

// The DCT-I matrix of this convention is K*C with K symmetric and
// C = diag(1/2, 1, ..., 1, 1/2), so its transpose is C*dct1(C^{-1} x).

/// (modal_to_nodal)^T y.
inline void modal_to_nodal_transpose(std::span<const double> y, std::span<double> out) {
  detail::require(y.size() >= 2, Errc::invalid_size, "transpose needs N >= 1");
  detail::require_size(out.size(), y.size(), "modal_to_nodal_transpose output");
  std::span<double> t(impl::scratch<1>(y.size()).data(), y.size());
  std::reverse_copy(y.begin(), y.end(), t.begin());
  t.front() *= 2.0;
  t.back() *= 2.0;
  dct1(t, out);
}

/// (nodal_to_modal)^T a.
inline void nodal_to_modal_transpose(std::span<const double> a, std::span<double> out) {
  detail::require(a.size() >= 2, Errc::invalid_size, "transpose needs N >= 1");
  detail::require_size(out.size(), a.size(), "nodal_to_modal_transpose output");
  const std::size_t n = a.size() - 1;
  std::span<double> t(impl::scratch<1>(n + 1).data(), n + 1);
  dct1(a, t);
  t.front() *= 0.5;
  t.back() *= 0.5;
  const double scale = 2.0 / static_cast<double>(n);
  for (std::size_t j = 0; j <= n; ++j) out[j] = scale * t[n - j];
}

/// Coefficients of int_{-1}^{tau} sum_k a_k T_k, truncated to degree N by
/// folding the T_{N+1} term onto T_{N-1} (the two agree on the CGL nodes).
inline void antiderivative_coeffs(std::span<const double> a, std::span<double> c,
                                  AliasFold fold = AliasFold::on) {
  detail::require(a.size() >= 3, Errc::order_too_small, "antiderivative needs N >= 2");
  detail::require_size(c.size(), a.size(), "antiderivative output");
  const std::size_t n = a.size() - 1;
  const auto coef = [&](std::size_t k) { return k <= n ? a[k] : 0.0; };

  // Constant term: a_0 - a_1/4 - sum_{k>=2} a_k (-1)^k / (k^2-1).
  double c0 = a[0] - 0.25 * a[1];
  for (std::size_t k = 2; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    const double term = a[k] / (kk * kk - 1.0);
    c0 -= (k % 2 == 0) ? term : -term;
  }
  const double c_top = a[n] / (2.0 * static_cast<double>(n + 1));

  std::span<double> out(impl::scratch<3>(n + 1).data(), n + 1);
  out[0] = c0;
  out[1] = a[0] - 0.5 * a[2];
  for (std::size_t k = 2; k <= n; ++k) {
    out[k] = (coef(k - 1) - coef(k + 1)) / (2.0 * static_cast<double>(k));
  }
  if (fold == AliasFold::on) out[n - 1] += c_top;
  std::copy(out.begin(), out.end(), c.begin());
}

/// Transpose of antiderivative_coeffs (fold on).
inline void antiderivative_coeffs_transpose(std::span<const double> y, std::span<double> z) {
  detail::require(y.size() >= 3, Errc::order_too_small, "antiderivative needs N >= 2");
  detail::require_size(z.size(), y.size(), "antiderivative transpose output");
  const std::size_t n = y.size() - 1;
  std::span<double> out(impl::scratch<3>(n + 1).data(), n + 1);
  std::fill(out.begin(), out.end(), 0.0);

  out[0] += y[0];
  out[1] -= 0.25 * y[0];
  for (std::size_t k = 2; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    const double w = 1.0 / (kk * kk - 1.0);
    out[k] -= (k % 2 == 0) ? w * y[0] : -w * y[0];
  }
  out[0] += y[1];
  out[2] -= 0.5 * y[1];
  for (std::size_t k = 2; k <= n; ++k) {
    const double s = y[k] / (2.0 * static_cast<double>(k));
    out[k - 1] += s;
    if (k + 1 <= n) out[k + 1] -= s;
  }
  out[n] += y[n - 1] / (2.0 * static_cast<double>(n + 1));
  std::copy(out.begin(), out.end(), z.begin());
}

// ---------------------------------------------------------------------------
// Value-returning forms bound to a grid.

inline std::vector<double> modal_to_nodal(const ModalCoeffs& a, const ChebGrid& grid) {
  detail::require_size(a.size(), grid.size(), "modal coefficients vs grid");
  std::vector<double> v(a.size());
  modal_to_nodal(a.coeffs, v);
  return v;
}

inline ModalCoeffs nodal_to_modal(std::span<const double> v, const ChebGrid& grid) {
  detail::require_size(v.size(), grid.size(), "nodal values vs grid");
  ModalCoeffs a{std::vector<double>(v.size())};
  nodal_to_modal(v, a.coeffs);
  return a;
}

inline ModalCoeffs antiderivative_coeffs(const ModalCoeffs& a, AliasFold fold = AliasFold::on) {
  ModalCoeffs c{std::vector<double>(a.size())};
  antiderivative_coeffs(a.coeffs, c.coeffs, fold);
  return c;
}

/// Sum a_k T_k(tau) by Clenshaw's backward recurrence.
inline double clenshaw_eval(std::span<const double> a, double tau) {
  if (!(tau >= -1.0 && tau <= 1.0)) throw Error(Errc::domain, "clenshaw_eval needs tau in [-1, 1]");
  if (a.empty()) return 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  for (std::size_t k = a.size() - 1; k >= 1; --k) {
    const double b0 = a[k] + 2.0 * tau * b1 - b2;
    b2 = b1;
    b1 = b0;
  }
  return a[0] + tau * b1 - b2;
}

inline double clenshaw_eval(const ModalCoeffs& a, double tau) { return clenshaw_eval(a.coeffs, tau); }

}  // namespace birkhoff::spectral
