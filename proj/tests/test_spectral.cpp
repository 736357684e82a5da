#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <thread>
#include <vector>

#include "birkhoff/spectral/dct.hpp"
#include "birkhoff/spectral/grid.hpp"
#include "birkhoff/spectral/transforms.hpp"
#include "test_support.hpp"

using namespace birkhoff;
using namespace birkhoff::spectral;
using birkhoff::testing::cheb_t;
using birkhoff::testing::max_abs;
using birkhoff::testing::max_abs_diff;
using birkhoff::testing::random_vector;

TEST(Grid, ThreePointGrid) {
  const auto g = make_grid(2);
  EXPECT_DOUBLE_EQ(g.nodes()[0], -1.0);
  EXPECT_NEAR(g.nodes()[1], 0.0, 1e-16);
  EXPECT_DOUBLE_EQ(g.nodes()[2], 1.0);
  // Integrals of the Lagrange cardinals on {-1, 0, 1}: 1/3, 4/3, 1/3.
  EXPECT_NEAR(g.cc_weights()[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(g.cc_weights()[1], 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(g.cc_weights()[2], 1.0 / 3.0, 1e-15);
}

TEST(Grid, CglWeights) {
  const auto g = make_grid(4);
  const double pi = std::numbers::pi;
  const std::vector<double> want{pi / 8, pi / 4, pi / 4, pi / 4, pi / 8};
  for (std::size_t j = 0; j < want.size(); ++j) EXPECT_DOUBLE_EQ(g.cgl_weights()[j], want[j]);
}

TEST(Grid, RejectsBadOrder) {
  EXPECT_THROW(make_grid(0), Error);
  EXPECT_THROW(make_grid(-3), Error);
  try {
    make_grid(0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_order);
  }
}

TEST(Grid, Invariants) {
  for (long n : {1L, 2L, 3L, 7L, 16L, 33L, 100L, 1024L, 4097L}) {
    const auto g = make_grid(n);
    const auto x = g.nodes();
    const auto w = g.cc_weights();
    double sum = 0.0;
    for (std::size_t j = 0; j <= g.order(); ++j) {
      EXPECT_NEAR(x[j], -std::cos(std::numbers::pi * j / n), 1e-15);
      EXPECT_EQ(x[j], -x[g.order() - j]);
      EXPECT_EQ(w[j], w[g.order() - j]);
      EXPECT_GT(w[j], 0.0);
      if (j > 0) EXPECT_LT(x[j - 1], x[j]);
      sum += w[j];
    }
    EXPECT_NEAR(sum, 2.0, 1e-13) << "N=" << n;
  }
}

TEST(Grid, ClenshawCurtisIsExactForDegreeN) {
  for (long n : {2L, 8L, 16L, 64L, 256L}) {
    const auto g = make_grid(n);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto b = random_vector(g.size(), 100 + seed);
      double exact = 0.0;
      for (std::size_t k = 0; k <= g.order(); k += 2) exact += b[k] * 2.0 / (1.0 - double(k) * double(k));
      double quad = 0.0;
      for (std::size_t j = 0; j <= g.order(); ++j) {
        double p = 0.0;
        for (std::size_t k = 0; k <= g.order(); ++k) p += b[k] * cheb_t(k, g.nodes()[j]);
        quad += g.cc_weights()[j] * p;
      }
      EXPECT_NEAR(quad, exact, 1e-12) << "N=" << n;
    }
  }
}

TEST(Dct, SmallExamples) {
  std::vector<double> out(3);
  dct1(std::vector<double>{2, 0, 0}, out);
  EXPECT_EQ(out, (std::vector<double>{1, 1, 1}));
  dct1(std::vector<double>{0, 0, 2}, out);
  EXPECT_EQ(out, (std::vector<double>{1, -1, 1}));
  dct1(std::vector<double>{0, 1, 0}, out);
  EXPECT_NEAR(out[0], 1.0, 1e-16);
  EXPECT_NEAR(out[1], 0.0, 1e-16);
  EXPECT_NEAR(out[2], -1.0, 1e-16);
}

TEST(Dct, RejectsTooShort) {
  std::vector<double> one{1.0};
  EXPECT_THROW(dct1(one), Error);
  std::vector<double> out(4);
  EXPECT_THROW(dct1(std::vector<double>{1, 2, 3}, out), Error);
}

TEST(Dct, FastMatchesDirect) {
  for (std::size_t n : {31u, 32u, 33u, 64u, 100u, 257u, 1024u, 1025u}) {
    const auto x = random_vector(n, n);
    std::vector<double> fast(n), direct(n);
    dct1(x, fast);
    dct1_direct(x, direct);
    EXPECT_LE(max_abs_diff(fast, direct), 1e-12 * max_abs(direct)) << "n=" << n;
  }
}

TEST(Dct, AliasedInOut) {
  auto x = random_vector(129, 5);
  const auto want = dct1(x);
  dct1(x, x);
  EXPECT_EQ(x, want);
}

TEST(Dct, ConcurrentCallersAgree) {
  const auto x = random_vector(4097, 11);
  const auto want = dct1(x);
  std::vector<std::vector<double>> got(4);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < got.size(); ++t) {
    pool.emplace_back([&, t] {
      for (int rep = 0; rep < 5; ++rep) got[t] = dct1(x);
      (void)dct1(random_vector(1000 + t, t));  // forces per-thread planning
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& g : got) EXPECT_EQ(g, want);
}

TEST(Transforms, UnitModesAndNodes) {
  const auto g = make_grid(16);
  ModalCoeffs a{std::vector<double>(g.size(), 0.0)};
  a[0] = 1.0;
  for (double v : modal_to_nodal(a, g)) EXPECT_NEAR(v, 1.0, 1e-15);
  a[0] = 0.0;
  a[1] = 1.0;
  const auto v = modal_to_nodal(a, g);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(v[j], g.nodes()[j], 1e-15);

  const std::vector<double> ones(g.size(), 1.0);
  const auto b = nodal_to_modal(ones, g);
  EXPECT_NEAR(b[0], 1.0, 1e-15);
  for (std::size_t k = 1; k < g.size(); ++k) EXPECT_NEAR(b[k], 0.0, 1e-15);

  const std::vector<double> nodes(g.nodes().begin(), g.nodes().end());
  const auto c = nodal_to_modal(nodes, g);
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(c[k], k == 1 ? 1.0 : 0.0, 1e-15);
}

TEST(Transforms, ModalToNodalMatchesTrigSum) {
  const auto g = make_grid(16);
  ModalCoeffs a{random_vector(g.size(), 3)};
  const auto v = modal_to_nodal(a, g);
  for (std::size_t j = 0; j < g.size(); ++j) {
    double want = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      want += a[k] * std::cos(std::numbers::pi * double(k) * double(g.order() - j) / double(g.order()));
    }
    EXPECT_NEAR(v[j], want, 1e-12 * max_abs(v));
  }
}

TEST(Transforms, RoundTrip) {
  const auto g = make_grid(64);
  ModalCoeffs a{random_vector(g.size(), 9)};
  const auto back = nodal_to_modal(modal_to_nodal(a, g), g);
  EXPECT_LE(max_abs_diff(back.coeffs, a.coeffs), 1e-12 * max_abs(a.coeffs));

  for (long n = 2; n <= 4096; n *= 2) {
    const auto gn = make_grid(n);
    const auto v = random_vector(gn.size(), 1000 + n);
    const auto vv = modal_to_nodal(nodal_to_modal(v, gn), gn);
    EXPECT_LE(max_abs_diff(vv, v), 1e-11 * max_abs(v)) << "N=" << n;
  }
}

TEST(Transforms, SizeMismatch) {
  const auto g = make_grid(8);
  std::vector<double> v(5, 1.0);
  EXPECT_THROW(nodal_to_modal(v, g), Error);
  EXPECT_THROW(modal_to_nodal(ModalCoeffs{v}, g), Error);
}

TEST(Transforms, PolynomialExactness) {
  for (long n : {4L, 17L, 64L, 256L}) {
    const auto g = make_grid(n);
    for (std::size_t m = 0; m <= g.order(); m += std::max<std::size_t>(1, g.order() / 7)) {
      std::vector<double> v(g.size());
      for (std::size_t j = 0; j < g.size(); ++j) v[j] = cheb_t(m, g.nodes()[j]);
      const auto a = nodal_to_modal(v, g);
      for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(a[k], k == m ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Transforms, AliasingIdentity) {
  for (std::size_t n = 2; n <= 512; n *= 2) {
    // cos(m j pi / N) with m j reduced mod 2N so the argument is exact.
    const auto cos_mode = [n](std::size_t m, std::size_t j) {
      return std::cos(std::numbers::pi * double((m * j) % (2 * n)) / double(n));
    };
    for (std::size_t j = 0; j <= n; ++j) EXPECT_NEAR(cos_mode(n + 1, j), cos_mode(n - 1, j), 1e-14);
  }
}

TEST(Transforms, TransposesPassDotTest) {
  for (std::size_t n : {2u, 9u, 40u, 513u}) {
    const auto x = random_vector(n + 1, 21);
    const auto y = random_vector(n + 1, 22);
    const auto dot = [](const std::vector<double>& p, const std::vector<double>& q) {
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * q[i];
      return s;
    };
    std::vector<double> fx(n + 1), fty(n + 1);
    modal_to_nodal(x, fx);
    modal_to_nodal_transpose(y, fty);
    EXPECT_NEAR(dot(fx, y), dot(x, fty), 1e-12 * (n + 1));
    nodal_to_modal(x, fx);
    nodal_to_modal_transpose(y, fty);
    EXPECT_NEAR(dot(fx, y), dot(x, fty), 1e-12 * (n + 1));
    antiderivative_coeffs(x, fx);
    antiderivative_coeffs_transpose(y, fty);
    EXPECT_NEAR(dot(fx, y), dot(x, fty), 1e-12 * (n + 1));
  }
}

TEST(Antiderivative, ClosedFormCases) {
  ModalCoeffs a{std::vector<double>(6, 0.0)};
  a[0] = 1.0;
  auto c = antiderivative_coeffs(a);
  EXPECT_DOUBLE_EQ(c[0], 1.0);
  EXPECT_DOUBLE_EQ(c[1], 1.0);
  for (std::size_t k = 2; k < 6; ++k) EXPECT_EQ(c[k], 0.0);

  a[0] = 0.0;
  a[1] = 1.0;
  c = antiderivative_coeffs(a);
  EXPECT_DOUBLE_EQ(c[0], -0.25);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_DOUBLE_EQ(c[2], 0.25);
  for (std::size_t k = 3; k < 6; ++k) EXPECT_EQ(c[k], 0.0);
}

TEST(Antiderivative, RequiresOrderTwo) {
  ModalCoeffs a{{1.0, 2.0}};
  try {
    antiderivative_coeffs(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::order_too_small);
  }
}

TEST(Antiderivative, MatchesAdaptiveQuadrature) {
  using boost::math::quadrature::gauss_kronrod;
  const auto g = make_grid(12);
  ModalCoeffs a{random_vector(g.size(), 77)};
  const auto interpolant = [&](double t) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * cheb_t(k, t);
    return s;
  };
  const auto vals = modal_to_nodal(antiderivative_coeffs(a), g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double want = i == 0 ? 0.0 : gauss_kronrod<double, 31>::integrate(interpolant, -1.0, g.nodes()[i], 15, 1e-14);
    EXPECT_NEAR(vals[i], want, 1e-13) << "i=" << i;
  }
}

TEST(Antiderivative, FoldMattersAtNodes) {
  const auto g = make_grid(12);
  ModalCoeffs a{std::vector<double>(g.size(), 0.0)};
  a[g.order()] = 1.0;
  const auto with = modal_to_nodal(antiderivative_coeffs(a, AliasFold::on), g);
  const auto without = modal_to_nodal(antiderivative_coeffs(a, AliasFold::off), g);
  EXPECT_GT(max_abs_diff(with, without), 1e-3);
}

TEST(Clenshaw, Examples) {
  EXPECT_NEAR(clenshaw_eval(ModalCoeffs{{0, 0, 1}}, 0.5), -0.5, 1e-16);
  for (double t : {-1.0, -0.3, 0.0, 0.9, 1.0}) EXPECT_DOUBLE_EQ(clenshaw_eval(ModalCoeffs{{3, 0, 0}}, t), 3.0);
  EXPECT_THROW(clenshaw_eval(ModalCoeffs{{1, 2}}, 1.5), Error);
}

TEST(Clenshaw, AgreesWithTrigAndNodal) {
  const auto g = make_grid(32);
  ModalCoeffs a{random_vector(g.size(), 5)};
  const auto v = modal_to_nodal(a, g);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(clenshaw_eval(a, g.nodes()[j]), v[j], 1e-13);
  for (double t : {-0.99, -0.5, 0.123, 0.77}) {
    double want = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) want += a[k] * cheb_t(k, t);
    EXPECT_NEAR(clenshaw_eval(a, t), want, 1e-13);
  }
}
