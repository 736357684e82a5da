#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "birkhoff/krylov/birkhoff_system.hpp"
#include "birkhoff/krylov/gmres.hpp"
#include "birkhoff/ops/dense.hpp"
#include "birkhoff/spectral/grid.hpp"
#include "dense_system.hpp"
#include "test_support.hpp"

using namespace birkhoff;
using namespace birkhoff::krylov;
using birkhoff::testing::assemble_system;
using birkhoff::testing::max_abs;
using birkhoff::testing::max_abs_diff;
using birkhoff::testing::random_vector;

namespace {

using Vec = std::vector<double>;

Vec dense_apply(const Eigen::MatrixXd& m, const Vec& v) {
  const Eigen::VectorXd y = m * Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  return {y.data(), y.data() + y.size()};
}

Vec dense_solve(const Eigen::MatrixXd& m, const Vec& v) {
  const Eigen::VectorXd y =
      m.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  return {y.data(), y.data() + y.size()};
}

NodeJacobian random_jacobian(std::size_t nodes, std::size_t channels, std::uint64_t seed, double scale) {
  NodeJacobian j(nodes, channels);
  const auto v = random_vector(nodes * channels * channels, seed, -scale, scale);
  for (std::size_t k = 0; k < nodes; ++k) {
    for (std::size_t r = 0; r < channels; ++r) {
      for (std::size_t q = 0; q < channels; ++q) j(k, r, q) = v[(k * channels + r) * channels + q];
    }
  }
  return j;
}

double rel_err(const Vec& got, const Vec& want) { return max_abs_diff(got, want) / max_abs(want); }

double residual_norm(const Eigen::MatrixXd& a, const Vec& x, const Vec& b) {
  const auto ax = dense_apply(a, x);
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) s += (b[i] - ax[i]) * (b[i] - ax[i]);
  return std::sqrt(s);
}

double norm2(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(FastAx, ZeroJacobianIsIdentity) {
  const auto grid = spectral::make_shared_grid(20);
  const NodeJacobian jac(21, 3);
  const auto chi = random_vector(63, 1);
  EXPECT_EQ(fast_ax(ops::BirkhoffOperator(grid), jac, chi), chi);
}

TEST(FastAx, ScalarProbesMatchDense) {
  const auto grid = spectral::make_shared_grid(16);
  const Vec ones(17, 1.0);
  const auto jac = NodeJacobian::diagonal(ones);
  const auto a = assemble_system(ops::dense_birkhoff(*grid), jac);
  const ops::BirkhoffOperator op(grid);
  for (std::size_t j = 0; j < 17; ++j) {
    Vec e(17, 0.0);
    e[j] = 1.0;
    EXPECT_LE(max_abs_diff(fast_ax(op, jac, e), dense_apply(a, e)), 1e-13);
  }
}

TEST(FastAx, TwoChannelsMatchKroneckerAssembly) {
  const auto grid = spectral::make_shared_grid(32);
  const auto jac = random_jacobian(33, 2, 5, 2.0);
  const auto a = assemble_system(ops::dense_birkhoff(*grid), jac);
  const auto chi = random_vector(66, 6);
  const ops::BirkhoffOperator op(grid);
  EXPECT_LE(max_abs_diff(fast_ax(op, jac, chi), dense_apply(a, chi)), 1e-12);
  const auto y = random_vector(66, 7);
  Vec t(66);
  fast_ax_transpose(op, jac, y, t);
  EXPECT_LE(max_abs_diff(t, dense_apply(a.transpose(), y)), 1e-12);
}

TEST(FastAx, Linearity) {
  const auto grid = spectral::make_shared_grid(100);
  const auto jac = random_jacobian(101, 3, 9, 1.0);
  const ops::BirkhoffOperator op(grid);
  const auto u = random_vector(303, 1);
  const auto w = random_vector(303, 2);
  Vec mix(303);
  for (std::size_t i = 0; i < 303; ++i) mix[i] = 0.3 * u[i] + 1.7 * w[i];
  const auto fu = fast_ax(op, jac, u);
  const auto fw = fast_ax(op, jac, w);
  const auto fm = fast_ax(op, jac, mix);
  for (std::size_t i = 0; i < 303; ++i) EXPECT_NEAR(fm[i], 0.3 * fu[i] + 1.7 * fw[i], 1e-11);
}

TEST(FastAx, Errors) {
  const auto grid = spectral::make_shared_grid(8);
  const ops::BirkhoffOperator op(grid);
  EXPECT_THROW((void)fast_ax(op, NodeJacobian(9, 2), Vec(9, 0.0)), Error);
  EXPECT_THROW((void)fast_ax(op, NodeJacobian(10, 1), Vec(10, 0.0)), Error);
}

TEST(FastPinv, ZeroJacobianIsIdentity) {
  const auto grid = spectral::make_shared_grid(12);
  const auto y = random_vector(26, 3);
  EXPECT_EQ(fast_pinv(ops::TriangularSurrogate(grid), NodeJacobian(13, 2), y), y);
}

TEST(FastPinv, ScalarConstantMatchesDenseSolve) {
  const auto grid = spectral::make_shared_grid(16);
  for (double c : {-3.0, 0.5, 1.0, 2.0}) {
    const auto jac = NodeJacobian::diagonal(Vec(17, c));
    const auto p = assemble_system(ops::dense_surrogate(*grid), jac);
    const auto y = random_vector(17, 11);
    EXPECT_LE(rel_err(fast_pinv(ops::TriangularSurrogate(grid), jac, y), dense_solve(p, y)), 1e-13);
  }
}

TEST(FastPinv, RoundTrip) {
  for (std::size_t ch : {1UL, 4UL}) {
    const auto grid = spectral::make_shared_grid(64);
    const auto jac = random_jacobian(65, ch, 21 + ch, 1.5);
    const ops::TriangularSurrogate s(grid);
    const BirkhoffPreconditioner p(s, jac);
    const auto y = random_vector(65 * ch, 4);
    Vec py(y.size()), back(y.size());
    p.multiply(y, py);
    p.apply(py, back);
    EXPECT_LE(rel_err(back, y), 1e-12);
    p.apply(y, back);
    p.multiply(back, py);
    EXPECT_LE(rel_err(py, y), 1e-12);
  }
}

TEST(FastPinv, BlockTransposeMatchesDense) {
  const auto grid = spectral::make_shared_grid(24);
  const auto jac = random_jacobian(25, 3, 8, 2.0);
  const auto p = assemble_system(ops::dense_surrogate(*grid), jac);
  const BirkhoffPreconditioner pre(ops::TriangularSurrogate(grid), jac);
  const auto y = random_vector(75, 12);
  Vec out(75);
  pre.apply(y, out);
  EXPECT_LE(rel_err(out, dense_solve(p, y)), 1e-12);
  pre.apply_transpose(y, out);
  EXPECT_LE(rel_err(out, dense_solve(p.transpose(), y)), 1e-12);
}

TEST(FastPinv, SingularPivotNamesNode) {
  const auto grid = spectral::make_shared_grid(10);
  Vec d(11, 0.3);
  d[5] = 2.0 / grid->cc_weights()[5];
  try {
    (void)fast_pinv(ops::TriangularSurrogate(grid), NodeJacobian::diagonal(d), Vec(11, 1.0));
    FAIL();
  } catch (const SingularPivotError& e) {
    EXPECT_EQ(e.node(), 5U);
    EXPECT_EQ(e.code(), Errc::singular_preconditioner);
  }
  NodeJacobian block(11, 2);
  block(7, 0, 0) = 2.0 / grid->cc_weights()[7];
  try {
    BirkhoffPreconditioner bad(ops::TriangularSurrogate(grid), block);
    FAIL();
  } catch (const SingularPivotError& e) {
    EXPECT_EQ(e.node(), 7U);
  }
}

TEST(Gmres, IdentityOneIteration) {
  const auto b = random_vector(30, 1);
  const auto r = gmres(IdentityMap{30}, b, KrylovConfig{});
  EXPECT_TRUE(r.stats.converged);
  EXPECT_EQ(r.stats.iterations, 1U);
  EXPECT_LE(max_abs_diff(r.x, b), 1e-15);
}

TEST(Gmres, DiagonalSystem) {
  const FunctionMap diag(8, [](std::span<const double> in, std::span<double> out) {
    for (std::size_t i = 0; i < 8; ++i) out[i] = static_cast<double>(i + 1) * in[i];
  });
  const Vec ones(8, 1.0);
  const auto r = gmres(diag, ones, KrylovConfig{});
  ASSERT_TRUE(r.stats.converged);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(r.x[i], 1.0 / static_cast<double>(i + 1), 1e-9);
  EXPECT_LE(r.stats.iterations, 8U);
}

TEST(Gmres, NonConvergenceReturnsBestIterate) {
  const auto grid = spectral::make_shared_grid(64);
  const auto jac = NodeJacobian::diagonal(random_vector(65, 2, -40.0, 40.0));
  const SystemOperator a(ops::BirkhoffOperator(grid), jac);
  const auto b = random_vector(65, 3);
  KrylovConfig cfg;
  cfg.max_iter = 3;
  const auto r = gmres(a, b, cfg);
  EXPECT_FALSE(r.stats.converged);
  EXPECT_EQ(r.stats.iterations, 3U);
  EXPECT_LT(r.stats.final_residual, norm2(b));
}

TEST(Gmres, NanBreaksDown) {
  const FunctionMap bad(4, [](std::span<const double> in, std::span<double> out) {
    for (std::size_t i = 0; i < 4; ++i) out[i] = in[i];
    out[2] = std::numeric_limits<double>::quiet_NaN();
  });
  try {
    (void)gmres(bad, Vec(4, 1.0), KrylovConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::numeric_breakdown);
  }
}

TEST(Gmres, ConfigValidation) {
  KrylovConfig cfg;
  cfg.tol = 0.0;
  EXPECT_THROW((void)gmres(IdentityMap{3}, Vec(3, 1.0), cfg), Error);
  cfg.tol = 1e-8;
  cfg.max_iter = 0;
  EXPECT_THROW((void)gmres(IdentityMap{3}, Vec(3, 1.0), cfg), Error);
}

TEST(Gmres, RestartDefaults) {
  EXPECT_EQ(restart_length(KrylovConfig{}, 4095), 500U);
  EXPECT_EQ(restart_length(KrylovConfig{}, 4096), 60U);
  KrylovConfig cfg;
  cfg.restart = 0;
  EXPECT_EQ(restart_length(cfg, 1 << 20), 500U);
}

TEST(Gmres, RestartedStillConverges) {
  const auto grid = spectral::make_shared_grid(128);
  const auto jac = NodeJacobian::diagonal(random_vector(129, 4, -5.0, 5.0));
  const SystemOperator a(ops::BirkhoffOperator(grid), jac);
  const auto b = random_vector(129, 5);
  KrylovConfig cfg;
  cfg.restart = 4;
  const auto r = gmres(a, b, cfg);
  EXPECT_TRUE(r.stats.converged);
  const auto dense = assemble_system(ops::dense_birkhoff(*grid), jac);
  EXPECT_LE(residual_norm(dense, r.x, b), 1e-10 * norm2(b));
}

TEST(Gmres, WarmStartAtSolutionExitsEarly) {
  const FunctionMap twice(5, [](std::span<const double> in, std::span<double> out) {
    for (std::size_t i = 0; i < 5; ++i) out[i] = 2.0 * in[i];
  });
  const Vec b(5, 2.0), x0(5, 1.0);
  const auto r = gmres(twice, b, KrylovConfig{}, x0);
  EXPECT_TRUE(r.stats.converged);
  EXPECT_EQ(r.stats.iterations, 0U);
  EXPECT_EQ(r.stats.matvec_count, 1U);
}

TEST(Gmres, PreconditionerExactOnItsOwnMatrix) {
  const auto grid = spectral::make_shared_grid(200);
  const auto jac = random_jacobian(201, 2, 31, 3.0);
  const BirkhoffPreconditioner p(ops::TriangularSurrogate(grid), jac);
  const FunctionMap pmap(p.dim(), [&](std::span<const double> in, std::span<double> out) { p.multiply(in, out); });
  const auto b = random_vector(p.dim(), 6);
  const auto r = gmres(pmap, b, PreconditionerMap(p), KrylovConfig{});
  EXPECT_TRUE(r.stats.converged);
  EXPECT_LE(r.stats.iterations, 2U);
}

TEST(FastLinSol, ZeroJacobian) {
  const auto grid = spectral::make_shared_grid(50);
  const auto b = random_vector(51, 7);
  const auto r = fast_lin_sol(ops::BirkhoffOperator(grid), NodeJacobian(51, 1), b, KrylovConfig{});
  EXPECT_TRUE(r.stats.converged);
  EXPECT_LE(r.stats.iterations, 1U);
  EXPECT_LE(max_abs_diff(r.x, b), 1e-14);
}

TEST(FastLinSol, MatchesDenseLu) {
  KrylovConfig cfg;
  for (long n : {32L, 128L, 512L}) {
    const auto grid = spectral::make_shared_grid(n);
    const auto dense_b = ops::dense_birkhoff(*grid);
    const ops::BirkhoffOperator op(grid);
    for (double scale : {1.0, 50.0}) {
      const auto jac = NodeJacobian::diagonal(random_vector(grid->size(), n + 1, -scale, scale));
      const auto b = random_vector(grid->size(), n + 2);
      const auto r = fast_lin_sol(op, jac, b, cfg);
      ASSERT_TRUE(r.stats.converged) << n << " " << scale;
      EXPECT_LE(rel_err(r.x, dense_solve(assemble_system(dense_b, jac), b)), 1e-8) << n << " " << scale;
    }
  }
}

TEST(FastLinSol, BlockSystemAndTranspose) {
  const auto grid = spectral::make_shared_grid(48);
  const auto jac = random_jacobian(49, 3, 77, 2.0);
  const auto a = assemble_system(ops::dense_birkhoff(*grid), jac);
  const ops::BirkhoffOperator op(grid);
  const auto b = random_vector(147, 78);
  const auto r = fast_lin_sol(op, jac, b, KrylovConfig{});
  ASSERT_TRUE(r.stats.converged);
  EXPECT_LE(residual_norm(a, r.x, b), 1e-10 * norm2(b));
  EXPECT_LE(rel_err(r.x, dense_solve(a, b)), 1e-8);
  const auto rt = fast_lin_sol_transpose(op, jac, b, KrylovConfig{});
  ASSERT_TRUE(rt.stats.converged);
  EXPECT_LE(rel_err(rt.x, dense_solve(a.transpose(), b)), 1e-8);
}

TEST(FastLinSol, TrueResidualReported) {
  const auto grid = spectral::make_shared_grid(256);
  const auto jac = random_jacobian(257, 2, 90, 10.0);
  const auto a = assemble_system(ops::dense_birkhoff(*grid), jac);
  const auto b = random_vector(514, 91);
  KrylovConfig cfg;
  cfg.tol = 1e-9;
  const auto r = fast_lin_sol(ops::BirkhoffOperator(grid), jac, b, cfg);
  ASSERT_TRUE(r.stats.converged);
  const double res = residual_norm(a, r.x, b);
  EXPECT_LE(res, cfg.tol * norm2(b));
  EXPECT_NEAR(res, r.stats.final_residual, 1e-12 * norm2(b));
}
