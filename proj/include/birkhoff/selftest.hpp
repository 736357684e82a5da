#pragma once

// Oracle-equivalence checks of the fast kernels against dense constructions,
// at seeded random inputs. Used by the command-line `selftest`.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "birkhoff/krylov/birkhoff_system.hpp"
#include "birkhoff/krylov/gmres.hpp"
#include "birkhoff/ops/birkhoff_operator.hpp"
#include "birkhoff/ops/dense.hpp"
#include "birkhoff/spectral/grid.hpp"
#include "birkhoff/spectral/transforms.hpp"

namespace birkhoff::selftest {

struct Options {
  std::uint64_t seed = 1;
  std::size_t max_order = 1024;
  // Fault injection for checking that the suite notices a broken kernel:
  // drops the aliasing term from the fast B^a V.
  bool disable_alias_fold = false;
};

struct GroupResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  double worst = 0.0;      // largest relative error seen
  double tolerance = 0.0;
};

namespace impl {

using Vec = std::vector<double>;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Vec vector(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Vec v(n);
    for (double& x : v) x = d(gen_);
    return v;
  }
  krylov::NodeJacobian jacobian(std::size_t nodes, std::size_t channels, double scale) {
    krylov::NodeJacobian j(nodes, channels);
    const Vec v = vector(nodes * channels * channels, -scale, scale);
    for (std::size_t k = 0; k < nodes; ++k) {
      for (std::size_t r = 0; r < channels; ++r) {
        for (std::size_t q = 0; q < channels; ++q) j(k, r, q) = v[(k * channels + r) * channels + q];
      }
    }
    return j;
  }

 private:
  std::mt19937_64 gen_;
};

inline Eigen::Map<const Eigen::VectorXd> view(const Vec& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

inline double rel_err(const Vec& got, const Eigen::VectorXd& want) {
  const double scale = std::max(want.lpNorm<Eigen::Infinity>(), 1e-300);
  return (view(got) - want).lpNorm<Eigen::Infinity>() / scale;
}

inline std::vector<std::size_t> orders(const Options& o, std::initializer_list<std::size_t> wanted) {
  std::vector<std::size_t> out;
  for (std::size_t n : wanted) {
    if (n <= o.max_order) out.push_back(n);
  }
  if (out.empty()) out.push_back(std::max<std::size_t>(o.max_order, 2));
  return out;
}

inline void record(GroupResult& g, double err) {
  ++g.cases;
  if (!(err <= g.tolerance)) g.passed = false;
  g.worst = std::isfinite(err) ? std::max(g.worst, err) : err;
}

// Chebyshev synthesis straight from T_k(tau) = cos(k arccos tau).
inline Eigen::MatrixXd chebyshev_matrix(const spectral::ChebGrid& grid) {
  const auto tau = grid.nodes();
  const auto n1 = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd t(n1, n1);
  for (Eigen::Index i = 0; i < n1; ++i) {
    const double th = std::acos(std::clamp(tau[static_cast<std::size_t>(i)], -1.0, 1.0));
    for (Eigen::Index k = 0; k < n1; ++k) t(i, k) = std::cos(static_cast<double>(k) * th);
  }
  return t;
}

}  // namespace impl

inline GroupResult check_transforms(const Options& o) {
  GroupResult g{"transforms", true, 0, 0.0, 1e-11};
  impl::Rng rng(o.seed ^ 0x7472616eULL);
  for (std::size_t n : impl::orders(o, {8, 33, 128, 1024})) {
    const auto grid = spectral::make_grid(static_cast<long>(n));
    const Eigen::MatrixXd t = impl::chebyshev_matrix(grid);
    for (int rep = 0; rep < 3; ++rep) {
      const impl::Vec a = rng.vector(n + 1);
      impl::Vec v(n + 1), back(n + 1);
      spectral::modal_to_nodal(a, v);
      impl::record(g, impl::rel_err(v, t * impl::view(a)));
      spectral::nodal_to_modal(v, back);
      impl::record(g, impl::rel_err(back, impl::view(a)));
    }
  }
  return g;
}

inline GroupResult check_fast_bv(const Options& o) {
  GroupResult g{"fast_bv", true, 0, 0.0, 1e-9};
  impl::Rng rng(o.seed ^ 0x66626bULL);
  const auto fold = o.disable_alias_fold ? spectral::AliasFold::off : spectral::AliasFold::on;
  for (std::size_t n : impl::orders(o, {8, 32, 128, 512, 1024})) {
    const auto grid = spectral::make_shared_grid(static_cast<long>(n));
    const ops::BirkhoffOperator op(grid);
    const Eigen::MatrixXd b = ops::dense_birkhoff(*grid);
    for (int rep = 0; rep < 4; ++rep) {
      const impl::Vec v = rng.vector(n + 1);
      impl::Vec out(n + 1);
      ops::fast_bv(op, v, out, fold);
      const double scale = impl::view(v).lpNorm<Eigen::Infinity>();
      impl::record(g, (impl::view(out) - b * impl::view(v)).lpNorm<Eigen::Infinity>() / scale);
    }
  }
  return g;
}

inline GroupResult check_fast_bcc_v(const Options& o) {
  GroupResult g{"fast_bcc_v", true, 0, 0.0, 1e-13};
  impl::Rng rng(o.seed ^ 0x626363ULL);
  for (std::size_t n : impl::orders(o, {8, 64, 512, 1024})) {
    const auto grid = spectral::make_shared_grid(static_cast<long>(n));
    const ops::TriangularSurrogate s(grid);
    const Eigen::MatrixXd m = ops::dense_surrogate(*grid);
    for (int rep = 0; rep < 3; ++rep) {
      const impl::Vec v = rng.vector(n + 1);
      impl::Vec out(n + 1), outt(n + 1);
      ops::fast_bcc_v(s, v, out);
      impl::record(g, impl::rel_err(out, m * impl::view(v)));
      ops::fast_bcc_v_transpose(s, v, outt);
      impl::record(g, impl::rel_err(outt, m.transpose() * impl::view(v)));
    }
  }
  return g;
}

inline GroupResult check_fast_pinv(const Options& o) {
  GroupResult g{"fast_pinv", true, 0, 0.0, 1e-11};
  impl::Rng rng(o.seed ^ 0x70696eULL);
  for (std::size_t n : impl::orders(o, {16, 128, 512})) {
    const auto grid = spectral::make_shared_grid(static_cast<long>(n));
    const ops::TriangularSurrogate s(grid);
    const Eigen::MatrixXd m = ops::dense_surrogate(*grid);
    for (std::size_t ch : {std::size_t{1}, std::size_t{3}}) {
      const auto jac = rng.jacobian(n + 1, ch, 2.0);
      const Eigen::MatrixXd p = ops::dense_system(m, jac);
      const impl::Vec y = rng.vector((n + 1) * ch);
      const Eigen::VectorXd want = p.partialPivLu().solve(impl::view(y));
      impl::record(g, impl::rel_err(krylov::fast_pinv(s, jac, y), want));
    }
  }
  return g;
}

inline GroupResult check_gmres(const Options& o) {
  GroupResult g{"gmres", true, 0, 0.0, 1e-8};
  impl::Rng rng(o.seed ^ 0x676d72ULL);
  for (std::size_t n : impl::orders(o, {16, 128, 512})) {
    const auto grid = spectral::make_shared_grid(static_cast<long>(n));
    const ops::BirkhoffOperator op(grid);
    const Eigen::MatrixXd b = ops::dense_birkhoff(*grid);
    for (std::size_t ch : {std::size_t{1}, std::size_t{2}}) {
      const auto jac = rng.jacobian(n + 1, ch, 3.0);
      const Eigen::MatrixXd a = ops::dense_system(b, jac);
      const impl::Vec rhs = rng.vector((n + 1) * ch);
      const Eigen::VectorXd want = a.partialPivLu().solve(impl::view(rhs));
      const auto res = krylov::fast_lin_sol(op, jac, rhs, {1e-12, 500, {}});
      impl::record(g, res.stats.converged ? impl::rel_err(res.x, want) : 1.0);
    }
  }
  return g;
}

/// Runs every group; a thrown error counts as a failure of that group.
inline std::vector<GroupResult> run(const Options& o = {}) {
  using Check = GroupResult (*)(const Options&);
  const std::pair<const char*, Check> groups[] = {{"transforms", check_transforms},
                                                  {"fast_bv", check_fast_bv},
                                                  {"fast_bcc_v", check_fast_bcc_v},
                                                  {"fast_pinv", check_fast_pinv},
                                                  {"gmres", check_gmres}};
  std::vector<GroupResult> out;
  for (const auto& [name, check] : groups) {
    try {
      out.push_back(check(o));
    } catch (const std::exception&) {
      GroupResult g;
      g.name = name;
      g.passed = false;
      out.push_back(g);
    }
  }
  return out;
}

}  // namespace birkhoff::selftest
