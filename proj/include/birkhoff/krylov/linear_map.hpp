#pragma once

#include <concepts>
#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>

namespace birkhoff::krylov {

/// Anything that can apply a square linear operator without forming it.
template <class M>
concept LinearMap = requires(const M& m, std::span<const double> in, std::span<double> out) {
  { m.dim() } -> std::convertible_to<std::size_t>;
  m.apply(in, out);
};

struct IdentityMap {
  std::size_t n = 0;

  std::size_t dim() const noexcept { return n; }
  void apply(std::span<const double> in, std::span<double> out) const {
    if (in.data() != out.data()) std::copy(in.begin(), in.end(), out.begin());
  }
};

/// Type-erased map around a callable, for ad hoc operators in tests and tools.
class FunctionMap {
 public:
  using Fn = std::function<void(std::span<const double>, std::span<double>)>;

  FunctionMap(std::size_t n, Fn fn) : n_(n), fn_(std::move(fn)) {}

  std::size_t dim() const noexcept { return n_; }
  void apply(std::span<const double> in, std::span<double> out) const { fn_(in, out); }

 private:
  std::size_t n_;
  Fn fn_;
};

static_assert(LinearMap<IdentityMap>);
static_assert(LinearMap<FunctionMap>);

}  // namespace birkhoff::krylov
