#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace birkhoff {

enum class Errc {
  invalid_order,
  invalid_size,
  size_mismatch,
  order_too_small,
  domain,
  unsupported_fast_path,
  size_guard,
  singular_preconditioner,
  numeric_breakdown,
  definition_rejected,
  newton_diverged,
  sqp_stalled,
  unknown_problem,
  invalid_config,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_order: return "invalid order";
    case Errc::invalid_size: return "invalid size";
    case Errc::size_mismatch: return "size mismatch";
    case Errc::order_too_small: return "order too small";
    case Errc::domain: return "domain error";
    case Errc::unsupported_fast_path: return "unsupported fast path";
    case Errc::size_guard: return "size guard";
    case Errc::singular_preconditioner: return "singular preconditioner";
    case Errc::numeric_breakdown: return "numeric breakdown";
    case Errc::definition_rejected: return "definition rejected";
    case Errc::newton_diverged: return "newton diverged";
    case Errc::sqp_stalled: return "sqp stalled";
    case Errc::unknown_problem: return "unknown problem";
    case Errc::invalid_config: return "invalid configuration";
  }
  return "unknown";
}

/// Base exception for every failure raised by the library. `code()` lets
/// callers branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class SingularPivotError : public Error {
 public:
  explicit SingularPivotError(std::size_t node)
      : Error(Errc::singular_preconditioner,
              "pivot block at node " + std::to_string(node) + " is singular"),
        node_(node) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

namespace detail {

inline void require(bool cond, Errc code, const char* what) {
  if (!cond) throw Error(code, what);
}

inline void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw Error(Errc::size_mismatch, std::string(what) + " (got " + std::to_string(got) +
                                         ", expected " + std::to_string(want) + ")");
  }
}

}  // namespace detail
}  // namespace birkhoff
