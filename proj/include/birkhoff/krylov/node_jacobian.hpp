#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "birkhoff/error.hpp"

namespace birkhoff::krylov {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Block-diagonal d f / d X: one dense channels x channels block per node.
/// Stored flat, row-major within each block; never expanded to a full matrix.
///
/// Grid functions with several channels are laid out channel-major throughout
/// the library: value of channel c at node i lives at [c * nodes + i].
class NodeJacobian {
 public:
  NodeJacobian() = default;
  NodeJacobian(std::size_t nodes, std::size_t channels)
      : nodes_(nodes), channels_(channels), data_(nodes * channels * channels, 0.0) {
    detail::require(channels >= 1, Errc::invalid_size, "NodeJacobian needs at least one channel");
  }

  /// Scalar system with the given per-node derivative.
  static NodeJacobian diagonal(std::span<const double> d) {
    NodeJacobian j(d.size(), 1);
    std::copy(d.begin(), d.end(), j.data_.begin());
    return j;
  }

  std::size_t nodes() const noexcept { return nodes_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t dim() const noexcept { return nodes_ * channels_; }

  double* block_data(std::size_t node) { return data_.data() + node * channels_ * channels_; }
  const double* block_data(std::size_t node) const { return data_.data() + node * channels_ * channels_; }

  Eigen::Map<RowMajorMatrix> block(std::size_t node) {
    const auto c = static_cast<Eigen::Index>(channels_);
    return {block_data(node), c, c};
  }
  Eigen::Map<const RowMajorMatrix> block(std::size_t node) const {
    const auto c = static_cast<Eigen::Index>(channels_);
    return {block_data(node), c, c};
  }

  double& operator()(std::size_t node, std::size_t row, std::size_t col) {
    return data_[(node * channels_ + row) * channels_ + col];
  }
  double operator()(std::size_t node, std::size_t row, std::size_t col) const {
    return data_[(node * channels_ + row) * channels_ + col];
  }

  /// out = J x (or J^T x), channel-major. `out` must not alias `x`.
  void apply(std::span<const double> x, std::span<double> out, bool transpose = false) const {
    detail::require_size(x.size(), dim(), "NodeJacobian input");
    detail::require_size(out.size(), dim(), "NodeJacobian output");
    const std::size_t n = nodes_;
    const std::size_t c = channels_;
    if (c == 1) {
      for (std::size_t i = 0; i < n; ++i) out[i] = data_[i] * x[i];
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double* b = block_data(i);
      for (std::size_t r = 0; r < c; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
          acc += (transpose ? b[k * c + r] : b[r * c + k]) * x[k * n + i];
        }
        out[r * n + i] = acc;
      }
    }
  }

 private:
  std::size_t nodes_ = 0;
  std::size_t channels_ = 1;
  std::vector<double> data_;
};

}  // namespace birkhoff::krylov
