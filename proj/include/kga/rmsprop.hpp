#pragma once

#include <span>
#include <vector>

#include "kga/tensor.hpp"

namespace kga {

/// Running mean of squared gradients, one buffer per parameter tensor.
struct RmsPropState {
  std::vector<Eigen::ArrayXd> mean_square;
  double decay = 0.9;
  double epsilon = 1e-8;

  /// Zero state mirroring `params`.
  static RmsPropState for_params(std::span<const TensorD* const> params);
};

/// s <- decay*s + (1-decay)*g^2;  p <- p - lr*g/(sqrt(s)+eps).
/// Nothing is modified when a gradient is non-finite.
void rmsprop_step(std::span<TensorD* const> params, std::span<const Eigen::ArrayXd> grads,
                  RmsPropState& state, double learning_rate);

}  // namespace kga
