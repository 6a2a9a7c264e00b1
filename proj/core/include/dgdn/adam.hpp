#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dgdn/tensor.hpp"

namespace dgdn {

/// Per-parameter Adam moment buffers plus hyperparameters.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update over a parameter list, in place.
/// Moment buffers are allocated on the first call; shapes must stay
/// consistent from step to step.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace dgdn
