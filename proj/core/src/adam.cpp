#include "dgdn/adam.hpp"

#include <cmath>
#include <string>

namespace dgdn {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->size(), 0.0);
      state.v[i].assign(params[i]->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: parameter count changed between steps");
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (grads[i].shape() != p.shape()) {
      throw ShapeError("adam_step: grad shape mismatch for parameter " + std::to_string(i));
    }
    if (state.m[i].size() != static_cast<std::size_t>(p.size())) {
      throw ShapeError("adam_step: moment shape mismatch for parameter " + std::to_string(i));
    }
    auto pv = p.mutable_values();
    auto gv = grads[i].values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gv[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gv[j] * gv[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      pv[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace dgdn
