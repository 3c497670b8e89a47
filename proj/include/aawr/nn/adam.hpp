#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "aawr/nn/mlp.hpp"

namespace aawr::nn {

/// Raised when training would apply a NaN or infinite gradient.
struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct AdamState {
  Gradients<Scalar> m;
  Gradients<Scalar> v;
  std::int64_t step = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);

  static AdamState for_params(const Mlp<Scalar>& net) {
    AdamState s;
    s.m = zeros_like(net);
    s.v = zeros_like(net);
    return s;
  }
};

/// One bias-corrected Adam update in place.
template <typename Scalar>
void adam_step(Mlp<Scalar>& net, const Gradients<Scalar>& grads, AdamState<Scalar>& state, Scalar lr) {
  auto& layers = net.mutable_layers();
  if (grads.size() != layers.size() || state.m.size() != layers.size() || state.v.size() != layers.size())
    throw ShapeError("adam: gradient/state shape mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads[l].weight.rows() != layers[l].weight.rows() || grads[l].weight.cols() != layers[l].weight.cols() ||
        grads[l].bias.size() != layers[l].bias.size())
      throw ShapeError("adam: gradient shape mismatch");
    if (!grads[l].weight.allFinite() || !grads[l].bias.allFinite())
      throw NonFiniteGradient("non-finite gradient in layer " + std::to_string(l));
  }
  ++state.step;
  const Scalar c1 = Scalar(1) - std::pow(state.beta1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(state.beta2, static_cast<Scalar>(state.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = state.beta1 * m + (Scalar(1) - state.beta1) * g;
    v = state.beta2 * v + (Scalar(1) - state.beta2) * g.cwiseAbs2();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads[l].weight, state.m[l].weight, state.v[l].weight);
    update(layers[l].bias, grads[l].bias, state.m[l].bias, state.v[l].bias);
  }
}

}  // namespace aawr::nn
