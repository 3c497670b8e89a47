#pragma once

#include <cmath>
#include <functional>

#include <Eigen/Core>

#include "aawr/losses.hpp"
#include "aawr/nn/mlp.hpp"
#include "aawr/random.hpp"

namespace testing {

/// Central finite-difference check of analytic parameter gradients.
/// `loss` re-evaluates the scalar loss for the current parameters of `net`.
inline double max_relative_gradient_error(aawr::nn::Mlp<double>& net, const aawr::nn::Gradients<double>& analytic,
                                          const std::function<double()>& loss, double h = 1e-5) {
  double worst = 0.0;
  auto probe = [&](double& param, double g) {
    const double saved = param;
    param = saved + h;
    const double up = loss();
    param = saved - h;
    const double down = loss();
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(numeric - g) / std::max(1e-6, std::abs(numeric) + std::abs(g));
    worst = std::max(worst, err);
  };
  auto& layers = net.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (Eigen::Index i = 0; i < layers[l].weight.size(); ++i) probe(layers[l].weight.data()[i], analytic[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < layers[l].bias.size(); ++i) probe(layers[l].bias(i), analytic[l].bias(i));
  }
  return worst;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, aawr::Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * aawr::uniform01(rng) - 1.0);
  return m;
}

/// Random privileged or symmetric batch with the given widths.
inline aawr::Batch random_batch(int n, int policy_dim, int critic_dim, int num_actions, aawr::CriticMode mode,
                                aawr::Rng& rng) {
  aawr::Batch b;
  b.mode = mode;
  b.policy_input = random_matrix(n, policy_dim, rng);
  b.critic_input = random_matrix(n, critic_dim, rng);
  b.next_critic_input = random_matrix(n, critic_dim, rng);
  b.actions.resize(static_cast<std::size_t>(n));
  for (auto& a : b.actions) a = aawr::uniform_int(rng, num_actions);
  b.rewards = random_matrix(n, 1, rng);
  b.done.resize(n);
  for (int i = 0; i < n; ++i) b.done(i) = aawr::uniform01(rng) < 0.3 ? 1.0 : 0.0;
  return b;
}

}  // namespace testing
