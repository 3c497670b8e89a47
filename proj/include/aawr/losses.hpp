#pragma once

#include <vector>

#include <Eigen/Core>

#include "aawr/features.hpp"
#include "aawr/nn/mlp.hpp"
#include "aawr/transition.hpp"

namespace aawr {

/// A critic network tagged with the input it expects.
struct Critic {
  nn::Mlp<double> net;
  CriticMode mode = CriticMode::Privileged;
};

/// Encoded minibatch. `critic_input` rows are z (+ o^p in privileged mode).
struct Batch {
  CriticMode mode = CriticMode::Privileged;
  Eigen::MatrixXd policy_input;
  Eigen::MatrixXd critic_input;
  Eigen::MatrixXd next_critic_input;
  std::vector<int> actions;
  Eigen::VectorXd rewards;
  Eigen::VectorXd done;  ///< 1 where the transition ends the episode

  Eigen::Index size() const { return static_cast<Eigen::Index>(actions.size()); }
};

struct LossOutput {
  double loss = 0.0;
  nn::Gradients<double> grads;
};

struct WeightStats {
  double mean = 0.0;
  double max = 0.0;
  double clipped_fraction = 0.0;
};

struct PolicyLossOutput {
  double loss = 0.0;
  nn::Gradients<double> grads;
  WeightStats weights;
};

/// mean over the batch of (r + gamma (1 - done) V_target(next) - Q(x, a))^2.
LossOutput q_td_loss(const Batch& batch, const Critic& q, const Critic& v_target, double gamma);

/// mean of |tau - 1{Q_target - V < 0}| (Q_target(x, a) - V(x))^2. tau must lie in (0, 1).
LossOutput v_expectile_loss(const Batch& batch, const Critic& v, const Critic& q_target, double tau);

/// min(exp(A / beta), clip), elementwise.
Eigen::VectorXd awr_weights(const Eigen::VectorXd& advantages, double beta, double clip);

/// -mean(w * log pi(a | z)) with w = awr_weights(advantages). Weights carry no gradient.
PolicyLossOutput weighted_policy_loss(const Batch& batch, const nn::Mlp<double>& policy,
                                      const Eigen::VectorXd& advantages, double beta, double clip);

/// Advantage Q(s, z, a) - V(s, z) from privileged critics.
PolicyLossOutput aawr_policy_loss(const Batch& batch, const nn::Mlp<double>& policy, const Critic& q,
                                  const Critic& v, double beta, double clip);

/// Advantage Q(z, a) - V(z) from symmetric critics.
PolicyLossOutput sawr_policy_loss(const Batch& batch, const nn::Mlp<double>& policy, const Critic& q,
                                  const Critic& v, double beta, double clip);

/// -mean log pi(a | z).
LossOutput bc_loss(const Batch& batch, const nn::Mlp<double>& policy);

/// Discounted reward-to-go for every step. Throws if the episode never reaches done.
std::vector<double> discounted_returns(const Episode& episode, double gamma);

/// mean (G - V(x))^2 for rows of `inputs`.
LossOutput mc_value_loss(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& returns, const Critic& v);

/// Q(x, a) for the batch actions.
Eigen::VectorXd gather_actions(const Eigen::MatrixXd& values, const std::vector<int>& actions);

}  // namespace aawr
