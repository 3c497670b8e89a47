#include "aawr/losses.hpp"

#include <cmath>

#include "aawr/errors.hpp"

namespace aawr {

namespace {

void check_batch(const Batch& batch) {
  const auto n = batch.size();
  if (n == 0) throw ShapeError("empty batch");
  if (batch.policy_input.rows() != n || batch.critic_input.rows() != n || batch.rewards.size() != n ||
      batch.done.size() != n || (batch.next_critic_input.size() > 0 && batch.next_critic_input.rows() != n))
    throw ShapeError("batch fields disagree on the number of samples");
}

void check_critic(const Batch& batch, const Critic& critic, const char* what) {
  if (critic.mode != batch.mode)
    throw ConfigError(std::string(what) + ": critic mode does not match batch mode");
  if (critic.net.input_size() != batch.critic_input.cols())
    throw ShapeError(std::string(what) + ": critic input width does not match batch");
}

void check_policy(const Batch& batch, const nn::Mlp<double>& policy) {
  if (policy.input_size() != batch.policy_input.cols()) throw ShapeError("policy input width does not match batch");
  for (int a : batch.actions)
    if (a < 0 || a >= policy.output_size()) throw IndexError("batch action out of range");
}

}  // namespace

Eigen::VectorXd gather_actions(const Eigen::MatrixXd& values, const std::vector<int>& actions) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(actions.size()));
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] < 0 || actions[i] >= values.cols()) throw IndexError("action out of range");
    out(static_cast<Eigen::Index>(i)) = values(static_cast<Eigen::Index>(i), actions[i]);
  }
  return out;
}

LossOutput q_td_loss(const Batch& batch, const Critic& q, const Critic& v_target, double gamma) {
  check_batch(batch);
  check_critic(batch, q, "q_td_loss");
  check_critic(batch, v_target, "q_td_loss target");
  if (batch.next_critic_input.rows() != batch.size()) throw ShapeError("q_td_loss needs next_critic_input");
  const auto n = static_cast<double>(batch.size());
  const Eigen::VectorXd next_v = v_target.net.forward(batch.next_critic_input).col(0);
  const Eigen::VectorXd target =
      batch.rewards.array() + gamma * (1.0 - batch.done.array()) * next_v.array();

  nn::ForwardCache<double> cache;
  const Eigen::MatrixXd qs = q.net.forward(batch.critic_input, cache);
  const Eigen::VectorXd err = gather_actions(qs, batch.actions) - target;

  Eigen::MatrixXd grad_out = Eigen::MatrixXd::Zero(qs.rows(), qs.cols());
  for (Eigen::Index i = 0; i < err.size(); ++i) grad_out(i, batch.actions[static_cast<std::size_t>(i)]) = 2.0 * err(i) / n;
  return {err.squaredNorm() / n, q.net.backward(cache, grad_out)};
}

LossOutput v_expectile_loss(const Batch& batch, const Critic& v, const Critic& q_target, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("expectile tau must lie in (0, 1)");
  check_batch(batch);
  check_critic(batch, v, "v_expectile_loss");
  check_critic(batch, q_target, "v_expectile_loss target");
  const auto n = static_cast<double>(batch.size());
  const Eigen::VectorXd qa = gather_actions(q_target.net.forward(batch.critic_input), batch.actions);

  nn::ForwardCache<double> cache;
  const Eigen::VectorXd vs = v.net.forward(batch.critic_input, cache).col(0);
  const Eigen::ArrayXd u = (qa - vs).array();
  const Eigen::ArrayXd w = (u < 0.0).select(Eigen::ArrayXd::Constant(u.size(), 1.0 - tau),
                                            Eigen::ArrayXd::Constant(u.size(), tau));
  const Eigen::MatrixXd grad_out = (-2.0 * w * u / n).matrix();
  return {(w * u.square()).sum() / n, v.net.backward(cache, grad_out)};
}

Eigen::VectorXd awr_weights(const Eigen::VectorXd& advantages, double beta, double clip) {
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (!(clip > 0.0)) throw ConfigError("weight clip must be positive");
  // exp overflows to inf for huge advantages; min() then yields the clip.
  return (advantages.array() / beta).exp().min(clip).matrix();
}

PolicyLossOutput weighted_policy_loss(const Batch& batch, const nn::Mlp<double>& policy,
                                      const Eigen::VectorXd& advantages, double beta, double clip) {
  check_batch(batch);
  check_policy(batch, policy);
  if (advantages.size() != batch.size()) throw ShapeError("one advantage per sample required");
  if (!advantages.allFinite()) throw ValidationError("non-finite advantage");
  const Eigen::VectorXd w = awr_weights(advantages, beta, clip);
  const auto n = static_cast<double>(batch.size());

  nn::ForwardCache<double> cache;
  const Eigen::MatrixXd logits = policy.forward(batch.policy_input, cache);
  const Eigen::MatrixXd logp = nn::log_softmax(logits);
  Eigen::MatrixXd grad_out = logp.array().exp().matrix();  // softmax
  double loss = 0.0;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const int a = batch.actions[static_cast<std::size_t>(i)];
    loss -= w(i) * logp(i, a);
    grad_out(i, a) -= 1.0;
    grad_out.row(i) *= w(i) / n;
  }
  PolicyLossOutput out{loss / n, policy.backward(cache, grad_out), {}};
  out.weights.mean = w.mean();
  out.weights.max = w.maxCoeff();
  out.weights.clipped_fraction = static_cast<double>((w.array() >= clip).count()) / n;
  return out;
}

namespace {

Eigen::VectorXd critic_advantage(const Batch& batch, const Critic& q, const Critic& v) {
  check_critic(batch, q, "policy loss q");
  check_critic(batch, v, "policy loss v");
  const Eigen::VectorXd qa = gather_actions(q.net.forward(batch.critic_input), batch.actions);
  return qa - v.net.forward(batch.critic_input).col(0);
}

}  // namespace

PolicyLossOutput aawr_policy_loss(const Batch& batch, const nn::Mlp<double>& policy, const Critic& q,
                                  const Critic& v, double beta, double clip) {
  if (batch.mode != CriticMode::Privileged) throw ConfigError("aawr_policy_loss needs a privileged batch");
  check_batch(batch);
  return weighted_policy_loss(batch, policy, critic_advantage(batch, q, v), beta, clip);
}

PolicyLossOutput sawr_policy_loss(const Batch& batch, const nn::Mlp<double>& policy, const Critic& q,
                                  const Critic& v, double beta, double clip) {
  if (batch.mode != CriticMode::Symmetric) throw ConfigError("sawr_policy_loss needs a symmetric batch");
  check_batch(batch);
  return weighted_policy_loss(batch, policy, critic_advantage(batch, q, v), beta, clip);
}

LossOutput bc_loss(const Batch& batch, const nn::Mlp<double>& policy) {
  check_batch(batch);
  check_policy(batch, policy);
  const auto n = static_cast<double>(batch.size());
  nn::ForwardCache<double> cache;
  const Eigen::MatrixXd logp = nn::log_softmax(policy.forward(batch.policy_input, cache));
  Eigen::MatrixXd grad_out = logp.array().exp().matrix() / n;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const int a = batch.actions[static_cast<std::size_t>(i)];
    loss -= logp(i, a);
    grad_out(i, a) -= 1.0 / n;
  }
  return {loss / n, policy.backward(cache, grad_out)};
}

std::vector<double> discounted_returns(const Episode& episode, double gamma) {
  if (episode.empty() || !episode.back().done)
    throw ValidationError("Monte Carlo returns need a complete episode ending in done");
  std::vector<double> out(episode.size());
  double g = 0.0;
  for (std::size_t i = episode.size(); i-- > 0;) {
    g = episode[i].r + gamma * g;
    out[i] = g;
  }
  return out;
}

LossOutput mc_value_loss(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& returns, const Critic& v) {
  if (inputs.rows() != returns.size() || inputs.rows() == 0) throw ShapeError("one return per input row required");
  if (v.net.input_size() != inputs.cols()) throw ShapeError("value input width mismatch");
  const auto n = static_cast<double>(inputs.rows());
  nn::ForwardCache<double> cache;
  const Eigen::VectorXd err = v.net.forward(inputs, cache).col(0) - returns;
  return {err.squaredNorm() / n, v.net.backward(cache, (2.0 * err / n).eval())};
}

}  // namespace aawr
