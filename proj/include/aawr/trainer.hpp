#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aawr/envs.hpp"
#include "aawr/features.hpp"
#include "aawr/losses.hpp"
#include "aawr/nn/adam.hpp"
#include "aawr/nn/checkpoint.hpp"
#include "aawr/replay.hpp"

namespace aawr {

enum class Method { Aawr, Sawr, Bc };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct TrainingConfig {
  Method method = Method::Aawr;
  double beta = 10.0;
  double tau = 0.7;
  std::optional<double> gamma;  ///< defaults to the environment's discount
  double weight_clip = 100.0;
  long n_off = 20000;           ///< offline gradient steps
  long n_on = 20000;            ///< online environment steps
  int batch_size = 256;
  double lr_actor = 1e-4;
  double lr_critic = 1e-4;
  double target_update_rate = 0.005;
  std::optional<int> k;         ///< defaults to the environment's window length
  std::uint64_t seed = 0;
  std::vector<int> hidden = {64, 64};
  std::size_t replay_capacity = kDefaultReplayCapacity;
  int eval_episodes = 200;
  long eval_every = 2000;       ///< grad steps offline, env steps online
  bool eval_greedy = true;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig base = {});
nlohmann::json to_json(const TrainingConfig& cfg);

struct MetricsRow {
  std::string phase;  ///< init | offline | online
  long grad_step = 0;
  long env_step = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double mean_episode_length = 0.0;
  double q_loss = 0.0;
  double v_loss = 0.0;
  double policy_loss = 0.0;
  double weight_mean = 0.0;
  double weight_max = 0.0;
  double weight_clip_fraction = 0.0;
};

/// Evaluation rows in order; grad_step and env_step never decrease.
struct RunMetrics {
  std::vector<MetricsRow> rows;

  static const char* header();
  std::string to_csv() const;
  static RunMetrics from_csv(const std::string& text);
  void save(const std::string& path) const;
  static RunMetrics load(const std::string& path);
};

/// Policy, critics, target critics and their optimizers.
struct AgentNetworks {
  nn::Mlp<double> policy;
  Critic q, v, q_target, v_target;
  nn::AdamState<double> policy_opt, q_opt, v_opt;
  long grad_steps = 0;
  long env_steps = 0;

  bool has_critics() const { return q.net.output_size() > 0; }
  std::vector<nn::NamedNetwork> to_checkpoint() const;
  static AgentNetworks from_checkpoint(const std::vector<nn::NamedNetwork>& nets, CriticMode mode);
};

struct UpdateStats {
  double q_loss = 0.0;
  double v_loss = 0.0;
  double policy_loss = 0.0;
  WeightStats weights;
};

/// Offline-to-online AWR training over sliding-window agent states.
class Trainer {
 public:
  Trainer(TrainingConfig cfg, const EnvCatalogEntry& env);

  const TrainingConfig& config() const { return cfg_; }
  const FeatureEncoder& encoder() const { return encoder_; }
  int window() const { return encoder_.window(); }
  double gamma() const { return gamma_; }
  CriticMode critic_mode() const { return mode_; }
  AgentNetworks& agent() { return agent_; }
  const AgentNetworks& agent() const { return agent_; }

  /// N_off gradient steps on d_off, with an evaluation row every eval_every
  /// steps (and one "init" row when the agent is untrained).
  void offline_phase(const ReplayBuffer& d_off, RunMetrics& metrics);

  /// Collects episodes with the current policy until N_on env steps, after each
  /// episode taking as many gradient steps as it had transitions. Batches are
  /// half D_off, half D_on.
  void online_phase(const ReplayBuffer& d_off, ReplayBuffer& d_on, RunMetrics& metrics);

  /// One gradient step: Q, V, then the policy (BC: policy only).
  UpdateStats update(const Batch& batch);
  /// Policy step with externally supplied advantages; critics are untouched.
  PolicyLossOutput update_policy(const Batch& batch, const Eigen::VectorXd& advantages);

  /// pi(. | z) built from the agent state only.
  Eigen::VectorXd action_distribution(const AgentState& z) const;
  WindowPolicy behaviour_policy() const;
  WindowPolicy greedy_policy() const;

  /// Deployment rollouts; episode i is seeded with derive_seed(seed, i).
  /// Only observations and rewards are read from `env`.
  MetricsRow evaluate(Environment& env, int n_episodes, std::uint64_t seed) const;
  MetricsRow evaluate(int n_episodes, std::uint64_t seed) const;

 private:
  Batch sample_batch(const ReplayBuffer& d_off, const ReplayBuffer* d_on);
  void append_eval(RunMetrics& metrics, const std::string& phase);
  void check_buffer(const ReplayBuffer& buffer) const;

  TrainingConfig cfg_;
  const EnvCatalogEntry* env_;
  FeatureEncoder encoder_;
  double gamma_;
  CriticMode mode_;
  AgentNetworks agent_;
  Rng sample_rng_;
  Rng collect_rng_;
  std::uint64_t eval_seed_;
  long episodes_collected_ = 0;
  // Running loss sums since the last evaluation row.
  UpdateStats acc_;
  long acc_count_ = 0;
};

/// Success-filtered copy (BC training data).
ReplayBuffer successful_episodes(const ReplayBuffer& buffer);

}  // namespace aawr
