#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "aawr/pomdp.hpp"
#include "aawr/transition.hpp"

namespace aawr {

/// Stochastic policy over agent states: returns a distribution over actions.
using WindowPolicy = std::function<Eigen::VectorXd(const AgentState&)>;

/// A named toy task: the POMDP, its privileged channel, feature maps used by
/// the networks, and a scripted demonstrator.
struct EnvCatalogEntry {
  std::string name;
  nlohmann::json params;             ///< constructor arguments, echoed in run manifests
  PomdpSpec spec;
  Eigen::MatrixXd privileged;        ///< row s = o^p for state s
  Eigen::MatrixXd observation_features;  ///< row o = network features of observation o
  int default_k = 1;
  WindowPolicy demo_policy;
  double demo_epsilon = 0.0;         ///< corruption rate of the scripted demonstrator

  int privileged_dim() const { return static_cast<int>(privileged.cols()); }
  int observation_dim() const { return static_cast<int>(observation_features.cols()); }
};

/// Grid search for a hidden target. The agent always knows its own cell and
/// sees the target only within Chebyshev distance <= fov, so fov >=
/// max(width, height) - 1 makes the task fully observed. Actions are
/// up/down/left/right/grab; grabbing on the target pays +1 and ends the episode.
EnvCatalogEntry hidden_target_grid(int width, int height, int fov, double gamma = 0.9, int horizon = -1);

/// Classical tiger problem with a free listen action. Listening moves the
/// hidden state to its "heard" variant, which emits the correct hint with
/// probability listen_accuracy.
EnvCatalogEntry tiger(double listen_accuracy = 0.85, double penalty = -100.0, double prize = 10.0,
                      double gamma = 0.95);

/// 1-D strip pick task: the target position reading is correct with
/// probability 1 - obs_noise and uniformly wrong otherwise. Grabbing the wrong
/// cell ends the episode without reward.
EnvCatalogEntry camouflage_line(int n_cells, double obs_noise, double gamma = 0.9, int horizon = -1);

/// Random dense POMDP with observation aliasing (fewer observations than
/// states); privileged features are the state one-hot.
EnvCatalogEntry random_pomdp(int num_states, int num_actions, int num_observations, double gamma,
                             std::uint64_t seed);

/// Builds a catalog entry from {"name": ..., <params>}. Throws ConfigError.
EnvCatalogEntry make_env(const nlohmann::json& desc);
std::vector<std::string> catalog_names();

/// Interactive episode interface used for data collection and deployment.
struct EnvStep {
  int observation = 0;
  Eigen::VectorXd privileged;
  int state = 0;
  double reward = 0.0;
  bool done = false;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual EnvStep reset(Rng& rng) = 0;
  virtual EnvStep step(int action, Rng& rng) = 0;
  virtual int num_actions() const = 0;
};

class CatalogEnvironment : public Environment {
 public:
  explicit CatalogEnvironment(const EnvCatalogEntry& entry);
  EnvStep reset(Rng& rng) override;
  EnvStep step(int action, Rng& rng) override;
  int num_actions() const override { return entry_->spec.num_actions(); }

 private:
  const EnvCatalogEntry* entry_;
  Simulator sim_;
};

/// Replaces every privileged field with garbage (NaN features, bogus state).
/// Anything that reads them during deployment changes its behaviour.
class PoisonedEnvironment : public Environment {
 public:
  explicit PoisonedEnvironment(Environment& inner) : inner_(&inner) {}
  EnvStep reset(Rng& rng) override { return poison(inner_->reset(rng)); }
  EnvStep step(int action, Rng& rng) override { return poison(inner_->step(action, rng)); }
  int num_actions() const override { return inner_->num_actions(); }

 private:
  static EnvStep poison(EnvStep s);
  Environment* inner_;
};

/// Runs one episode; actions are sampled from `policy` with the same rng.
Episode rollout_episode(Environment& env, const WindowPolicy& policy, int k, long episode_id, Rng& rng,
                        bool store_state);

/// Demonstrations from the scripted policy; episode i uses seed
/// derive_seed(seed, i), so the dataset is a pure function of (entry, n, seed).
std::vector<Episode> scripted_demo_rollouts(const EnvCatalogEntry& entry, int n_episodes, std::uint64_t seed,
                                            bool store_state = true);

/// An episode counts as a success when its final reward is positive.
bool episode_success(const Episode& episode);
double success_rate(const std::vector<Episode>& episodes);

}  // namespace aawr
