#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aawr/random.hpp"

namespace aawr {

/// Padding marker for window slots before the episode start, and for the
/// "previous action" of the first observation.
inline constexpr int kPad = -1;

/// Finite POMDP (S, A, O, T, R, E, P, gamma) stored as dense tables.
///
/// Absorbing states end the episode on entry; they must self-loop under every
/// action with zero reward so the discounted oracles can treat them as sinks.
struct PomdpSpec {
  std::vector<std::string> states;
  std::vector<std::string> actions;
  std::vector<std::string> observations;
  std::vector<Eigen::MatrixXd> transition;  ///< [action](s, s')
  Eigen::MatrixXd reward;                   ///< expected reward (s, a)
  double reward_noise = 0.0;                ///< half-width of uniform additive noise
  Eigen::MatrixXd emission;                 ///< (s, o)
  Eigen::VectorXd initial;                  ///< P(s0)
  std::vector<bool> absorbing;              ///< empty means none
  double gamma = 0.9;
  int horizon = 1;

  int num_states() const { return static_cast<int>(states.size()); }
  int num_actions() const { return static_cast<int>(actions.size()); }
  int num_observations() const { return static_cast<int>(observations.size()); }
  bool is_absorbing(int s) const { return !absorbing.empty() && absorbing[static_cast<std::size_t>(s)]; }
  double max_abs_reward() const { return reward.cwiseAbs().maxCoeff() + reward_noise; }

  /// Throws ValidationError on any violated invariant.
  void validate() const;
};

/// One slot of the sliding window: an observation and the action that led to it.
struct WindowEntry {
  int observation = kPad;
  int action = kPad;
  auto operator<=>(const WindowEntry&) const = default;
};

/// Fixed-length sliding window over (observation, previous action) pairs,
/// oldest first, left-padded with kPad.
class AgentState {
 public:
  AgentState() = default;
  explicit AgentState(int k);

  /// Window after the first observation of an episode.
  static AgentState initial(int k, int first_observation);

  /// Recurrent update u(z, a, o): drops the oldest slot, appends (o, a).
  AgentState updated(int action, int observation) const;

  int length() const { return static_cast<int>(window_.size()); }
  const std::vector<WindowEntry>& window() const { return window_; }
  const WindowEntry& latest() const { return window_.back(); }
  std::string to_string() const;

  auto operator<=>(const AgentState&) const = default;

 private:
  std::vector<WindowEntry> window_;
};

struct AgentStateHash {
  std::size_t operator()(const AgentState& z) const noexcept;
};

struct ResetResult {
  int state;
  int observation;
  AgentState agent_state;
};

struct StepResult {
  int next_state;
  double reward;
  int next_observation;
  bool done;
};

/// Samples s0 ~ P, o0 ~ E(.|s0) and the initial window.
ResetResult reset(const PomdpSpec& spec, int k, Rng& rng);

/// Samples one transition. `t` is the index of the step being taken; the
/// episode is done when an absorbing state is entered or t + 1 == horizon.
StepResult step(const PomdpSpec& spec, int state, int action, int t, Rng& rng);

/// Stateful episode driver that rejects steps after termination.
class Simulator {
 public:
  Simulator(const PomdpSpec& spec, int k);

  ResetResult reset(Rng& rng);
  StepResult step(int action, Rng& rng);

  int state() const { return state_; }
  int time() const { return t_; }
  bool done() const { return done_; }
  const AgentState& agent_state() const { return z_; }

 private:
  const PomdpSpec* spec_;
  int k_;
  int state_ = -1;
  int t_ = 0;
  bool done_ = true;
  AgentState z_;
};

/// Structured-text (JSON) form: named lists, dense row-major tables, scalars.
std::string pomdp_to_json(const PomdpSpec& spec);
PomdpSpec pomdp_from_json(const std::string& text);

}  // namespace aawr
