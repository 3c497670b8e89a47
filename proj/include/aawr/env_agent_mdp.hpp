#pragma once

#include <cstddef>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "aawr/pomdp.hpp"

namespace aawr {

struct JointState {
  int state;        ///< environment state s
  int agent_state;  ///< index into EnvAgentMdp::agent_states
};

/// Fully observable MDP over reachable (s, z) pairs.
///
/// Entering an absorbing environment state leads to a joint sink that keeps
/// its window frozen; every other transition applies the window update.
struct EnvAgentMdp {
  using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  int window = 1;
  int num_actions = 0;
  int num_env_states = 0;
  double gamma = 0.9;
  std::vector<AgentState> agent_states;
  std::vector<JointState> joint_states;
  std::vector<bool> terminal;           ///< per joint state
  std::vector<SparseMatrix> transition;  ///< [action](j, j')
  Eigen::MatrixXd reward;                ///< (j, a) = R(s, a)
  Eigen::VectorXd initial;               ///< over joint states

  int num_joint() const { return static_cast<int>(joint_states.size()); }
  int num_agent_states() const { return static_cast<int>(agent_states.size()); }

  /// Index of (s, z) or -1 if unreachable.
  int find(int state, const AgentState& z) const;
  /// Index of z or -1.
  int find_agent_state(const AgentState& z) const;

  /// Joint indices grouped by agent-state index.
  const std::vector<std::vector<int>>& members() const { return members_; }

 private:
  friend EnvAgentMdp build_env_agent_mdp(const PomdpSpec&, int, std::size_t);
  std::unordered_map<AgentState, int, AgentStateHash> z_index_;
  std::unordered_map<long long, int> joint_index_;
  std::vector<std::vector<int>> members_;
};

inline constexpr std::size_t kDefaultJointStateCap = 1'000'000;

/// Breadth-first enumeration of the reachable joint states with
/// p(s', z' | s, z, a) = T(s'|s,a) * sum_o' E(o'|s') [z' = u(z, a, o')].
/// Throws CapacityError once more than `cap` joint states are reachable.
EnvAgentMdp build_env_agent_mdp(const PomdpSpec& spec, int k, std::size_t cap = kDefaultJointStateCap);

}  // namespace aawr
