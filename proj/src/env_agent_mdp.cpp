#include "aawr/env_agent_mdp.hpp"

#include <deque>
#include <string>

#include "aawr/errors.hpp"

namespace aawr {

namespace {

long long joint_key(int s, int z) { return (static_cast<long long>(z) << 20) | s; }

}  // namespace

int EnvAgentMdp::find(int state, const AgentState& z) const {
  const int zi = find_agent_state(z);
  if (zi < 0) return -1;
  auto it = joint_index_.find(joint_key(state, zi));
  return it == joint_index_.end() ? -1 : it->second;
}

int EnvAgentMdp::find_agent_state(const AgentState& z) const {
  auto it = z_index_.find(z);
  return it == z_index_.end() ? -1 : it->second;
}

EnvAgentMdp build_env_agent_mdp(const PomdpSpec& spec, int k, std::size_t cap) {
  spec.validate();
  if (spec.num_states() >= (1 << 20)) throw CapacityError("too many environment states");
  EnvAgentMdp mdp;
  mdp.window = k;
  mdp.num_actions = spec.num_actions();
  mdp.num_env_states = spec.num_states();
  mdp.gamma = spec.gamma;

  std::deque<int> frontier;
  auto intern_z = [&](const AgentState& z) {
    auto [it, inserted] = mdp.z_index_.emplace(z, mdp.num_agent_states());
    if (inserted) {
      mdp.agent_states.push_back(z);
      mdp.members_.emplace_back();
    }
    return it->second;
  };
  auto intern_joint = [&](int s, int zi) {
    auto [it, inserted] = mdp.joint_index_.emplace(joint_key(s, zi), mdp.num_joint());
    if (inserted) {
      if (mdp.joint_states.size() >= cap)
        throw CapacityError("reachable joint states exceed cap of " + std::to_string(cap));
      mdp.joint_states.push_back({s, zi});
      mdp.terminal.push_back(spec.is_absorbing(s));
      mdp.members_[static_cast<std::size_t>(zi)].push_back(it->second);
      frontier.push_back(it->second);
    }
    return it->second;
  };

  std::vector<std::pair<int, double>> initial_mass;
  for (int s = 0; s < spec.num_states(); ++s) {
    if (spec.initial(s) <= 0.0) continue;
    for (int o = 0; o < spec.num_observations(); ++o) {
      const double p = spec.initial(s) * spec.emission(s, o);
      if (p <= 0.0) continue;
      initial_mass.emplace_back(intern_joint(s, intern_z(AgentState::initial(k, o))), p);
    }
  }

  using Triplet = Eigen::Triplet<double>;
  std::vector<std::vector<Triplet>> triplets(static_cast<std::size_t>(mdp.num_actions));
  while (!frontier.empty()) {
    const int j = frontier.front();
    frontier.pop_front();
    const auto [s, zi] = mdp.joint_states[static_cast<std::size_t>(j)];
    if (spec.is_absorbing(s)) {
      for (auto& t : triplets) t.emplace_back(j, j, 1.0);
      continue;
    }
    for (int a = 0; a < mdp.num_actions; ++a) {
      const auto& T = spec.transition[static_cast<std::size_t>(a)];
      for (int s2 = 0; s2 < spec.num_states(); ++s2) {
        const double pt = T(s, s2);
        if (pt <= 0.0) continue;
        for (int o2 = 0; o2 < spec.num_observations(); ++o2) {
          const double pe = spec.emission(s2, o2);
          if (pe <= 0.0) continue;
          // Copy: intern_z may reallocate agent_states.
          const AgentState z = mdp.agent_states[static_cast<std::size_t>(zi)];
          const int j2 = intern_joint(s2, intern_z(z.updated(a, o2)));
          triplets[static_cast<std::size_t>(a)].emplace_back(j, j2, pt * pe);
        }
      }
    }
  }

  const int n = mdp.num_joint();
  mdp.transition.resize(static_cast<std::size_t>(mdp.num_actions));
  for (int a = 0; a < mdp.num_actions; ++a) {
    auto& P = mdp.transition[static_cast<std::size_t>(a)];
    P.resize(n, n);
    P.setFromTriplets(triplets[static_cast<std::size_t>(a)].begin(), triplets[static_cast<std::size_t>(a)].end());
    P.makeCompressed();
  }
  mdp.reward.resize(n, mdp.num_actions);
  for (int j = 0; j < n; ++j) mdp.reward.row(j) = spec.reward.row(mdp.joint_states[static_cast<std::size_t>(j)].state);
  mdp.initial = Eigen::VectorXd::Zero(n);
  for (auto [j, p] : initial_mass) mdp.initial(j) += p;
  return mdp;
}

}  // namespace aawr
