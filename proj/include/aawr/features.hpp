#pragma once

#include <span>

#include <Eigen/Core>

#include "aawr/envs.hpp"

namespace aawr {

enum class CriticMode { Privileged, Symmetric };

/// Writable row view; accepts rows of column-major matrices.
using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

/// Maps agent states (and privileged features) to network inputs.
///
/// Each window slot contributes [observation features | obs-pad bit |
/// previous-action one-hot | action-pad bit]. Policy inputs are built from the
/// agent state alone; privileged critic inputs append o^p.
class FeatureEncoder {
 public:
  FeatureEncoder(const EnvCatalogEntry& entry, int k);

  int window() const { return k_; }
  int num_actions() const { return num_actions_; }
  int agent_state_dim() const { return k_ * slot_dim_; }
  int privileged_dim() const { return privileged_dim_; }
  int critic_dim(CriticMode mode) const {
    return agent_state_dim() + (mode == CriticMode::Privileged ? privileged_dim_ : 0);
  }

  void encode_agent_state(const AgentState& z, RowRef out) const;
  Eigen::RowVectorXd encode_agent_state(const AgentState& z) const;

  void encode_critic(const AgentState& z, std::span<const double> privileged, CriticMode mode,
                     RowRef out) const;

 private:
  Eigen::MatrixXd observation_features_;
  int k_;
  int num_actions_;
  int obs_dim_;
  int slot_dim_;
  int privileged_dim_;
};

}  // namespace aawr
