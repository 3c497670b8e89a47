#include "aawr/features.hpp"

#include "aawr/errors.hpp"

namespace aawr {

FeatureEncoder::FeatureEncoder(const EnvCatalogEntry& entry, int k)
    : observation_features_(entry.observation_features),
      k_(k),
      num_actions_(entry.spec.num_actions()),
      obs_dim_(entry.observation_dim()),
      slot_dim_(obs_dim_ + 1 + num_actions_ + 1),
      privileged_dim_(entry.privileged_dim()) {
  if (k < 1) throw ConfigError("window length must be >= 1");
}

void FeatureEncoder::encode_agent_state(const AgentState& z, RowRef out) const {
  if (z.length() != k_) throw ShapeError("agent state window length mismatch");
  out.head(agent_state_dim()).setZero();
  for (int i = 0; i < k_; ++i) {
    const auto& e = z.window()[static_cast<std::size_t>(i)];
    auto slot = out.segment(i * slot_dim_, slot_dim_);
    if (e.observation == kPad) {
      slot(obs_dim_) = 1.0;
    } else {
      if (e.observation < 0 || e.observation >= observation_features_.rows()) throw IndexError("observation index");
      slot.head(obs_dim_) = observation_features_.row(e.observation);
    }
    if (e.action == kPad) {
      slot(obs_dim_ + 1 + num_actions_) = 1.0;
    } else {
      if (e.action < 0 || e.action >= num_actions_) throw IndexError("action index");
      slot(obs_dim_ + 1 + e.action) = 1.0;
    }
  }
}

Eigen::RowVectorXd FeatureEncoder::encode_agent_state(const AgentState& z) const {
  Eigen::RowVectorXd out(agent_state_dim());
  encode_agent_state(z, out);
  return out;
}

void FeatureEncoder::encode_critic(const AgentState& z, std::span<const double> privileged, CriticMode mode,
                                   RowRef out) const {
  encode_agent_state(z, out);
  if (mode == CriticMode::Symmetric) return;
  if (static_cast<int>(privileged.size()) != privileged_dim_)
    throw SchemaError("privileged critic input requires o_p of width " + std::to_string(privileged_dim_));
  for (int i = 0; i < privileged_dim_; ++i) out(agent_state_dim() + i) = privileged[static_cast<std::size_t>(i)];
}

}  // namespace aawr
