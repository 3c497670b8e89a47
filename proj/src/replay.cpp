#include "aawr/replay.hpp"

#include "aawr/errors.hpp"

namespace aawr {

ReplayBuffer::ReplayBuffer(int k, std::size_t capacity) : k_(k), capacity_(capacity) {
  if (k < 1) throw ConfigError("window length must be >= 1");
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::add_episode(const Episode& episode) {
  if (episode.empty()) return;
  if (episode.size() > capacity_) throw CapacityError("episode longer than replay capacity");
  if (!episode.back().done) throw ValidationError("episode must end with done");
  for (std::size_t t = 0; t < episode.size(); ++t) {
    if (episode[t].t != static_cast<int>(t)) throw ValidationError("episode steps must be numbered from 0");
    if (t + 1 < episode.size() && episode[t].done) throw ValidationError("done before the last transition");
  }
  while (transitions_.size() + episode.size() > capacity_) {
    const std::size_t n = episode_lengths_.front();
    for (std::size_t i = 0; i < n; ++i) {
      if (!transitions_.front().has_privileged()) --missing_privileged_;
      transitions_.pop_front();
      z_.pop_front();
      z_next_.pop_front();
    }
    episode_lengths_.pop_front();
  }
  AgentState z = AgentState::initial(k_, episode.front().o);
  for (const auto& tr : episode) {
    AgentState next = z.updated(tr.a, tr.o_next);
    transitions_.push_back(tr);
    if (!tr.has_privileged()) ++missing_privileged_;
    z_.push_back(z);
    z_next_.push_back(next);
    z = std::move(next);
  }
  episode_lengths_.push_back(episode.size());
}

std::vector<Episode> ReplayBuffer::episodes() const {
  std::vector<Episode> out;
  std::size_t pos = 0;
  for (std::size_t len : episode_lengths_) {
    out.emplace_back(transitions_.begin() + static_cast<std::ptrdiff_t>(pos),
                     transitions_.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (empty()) throw ValidationError("cannot sample from an empty replay buffer");
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = static_cast<std::size_t>(uniform_int(rng, static_cast<int>(size())));
  return out;
}

std::vector<SampleRef> sample_mixed(const ReplayBuffer& d_off, const ReplayBuffer* d_on, std::size_t total, Rng& rng) {
  const std::size_t n_on = (d_on && !d_on->empty()) ? total / 2 : 0;
  std::vector<SampleRef> refs;
  refs.reserve(total);
  for (std::size_t i : d_off.sample_indices(total - n_on, rng)) refs.push_back({&d_off, i});
  if (n_on > 0)
    for (std::size_t i : d_on->sample_indices(n_on, rng)) refs.push_back({d_on, i});
  return refs;
}

Batch make_batch(const std::vector<SampleRef>& samples, const FeatureEncoder& encoder, CriticMode mode) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  Batch b;
  b.mode = mode;
  b.policy_input.resize(n, encoder.agent_state_dim());
  b.critic_input.resize(n, encoder.critic_dim(mode));
  b.next_critic_input.resize(n, encoder.critic_dim(mode));
  b.actions.resize(samples.size());
  b.rewards.resize(n);
  b.done.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ref = samples[static_cast<std::size_t>(i)];
    if (ref.buffer->window() != encoder.window()) throw ShapeError("buffer and encoder window lengths differ");
    const Transition& tr = ref.buffer->transition(ref.index);
    if (mode == CriticMode::Privileged && !tr.has_privileged())
      throw SchemaError("privileged batch drew a transition without o_p");
    const AgentState& z = ref.buffer->agent_state(ref.index);
    encoder.encode_agent_state(z, b.policy_input.row(i));
    encoder.encode_critic(z, tr.o_p, mode, b.critic_input.row(i));
    encoder.encode_critic(ref.buffer->next_agent_state(ref.index), tr.o_p_next, mode, b.next_critic_input.row(i));
    b.actions[static_cast<std::size_t>(i)] = tr.a;
    b.rewards(i) = tr.r;
    b.done(i) = tr.done ? 1.0 : 0.0;
  }
  return b;
}

}  // namespace aawr
