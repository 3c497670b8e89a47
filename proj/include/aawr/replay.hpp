#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "aawr/features.hpp"
#include "aawr/losses.hpp"
#include "aawr/pomdp.hpp"
#include "aawr/random.hpp"
#include "aawr/transition.hpp"

namespace aawr {

inline constexpr std::size_t kDefaultReplayCapacity = 100000;

/// Episode-granular transition store. Agent-state windows are rebuilt from
/// each episode on insertion; when full, whole episodes are evicted oldest first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int k, std::size_t capacity = kDefaultReplayCapacity);

  /// Episodes must start at t=0 and end with done. Throws CapacityError when a
  /// single episode exceeds the capacity.
  void add_episode(const Episode& episode);

  int window() const { return k_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return transitions_.size(); }
  bool empty() const { return transitions_.empty(); }
  std::size_t num_episodes() const { return episode_lengths_.size(); }
  /// True when every stored transition carries o_p and o_p_next.
  bool all_privileged() const { return missing_privileged_ == 0; }

  const Transition& transition(std::size_t i) const { return transitions_.at(i); }
  const AgentState& agent_state(std::size_t i) const { return z_.at(i); }
  const AgentState& next_agent_state(std::size_t i) const { return z_next_.at(i); }

  std::vector<Episode> episodes() const;
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  int k_;
  std::size_t capacity_;
  std::deque<Transition> transitions_;
  std::deque<AgentState> z_;
  std::deque<AgentState> z_next_;
  std::deque<std::size_t> episode_lengths_;
  std::size_t missing_privileged_ = 0;
};

struct SampleRef {
  const ReplayBuffer* buffer;
  std::size_t index;
};

/// `total` samples, half from d_on when it is given and nonempty, the rest from d_off.
std::vector<SampleRef> sample_mixed(const ReplayBuffer& d_off, const ReplayBuffer* d_on, std::size_t total, Rng& rng);

/// Encodes sampled transitions. Privileged mode requires o_p on every sample.
Batch make_batch(const std::vector<SampleRef>& samples, const FeatureEncoder& encoder, CriticMode mode);

}  // namespace aawr
