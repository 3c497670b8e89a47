#pragma once

#include <optional>
#include <vector>

namespace aawr {

/// One environment step as recorded for training: partial observation,
/// privileged features o^p, action, reward, successors and the done flag.
/// Environment state indices are only present when recording states.
struct Transition {
  long episode_id = 0;
  int t = 0;
  int o = 0;
  std::vector<double> o_p;
  int a = 0;
  double r = 0.0;
  int o_next = 0;
  std::vector<double> o_p_next;
  bool done = false;
  std::optional<int> s;
  std::optional<int> s_next;

  bool has_privileged() const { return !o_p.empty() && !o_p_next.empty(); }
  bool operator==(const Transition&) const = default;
};

using Episode = std::vector<Transition>;

}  // namespace aawr
