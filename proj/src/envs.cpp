#include "aawr/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aawr/errors.hpp"

namespace aawr {

namespace {

Eigen::VectorXd mix_with_uniform(Eigen::VectorXd nominal, double epsilon) {
  const auto n = static_cast<double>(nominal.size());
  return (1.0 - epsilon) * nominal + Eigen::VectorXd::Constant(nominal.size(), epsilon / n);
}

std::vector<std::string> numbered(const std::string& prefix, int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

// --- hidden target grid ---------------------------------------------------

enum GridAction { kUp = 0, kDown, kLeft, kRight, kGrab, kGridActions };

struct GridGeometry {
  int width, height, fov;
  int cells() const { return width * height; }
  int x(int c) const { return c % width; }
  int y(int c) const { return c / width; }
  bool visible(int agent, int target) const {
    return std::max(std::abs(x(agent) - x(target)), std::abs(y(agent) - y(target))) <= fov;
  }
  int move(int c, int action) const {
    int cx = x(c), cy = y(c);
    switch (action) {
      case kUp: cy = std::max(cy - 1, 0); break;
      case kDown: cy = std::min(cy + 1, height - 1); break;
      case kLeft: cx = std::max(cx - 1, 0); break;
      case kRight: cx = std::min(cx + 1, width - 1); break;
      default: break;
    }
    return cy * width + cx;
  }
  // Observation = agent cell x (visible target cell | none), plus "done".
  int observation(int agent, int target) const {
    return agent * (cells() + 1) + (visible(agent, target) ? target : cells());
  }
  int done_observation() const { return cells() * (cells() + 1); }
};

int step_toward(const GridGeometry& g, int from, int to) {
  if (g.x(to) < g.x(from)) return kLeft;
  if (g.x(to) > g.x(from)) return kRight;
  if (g.y(to) < g.y(from)) return kUp;
  return kDown;
}

}  // namespace

EnvCatalogEntry hidden_target_grid(int width, int height, int fov, double gamma, int horizon) {
  if (width < 1 || height < 1 || width * height > 64) throw ConfigError("grid needs 1 <= width*height <= 64");
  if (fov < 1) throw ConfigError("fov must be >= 1");
  const GridGeometry g{width, height, fov};
  const int n = g.cells();
  if (horizon < 0) horizon = n + 15;

  EnvCatalogEntry e;
  e.name = "hidden_target_grid";
  e.params = {{"width", width}, {"height", height}, {"fov", fov}, {"gamma", gamma}, {"horizon", horizon}};
  e.default_k = 2;
  e.demo_epsilon = 0.85;

  auto& spec = e.spec;
  const int success = n * n;
  const int ns = n * n + 1;
  for (int a = 0; a < n; ++a)
    for (int t = 0; t < n; ++t) spec.states.push_back("agent" + std::to_string(a) + "_target" + std::to_string(t));
  spec.states.push_back("success");
  spec.actions = {"up", "down", "left", "right", "grab"};
  for (int a = 0; a < n; ++a) {
    for (int t = 0; t < n; ++t) spec.observations.push_back("at" + std::to_string(a) + "_sees" + std::to_string(t));
    spec.observations.push_back("at" + std::to_string(a) + "_sees_none");
  }
  spec.observations.push_back("done");
  const int no = static_cast<int>(spec.observations.size());

  spec.transition.assign(kGridActions, Eigen::MatrixXd::Zero(ns, ns));
  spec.reward = Eigen::MatrixXd::Zero(ns, kGridActions);
  spec.emission = Eigen::MatrixXd::Zero(ns, no);
  spec.initial = Eigen::VectorXd::Zero(ns);
  spec.absorbing.assign(static_cast<std::size_t>(ns), false);
  spec.absorbing[static_cast<std::size_t>(success)] = true;
  for (int a = 0; a < kGridActions; ++a) spec.transition[static_cast<std::size_t>(a)](success, success) = 1.0;
  spec.emission(success, g.done_observation()) = 1.0;

  for (int agent = 0; agent < n; ++agent) {
    for (int target = 0; target < n; ++target) {
      const int s = agent * n + target;
      spec.emission(s, g.observation(agent, target)) = 1.0;
      for (int a = kUp; a <= kRight; ++a)
        spec.transition[static_cast<std::size_t>(a)](s, g.move(agent, a) * n + target) = 1.0;
      if (agent == target) {
        spec.transition[kGrab](s, success) = 1.0;
        spec.reward(s, kGrab) = 1.0;
      } else {
        spec.transition[kGrab](s, s) = 1.0;
      }
    }
  }
  for (int target = 0; target < n; ++target) spec.initial(target) = 1.0 / n;  // agent starts in cell 0
  spec.gamma = gamma;
  spec.horizon = horizon;
  spec.validate();

  // Privileged: target one-hot, target offset from the agent, success bit.
  e.privileged = Eigen::MatrixXd::Zero(ns, n + 3);
  const double sx = std::max(width - 1, 1), sy = std::max(height - 1, 1);
  for (int s = 0; s < n * n; ++s) {
    const int agent = s / n, target = s % n;
    e.privileged(s, target) = 1.0;
    e.privileged(s, n) = (g.x(target) - g.x(agent)) / sx;
    e.privileged(s, n + 1) = (g.y(target) - g.y(agent)) / sy;
  }
  e.privileged(success, n + 2) = 1.0;

  // Features: agent one-hot, visible-target one-hot, done bit, then agent
  // coordinates and the visible target's offset (zero when none is seen).
  e.observation_features = Eigen::MatrixXd::Zero(no, 2 * n + 5);
  for (int agent = 0; agent < n; ++agent) {
    for (int seen = 0; seen <= n; ++seen) {
      const int o = agent * (n + 1) + seen;
      e.observation_features(o, agent) = 1.0;
      e.observation_features(o, 2 * n + 1) = g.x(agent) / sx;
      e.observation_features(o, 2 * n + 2) = g.y(agent) / sy;
      if (seen < n) {
        e.observation_features(o, n + seen) = 1.0;
        e.observation_features(o, 2 * n + 3) = (g.x(seen) - g.x(agent)) / sx;
        e.observation_features(o, 2 * n + 4) = (g.y(seen) - g.y(agent)) / sy;
      }
    }
  }
  e.observation_features(g.done_observation(), 2 * n) = 1.0;

  // Scripted searcher: grab a visible target or walk to it, otherwise wander
  // uniformly over the moves that leave the current cell.
  const double eps = e.demo_epsilon;
  e.demo_policy = [g, eps](const AgentState& z) -> Eigen::VectorXd {
    const auto& last = z.latest();
    const int n = g.cells();
    if (last.observation == g.done_observation()) return Eigen::VectorXd::Constant(kGridActions, 1.0 / static_cast<double>(kGridActions));
    const int agent = last.observation / (n + 1);
    const int seen = last.observation % (n + 1);
    Eigen::VectorXd nominal = Eigen::VectorXd::Zero(kGridActions);
    if (seen < n) {
      nominal(seen == agent ? kGrab : step_toward(g, agent, seen)) = 1.0;
    } else {
      int open = 0;
      for (int a = kUp; a <= kRight; ++a) open += g.move(agent, a) != agent;
      for (int a = kUp; a <= kRight; ++a)
        if (g.move(agent, a) != agent) nominal(a) = 1.0 / open;
    }
    return mix_with_uniform(nominal, eps);
  };
  return e;
}

EnvCatalogEntry tiger(double listen_accuracy, double penalty, double prize, double gamma) {
  if (!(listen_accuracy > 0.5 && listen_accuracy <= 1.0)) throw ConfigError("listen_accuracy must lie in (0.5, 1]");
  enum { kLeftQuiet, kRightQuiet, kLeftHeard, kRightHeard, kOpened };
  enum { kNone, kHearLeft, kHearRight, kDone };
  enum { kListen, kOpenLeft, kOpenRight };

  EnvCatalogEntry e;
  e.name = "tiger";
  e.params = {{"listen_accuracy", listen_accuracy}, {"penalty", penalty}, {"prize", prize}, {"gamma", gamma}};
  e.default_k = 4;
  e.demo_epsilon = 0.6;

  auto& spec = e.spec;
  spec.states = {"tiger_left", "tiger_right", "tiger_left_heard", "tiger_right_heard", "opened"};
  spec.actions = {"listen", "open_left", "open_right"};
  spec.observations = {"none", "hear_left", "hear_right", "done"};
  spec.transition.assign(3, Eigen::MatrixXd::Zero(5, 5));
  spec.reward = Eigen::MatrixXd::Zero(5, 3);
  for (int s : {kLeftQuiet, kLeftHeard}) {
    spec.transition[kListen](s, kLeftHeard) = 1.0;
    spec.reward(s, kOpenLeft) = penalty;
    spec.reward(s, kOpenRight) = prize;
  }
  for (int s : {kRightQuiet, kRightHeard}) {
    spec.transition[kListen](s, kRightHeard) = 1.0;
    spec.reward(s, kOpenLeft) = prize;
    spec.reward(s, kOpenRight) = penalty;
  }
  for (int s = 0; s < 4; ++s) {
    spec.transition[kOpenLeft](s, kOpened) = 1.0;
    spec.transition[kOpenRight](s, kOpened) = 1.0;
  }
  for (int a = 0; a < 3; ++a) spec.transition[static_cast<std::size_t>(a)](kOpened, kOpened) = 1.0;
  spec.emission = Eigen::MatrixXd::Zero(5, 4);
  spec.emission(kLeftQuiet, kNone) = 1.0;
  spec.emission(kRightQuiet, kNone) = 1.0;
  spec.emission(kLeftHeard, kHearLeft) = listen_accuracy;
  spec.emission(kLeftHeard, kHearRight) = 1.0 - listen_accuracy;
  spec.emission(kRightHeard, kHearRight) = listen_accuracy;
  spec.emission(kRightHeard, kHearLeft) = 1.0 - listen_accuracy;
  spec.emission(kOpened, kDone) = 1.0;
  spec.initial = Eigen::VectorXd::Zero(5);
  spec.initial(kLeftQuiet) = 0.5;
  spec.initial(kRightQuiet) = 0.5;
  spec.absorbing = {false, false, false, false, true};
  spec.gamma = gamma;
  spec.horizon = std::max(1, static_cast<int>(std::ceil(std::log(1e-4) / std::log(gamma))) + 1);
  spec.validate();

  e.privileged = Eigen::MatrixXd::Zero(5, 3);
  e.privileged(kLeftQuiet, 0) = e.privileged(kLeftHeard, 0) = 1.0;
  e.privileged(kRightQuiet, 1) = e.privileged(kRightHeard, 1) = 1.0;
  e.privileged(kOpened, 2) = 1.0;
  e.observation_features = Eigen::MatrixXd::Identity(4, 4);

  // Listen once, then open the far door; acts on a flipped hint with probability eps.
  const double eps = e.demo_epsilon;
  e.demo_policy = [eps](const AgentState& z) -> Eigen::VectorXd {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    switch (z.latest().observation) {
      case kNone: p(kListen) = 1.0; break;
      case kHearLeft: p(kOpenRight) = 1.0 - eps; p(kOpenLeft) = eps; break;
      case kHearRight: p(kOpenLeft) = 1.0 - eps; p(kOpenRight) = eps; break;
      default: p.setConstant(1.0 / 3.0); break;
    }
    return p;
  };
  return e;
}

EnvCatalogEntry camouflage_line(int n_cells, double obs_noise, double gamma, int horizon) {
  if (n_cells < 1 || n_cells > 16) throw ConfigError("camouflage_line needs 1 <= n_cells <= 16");
  if (!(obs_noise >= 0.0 && obs_noise < 0.5)) throw ConfigError("obs_noise must lie in [0, 0.5)");
  enum { kMoveLeft, kMoveRight, kPick };
  const int n = n_cells;
  if (horizon < 0) horizon = 3 * n + 10;

  EnvCatalogEntry e;
  e.name = "camouflage_line";
  e.params = {{"n_cells", n_cells}, {"obs_noise", obs_noise}, {"gamma", gamma}, {"horizon", horizon}};
  e.default_k = 3;
  e.demo_epsilon = 0.5;

  auto& spec = e.spec;
  // A grab on the wrong cell knocks the object over: the episode ends without reward.
  const int success = n * n, failed = n * n + 1, ns = n * n + 2, done_obs = n * n, no = n * n + 1;
  for (int a = 0; a < n; ++a)
    for (int t = 0; t < n; ++t) spec.states.push_back("agent" + std::to_string(a) + "_target" + std::to_string(t));
  spec.states.push_back("success");
  spec.states.push_back("failed");
  spec.actions = {"left", "right", "grab"};
  for (int a = 0; a < n; ++a)
    for (int r = 0; r < n; ++r) spec.observations.push_back("at" + std::to_string(a) + "_reads" + std::to_string(r));
  spec.observations.push_back("done");

  spec.transition.assign(3, Eigen::MatrixXd::Zero(ns, ns));
  spec.reward = Eigen::MatrixXd::Zero(ns, 3);
  spec.emission = Eigen::MatrixXd::Zero(ns, no);
  for (int agent = 0; agent < n; ++agent) {
    for (int target = 0; target < n; ++target) {
      const int s = agent * n + target;
      spec.transition[kMoveLeft](s, std::max(agent - 1, 0) * n + target) = 1.0;
      spec.transition[kMoveRight](s, std::min(agent + 1, n - 1) * n + target) = 1.0;
      if (agent == target) {
        spec.transition[kPick](s, success) = 1.0;
        spec.reward(s, kPick) = 1.0;
      } else {
        spec.transition[kPick](s, failed) = 1.0;
      }
      for (int r = 0; r < n; ++r)
        spec.emission(s, agent * n + r) = n == 1 ? 1.0 : (r == target ? 1.0 - obs_noise : obs_noise / (n - 1));
    }
  }
  for (int end : {success, failed}) {
    for (int a = 0; a < 3; ++a) spec.transition[static_cast<std::size_t>(a)](end, end) = 1.0;
    spec.emission(end, done_obs) = 1.0;
  }
  spec.initial = Eigen::VectorXd::Zero(ns);
  for (int t = 0; t < n; ++t) spec.initial(t) = 1.0 / n;
  spec.absorbing.assign(static_cast<std::size_t>(ns), false);
  spec.absorbing[static_cast<std::size_t>(success)] = true;
  spec.absorbing[static_cast<std::size_t>(failed)] = true;
  spec.gamma = gamma;
  spec.horizon = horizon;
  spec.validate();

  e.privileged = Eigen::MatrixXd::Zero(ns, n + 2);
  for (int s = 0; s < n * n; ++s) e.privileged(s, s % n) = 1.0;
  e.privileged(success, n) = 1.0;
  e.privileged(failed, n + 1) = 1.0;
  e.observation_features = Eigen::MatrixXd::Zero(no, 2 * n + 1);
  for (int agent = 0; agent < n; ++agent)
    for (int r = 0; r < n; ++r) {
      e.observation_features(agent * n + r, agent) = 1.0;
      e.observation_features(agent * n + r, n + r) = 1.0;
    }
  e.observation_features(done_obs, 2 * n) = 1.0;

  const double eps = e.demo_epsilon;
  e.demo_policy = [n, eps, done_obs](const AgentState& z) -> Eigen::VectorXd {
    const int o = z.latest().observation;
    Eigen::VectorXd nominal = Eigen::VectorXd::Zero(3);
    if (o == done_obs) return Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    const int agent = o / n, reading = o % n;
    nominal(reading == agent ? kPick : (reading < agent ? kMoveLeft : kMoveRight)) = 1.0;
    return mix_with_uniform(nominal, eps);
  };
  return e;
}

EnvCatalogEntry random_pomdp(int num_states, int num_actions, int num_observations, double gamma,
                             std::uint64_t seed) {
  if (num_states < 1 || num_actions < 1 || num_observations < 1) throw ConfigError("random_pomdp sizes must be >= 1");
  Rng rng(seed);
  auto random_row = [&](int n, double keep) {
    Eigen::VectorXd row(n);
    for (int i = 0; i < n; ++i) row(i) = uniform01(rng) < keep ? uniform01(rng) + 0.05 : 0.0;
    if (row.sum() <= 0.0) row(uniform_int(rng, n)) = 1.0;
    return Eigen::VectorXd(row / row.sum());
  };

  EnvCatalogEntry e;
  e.name = "random_pomdp";
  e.params = {{"num_states", num_states},
              {"num_actions", num_actions},
              {"num_observations", num_observations},
              {"gamma", gamma},
              {"seed", seed}};
  e.default_k = 1;
  auto& spec = e.spec;
  spec.states = numbered("s", num_states);
  spec.actions = numbered("a", num_actions);
  spec.observations = numbered("o", num_observations);
  for (int a = 0; a < num_actions; ++a) {
    Eigen::MatrixXd t(num_states, num_states);
    for (int s = 0; s < num_states; ++s) t.row(s) = random_row(num_states, 0.6).transpose();
    spec.transition.push_back(t);
  }
  spec.reward.resize(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) spec.reward(s, a) = 2.0 * uniform01(rng) - 1.0;
  spec.emission.resize(num_states, num_observations);
  for (int s = 0; s < num_states; ++s) spec.emission.row(s) = random_row(num_observations, 0.5).transpose();
  spec.initial = random_row(num_states, 0.7);
  spec.absorbing.assign(static_cast<std::size_t>(num_states), false);
  spec.gamma = gamma;
  spec.horizon = std::max(1, static_cast<int>(std::ceil(std::log(1e-4) / std::log(gamma))) + 1);
  spec.validate();

  e.privileged = Eigen::MatrixXd::Identity(num_states, num_states);
  e.observation_features = Eigen::MatrixXd::Identity(num_observations, num_observations);
  e.demo_policy = [num_actions](const AgentState&) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(num_actions, 1.0 / num_actions);
  };
  return e;
}

std::vector<std::string> catalog_names() { return {"hidden_target_grid", "tiger", "camouflage_line", "random_pomdp"}; }

EnvCatalogEntry make_env(const nlohmann::json& desc) {
  try {
    const auto name = desc.at("name").get<std::string>();
    if (name == "hidden_target_grid")
      return hidden_target_grid(desc.value("width", 5), desc.value("height", 5), desc.value("fov", 1),
                                desc.value("gamma", 0.9), desc.value("horizon", -1));
    if (name == "tiger")
      return tiger(desc.value("listen_accuracy", 0.85), desc.value("penalty", -100.0), desc.value("prize", 10.0),
                   desc.value("gamma", 0.95));
    if (name == "camouflage_line")
      return camouflage_line(desc.value("n_cells", 8), desc.value("obs_noise", 0.4), desc.value("gamma", 0.9),
                             desc.value("horizon", -1));
    if (name == "random_pomdp")
      return random_pomdp(desc.value("num_states", 4), desc.value("num_actions", 2), desc.value("num_observations", 2),
                          desc.value("gamma", 0.9), desc.value("seed", std::uint64_t{0}));
    throw ConfigError("unknown environment '" + name + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad environment description: ") + e.what());
  }
}

// --- interaction ------------------------------------------------------------

CatalogEnvironment::CatalogEnvironment(const EnvCatalogEntry& entry) : entry_(&entry), sim_(entry.spec, 1) {}

EnvStep CatalogEnvironment::reset(Rng& rng) {
  const auto r = sim_.reset(rng);
  return {r.observation, entry_->privileged.row(r.state).transpose(), r.state, 0.0, false};
}

EnvStep CatalogEnvironment::step(int action, Rng& rng) {
  const auto r = sim_.step(action, rng);
  return {r.next_observation, entry_->privileged.row(r.next_state).transpose(), r.next_state, r.reward, r.done};
}

EnvStep PoisonedEnvironment::poison(EnvStep s) {
  s.privileged.setConstant(std::numeric_limits<double>::quiet_NaN());
  s.state = std::numeric_limits<int>::min();
  return s;
}

Episode rollout_episode(Environment& env, const WindowPolicy& policy, int k, long episode_id, Rng& rng,
                        bool store_state) {
  Episode episode;
  EnvStep cur = env.reset(rng);
  AgentState z = AgentState::initial(k, cur.observation);
  for (int t = 0;; ++t) {
    const int a = sample_categorical(policy(z), rng);
    EnvStep next = env.step(a, rng);
    Transition tr;
    tr.episode_id = episode_id;
    tr.t = t;
    tr.o = cur.observation;
    tr.o_p.assign(cur.privileged.data(), cur.privileged.data() + cur.privileged.size());
    tr.a = a;
    tr.r = next.reward;
    tr.o_next = next.observation;
    tr.o_p_next.assign(next.privileged.data(), next.privileged.data() + next.privileged.size());
    tr.done = next.done;
    if (store_state) {
      tr.s = cur.state;
      tr.s_next = next.state;
    }
    episode.push_back(std::move(tr));
    if (next.done) break;
    z = z.updated(a, next.observation);
    cur = std::move(next);
  }
  return episode;
}

std::vector<Episode> scripted_demo_rollouts(const EnvCatalogEntry& entry, int n_episodes, std::uint64_t seed,
                                            bool store_state) {
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(std::max(n_episodes, 0)));
  CatalogEnvironment env(entry);
  for (int i = 0; i < n_episodes; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    out.push_back(rollout_episode(env, entry.demo_policy, entry.default_k, i, rng, store_state));
  }
  return out;
}

bool episode_success(const Episode& episode) { return !episode.empty() && episode.back().done && episode.back().r > 0.0; }

double success_rate(const std::vector<Episode>& episodes) {
  if (episodes.empty()) return 0.0;
  double hits = 0.0;
  for (const auto& e : episodes) hits += episode_success(e) ? 1.0 : 0.0;
  return hits / static_cast<double>(episodes.size());
}

}  // namespace aawr
