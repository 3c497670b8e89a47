#include <doctest.h>

#include <cmath>
#include <map>

#include "aawr/env_agent_mdp.hpp"
#include "aawr/envs.hpp"
#include "aawr/errors.hpp"
#include "aawr/oracle.hpp"

using namespace aawr;
namespace oc = aawr::oracle;

namespace {

using JointMap = std::map<std::pair<int, AgentState>, double>;

// One step of the (s, window) distribution under a window policy, written
// directly against the spec tables. Mass entering an absorbing state is
// reported through `on_absorb` and dropped.
template <typename Fn>
JointMap propagate(const PomdpSpec& spec, const EnvAgentMdp& mdp, const oc::Policy& pi, const JointMap& p,
                   Fn&& on_reward) {
  JointMap next;
  for (const auto& [key, mass] : p) {
    const auto& [s, z] = key;
    const int zi = mdp.find_agent_state(z);
    for (int a = 0; a < spec.num_actions(); ++a) {
      const double pa = mass * pi(zi, a);
      if (pa <= 0.0) continue;
      on_reward(pa, spec.reward(s, a));
      for (int s2 = 0; s2 < spec.num_states(); ++s2) {
        const double pt = spec.transition[static_cast<std::size_t>(a)](s, s2);
        if (pt <= 0.0 || spec.is_absorbing(s2)) continue;
        for (int o = 0; o < spec.num_observations(); ++o)
          if (spec.emission(s2, o) > 0.0) next[{s2, z.updated(a, o)}] += pa * pt * spec.emission(s2, o);
      }
    }
  }
  return next;
}

JointMap initial_map(const PomdpSpec& spec, int k) {
  JointMap p;
  for (int s = 0; s < spec.num_states(); ++s)
    for (int o = 0; o < spec.num_observations(); ++o)
      if (spec.initial(s) * spec.emission(s, o) > 0.0) p[{s, AgentState::initial(k, o)}] += spec.initial(s) * spec.emission(s, o);
  return p;
}

double discounted_return_by_propagation(const PomdpSpec& spec, const EnvAgentMdp& mdp, const oc::Policy& pi, int steps) {
  JointMap p = initial_map(spec, mdp.window);
  double j = 0.0, disc = 1.0;
  for (int t = 0; t < steps && !p.empty(); ++t) {
    p = propagate(spec, mdp, pi, p, [&](double pa, double r) { j += disc * pa * r; });
    disc *= spec.gamma;
  }
  return j;
}

// Two aliased states share one observation; both then move to a terminal state.
PomdpSpec aliased_pair(double r0, double r1) {
  PomdpSpec spec;
  spec.states = {"a", "b", "end"};
  spec.actions = {"go"};
  spec.observations = {"same", "end"};
  spec.transition = {Eigen::MatrixXd::Zero(3, 3)};
  spec.transition[0].col(2).setOnes();
  spec.reward = Eigen::MatrixXd::Zero(3, 1);
  spec.reward(0, 0) = r0;
  spec.reward(1, 0) = r1;
  spec.emission = Eigen::MatrixXd::Zero(3, 2);
  spec.emission(0, 0) = spec.emission(1, 0) = spec.emission(2, 1) = 1.0;
  spec.initial = Eigen::Vector3d(0.5, 0.5, 0.0);
  spec.absorbing = {false, false, true};
  spec.gamma = 0.9;
  spec.horizon = 5;
  spec.validate();
  return spec;
}

PomdpSpec cycle(double gamma) {
  PomdpSpec spec;
  spec.states = {"a", "b"};
  spec.actions = {"go"};
  spec.observations = {"a", "b"};
  spec.transition = {(Eigen::Matrix2d() << 0, 1, 1, 0).finished()};
  spec.reward = Eigen::Vector2d(1.0, 0.0);
  spec.emission = Eigen::Matrix2d::Identity();
  spec.initial = Eigen::Vector2d(1.0, 0.0);
  spec.gamma = gamma;
  spec.horizon = 10;
  spec.validate();
  return spec;
}

}  // namespace

TEST_CASE("zero discount collapses Q to R") {
  const auto e = random_pomdp(5, 3, 2, 0.9, 4);
  EnvAgentMdp mdp = build_env_agent_mdp(e.spec, 2);
  mdp.gamma = 0.0;
  const oc::Policy mu = oc::random_policy(mdp, 1);
  const auto priv = oc::evaluate_privileged(mdp, mu);
  CHECK((priv.q - mdp.reward).cwiseAbs().maxCoeff() < 1e-12);

  const auto vis = oc::discounted_visitation(mdp, mu);
  const auto sym = oc::symmetric_values(mdp, priv, vis);
  const auto td = oc::symmetric_td_fixed_point(mdp, mu, vis);
  for (int z = 0; z < mdp.num_agent_states(); ++z) {
    if (!vis.reachable[static_cast<std::size_t>(z)]) continue;
    Eigen::RowVectorXd expected = Eigen::RowVectorXd::Zero(mdp.num_actions);
    for (int j : mdp.members()[static_cast<std::size_t>(z)]) expected += vis.conditional(j) * mdp.reward.row(j);
    CHECK((td.q.row(z) - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sym.q.row(z) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("tiger k=1 values agree with Monte Carlo") {
  const auto e = tiger();
  const EnvAgentMdp mdp = build_env_agent_mdp(e.spec, 1);
  const oc::Policy mu = oc::uniform_policy(mdp);
  const auto priv = oc::evaluate_privileged(mdp, mu);
  const double j = oc::expected_return(mdp, priv.v);

  // Q(s, z, a) at the two initial joint states, first action forced.
  Rng rng(123);
  const int n = 1'000'000;
  for (int s0 : {0, 1}) {
    const int j0 = mdp.find(s0, AgentState::initial(1, 0));
    REQUIRE(j0 >= 0);
    for (int a0 = 0; a0 < 3; ++a0) {
      double sum = 0.0, sq = 0.0;
      for (int i = 0; i < n / 6; ++i) {
        int s = s0, a = a0;
        double g = 0.0, disc = 1.0;
        for (int t = 0; t < 2000; ++t) {
          const StepResult r = step(e.spec, s, a, 0, rng);
          g += disc * r.reward;
          disc *= e.spec.gamma;
          if (r.done) break;
          s = r.next_state;
          a = uniform_int(rng, 3);
        }
        sum += g;
        sq += g * g;
      }
      const double m = n / 6, mean = sum / m, se = std::sqrt((sq / m - mean * mean) / m);
      CHECK(std::abs(mean - priv.q(j0, a0)) < 3.0 * se + 1e-9);
    }
  }
  CHECK(std::abs(j - discounted_return_by_propagation(e.spec, mdp, mu, 800)) < 1e-9);
}

TEST_CASE("fully observed Q depends only on the current observation") {
  const auto e = camouflage_line(4, 0.0);
  const EnvAgentMdp mdp = build_env_agent_mdp(e.spec, 3);
  const auto priv = oc::evaluate_privileged(mdp, oc::random_policy(mdp, 5));
  // With noiseless readings and mu depending on the whole window, Q still
  // varies with z; a window-blind policy removes that dependence.
  const oc::Policy mu = oc::uniform_policy(mdp);
  const auto q = oc::evaluate_privileged(mdp, mu).q;
  std::map<int, Eigen::RowVectorXd> by_state;
  for (int j = 0; j < mdp.num_joint(); ++j) {
    const int s = mdp.joint_states[static_cast<std::size_t>(j)].state;
    auto [it, inserted] = by_state.emplace(s, q.row(j));
    if (!inserted) CHECK((it->second - q.row(j)).cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK(priv.q.rows() == mdp.num_joint());
}

TEST_CASE("visitation closed forms") {
  SUBCASE("single state") {
    PomdpSpec spec = cycle(0.5);
    spec.states = {"only"};
    spec.observations = {"only"};
    spec.transition = {Eigen::MatrixXd::Ones(1, 1)};
    spec.reward = Eigen::MatrixXd::Zero(1, 1);
    spec.emission = Eigen::MatrixXd::Ones(1, 1);
    spec.initial = Eigen::VectorXd::Ones(1);
    const EnvAgentMdp mdp = build_env_agent_mdp(spec, 1);
    const auto vis = oc::discounted_visitation(mdp, oc::uniform_policy(mdp));
    // The window still tells the first step apart from later ones.
    CHECK(std::abs(vis.joint.sum() - 1.0) < 1e-12);
    CHECK(std::abs(vis.joint(mdp.find(0, AgentState::initial(1, 0))) - 0.5) < 1e-12);
  }
  SUBCASE("two-state cycle") {
    const EnvAgentMdp mdp = build_env_agent_mdp(cycle(0.5), 1);
    for (auto method : {oc::EvalMethod::Iterate, oc::EvalMethod::DirectSolve}) {
      const auto vis = oc::discounted_visitation(mdp, oc::uniform_policy(mdp), oc::kDefaultTol, method);
      double d0 = 0.0;
      for (int j = 0; j < mdp.num_joint(); ++j)
        if (mdp.joint_states[static_cast<std::size_t>(j)].state == 0) d0 += vis.joint(j);
      CHECK(std::abs(d0 - 2.0 / 3.0) < 1e-10);
      CHECK(std::abs(vis.joint.sum() - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("tiger visitation agrees with Monte Carlo occupancy") {
  const auto e = tiger();
  const EnvAgentMdp mdp = build_env_agent_mdp(e.spec, 1);
  const oc::Policy mu = oc::uniform_policy(mdp);
  const auto vis = oc::discounted_visitation(mdp, mu);
  Simulator sim(e.spec, 1);
  Rng rng(77);
  const int n = 1'000'000;
  const double g = e.spec.gamma;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(mdp.num_joint()), sq = sum;
  Eigen::VectorXd ep(mdp.num_joint());
  for (int i = 0; i < n; ++i) {
    ep.setZero();
    sim.reset(rng);
    double disc = 1.0 - g;
    while (!sim.done()) {
      ep(mdp.find(sim.state(), sim.agent_state())) += disc;
      sim.step(uniform_int(rng, 3), rng);
      disc *= g;
    }
    if (e.spec.is_absorbing(sim.state())) ep(mdp.find(sim.state(), sim.agent_state())) += disc / (1.0 - g);
    sum += ep;
    sq += ep.cwiseProduct(ep);
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd se = ((sq / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
  for (int j = 0; j < mdp.num_joint(); ++j) CHECK(std::abs(mean(j) - vis.joint(j)) < 3.0 * se(j) + 1e-6);
}

TEST_CASE("symmetric values average over aliased states") {
  const PomdpSpec spec = aliased_pair(0.0, 2.0);
  const EnvAgentMdp mdp = build_env_agent_mdp(spec, 1);
  const auto table = oc::evaluate(mdp, oc::uniform_policy(mdp));
  const int z = mdp.find_agent_state(AgentState::initial(1, 0));
  CHECK(std::abs(table.q_sym(z, 0) - 1.0) < 1e-12);
  CHECK(std::abs(table.v_sym(z) - 1.0) < 1e-12);
}

TEST_CASE("without aliasing symmetric and privileged tables coincide") {
  const auto e = camouflage_line(4, 0.0);
  const EnvAgentMdp mdp = build_env_agent_mdp(e.spec, 1);
  const oc::Policy mu = oc::random_policy(mdp, 8);
  const auto table = oc::evaluate(mdp, mu);
  const auto td = oc::symmetric_td_fixed_point(mdp, mu, table.visitation);
  for (int j = 0; j < mdp.num_joint(); ++j) {
    const int z = mdp.joint_states[static_cast<std::size_t>(j)].agent_state;
    if (!table.visitation.reachable[static_cast<std::size_t>(z)]) continue;
    CHECK((table.q_sym.row(z) - table.q_priv.row(j)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((td.q.row(z) - table.q_priv.row(j)).cwiseAbs().maxCoeff() < 1e-8);
  }
  CHECK(td.max_contraction_ratio < mdp.gamma + 1e-6);
}

TEST_CASE("tiger symmetric values from history enumeration") {
  const auto e = tiger();
  const int k = 2;
  const EnvAgentMdp mdp = build_env_agent_mdp(e.spec, k);
  const oc::Policy mu = oc::random_policy(mdp, 21);
  const auto table = oc::evaluate(mdp, mu);

  // Discounted occupancy of (s, window) by forward enumeration.
  std::map<std::pair<int, AgentState>, double> occupancy;
  JointMap p = initial_map(e.spec, k);
  double disc = 1.0;
  for (int t = 0; t < 900 && !p.empty(); ++t) {
    for (const auto& [key, mass] : p) occupancy[key] += disc * mass;
    p = propagate(e.spec, mdp, mu, p, [](double, double) {});
    disc *= e.spec.gamma;
  }
  std::map<int, std::pair<Eigen::RowVectorXd, double>> acc;
  for (const auto& [key, w] : occupancy) {
    const int j = mdp.find(key.first, key.second);
    REQUIRE(j >= 0);
    const int z = mdp.joint_states[static_cast<std::size_t>(j)].agent_state;
    auto [it, inserted] = acc.try_emplace(z, Eigen::RowVectorXd::Zero(3), 0.0);
    it->second.first += w * table.q_priv.row(j);
    it->second.second += w;
  }
  for (const auto& [z, sums] : acc)
    CHECK((sums.first / sums.second - table.q_sym.row(z)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("behaviour advantages average to zero") {
  const auto e = random_pomdp(6, 3, 2, 0.9, 12);
  const EnvAgentMdp mdp = build_env_agent_mdp(e.spec, 2);
  const oc::Policy mu = oc::random_policy(mdp, 2);
  const auto table = oc::evaluate(mdp, mu);
  oc::PrivilegedValues priv{table.q_priv, table.v_priv, 0};
  oc::SymmetricValues sym{table.q_sym, table.v_sym, table.visitation.reachable};
  const Eigen::MatrixXd a_priv = oc::privileged_advantage(priv);
  const Eigen::MatrixXd a_sym = oc::symmetric_advantage(sym);
  for (int j = 0; j < mdp.num_joint(); ++j) {
    const int z = mdp.joint_states[static_cast<std::size_t>(j)].agent_state;
    CHECK(std::abs(mu.row(z).dot(a_priv.row(j))) < 1e-10);
  }
  for (int z = 0; z < mdp.num_agent_states(); ++z)
    if (table.visitation.reachable[static_cast<std::size_t>(z)]) CHECK(std::abs(mu.row(z).dot(a_sym.row(z))) < 1e-10);
}

TEST_CASE("large beta returns the behaviour policy") {
  const auto e = random_pomdp(5, 3, 2, 0.9, 3);
  const EnvAgentMdp mdp = build_env_agent_mdp(e.spec, 2);
  const oc::Policy mu = oc::random_policy(mdp, 4);
  const auto table = oc::evaluate(mdp, mu);
  const Eigen::MatrixXd adv = oc::privileged_advantage({table.q_priv, table.v_priv, 0});
  const oc::Policy pi = oc::awr_update_privileged(mdp, mu, adv, 1e9, table.visitation);
  CHECK(oc::total_variation(pi, mu).maxCoeff() < 1e-6);
  const oc::Policy pi_sym = oc::awr_update_symmetric(mu, oc::symmetric_advantage({table.q_sym, table.v_sym, {}}), 1e9);
  CHECK(oc::total_variation(pi_sym, mu).maxCoeff() < 1e-6);
}

TEST_CASE("expected return matches forward propagation") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto e = random_pomdp(4, 2, 2, 0.8, seed);
    const EnvAgentMdp mdp = build_env_agent_mdp(e.spec, 2);
    const oc::Policy pi = oc::random_policy(mdp, seed + 10);
    CHECK(std::abs(oc::expected_return(mdp, pi) - discounted_return_by_propagation(e.spec, mdp, pi, 200)) < 1e-9);
  }
}

TEST_CASE("policy improvement identity") {
  const auto e = random_pomdp(5, 3, 2, 0.9, 30);
  const EnvAgentMdp mdp = build_env_agent_mdp(e.spec, 2);
  const oc::Policy mu = oc::random_policy(mdp, 1), pi = oc::random_policy(mdp, 2);
  const auto priv = oc::evaluate_privileged(mdp, mu);
  const double lhs = oc::expected_return(mdp, pi) - oc::expected_return(mdp, mu);
  CHECK(std::abs(lhs - oc::policy_improvement_from_advantage(mdp, pi, oc::privileged_advantage(priv))) < 1e-8);
}

TEST_CASE("policy validation") {
  const EnvAgentMdp mdp = build_env_agent_mdp(tiger().spec, 1);
  oc::Policy bad = oc::uniform_policy(mdp);
  bad(0, 0) += 0.1;
  CHECK_THROWS_AS(oc::validate_policy(mdp, bad), ValidationError);
  CHECK_THROWS_AS(oc::validate_policy(mdp, oc::Policy::Constant(1, 3, 1.0 / 3.0)), ValidationError);
}

TEST_CASE("uniform grid success over the horizon") {
  const auto e = hidden_target_grid(5, 5, 1);
  const PomdpSpec& spec = e.spec;
  // Uniform actions ignore the window, so the state distribution suffices.
  Eigen::RowVectorXd p = spec.initial.transpose();
  double success = 0.0;
  for (int t = 0; t < spec.horizon; ++t) {
    Eigen::RowVectorXd next = Eigen::RowVectorXd::Zero(spec.num_states());
    for (int a = 0; a < 5; ++a) {
      success += 0.2 * p.dot(spec.reward.col(a));
      next += 0.2 * p * spec.transition[static_cast<std::size_t>(a)];
    }
    next(spec.num_states() - 1) = 0.0;  // drop absorbed mass
    p = next;
  }
  CatalogEnvironment env(e);
  Rng rng(404);
  const WindowPolicy uniform = [](const AgentState&) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(5, 0.2); };
  const int n = 20000;
  double hits = 0.0;
  for (int i = 0; i < n; ++i) hits += episode_success(rollout_episode(env, uniform, 1, i, rng, false)) ? 1.0 : 0.0;
  CHECK(std::abs(hits / n - success) < 3.0 * std::sqrt(success * (1.0 - success) / n));
}

TEST_CASE("tiger optimal policy success rate") {
  const auto e = tiger();
  const EnvAgentMdp mdp = build_env_agent_mdp(e.spec, 4);
  const oc::Policy pi = oc::window_policy_iteration(mdp).policy;
  // Probability of opening the prize door within the horizon.
  JointMap p = initial_map(e.spec, 4);
  double success = 0.0;
  for (int t = 0; t < e.spec.horizon && !p.empty(); ++t)
    p = propagate(e.spec, mdp, pi, p, [&](double pa, double r) { success += r > 0.0 ? pa : 0.0; });

  CatalogEnvironment env(e);
  const WindowPolicy policy = [&](const AgentState& z) -> Eigen::VectorXd {
    return pi.row(mdp.find_agent_state(z)).transpose();
  };
  Rng rng(8);
  const int n = 20000;
  double hits = 0.0;
  for (int i = 0; i < n; ++i) hits += episode_success(rollout_episode(env, policy, 4, i, rng, false)) ? 1.0 : 0.0;
  MESSAGE("tiger optimal success " << success);
  CHECK(success > 0.5);
  CHECK(std::abs(hits / n - success) < 3.0 * std::sqrt(success * (1.0 - success) / n));
}
