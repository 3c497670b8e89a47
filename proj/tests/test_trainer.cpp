#include <doctest.h>

#include <map>
#include <sstream>

#include "aawr/errors.hpp"
#include "aawr/records.hpp"
#include "aawr/replay.hpp"
#include "aawr/trainer.hpp"
#include "oracle_critic.hpp"

using namespace aawr;

namespace {

ReplayBuffer buffer_of(const std::vector<Episode>& episodes, int k) {
  ReplayBuffer b(k);
  for (const auto& ep : episodes) b.add_episode(ep);
  return b;
}

std::vector<double> flat_params(const std::vector<nn::NamedNetwork>& nets) {
  std::vector<double> out;
  for (const auto& n : nets)
    for (const auto& layer : n.net.layers()) {
      out.insert(out.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
      out.insert(out.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
    }
  return out;
}

TrainingConfig small_config(Method m, long n_off, long n_on) {
  TrainingConfig cfg;
  cfg.method = m;
  cfg.n_off = n_off;
  cfg.n_on = n_on;
  cfg.batch_size = 32;
  cfg.hidden = {16, 16};
  cfg.eval_episodes = 20;
  cfg.eval_every = 100;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("episode records round trip exactly") {
  const auto e = hidden_target_grid(5, 5, 1);
  const auto episodes = scripted_demo_rollouts(e, 100, 1);
  std::stringstream io;
  write_episodes(io, episodes);
  const std::string text = io.str();
  const auto back = read_episodes(io);
  CHECK(back == episodes);
  std::ostringstream again;
  write_episodes(again, back);
  CHECK(again.str() == text);

  std::istringstream empty("");
  CHECK(read_episodes(empty).empty());
}

TEST_CASE("malformed records name their line") {
  const auto episodes = scripted_demo_rollouts(tiger(), 3, 1);
  std::ostringstream out;
  write_episodes(out, episodes);
  std::vector<std::string> lines;
  std::istringstream split(out.str());
  for (std::string line; std::getline(split, line);) lines.push_back(line);
  REQUIRE(lines.size() >= 3);

  auto parse_with = [&](std::size_t index, const std::string& replacement) -> long {
    auto copy = lines;
    copy[index] = replacement;
    std::string text;
    for (const auto& l : copy) text += l + "\n";
    std::istringstream in(text);
    try {
      read_episodes(in);
    } catch (const ParseError& err) {
      return err.line_number;
    }
    return -1;
  };
  CHECK(parse_with(2, "{not json") == 3);
  CHECK(parse_with(1, R"({"episode_id": 0})") == 2);
  // A gap in t within an episode.
  auto bad = transition_from_json(nlohmann::json::parse(lines[1]));
  bad.t += 5;
  CHECK(parse_with(1, transition_to_json(bad).dump()) == 2);
}

TEST_CASE("privileged batches need o_p") {
  const auto e = tiger();
  auto episodes = scripted_demo_rollouts(e, 5, 2);
  for (auto& ep : episodes)
    for (auto& tr : ep) {
      tr.o_p.clear();
      tr.o_p_next.clear();
    }
  const ReplayBuffer buffer = buffer_of(episodes, e.default_k);
  CHECK_FALSE(buffer.all_privileged());
  const FeatureEncoder enc(e, e.default_k);
  std::vector<SampleRef> refs{{&buffer, 0}};
  CHECK_THROWS_AS(make_batch(refs, enc, CriticMode::Privileged), SchemaError);
  CHECK_NOTHROW(make_batch(refs, enc, CriticMode::Symmetric));

  Trainer aawr(small_config(Method::Aawr, 10, 0), e);
  RunMetrics m;
  CHECK_THROWS_AS(aawr.offline_phase(buffer, m), ConfigError);
  Trainer sawr(small_config(Method::Sawr, 10, 0), e);
  CHECK_NOTHROW(sawr.offline_phase(buffer, m));
}

TEST_CASE("mixed batches are half offline") {
  const auto e = tiger();
  const ReplayBuffer off = buffer_of(scripted_demo_rollouts(e, 50, 1), e.default_k);
  const ReplayBuffer on = buffer_of(scripted_demo_rollouts(e, 50, 2), e.default_k);
  const ReplayBuffer none(e.default_k);
  Rng rng(0);
  for (int i = 0; i < 10000; ++i) {
    const auto refs = sample_mixed(off, &on, 256, rng);
    REQUIRE(refs.size() == 256);
    long from_off = 0;
    for (const auto& r : refs) {
      from_off += r.buffer == &off;
      REQUIRE(r.index < r.buffer->size());
    }
    CHECK(from_off == 128);
  }
  for (const auto& r : sample_mixed(off, &none, 64, rng)) CHECK(r.buffer == &off);
}

TEST_CASE("zero budgets leave the networks untouched") {
  const auto e = tiger();
  const ReplayBuffer d_off = buffer_of(scripted_demo_rollouts(e, 20, 1), e.default_k);
  for (Method m : {Method::Aawr, Method::Sawr, Method::Bc}) {
    Trainer fresh(small_config(m, 0, 0), e);
    Trainer tr(small_config(m, 0, 0), e);
    ReplayBuffer d_on(e.default_k);
    RunMetrics metrics;
    tr.offline_phase(d_off, metrics);
    tr.online_phase(d_off, d_on, metrics);
    CHECK(flat_params(tr.agent().to_checkpoint()) == flat_params(fresh.agent().to_checkpoint()));
    REQUIRE(metrics.rows.size() == 1);
    CHECK(metrics.rows[0].phase == "init");
    CHECK(d_on.empty());
  }
}

TEST_CASE("large beta imitates the behaviour at observed agent states") {
  const auto e = tiger();
  // Ten transitions of a uniform behaviour policy.
  CatalogEnvironment env(e);
  Rng rng(5);
  const WindowPolicy uniform = [](const AgentState&) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(3, 1.0 / 3.0); };
  ReplayBuffer d_off(e.default_k);
  for (long id = 0; d_off.size() < 10; ++id) {
    Episode ep = rollout_episode(env, uniform, e.default_k, id, rng, false);
    if (d_off.size() + ep.size() <= 10) d_off.add_episode(ep);
  }
  std::map<AgentState, Eigen::VectorXd> empirical;
  for (std::size_t i = 0; i < d_off.size(); ++i) {
    auto [it, inserted] = empirical.try_emplace(d_off.agent_state(i), Eigen::VectorXd::Zero(3));
    it->second(d_off.transition(i).a) += 1.0;
  }

  TrainingConfig cfg = small_config(Method::Aawr, 10000, 0);
  cfg.beta = 1e8;
  cfg.lr_actor = cfg.lr_critic = 1e-3;
  cfg.eval_every = 10000;
  cfg.eval_episodes = 1;
  Trainer tr(cfg, e);
  RunMetrics metrics;
  tr.offline_phase(d_off, metrics);
  for (const auto& [z, counts] : empirical) {
    const Eigen::VectorXd target = counts / counts.sum();
    CHECK(0.5 * (tr.action_distribution(z) - target).cwiseAbs().sum() < 0.05);
  }
}

TEST_CASE("deployment never reads privileged fields") {
  const auto e = hidden_target_grid(4, 4, 1);
  const ReplayBuffer d_off = buffer_of(scripted_demo_rollouts(e, 30, 1), e.default_k);
  Trainer tr(small_config(Method::Aawr, 200, 0), e);
  RunMetrics metrics;
  tr.offline_phase(d_off, metrics);
  CatalogEnvironment clean(e);
  CatalogEnvironment inner(e);
  PoisonedEnvironment poisoned(inner);
  const MetricsRow a = tr.evaluate(clean, 50, 9), b = tr.evaluate(poisoned, 50, 9);
  CHECK(a.success_rate == b.success_rate);
  CHECK(a.mean_return == b.mean_return);
  CHECK(a.mean_episode_length == b.mean_episode_length);
}

TEST_CASE("identical seeds give identical metrics") {
  const auto e = camouflage_line(4, 0.3);
  const ReplayBuffer d_off = buffer_of(scripted_demo_rollouts(e, 30, 1), e.default_k);
  auto run = [&](std::uint64_t seed) {
    TrainingConfig cfg = small_config(Method::Aawr, 200, 200);
    cfg.seed = seed;
    Trainer tr(cfg, e);
    ReplayBuffer d_on(e.default_k);
    RunMetrics metrics;
    tr.offline_phase(d_off, metrics);
    tr.online_phase(d_off, d_on, metrics);
    return metrics.to_csv();
  };
  const std::string first = run(4);
  CHECK(first == run(4));
  CHECK(first != run(5));
}

TEST_CASE("online phase interleaves collection and updates") {
  const auto e = camouflage_line(4, 0.3);
  const ReplayBuffer d_off = buffer_of(scripted_demo_rollouts(e, 30, 1), e.default_k);
  Trainer tr(small_config(Method::Aawr, 0, 150), e);
  ReplayBuffer d_on(e.default_k);
  RunMetrics metrics;
  tr.online_phase(d_off, d_on, metrics);
  // One gradient step per collected transition.
  CHECK(tr.agent().grad_steps == tr.agent().env_steps);
  CHECK(static_cast<long>(d_on.size()) == tr.agent().env_steps);
  CHECK(tr.agent().env_steps >= 150);
  for (std::size_t i = 1; i < metrics.rows.size(); ++i) {
    CHECK(metrics.rows[i].grad_step >= metrics.rows[i - 1].grad_step);
    CHECK(metrics.rows[i].env_step >= metrics.rows[i - 1].env_step);
  }
}

TEST_CASE("bc online phase trains on the demonstrations only") {
  const auto e = camouflage_line(4, 0.3);
  const ReplayBuffer d_off = buffer_of(scripted_demo_rollouts(e, 30, 1), e.default_k);
  Trainer tr(small_config(Method::Bc, 0, 100), e);
  ReplayBuffer d_on(e.default_k);
  RunMetrics metrics;
  tr.online_phase(d_off, d_on, metrics);
  CHECK(d_on.empty());
  CHECK(tr.agent().grad_steps == tr.agent().env_steps);
  CHECK(tr.agent().env_steps >= 100);
}

TEST_CASE("bc keeps only successful episodes") {
  const auto e = tiger();
  const ReplayBuffer all = buffer_of(scripted_demo_rollouts(e, 100, 4), e.default_k);
  const ReplayBuffer kept = successful_episodes(all);
  CHECK(kept.num_episodes() > 0);
  CHECK(kept.num_episodes() < all.num_episodes());
  for (const auto& ep : kept.episodes()) CHECK(episode_success(ep));
}

TEST_CASE("training config validation and json") {
  TrainingConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 255;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.tau = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(training_config_from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
  TrainingConfig custom;
  custom.method = Method::Sawr;
  custom.beta = 0.5;
  custom.k = 3;
  custom.hidden = {8, 4};
  CHECK(to_json(training_config_from_json(to_json(custom))) == to_json(custom));
}

TEST_CASE("metrics csv round trip") {
  RunMetrics m;
  m.rows.push_back({"init", 0, 0, 0.25, 0.25, 30.0, 0, 0, 0, 0, 0, 0});
  m.rows.push_back({"offline", 100, 0, 0.5, 0.5, 12.5, 0.1, 0.2, 0.3, 1.5, 7.0, 0.01});
  const RunMetrics back = RunMetrics::from_csv(m.to_csv());
  CHECK(back.to_csv() == m.to_csv());
  CHECK(m.to_csv().rfind(RunMetrics::header(), 0) == 0);
}

TEST_CASE("oracle critics drive the policy to the closed-form update") {
  const auto r = testing::tiger_oracle_critic_tv(6000, 1);
  MESSAGE("weighted tv " << r.weighted_tv << " max tv " << r.max_tv);
  CHECK(r.weighted_tv < 0.02);
}
