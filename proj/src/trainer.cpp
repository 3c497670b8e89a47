#include "aawr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aawr/errors.hpp"

namespace aawr {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::Aawr: return "aawr";
    case Method::Sawr: return "sawr";
    case Method::Bc: return "bc";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "aawr") return Method::Aawr;
  if (name == "sawr") return Method::Sawr;
  if (name == "bc") return Method::Bc;
  throw ConfigError("unknown method '" + name + "' (expected aawr, sawr or bc)");
}

void TrainingConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  if (gamma && !(*gamma > 0.0 && *gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(weight_clip >= 1.0)) throw ConfigError("weight_clip must be >= 1");
  if (n_off < 0 || n_on < 0) throw ConfigError("n_off and n_on must be >= 0");
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch_size must be even and >= 2");
  if (!(lr_actor > 0.0) || !(lr_critic > 0.0)) throw ConfigError("learning rates must be > 0");
  if (!(target_update_rate > 0.0 && target_update_rate <= 1.0)) throw ConfigError("target_update_rate must lie in (0, 1]");
  if (k && *k < 1) throw ConfigError("k must be >= 1");
  if (hidden.empty()) throw ConfigError("hidden must list at least one layer size");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  if (replay_capacity == 0) throw ConfigError("replay_capacity must be positive");
  if (eval_episodes < 0) throw ConfigError("eval_episodes must be >= 0");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

TrainingConfig training_config_from_json(const json& j, TrainingConfig cfg) {
  if (!j.is_object()) throw ConfigError("training config must be an object");
  static const std::vector<std::string> known = {
      "method", "beta", "tau", "gamma", "weight_clip", "n_off", "n_on", "batch_size", "lr_actor", "lr_critic",
      "target_update_rate", "k", "seed", "hidden", "replay_capacity", "eval_episodes", "eval_every", "eval_greedy"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown training key '" + key + "'");
  try {
    if (j.contains("method")) cfg.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
    if (j.contains("tau")) cfg.tau = j.at("tau").get<double>();
    if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
    if (j.contains("weight_clip")) cfg.weight_clip = j.at("weight_clip").get<double>();
    if (j.contains("n_off")) cfg.n_off = j.at("n_off").get<long>();
    if (j.contains("n_on")) cfg.n_on = j.at("n_on").get<long>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("lr_actor")) cfg.lr_actor = j.at("lr_actor").get<double>();
    if (j.contains("lr_critic")) cfg.lr_critic = j.at("lr_critic").get<double>();
    if (j.contains("target_update_rate")) cfg.target_update_rate = j.at("target_update_rate").get<double>();
    if (j.contains("k")) cfg.k = j.at("k").get<int>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<int>>();
    if (j.contains("replay_capacity")) cfg.replay_capacity = j.at("replay_capacity").get<std::size_t>();
    if (j.contains("eval_episodes")) cfg.eval_episodes = j.at("eval_episodes").get<int>();
    if (j.contains("eval_every")) cfg.eval_every = j.at("eval_every").get<long>();
    if (j.contains("eval_greedy")) cfg.eval_greedy = j.at("eval_greedy").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json to_json(const TrainingConfig& cfg) {
  json j = {{"method", to_string(cfg.method)},
            {"beta", cfg.beta},
            {"tau", cfg.tau},
            {"weight_clip", cfg.weight_clip},
            {"n_off", cfg.n_off},
            {"n_on", cfg.n_on},
            {"batch_size", cfg.batch_size},
            {"lr_actor", cfg.lr_actor},
            {"lr_critic", cfg.lr_critic},
            {"target_update_rate", cfg.target_update_rate},
            {"seed", cfg.seed},
            {"hidden", cfg.hidden},
            {"replay_capacity", cfg.replay_capacity},
            {"eval_episodes", cfg.eval_episodes},
            {"eval_every", cfg.eval_every},
            {"eval_greedy", cfg.eval_greedy}};
  if (cfg.gamma) j["gamma"] = *cfg.gamma;
  if (cfg.k) j["k"] = *cfg.k;
  return j;
}

// ---------------------------------------------------------------- metrics

const char* RunMetrics::header() {
  return "phase,grad_step,env_step,success_rate,mean_return,mean_episode_length,q_loss,v_loss,policy_loss,"
         "weight_mean,weight_max,weight_clip_fraction";
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

}  // namespace

std::string RunMetrics::to_csv() const {
  std::string out = std::string(header()) + "\n";
  for (const auto& r : rows) {
    out += r.phase + "," + std::to_string(r.grad_step) + "," + std::to_string(r.env_step) + "," + fmt(r.success_rate) +
           "," + fmt(r.mean_return) + "," + fmt(r.mean_episode_length) + "," + fmt(r.q_loss) + "," + fmt(r.v_loss) +
           "," + fmt(r.policy_loss) + "," + fmt(r.weight_mean) + "," + fmt(r.weight_max) + "," +
           fmt(r.weight_clip_fraction) + "\n";
  }
  return out;
}

RunMetrics RunMetrics::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != header()) throw ParseError("metrics header mismatch", 1);
  RunMetrics m;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 12) throw ParseError("expected 12 columns", line_no);
    try {
      MetricsRow r;
      r.phase = cells[0];
      r.grad_step = std::stol(cells[1]);
      r.env_step = std::stol(cells[2]);
      double* dst[] = {&r.success_rate, &r.mean_return, &r.mean_episode_length, &r.q_loss,    &r.v_loss,
                       &r.policy_loss,  &r.weight_mean, &r.weight_max,          &r.weight_clip_fraction};
      for (std::size_t i = 0; i < 9; ++i) *dst[i] = std::stod(cells[i + 3]);
      m.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError("bad number", line_no);
    }
  }
  return m;
}

void RunMetrics::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_csv();
}

RunMetrics RunMetrics::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

// ---------------------------------------------------------------- networks

std::vector<nn::NamedNetwork> AgentNetworks::to_checkpoint() const {
  std::vector<nn::NamedNetwork> out{{"policy", policy, policy_opt}};
  if (has_critics()) {
    out.push_back({"q", q.net, q_opt});
    out.push_back({"v", v.net, v_opt});
    out.push_back({"q_target", q_target.net, std::nullopt});
    out.push_back({"v_target", v_target.net, std::nullopt});
  }
  return out;
}

AgentNetworks AgentNetworks::from_checkpoint(const std::vector<nn::NamedNetwork>& nets, CriticMode mode) {
  AgentNetworks a;
  bool have_policy = false;
  for (const auto& n : nets) {
    if (n.name == "policy") {
      a.policy = n.net;
      a.policy_opt = n.adam ? *n.adam : nn::AdamState<double>::for_params(n.net);
      have_policy = true;
    } else if (n.name == "q") {
      a.q = {n.net, mode};
      a.q_opt = n.adam ? *n.adam : nn::AdamState<double>::for_params(n.net);
    } else if (n.name == "v") {
      a.v = {n.net, mode};
      a.v_opt = n.adam ? *n.adam : nn::AdamState<double>::for_params(n.net);
    } else if (n.name == "q_target") {
      a.q_target = {n.net, mode};
    } else if (n.name == "v_target") {
      a.v_target = {n.net, mode};
    }
  }
  if (!have_policy) throw ParseError("checkpoint has no policy network");
  return a;
}

// ---------------------------------------------------------------- trainer

namespace {

CriticMode mode_for(Method m) { return m == Method::Aawr ? CriticMode::Privileged : CriticMode::Symmetric; }

}  // namespace

Trainer::Trainer(TrainingConfig cfg, const EnvCatalogEntry& env)
    : cfg_(std::move(cfg)),
      env_(&env),
      encoder_(env, cfg_.k.value_or(env.default_k)),
      gamma_(cfg_.gamma.value_or(env.spec.gamma)),
      mode_(mode_for(cfg_.method)),
      sample_rng_(derive_seed(cfg_.seed, 101)),
      collect_rng_(derive_seed(cfg_.seed, 102)),
      eval_seed_(derive_seed(cfg_.seed, 103)) {
  cfg_.validate();
  const int na = env.spec.num_actions();
  auto sizes = [&](int in, int out) {
    std::vector<int> s{in};
    s.insert(s.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    s.push_back(out);
    return s;
  };
  agent_.policy = nn::Mlp<double>::init(sizes(encoder_.agent_state_dim(), na), derive_seed(cfg_.seed, 11),
                                        nn::Activation::Relu, nn::OutputHead::CategoricalLogits);
  agent_.policy_opt = nn::AdamState<double>::for_params(agent_.policy);
  if (cfg_.method != Method::Bc) {
    const int dc = encoder_.critic_dim(mode_);
    agent_.q = {nn::Mlp<double>::init(sizes(dc, na), derive_seed(cfg_.seed, 12), nn::Activation::Relu), mode_};
    agent_.v = {nn::Mlp<double>::init(sizes(dc, 1), derive_seed(cfg_.seed, 13), nn::Activation::Relu), mode_};
    agent_.q_target = agent_.q;
    agent_.v_target = agent_.v;
    agent_.q_opt = nn::AdamState<double>::for_params(agent_.q.net);
    agent_.v_opt = nn::AdamState<double>::for_params(agent_.v.net);
  }
}

void Trainer::check_buffer(const ReplayBuffer& buffer) const {
  if (buffer.window() != window()) throw ConfigError("replay buffer window length differs from the trainer's");
  if (mode_ == CriticMode::Privileged && !buffer.all_privileged())
    throw ConfigError("aawr needs privileged observations (o_p) on every transition");
}

Batch Trainer::sample_batch(const ReplayBuffer& d_off, const ReplayBuffer* d_on) {
  return make_batch(sample_mixed(d_off, d_on, static_cast<std::size_t>(cfg_.batch_size), sample_rng_), encoder_, mode_);
}

UpdateStats Trainer::update(const Batch& batch) {
  UpdateStats stats;
  if (cfg_.method == Method::Bc) {
    auto bc = bc_loss(batch, agent_.policy);
    nn::adam_step(agent_.policy, bc.grads, agent_.policy_opt, cfg_.lr_actor);
    stats.policy_loss = bc.loss;
    stats.weights = {1.0, 1.0, 0.0};
  } else {
    auto q = q_td_loss(batch, agent_.q, agent_.v_target, gamma_);
    nn::adam_step(agent_.q.net, q.grads, agent_.q_opt, cfg_.lr_critic);
    auto v = v_expectile_loss(batch, agent_.v, agent_.q_target, cfg_.tau);
    nn::adam_step(agent_.v.net, v.grads, agent_.v_opt, cfg_.lr_critic);
    auto pi = cfg_.method == Method::Aawr
                  ? aawr_policy_loss(batch, agent_.policy, agent_.q_target, agent_.v, cfg_.beta, cfg_.weight_clip)
                  : sawr_policy_loss(batch, agent_.policy, agent_.q_target, agent_.v, cfg_.beta, cfg_.weight_clip);
    nn::adam_step(agent_.policy, pi.grads, agent_.policy_opt, cfg_.lr_actor);
    agent_.q_target.net.polyak_update(agent_.q.net, cfg_.target_update_rate);
    agent_.v_target.net.polyak_update(agent_.v.net, cfg_.target_update_rate);
    stats = {q.loss, v.loss, pi.loss, pi.weights};
  }
  ++agent_.grad_steps;
  acc_.q_loss += stats.q_loss;
  acc_.v_loss += stats.v_loss;
  acc_.policy_loss += stats.policy_loss;
  acc_.weights.mean += stats.weights.mean;
  acc_.weights.max = std::max(acc_.weights.max, stats.weights.max);
  acc_.weights.clipped_fraction += stats.weights.clipped_fraction;
  ++acc_count_;
  return stats;
}

PolicyLossOutput Trainer::update_policy(const Batch& batch, const Eigen::VectorXd& advantages) {
  auto pi = weighted_policy_loss(batch, agent_.policy, advantages, cfg_.beta, cfg_.weight_clip);
  nn::adam_step(agent_.policy, pi.grads, agent_.policy_opt, cfg_.lr_actor);
  ++agent_.grad_steps;
  return pi;
}

void Trainer::append_eval(RunMetrics& metrics, const std::string& phase) {
  MetricsRow row = evaluate(cfg_.eval_episodes, eval_seed_);
  row.phase = phase;
  if (acc_count_ > 0) {
    const double n = static_cast<double>(acc_count_);
    row.q_loss = acc_.q_loss / n;
    row.v_loss = acc_.v_loss / n;
    row.policy_loss = acc_.policy_loss / n;
    row.weight_mean = acc_.weights.mean / n;
    row.weight_max = acc_.weights.max;
    row.weight_clip_fraction = acc_.weights.clipped_fraction / n;
  }
  acc_ = {};
  acc_count_ = 0;
  metrics.rows.push_back(row);
}

void Trainer::offline_phase(const ReplayBuffer& d_off_in, RunMetrics& metrics) {
  check_buffer(d_off_in);
  std::optional<ReplayBuffer> filtered;
  if (cfg_.method == Method::Bc) filtered = successful_episodes(d_off_in);
  const ReplayBuffer& d_off = filtered ? *filtered : d_off_in;
  if (metrics.rows.empty()) append_eval(metrics, "init");
  if (cfg_.n_off == 0) return;
  if (d_off.empty()) throw ConfigError("offline phase needs a nonempty dataset");
  for (long i = 1; i <= cfg_.n_off; ++i) {
    update(sample_batch(d_off, nullptr));
    if (i % cfg_.eval_every == 0 || i == cfg_.n_off) append_eval(metrics, "offline");
  }
}

void Trainer::online_phase(const ReplayBuffer& d_off_in, ReplayBuffer& d_on, RunMetrics& metrics) {
  check_buffer(d_off_in);
  if (d_on.window() != window()) throw ConfigError("online buffer window length differs from the trainer's");
  if (mode_ == CriticMode::Privileged && env_->privileged_dim() == 0)
    throw ConfigError("aawr online collection needs an environment with privileged observations");
  std::optional<ReplayBuffer> filtered;
  if (cfg_.method == Method::Bc) filtered = successful_episodes(d_off_in);
  const ReplayBuffer& d_off = filtered ? *filtered : d_off_in;
  if (metrics.rows.empty()) append_eval(metrics, "init");
  if (cfg_.n_on == 0) return;
  if (d_off.empty() && d_on.empty()) throw ConfigError("online phase needs offline data or a seeded online buffer");

  CatalogEnvironment env(*env_);
  const WindowPolicy pi = behaviour_policy();
  const long start = agent_.env_steps;
  long next_eval = start + cfg_.eval_every;
  while (agent_.env_steps - start < cfg_.n_on) {
    Episode ep = rollout_episode(env, pi, window(), episodes_collected_++, collect_rng_, false);
    agent_.env_steps += static_cast<long>(ep.size());
    // BC imitates the filtered demonstrations only; its own rollouts are
    // collected for the step count but never trained on.
    if (cfg_.method != Method::Bc) d_on.add_episode(ep);
    const ReplayBuffer& off = d_off.empty() ? d_on : d_off;
    const ReplayBuffer* on = d_off.empty() ? nullptr : &d_on;
    if (!off.empty())
      for (std::size_t i = 0; i < ep.size(); ++i) update(sample_batch(off, on));
    const bool last = agent_.env_steps - start >= cfg_.n_on;
    if (agent_.env_steps >= next_eval || last) {
      append_eval(metrics, "online");
      while (next_eval <= agent_.env_steps) next_eval += cfg_.eval_every;
    }
  }
}

Eigen::VectorXd Trainer::action_distribution(const AgentState& z) const {
  // The policy input is built from z alone.
  const Eigen::MatrixXd x = encoder_.encode_agent_state(z);
  return nn::softmax(agent_.policy.forward(x)).row(0).transpose();
}

WindowPolicy Trainer::behaviour_policy() const {
  return [this](const AgentState& z) { return action_distribution(z); };
}

WindowPolicy Trainer::greedy_policy() const {
  return [this](const AgentState& z) {
    const Eigen::VectorXd p = action_distribution(z);
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p.size());
    out(best) = 1.0;
    return out;
  };
}

MetricsRow Trainer::evaluate(Environment& env, int n_episodes, std::uint64_t seed) const {
  MetricsRow row;
  row.grad_step = agent_.grad_steps;
  row.env_step = agent_.env_steps;
  if (n_episodes <= 0) return row;
  const WindowPolicy pi = cfg_.eval_greedy ? greedy_policy() : behaviour_policy();
  double successes = 0.0, total_return = 0.0, total_length = 0.0;
  for (int i = 0; i < n_episodes; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const Episode ep = rollout_episode(env, pi, window(), i, rng, false);
    successes += episode_success(ep) ? 1.0 : 0.0;
    for (const auto& tr : ep) total_return += tr.r;
    total_length += static_cast<double>(ep.size());
  }
  const double n = static_cast<double>(n_episodes);
  row.success_rate = successes / n;
  row.mean_return = total_return / n;
  row.mean_episode_length = total_length / n;
  return row;
}

MetricsRow Trainer::evaluate(int n_episodes, std::uint64_t seed) const {
  CatalogEnvironment env(*env_);
  return evaluate(env, n_episodes, seed);
}

ReplayBuffer successful_episodes(const ReplayBuffer& buffer) {
  ReplayBuffer out(buffer.window(), buffer.capacity());
  for (const auto& ep : buffer.episodes())
    if (episode_success(ep)) out.add_episode(ep);
  return out;
}

}  // namespace aawr
