// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aawr/losses.hpp"
#include "aawr/nn/adam.hpp"
#include "aawr/nn/checkpoint.hpp"
#include "aawr/run.hpp"
#include "aawr/trainer.hpp"
#include "aawr/witness.hpp"
#include "cli.hpp"
#include "helpers.hpp"
#include "oracle_critic.hpp"

namespace fs = std::filesystem;
using namespace aawr;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kFixedPointTol = 1e-8;
constexpr double kBiasMin = 0.01;
constexpr double kFullyObservedTol = 1e-8;
constexpr double kClosedFormTv = 1e-5;
constexpr double kNeuralTv = 0.02;
constexpr double kJensenTol = 1e-9;
constexpr double kExpectileTol = 0.01;
constexpr double kAawrTarget = 0.9;
constexpr double kBcSlack = 0.2;
constexpr double kOfflineBcSlack = 0.05;
constexpr int kSeeds = 5;

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, x);
  return buf;
}

// ---------------------------------------------------------------- 1

Verdict gradient_correctness() {
  Rng rng(2024);
  double worst = 0.0;
  const auto P = CriticMode::Privileged, S = CriticMode::Symmetric;
  for (int net = 0; net < 20; ++net) {
    const int dp = 2 + uniform_int(rng, 4), dc = 2 + uniform_int(rng, 4), na = 2 + uniform_int(rng, 3);
    const int h = 3 + uniform_int(rng, 4), n = 6 + uniform_int(rng, 6);
    const auto seed = static_cast<std::uint64_t>(100 + 10 * net);
    const auto tanh = nn::Activation::Tanh;
    Critic q{nn::Mlp<double>::init({dc, h, h, na}, seed, tanh), P};
    Critic v{nn::Mlp<double>::init({dc, h, 1}, seed + 1, tanh), P};
    nn::Mlp<double> pi = nn::Mlp<double>::init({dp, h, na}, seed + 2, tanh, nn::OutputHead::CategoricalLogits);
    const Batch b = testing::random_batch(n, dp, dc, na, P, rng);
    Batch bs = b;
    bs.mode = S;
    Critic qs{q.net, S}, vs{v.net, S};
    const double beta = 0.5 + 2.0 * uniform01(rng), gamma = 0.5 + 0.49 * uniform01(rng), tau = 0.1 + 0.8 * uniform01(rng);
    const Eigen::VectorXd returns = testing::random_matrix(n, 1, rng, 3.0);

    auto check = [&](nn::Mlp<double>& target, const nn::Gradients<double>& g, const std::function<double()>& f) {
      worst = std::max(worst, testing::max_relative_gradient_error(target, g, f));
    };
    check(pi, aawr_policy_loss(b, pi, q, v, beta, 1e6).grads, [&] { return aawr_policy_loss(b, pi, q, v, beta, 1e6).loss; });
    check(pi, sawr_policy_loss(bs, pi, qs, vs, beta, 1e6).grads,
          [&] { return sawr_policy_loss(bs, pi, qs, vs, beta, 1e6).loss; });
    check(q.net, q_td_loss(b, q, v, gamma).grads, [&] { return q_td_loss(b, q, v, gamma).loss; });
    check(v.net, v_expectile_loss(b, v, q, tau).grads, [&] { return v_expectile_loss(b, v, q, tau).loss; });
    check(v.net, mc_value_loss(b.critic_input, returns, v).grads,
          [&] { return mc_value_loss(b.critic_input, returns, v).loss; });
    check(pi, bc_loss(b, pi).grads, [&] { return bc_loss(b, pi).loss; });
  }
  return {worst < kGradTol, "max relative error " + fmt("%.3g", worst) + " over 20 nets x 6 losses (tol 1e-4)"};
}

// ---------------------------------------------------------------- 2-5

Verdict fixed_point() {
  const auto c = witness::check_asymmetric_fixed_point(0);
  const double gap = c.quantities.at("sup_gap");
  return {c.passed && gap < kFixedPointTol, "tiger + 5 random POMDPs, sup gap " + fmt("%.3g", gap) + " (tol 1e-8)"};
}

Verdict bias_witness() {
  const auto bias = witness::check_symmetric_td_bias();
  const auto full = witness::check_symmetric_td_fully_observed();
  const double gap = bias.quantities.at("sup_gap"), full_gap = full.quantities.at("sup_gap");
  return {gap > kBiasMin && full_gap < kFullyObservedTol,
          "aliased gap " + fmt("%.6g", gap) + " (> 0.01), fully observed gap " + fmt("%.3g", full_gap) + " (< 1e-8)"};
}

Verdict closed_form() {
  const auto c = witness::check_closed_form_update(0);
  const double tv = c.quantities.at("max_tv");
  const auto neural = testing::tiger_oracle_critic_tv(6000, 1);
  return {tv < kClosedFormTv && neural.weighted_tv < kNeuralTv,
          "tabular max TV " + fmt("%.3g", tv) + " (< 1e-5), neural d(z)-weighted TV " + fmt("%.4f", neural.weighted_tv) +
              " (< 0.02)"};
}

Verdict jensen() {
  const auto w = witness::check_jensen_weight(1.0, 1.0);
  const auto a = witness::check_jensen_argmax(1.0);
  const double aawr = w.quantities.at("aawr_mean_weight"), sawr = w.quantities.at("sawr_mean_weight");
  const bool ok = std::abs(aawr - std::cosh(1.0)) <= kJensenTol && std::abs(sawr - 1.0) <= kJensenTol && a.passed;
  return {ok, "AAWR weight " + fmt("%.12f", aawr) + ", SAWR weight " + fmt("%.12f", sawr) + ", argmax " +
                  a.quantities.at("aawr_argmax").get<std::string>() + " vs " +
                  a.quantities.at("sawr_argmax").get<std::string>()};
}

// ---------------------------------------------------------------- 6

// Trains V by Adam on the expectile loss against a frozen Q target.
Critic fit_expectile(const Batch& b, const Critic& q_target, Critic v, double tau, int steps, double lr) {
  auto opt = nn::AdamState<double>::for_params(v.net);
  for (int i = 0; i < steps; ++i) nn::adam_step(v.net, v_expectile_loss(b, v, q_target, tau).grads, opt, lr);
  return v;
}

Verdict expectile() {
  const auto P = CriticMode::Privileged;
  // Two-point sample {0, 10}: a constant input, Q(., a0) = 0 and Q(., a1) = 10.
  Batch b;
  b.mode = P;
  b.policy_input = Eigen::MatrixXd::Zero(2, 1);
  b.critic_input = Eigen::MatrixXd::Ones(2, 1);
  b.actions = {0, 1};
  b.rewards = Eigen::VectorXd::Zero(2);
  b.done = Eigen::VectorXd::Zero(2);
  nn::Mlp<double> qnet = nn::Mlp<double>::init({1, 2}, 1, nn::Activation::Tanh, nn::OutputHead::Identity,
                                               nn::Init::Zero);
  qnet.mutable_layers()[0].bias << 0.0, 10.0;
  const Critic q{qnet, P};
  const Critic v0{nn::Mlp<double>::init({1, 1}, 2, nn::Activation::Tanh, nn::OutputHead::Identity, nn::Init::Zero), P};
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  const double v07 = fit_expectile(b, q, v0, 0.7, 20000, 1e-2).net.forward(one)(0, 0);
  const double v05 = fit_expectile(b, q, v0, 0.5, 20000, 1e-2).net.forward(one)(0, 0);

  // Monotonicity in tau on a fixed batch: four inputs, each seen with several actions.
  Rng rng(6);
  Batch fb;
  fb.mode = P;
  const int n = 64;
  Eigen::MatrixXd inputs = testing::random_matrix(4, 3, rng);
  fb.critic_input.resize(n, 3);
  fb.policy_input = Eigen::MatrixXd::Zero(n, 1);
  fb.actions.resize(n);
  for (int i = 0; i < n; ++i) {
    fb.critic_input.row(i) = inputs.row(i % 4);
    fb.actions[static_cast<std::size_t>(i)] = uniform_int(rng, 5);
  }
  fb.rewards = Eigen::VectorXd::Zero(n);
  fb.done = Eigen::VectorXd::Zero(n);
  const Critic fq{nn::Mlp<double>::init({3, 16, 5}, 7, nn::Activation::Tanh), P};
  const Critic fv{nn::Mlp<double>::init({3, 16, 1}, 8, nn::Activation::Tanh), P};
  std::vector<Eigen::VectorXd> values;
  for (double tau : {0.5, 0.7, 0.9}) values.push_back(fit_expectile(fb, fq, fv, tau, 5000, 3e-3).net.forward(inputs).col(0));
  bool monotone = true;
  for (std::size_t t = 1; t < values.size(); ++t) monotone &= ((values[t] - values[t - 1]).array() >= 0.0).all();

  const bool ok = std::abs(v07 - 7.0) <= kExpectileTol && std::abs(v05 - 5.0) <= kExpectileTol && monotone;
  return {ok, "tau 0.7 -> " + fmt("%.4f", v07) + ", tau 0.5 -> " + fmt("%.4f", v05) + ", V nondecreasing in tau: " +
                  (monotone ? "yes" : "no")};
}

// ---------------------------------------------------------------- 7-10

fs::path source_dir() { return fs::path(AAWR_SOURCE_DIR); }
fs::path work_dir() { return fs::current_path() / "acceptance_runs"; }

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full{"aawr"};
  full.insert(full.end(), args.begin(), args.end());
  std::ostringstream out, err;
  const int code = cli::run(full, out, err);
  std::printf("    aawr");
  for (std::size_t i = 1; i < full.size(); ++i) std::printf(" %s", full[i].c_str());
  std::printf("\n    %s", out.str().c_str());
  if (code != 0) std::printf("    error (%d): %s\n", code, err.str().c_str());
  std::fflush(stdout);
  return code;
}

fs::path run_dir(const std::string& method, int seed) { return work_dir() / ("grid_" + method + "_s" + std::to_string(seed)); }

struct GridRuns {
  bool ok = true;
  std::vector<double> demo, offline, final;
};

double last_success(const RunMetrics& m, const std::string& phase) {
  double s = -1.0;
  for (const auto& r : m.rows)
    if (r.phase == phase || (phase == "offline" && r.phase == "init")) s = r.success_rate;
  return s;
}

// Trains (or reuses, within one invocation) the shipped grid configs for all seeds.
const GridRuns& grid_runs(const std::string& method) {
  static std::map<std::string, GridRuns> cache;
  auto it = cache.find(method);
  if (it != cache.end()) return it->second;
  GridRuns g;
  const fs::path config = source_dir() / "configs" / ("grid_" + method + ".json");
  for (int s = 0; s < kSeeds; ++s) {
    const fs::path dir = run_dir(method, s);
    fs::remove_all(dir);
    if (run_cli({"train", "--config", config.string(), "--seed", std::to_string(s), "--out", dir.string()}) != 0) {
      g.ok = false;
      continue;
    }
    const RunMetrics m = RunMetrics::load((dir / "metrics.csv").string());
    std::ifstream mf(dir / "manifest.json");
    const auto manifest = nlohmann::json::parse(mf);
    g.demo.push_back(manifest.at("demo_success").get<double>());
    g.offline.push_back(last_success(m, "offline"));
    g.final.push_back(m.rows.back().success_rate);
  }
  return cache.emplace(method, g).first->second;
}

double median(std::vector<double> x) {
  if (x.empty()) return std::nan("");
  std::sort(x.begin(), x.end());
  return x[x.size() / 2];
}

std::string list(const std::vector<double>& x) {
  std::string s = "[";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? " " : "") + fmt("%.3f", x[i]);
  return s + "]";
}

Verdict ordering_online() {
  const auto& a = grid_runs("aawr");
  const auto& s = grid_runs("sawr");
  const auto& b = grid_runs("bc");
  const double ma = median(a.final), ms = median(s.final), mb = median(b.final), md = median(a.demo);
  bool demos_in_band = true;
  for (double d : a.demo) demos_in_band &= d >= 0.2 && d <= 0.5;
  const bool ok = a.ok && s.ok && b.ok && demos_in_band && ma >= kAawrTarget && ma >= ms && mb <= md + kBcSlack;
  return {ok, "median final success AAWR " + fmt("%.3f", ma) + " " + list(a.final) + ", SAWR " + fmt("%.3f", ms) + " " +
                  list(s.final) + ", BC " + fmt("%.3f", mb) + " " + list(b.final) + "; demo success " + list(a.demo) +
                  " (band [0.2, 0.5]); need AAWR >= 0.9, AAWR >= SAWR, BC <= demo + 0.2"};
}

Verdict ordering_offline() {
  // The offline phase does not depend on n_on, so the last offline row of each
  // run is the purely offline result for the same seed.
  const auto& a = grid_runs("aawr");
  const auto& s = grid_runs("sawr");
  const auto& b = grid_runs("bc");
  const double ma = median(a.offline), ms = median(s.offline), mb = median(b.offline);
  const bool ok = a.ok && s.ok && b.ok && ma >= ms && ms >= mb - kOfflineBcSlack;
  return {ok, "median offline success AAWR " + fmt("%.3f", ma) + " " + list(a.offline) + ", SAWR " + fmt("%.3f", ms) + " " +
                  list(s.offline) + ", BC " + fmt("%.3f", mb) + " " + list(b.offline) +
                  "; need AAWR >= SAWR >= BC - 0.05"};
}

Verdict deployment_isolation() {
  const auto& a = grid_runs("aawr");
  if (!a.ok) return {false, "grid runs failed"};
  const fs::path dir = run_dir("aawr", 0);
  std::ifstream mf(dir / "manifest.json");
  const auto manifest = nlohmann::json::parse(mf);
  nlohmann::json desc = manifest.at("env_params");
  desc["name"] = manifest.at("env");
  const EnvCatalogEntry env = make_env(desc);
  const TrainingConfig cfg = training_config_from_json(manifest.at("resolved_training"));
  Trainer trainer(cfg, env);
  trainer.agent() = AgentNetworks::from_checkpoint(nn::load_checkpoint((dir / "checkpoint_final.bin").string()),
                                                   trainer.critic_mode());
  CatalogEnvironment clean(env), inner(env);
  PoisonedEnvironment poisoned(inner);
  const MetricsRow x = trainer.evaluate(clean, 500, 77), y = trainer.evaluate(poisoned, 500, 77);
  const bool same = x.success_rate == y.success_rate && x.mean_return == y.mean_return &&
                    x.mean_episode_length == y.mean_episode_length;
  return {same, "500 episodes: clean success " + fmt("%.3f", x.success_rate) + ", poisoned " + fmt("%.3f", y.success_rate) +
                    ", mean length " + fmt("%.3f", x.mean_episode_length) + " vs " + fmt("%.3f", y.mean_episode_length)};
}

Verdict reproducibility() {
  // The shipped AAWR config at a reduced budget, trained twice with one seed.
  std::ifstream in(source_dir() / "configs" / "grid_aawr.json");
  auto cfg = nlohmann::json::parse(in);
  cfg["training"]["n_off"] = 2000;
  cfg["training"]["n_on"] = 2000;
  cfg["training"]["eval_every"] = 500;
  fs::create_directories(work_dir());
  const fs::path path = work_dir() / "repro.json";
  std::ofstream(path) << cfg.dump(2) << "\n";
  std::vector<std::string> csv;
  for (const char* name : {"repro_a", "repro_b"}) {
    const fs::path dir = work_dir() / name;
    fs::remove_all(dir);
    if (run_cli({"train", "--config", path.string(), "--seed", "7", "--out", dir.string()}) != 0) return {false, "train failed"};
    std::ifstream f(dir / "metrics.csv", std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    csv.push_back(ss.str());
  }
  return {csv[0] == csv[1] && !csv[0].empty(),
          std::string("metrics.csv ") + (csv[0] == csv[1] ? "byte-identical" : "differs") + " (" +
              std::to_string(csv[0].size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_correctness},
      {2, "asymmetric fixed point exactness", fixed_point},
      {3, "symmetric TD bias witness", bias_witness},
      {4, "closed-form update equivalence", closed_form},
      {5, "Jensen separation", jensen},
      {6, "expectile semantics", expectile},
      {7, "grid ordering after offline-to-online training", ordering_online},
      {8, "grid ordering, offline only", ordering_offline},
      {9, "deployment isolation", deployment_isolation},
      {10, "reproducibility", reproducibility},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  std::vector<std::string> lines;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char head[160];
    std::snprintf(head, sizeof(head), "[%s] %2d %s (%.1fs): ", v.passed ? "PASS" : "FAIL", c.id, c.name, secs);
    lines.push_back(head + v.detail);
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
    failed += !v.passed;
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  std::printf("%d of %zu criteria failed\n", failed, lines.size());
  return failed == 0 ? 0 : 1;
}
