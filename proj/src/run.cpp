#include "aawr/run.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "aawr/errors.hpp"
#include "aawr/records.hpp"

namespace aawr {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (key != "env" && key != "method" && key != "seed" && key != "demos" && key != "training" && key != "out")
      throw ConfigError("unknown config key '" + key + "'");
  if (!j.contains("env") || !j.at("env").is_object()) throw ConfigError("config needs an \"env\" object");

  RunConfig cfg;
  cfg.env = j.at("env");
  const EnvCatalogEntry entry = make_env(cfg.env);  // rejects unknown names and bad parameters

  TrainingConfig base;
  try {
    if (j.contains("method")) base.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.training = j.contains("training") ? training_config_from_json(j.at("training"), base) : base;
  cfg.training.validate();

  if (j.contains("demos")) {
    const json& d = j.at("demos");
    if (!d.is_object()) throw ConfigError("\"demos\" must be an object");
    try {
      for (const auto& [key, _] : d.items())
        if (key != "episodes" && key != "seed" && key != "path") throw ConfigError("unknown demos key '" + key + "'");
      if (d.contains("episodes")) cfg.demo_episodes = d.at("episodes").get<int>();
      if (d.contains("seed")) cfg.demo_seed = d.at("seed").get<std::uint64_t>();
      if (d.contains("path")) cfg.demo_path = d.at("path").get<std::string>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad demos value: ") + e.what());
    }
  }
  if (cfg.demo_episodes < 0) throw ConfigError("demos.episodes must be >= 0");
  if (cfg.demo_path && !fs::exists(*cfg.demo_path)) throw ConfigError("demo file not found: " + *cfg.demo_path);
  if (cfg.training.method == Method::Aawr && entry.privileged_dim() == 0)
    throw ConfigError("aawr needs an environment with privileged observations");
  if (cfg.out_dir.empty()) throw ConfigError("\"out\" must be a directory path");
  return cfg;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

RunSummary run_experiment(const RunConfig& cfg, const std::string& config_text) {
  const EnvCatalogEntry entry = make_env(cfg.env);
  const TrainingConfig& tc = cfg.training;
  const int k = tc.k.value_or(entry.default_k);

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + cfg.out_dir + ": " + ec.message());
  const fs::path dir(cfg.out_dir);

  std::vector<Episode> demos = cfg.demo_path
                                   ? load_episodes(*cfg.demo_path)
                                   : scripted_demo_rollouts(entry, cfg.demo_episodes, cfg.demo_seed.value_or(tc.seed));
  save_episodes((dir / "demos.jsonl").string(), demos);

  ReplayBuffer d_off(k, std::max<std::size_t>(tc.replay_capacity, 1));
  for (const auto& ep : demos) d_off.add_episode(ep);
  ReplayBuffer d_on(k, tc.replay_capacity);

  json manifest = {{"version", kVersion},
                   {"config", config_text},
                   {"env", entry.name},
                   {"env_params", entry.params},
                   {"method", to_string(tc.method)},
                   {"seed", tc.seed},
                   {"window", k},
                   {"resolved_training", to_json(tc)},
                   {"demo_episodes", demos.size()},
                   {"demo_success", success_rate(demos)},
                   {"metrics", "metrics.csv"},
                   {"metrics_columns", RunMetrics::header()}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  Trainer trainer(tc, entry);
  RunSummary summary;
  summary.demo_success = success_rate(demos);
  trainer.offline_phase(d_off, summary.metrics);
  nn::save_checkpoint((dir / "checkpoint_offline.bin").string(), trainer.agent().to_checkpoint());
  summary.offline_success = summary.metrics.rows.back().success_rate;
  trainer.online_phase(d_off, d_on, summary.metrics);
  nn::save_checkpoint((dir / "checkpoint_final.bin").string(), trainer.agent().to_checkpoint());
  summary.final_success = summary.metrics.rows.back().success_rate;
  summary.metrics.save((dir / "metrics.csv").string());
  return summary;
}

// ---------------------------------------------------------------- compare

std::vector<CompareRow> compare_runs(const std::vector<std::string>& run_dirs, double threshold) {
  if (run_dirs.empty()) throw ConfigError("compare needs at least one run directory");
  struct Group {
    std::vector<double> finals;
    std::vector<double> steps;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  for (const auto& d : run_dirs) {
    const fs::path dir(d);
    if (!fs::exists(dir / "metrics.csv")) throw std::runtime_error("missing metrics.csv in run directory " + d);
    if (!fs::exists(dir / "manifest.json")) throw std::runtime_error("missing manifest.json in run directory " + d);
    std::ifstream mf(dir / "manifest.json");
    json manifest;
    try {
      manifest = json::parse(mf);
    } catch (const json::exception& e) {
      throw std::runtime_error("bad manifest.json in " + d + ": " + e.what());
    }
    const RunMetrics m = RunMetrics::load((dir / "metrics.csv").string());
    if (m.rows.empty()) throw std::runtime_error("empty metrics in run directory " + d);
    // The environment key includes its parameters, so different grids never pool.
    const std::string env = manifest.value("env", std::string("?")) + manifest.value("env_params", json::object()).dump();
    auto& g = groups[{env, manifest.value("method", std::string("?"))}];
    g.finals.push_back(m.rows.back().success_rate);
    for (const auto& r : m.rows)
      if (r.success_rate >= threshold) {
        g.steps.push_back(static_cast<double>(r.grad_step + r.env_step));
        break;
      }
  }
  std::vector<CompareRow> out;
  for (const auto& [key, g] : groups) {
    CompareRow row;
    row.env = key.first;
    row.method = key.second;
    row.runs = static_cast<int>(g.finals.size());
    double sum = 0.0;
    for (double x : g.finals) sum += x;
    row.final_mean = sum / row.runs;
    if (row.runs > 1) {
      double ss = 0.0;
      for (double x : g.finals) ss += (x - row.final_mean) * (x - row.final_mean);
      row.final_stderr = std::sqrt(ss / (row.runs - 1)) / std::sqrt(static_cast<double>(row.runs));
    }
    row.reached = static_cast<int>(g.steps.size());
    if (!g.steps.empty()) {
      double s = 0.0;
      for (double x : g.steps) s += x;
      row.steps_to_threshold = s / static_cast<double>(g.steps.size());
    }
    out.push_back(row);
  }
  return out;
}

std::string format_compare_table(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%-48s %-6s %5s %18s %20s\n", "env", "method", "runs", "final success", "steps to threshold");
  out << buf;
  for (const auto& r : rows) {
    std::string steps = r.steps_to_threshold ? std::to_string(static_cast<long>(std::lround(*r.steps_to_threshold))) +
                                                   " (" + std::to_string(r.reached) + "/" + std::to_string(r.runs) + ")"
                                             : "never";
    std::snprintf(buf, sizeof(buf), "%-48s %-6s %5d %9.3f +- %5.3f %20s\n", r.env.c_str(), r.method.c_str(), r.runs,
                  r.final_mean, r.final_stderr, steps.c_str());
    out << buf;
  }
  return out.str();
}

std::string format_compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "env,method,runs,final_success_mean,final_success_stderr,steps_to_threshold,runs_reaching_threshold\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), ",%d,%.10g,%.10g,", r.runs, r.final_mean, r.final_stderr);
    // The env key holds JSON (commas, quotes), so quote it CSV-style.
    std::string env_cell = "\"";
    for (char ch : r.env) env_cell += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    env_cell += "\"";
    out << env_cell << "," << r.method << buf;
    if (r.steps_to_threshold) out << *r.steps_to_threshold;
    out << "," << r.reached << "\n";
  }
  return out.str();
}

}  // namespace aawr
