#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aawr/trainer.hpp"

namespace aawr {

inline constexpr const char* kVersion = "aawr 0.1.0";

/// Experiment description read from a JSON config file:
///
///   {"env": {"name": "hidden_target_grid", "width": 5, "height": 5, "fov": 1},
///    "method": "aawr", "seed": 0,
///    "demos": {"episodes": 100} | {"path": "demos.jsonl"},
///    "training": {...TrainingConfig keys...},
///    "out": "runs/grid_aawr"}
struct RunConfig {
  nlohmann::json env;
  TrainingConfig training;
  int demo_episodes = 100;
  std::optional<std::uint64_t> demo_seed;  ///< defaults to the run seed
  std::optional<std::string> demo_path;
  std::string out_dir = "run";
};

/// Validates everything that can be checked without training. Throws ConfigError.
RunConfig parse_run_config(const std::string& text);

struct RunSummary {
  RunMetrics metrics;
  double demo_success = 0.0;
  double offline_success = 0.0;  ///< last row of the offline phase
  double final_success = 0.0;
};

/// Demos, offline phase, online phase. Writes into cfg.out_dir:
///   manifest.json, metrics.csv, demos.jsonl, checkpoint_offline.bin, checkpoint_final.bin
/// `config_text` is echoed verbatim in the manifest.
RunSummary run_experiment(const RunConfig& cfg, const std::string& config_text);

struct CompareRow {
  std::string env;
  std::string method;
  int runs = 0;
  double final_mean = 0.0;
  double final_stderr = 0.0;
  /// Mean over runs of the first step (grad_step + env_step) whose success
  /// reaches the threshold; runs that never reach it are counted in `reached`.
  std::optional<double> steps_to_threshold;
  int reached = 0;
};

/// Groups run directories by (env, method); never pools across environments.
std::vector<CompareRow> compare_runs(const std::vector<std::string>& run_dirs, double threshold = 0.9);
std::string format_compare_table(const std::vector<CompareRow>& rows);
std::string format_compare_csv(const std::vector<CompareRow>& rows);

}  // namespace aawr
