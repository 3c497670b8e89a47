#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "aawr/errors.hpp"
#include "aawr/records.hpp"
#include "aawr/run.hpp"
#include "aawr/witness.hpp"

namespace aawr::cli {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "--param width=6" -> {"width": 6}; values parse as JSON, falling back to strings.
json parse_params(const std::string& env, const std::vector<std::string>& params) {
  json desc = {{"name", env}};
  for (const auto& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--param expects key=value, got '" + p + "'");
    const std::string value = p.substr(eq + 1);
    json parsed = json::parse(value, nullptr, false);
    desc[p.substr(0, eq)] = parsed.is_discarded() ? json(value) : parsed;
  }
  return desc;
}

struct Options {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string config;
  std::string env;
  std::vector<std::string> params;
  int episodes = 100;
  bool no_state = false;
  std::vector<std::string> run_dirs;
  double threshold = 0.9;
};

int cmd_demo(const Options& o, std::ostream& out) {
  json desc;
  if (!o.config.empty()) {
    desc = parse_run_config(read_file(o.config)).env;
  } else {
    if (o.env.empty()) throw ConfigError("demo needs --env or --config");
    desc = parse_params(o.env, o.params);
  }
  const EnvCatalogEntry entry = make_env(desc);
  if (o.episodes < 0) throw ConfigError("--episodes must be >= 0");
  if (o.out.empty()) throw ConfigError("demo needs --out");
  const auto episodes = scripted_demo_rollouts(entry, o.episodes, o.seed, !o.no_state);
  save_episodes(o.out, episodes);
  out << "wrote " << episodes.size() << " episodes to " << o.out << " (success rate " << success_rate(episodes)
      << ")\n";
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  if (o.config.empty()) throw ConfigError("train needs --config");
  const std::string text = read_file(o.config);
  RunConfig cfg = parse_run_config(text);
  if (o.seed_set) cfg.training.seed = o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  const RunSummary s = run_experiment(cfg, text);
  out << "run " << cfg.out_dir << ": demo success " << s.demo_success << ", offline success " << s.offline_success
      << ", final success " << s.final_success << "\n";
  return kOk;
}

int cmd_verify(const Options& o, std::ostream& out) {
  witness::VerifyOptions opts;
  opts.seed = o.seed;
  const auto checks = witness::run_all(opts);
  for (const auto& c : checks) out << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << c.quantities.dump() << "\n";
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    if (!f) throw std::runtime_error("cannot write " + o.out);
    f << witness::report(checks).dump(2) << "\n";
  }
  return witness::all_passed(checks) ? kOk : kVerifyFailed;
}

int cmd_compare(const Options& o, std::ostream& out) {
  const auto rows = compare_runs(o.run_dirs, o.threshold);
  out << format_compare_table(rows);
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    if (!f) throw std::runtime_error("cannot write " + o.out);
    f << format_compare_csv(rows);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Asymmetric advantage-weighted regression: training runs and exact oracle checks", "aawr"};
  app.require_subcommand(1);
  Options o;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) {
          o.seed = s;
          o.seed_set = true;
        }, "random seed");
  };

  auto* demo = app.add_subcommand("demo", "roll out the scripted demonstrator and write a JSON-lines dataset");
  demo->add_option("--env", o.env, "environment name")->check(CLI::IsMember(catalog_names()));
  demo->add_option("--param", o.params, "environment parameter key=value (repeatable)");
  demo->add_option("--config", o.config, "take the environment from a run config");
  demo->add_option("--episodes", o.episodes, "number of episodes");
  demo->add_flag("--no-state", o.no_state, "omit environment state indices from the records");
  demo->add_option("--out", o.out, "output file")->required();
  add_seed(demo);

  auto* train = app.add_subcommand("train", "offline then online training from a run config");
  train->add_option("--config", o.config, "run config (JSON)")->required();
  train->add_option("--out", o.out, "run directory (overrides the config)");
  add_seed(train);

  auto* verify = app.add_subcommand("verify", "run the exact-oracle witness suite");
  verify->add_option("--out", o.out, "JSON report path");
  add_seed(verify);

  auto* compare = app.add_subcommand("compare", "summarize run directories per environment and method");
  compare->add_option("runs", o.run_dirs, "run directories")->required();
  compare->add_option("--threshold", o.threshold, "success threshold for steps-to-threshold");
  compare->add_option("--out", o.out, "machine-readable CSV output");
  add_seed(compare);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kConfigError;
  }

  try {
    if (*demo) return cmd_demo(o, out);
    if (*train) return cmd_train(o, out);
    if (*verify) return cmd_verify(o, out);
    if (*compare) return cmd_compare(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}

}  // namespace aawr::cli
