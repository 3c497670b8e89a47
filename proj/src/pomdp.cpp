#include "aawr/pomdp.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "aawr/errors.hpp"

namespace aawr {

namespace {

constexpr double kRowTol = 1e-9;

void check_stochastic_rows(const Eigen::MatrixXd& m, const std::string& name) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if ((m.row(r).array() < 0.0).any())
      throw ValidationError(name + " row " + std::to_string(r) + " has a negative entry");
    if (std::abs(m.row(r).sum() - 1.0) > kRowTol)
      throw ValidationError(name + " row " + std::to_string(r) + " does not sum to 1");
  }
}

void check_index(int i, int n, const char* what) {
  if (i < 0 || i >= n)
    throw IndexError(std::string(what) + " index " + std::to_string(i) + " out of range [0, " +
                     std::to_string(n) + ")");
}

}  // namespace

void PomdpSpec::validate() const {
  const int ns = num_states(), na = num_actions(), no = num_observations();
  if (ns == 0 || na == 0 || no == 0) throw ValidationError("empty state, action or observation set");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0, 1)");
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  if (static_cast<int>(transition.size()) != na) throw ValidationError("one transition matrix per action");
  for (int a = 0; a < na; ++a) {
    const auto& t = transition[static_cast<std::size_t>(a)];
    if (t.rows() != ns || t.cols() != ns) throw ValidationError("transition matrix shape");
    check_stochastic_rows(t, "transition[" + actions[static_cast<std::size_t>(a)] + "]");
  }
  if (reward.rows() != ns || reward.cols() != na) throw ValidationError("reward table shape");
  if (!reward.allFinite()) throw ValidationError("reward table not finite");
  if (reward_noise < 0.0) throw ValidationError("reward noise must be nonnegative");
  if (emission.rows() != ns || emission.cols() != no) throw ValidationError("emission table shape");
  check_stochastic_rows(emission, "emission");
  if (initial.size() != ns) throw ValidationError("initial distribution size");
  check_stochastic_rows(initial.transpose(), "initial");
  if (!absorbing.empty()) {
    if (static_cast<int>(absorbing.size()) != ns) throw ValidationError("absorbing flag count");
    for (int s = 0; s < ns; ++s) {
      if (!absorbing[static_cast<std::size_t>(s)]) continue;
      for (int a = 0; a < na; ++a) {
        if (transition[static_cast<std::size_t>(a)](s, s) != 1.0)
          throw ValidationError("absorbing state " + states[static_cast<std::size_t>(s)] + " must self-loop");
        if (reward(s, a) != 0.0)
          throw ValidationError("absorbing state " + states[static_cast<std::size_t>(s)] + " must have zero reward");
      }
    }
  }
}

AgentState::AgentState(int k) : window_(static_cast<std::size_t>(k)) {
  if (k < 1) throw ConfigError("window length must be >= 1");
}

AgentState AgentState::initial(int k, int first_observation) {
  return AgentState(k).updated(kPad, first_observation);
}

AgentState AgentState::updated(int action, int observation) const {
  AgentState next;
  next.window_.reserve(window_.size());
  next.window_.assign(window_.begin() + 1, window_.end());
  next.window_.push_back({observation, action});
  return next;
}

std::string AgentState::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < window_.size(); ++i) {
    if (i) os << ' ';
    const auto& e = window_[i];
    os << '(' << (e.observation == kPad ? std::string("_") : std::to_string(e.observation)) << ','
       << (e.action == kPad ? std::string("_") : std::to_string(e.action)) << ')';
  }
  os << ']';
  return os.str();
}

std::size_t AgentStateHash::operator()(const AgentState& z) const noexcept {
  std::size_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : z.window()) {
    h ^= static_cast<std::size_t>(e.observation + 2) * 0x100000001b3ULL;
    h = (h << 13) | (h >> 51);
    h ^= static_cast<std::size_t>(e.action + 2) * 0x9e3779b97f4a7c15ULL;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ResetResult reset(const PomdpSpec& spec, int k, Rng& rng) {
  const int s0 = sample_categorical(spec.initial, rng);
  const int o0 = sample_categorical(spec.emission.row(s0), rng);
  return {s0, o0, AgentState::initial(k, o0)};
}

StepResult step(const PomdpSpec& spec, int state, int action, int t, Rng& rng) {
  check_index(state, spec.num_states(), "state");
  check_index(action, spec.num_actions(), "action");
  const int next = sample_categorical(spec.transition[static_cast<std::size_t>(action)].row(state), rng);
  double r = spec.reward(state, action);
  if (spec.reward_noise > 0.0) r += spec.reward_noise * (2.0 * uniform01(rng) - 1.0);
  const int o = sample_categorical(spec.emission.row(next), rng);
  const bool done = spec.is_absorbing(next) || t + 1 >= spec.horizon;
  return {next, r, o, done};
}

Simulator::Simulator(const PomdpSpec& spec, int k) : spec_(&spec), k_(k) {}

ResetResult Simulator::reset(Rng& rng) {
  auto r = aawr::reset(*spec_, k_, rng);
  state_ = r.state;
  t_ = 0;
  done_ = false;
  z_ = r.agent_state;
  return r;
}

StepResult Simulator::step(int action, Rng& rng) {
  if (done_) throw std::logic_error("step called on a finished episode");
  auto r = aawr::step(*spec_, state_, action, t_, rng);
  state_ = r.next_state;
  ++t_;
  done_ = r.done;
  z_ = z_.updated(action, r.next_observation);
  return r;
}

// --- structured text ------------------------------------------------------

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ParseError("table size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

}  // namespace

std::string pomdp_to_json(const PomdpSpec& spec) {
  json j;
  j["states"] = spec.states;
  j["actions"] = spec.actions;
  j["observations"] = spec.observations;
  j["transition"] = json::array();
  for (const auto& t : spec.transition) j["transition"].push_back(matrix_to_json(t));
  j["reward"] = matrix_to_json(spec.reward);
  j["reward_noise"] = spec.reward_noise;
  j["emission"] = matrix_to_json(spec.emission);
  j["initial"] = std::vector<double>(spec.initial.data(), spec.initial.data() + spec.initial.size());
  std::vector<int> absorbing;
  for (std::size_t s = 0; s < spec.absorbing.size(); ++s)
    if (spec.absorbing[s]) absorbing.push_back(static_cast<int>(s));
  j["absorbing"] = absorbing;
  j["gamma"] = spec.gamma;
  j["horizon"] = spec.horizon;
  return j.dump(2);
}

PomdpSpec pomdp_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what());
  }
  try {
    PomdpSpec spec;
    spec.states = j.at("states").get<std::vector<std::string>>();
    spec.actions = j.at("actions").get<std::vector<std::string>>();
    spec.observations = j.at("observations").get<std::vector<std::string>>();
    for (const auto& t : j.at("transition")) spec.transition.push_back(matrix_from_json(t));
    spec.reward = matrix_from_json(j.at("reward"));
    spec.reward_noise = j.value("reward_noise", 0.0);
    spec.emission = matrix_from_json(j.at("emission"));
    const auto init = j.at("initial").get<std::vector<double>>();
    spec.initial = Eigen::Map<const Eigen::VectorXd>(init.data(), static_cast<Eigen::Index>(init.size()));
    spec.absorbing.assign(spec.states.size(), false);
    for (int s : j.value("absorbing", std::vector<int>{})) {
      check_index(s, spec.num_states(), "absorbing state");
      spec.absorbing[static_cast<std::size_t>(s)] = true;
    }
    spec.gamma = j.at("gamma").get<double>();
    spec.horizon = j.at("horizon").get<int>();
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

}  // namespace aawr
