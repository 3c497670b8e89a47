#include "aawr/records.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "aawr/errors.hpp"

namespace aawr {

using nlohmann::json;

json transition_to_json(const Transition& tr) {
  json j;
  j["episode_id"] = tr.episode_id;
  j["t"] = tr.t;
  j["o"] = tr.o;
  if (!tr.o_p.empty()) j["o_p"] = tr.o_p;
  j["a"] = tr.a;
  j["r"] = tr.r;
  j["o_next"] = tr.o_next;
  if (!tr.o_p_next.empty()) j["o_p_next"] = tr.o_p_next;
  j["done"] = tr.done;
  if (tr.s) j["s"] = *tr.s;
  if (tr.s_next) j["s_next"] = *tr.s_next;
  return j;
}

Transition transition_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("record is not an object");
  auto need = [&](const char* key) -> const json& {
    if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
    return j.at(key);
  };
  auto as_int = [&](const char* key) {
    const json& v = need(key);
    if (!v.is_number_integer()) throw ParseError(std::string("field '") + key + "' must be an integer");
    return v.get<long>();
  };
  auto as_vec = [&](const char* key) {
    std::vector<double> out;
    if (!j.contains(key)) return out;
    const json& v = j.at(key);
    if (!v.is_array()) throw ParseError(std::string("field '") + key + "' must be an array");
    for (const auto& x : v) {
      if (!x.is_number()) throw ParseError(std::string("field '") + key + "' must hold numbers");
      out.push_back(x.get<double>());
    }
    return out;
  };
  Transition tr;
  tr.episode_id = as_int("episode_id");
  tr.t = static_cast<int>(as_int("t"));
  tr.o = static_cast<int>(as_int("o"));
  tr.a = static_cast<int>(as_int("a"));
  tr.o_next = static_cast<int>(as_int("o_next"));
  const json& r = need("r");
  if (!r.is_number()) throw ParseError("field 'r' must be a number");
  tr.r = r.get<double>();
  const json& done = need("done");
  if (!done.is_boolean()) throw ParseError("field 'done' must be a boolean");
  tr.done = done.get<bool>();
  tr.o_p = as_vec("o_p");
  tr.o_p_next = as_vec("o_p_next");
  if (j.contains("s")) tr.s = static_cast<int>(as_int("s"));
  if (j.contains("s_next")) tr.s_next = static_cast<int>(as_int("s_next"));
  return tr;
}

void write_episodes(std::ostream& out, const std::vector<Episode>& episodes) {
  for (const auto& ep : episodes)
    for (const auto& tr : ep) out << transition_to_json(tr).dump() << '\n';
}

std::vector<Episode> read_episodes(std::istream& in) {
  std::vector<Episode> episodes;
  std::string line;
  long line_no = 0;
  bool open = false;  // last episode still expects more steps
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Transition tr;
    try {
      tr = transition_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
    const bool continues = open && !episodes.empty() && episodes.back().back().episode_id == tr.episode_id;
    if (continues) {
      if (tr.t != episodes.back().back().t + 1) throw ParseError("non-consecutive step index", line_no);
      episodes.back().push_back(std::move(tr));
    } else {
      if (open) throw ParseError("episode ended without a done transition", line_no);
      if (tr.t != 0) throw ParseError("episode does not start at t=0", line_no);
      episodes.push_back({std::move(tr)});
    }
    open = !episodes.back().back().done;
  }
  if (open) throw ParseError("last episode ended without a done transition", line_no);
  return episodes;
}

void save_episodes(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_episodes(out, episodes);
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<Episode> load_episodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_episodes(in);
}

}  // namespace aawr
