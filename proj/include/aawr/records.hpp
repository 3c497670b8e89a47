#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "aawr/transition.hpp"

namespace aawr {

/// One JSON object per line:
///   {"episode_id","t","o","o_p","a","r","o_next","o_p_next","done"[,"s","s_next"]}
/// o_p / o_p_next are omitted for unprivileged records; s / s_next only when stored.
nlohmann::json transition_to_json(const Transition& tr);
Transition transition_from_json(const nlohmann::json& j);

void write_episodes(std::ostream& out, const std::vector<Episode>& episodes);
/// Consecutive lines with the same episode_id form one episode. Throws ParseError
/// carrying the 1-based line number of the first bad line.
std::vector<Episode> read_episodes(std::istream& in);

void save_episodes(const std::string& path, const std::vector<Episode>& episodes);
std::vector<Episode> load_episodes(const std::string& path);

}  // namespace aawr
