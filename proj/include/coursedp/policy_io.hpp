#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "coursedp/curriculum_io.hpp"
#include "coursedp/planner.hpp"

namespace coursedp {

/// Attaches the curriculum's content hash and course codes to a table.
inline void stamp(PolicyTable& policy, const Curriculum& cur) {
  policy.curriculum_hash = content_hash(cur);
  policy.course_codes.clear();
  for (const auto& c : cur.courses) policy.course_codes.push_back(c.code);
}

/// Policy file: one entry per (quarter, state) for quarters 1..T, sorted by
/// quarter then by the state's hex key.
inline json policy_to_json(const PolicyTable& policy) {
  auto code = [&](CourseId n) {
    return static_cast<std::size_t>(n) < policy.course_codes.size() ? policy.course_codes[static_cast<std::size_t>(n)]
                                                                    : std::to_string(n);
  };
  json doc;
  doc["curriculum_hash"] = policy.curriculum_hash;
  doc["reward"] = std::string(to_string(policy.kind()));
  doc["horizon"] = policy.horizon();
  doc["width"] = policy.width();
  doc["courses"] = policy.course_codes;

  json entries = json::array();
  for (int t = 0; t < policy.horizon(); ++t) {
    std::vector<std::pair<std::string, const PolicyTable::Entry*>> rows;
    for (const auto& [key, e] : policy.layer(t))
      rows.emplace_back(CourseState(policy.width(), CourseSet(key)).to_hex(), &e);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [hex, e] : rows) {
      json action = json::array();
      e->action.for_each([&](CourseId n) { action.push_back(code(n)); });
      entries.push_back(
          {{"state", hex}, {"quarter", t + 1}, {"action", action}, {"value", e->value}, {"terminal", e->terminal}});
    }
  }
  doc["entries"] = std::move(entries);
  return doc;
}

inline PolicyTable policy_from_json(const json& doc) {
  try {
    const int width = doc.at("width").get<int>();
    const int horizon = doc.at("horizon").get<int>();
    if (width < 0 || width > kMaxCourses || horizon < 1) throw Error(Errc::RangeError, "bad policy dimensions");
    PolicyTable policy(width, horizon, reward_kind_from_string(doc.at("reward").get<std::string>()));
    policy.curriculum_hash = doc.value("curriculum_hash", "");
    policy.course_codes = doc.value("courses", std::vector<std::string>{});

    auto id_of = [&](const std::string& code) -> CourseId {
      auto it = std::find(policy.course_codes.begin(), policy.course_codes.end(), code);
      if (it != policy.course_codes.end()) return static_cast<CourseId>(it - policy.course_codes.begin());
      throw Error(Errc::ParseError, "policy action names unknown course '" + code + "'");
    };

    for (const auto& row : doc.at("entries")) {
      const int quarter = row.at("quarter").get<int>();
      if (quarter < 1 || quarter > horizon) throw Error(Errc::RangeError, "policy entry quarter out of range");
      PolicyTable::Entry e;
      for (const auto& c : row.at("action")) e.action = e.action.with(id_of(c.get<std::string>()));
      e.value = row.at("value").get<double>();
      e.terminal = row.value("terminal", false);
      policy.set(quarter - 1, CourseState::from_hex(width, row.at("state").get<std::string>()), std::move(e));
    }
    return policy;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("policy JSON: ") + e.what());
  }
}

inline PolicyTable load_policy(const std::filesystem::path& path) { return policy_from_json(read_json_file(path)); }

inline void save_policy(const PolicyTable& policy, const std::filesystem::path& path) {
  write_text_file(path, policy_to_json(policy).dump(1) + "\n");
}

/// quarter,num_states,num_and_nodes
template <class Prob>
std::string graph_stats_csv(const basic_layered_graph<Prob>& g) {
  std::string out = "quarter,num_states,num_and_nodes\n";
  for (std::size_t t = 0; t < g.layer_size.size(); ++t)
    out += std::to_string(t) + "," + std::to_string(g.layer_size[t]) + "," + std::to_string(g.and_nodes[t].size()) + "\n";
  return out;
}

}  // namespace coursedp
