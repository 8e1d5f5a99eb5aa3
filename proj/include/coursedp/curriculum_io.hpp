#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "coursedp/curriculum.hpp"

namespace coursedp {

using json = nlohmann::ordered_json;

/// Builds a curriculum from the JSON document described in the README.
/// Course ids are assigned mandatory-first, then in input order. The result
/// is validated.
inline Curriculum curriculum_from_json(const json& doc) {
  try {
    Curriculum cur;
    cur.cap = doc.at("cap").get<int>();
    cur.horizon = doc.at("horizon").get<int>();
    cur.elective_quota = doc.value("elective_quota", 0);
    cur.calendar.period = doc.value("period", 3);
    if (doc.contains("load_factors")) cur.failure.load_factors = doc.at("load_factors").get<std::vector<double>>();

    const auto& in = doc.at("courses");
    std::vector<const json*> order;
    for (const auto& c : in)
      if (c.value("mandatory", true)) order.push_back(&c);
    for (const auto& c : in)
      if (!c.value("mandatory", true)) order.push_back(&c);

    std::map<std::string, CourseId> ids;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto code = order[i]->at("code").get<std::string>();
      if (!ids.emplace(code, static_cast<CourseId>(i)).second)
        throw Error(Errc::RangeError, "duplicate course code '" + code + "'");
    }
    if (order.size() > static_cast<std::size_t>(kMaxCourses))
      throw Error(Errc::RangeError, "at most 64 courses are supported");

    auto lookup = [&](const std::string& code) {
      auto it = ids.find(code);
      if (it == ids.end()) throw Error(Errc::RangeError, "unknown course code '" + code + "'");
      return it->second;
    };

    for (std::size_t i = 0; i < order.size(); ++i) {
      const json& c = *order[i];
      Course course;
      course.id = static_cast<CourseId>(i);
      course.code = c.at("code").get<std::string>();
      course.mandatory = c.value("mandatory", true);
      for (const auto& p : c.value("prereqs", std::vector<std::string>{}))
        course.prerequisites = course.prerequisites.with(lookup(p));
      cur.courses.push_back(course);
      cur.calendar.pattern.push_back(
          c.value("offered", std::vector<bool>(static_cast<std::size_t>(std::max(cur.calendar.period, 0)), true)));
      cur.failure.base.push_back(c.value("fail_base", 0.0));
    }

    if (doc.contains("schedule")) {
      for (const auto& quarter : doc.at("schedule")) {
        CourseSet offered;
        for (const auto& code : quarter) offered = offered.with(lookup(code.get<std::string>()));
        cur.calendar.schedule.push_back(offered);
      }
    }
    return validate(std::move(cur));
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("curriculum JSON: ") + e.what());
  }
}

/// Canonical JSON form: courses listed by id. Loading it back yields an
/// identical curriculum.
inline json curriculum_to_json(const Curriculum& cur) {
  json doc;
  doc["cap"] = cur.cap;
  doc["horizon"] = cur.horizon;
  doc["elective_quota"] = cur.elective_quota;
  doc["period"] = cur.calendar.period;
  doc["load_factors"] = cur.failure.load_factors;
  json courses = json::array();
  for (const auto& c : cur.courses) {
    json prereqs = json::array();
    c.prerequisites.for_each([&](CourseId p) { prereqs.push_back(cur.courses[static_cast<std::size_t>(p)].code); });
    courses.push_back({{"code", c.code},
                       {"mandatory", c.mandatory},
                       {"prereqs", prereqs},
                       {"offered", cur.calendar.pattern[static_cast<std::size_t>(c.id)]},
                       {"fail_base", cur.failure.base[static_cast<std::size_t>(c.id)]}});
  }
  doc["courses"] = courses;
  if (!cur.calendar.schedule.empty()) {
    json schedule = json::array();
    for (const auto& q : cur.calendar.schedule) {
      json codes = json::array();
      q.for_each([&](CourseId n) { codes.push_back(cur.courses[static_cast<std::size_t>(n)].code); });
      schedule.push_back(codes);
    }
    doc["schedule"] = schedule;
  }
  return doc;
}

/// 64-bit FNV-1a of the canonical JSON, as 16 hex digits.
inline std::string content_hash(const Curriculum& cur) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : curriculum_to_json(cur).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write '" + path.string() + "'");
  out << text;
}

inline Curriculum load_curriculum(const std::filesystem::path& path) {
  return curriculum_from_json(read_json_file(path));
}

inline std::string course_codes(const Curriculum& cur, CourseSet set) {
  std::string out;
  set.for_each([&](CourseId n) {
    if (!out.empty()) out += ", ";
    out += cur.courses[static_cast<std::size_t>(n)].code;
  });
  return out;
}

}  // namespace coursedp
