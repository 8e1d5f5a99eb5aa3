#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "coursedp/error.hpp"

namespace coursedp {

using CourseId = int;

/// Course states are stored in one machine word.
inline constexpr int kMaxCourses = 64;

/// A set of course ids, stored as a bit mask (bit n <=> course n).
class CourseSet {
 public:
  constexpr CourseSet() noexcept = default;
  constexpr explicit CourseSet(std::uint64_t bits) noexcept : bits_(bits) {}

  static CourseSet of(std::initializer_list<CourseId> ids) {
    CourseSet s;
    for (CourseId id : ids) s = s.with(id);
    return s;
  }
  static CourseSet of(std::span<const CourseId> ids) {
    CourseSet s;
    for (CourseId id : ids) s = s.with(id);
    return s;
  }
  /// The first n ids.
  static constexpr CourseSet first(int n) noexcept {
    return CourseSet(n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1);
  }

  constexpr std::uint64_t bits() const noexcept { return bits_; }
  constexpr bool empty() const noexcept { return bits_ == 0; }
  constexpr int size() const noexcept { return std::popcount(bits_); }
  constexpr bool contains(CourseId id) const noexcept { return (bits_ >> id) & 1U; }
  constexpr CourseSet with(CourseId id) const noexcept {
    return CourseSet(bits_ | (std::uint64_t{1} << id));
  }
  constexpr CourseSet without(CourseId id) const noexcept {
    return CourseSet(bits_ & ~(std::uint64_t{1} << id));
  }
  constexpr bool subset_of(CourseSet other) const noexcept {
    return (bits_ & ~other.bits_) == 0;
  }
  constexpr bool disjoint(CourseSet other) const noexcept { return (bits_ & other.bits_) == 0; }

  constexpr CourseSet operator|(CourseSet o) const noexcept { return CourseSet(bits_ | o.bits_); }
  constexpr CourseSet operator&(CourseSet o) const noexcept { return CourseSet(bits_ & o.bits_); }
  constexpr CourseSet operator-(CourseSet o) const noexcept { return CourseSet(bits_ & ~o.bits_); }
  constexpr bool operator==(const CourseSet&) const noexcept = default;

  std::vector<CourseId> ids() const {
    std::vector<CourseId> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) out.push_back(std::countr_zero(b));
    return out;
  }

  template <class F>
  void for_each(F&& f) const {
    for (std::uint64_t b = bits_; b != 0; b &= b - 1) f(static_cast<CourseId>(std::countr_zero(b)));
  }

 private:
  std::uint64_t bits_ = 0;
};

/// Canonical action order: smaller sets first, then lexicographic on the
/// sorted id lists.
inline bool canonical_less(CourseSet a, CourseSet b) {
  if (a.size() != b.size()) return a.size() < b.size();
  const auto x = a.ids();
  const auto y = b.ids();
  return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
}

/// Which courses a student has passed. The width is the number of courses in
/// the curriculum; bits above the width are always zero.
class CourseState {
 public:
  CourseState() = default;
  explicit CourseState(int width, CourseSet passed = {}) : width_(width), passed_(passed) {
    if (width < 0 || width > kMaxCourses)
      throw Error(Errc::RangeError, "course state width must be in [0, 64]");
    if (!passed.subset_of(CourseSet::first(width)))
      throw Error(Errc::WidthMismatch, "passed set has bits beyond the state width");
  }

  int width() const noexcept { return width_; }
  CourseSet passed() const noexcept { return passed_; }
  std::uint64_t key() const noexcept { return passed_.bits(); }
  bool passed(CourseId n) const noexcept { return passed_.contains(n); }
  int count() const noexcept { return passed_.size(); }

  CourseState with_passed(CourseSet more) const { return CourseState(width_, passed_ | more); }

  bool operator==(const CourseState&) const noexcept = default;

  /// Fixed-width lowercase hex of the bit mask (course 0 is the lowest bit).
  std::string to_hex() const {
    const int digits = std::max(1, (width_ + 3) / 4);
    std::string out(static_cast<std::size_t>(digits), '0');
    std::uint64_t b = passed_.bits();
    for (int i = digits - 1; i >= 0; --i, b >>= 4) out[static_cast<std::size_t>(i)] = "0123456789abcdef"[b & 0xF];
    return out;
  }

  static CourseState from_hex(int width, const std::string& hex) {
    std::uint64_t bits = 0;
    if (hex.empty() || hex.size() > 16) throw Error(Errc::ParseError, "bad state hex '" + hex + "'");
    for (char c : hex) {
      int v;
      if (c >= '0' && c <= '9') v = c - '0';
      else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
      else throw Error(Errc::ParseError, "bad state hex '" + hex + "'");
      bits = (bits << 4) | static_cast<std::uint64_t>(v);
    }
    return CourseState(width, CourseSet(bits));
  }

 private:
  int width_ = 0;
  CourseSet passed_;
};

/// s dominates-into t (s ≺ t): every course passed in s is passed in t.
inline bool dominates(const CourseState& s, const CourseState& t) {
  if (s.width() != t.width()) throw Error(Errc::WidthMismatch, "states have different widths");
  return s.passed().subset_of(t.passed());
}

struct Course {
  CourseId id = 0;
  std::string code;
  bool mandatory = true;
  CourseSet prerequisites;
};

/// Per-quarter offerings. Each course repeats a pattern of `period` quarters
/// (quarter t uses slot (t-1) mod period). An explicit schedule, when given,
/// overrides the pattern for quarters 1..schedule.size().
struct AvailabilityCalendar {
  int period = 3;
  std::vector<std::vector<bool>> pattern;  // [course][slot]
  std::vector<CourseSet> schedule;         // [quarter-1]

  CourseSet offered(int quarter) const {
    if (quarter >= 1 && static_cast<std::size_t>(quarter) <= schedule.size())
      return schedule[static_cast<std::size_t>(quarter - 1)];
    CourseSet out;
    const auto slot = static_cast<std::size_t>((quarter - 1) % period);
    for (std::size_t n = 0; n < pattern.size(); ++n)
      if (pattern[n][slot]) out = out.with(static_cast<CourseId>(n));
    return out;
  }
};

/// eps_n(k) = clamp(base[n] * load_factors[k-1], 0, 1); counts past the end
/// of the table reuse its last factor.
struct FailureModel {
  std::vector<double> base;
  std::vector<double> load_factors{1.0, 1.0, 1.1, 1.25};

  double epsilon(CourseId n, int k) const {
    double factor = 1.0;
    if (k >= 1 && !load_factors.empty())
      factor = load_factors[std::min(static_cast<std::size_t>(k), load_factors.size()) - 1];
    return std::clamp(base[static_cast<std::size_t>(n)] * factor, 0.0, 1.0);
  }
};

enum class RewardKind { OnTimeIndicator, TimeToGraduation };

constexpr std::string_view to_string(RewardKind kind) noexcept {
  return kind == RewardKind::OnTimeIndicator ? "on-time" : "time-to-graduation";
}

inline RewardKind reward_kind_from_string(std::string_view s) {
  if (s == "on-time" || s == "OnTimeIndicator") return RewardKind::OnTimeIndicator;
  if (s == "time-to-graduation" || s == "TimeToGraduation") return RewardKind::TimeToGraduation;
  throw Error(Errc::ParseError, "unknown reward kind '" + std::string(s) + "'");
}

/// Mandatory courses occupy ids 0..M-1, electives M..N-1.
struct Curriculum {
  std::vector<Course> courses;
  AvailabilityCalendar calendar;
  FailureModel failure;
  int cap = 1;
  int horizon = 1;
  int elective_quota = 0;

  int size() const noexcept { return static_cast<int>(courses.size()); }
  int mandatory_count() const noexcept {
    return static_cast<int>(std::count_if(courses.begin(), courses.end(),
                                          [](const Course& c) { return c.mandatory; }));
  }
  int elective_count() const noexcept { return size() - mandatory_count(); }
  CourseSet mandatory_set() const noexcept { return CourseSet::first(mandatory_count()); }
  CourseSet elective_set() const noexcept { return CourseSet::first(size()) - mandatory_set(); }
  CourseState initial_state() const { return CourseState(size()); }

  std::optional<CourseId> find(const std::string& code) const {
    for (const auto& c : courses)
      if (c.code == code) return c.id;
    return std::nullopt;
  }
};

struct ValidationIssue {
  Errc code;
  std::string message;
};

namespace detail {

inline std::string join_codes(const Curriculum& cur, const std::vector<CourseId>& ids) {
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += cur.courses[static_cast<std::size_t>(ids[i])].code;
  }
  return out + "]";
}

// Returns one cycle (as a closed walk's distinct nodes) or empty.
inline std::vector<CourseId> find_cycle(const Curriculum& cur) {
  const int n = cur.size();
  std::vector<int> color(static_cast<std::size_t>(n), 0);
  std::vector<CourseId> stack;
  std::vector<CourseId> cycle;
  auto dfs = [&](auto&& self, CourseId u) -> bool {
    color[static_cast<std::size_t>(u)] = 1;
    stack.push_back(u);
    bool found = false;
    cur.courses[static_cast<std::size_t>(u)].prerequisites.for_each([&](CourseId v) {
      if (found || v >= n) return;
      if (color[static_cast<std::size_t>(v)] == 1) {
        auto it = std::find(stack.begin(), stack.end(), v);
        cycle.assign(it, stack.end());
        found = true;
      } else if (color[static_cast<std::size_t>(v)] == 0 && self(self, v)) {
        found = true;
      }
    });
    stack.pop_back();
    color[static_cast<std::size_t>(u)] = 2;
    return found;
  };
  for (CourseId u = 0; u < n; ++u)
    if (color[static_cast<std::size_t>(u)] == 0 && dfs(dfs, u)) break;
  std::sort(cycle.begin(), cycle.end());
  return cycle;
}

}  // namespace detail

/// All structural problems with a curriculum; empty means valid.
inline std::vector<ValidationIssue> validation_issues(const Curriculum& cur) {
  std::vector<ValidationIssue> issues;
  auto add = [&](Errc code, std::string msg) { issues.push_back({code, std::move(msg)}); };
  const int n = cur.size();

  if (n > kMaxCourses) {
    add(Errc::RangeError, "at most 64 courses are supported");
    return issues;
  }
  if (cur.cap < 1) add(Errc::RangeError, "cap must be >= 1");
  if (cur.horizon < 1) add(Errc::RangeError, "horizon must be >= 1");
  if (cur.elective_quota < 0 || cur.elective_quota > cur.elective_count())
    add(Errc::RangeError, "elective_quota must be in [0, number of electives]");
  if (cur.calendar.period < 1) add(Errc::RangeError, "period must be >= 1");

  const int m = cur.mandatory_count();
  for (int i = 0; i < n; ++i) {
    const auto& c = cur.courses[static_cast<std::size_t>(i)];
    if (c.id != i) add(Errc::RangeError, "course '" + c.code + "' has id out of order");
    if (c.mandatory != (i < m))
      add(Errc::RangeError, "mandatory courses must occupy the lowest ids");
    if (!c.prerequisites.subset_of(CourseSet::first(n)))
      add(Errc::RangeError, "course '" + c.code + "' has an invalid prerequisite id");
    if (c.prerequisites.contains(i))
      add(Errc::CycleDetected, "course '" + c.code + "' is its own prerequisite");
  }

  if (cur.failure.base.size() != static_cast<std::size_t>(n)) {
    add(Errc::RangeError, "failure base must have one entry per course");
  } else {
    for (int i = 0; i < n; ++i) {
      const double b = cur.failure.base[static_cast<std::size_t>(i)];
      if (!(b >= 0.0 && b <= 1.0))
        add(Errc::RangeError, "fail_base of '" + cur.courses[static_cast<std::size_t>(i)].code + "' not in [0,1]");
    }
  }
  if (cur.failure.load_factors.empty()) add(Errc::RangeError, "load_factors must not be empty");
  for (std::size_t k = 0; k < cur.failure.load_factors.size(); ++k) {
    if (!(cur.failure.load_factors[k] >= 0.0)) add(Errc::RangeError, "load factors must be >= 0");
    if (k > 0 && cur.failure.load_factors[k] < cur.failure.load_factors[k - 1])
      add(Errc::RangeError, "load factors must be non-decreasing");
  }

  if (auto cycle = detail::find_cycle(cur); !cycle.empty() && cycle.size() > 1)
    add(Errc::CycleDetected, "prerequisite cycle through " + detail::join_codes(cur, cycle));

  if (issues.empty()) {
    // Transitive closure is safe now that the graph is acyclic.
    std::vector<CourseSet> ancestors(static_cast<std::size_t>(n));
    std::vector<bool> done(static_cast<std::size_t>(n), false);
    auto closure = [&](auto&& self, CourseId u) -> CourseSet {
      if (done[static_cast<std::size_t>(u)]) return ancestors[static_cast<std::size_t>(u)];
      CourseSet acc = cur.courses[static_cast<std::size_t>(u)].prerequisites;
      cur.courses[static_cast<std::size_t>(u)].prerequisites.for_each(
          [&](CourseId v) { acc = acc | self(self, v); });
      done[static_cast<std::size_t>(u)] = true;
      return ancestors[static_cast<std::size_t>(u)] = acc;
    };
    for (CourseId u = 0; u < m; ++u) {
      const CourseSet bad = closure(closure, u) & cur.elective_set();
      bad.for_each([&](CourseId e) {
        add(Errc::ElectivePrereqOfMandatory, "elective '" + cur.courses[static_cast<std::size_t>(e)].code +
                                                 "' is a prerequisite of mandatory '" +
                                                 cur.courses[static_cast<std::size_t>(u)].code + "'");
      });
    }
  }

  const auto& cal = cur.calendar;
  if (cal.period >= 1) {
    if (cal.pattern.size() != static_cast<std::size_t>(n)) {
      add(Errc::RangeError, "availability pattern must have one row per course");
    } else {
      CourseSet ever;
      for (int i = 0; i < n; ++i) {
        const auto& row = cal.pattern[static_cast<std::size_t>(i)];
        if (row.size() != static_cast<std::size_t>(cal.period)) {
          add(Errc::RangeError, "offering pattern of '" + cur.courses[static_cast<std::size_t>(i)].code +
                                    "' must have period entries");
          continue;
        }
        if (std::find(row.begin(), row.end(), true) != row.end()) ever = ever.with(i);
      }
      for (const auto& q : cal.schedule) {
        if (!q.subset_of(CourseSet::first(n))) add(Errc::RangeError, "schedule names an unknown course");
        ever = ever | q;
      }
      (CourseSet::first(n) - ever).for_each([&](CourseId i) {
        add(Errc::NeverOffered, "course '" + cur.courses[static_cast<std::size_t>(i)].code + "' is never offered");
      });
    }
  }
  return issues;
}

/// Returns the curriculum unchanged when valid; otherwise throws an Error
/// carrying the first issue's code and every issue in the message.
inline Curriculum validate(Curriculum cur) {
  const auto issues = validation_issues(cur);
  if (!issues.empty()) {
    std::ostringstream msg;
    for (std::size_t i = 0; i < issues.size(); ++i) {
      if (i) msg << "; ";
      msg << to_string(issues[i].code) << ": " << issues[i].message;
    }
    throw Error(issues.front().code, msg.str());
  }
  return cur;
}

inline void check_quarter(const Curriculum& cur, int t) {
  if (t < 1 || t > cur.horizon)
    throw Error(Errc::QuarterOutOfRange, "quarter " + std::to_string(t) + " outside 1.." + std::to_string(cur.horizon));
}

/// Courses electable in quarter t from state s: not yet passed, offered in t,
/// and every prerequisite passed.
inline CourseSet feasible_courses(const Curriculum& cur, int t, const CourseState& s) {
  check_quarter(cur, t);
  CourseSet out;
  const CourseSet candidates = cur.calendar.offered(t) - s.passed();
  candidates.for_each([&](CourseId n) {
    if (cur.courses[static_cast<std::size_t>(n)].prerequisites.subset_of(s.passed())) out = out.with(n);
  });
  return out;
}

/// Every subset of `pool` with at most `cap` elements, in canonical order
/// (by size, then lexicographically by sorted ids). Includes the empty set.
inline std::vector<CourseSet> subsets_up_to(CourseSet pool, int cap) {
  const auto ids = pool.ids();
  const int n = static_cast<int>(ids.size());
  std::vector<CourseSet> out;
  std::vector<int> pick;
  for (int k = 0; k <= std::min(cap, n); ++k) {
    pick.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) pick[static_cast<std::size_t>(i)] = i;
    while (true) {
      CourseSet s;
      for (int i : pick) s = s.with(ids[static_cast<std::size_t>(i)]);
      out.push_back(s);
      int i = k - 1;
      while (i >= 0 && pick[static_cast<std::size_t>(i)] == n - k + i) --i;
      if (i < 0) break;
      ++pick[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return out;
}

inline std::vector<CourseSet> action_sets(const Curriculum& cur, int t, const CourseState& s) {
  return subsets_up_to(feasible_courses(cur, t, s), cur.cap);
}

inline bool is_terminal(const Curriculum& cur, const CourseState& s) {
  return cur.mandatory_set().subset_of(s.passed()) &&
         (s.passed() & cur.elective_set()).size() >= cur.elective_quota;
}

/// Value of graduating at the end of quarter t. Quarter 0 is accepted for
/// programs whose initial state is already terminal.
inline int terminal_reward(RewardKind kind, int t, int horizon) {
  return kind == RewardKind::OnTimeIndicator ? 1 : horizon - t + 1;
}

inline double reward(const Curriculum& cur, RewardKind kind, const CourseState& s, int t) {
  check_quarter(cur, t);
  return is_terminal(cur, s) ? terminal_reward(kind, t, cur.horizon) : 0.0;
}

}  // namespace coursedp
