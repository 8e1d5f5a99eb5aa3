#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "coursedp/curriculum_io.hpp"
#include "coursedp/planner.hpp"
#include "coursedp/random.hpp"

namespace coursedp {

struct TrajectoryStep {
  int quarter;
  CourseState before;
  CourseSet action;
  CourseSet passed;  // subset of action
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  bool graduated = false;
  std::optional<int> graduation_quarter;
};

namespace detail {

template <bool Record>
std::optional<int> run_student(const Curriculum& cur, const PolicyTable& policy, Rng& rng, Trajectory* out) {
  CourseState s = cur.initial_state();
  for (int q = 1; q <= cur.horizon; ++q) {
    if (is_terminal(cur, s)) return q - 1;
    const CourseSet a = recommend(policy, s, q);
    if (a.size() > cur.cap || !a.subset_of(feasible_courses(cur, q, s)))
      throw Error(Errc::IllegalAction, "policy action in quarter " + std::to_string(q) + " violates constraints");
    const int k = a.size();
    CourseSet passed;
    a.for_each([&](CourseId n) {
      if (uniform01(rng) >= cur.failure.epsilon(n, k)) passed = passed.with(n);
    });
    if constexpr (Record) out->steps.push_back({q, s, a, passed});
    s = s.with_passed(passed);
  }
  if (is_terminal(cur, s)) return cur.horizon;
  return std::nullopt;
}

}  // namespace detail

/// One student following `policy`. Each course in the chosen action passes
/// independently with probability 1 - eps_n(|A|).
inline Trajectory simulate_student(const Curriculum& cur, const PolicyTable& policy, Rng& rng) {
  Trajectory tr;
  tr.graduation_quarter = detail::run_student<true>(cur, policy, rng, &tr);
  tr.graduated = tr.graduation_quarter.has_value();
  return tr;
}

inline Trajectory simulate_student(const Curriculum& cur, const PolicyTable& policy, std::uint64_t seed) {
  Rng rng(seed);
  return simulate_student(cur, policy, rng);
}

struct GradReport {
  std::uint64_t n = 0;
  std::uint64_t graduates = 0;
  double on_time_prob = 0.0;
  std::optional<double> expected_time;  // among graduates
  std::vector<std::uint64_t> time_histogram;  // [quarter], quarter = 0..T
  double ci_halfwidth = 0.0;

  double standard_error() const {
    return n == 0 ? 0.0 : std::sqrt(on_time_prob * (1.0 - on_time_prob) / static_cast<double>(n));
  }
};

/// Aggregates n trajectories; trajectory i draws from substream (seed, i),
/// so the report does not depend on the thread count.
inline GradReport graduation_stats(const Curriculum& cur, const PolicyTable& policy, std::uint64_t n,
                                   std::uint64_t seed, unsigned threads = 0) {
  if (n < 1) throw Error(Errc::RangeError, "sample count must be >= 1");
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, n));

  const auto bins = static_cast<std::size_t>(cur.horizon) + 1;
  std::vector<std::vector<std::uint64_t>> partial(threads, std::vector<std::uint64_t>(bins, 0));
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          const std::uint64_t lo = n * w / threads;
          const std::uint64_t hi = n * (w + 1) / threads;
          for (std::uint64_t i = lo; i < hi; ++i) {
            Rng rng = Rng::substream(seed, i);
            if (auto q = detail::run_student<false>(cur, policy, rng, nullptr))
              ++partial[w][static_cast<std::size_t>(*q)];
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  GradReport r;
  r.n = n;
  r.time_histogram.assign(bins, 0);
  std::uint64_t quarter_sum = 0;
  for (const auto& p : partial)
    for (std::size_t q = 0; q < bins; ++q) r.time_histogram[q] += p[q];
  for (std::size_t q = 0; q < bins; ++q) {
    r.graduates += r.time_histogram[q];
    quarter_sum += r.time_histogram[q] * q;
  }
  r.on_time_prob = static_cast<double>(r.graduates) / static_cast<double>(n);
  if (r.graduates > 0) r.expected_time = static_cast<double>(quarter_sum) / static_cast<double>(r.graduates);
  r.ci_halfwidth = 1.96 * r.standard_error();
  return r;
}

inline json report_to_json(const GradReport& r) {
  json doc;
  doc["n"] = r.n;
  doc["graduates"] = r.graduates;
  doc["on_time_prob"] = r.on_time_prob;
  doc["expected_time"] = r.expected_time ? json(*r.expected_time) : json(nullptr);
  doc["time_histogram"] = r.time_histogram;
  doc["ci_halfwidth"] = r.ci_halfwidth;
  return doc;
}

inline GradReport report_from_json(const json& doc) {
  try {
    GradReport r;
    r.n = doc.at("n").get<std::uint64_t>();
    r.graduates = doc.at("graduates").get<std::uint64_t>();
    r.on_time_prob = doc.at("on_time_prob").get<double>();
    if (!doc.at("expected_time").is_null()) r.expected_time = doc.at("expected_time").get<double>();
    r.time_histogram = doc.at("time_histogram").get<std::vector<std::uint64_t>>();
    r.ci_halfwidth = doc.at("ci_halfwidth").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("report JSON: ") + e.what());
  }
}

/// quarter,count
inline std::string histogram_csv(const GradReport& r) {
  std::string out = "quarter,count\n";
  for (std::size_t q = 0; q < r.time_histogram.size(); ++q)
    out += std::to_string(q) + "," + std::to_string(r.time_histogram[q]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Teaching-resource experiment

struct ResourceResult {
  double mean_time_case1 = 0.0;  // hub course offered with probability p
  double mean_time_case2 = 0.0;  // one leaf course offered with probability p
  std::uint64_t capped_case1 = 0;
  std::uint64_t capped_case2 = 0;
};

inline constexpr int kResourceQuarterCap = 10'000;

namespace detail {

// Course 0 is the hub prerequisite of courses 1..leaves. One course per
// quarter; the student takes the lowest-id offered feasible course.
inline int resource_student(int leaves, CourseId random_course, double p, double eps, Rng& rng) {
  const int total = leaves + 1;
  std::vector<bool> passed(static_cast<std::size_t>(total), false);
  int remaining = total;
  for (int t = 1; t <= kResourceQuarterCap; ++t) {
    const bool random_offered = bernoulli(rng, p);
    for (CourseId c = 0; c < total; ++c) {
      if (passed[static_cast<std::size_t>(c)]) continue;
      if (c != 0 && !passed[0]) break;
      if (c == random_course && !random_offered) continue;
      if (uniform01(rng) >= eps) {
        passed[static_cast<std::size_t>(c)] = true;
        --remaining;
      }
      break;
    }
    if (remaining == 0) return t;
  }
  return kResourceQuarterCap;
}

}  // namespace detail

/// Mean graduation time for a hub-and-leaves curriculum with N leaves when
/// either the hub (case 1) or one leaf (case 2) is offered only with
/// probability p each quarter.
inline ResourceResult resource_experiment(int leaves, double p, double eps, std::uint64_t n, std::uint64_t seed) {
  if (leaves < 1) throw Error(Errc::RangeError, "need at least one dependent course");
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::RangeError, "availability probability must be in (0,1)");
  if (!(eps >= 0.0 && eps < 1.0)) throw Error(Errc::RangeError, "failure probability must be in [0,1)");
  if (n < 1) throw Error(Errc::RangeError, "sample count must be >= 1");

  ResourceResult r;
  for (int which = 1; which <= 2; ++which) {
    const CourseId random_course = which == 1 ? 0 : 1;
    double sum = 0.0;
    std::uint64_t capped = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      Rng rng = Rng::substream(seed + static_cast<std::uint64_t>(which), i);
      const int t = detail::resource_student(leaves, random_course, p, eps, rng);
      if (t >= kResourceQuarterCap) ++capped;
      sum += t;
    }
    (which == 1 ? r.mean_time_case1 : r.mean_time_case2) = sum / static_cast<double>(n);
    (which == 1 ? r.capped_case1 : r.capped_case2) = capped;
  }
  return r;
}

/// Closed-form expected time of case 1: 1/((1-eps)p) + N/(1-eps).
inline double resource_case1_expected(int leaves, double p, double eps) {
  return 1.0 / ((1.0 - eps) * p) + leaves / (1.0 - eps);
}

}  // namespace coursedp
