#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "coursedp/policy_io.hpp"
#include "coursedp/simulator.hpp"
#include "oracles.hpp"

using namespace coursedp;

namespace {

const std::string kData = COURSEDP_DATA_DIR;

PolicyTable plan(const Curriculum& cur, RewardKind kind = RewardKind::OnTimeIndicator) {
  auto p = backward_induction(forward_search(cur), kind);
  stamp(p, cur);
  return p;
}

}  // namespace

TEST(Simulate, SureDynamicsFollowFailFreeSequence) {
  auto cur = load_curriculum(kData + "/mae19_rich.json");
  std::fill(cur.failure.base.begin(), cur.failure.base.end(), 0.0);
  const auto p = plan(cur, RewardKind::TimeToGraduation);
  const auto seq = best_failfree_sequence(cur);
  const auto tr = simulate_student(cur, p, 1);
  ASSERT_TRUE(tr.graduated);
  EXPECT_EQ(*tr.graduation_quarter, seq.length());
  ASSERT_EQ(tr.steps.size(), seq.steps.size());
  for (std::size_t i = 0; i < seq.steps.size(); ++i) {
    EXPECT_EQ(tr.steps[i].action, seq.steps[i].action);
    EXPECT_EQ(tr.steps[i].passed, tr.steps[i].action);
  }
}

TEST(Simulate, CertainFailureNeverGraduates) {
  auto cur = load_curriculum(kData + "/counter_example.json");
  std::fill(cur.failure.base.begin(), cur.failure.base.end(), 1.0);
  const auto p = plan(cur);
  for (std::uint64_t seed = 0; seed < 50; ++seed) EXPECT_FALSE(simulate_student(cur, p, seed).graduated);
}

TEST(Simulate, TrajectoryIsConsistentAndDeterministic) {
  const auto cur = load_curriculum(kData + "/mae19_sparse.json");
  const auto p = plan(cur);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = simulate_student(cur, p, seed);
    const auto b = simulate_student(cur, p, seed);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    CourseState s = cur.initial_state();
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
      EXPECT_EQ(a.steps[i].action, b.steps[i].action);
      EXPECT_EQ(a.steps[i].passed, b.steps[i].passed);
      EXPECT_EQ(a.steps[i].before, s);
      EXPECT_TRUE(a.steps[i].passed.subset_of(a.steps[i].action));
      EXPECT_TRUE(a.steps[i].action.subset_of(feasible_courses(cur, a.steps[i].quarter, s)));
      s = s.with_passed(a.steps[i].passed);
    }
    EXPECT_EQ(a.graduated, is_terminal(cur, s));
  }
}

TEST(Simulate, IllegalPolicyActionIsCaught) {
  const auto cur = load_curriculum(kData + "/counter_example.json");
  auto p = plan(cur);
  // Course 1 is not offered in quarter 2.
  p.set_action(0, cur.initial_state(), CourseSet{});
  p.set_action(1, cur.initial_state(), CourseSet::of({0}));
  try {
    simulate_student(cur, p, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IllegalAction);
  }
}

TEST(GradStats, SureDynamicsGraduateOnTime) {
  auto cur = load_curriculum(kData + "/four_course.json");
  std::fill(cur.failure.base.begin(), cur.failure.base.end(), 0.0);
  const auto r = graduation_stats(cur, plan(cur, RewardKind::TimeToGraduation), 1000, 5);
  EXPECT_DOUBLE_EQ(r.on_time_prob, 1.0);
  ASSERT_TRUE(r.expected_time.has_value());
  EXPECT_DOUBLE_EQ(*r.expected_time, best_failfree_sequence(cur).length());
}

TEST(GradStats, CounterExampleMatchesPlannerValue) {
  const auto cur = load_curriculum(kData + "/counter_example.json");
  const auto p = plan(cur);
  const auto r = graduation_stats(cur, p, 1'000'000, 2024);
  EXPECT_NEAR(r.on_time_prob, 0.81, 0.002);
  EXPECT_NEAR(r.on_time_prob, p.root_value(), 3 * r.standard_error());
}

TEST(GradStats, ThreadCountDoesNotChangeReport) {
  const auto cur = load_curriculum(kData + "/mae19_sparse.json");
  const auto p = plan(cur);
  const auto a = graduation_stats(cur, p, 20'000, 9, 1);
  const auto b = graduation_stats(cur, p, 20'000, 9, 7);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  std::uint64_t sum = 0;
  for (auto c : a.time_histogram) sum += c;
  EXPECT_EQ(sum, a.graduates);
}

TEST(GradStats, RicherAvailabilityGraduatesSoonerAndMoreOften) {
  const auto rich = load_curriculum(kData + "/mae19_rich.json");
  const auto sparse = load_curriculum(kData + "/mae19_sparse.json");
  const auto r = graduation_stats(rich, plan(rich, RewardKind::TimeToGraduation), 20'000, 1);
  const auto s = graduation_stats(sparse, plan(sparse, RewardKind::TimeToGraduation), 20'000, 1);
  EXPECT_GT(r.on_time_prob, s.on_time_prob);
  EXPECT_LT(*r.expected_time, *s.expected_time);
}

TEST(GradStats, MonteCarloAgreesWithPlannerOnRandomInstances) {
  std::mt19937_64 rng(41);
  oracle::GenOptions o;
  o.max_n = 5;
  for (int trial = 0; trial < 10; ++trial) {
    const auto cur = oracle::to_curriculum(oracle::random_instance(rng, o));
    const auto p = plan(cur);
    const auto r = graduation_stats(cur, p, 50'000, 100 + static_cast<std::uint64_t>(trial));
    EXPECT_LE(std::abs(r.on_time_prob - p.root_value()), 3 * r.standard_error() + 1e-12) << "trial " << trial;
  }
}

TEST(GradStats, ReportJsonRoundTrip) {
  const auto cur = load_curriculum(kData + "/counter_example.json");
  const auto r = graduation_stats(cur, plan(cur), 1000, 4);
  const auto back = report_from_json(json::parse(report_to_json(r).dump()));
  EXPECT_EQ(report_to_json(back).dump(), report_to_json(r).dump());
  EXPECT_EQ(histogram_csv(r).rfind("quarter,count\n", 0), 0U);
  EXPECT_THROW(graduation_stats(cur, plan(cur), 0, 4), Error);
}

TEST(Resource, HubScarcityHurtsMoreBelowThreshold) {
  const auto r = resource_experiment(9, 0.2, 0.1, 100'000, 77);
  EXPECT_GT(r.mean_time_case1, r.mean_time_case2);
  const double tau1 = 1.0 / (0.9 * 0.2) + 9.0 / 0.9;
  EXPECT_NEAR(resource_case1_expected(9, 0.2, 0.1), tau1, 1e-12);
  EXPECT_NEAR(r.mean_time_case1, tau1, 0.02 * tau1);
  EXPECT_EQ(r.capped_case1, 0U);
}

TEST(Resource, NearFullAvailability) {
  const auto r = resource_experiment(9, 0.999, 0.0, 20'000, 5);
  EXPECT_NEAR(r.mean_time_case1, 10.0, 0.05);
  EXPECT_NEAR(r.mean_time_case2, 10.0, 0.05);
}

TEST(Resource, RangeChecks) {
  EXPECT_THROW(resource_experiment(9, 0.0, 0.1, 10, 1), Error);
  EXPECT_THROW(resource_experiment(9, 1.0, 0.1, 10, 1), Error);
  EXPECT_THROW(resource_experiment(0, 0.5, 0.1, 10, 1), Error);
  EXPECT_THROW(resource_experiment(9, 0.5, 1.0, 10, 1), Error);
}
