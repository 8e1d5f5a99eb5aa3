#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "coursedp/bandit.hpp"
#include "coursedp/synth.hpp"
#include "oracles.hpp"

using namespace coursedp;

namespace {

const std::string kData = COURSEDP_DATA_DIR;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::IoError;
}

EnvModel bundled_env() {
  return EnvModel(load_gpa_table(kData + "/gpa_table.csv"), env_config_from_json(read_json_file(kData + "/gpa_env.json")));
}

// Number of active clusters containing theta.
int containing_active(const Partition& p, std::span<const double> theta) {
  int hits = 0;
  for (auto idx : p.active()) hits += p.cluster(idx).contains(theta);
  return hits;
}

}  // namespace

TEST(Controls, Gamma) {
  EXPECT_DOUBLE_EQ(control_gamma(1, 3, 1.0), 0.0);
  EXPECT_NEAR(control_gamma(100, 0, 1.0), 4.605170185988091, 1e-12);
  EXPECT_NEAR(control_gamma(2, 2, 1.0) / std::log(2.0), 16.0, 1e-12);
  EXPECT_EQ(code_of([] { control_gamma(0, 0, 1.0); }), Errc::RangeError);
  EXPECT_EQ(code_of([] { control_gamma(1, -1, 1.0); }), Errc::RangeError);
}

TEST(Controls, Zeta) {
  EXPECT_DOUBLE_EQ(control_zeta(0, 7.0, 2.0), 7.0);
  EXPECT_DOUBLE_EQ(control_zeta(3, 1.0, 2.0), 64.0);
  EXPECT_DOUBLE_EQ(control_zeta(1, 10.0, 1.0), 20.0);
  EXPECT_EQ(code_of([] { control_zeta(-1, 1.0, 1.0); }), Errc::RangeError);
  EXPECT_EQ(code_of([] { control_zeta(0, 0.0, 1.0); }), Errc::RangeError);
}

TEST(Partition, FreshPartitionLocatesRoot) {
  Partition p(1, 2);
  EXPECT_EQ(p.locate(std::vector<double>{0.7}), 0U);
}

TEST(Partition, HalfOpenBoundary) {
  Partition p(1, 2);
  p.split(0);
  const auto idx = p.locate(std::vector<double>{0.5});
  EXPECT_EQ(p.cluster(idx).cell, (std::vector<std::uint64_t>{1}));
  EXPECT_EQ(p.cluster(p.locate(std::vector<double>{0.4999})).cell, (std::vector<std::uint64_t>{0}));
}

TEST(Partition, ClosureAtOne) {
  Partition p(2, 1);
  p.split(0);
  p.split(p.locate(std::vector<double>{1.0, 1.0}));
  const auto& c = p.cluster(p.locate(std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(c.level, 2);
  EXPECT_EQ(c.cell, (std::vector<std::uint64_t>{3, 3}));
  EXPECT_TRUE(c.contains(std::vector<double>{1.0, 1.0}));
}

TEST(Partition, OutOfRange) {
  Partition p(2, 1);
  EXPECT_EQ(code_of([&] { p.locate(std::vector<double>{1.01, 0.5}); }), Errc::ContextOutOfRange);
  EXPECT_EQ(code_of([&] { p.locate(std::vector<double>{-0.1, 0.5}); }), Errc::ContextOutOfRange);
  EXPECT_EQ(code_of([&] { p.locate(std::vector<double>{0.5}); }), Errc::ContextOutOfRange);
  EXPECT_EQ(code_of([&] { p.locate(std::vector<double>{std::nan(""), 0.5}); }), Errc::ContextOutOfRange);
}

TEST(Partition, TwoDimensionalSplitHasFourDisjointChildren) {
  Partition p(2, 1);
  p.split(0);
  const auto act = p.active();
  ASSERT_EQ(act.size(), 4U);
  double area = 0;
  for (auto i : act) {
    EXPECT_EQ(p.cluster(i).level, 1);
    EXPECT_DOUBLE_EQ(p.cluster(i).side(), 0.5);
    area += p.cluster(i).side() * p.cluster(i).side();
  }
  EXPECT_DOUBLE_EQ(area, 1.0);
  Rng rng(2);
  for (int k = 0; k < 2000; ++k) {
    const std::vector<double> th{uniform01(rng), uniform01(rng)};
    EXPECT_EQ(containing_active(p, th), 1);
  }
}

TEST(Select, FreshClusterExplores) {
  Partition p(1, 3);
  BanditConfig cfg;
  cfg.arms = 3;
  Rng rng(1);
  EXPECT_EQ(select(p.cluster(0), 2, cfg, rng).phase, Phase::Explore);
}

TEST(Select, ExploitsArgmax) {
  Cluster c;
  c.counts = {50, 50, 50};
  c.means = {3.1, 3.4, 3.2};
  BanditConfig cfg;
  cfg.arms = 3;
  Rng rng(1);
  const auto s = select(c, 2, cfg, rng);
  EXPECT_EQ(s.phase, Phase::Exploit);
  EXPECT_EQ(s.arm, 1);
  c.means = {3.0, 3.4, 3.4};
  EXPECT_EQ(select(c, 2, cfg, rng).arm, 1);
}

TEST(Select, ExploresOnlyUnderSampledArms) {
  Cluster c;
  c.counts = {100, 0, 100};
  c.means = {3.9, 0.0, 3.9};
  BanditConfig cfg;
  cfg.arms = 3;
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    const auto s = select(c, 10, cfg, rng);
    EXPECT_EQ(s.phase, Phase::Explore);
    EXPECT_EQ(s.arm, 1);
  }
}

TEST(Update, FirstSampleSetsMean) {
  Partition p(1, 2);
  BanditConfig cfg;
  cfg.arms = 2;
  update(p, 0, 1, 3.3, cfg);
  EXPECT_DOUBLE_EQ(p.cluster(0).means[1], 3.3);
  EXPECT_EQ(p.cluster(0).counts[1], 1U);
  EXPECT_EQ(code_of([&] { update(p, 0, 0, 4.1, cfg); }), Errc::RangeError);
  EXPECT_EQ(code_of([&] { update(p, 0, 2, 3.0, cfg); }), Errc::RangeError);
}

TEST(Update, SplitAtThreshold) {
  Partition p(1, 2);
  BanditConfig cfg;
  cfg.arms = 2;
  cfg.A = 4;
  cfg.p = 1;
  for (int k = 0; k < 3; ++k) EXPECT_FALSE(update(p, 0, k % 2, 3.0, cfg));
  EXPECT_TRUE(update(p, 0, 0, 3.0, cfg));
  EXPECT_FALSE(p.cluster(0).active);
  EXPECT_EQ(p.active().size(), 2U);
  for (auto i : p.active()) {
    EXPECT_EQ(p.cluster(i).total, 0U);
    EXPECT_EQ(p.cluster(i).means, (std::vector<double>{0.0, 0.0}));
  }
}

TEST(Update, InheritMeansFlag) {
  Partition p(1, 2);
  BanditConfig cfg;
  cfg.arms = 2;
  cfg.A = 1;
  cfg.inherit_means = true;
  update(p, 0, 1, 2.0, cfg);
  for (auto i : p.active()) {
    EXPECT_DOUBLE_EQ(p.cluster(i).means[1], 2.0);
    EXPECT_EQ(p.cluster(i).counts[1], 0U);
  }
}

TEST(Update, MaxLevelFreezesPartition) {
  Partition p(1, 2);
  BanditConfig cfg;
  cfg.arms = 2;
  cfg.A = 1;
  cfg.max_level = 0;
  for (int k = 0; k < 100; ++k) EXPECT_FALSE(update(p, 0, 0, 3.0, cfg));
  EXPECT_EQ(p.size(), 1U);
}

TEST(Learner, CoverAndConservationUnderFuzz) {
  BanditConfig cfg;
  cfg.arms = 3;
  cfg.A = 8;
  cfg.p = 1.0;
  cfg.alpha = 0.5;
  AdaptivePolicySelector learner(2, cfg, 99);
  Rng rng(100);
  std::map<std::pair<std::size_t, int>, std::pair<double, std::uint64_t>> folded;
  for (int i = 1; i <= 20'000; ++i) {
    const std::vector<double> th{uniform01(rng), uniform01(rng)};
    const auto idx = learner.partition().locate(th);
    const auto s = learner.choose(th);
    const double g = uniform(rng, 0.0, 4.0);
    auto& f = folded[{idx, s.arm}];
    f.first += g, ++f.second;
    learner.observe(g);
    EXPECT_EQ(learner.partition().total_events(), static_cast<std::uint64_t>(i));
    if (i % 500 == 0) {
      for (int k = 0; k < 20; ++k) {
        const std::vector<double> probe{uniform01(rng), uniform01(rng)};
        EXPECT_EQ(containing_active(learner.partition(), probe), 1);
      }
    }
  }
  for (const auto& [key, f] : folded) {
    const auto& c = learner.partition().cluster(key.first);
    EXPECT_EQ(c.counts[static_cast<std::size_t>(key.second)], f.second);
    EXPECT_NEAR(c.means[static_cast<std::size_t>(key.second)], f.first / static_cast<double>(f.second), 1e-9);
  }
  EXPECT_GT(learner.partition().max_level(), 1);
}

TEST(Learner, ChooseObserveProtocol) {
  BanditConfig cfg;
  cfg.arms = 2;
  AdaptivePolicySelector learner(1, cfg, 1);
  EXPECT_EQ(code_of([&] { learner.observe(3.0); }), Errc::RangeError);
  learner.choose(std::vector<double>{0.3});
  EXPECT_EQ(code_of([&] { learner.choose(std::vector<double>{0.3}); }), Errc::RangeError);
}

TEST(Run, SingleArmHasNoRegretInExpectation) {
  oracle::StepEnv env;
  env.low_side = {3.0};
  env.high_side = {2.0};
  const auto h = run(env, 20'000, {}, 3);
  const auto reg = regret(h, [&](const Context& th) { return env.oracle(th).second; });
  EXPECT_LT(std::abs(reg.average.back()), 3 * 0.3 / std::sqrt(20'000.0));
  for (const auto& r : h.records) EXPECT_EQ(r.arm, 0);
}

TEST(Run, DominantArmIsFound) {
  oracle::StepEnv env;
  env.low_side = {2.8, 3.3, 2.9};
  env.high_side = {2.8, 3.3, 2.9};
  const auto h = run(env, 5000, {}, 11);
  int hits = 0;
  for (std::size_t k = h.records.size() - 1000; k < h.records.size(); ++k) hits += h.records[k].arm == 1;
  EXPECT_GT(hits, 900);
}

TEST(Run, FlipAtHalfIsLearned) {
  oracle::StepEnv env;
  env.low_side = {3.4, 2.9};
  env.high_side = {2.9, 3.4};
  const auto h = run(env, 20'000, {}, 12);
  std::array<std::array<int, 2>, 2> picks{};
  for (std::size_t k = h.records.size() / 2; k < h.records.size(); ++k)
    ++picks[h.records[k].theta[0] >= 0.5][static_cast<std::size_t>(h.records[k].arm)];
  EXPECT_GT(picks[0][0], picks[0][1]);
  EXPECT_GT(picks[1][1], picks[1][0]);
}

TEST(Run, DeterministicGivenSeed) {
  const auto env = bundled_env();
  const auto a = run(env, 3000, {}, 5);
  const auto b = run(env, 3000, {}, 5);
  EXPECT_EQ(history_csv(a), history_csv(b));
  EXPECT_NE(history_csv(a), history_csv(run(env, 3000, {}, 6)));
  for (std::size_t k = 0; k < a.records.size(); ++k) EXPECT_EQ(a.records[k].i, k + 1);
}

TEST(Regret, OracleSchemeIsZeroMean) {
  const auto env = bundled_env();
  const auto o = oracle_means(env);
  const auto res = benchmark(Scheme::Oracle, env, 50'000, 8);
  const auto reg = regret(res.history, [&](const Context& th) { return o.best_mean(th); });
  EXPECT_LT(std::abs(reg.average.back()), 3 * 0.3 / std::sqrt(50'000.0));
}

TEST(Regret, AlwaysWorstArmIsLinear) {
  oracle::StepEnv env;
  env.low_side = {3.5, 3.0};
  env.high_side = {3.5, 3.0};
  env.sigma = 0.0;
  History h;
  Rng rng(1);
  for (std::uint64_t i = 1; i <= 1000; ++i) {
    const auto th = env.sample_context(rng);
    h.records.push_back({i, th, 1, Phase::Exploit, env.sample_gpa(th, 1, rng), 0.5});
  }
  const auto reg = regret(h, [&](const Context& th) { return env.oracle(th).second; });
  EXPECT_NEAR(reg.cumulative.back(), 500.0, 1e-9);
  EXPECT_NEAR(reg.cumulative[99], 50.0, 1e-9);
}

TEST(Regret, LengthMismatch) {
  History h;
  h.records.resize(3);
  const std::vector<double> means(2, 3.0);
  EXPECT_EQ(code_of([&] { regret(h, std::span<const double>(means)); }), Errc::LengthMismatch);
}

TEST(Regret, LogLogSlope) {
  std::vector<double> lin(1000), root(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    lin[i] = 2.0 * static_cast<double>(i + 1);
    root[i] = std::sqrt(static_cast<double>(i + 1));
  }
  EXPECT_NEAR(loglog_slope(lin, 10, 1000), 1.0, 1e-9);
  EXPECT_NEAR(loglog_slope(root, 10, 1000), 0.5, 1e-3);
}

TEST(Benchmark, RandomAndOracleLevels) {
  const auto env = bundled_env();
  const auto random = benchmark(Scheme::Random, env, 50'000, 3);
  EXPECT_NEAR(random.avg_gpa.back(), 3.26, 0.05);
  const auto oracle = benchmark(Scheme::Oracle, env, 50'000, 3);
  // Count-weighted mean of the per-bin maxima, computed by hand.
  const double expect = (3.36 * 114 + 3.39 * 108 + 3.61 * 65 + 3.9 * 49) / 336.0;
  EXPECT_NEAR(count_weighted_oracle_mean(env), expect, 1e-12);
  EXPECT_NEAR(oracle.avg_gpa.back(), expect, 0.02);
}

TEST(Benchmark, SchemesShareContexts) {
  const auto env = bundled_env();
  const auto a = benchmark(Scheme::Random, env, 500, 4);
  const auto b = benchmark(Scheme::Adaptive, env, 500, 4);
  for (std::size_t k = 0; k < 500; ++k) EXPECT_EQ(a.history.records[k].theta, b.history.records[k].theta);
}

TEST(Csv, HistoryAndCurvesRoundTrip) {
  const auto env = bundled_env();
  std::vector<BenchmarkResult> res{benchmark(Scheme::Adaptive, env, 300, 1), benchmark(Scheme::Random, env, 300, 1)};
  std::istringstream hin(history_csv(res[0].history));
  const auto h = history_from_csv(hin);
  EXPECT_EQ(history_csv(h), history_csv(res[0].history));
  std::istringstream cv(curves_csv(res, 7));
  const auto pts = curves_from_csv(cv);
  EXPECT_EQ(pts.size(), 2U * (300 / 7 + 1));
  EXPECT_EQ(pts.back().i, 300U);
  EXPECT_EQ(pts.back().scheme, Scheme::Random);
  EXPECT_DOUBLE_EQ(pts.back().avg_gpa, res[1].avg_gpa.back());
  EXPECT_EQ(scheme_from_string("no-personalization"), Scheme::NoPersonalization);
}
