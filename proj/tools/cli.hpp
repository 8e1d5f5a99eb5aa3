#pragma once

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coursedp/coursedp.hpp"

namespace coursedp::cli {

inline constexpr std::uint64_t kDefaultSeed = 20160901;

enum ExitCode : int { Ok = 0, Validation = 2, Infeasible = 3, ResourceCap = 4, IoParse = 5 };

inline int exit_code(Errc e) {
  switch (e) {
    case Errc::Infeasible: return Infeasible;
    case Errc::SizeLimit: return ResourceCap;
    case Errc::ParseError:
    case Errc::IoError: return IoParse;
    default: return Validation;
  }
}

struct GlobalOptions {
  std::uint64_t seed = kDefaultSeed;
  std::filesystem::path out_dir = "out";
  std::size_t max_nodes = PlannerOptions{}.max_nodes;

  PlannerOptions planner() const {
    PlannerOptions o;
    o.max_nodes = max_nodes;
    return o;
  }
};

namespace detail {

inline std::string join_counts(const std::vector<std::size_t>& counts) {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) s += (i ? "," : "") + std::to_string(counts[i]);
  return s;
}

inline std::string show(const Curriculum& cur, CourseSet a) { return a.empty() ? "(none)" : course_codes(cur, a); }

inline CourseSet parse_codes(const std::vector<std::string>& codes, const std::vector<std::string>& known) {
  CourseSet out;
  for (const auto& c : codes) {
    auto it = std::find(known.begin(), known.end(), c);
    if (it == known.end()) throw Error(Errc::RangeError, "unknown course code '" + c + "'");
    out = out.with(static_cast<CourseId>(it - known.begin()));
  }
  return out;
}

inline std::vector<std::string> split_codes(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

struct PlanArgs {
  std::filesystem::path curriculum;
  std::string reward = "on-time";
  std::optional<std::filesystem::path> policy;
  int candidates = 1;
};

inline int cmd_plan(const GlobalOptions& g, const PlanArgs& a, std::ostream& out) {
  const Curriculum cur = load_curriculum(a.curriculum);
  const RewardKind kind = reward_kind_from_string(a.reward);
  const auto seq = best_failfree_sequence(cur, g.planner());

  const auto graph = forward_search(cur, g.planner());
  PolicyTable policy = backward_induction(graph, kind);
  stamp(policy, cur);
  const auto path = a.policy.value_or(g.out_dir / "policy.json");
  save_policy(policy, path);
  write_text_file(g.out_dir / "graph_stats.csv", graph_stats_csv(graph));

  const auto counts = state_counts(graph);
  out << "curriculum: " << a.curriculum.string() << " (" << cur.size() << " courses, hash " << content_hash(cur) << ")\n";
  out << "reward: " << to_string(kind) << "\n";
  out << "V(s0): " << std::setprecision(12) << policy.root_value() << "\n";
  out << "first action: " << detail::show(cur, recommend(policy, cur.initial_state(), 1)) << "\n";
  out << "best fail-free sequence: " << seq.length() << " quarters\n";
  for (const auto& step : seq.steps) out << "  quarter " << step.quarter << ": " << detail::show(cur, step.action) << "\n";
  out << "states per quarter: " << detail::join_counts(counts) << "\n";
  out << "saturation quarter: " << saturation_quarter(counts) << "\n";
  out << "policy: " << path.string() << "\n";

  if (a.candidates > 1) {
    const auto cands = enumerate_candidate_policies(cur, kind, a.candidates, g.planner());
    for (std::size_t j = 0; j < cands.size(); ++j) {
      PolicyTable p = cands[j];
      stamp(p, cur);
      const auto cp = g.out_dir / ("candidate_" + std::to_string(j + 1) + ".json");
      save_policy(p, cp);
      out << "candidate " << j + 1 << ":";
      for (const auto& step : on_path_sequence(p, cur).steps) out << " [" << detail::show(cur, step.action) << "]";
      out << " -> " << cp.string() << "\n";
    }
  }
  return Ok;
}

struct SimulateArgs {
  std::filesystem::path curriculum;
  std::filesystem::path policy;
  std::uint64_t n = 100'000;
  unsigned threads = 0;
};

inline int cmd_simulate(const GlobalOptions& g, const SimulateArgs& a, std::ostream& out) {
  const Curriculum cur = load_curriculum(a.curriculum);
  const PolicyTable policy = load_policy(a.policy);
  if (policy.curriculum_hash != content_hash(cur))
    throw Error(Errc::ChecksumMismatch, "policy was computed for curriculum " + policy.curriculum_hash +
                                            ", not " + content_hash(cur));
  const GradReport r = graduation_stats(cur, policy, a.n, g.seed, a.threads);
  write_text_file(g.out_dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_text_file(g.out_dir / "histogram.csv", histogram_csv(r));
  out << "students: " << r.n << "\n";
  out << "on-time probability: " << std::setprecision(6) << r.on_time_prob << " +/- " << r.ci_halfwidth << "\n";
  out << "expected graduation quarter: ";
  if (r.expected_time) out << *r.expected_time << "\n";
  else out << "n/a\n";
  out << "report: " << (g.out_dir / "report.json").string() << "\n";
  return Ok;
}

struct RecommendArgs {
  std::filesystem::path policy;
  std::string state;
  int quarter = 1;
};

inline int cmd_recommend(const GlobalOptions&, const RecommendArgs& a, std::ostream& out) {
  const PolicyTable policy = load_policy(a.policy);
  const CourseState s(policy.width(), detail::parse_codes(detail::split_codes(a.state), policy.course_codes));
  if (a.quarter < 1 || a.quarter > policy.horizon())
    throw Error(Errc::QuarterOutOfRange, "quarter must be in 1.." + std::to_string(policy.horizon()));
  const auto* e = policy.find(a.quarter - 1, s);
  if (!e) {
    std::string msg = "state {" + a.state + "} is not reachable at the start of quarter " + std::to_string(a.quarter);
    std::optional<int> nearest;
    for (int t = 0; t < policy.horizon(); ++t)
      if (policy.find(t, s) && (!nearest || std::abs(t + 1 - a.quarter) < std::abs(*nearest - a.quarter))) nearest = t + 1;
    msg += nearest ? "; nearest quarter where it is reachable: " + std::to_string(*nearest)
                   : "; it is not reachable in any quarter";
    throw Error(Errc::UnknownState, msg);
  }
  std::string codes;
  recommend(policy, s, a.quarter).for_each([&](CourseId n) {
    codes += (codes.empty() ? "" : ", ") + policy.course_codes.at(static_cast<std::size_t>(n));
  });
  out << "recommendation: " << (codes.empty() ? "(none)" : codes) << "\n";
  if (e->terminal) out << "terminal\n";
  out << "value: " << std::setprecision(12) << e->value << "\n";
  return Ok;
}

struct BanditArgs {
  std::filesystem::path table;
  std::optional<std::filesystem::path> env;
  std::string scheme = "all";
  std::uint64_t n = 100'000;
  BanditConfig config;
  std::uint64_t curve_stride = 1;
};

inline int cmd_bandit(const GlobalOptions& g, const BanditArgs& a, std::ostream& out) {
  const EnvModel env = load_env(a.table, a.env);
  const auto oracle = oracle_means(env);
  std::vector<Scheme> schemes;
  if (a.scheme == "all") schemes = {Scheme::Oracle, Scheme::Adaptive, Scheme::NoPersonalization, Scheme::Random};
  else schemes = {scheme_from_string(a.scheme)};
  if (a.n < 1) throw Error(Errc::RangeError, "need at least one student");
  if (a.curve_stride < 1) throw Error(Errc::RangeError, "curve stride must be >= 1");

  std::vector<BenchmarkResult> results;
  for (Scheme s : schemes) {
    results.push_back(benchmark(s, env, a.n, g.seed, a.config));
    const auto& res = results.back();
    const std::string name(to_string(s));
    const auto reg = regret(res.history, [&](const Context& th) { return oracle.best_mean(th); });
    write_text_file(g.out_dir / ("history_" + name + ".csv"), history_csv(res.history));
    write_text_file(g.out_dir / ("regret_" + name + ".csv"), regret_csv(reg));
    out << std::left << std::setw(20) << name << " final average GPA " << std::fixed << std::setprecision(4)
        << res.avg_gpa.back() << "  Reg(n)/n " << reg.average.back() << "\n"
        << std::defaultfloat;
  }
  write_text_file(g.out_dir / "curves.csv", curves_csv(results, a.curve_stride));
  out << "oracle expectation (count-weighted): " << std::setprecision(6) << count_weighted_oracle_mean(env) << "\n";
  out << "outputs: " << g.out_dir.string() << "\n";
  return Ok;
}

struct InspectArgs {
  std::filesystem::path curriculum;
};

inline int cmd_inspect(const GlobalOptions& g, const InspectArgs& a, std::ostream& out) {
  const Curriculum cur = load_curriculum(a.curriculum);
  const auto graph = forward_search(cur, g.planner());
  const auto counts = state_counts(graph);
  std::string csv = "quarter,num_states\n";
  for (std::size_t t = 0; t < counts.size(); ++t) csv += std::to_string(t) + "," + std::to_string(counts[t]) + "\n";
  write_text_file(g.out_dir / "state_counts.csv", csv);
  write_text_file(g.out_dir / "graph_stats.csv", graph_stats_csv(graph));
  out << "courses: " << cur.size() << " (" << cur.mandatory_count() << " mandatory)\n";
  out << "states per quarter: " << detail::join_counts(counts) << "\n";
  out << "saturation quarter: " << saturation_quarter(counts) << "\n";
  out << "node entries: " << graph.node_entries() << "\n";
  return Ok;
}

struct ResourceArgs {
  int leaves = 9;
  double p = 0.2;
  double eps = 0.1;
  std::uint64_t n = 100'000;
};

inline int cmd_resource(const GlobalOptions& g, const ResourceArgs& a, std::ostream& out) {
  const auto r = resource_experiment(a.leaves, a.p, a.eps, a.n, g.seed);
  const double tau1 = resource_case1_expected(a.leaves, a.p, a.eps);
  const double threshold = 1.0 / (std::sqrt(static_cast<double>(a.leaves)) + 1.0);
  json doc{{"leaves", a.leaves},          {"p", a.p},
           {"eps", a.eps},                {"n", a.n},
           {"seed", g.seed},              {"mean_time_case1", r.mean_time_case1},
           {"mean_time_case2", r.mean_time_case2}, {"capped_case1", r.capped_case1},
           {"capped_case2", r.capped_case2}, {"case1_closed_form", tau1}};
  write_text_file(g.out_dir / "resource.json", doc.dump(2) + "\n");
  out << std::setprecision(6);
  out << "case 1 (hub course random): mean time " << r.mean_time_case1 << " quarters (closed form " << tau1 << ")\n";
  out << "case 2 (one leaf random):   mean time " << r.mean_time_case2 << " quarters\n";
  out << "p = " << a.p << (a.p < threshold ? " < " : " >= ") << "1/(sqrt(N)+1) = " << threshold << "\n";
  return Ok;
}

// ---------------------------------------------------------------------------
// Entry point

/// Parses argv and runs one subcommand. Returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Course-sequence planning and personalized policy selection"};
  app.name("coursedp");
  app.set_config("--config", "", "TOML configuration file; command-line flags take precedence");
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();
  app.add_option("--max-nodes", g.max_nodes, "Planner size guard on states plus AND nodes")->capture_default_str();

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Search the state graph and compute an optimal policy");
  plan_cmd->add_option("curriculum", plan.curriculum, "Curriculum JSON")->required();
  plan_cmd->add_option("--reward", plan.reward, "on-time | time-to-graduation")
      ->capture_default_str()
      ->check(CLI::IsMember({"on-time", "time-to-graduation"}));
  plan_cmd->add_option("--policy", plan.policy, "Policy output path (default <out-dir>/policy.json)");
  plan_cmd->add_option("--candidates", plan.candidates, "Also write up to k value-tied optimal policies")
      ->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte-Carlo graduation statistics for a policy");
  sim_cmd->add_option("curriculum", sim.curriculum, "Curriculum JSON")->required();
  sim_cmd->add_option("policy", sim.policy, "Policy JSON from 'plan'")->required();
  sim_cmd->add_option("-n,--samples", sim.n, "Number of simulated students")->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "Worker threads (0 = all cores)");

  RecommendArgs rec;
  auto* rec_cmd = app.add_subcommand("recommend", "Look up the recommended courses for a state and quarter");
  rec_cmd->add_option("policy", rec.policy, "Policy JSON")->required();
  rec_cmd->add_option("--state", rec.state, "Comma-separated codes of passed courses");
  rec_cmd->add_option("--quarter", rec.quarter, "Quarter about to start (1-based)")->capture_default_str();

  BanditArgs ban;
  auto* ban_cmd = app.add_subcommand("bandit", "Run policy-selection benchmarks on a GPA table");
  ban_cmd->add_option("table", ban.table, "GPA table CSV")->required();
  ban_cmd->add_option("--env", ban.env, "Environment config JSON");
  ban_cmd->add_option("--scheme", ban.scheme, "all | oracle | adaptive | no-personalization | random")
      ->capture_default_str()
      ->check(CLI::IsMember({"all", "oracle", "adaptive", "no-personalization", "random"}));
  ban_cmd->add_option("-n,--students", ban.n, "Number of students")->capture_default_str();
  ban_cmd->add_option("--alpha", ban.config.alpha, "Exploration exponent")->capture_default_str();
  ban_cmd->add_option("--A", ban.config.A, "Split threshold scale")->capture_default_str();
  ban_cmd->add_option("--p", ban.config.p, "Split threshold exponent")->capture_default_str();
  ban_cmd->add_flag("--inherit-means", ban.config.inherit_means, "Children start from the parent's means");
  ban_cmd->add_option("--max-level", ban.config.max_level, "Deepest cluster level (-1 = unbounded)");
  ban_cmd->add_option("--curve-stride", ban.curve_stride, "Write every k-th point of the GPA curves")
      ->capture_default_str();

  InspectArgs ins;
  auto* ins_cmd = app.add_subcommand("inspect", "Per-quarter state counts and saturation quarter");
  ins_cmd->add_option("curriculum", ins.curriculum, "Curriculum JSON")->required();

  ResourceArgs res;
  auto* res_cmd = app.add_subcommand("resource-experiment", "Hub-versus-leaf availability experiment");
  res_cmd->add_option("--leaves", res.leaves, "Courses depending on the hub course")->capture_default_str();
  res_cmd->add_option("--p", res.p, "Offering probability of the random course")->capture_default_str();
  res_cmd->add_option("--eps", res.eps, "Failure probability")->capture_default_str();
  res_cmd->add_option("-n,--samples", res.n, "Simulated students per case")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return Ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return Ok;
  } catch (const CLI::CallForVersion&) {
    return Ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return e.get_name() == "FileError" ? IoParse : Validation;
  }

  try {
    if (*plan_cmd) return cmd_plan(g, plan, out);
    if (*sim_cmd) return cmd_simulate(g, sim, out);
    if (*rec_cmd) return cmd_recommend(g, rec, out);
    if (*ban_cmd) return cmd_bandit(g, ban, out);
    if (*ins_cmd) return cmd_inspect(g, ins, out);
    if (*res_cmd) return cmd_resource(g, res, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return IoParse;
  }
  return Validation;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"coursedp"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace coursedp::cli
