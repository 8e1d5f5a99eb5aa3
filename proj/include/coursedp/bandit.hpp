#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "coursedp/error.hpp"
#include "coursedp/random.hpp"

namespace coursedp {

/// Normalized student background in [0,1]^W.
using Context = std::vector<double>;

inline constexpr double kGpaMin = 0.0;
inline constexpr double kGpaMax = 4.0;

struct BanditConfig {
  int arms = 1;
  double alpha = 0.25;  // similarity exponent, enters the exploration control only
  double A = 1000.0;    // partition threshold scale
  double p = 1.5;       // partition threshold exponent
  /// Children start from the parent's means (counters still start at zero).
  bool inherit_means = false;
  /// Deepest level a cluster may reach; negative means unbounded. Level 0
  /// freezes the partition at the root, which ignores the context.
  int max_level = -1;
};

inline void validate(const BanditConfig& cfg) {
  if (cfg.arms < 1) throw Error(Errc::RangeError, "bandit needs at least one arm");
  if (!(cfg.alpha > 0.0) || !(cfg.A > 0.0) || !(cfg.p > 0.0))
    throw Error(Errc::RangeError, "alpha, A and p must be positive");
}

/// Exploration control 2^(2 alpha l) ln i.
inline double control_gamma(std::uint64_t i, int level, double alpha) {
  if (i < 1 || level < 0 || !(alpha > 0.0)) throw Error(Errc::RangeError, "control_gamma needs i >= 1, l >= 0, alpha > 0");
  return std::exp2(2.0 * alpha * level) * std::log(static_cast<double>(i));
}

/// Partition control A 2^(p l).
inline double control_zeta(int level, double A, double p) {
  if (level < 0 || !(A > 0.0) || !(p > 0.0)) throw Error(Errc::RangeError, "control_zeta needs l >= 0, A > 0, p > 0");
  return A * std::exp2(p * level);
}

/// Hypercube of side 2^-level at integer coordinates `cell`. Each axis is
/// half-open [a, a + side) except faces touching 1, which are closed.
struct Cluster {
  int level = 0;
  std::vector<std::uint64_t> cell;
  std::vector<std::uint64_t> counts;
  std::vector<double> means;
  std::uint64_t total = 0;
  std::int64_t first_child = -1;
  bool active = true;

  double side() const { return std::ldexp(1.0, -level); }

  std::vector<double> origin() const {
    std::vector<double> o;
    o.reserve(cell.size());
    for (auto c : cell) o.push_back(std::ldexp(static_cast<double>(c), -level));
    return o;
  }

  bool contains(std::span<const double> theta) const {
    const double s = side();
    for (std::size_t j = 0; j < cell.size(); ++j) {
      const double lo = std::ldexp(static_cast<double>(cell[j]), -level);
      const double hi = lo + s;
      const bool closed = hi >= 1.0;
      if (theta[j] < lo || theta[j] > hi || (!closed && theta[j] == hi)) return false;
    }
    return true;
  }
};

/// Active clusters form an exact cover of [0,1]^W. Deactivated clusters stay
/// in the tree (with their counters) so locate can descend from the root.
class Partition {
 public:
  Partition(int dims, int arms) : dims_(dims), arms_(arms) {
    if (dims < 1 || dims > 16) throw Error(Errc::RangeError, "context dimension must be in [1, 16]");
    if (arms < 1) throw Error(Errc::RangeError, "bandit needs at least one arm");
    nodes_.push_back(make(0, std::vector<std::uint64_t>(static_cast<std::size_t>(dims), 0)));
  }

  int dims() const noexcept { return dims_; }
  int arms() const noexcept { return arms_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Cluster& cluster(std::size_t idx) const { return nodes_.at(idx); }
  Cluster& cluster(std::size_t idx) { return nodes_.at(idx); }

  std::vector<std::size_t> active() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].active) out.push_back(i);
    return out;
  }

  std::size_t locate(std::span<const double> theta) const {
    if (theta.size() != static_cast<std::size_t>(dims_))
      throw Error(Errc::ContextOutOfRange, "context has wrong dimension");
    for (double x : theta)
      if (!(x >= 0.0 && x <= 1.0)) throw Error(Errc::ContextOutOfRange, "context coordinate outside [0,1]");
    std::size_t idx = 0;
    while (!nodes_[idx].active) {
      const Cluster& c = nodes_[idx];
      const int child_level = c.level + 1;
      const auto cells = std::uint64_t{1} << child_level;
      std::size_t offset = 0;
      for (std::size_t j = 0; j < c.cell.size(); ++j) {
        auto k = static_cast<std::uint64_t>(std::ldexp(theta[j], child_level));
        k = std::min(k, cells - 1);
        offset |= static_cast<std::size_t>(k - 2 * c.cell[j]) << j;
      }
      idx = static_cast<std::size_t>(c.first_child) + offset;
    }
    return idx;
  }

  /// Replaces an active cluster by its 2^W children at the next level.
  void split(std::size_t idx, bool inherit_means = false) {
    if (!nodes_.at(idx).active) throw Error(Errc::RangeError, "only active clusters can be split");
    if (nodes_[idx].level >= 60) throw Error(Errc::RangeError, "partition depth limit reached");
    const std::size_t children = std::size_t{1} << dims_;
    const auto first = static_cast<std::int64_t>(nodes_.size());
    for (std::size_t off = 0; off < children; ++off) {
      std::vector<std::uint64_t> cell(nodes_[idx].cell);
      for (std::size_t j = 0; j < cell.size(); ++j) cell[j] = 2 * cell[j] + ((off >> j) & 1U);
      Cluster child = make(nodes_[idx].level + 1, std::move(cell));
      if (inherit_means) child.means = nodes_[idx].means;
      nodes_.push_back(std::move(child));
    }
    nodes_[idx].active = false;
    nodes_[idx].first_child = first;
  }

  /// Sum of counters over every cluster ever created.
  std::uint64_t total_events() const {
    std::uint64_t n = 0;
    for (const auto& c : nodes_) n += c.total;
    return n;
  }

  int max_level() const {
    int l = 0;
    for (const auto& c : nodes_)
      if (c.active) l = std::max(l, c.level);
    return l;
  }

 private:
  Cluster make(int level, std::vector<std::uint64_t> cell) const {
    Cluster c;
    c.level = level;
    c.cell = std::move(cell);
    c.counts.assign(static_cast<std::size_t>(arms_), 0);
    c.means.assign(static_cast<std::size_t>(arms_), 0.0);
    return c;
  }

  int dims_;
  int arms_;
  std::vector<Cluster> nodes_;
};

enum class Phase { Explore, Exploit };

constexpr std::string_view to_string(Phase p) noexcept { return p == Phase::Explore ? "explore" : "exploit"; }

struct Selection {
  int arm = 0;
  Phase phase = Phase::Explore;
};

/// Explores uniformly among arms with M(z) <= gamma(i, l); otherwise exploits
/// the highest sample mean (ties to the lowest arm id).
inline Selection select(const Cluster& c, std::uint64_t i, const BanditConfig& cfg, Rng& rng) {
  const double gamma = control_gamma(i, c.level, cfg.alpha);
  std::vector<int> under;
  for (std::size_t z = 0; z < c.counts.size(); ++z)
    if (static_cast<double>(c.counts[z]) <= gamma) under.push_back(static_cast<int>(z));
  if (!under.empty()) return {under[uniform_index(rng, under.size())], Phase::Explore};
  int best = 0;
  for (std::size_t z = 1; z < c.means.size(); ++z)
    if (c.means[z] > c.means[static_cast<std::size_t>(best)]) best = static_cast<int>(z);
  return {best, Phase::Exploit};
}

/// Folds one realized GPA into the cluster and splits it once its sample
/// count reaches zeta(l). Returns true on a split.
inline bool update(Partition& part, std::size_t idx, int arm, double gpa, const BanditConfig& cfg) {
  if (!(gpa >= kGpaMin && gpa <= kGpaMax)) throw Error(Errc::RangeError, "GPA outside [0,4]");
  if (arm < 0 || arm >= part.arms()) throw Error(Errc::RangeError, "arm id out of range");
  Cluster& c = part.cluster(idx);
  if (!c.active) throw Error(Errc::RangeError, "cluster is not active");
  const auto z = static_cast<std::size_t>(arm);
  ++c.counts[z];
  ++c.total;
  c.means[z] += (gpa - c.means[z]) / static_cast<double>(c.counts[z]);
  const bool may_split = cfg.max_level < 0 || c.level < cfg.max_level;
  if (may_split && static_cast<double>(c.total) >= control_zeta(c.level, cfg.A, cfg.p)) {
    part.split(idx, cfg.inherit_means);
    return true;
  }
  return false;
}

/// One-student-at-a-time learner: choose() for student i, then observe() the
/// GPA before the next student arrives.
class AdaptivePolicySelector {
 public:
  AdaptivePolicySelector(int dims, BanditConfig cfg, std::uint64_t seed)
      : part_(dims, cfg.arms), cfg_(cfg), rng_(seed) {
    validate(cfg_);
  }

  Selection choose(std::span<const double> theta) {
    if (pending_) throw Error(Errc::RangeError, "previous student's GPA not observed yet");
    const std::size_t idx = part_.locate(theta);
    ++students_;
    const Selection s = select(part_.cluster(idx), students_, cfg_, rng_);
    pending_ = std::pair(idx, s.arm);
    return s;
  }

  void observe(double gpa) {
    if (!pending_) throw Error(Errc::RangeError, "no pending selection");
    update(part_, pending_->first, pending_->second, gpa, cfg_);
    pending_.reset();
  }

  const Partition& partition() const noexcept { return part_; }
  const BanditConfig& config() const noexcept { return cfg_; }
  std::uint64_t students() const noexcept { return students_; }

 private:
  Partition part_;
  BanditConfig cfg_;
  Rng rng_;
  std::uint64_t students_ = 0;
  std::optional<std::pair<std::size_t, int>> pending_;
};

// ---------------------------------------------------------------------------
// Environments and runs

template <class E>
concept GpaEnvironment = requires(const E& env, Rng& rng, const Context& theta, int arm) {
  { env.arms() } -> std::convertible_to<int>;
  { env.dims() } -> std::convertible_to<int>;
  { env.sample_context(rng) } -> std::convertible_to<Context>;
  { env.sample_gpa(theta, arm, rng) } -> std::convertible_to<double>;
  { env.oracle(theta) } -> std::convertible_to<std::pair<int, double>>;
};

struct StudentRecord {
  std::uint64_t i = 0;
  Context theta;
  int arm = 0;
  Phase phase = Phase::Explore;
  double gpa = 0.0;
  double regret_increment = 0.0;  // best expected GPA minus realized GPA
};

struct History {
  int dims = 1;
  std::vector<StudentRecord> records;
};

enum class Scheme { Oracle, NoPersonalization, Random, Adaptive };

constexpr std::string_view to_string(Scheme s) noexcept {
  switch (s) {
    case Scheme::Oracle: return "oracle";
    case Scheme::NoPersonalization: return "no-personalization";
    case Scheme::Random: return "random";
    case Scheme::Adaptive: return "adaptive";
  }
  return "?";
}

inline Scheme scheme_from_string(std::string_view s) {
  for (Scheme x : {Scheme::Oracle, Scheme::NoPersonalization, Scheme::Random, Scheme::Adaptive})
    if (s == to_string(x)) return x;
  throw Error(Errc::ParseError, "unknown scheme '" + std::string(s) + "'");
}

namespace detail {

// Contexts and GPA noise come from streams that do not depend on the
// scheme, so all schemes see the same student sequence for a given seed.
template <GpaEnvironment Env, class Choose, class Observe>
History drive(const Env& env, std::uint64_t n, std::uint64_t seed, Choose&& choose, Observe&& observe) {
  Rng contexts = Rng::substream(seed, 1);
  Rng noise = Rng::substream(seed, 2);
  History h;
  h.dims = env.dims();
  h.records.reserve(static_cast<std::size_t>(n));
  for (std::uint64_t i = 1; i <= n; ++i) {
    Context theta = env.sample_context(contexts);
    const Selection s = choose(theta);
    const double r = env.sample_gpa(theta, s.arm, noise);
    observe(r);
    const double best = env.oracle(theta).second;
    h.records.push_back({i, std::move(theta), s.arm, s.phase, r, best - r});
  }
  return h;
}

}  // namespace detail

/// Runs the adaptive-clustering learner for n students.
template <GpaEnvironment Env>
History run(const Env& env, std::uint64_t n, BanditConfig cfg, std::uint64_t seed) {
  cfg.arms = env.arms();
  AdaptivePolicySelector learner(env.dims(), cfg, Rng::substream(seed, 3)());
  return detail::drive(
      env, n, seed, [&](const Context& theta) { return learner.choose(theta); },
      [&](double r) { learner.observe(r); });
}

struct RegretSeries {
  std::vector<double> cumulative;  // Reg(I), I = 1..n
  std::vector<double> average;     // Reg(I) / I
};

/// Reg(I) = sum_{i <= I} (best_mean(theta_i) - r_i).
inline RegretSeries regret(const History& h, std::span<const double> best_means) {
  if (best_means.size() != h.records.size())
    throw Error(Errc::LengthMismatch, "oracle means do not match history length");
  RegretSeries out;
  out.cumulative.reserve(h.records.size());
  out.average.reserve(h.records.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < h.records.size(); ++k) {
    acc += best_means[k] - h.records[k].gpa;
    out.cumulative.push_back(acc);
    out.average.push_back(acc / static_cast<double>(k + 1));
  }
  return out;
}

template <class Oracle>
  requires std::invocable<const Oracle&, const Context&>
RegretSeries regret(const History& h, const Oracle& best_mean) {
  std::vector<double> means;
  means.reserve(h.records.size());
  for (const auto& r : h.records) means.push_back(best_mean(r.theta));
  return regret(h, std::span<const double>(means));
}

/// Least-squares slope of ln Reg(I) against ln I on `points` log-spaced
/// indices in [lo, hi].
inline double loglog_slope(std::span<const double> cumulative, std::uint64_t lo, std::uint64_t hi,
                           int points = 100) {
  if (lo < 1 || hi > cumulative.size() || lo >= hi) throw Error(Errc::RangeError, "bad slope window");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (int k = 0; k < points; ++k) {
    const double x = std::log(static_cast<double>(lo)) +
                     (std::log(static_cast<double>(hi)) - std::log(static_cast<double>(lo))) * k / (points - 1);
    const auto idx = std::clamp<std::uint64_t>(static_cast<std::uint64_t>(std::llround(std::exp(x))), lo, hi);
    const double y = cumulative[idx - 1];
    if (!(y > 0.0)) continue;
    const double lx = std::log(static_cast<double>(idx));
    const double ly = std::log(y);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly, ++m;
  }
  if (m < 2) return 0.0;
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

struct BenchmarkResult {
  Scheme scheme;
  History history;
  std::vector<double> avg_gpa;  // running average of realized GPA
};

template <GpaEnvironment Env>
BenchmarkResult benchmark(Scheme scheme, const Env& env, std::uint64_t n, std::uint64_t seed, BanditConfig cfg = {}) {
  cfg.arms = env.arms();
  BenchmarkResult out{scheme, {}, {}};
  switch (scheme) {
    case Scheme::Adaptive:
      out.history = run(env, n, cfg, seed);
      break;
    case Scheme::NoPersonalization:
      cfg.max_level = 0;
      out.history = run(env, n, cfg, seed);
      break;
    case Scheme::Oracle:
      out.history = detail::drive(
          env, n, seed, [&](const Context& theta) { return Selection{env.oracle(theta).first, Phase::Exploit}; },
          [](double) {});
      break;
    case Scheme::Random: {
      Rng pick = Rng::substream(seed, 3);
      out.history = detail::drive(
          env, n, seed,
          [&](const Context&) {
            return Selection{static_cast<int>(uniform_index(pick, static_cast<std::uint64_t>(env.arms()))),
                             Phase::Explore};
          },
          [](double) {});
      break;
    }
  }
  out.avg_gpa.reserve(out.history.records.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < out.history.records.size(); ++k) {
    sum += out.history.records[k].gpa;
    out.avg_gpa.push_back(sum / static_cast<double>(k + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::ParseError, "not a number: '" + s + "'");
  }
}

}  // namespace detail

/// i,theta_0..theta_{W-1},arm,phase,gpa,regret_increment
inline std::string history_csv(const History& h) {
  std::string out = "i";
  for (int j = 0; j < h.dims; ++j) out += ",theta_" + std::to_string(j);
  out += ",arm,phase,gpa,regret_increment\n";
  for (const auto& r : h.records) {
    out += std::to_string(r.i);
    for (double x : r.theta) out += "," + detail::fmt(x);
    out += "," + std::to_string(r.arm) + "," + std::string(to_string(r.phase)) + "," + detail::fmt(r.gpa) + "," +
           detail::fmt(r.regret_increment) + "\n";
  }
  return out;
}

inline History history_from_csv(std::istream& in) {
  History h;
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::ParseError, "empty history CSV");
  const auto header = detail::split_csv(line);
  if (header.size() < 6 || header.front() != "i") throw Error(Errc::ParseError, "bad history header");
  h.dims = static_cast<int>(header.size()) - 5;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != header.size()) throw Error(Errc::ParseError, "history row has wrong column count");
    StudentRecord r;
    r.i = static_cast<std::uint64_t>(detail::to_double(f[0]));
    for (int j = 0; j < h.dims; ++j) r.theta.push_back(detail::to_double(f[static_cast<std::size_t>(1 + j)]));
    const auto base = static_cast<std::size_t>(1 + h.dims);
    r.arm = static_cast<int>(detail::to_double(f[base]));
    r.phase = f[base + 1] == "explore" ? Phase::Explore : Phase::Exploit;
    r.gpa = detail::to_double(f[base + 2]);
    r.regret_increment = detail::to_double(f[base + 3]);
    h.records.push_back(std::move(r));
  }
  return h;
}

/// I,cumulative_regret,average_regret
inline std::string regret_csv(const RegretSeries& r) {
  std::string out = "I,cumulative_regret,average_regret\n";
  for (std::size_t k = 0; k < r.cumulative.size(); ++k)
    out += std::to_string(k + 1) + "," + detail::fmt(r.cumulative[k]) + "," + detail::fmt(r.average[k]) + "\n";
  return out;
}

/// i,scheme,avg_gpa for every `stride`-th student and the last one.
inline std::string curves_csv(std::span<const BenchmarkResult> results, std::uint64_t stride = 1) {
  std::string out = "i,scheme,avg_gpa\n";
  for (const auto& res : results) {
    const auto n = res.avg_gpa.size();
    for (std::size_t k = 0; k < n; ++k)
      if ((k + 1) % stride == 0 || k + 1 == n)
        out += std::to_string(k + 1) + "," + std::string(to_string(res.scheme)) + "," + detail::fmt(res.avg_gpa[k]) +
               "\n";
  }
  return out;
}

struct CurvePoint {
  std::uint64_t i;
  Scheme scheme;
  double avg_gpa;
};

inline std::vector<CurvePoint> curves_from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::split_csv(line) != std::vector<std::string>{"i", "scheme", "avg_gpa"})
    throw Error(Errc::ParseError, "bad curve header");
  std::vector<CurvePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 3) throw Error(Errc::ParseError, "curve row has wrong column count");
    out.push_back({static_cast<std::uint64_t>(detail::to_double(f[0])), scheme_from_string(f[1]), detail::to_double(f[2])});
  }
  return out;
}

}  // namespace coursedp
