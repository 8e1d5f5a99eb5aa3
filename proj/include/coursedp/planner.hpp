#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "coursedp/curriculum.hpp"

namespace coursedp {

struct PlannerOptions {
  /// Upper bound on sum over t of |L(t)| + |H(t)|.
  std::size_t max_nodes = 50'000'000;
  /// Keep Q(s, t, A) for every AND node in the policy table.
  bool keep_action_values = true;
};

// ---------------------------------------------------------------------------
// Transitions

/// Outcome distribution of taking `action` from `s`. Each course n in the
/// action fails independently with probability eps(n, |action|). Successors
/// are sorted by state key; zero-probability outcomes are dropped.
template <class Prob, class Eps>
std::vector<std::pair<CourseState, Prob>> transition_distribution(const CourseState& s, CourseSet action,
                                                                  Eps&& eps) {
  if (!action.disjoint(s.passed()))
    throw Error(Errc::ActionOverlapsState, "action contains an already passed course");
  const int k = action.size();
  const auto ids = action.ids();
  std::vector<Prob> fail;
  fail.reserve(ids.size());
  for (CourseId n : ids) fail.push_back(static_cast<Prob>(eps(n, k)));

  std::vector<std::pair<CourseState, Prob>> out;
  const std::uint64_t a = action.bits();
  std::uint64_t sub = 0;
  do {
    Prob p(1);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const bool passed = (sub >> ids[j]) & 1U;
      p = p * (passed ? Prob(1) - fail[j] : fail[j]);
    }
    if (p != Prob(0)) out.emplace_back(s.with_passed(CourseSet(sub)), p);
    sub = (sub - a) & a;  // next subset in increasing order
  } while (sub != 0);
  return out;
}

inline std::vector<std::pair<CourseState, double>> transition_distribution(const CourseState& s, CourseSet action,
                                                                           const FailureModel& failure) {
  return transition_distribution<double>(s, action, [&](CourseId n, int k) { return failure.epsilon(n, k); });
}

// ---------------------------------------------------------------------------
// Layered AND/OR graph

template <class Prob>
struct Successor {
  std::uint32_t state;  // index into basic_layered_graph::states
  Prob probability;
};

/// (state, action) pair with its outcome distribution.
template <class Prob>
struct AndNode {
  std::uint32_t state;
  CourseSet action;
  std::vector<Successor<Prob>> successors;
};

/// States are numbered in order of first appearance. Because L(t-1) ⊆ L(t),
/// the layer L(t) is exactly the prefix states[0 .. layer_size[t]).
template <class Prob = double>
struct basic_layered_graph {
  int width = 0;
  int horizon = 0;
  std::vector<CourseState> states;
  std::vector<std::uint8_t> terminal;
  std::vector<int> first_layer;
  std::vector<std::size_t> layer_size;                // t = 0..T
  std::vector<std::vector<AndNode<Prob>>> and_nodes;  // H(t) at [t]; [0] is empty
  /// and_begin[t][i] .. and_begin[t][i+1] are the AND nodes of state i in H(t).
  std::vector<std::vector<std::size_t>> and_begin;
  std::unordered_map<std::uint64_t, std::uint32_t> index;

  std::span<const CourseState> layer(int t) const {
    return {states.data(), layer_size.at(static_cast<std::size_t>(t))};
  }

  std::optional<std::uint32_t> find(const CourseState& s) const {
    auto it = index.find(s.key());
    if (it == index.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const CourseState& s, int t) const {
    auto i = find(s);
    return i && first_layer[*i] <= t;
  }

  std::span<const AndNode<Prob>> and_nodes_of(int t, std::uint32_t i) const {
    const auto& h = and_nodes[static_cast<std::size_t>(t)];
    const auto& b = and_begin[static_cast<std::size_t>(t)];
    return {h.data() + b[i], b[i + 1] - b[i]};
  }

  std::size_t node_entries() const {
    std::size_t total = 0;
    for (std::size_t t = 0; t < layer_size.size(); ++t) total += layer_size[t] + and_nodes[t].size();
    return total;
  }
};

using LayeredGraph = basic_layered_graph<double>;

/// Builds L(0..T) and H(1..T). Terminal states are carried into later layers
/// but never expanded. `eps(n, k)` supplies failure probabilities as Prob.
template <class Prob, class Eps>
basic_layered_graph<Prob> forward_search(const Curriculum& cur, Eps&& eps, const PlannerOptions& opt = {}) {
  if (auto issues = validation_issues(cur); !issues.empty()) validate(cur);

  basic_layered_graph<Prob> g;
  g.width = cur.size();
  g.horizon = cur.horizon;
  const std::size_t T = static_cast<std::size_t>(cur.horizon);
  g.layer_size.assign(T + 1, 0);
  g.and_nodes.resize(T + 1);
  g.and_begin.resize(T + 1);

  auto intern = [&](const CourseState& s, int t) -> std::uint32_t {
    auto [it, inserted] = g.index.try_emplace(s.key(), static_cast<std::uint32_t>(g.states.size()));
    if (inserted) {
      g.states.push_back(s);
      g.terminal.push_back(is_terminal(cur, s) ? 1 : 0);
      g.first_layer.push_back(t);
    }
    return it->second;
  };

  intern(cur.initial_state(), 0);
  g.layer_size[0] = 1;
  std::size_t entries = 1;

  for (int t = 1; t <= cur.horizon; ++t) {
    const std::size_t prev = g.layer_size[static_cast<std::size_t>(t - 1)];
    auto& h = g.and_nodes[static_cast<std::size_t>(t)];
    auto& begin = g.and_begin[static_cast<std::size_t>(t)];
    begin.resize(prev + 1);
    for (std::size_t i = 0; i < prev; ++i) {
      begin[i] = h.size();
      if (g.terminal[i]) continue;
      const CourseState s = g.states[i];
      for (CourseSet a : action_sets(cur, t, s)) {
        AndNode<Prob> node{static_cast<std::uint32_t>(i), a, {}};
        for (auto& [next, p] : transition_distribution<Prob>(s, a, eps))
          node.successors.push_back({intern(next, t), std::move(p)});
        h.push_back(std::move(node));
        if (entries + g.states.size() + h.size() > opt.max_nodes)
          throw Error(Errc::SizeLimit, "node budget of " + std::to_string(opt.max_nodes) +
                                           " exceeded while expanding quarter " + std::to_string(t));
      }
    }
    begin[prev] = h.size();
    g.layer_size[static_cast<std::size_t>(t)] = g.states.size();
    entries += g.states.size() + h.size();
  }
  return g;
}

inline LayeredGraph forward_search(const Curriculum& cur, const PlannerOptions& opt = {}) {
  return forward_search<double>(cur, [&](CourseId n, int k) { return cur.failure.epsilon(n, k); }, opt);
}

/// |L(t)| for t = 0..T.
template <class Prob>
std::vector<std::size_t> state_counts(const basic_layered_graph<Prob>& g) {
  return g.layer_size;
}

/// First quarter t with |L(t)| = |L(T)|.
inline int saturation_quarter(std::span<const std::size_t> counts) {
  for (std::size_t t = 0; t < counts.size(); ++t)
    if (counts[t] == counts.back()) return static_cast<int>(t);
  return static_cast<int>(counts.size()) - 1;
}

// ---------------------------------------------------------------------------
// Policy table

template <class Prob>
struct PolicyEntry {
  CourseSet action;  // courses to take in the next quarter
  Prob value{};      // V(s, t)
  bool terminal = false;
  std::vector<std::pair<CourseSet, Prob>> action_values;  // Q(s, t+1, A), canonical order
};

/// Entries are keyed by (state, t) where t = 0..T is the number of elapsed
/// quarters. The entry at layer t carries V(s, t) and the action for quarter
/// t + 1; layer T carries values only.
template <class Prob = double>
class basic_policy_table {
 public:
  using Entry = PolicyEntry<Prob>;

  basic_policy_table() = default;
  basic_policy_table(int width, int horizon, RewardKind kind)
      : width_(width), horizon_(horizon), kind_(kind), layers_(static_cast<std::size_t>(horizon) + 1) {}

  int width() const noexcept { return width_; }
  int horizon() const noexcept { return horizon_; }
  RewardKind kind() const noexcept { return kind_; }

  void set(int t, const CourseState& s, Entry e) { layers_.at(static_cast<std::size_t>(t))[s.key()] = std::move(e); }

  void set_action(int t, const CourseState& s, CourseSet a) {
    auto& layer = layers_.at(static_cast<std::size_t>(t));
    auto it = layer.find(s.key());
    if (it == layer.end()) throw Error(Errc::UnknownState, "state " + s.to_hex() + " not in layer " + std::to_string(t));
    it->second.action = a;
  }

  const Entry* find(int t, const CourseState& s) const {
    if (t < 0 || t > horizon_) return nullptr;
    const auto& layer = layers_[static_cast<std::size_t>(t)];
    auto it = layer.find(s.key());
    return it == layer.end() ? nullptr : &it->second;
  }

  const std::unordered_map<std::uint64_t, Entry>& layer(int t) const { return layers_.at(static_cast<std::size_t>(t)); }

  Prob value(const CourseState& s, int t) const {
    if (const Entry* e = find(t, s)) return e->value;
    throw Error(Errc::UnknownState, "state " + s.to_hex() + " not reachable by quarter " + std::to_string(t));
  }

  Prob root_value() const { return value(CourseState(width_), 0); }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.size();
    return n;
  }

  /// Metadata carried into policy files.
  std::string curriculum_hash;
  std::vector<std::string> course_codes;

 private:
  int width_ = 0;
  int horizon_ = 0;
  RewardKind kind_ = RewardKind::OnTimeIndicator;
  std::vector<std::unordered_map<std::uint64_t, Entry>> layers_;
};

using PolicyTable = basic_policy_table<double>;

namespace detail {

template <class Prob>
bool strictly_better(const Prob& a, const Prob& best) {
  if constexpr (std::is_floating_point_v<Prob>) {
    return a > best + 1e-12 * std::max(Prob(1), best < 0 ? -best : best);
  } else {
    return a > best;
  }
}

template <class Prob>
bool ties(const Prob& a, const Prob& b) {
  return !strictly_better(a, b) && !strictly_better(b, a);
}

}  // namespace detail

/// Bottom-up sweep over the layered graph. Terminal nodes take U(s, t) at
/// the layer where they sit, non-terminal nodes at T are worth zero, and the
/// argmax breaks ties toward the smallest action set, then lexicographically.
template <class Prob>
basic_policy_table<Prob> backward_induction(const basic_layered_graph<Prob>& g, RewardKind kind,
                                            const PlannerOptions& opt = {}) {
  const std::size_t T = static_cast<std::size_t>(g.horizon);
  if (g.layer_size.size() != T + 1 || g.and_nodes.size() != T + 1 || g.and_begin.size() != T + 1 ||
      g.states.empty() || g.layer_size[0] != 1)
    throw Error(Errc::GraphMismatch, "graph layers are inconsistent with its horizon");
  for (std::size_t t = 1; t <= T; ++t)
    if (g.and_begin[t].size() != g.layer_size[t - 1] + 1 || g.layer_size[t] < g.layer_size[t - 1])
      throw Error(Errc::GraphMismatch, "AND-node index of quarter " + std::to_string(t) + " is inconsistent");

  basic_policy_table<Prob> table(g.width, g.horizon, kind);
  std::vector<Prob> next(g.layer_size[T]);
  for (std::size_t i = 0; i < g.layer_size[T]; ++i) {
    next[i] = g.terminal[i] ? Prob(terminal_reward(kind, g.horizon, g.horizon)) : Prob(0);
    table.set(g.horizon, g.states[i], {CourseSet{}, next[i], g.terminal[i] != 0, {}});
  }

  for (std::size_t t = T; t >= 1; --t) {
    const auto& h = g.and_nodes[t];
    std::vector<Prob> q(h.size());
    for (std::size_t j = 0; j < h.size(); ++j) {
      Prob acc(0);
      for (const auto& succ : h[j].successors) {
        if (succ.state >= next.size()) throw Error(Errc::GraphMismatch, "successor outside its layer");
        acc = acc + succ.probability * next[succ.state];
      }
      q[j] = acc;
    }

    const std::size_t prev = g.layer_size[t - 1];
    std::vector<Prob> cur(prev);
    const int layer = static_cast<int>(t) - 1;
    for (std::size_t i = 0; i < prev; ++i) {
      PolicyEntry<Prob> e;
      if (g.terminal[i]) {
        e.terminal = true;
        e.value = Prob(terminal_reward(kind, layer, g.horizon));
      } else {
        const std::size_t lo = g.and_begin[t][i];
        const std::size_t hi = g.and_begin[t][i + 1];
        if (lo == hi) throw Error(Errc::GraphMismatch, "non-terminal state without AND nodes");
        std::size_t best = lo;
        for (std::size_t j = lo + 1; j < hi; ++j)
          if (detail::strictly_better(q[j], q[best])) best = j;
        e.action = h[best].action;
        e.value = q[best];
        if (opt.keep_action_values)
          for (std::size_t j = lo; j < hi; ++j) e.action_values.emplace_back(h[j].action, q[j]);
      }
      cur[i] = e.value;
      table.set(layer, g.states[i], std::move(e));
    }
    next = std::move(cur);
  }
  return table;
}

/// Action recommended for `quarter` (1..T) given the state at its start.
template <class Prob>
CourseSet recommend(const basic_policy_table<Prob>& policy, const CourseState& s, int quarter) {
  if (quarter < 1 || quarter > policy.horizon())
    throw Error(Errc::QuarterOutOfRange, "quarter " + std::to_string(quarter) + " outside 1.." +
                                             std::to_string(policy.horizon()));
  const auto* e = policy.find(quarter - 1, s);
  if (!e) throw Error(Errc::UnknownState, "state " + s.to_hex() + " is not reachable at the start of quarter " +
                                              std::to_string(quarter));
  return e->terminal ? CourseSet{} : e->action;
}

// ---------------------------------------------------------------------------
// Sequences and candidate policies

struct SequenceStep {
  int quarter;
  CourseSet action;
};

/// Follows the policy from the empty state assuming every course is passed.
/// Stops at the first terminal state; `graduated` is false if none is reached
/// within the horizon.
struct PlannedSequence {
  std::vector<SequenceStep> steps;
  bool graduated = false;
  int length() const noexcept { return static_cast<int>(steps.size()); }
};

template <class Prob>
PlannedSequence on_path_sequence(const basic_policy_table<Prob>& policy, const Curriculum& cur) {
  PlannedSequence seq;
  CourseState s = cur.initial_state();
  for (int q = 1; q <= cur.horizon && !is_terminal(cur, s); ++q) {
    const CourseSet a = recommend(policy, s, q);
    seq.steps.push_back({q, a});
    s = s.with_passed(a);
  }
  seq.graduated = is_terminal(cur, s);
  return seq;
}

namespace detail {

template <class Prob>
bool any_terminal_reachable(const basic_layered_graph<Prob>& g) {
  for (std::size_t i = 0; i < g.layer_size.back(); ++i)
    if (g.terminal[i]) return true;
  return false;
}

// Names the course most likely responsible for an unreachable graduation:
// the first missing mandatory course of the most complete reachable state.
template <class Prob>
std::string blocking_diagnostic(const basic_layered_graph<Prob>& g, const Curriculum& cur) {
  const CourseSet mandatory = cur.mandatory_set();
  const CourseState* best = nullptr;
  auto score = [&](const CourseState& s) {
    return std::pair((s.passed() & mandatory).size(), (s.passed() & cur.elective_set()).size());
  };
  for (const auto& s : g.layer(g.horizon))
    if (!best || score(s) > score(*best)) best = &s;
  std::string msg = "no terminal state reachable within " + std::to_string(cur.horizon) + " quarters";
  const CourseSet missing = mandatory - best->passed();
  if (!missing.empty())
    msg += "; blocking course: " + cur.courses[static_cast<std::size_t>(missing.ids().front())].code;
  else
    msg += "; elective quota of " + std::to_string(cur.elective_quota) + " cannot be met";
  return msg;
}

}  // namespace detail

/// Shortest completion plan when no course is ever failed.
inline PlannedSequence best_failfree_sequence(const Curriculum& cur, const PlannerOptions& opt = {}) {
  Curriculum sure = cur;
  std::fill(sure.failure.base.begin(), sure.failure.base.end(), 0.0);
  PlannerOptions o = opt;
  o.keep_action_values = false;
  const auto g = forward_search(sure, o);
  if (!detail::any_terminal_reachable(g)) throw Error(Errc::Infeasible, detail::blocking_diagnostic(g, cur));
  const auto policy = backward_induction(g, RewardKind::TimeToGraduation, o);
  return on_path_sequence(policy, sure);
}

/// Up to k distinct optimal policies. The first is the default tie-break
/// policy; the rest choose other value-tied actions along the all-pass path.
inline std::vector<PolicyTable> enumerate_candidate_policies(const Curriculum& cur, RewardKind kind, int k,
                                                             const PlannerOptions& opt = {}) {
  if (k < 1) throw Error(Errc::RangeError, "candidate count must be >= 1");
  PlannerOptions o = opt;
  o.keep_action_values = true;
  const auto g = forward_search(cur, o);
  if (!detail::any_terminal_reachable(g)) throw Error(Errc::Infeasible, detail::blocking_diagnostic(g, cur));
  const PolicyTable base = backward_induction(g, kind, o);

  std::vector<PolicyTable> out;
  std::vector<std::tuple<int, CourseState, CourseSet>> path;
  auto dfs = [&](auto&& self, const CourseState& s, int t) -> void {
    if (static_cast<int>(out.size()) >= k) return;
    const auto* e = base.find(t, s);
    if (t >= cur.horizon || e == nullptr || e->terminal) {
      PolicyTable p = base;
      for (const auto& [pt, ps, pa] : path) p.set_action(pt, ps, pa);
      out.push_back(std::move(p));
      return;
    }
    for (const auto& [a, q] : e->action_values) {
      if (!detail::ties(q, e->value)) continue;
      path.emplace_back(t, s, a);
      self(self, s.with_passed(a), t + 1);
      path.pop_back();
      if (static_cast<int>(out.size()) >= k) return;
    }
  };
  dfs(dfs, cur.initial_state(), 0);
  return out;
}

}  // namespace coursedp
