#pragma once

// Tabular Q-learning shared by the gNodeB allocator and the jammer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "slicejam/error.hpp"
#include "slicejam/rng.hpp"

namespace slicejam {

using StateIndex = std::size_t;
using ActionIndex = int;

// Per-state legality flags; an empty span means every action of the row is legal.
using ActionMask = std::span<const std::uint8_t>;

// Dense action-value table. The number of actions may differ between states, so
// rows are stored back to back with an offset index.
class QTable {
 public:
  QTable() = default;

  QTable(std::size_t n_states, int n_actions) : offsets_(n_states + 1) {
    if (n_states == 0 || n_actions <= 0) throw ConfigError("QTable: dimensions must be positive");
    for (std::size_t s = 0; s <= n_states; ++s) offsets_[s] = s * static_cast<std::size_t>(n_actions);
    values_.assign(offsets_.back(), 0.0);
  }

  QTable(std::size_t n_states, const std::function<int(StateIndex)>& n_actions) : offsets_(n_states + 1) {
    if (n_states == 0) throw ConfigError("QTable: dimensions must be positive");
    offsets_[0] = 0;
    for (std::size_t s = 0; s < n_states; ++s) {
      const int n = n_actions(s);
      if (n <= 0) throw ConfigError("QTable: every state needs at least one action");
      offsets_[s + 1] = offsets_[s] + static_cast<std::size_t>(n);
    }
    values_.assign(offsets_.back(), 0.0);
  }

  std::size_t n_states() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  int n_actions(StateIndex s) const {
    check_state(s);
    return static_cast<int>(offsets_[s + 1] - offsets_[s]);
  }
  std::size_t size() const { return values_.size(); }

  std::span<const double> row(StateIndex s) const {
    check_state(s);
    return {values_.data() + offsets_[s], offsets_[s + 1] - offsets_[s]};
  }
  std::span<double> row(StateIndex s) {
    check_state(s);
    return {values_.data() + offsets_[s], offsets_[s + 1] - offsets_[s]};
  }

  double at(StateIndex s, ActionIndex a) const {
    check_action(s, a);
    return values_[offsets_[s] + static_cast<std::size_t>(a)];
  }
  double& at(StateIndex s, ActionIndex a) {
    check_action(s, a);
    return values_[offsets_[s] + static_cast<std::size_t>(a)];
  }

  // Largest value in row s among legal actions.
  double max_value(StateIndex s, ActionMask legal = {}) const {
    const auto r = row(s);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < r.size(); ++a)
      if (legal.empty() || legal[a]) best = std::max(best, r[a]);
    if (best == -std::numeric_limits<double>::infinity())
      throw ConfigError("QTable::max_value: no legal action");
    return best;
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  const std::vector<double>& raw() const { return values_; }
  bool operator==(const QTable&) const = default;

 private:
  void check_state(StateIndex s) const {
    if (s >= n_states()) {
      std::ostringstream os;
      os << "QTable: state " << s << " out of range (" << n_states() << ")";
      throw std::out_of_range(os.str());
    }
  }
  void check_action(StateIndex s, ActionIndex a) const {
    check_state(s);
    if (a < 0 || static_cast<std::size_t>(a) >= offsets_[s + 1] - offsets_[s]) {
      std::ostringstream os;
      os << "QTable: action " << a << " out of range in state " << s;
      throw std::out_of_range(os.str());
    }
  }

  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

struct Exploration {
  enum class Kind { kGreedy, kEpsilonGreedy };
  Kind kind = Kind::kEpsilonGreedy;
  double epsilon = 0.1;
  double decay = 0.999;   // multiplicative, applied once per slot
  double floor = 0.01;

  static Exploration greedy() { return {Kind::kGreedy, 0.0, 1.0, 0.0}; }
  static Exploration epsilon_greedy(double eps, double decay = 1.0, double floor = 0.0) {
    return {Kind::kEpsilonGreedy, eps, decay, floor};
  }

  // Exploration rate after `slots` decay steps.
  double epsilon_at(std::int64_t slots) const {
    if (kind == Kind::kGreedy) return 0.0;
    return std::max(floor, epsilon * std::pow(decay, static_cast<double>(slots)));
  }
};

struct LearnParams {
  double alpha = 0.1;
  double gamma = 0.95;
  Exploration explore{};

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in (0,1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0,1]");
    if (explore.kind == Exploration::Kind::kEpsilonGreedy) {
      if (!(explore.epsilon >= 0.0 && explore.epsilon <= 1.0)) throw ConfigError("epsilon must be in [0,1]");
      if (!(explore.floor >= 0.0 && explore.floor <= 1.0)) throw ConfigError("epsilon floor must be in [0,1]");
      if (!(explore.decay > 0.0 && explore.decay <= 1.0)) throw ConfigError("epsilon decay must be in (0,1]");
    }
  }
};

// Q(s,a) <- Q(s,a) + alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)). Returns the new Q(s,a).
inline double q_update(QTable& table, StateIndex s, ActionIndex a, double reward, StateIndex s_next,
                       const LearnParams& params, ActionMask next_legal = {}) {
  if (!std::isfinite(reward)) throw DomainError("q_update: reward must be finite");
  const double future = params.gamma == 0.0 ? 0.0 : table.max_value(s_next, next_legal);
  double& q = table.at(s, a);
  q = (1.0 - params.alpha) * q + params.alpha * (reward + params.gamma * future);
  return q;
}

// Replaces the greedy choice; used by the randomized defenses.
using GreedyOverride = std::function<ActionIndex(std::span<const double>, ActionMask, Rng&)>;

// Lowest-index argmax over legal actions.
inline ActionIndex greedy_action(std::span<const double> row, ActionMask legal) {
  ActionIndex best = -1;
  for (std::size_t a = 0; a < row.size(); ++a) {
    if (!legal.empty() && !legal[a]) continue;
    if (best < 0 || row[a] > row[static_cast<std::size_t>(best)]) best = static_cast<ActionIndex>(a);
  }
  if (best < 0) throw ConfigError("select_action: no legal action");
  return best;
}

inline ActionIndex uniform_legal_action(std::size_t n, ActionMask legal, Rng& rng) {
  if (legal.empty()) {
    if (n == 0) throw ConfigError("select_action: no legal action");
    return uniform_int(rng, 0, static_cast<int>(n) - 1);
  }
  const auto count = std::count(legal.begin(), legal.end(), std::uint8_t{1});
  if (count == 0) throw ConfigError("select_action: no legal action");
  int pick = uniform_int(rng, 0, static_cast<int>(count) - 1);
  for (std::size_t a = 0; a < n; ++a)
    if (legal[a] && pick-- == 0) return static_cast<ActionIndex>(a);
  throw InternalError("uniform_legal_action: unreachable");
}

// epsilon is the current exploration rate (already decayed); ignored for greedy policies.
inline ActionIndex select_action(const QTable& table, StateIndex s, const Exploration& policy, double epsilon,
                                 Rng& rng, ActionMask legal = {}, const GreedyOverride& override = {}) {
  const auto row = table.row(s);
  if (!legal.empty() && legal.size() != row.size()) throw ConfigError("select_action: mask size mismatch");
  if (policy.kind == Exploration::Kind::kEpsilonGreedy && epsilon > 0.0 && uniform01(rng) < epsilon)
    return uniform_legal_action(row.size(), legal, rng);
  if (override) return override(row, legal, rng);
  return greedy_action(row, legal);
}

struct RandomInit {
  double lo = 0.0;
  double hi = 1.0;
};

// No-jam actions start at 0, every jamming action at the number of RBs it jams.
struct JamPriorInit {
  std::function<int(StateIndex, ActionIndex)> jammed_rbs;
};

using InitRule = std::variant<RandomInit, JamPriorInit>;

inline void init_table(QTable& table, const InitRule& rule, Rng& rng) {
  if (const auto* r = std::get_if<RandomInit>(&rule)) {
    if (r->lo > r->hi) throw ConfigError("init_table: lo > hi");
    std::uniform_real_distribution<double> dist(r->lo, r->hi);
    for (StateIndex s = 0; s < table.n_states(); ++s)
      for (double& v : table.row(s)) v = r->lo == r->hi ? r->lo : dist(rng);
    return;
  }
  const auto& prior = std::get<JamPriorInit>(rule);
  for (StateIndex s = 0; s < table.n_states(); ++s) {
    auto row = table.row(s);
    for (std::size_t a = 0; a < row.size(); ++a)
      row[a] = static_cast<double>(prior.jammed_rbs(s, static_cast<ActionIndex>(a)));
  }
}

inline QTable init_table(std::size_t n_states, int n_actions, const InitRule& rule, Rng& rng) {
  QTable t(n_states, n_actions);
  init_table(t, rule, rng);
  return t;
}

inline QTable init_table(std::size_t n_states, const std::function<int(StateIndex)>& n_actions,
                         const InitRule& rule, Rng& rng) {
  QTable t(n_states, n_actions);
  init_table(t, rule, rng);
  return t;
}

}  // namespace slicejam
