#pragma once

// The jammer: spectrum sensing, jam-set selection under a budget, and NACK-based reward.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slicejam/error.hpp"
#include "slicejam/gnb_agent.hpp"
#include "slicejam/qlearn.hpp"
#include "slicejam/rng.hpp"
#include "slicejam/slicing.hpp"

namespace slicejam {

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

// The `rank`-th k-subset (lexicographic order of sorted position lists) of `items`.
inline RbMask unrank_combination(const std::vector<int>& items, int k, std::uint64_t rank) {
  const int n = static_cast<int>(items.size());
  if (k < 0 || k > n || rank >= binomial(n, k)) throw std::out_of_range("unrank_combination: rank out of range");
  RbMask out = 0;
  int next = 0;
  for (int slot = 0; slot < k; ++slot) {
    for (int i = next; i < n; ++i) {
      const std::uint64_t with_i = binomial(n - i - 1, k - slot - 1);
      if (rank < with_i) {
        out |= RbMask{1} << items[static_cast<std::size_t>(i)];
        next = i + 1;
        break;
      }
      rank -= with_i;
    }
  }
  return out;
}

struct AdvState {
  RbMask availability = 0;  // true = sensed idle
  bool operator==(const AdvState&) const = default;
};

// Passive, error-free sensing: idle RBs are the complement of the observed occupancy.
inline AdvState sense_spectrum(RbMask occupancy, int total_rbs) {
  return {~occupancy & full_mask(total_rbs)};
}

// Number of jam actions available when `free_rbs` RBs are sensed idle:
// C(F(t), B) + 1 if F(t) > B, else 2 (jam all idle RBs, or do nothing).
inline std::uint64_t jam_action_count(int free_rbs, int budget) {
  return binomial(free_rbs, std::min(budget, free_rbs)) + 1;
}

struct JamAction {
  ActionIndex index = 0;  // 0 is "no jamming"
  RbMask rb_set = 0;
};

// RBs jammed by action `a` in sensed state `state`.
inline RbMask jam_set_of(const AdvState& state, int budget, ActionIndex a) {
  if (a == 0) return 0;
  const auto idle = rb_indices(state.availability);
  const int k = std::min(budget, static_cast<int>(idle.size()));
  return unrank_combination(idle, k, static_cast<std::uint64_t>(a - 1));
}

enum class AttackKind { kNone, kRandom, kMyopic, kRlSurrogate };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kNone: return "none";
    case AttackKind::kRandom: return "random";
    case AttackKind::kMyopic: return "myopic";
    case AttackKind::kRlSurrogate: return "rl";
  }
  return "?";
}

inline std::optional<AttackKind> parse_attack_kind(const std::string& s) {
  if (s == "none") return AttackKind::kNone;
  if (s == "random") return AttackKind::kRandom;
  if (s == "myopic") return AttackKind::kMyopic;
  if (s == "rl" || s == "q-learning" || s == "rl-surrogate") return AttackKind::kRlSurrogate;
  return std::nullopt;
}

struct AttackStrategy {
  AttackKind kind = AttackKind::kNone;
  int budget = 0;
};

// A NACK transmission count observed on one RB.
struct NackEvent {
  int rb = 0;
  int count = 0;
  bool operator==(const NackEvent&) const = default;
};

// Reward counts only NACKs on RBs the jammer itself jammed; it listens nowhere else.
inline double observe_nacks(RbMask jam_set, const std::vector<NackEvent>& nacks) {
  int total = 0;
  for (const auto& e : nacks)
    if (contains(jam_set, e.rb)) total += e.count;
  return static_cast<double>(total);
}

class Adversary {
 public:
  Adversary(AttackStrategy strategy, int total_rbs, LearnParams learn)
      : strategy_(strategy), total_rbs_(total_rbs), learn_(learn) {
    if (strategy_.budget < 0) throw ConfigError("jamming budget must be >= 0");
    if (strategy_.kind != AttackKind::kNone && strategy_.budget > total_rbs_) {
      warning_ = "jamming budget " + std::to_string(strategy_.budget) + " exceeds " + std::to_string(total_rbs_) +
                 " RBs; clamped";
      strategy_.budget = total_rbs_;
    }
    if (strategy_.kind == AttackKind::kMyopic) {
      // Immediate-reward maximizer: no discounting, no exploration.
      learn_.gamma = 0.0;
      learn_.explore = Exploration::greedy();
    }
    learn_.validate();
    if (learns()) {
      if (total_rbs_ > kMaxTabularRbs)
        throw ConfigError("tabular jammer supports at most 16 RBs; larger pools need function approximation");
      const int budget = strategy_.budget;
      table_ = QTable(std::size_t{1} << total_rbs_, [budget](StateIndex s) {
        return static_cast<int>(jam_action_count(popcount(static_cast<RbMask>(s)), budget));
      });
      Rng unused(0);
      init_table(table_,
                 JamPriorInit{[budget](StateIndex s, ActionIndex a) {
                   return a == 0 ? 0 : std::min(budget, popcount(static_cast<RbMask>(s)));
                 }},
                 unused);
    }
  }

  const AttackStrategy& strategy() const { return strategy_; }
  const std::string& warning() const { return warning_; }
  bool learns() const {
    return strategy_.kind == AttackKind::kMyopic || strategy_.kind == AttackKind::kRlSurrogate;
  }
  const QTable& table() const { return table_; }
  const LearnParams& params() const { return learn_; }
  int legal_action_count(const AdvState& s) const {
    return static_cast<int>(jam_action_count(popcount(s.availability), strategy_.budget));
  }

  // Receives the sensed state at the start of a slot. Completes the pending
  // learning step of the previous jam decision, which needed this state.
  void sense(const AdvState& state) {
    if (pending_ && learns())
      q_update(table_, pending_->state, pending_->action, pending_->reward, state.availability, learn_);
    pending_.reset();
    state_ = state;
  }
  const AdvState& sensed() const { return state_; }

  JamAction choose_jam_set(Rng& rng) {
    JamAction act;
    switch (strategy_.kind) {
      case AttackKind::kNone:
        break;
      case AttackKind::kRandom: {
        std::vector<int> all(static_cast<std::size_t>(total_rbs_));
        std::iota(all.begin(), all.end(), 0);
        for (int i = 0; i < strategy_.budget; ++i) {
          const int j = uniform_int(rng, i, total_rbs_ - 1);
          std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
          act.rb_set |= RbMask{1} << all[static_cast<std::size_t>(i)];
        }
        act.index = act.rb_set == 0 ? 0 : 1;
        break;
      }
      case AttackKind::kMyopic:
      case AttackKind::kRlSurrogate: {
        act.index = select_action(table_, state_.availability, learn_.explore, epsilon(), rng);
        act.rb_set = jam_set_of(state_, strategy_.budget, act.index);
        break;
      }
    }
    last_ = act;
    return act;
  }

  // Books the NACK reward of the jam decision taken this slot.
  double observe(const std::vector<NackEvent>& nacks) {
    const double r = observe_nacks(last_.rb_set, nacks);
    if (learns()) pending_ = Pending{state_.availability, last_.index, r};
    return r;
  }

  double epsilon() const { return learn_.explore.epsilon_at(slots_attacking_); }
  void end_attack_slot() { ++slots_attacking_; }

 private:
  struct Pending {
    StateIndex state;
    ActionIndex action;
    double reward;
  };

  AttackStrategy strategy_;
  int total_rbs_;
  LearnParams learn_;
  QTable table_;
  AdvState state_{};
  JamAction last_{};
  std::optional<Pending> pending_;
  std::int64_t slots_attacking_ = 0;
  std::string warning_;
};

}  // namespace slicejam
