#pragma once

// The gNodeB allocator: a Q-learning agent that places one request at a time.

#include <cstdint>
#include <optional>
#include <vector>

#include "slicejam/error.hpp"
#include "slicejam/qlearn.hpp"
#include "slicejam/rng.hpp"
#include "slicejam/slicing.hpp"

namespace slicejam {

inline constexpr int kMaxWeight = 5;
inline constexpr int kMaxTabularRbs = 16;

// RB availability plus the demand of the request under consideration.
// req_rbs == 0 marks the "no request" state that closes a slot.
struct GnbState {
  RbMask availability = 0;
  int req_rbs = 0;
  int req_weight = 0;

  bool operator==(const GnbState&) const = default;
};

class GnbStateCodec {
 public:
  GnbStateCodec(int total_rbs, int max_rbs) : total_rbs_(total_rbs), max_rbs_(max_rbs) {
    if (total_rbs < 1 || total_rbs > kMaxTabularRbs)
      throw ConfigError("tabular gNodeB agent supports 1..16 RBs");
    if (max_rbs < 1 || max_rbs > total_rbs) throw ConfigError("request size must be in [1, rbs]");
  }

  int total_rbs() const { return total_rbs_; }
  int max_rbs() const { return max_rbs_; }
  std::size_t demand_levels() const { return static_cast<std::size_t>(max_rbs_) * kMaxWeight + 1; }
  std::size_t n_states() const { return (std::size_t{1} << total_rbs_) * demand_levels(); }

  StateIndex encode(const GnbState& s) const {
    std::size_t demand = 0;
    if (s.req_rbs != 0) {
      if (s.req_rbs < 1 || s.req_rbs > max_rbs_ || s.req_weight < 1 || s.req_weight > kMaxWeight)
        throw ConfigError("GnbStateCodec: demand out of range");
      demand = 1 + static_cast<std::size_t>(s.req_rbs - 1) * kMaxWeight + static_cast<std::size_t>(s.req_weight - 1);
    }
    if ((s.availability & ~full_mask(total_rbs_)) != 0) throw ConfigError("GnbStateCodec: availability out of range");
    return static_cast<std::size_t>(s.availability) * demand_levels() + demand;
  }

  GnbState decode(StateIndex index) const {
    if (index >= n_states()) throw std::out_of_range("GnbStateCodec: index out of range");
    GnbState s;
    s.availability = static_cast<RbMask>(index / demand_levels());
    const std::size_t demand = index % demand_levels();
    if (demand != 0) {
      s.req_rbs = static_cast<int>((demand - 1) / kMaxWeight) + 1;
      s.req_weight = static_cast<int>((demand - 1) % kMaxWeight) + 1;
    }
    return s;
  }

 private:
  int total_rbs_;
  int max_rbs_;
};

inline GnbState encode_state(const RbPool& pool, const Request& request) {
  return {pool.available(), request.rbs, request.weight};
}

// Action 0 defers the request. Action k >= 1 places it on `rbs` RBs with
// consecutive indices that begin at the (k-1)-th lowest free RB.
struct GnbAction {
  enum class Kind { kDefer, kAllocate };
  Kind kind = Kind::kDefer;
  int start_rank = 0;

  static GnbAction from_index(ActionIndex a) {
    return a == 0 ? GnbAction{} : GnbAction{Kind::kAllocate, a - 1};
  }
  ActionIndex index() const { return kind == Kind::kDefer ? 0 : start_rank + 1; }
};

// RB set taken by placing `rbs` blocks at free-rank `rank`; nullopt if illegal.
inline std::optional<RbMask> placement(RbMask available, int total_rbs, int rbs, int rank) {
  if (rbs < 1) return std::nullopt;
  RbMask rest = available;
  for (int i = 0; i < rank && rest != 0; ++i) rest &= rest - 1;
  if (rest == 0) return std::nullopt;
  const int start = lowest_rb(rest);
  if (start + rbs > total_rbs) return std::nullopt;
  const RbMask block = full_mask(rbs) << start;
  if ((block & available) != block) return std::nullopt;
  return block;
}

inline std::vector<std::uint8_t> legal_actions(const GnbState& s, int total_rbs) {
  std::vector<std::uint8_t> legal(static_cast<std::size_t>(total_rbs) + 1, 0);
  legal[0] = 1;
  if (s.req_rbs == 0) return legal;
  for (int rank = 0; rank < total_rbs; ++rank)
    legal[static_cast<std::size_t>(rank) + 1] = placement(s.availability, total_rbs, s.req_rbs, rank).has_value();
  return legal;
}

// Reward booked for a grant: its weight, or nothing if any of its RBs was jammed.
inline double book_outcome(const ActiveService& grant, RbMask jammed) {
  return (grant.rb_set & jammed) != 0 ? 0.0 : static_cast<double>(grant.request.weight);
}

struct GrantOutcome {
  int weight = 0;
  bool jammed = false;
};

inline double slot_reward(const std::vector<GrantOutcome>& outcomes) {
  double total = 0.0;
  for (const auto& o : outcomes)
    if (!o.jammed) total += o.weight;
  return total;
}

// One processed request within a slot.
struct GnbDecision {
  StateIndex state = 0;
  ActionIndex action = 0;
  RbMask rb_set = 0;  // zero when deferred
};

struct GnbTransition {
  StateIndex state = 0;
  ActionIndex action = 0;
  double reward = 0.0;
  StateIndex next_state = 0;
};

struct GnbAgentConfig {
  LearnParams learn{};
  RandomInit init{0.0, 1.0};
};

class GnbAgent {
 public:
  GnbAgent(int total_rbs, int max_rbs, GnbAgentConfig config, Rng& init_rng)
      : codec_(total_rbs, max_rbs), config_(config) {
    config_.learn.validate();
    table_ = init_table(codec_.n_states(), total_rbs + 1, config_.init, init_rng);
  }

  const GnbStateCodec& codec() const { return codec_; }
  const QTable& table() const { return table_; }
  QTable& table() { return table_; }
  const LearnParams& params() const { return config_.learn; }

  void set_override(GreedyOverride fn) { override_ = std::move(fn); }
  bool has_override() const { return static_cast<bool>(override_); }

  // Exploration rate for the current slot.
  double epsilon() const { return config_.learn.explore.epsilon_at(slots_elapsed_); }
  void end_slot() { ++slots_elapsed_; }

  GnbDecision decide(RbMask available, const Request& request, Rng& rng) const {
    const GnbState s{available, request.rbs, request.weight};
    GnbDecision d;
    d.state = codec_.encode(s);
    const auto legal = legal_actions(s, codec_.total_rbs());
    d.action = select_action(table_, d.state, config_.learn.explore, epsilon(), rng, legal, override_);
    const auto act = GnbAction::from_index(d.action);
    if (act.kind == GnbAction::Kind::kAllocate)
      d.rb_set = *placement(available, codec_.total_rbs(), request.rbs, act.start_rank);
    return d;
  }

  void learn(const GnbTransition& tr) {
    const auto next_legal = legal_actions(codec_.decode(tr.next_state), codec_.total_rbs());
    q_update(table_, tr.state, tr.action, tr.reward, tr.next_state, config_.learn, next_legal);
  }

 private:
  GnbStateCodec codec_;
  GnbAgentConfig config_;
  QTable table_;
  GreedyOverride override_;
  std::int64_t slots_elapsed_ = 0;
};

}  // namespace slicejam
