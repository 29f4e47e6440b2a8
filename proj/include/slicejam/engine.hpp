#pragma once

// Per-slot simulation loop and the recovery/reduction metrics.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slicejam/adversary.hpp"
#include "slicejam/defense.hpp"
#include "slicejam/error.hpp"
#include "slicejam/gnb_agent.hpp"
#include "slicejam/qlearn.hpp"
#include "slicejam/rng.hpp"
#include "slicejam/slicing.hpp"

namespace slicejam {

struct GrantRecord {
  int ue_id = 0;
  std::int64_t req_id = 0;
  RbMask rb_set = 0;
  int weight = 0;
  bool jammed = false;
};

struct SlotRecord {
  std::int64_t t = 0;
  int arrivals = 0;
  int decisions = 0;               // requests considered this slot
  RbMask released = 0;             // RBs freed by services that ended before t
  RbMask sensed_idle = 0;          // what the jammer observed before committing
  std::vector<GrantRecord> grants;
  RbMask jam_set = 0;
  std::vector<NackEvent> nacks;
  double gnb_reward = 0.0;
  double adv_reward = 0.0;
  std::uint32_t defense_flags = 0;
  bool qprotect_suspended = false;
  int free_after = 0;              // idle RBs at the end of the slot
  int waiting_after = 0;
};

// gnb_reward equals the weight sum of grants that avoided the jam set.
inline bool reward_consistent(const SlotRecord& rec) {
  double expected = 0.0;
  for (const auto& g : rec.grants) {
    if (g.jammed != ((g.rb_set & rec.jam_set) != 0)) return false;
    if (!g.jammed) expected += g.weight;
  }
  return expected == rec.gnb_reward;
}

struct EpisodeConfig {
  ScenarioParams scenario{};
  GnbAgentConfig gnb{};
  LearnParams adversary{};
  AttackStrategy attack{};
  DefenseConfig defense{};
  std::int64_t warmup = 1000;        // attack starts here
  std::int64_t attack_slots = 10000;
  std::int64_t horizon = 16000;
  int window = 1000;                 // running-average window

  std::int64_t attack_start() const { return warmup; }
  std::int64_t attack_stop() const { return warmup + attack_slots; }

  void validate() const {
    scenario.validate();
    gnb.learn.validate();
    adversary.validate();
    defense.validate();
    if (gnb.init.lo > gnb.init.hi) throw ConfigError("gnb init range: lo > hi");
    if (scenario.rbs > kMaxTabularRbs) throw ConfigError("tabular agents support at most 16 RBs");
    if (attack.budget < 0) throw ConfigError("budget must be >= 0");
    if (warmup < 0 || attack_slots < 0 || horizon < 1) throw ConfigError("slot counts must be non-negative");
    if (attack_stop() > horizon) throw ConfigError("warmup + attack_slots exceeds horizon");
    if (window < 1) throw ConfigError("window must be >= 1");
  }
};

// Mean of series[t-window+1 .. t], truncated at slot 0.
inline double running_average(std::span<const double> series, int window, std::int64_t t) {
  if (window < 1) throw ConfigError("running_average: window must be >= 1");
  if (t < 0 || static_cast<std::size_t>(t) >= series.size()) throw std::out_of_range("running_average: t");
  const std::int64_t lo = std::max<std::int64_t>(0, t - window + 1);
  double sum = 0.0;
  for (std::int64_t k = lo; k <= t; ++k) sum += series[static_cast<std::size_t>(k)];
  return sum / static_cast<double>(t - lo + 1);
}

// All running averages at once, via prefix sums.
inline std::vector<double> running_average_series(std::span<const double> series, int window) {
  if (window < 1) throw ConfigError("running_average: window must be >= 1");
  std::vector<double> out(series.size());
  std::vector<double> prefix(series.size() + 1, 0.0);
  for (std::size_t k = 0; k < series.size(); ++k) prefix[k + 1] = prefix[k] + series[k];
  for (std::size_t t = 0; t < series.size(); ++t) {
    const std::size_t lo = t + 1 >= static_cast<std::size_t>(window) ? t + 1 - static_cast<std::size_t>(window) : 0;
    out[t] = (prefix[t + 1] - prefix[lo]) / static_cast<double>(t + 1 - lo);
  }
  return out;
}

struct Recovery {
  std::int64_t slots = 0;
  bool censored = false;
};

// Smallest n with avg[attack_stop + n] >= benchmark. If the series ends first,
// the remaining length is returned and flagged as censored.
inline Recovery recovery_time(std::span<const double> running_avg, std::int64_t attack_stop, double benchmark) {
  const auto len = static_cast<std::int64_t>(running_avg.size());
  if (attack_stop < 0 || attack_stop > len) throw std::out_of_range("recovery_time: attack_stop outside series");
  for (std::int64_t n = 0; attack_stop + n < len; ++n)
    if (running_avg[static_cast<std::size_t>(attack_stop + n)] >= benchmark) return {n, false};
  return {len - attack_stop, true};
}

struct Reductions {
  double max_reduction = 0.0;
  double total_reduction = 0.0;
};

// Positive gaps below the benchmark over slots attack_stop .. attack_stop + recovery.
inline Reductions reward_reductions(std::span<const double> running_avg, std::int64_t attack_stop, double benchmark,
                                    std::int64_t recovery) {
  Reductions out;
  const auto end = std::min<std::int64_t>(attack_stop + recovery, static_cast<std::int64_t>(running_avg.size()) - 1);
  for (std::int64_t t = attack_stop; t <= end; ++t) {
    const double gap = std::max(0.0, benchmark - running_avg[static_cast<std::size_t>(t)]);
    out.max_reduction = std::max(out.max_reduction, gap);
    out.total_reduction += gap;
  }
  return out;
}

struct MetricsReport {
  double baseline_reward = 0.0;
  std::int64_t recovery_time = 0;
  bool censored = false;
  double max_reduction = 0.0;
  double total_reduction = 0.0;
  std::int64_t attack_start = 0;
  std::int64_t attack_stop = 0;
  std::vector<double> series;  // running average per slot
};

// The simulated world of one run.
class World {
 public:
  World(EpisodeConfig config, std::uint64_t seed)
      : config_((config.validate(), std::move(config))),
        arrivals_rng_(make_rng(seed, Stream::kArrivals)),
        gnb_rng_(make_rng(seed, Stream::kGnbExplore)),
        adv_rng_(make_rng(seed, Stream::kAdversary)),
        pool_(config_.scenario.rbs),
        gnb_([&] {
          Rng init = make_rng(seed, Stream::kInit);
          return GnbAgent(config_.scenario.rbs, config_.scenario.max_request_rbs(), config_.gnb, init);
        }()),
        adversary_(config_.attack, config_.scenario.rbs, config_.adversary),
        hooks_(combined_apply(config_.defense)),
        monitor_(hooks_.drop_threshold) {
    if (hooks_.selection) gnb_.set_override(hooks_.selection);
  }

  const EpisodeConfig& config() const { return config_; }
  const RbPool& pool() const { return pool_; }
  const GnbAgent& gnb() const { return gnb_; }
  const Adversary& adversary() const { return adversary_; }
  const std::vector<Request>& waiting() const { return waiting_; }
  const std::vector<double>& rewards() const { return rewards_; }
  const QProtectMonitor& monitor() const { return monitor_; }
  std::int64_t now() const { return next_slot_; }

  bool attack_active(std::int64_t t) const {
    return config_.attack.kind != AttackKind::kNone && t >= config_.attack_start() && t < config_.attack_stop();
  }

  SlotRecord run_slot() {
    const std::int64_t t = next_slot_;
    SlotRecord rec;
    rec.t = t;
    rec.defense_flags = hooks_.flags;

    // 1. services that ended in earlier slots give their RBs back
    rec.released = pool_.release_expired(t);

    // 2. arrivals join the waiting list, kept in (arrival slot, UE) order
    auto arrivals = generate_arrivals(arrivals_rng_, t, config_.scenario);
    rec.arrivals = static_cast<int>(arrivals.size());
    waiting_.insert(waiting_.end(), arrivals.begin(), arrivals.end());

    // 3. the jammer senses the idle RBs and commits before any grant is made
    const AdvState sensed = sense_spectrum(pool_.occupied(), pool_.total_rbs());
    rec.sensed_idle = sensed.availability;
    adversary_.sense(sensed);
    const bool attacking = attack_active(t);
    if (attacking) rec.jam_set = adversary_.choose_jam_set(adv_rng_).rb_set;

    // 4. requests are considered one at a time
    struct Step {
      GnbDecision decision;
      std::size_t waiting_index;
      double reward = 0.0;
    };
    std::vector<Step> steps;
    steps.reserve(waiting_.size());
    for (std::size_t i = 0; i < waiting_.size(); ++i) {
      const Request& req = waiting_[i];
      if (!req.grantable_at(t)) continue;
      Step st{gnb_.decide(pool_.available(), req, gnb_rng_), i};
      if (st.decision.rb_set != 0)
        pool_.grant({req, st.decision.rb_set, t, t + req.lifetime - 1});
      steps.push_back(st);
    }
    rec.decisions = static_cast<int>(steps.size());

    // 5. grant outcomes against the jam set
    std::vector<std::uint8_t> served(waiting_.size(), 0);
    std::vector<std::pair<std::int64_t, RbMask>> voided;
    for (auto& st : steps) {
      if (st.decision.rb_set == 0) continue;
      const Request& req = waiting_[st.waiting_index];
      const ActiveService grant{req, st.decision.rb_set, t, t + req.lifetime - 1};
      st.reward = book_outcome(grant, rec.jam_set);
      const bool jammed = st.reward == 0.0;
      rec.grants.push_back({req.ue_id, req.req_id, grant.rb_set, req.weight, jammed});
      if (jammed)
        voided.emplace_back(req.req_id, grant.rb_set);
      else
        served[st.waiting_index] = 1;
      rec.gnb_reward += st.reward;
    }

    // 6. every jammed transmission draws a NACK from its UE
    if (rec.jam_set != 0) {
      std::vector<int> per_rb(static_cast<std::size_t>(pool_.total_rbs()), 0);
      for (const auto& s : pool_.services()) {
        if ((s.rb_set & rec.jam_set) == 0) continue;
        for (const auto& e : misnack_route(s.rb_set, rec.jam_set, hooks_.mis_nack))
          per_rb[static_cast<std::size_t>(e.rb)] += e.count;
      }
      for (int rb = 0; rb < pool_.total_rbs(); ++rb)
        if (per_rb[static_cast<std::size_t>(rb)] > 0) rec.nacks.push_back({rb, per_rb[static_cast<std::size_t>(rb)]});
    }
    if (attacking) {
      rec.adv_reward = adversary_.observe(rec.nacks);
      adversary_.end_attack_slot();
    }

    // 7. learning, unless Q-Protect has flagged an attack
    rewards_.push_back(rec.gnb_reward);
    reward_sum_ += rec.gnb_reward;
    if (static_cast<std::int64_t>(rewards_.size()) > config_.window)
      reward_sum_ -= rewards_[rewards_.size() - 1 - static_cast<std::size_t>(config_.window)];
    const double avg = reward_sum_ / static_cast<double>(std::min<std::size_t>(rewards_.size(),
                                                                               static_cast<std::size_t>(config_.window)));
    if (hooks_.q_protect) {
      rec.qprotect_suspended = monitor_.update(avg);
      if (t + 1 == config_.attack_start()) monitor_.set_baseline(window_average(hooks_.window));
    }
    if (!rec.qprotect_suspended) {
      const StateIndex closing = gnb_.codec().encode({pool_.available(), 0, 0});
      for (std::size_t k = 0; k < steps.size(); ++k) {
        const StateIndex next = k + 1 < steps.size() ? steps[k + 1].decision.state : closing;
        gnb_.learn({steps[k].decision.state, steps[k].decision.action, steps[k].reward, next});
      }
    }

    // 8. jammed grants are voided and their requests wait again; stale requests leave
    for (const auto& [req_id, rbs] : voided) pool_.revoke(req_id, t);
    std::vector<Request> still_waiting;
    still_waiting.reserve(waiting_.size());
    for (std::size_t i = 0; i < waiting_.size(); ++i)
      if (!served[i] && waiting_[i].deadline_slot > t) still_waiting.push_back(waiting_[i]);
    waiting_ = std::move(still_waiting);

    pool_.check_invariants();
    gnb_.end_slot();
    rec.free_after = pool_.free_count();
    rec.waiting_after = static_cast<int>(waiting_.size());
    ++next_slot_;
    return rec;
  }

 private:
  double window_average(int window) const {
    const std::size_t n = std::min<std::size_t>(rewards_.size(), static_cast<std::size_t>(window));
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t k = rewards_.size() - n; k < rewards_.size(); ++k) s += rewards_[k];
    return s / static_cast<double>(n);
  }

  EpisodeConfig config_;
  Rng arrivals_rng_;
  Rng gnb_rng_;
  Rng adv_rng_;
  RbPool pool_;
  GnbAgent gnb_;
  Adversary adversary_;
  DefenseHooks hooks_;
  QProtectMonitor monitor_;
  std::vector<Request> waiting_;
  std::vector<double> rewards_;
  double reward_sum_ = 0.0;
  std::int64_t next_slot_ = 0;
};

struct EpisodeOptions {
  bool keep_records = true;
  bool keep_tables = false;
};

struct EpisodeResult {
  std::vector<SlotRecord> records;
  MetricsReport metrics;
  std::optional<QTable> gnb_table;
  std::optional<QTable> adversary_table;
};

// Mean reward over the first `window` slots of the same configuration without an attack.
inline double paired_benchmark(const EpisodeConfig& config, std::uint64_t seed) {
  EpisodeConfig quiet = config;
  quiet.attack = {AttackKind::kNone, 0};
  World world(quiet, seed);
  const std::int64_t slots = std::min<std::int64_t>(config.window, config.horizon);
  double sum = 0.0;
  for (std::int64_t t = 0; t < slots; ++t) sum += world.run_slot().gnb_reward;
  return sum / static_cast<double>(slots);
}

inline EpisodeResult run_episode(const EpisodeConfig& config, std::uint64_t seed, EpisodeOptions options = {}) {
  config.validate();
  EpisodeResult out;
  World world(config, seed);
  if (options.keep_records) out.records.reserve(static_cast<std::size_t>(config.horizon));
  for (std::int64_t t = 0; t < config.horizon; ++t) {
    auto rec = world.run_slot();
    if (!reward_consistent(rec)) throw InternalError("slot reward inconsistent with grants at t=" + std::to_string(t));
    if (options.keep_records) out.records.push_back(std::move(rec));
  }
  if (options.keep_tables) {
    out.gnb_table = world.gnb().table();
    if (world.adversary().learns()) out.adversary_table = world.adversary().table();
  }
  MetricsReport& m = out.metrics;
  m.series = running_average_series(world.rewards(), config.window);
  m.attack_start = config.attack_start();
  m.attack_stop = config.attack_stop();
  m.baseline_reward = paired_benchmark(config, seed);
  if (config.attack.kind == AttackKind::kNone) return out;
  const auto rec = recovery_time(m.series, m.attack_stop, m.baseline_reward);
  m.recovery_time = rec.slots;
  m.censored = rec.censored;
  const auto red = reward_reductions(m.series, m.attack_stop, m.baseline_reward, rec.slots);
  m.max_reduction = red.max_reduction;
  m.total_reduction = red.total_reduction;
  return out;
}

}  // namespace slicejam
