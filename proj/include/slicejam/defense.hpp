#pragma once

// Defenses: update suspension on reward drops (Q-Protect), randomized tie and
// near-top action selection (RandomOpt, RandomTop), and misleading NACK routing (MisNACK).

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slicejam/adversary.hpp"
#include "slicejam/error.hpp"
#include "slicejam/qlearn.hpp"
#include "slicejam/rng.hpp"
#include "slicejam/slicing.hpp"

namespace slicejam {

struct DefenseConfig {
  struct QProtect {
    bool enabled = false;
    double drop_threshold = 0.10;
    int window = 1000;
  } q_protect;
  bool random_opt = false;
  struct RandomTop {
    bool enabled = false;
    double r_top = 0.50;
  } random_top;
  bool mis_nack = false;

  static DefenseConfig none() { return {}; }
  static DefenseConfig combined() {
    DefenseConfig c;
    c.q_protect.enabled = true;
    c.random_top.enabled = true;
    c.mis_nack = true;
    return c;
  }

  bool any() const { return q_protect.enabled || random_opt || random_top.enabled || mis_nack; }

  void validate() const {
    if (random_opt && random_top.enabled) throw ConfigError("random_opt and random_top are mutually exclusive");
    if (!(random_top.r_top > 0.0 && random_top.r_top <= 1.0)) throw ConfigError("r_top must be in (0,1]");
    if (!(q_protect.drop_threshold > 0.0 && q_protect.drop_threshold < 1.0))
      throw ConfigError("q_protect_threshold must be in (0,1)");
    if (q_protect.window < 1) throw ConfigError("q_protect_window must be >= 1");
  }
};

// Named defense presets used by sweeps and reports.
inline std::vector<std::string> defense_names() {
  return {"none", "q-protect", "random-opt", "random-top", "mis-nack", "combined"};
}

inline DefenseConfig defense_preset(const std::string& name, const DefenseConfig& tuning = {}) {
  DefenseConfig c;
  c.q_protect.drop_threshold = tuning.q_protect.drop_threshold;
  c.q_protect.window = tuning.q_protect.window;
  c.random_top.r_top = tuning.random_top.r_top;
  if (name == "none") return c;
  if (name == "q-protect") { c.q_protect.enabled = true; return c; }
  if (name == "random-opt") { c.random_opt = true; return c; }
  if (name == "random-top") { c.random_top.enabled = true; return c; }
  if (name == "mis-nack") { c.mis_nack = true; return c; }
  if (name == "combined") {
    c.q_protect.enabled = true;
    c.random_top.enabled = true;
    c.mis_nack = true;
    return c;
  }
  throw ConfigError("unknown defense '" + name + "'");
}

// True when the running average has fallen to (1 - threshold) of the baseline or below.
inline bool qprotect_check(double running_avg, double baseline, double threshold) {
  if (!(baseline > 0.0)) throw ConfigError("qprotect_check: baseline must be positive");
  return running_avg <= (1.0 - threshold) * baseline;
}

// Uniform choice among legal actions tied (to 1e-9 relative) with the legal maximum.
inline ActionIndex randomopt_select(std::span<const double> row, ActionMask legal, Rng& rng) {
  const double m = [&] {
    double best = -INFINITY;
    for (std::size_t a = 0; a < row.size(); ++a)
      if (legal.empty() || legal[a]) best = std::max(best, row[a]);
    return best;
  }();
  if (m == -INFINITY) throw ConfigError("randomopt_select: no legal action");
  const double tol = 1e-9 * std::abs(m);
  std::vector<ActionIndex> ties;
  for (std::size_t a = 0; a < row.size(); ++a)
    if ((legal.empty() || legal[a]) && m - row[a] <= tol) ties.push_back(static_cast<ActionIndex>(a));
  return ties[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(ties.size()) - 1))];
}

// Uniform choice among legal actions worth at least r_top of the legal maximum.
// For a non-positive maximum only the argmax set qualifies.
inline ActionIndex randomtop_select(std::span<const double> row, ActionMask legal, double r_top, Rng& rng) {
  double m = -INFINITY;
  for (std::size_t a = 0; a < row.size(); ++a)
    if (legal.empty() || legal[a]) m = std::max(m, row[a]);
  if (m == -INFINITY) throw ConfigError("randomtop_select: no legal action");
  if (!(m > 0.0)) return randomopt_select(row, legal, rng);
  const double cut = r_top * m;
  std::vector<ActionIndex> top;
  for (std::size_t a = 0; a < row.size(); ++a)
    if ((legal.empty() || legal[a]) && row[a] >= cut) top.push_back(static_cast<ActionIndex>(a));
  return top[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(top.size()) - 1))];
}

// NACKs a UE sends for one failed transmission on `request_rbs`.
// Plain: one NACK on the lowest jammed RB. MisNACK: one NACK on the lowest
// unjammed RB if there is one, else one NACK on every jammed RB.
inline std::vector<NackEvent> misnack_route(RbMask request_rbs, RbMask jammed, bool mis_nack) {
  const RbMask hit = request_rbs & jammed;
  if (hit == 0) throw ContractError("misnack_route: request was not jammed");
  if (!mis_nack) return {{lowest_rb(hit), 1}};
  const RbMask clean = request_rbs & ~jammed;
  if (clean != 0) return {{lowest_rb(clean), 1}};
  std::vector<NackEvent> out;
  for (int rb : rb_indices(hit)) out.push_back({rb, 1});
  return out;
}

enum DefenseFlag : std::uint32_t {
  kFlagQProtect = 1u << 0,
  kFlagRandomOpt = 1u << 1,
  kFlagRandomTop = 1u << 2,
  kFlagMisNack = 1u << 3,
};

// Hooks installed for one run.
struct DefenseHooks {
  bool q_protect = false;
  double drop_threshold = 0.10;
  int window = 1000;
  GreedyOverride selection;
  bool mis_nack = false;
  std::uint32_t flags = 0;
};

inline DefenseHooks combined_apply(const DefenseConfig& config) {
  config.validate();
  DefenseHooks h;
  if (config.q_protect.enabled) {
    h.q_protect = true;
    h.drop_threshold = config.q_protect.drop_threshold;
    h.window = config.q_protect.window;
    h.flags |= kFlagQProtect;
  }
  if (config.random_opt) {
    h.selection = [](std::span<const double> row, ActionMask legal, Rng& rng) {
      return randomopt_select(row, legal, rng);
    };
    h.flags |= kFlagRandomOpt;
  }
  if (config.random_top.enabled) {
    const double r_top = config.random_top.r_top;
    h.selection = [r_top](std::span<const double> row, ActionMask legal, Rng& rng) {
      return randomtop_select(row, legal, r_top, rng);
    };
    h.flags |= kFlagRandomTop;
  }
  if (config.mis_nack) {
    h.mis_nack = true;
    h.flags |= kFlagMisNack;
  }
  return h;
}

// Tracks the reward baseline and whether learning is currently suspended.
class QProtectMonitor {
 public:
  QProtectMonitor() = default;
  explicit QProtectMonitor(double threshold) : threshold_(threshold) {}

  void set_baseline(double baseline) { baseline_ = baseline; }
  bool has_baseline() const { return baseline_ > 0.0; }
  double baseline() const { return baseline_; }

  bool update(double running_avg) {
    detected_ = has_baseline() && qprotect_check(running_avg, baseline_, threshold_);
    return detected_;
  }
  bool detected() const { return detected_; }

 private:
  double threshold_ = 0.10;
  double baseline_ = 0.0;
  bool detected_ = false;
};

}  // namespace slicejam
