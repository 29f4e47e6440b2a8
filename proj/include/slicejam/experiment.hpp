#pragma once

// Experiment front end: flat key=value configs, multi-seed sweeps over
// attack x budget x defense grids, and CSV/JSON report emission.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "slicejam/adversary.hpp"
#include "slicejam/defense.hpp"
#include "slicejam/engine.hpp"
#include "slicejam/error.hpp"

namespace slicejam {

struct ExperimentConfig {
  EpisodeConfig episode{};
  std::string defense = "none";  // preset label of the single-run cell; "custom" after flag overrides
  std::vector<AttackKind> sweep_attacks;
  std::vector<int> sweep_budgets;
  std::vector<std::string> sweep_defenses;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  bool slot_logs = true;
  bool dump_tables = false;

  ExperimentConfig() {
    episode.attack = {AttackKind::kRlSurrogate, 3};
    for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  }

  void validate() const {
    episode.validate();
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    for (int b : sweep_budgets)
      if (b < 0) throw ConfigError("sweep_budgets entries must be >= 0");
    for (const auto& d : sweep_defenses) (void)defense_preset(d);
  }
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty list entry");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("list must not be empty");
  return out;
}

inline long long to_int(const std::string& v) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return x;
}

inline std::uint64_t to_u64(const std::string& v) {
  if (v.empty() || v[0] == '-') throw ConfigError("expected a non-negative integer, got '" + v + "'");
  std::size_t pos = 0;
  std::uint64_t x = 0;
  try {
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return x;
}

inline int to_int32(const std::string& v) {
  const long long x = to_int(v);
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError("integer out of range: '" + v + "'");
  return static_cast<int>(x);
}

inline double to_double(const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  if (pos != v.size() || !std::isfinite(x)) throw ConfigError("expected a finite number, got '" + v + "'");
  return x;
}

inline bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

inline AttackKind to_attack(const std::string& v) {
  const auto k = parse_attack_kind(v);
  if (!k) throw ConfigError("unknown attack '" + v + "' (none, random, myopic, rl)");
  return *k;
}

inline Exploration::Kind to_policy(const std::string& v) {
  if (v == "greedy") return Exploration::Kind::kGreedy;
  if (v == "epsilon-greedy") return Exploration::Kind::kEpsilonGreedy;
  throw ConfigError("unknown policy '" + v + "' (greedy, epsilon-greedy)");
}

inline std::string policy_name(Exploration::Kind k) {
  return k == Exploration::Kind::kGreedy ? "greedy" : "epsilon-greedy";
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F&& to_s) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += to_s(xs[i]);
  }
  return out;
}

inline void check(bool ok, const char* msg) {
  if (!ok) throw ConfigError(msg);
}

// A preset label survives flag keys that agree with it.
inline void relabel(ExperimentConfig& c) {
  if (c.defense == "custom") return;
  const auto p = defense_preset(c.defense, c.episode.defense);
  const auto& d = c.episode.defense;
  if (p.q_protect.enabled != d.q_protect.enabled || p.random_opt != d.random_opt ||
      p.random_top.enabled != d.random_top.enabled || p.mis_nack != d.mis_nack)
    c.defense = "custom";
}

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// The schema: every accepted key, in canonical order.
inline const std::vector<Key>& schema() {
  using C = ExperimentConfig;
  using S = const std::string&;
  auto i2s = [](int v) { return std::to_string(v); };
  static const std::vector<Key> keys = {
      {"ue_count", [](C& c, S v) { c.episode.scenario.ue_count = to_int32(v); check(c.episode.scenario.ue_count >= 0, "must be >= 0"); },
       [=](const C& c) { return i2s(c.episode.scenario.ue_count); }},
      {"arrival_prob", [](C& c, S v) { double p = to_double(v); check(p >= 0 && p <= 1, "must be in [0,1]"); c.episode.scenario.arrival_prob = p; },
       [](const C& c) { return fmt(c.episode.scenario.arrival_prob); }},
      {"weight_min", [](C& c, S v) { c.episode.scenario.weight.lo = to_int32(v); }, [=](const C& c) { return i2s(c.episode.scenario.weight.lo); }},
      {"weight_max", [](C& c, S v) { c.episode.scenario.weight.hi = to_int32(v); }, [=](const C& c) { return i2s(c.episode.scenario.weight.hi); }},
      {"lifetime_min", [](C& c, S v) { c.episode.scenario.lifetime.lo = to_int32(v); }, [=](const C& c) { return i2s(c.episode.scenario.lifetime.lo); }},
      {"lifetime_max", [](C& c, S v) { c.episode.scenario.lifetime.hi = to_int32(v); }, [=](const C& c) { return i2s(c.episode.scenario.lifetime.hi); }},
      {"deadline_min", [](C& c, S v) { c.episode.scenario.deadline_offset.lo = to_int32(v); }, [=](const C& c) { return i2s(c.episode.scenario.deadline_offset.lo); }},
      {"deadline_max", [](C& c, S v) { c.episode.scenario.deadline_offset.hi = to_int32(v); }, [=](const C& c) { return i2s(c.episode.scenario.deadline_offset.hi); }},
      {"snr_min", [](C& c, S v) { c.episode.scenario.snr.lo = to_double(v); }, [](const C& c) { return fmt(c.episode.scenario.snr.lo); }},
      {"snr_max", [](C& c, S v) { c.episode.scenario.snr.hi = to_double(v); }, [](const C& c) { return fmt(c.episode.scenario.snr.hi); }},
      {"min_rate_min", [](C& c, S v) { c.episode.scenario.min_rate.lo = to_double(v); }, [](const C& c) { return fmt(c.episode.scenario.min_rate.lo); }},
      {"min_rate_max", [](C& c, S v) { c.episode.scenario.min_rate.hi = to_double(v); }, [](const C& c) { return fmt(c.episode.scenario.min_rate.hi); }},
      {"bandwidth_hz", [](C& c, S v) { double b = to_double(v); check(b > 0, "must be > 0"); c.episode.scenario.bandwidth_hz = b; },
       [](const C& c) { return fmt(c.episode.scenario.bandwidth_hz); }},
      {"rbs", [](C& c, S v) { int r = to_int32(v); check(r >= 1 && r <= kMaxTabularRbs, "must be in [1,16]"); c.episode.scenario.rbs = r; },
       [=](const C& c) { return i2s(c.episode.scenario.rbs); }},
      {"rate_constant", [](C& c, S v) { double x = to_double(v); check(x > 0, "must be > 0"); c.episode.scenario.rate.c = x; },
       [](const C& c) { return fmt(c.episode.scenario.rate.c); }},
      {"carriers", [](C& c, S v) { int k = to_int32(v); check(k >= 1, "must be >= 1"); c.episode.scenario.rate.carriers = k; },
       [=](const C& c) { return i2s(c.episode.scenario.rate.carriers); }},

      {"alpha", [](C& c, S v) { double a = to_double(v); check(a > 0 && a <= 1, "must be in (0,1]"); c.episode.gnb.learn.alpha = a; },
       [](const C& c) { return fmt(c.episode.gnb.learn.alpha); }},
      {"gamma", [](C& c, S v) { double g = to_double(v); check(g >= 0 && g <= 1, "must be in [0,1]"); c.episode.gnb.learn.gamma = g; },
       [](const C& c) { return fmt(c.episode.gnb.learn.gamma); }},
      {"policy", [](C& c, S v) { c.episode.gnb.learn.explore.kind = to_policy(v); },
       [](const C& c) { return policy_name(c.episode.gnb.learn.explore.kind); }},
      {"epsilon", [](C& c, S v) { double e = to_double(v); check(e >= 0 && e <= 1, "must be in [0,1]"); c.episode.gnb.learn.explore.epsilon = e; },
       [](const C& c) { return fmt(c.episode.gnb.learn.explore.epsilon); }},
      {"epsilon_decay", [](C& c, S v) { double d = to_double(v); check(d > 0 && d <= 1, "must be in (0,1]"); c.episode.gnb.learn.explore.decay = d; },
       [](const C& c) { return fmt(c.episode.gnb.learn.explore.decay); }},
      {"epsilon_min", [](C& c, S v) { double f = to_double(v); check(f >= 0 && f <= 1, "must be in [0,1]"); c.episode.gnb.learn.explore.floor = f; },
       [](const C& c) { return fmt(c.episode.gnb.learn.explore.floor); }},
      {"init_min", [](C& c, S v) { c.episode.gnb.init.lo = to_double(v); }, [](const C& c) { return fmt(c.episode.gnb.init.lo); }},
      {"init_max", [](C& c, S v) { c.episode.gnb.init.hi = to_double(v); }, [](const C& c) { return fmt(c.episode.gnb.init.hi); }},

      {"adv_alpha", [](C& c, S v) { double a = to_double(v); check(a > 0 && a <= 1, "must be in (0,1]"); c.episode.adversary.alpha = a; },
       [](const C& c) { return fmt(c.episode.adversary.alpha); }},
      {"adv_gamma", [](C& c, S v) { double g = to_double(v); check(g >= 0 && g <= 1, "must be in [0,1]"); c.episode.adversary.gamma = g; },
       [](const C& c) { return fmt(c.episode.adversary.gamma); }},
      {"adv_policy", [](C& c, S v) { c.episode.adversary.explore.kind = to_policy(v); },
       [](const C& c) { return policy_name(c.episode.adversary.explore.kind); }},
      {"adv_epsilon", [](C& c, S v) { double e = to_double(v); check(e >= 0 && e <= 1, "must be in [0,1]"); c.episode.adversary.explore.epsilon = e; },
       [](const C& c) { return fmt(c.episode.adversary.explore.epsilon); }},
      {"adv_epsilon_decay", [](C& c, S v) { double d = to_double(v); check(d > 0 && d <= 1, "must be in (0,1]"); c.episode.adversary.explore.decay = d; },
       [](const C& c) { return fmt(c.episode.adversary.explore.decay); }},
      {"adv_epsilon_min", [](C& c, S v) { double f = to_double(v); check(f >= 0 && f <= 1, "must be in [0,1]"); c.episode.adversary.explore.floor = f; },
       [](const C& c) { return fmt(c.episode.adversary.explore.floor); }},

      {"attack", [](C& c, S v) { c.episode.attack.kind = to_attack(v); }, [](const C& c) { return to_string(c.episode.attack.kind); }},
      {"budget", [](C& c, S v) { int b = to_int32(v); check(b >= 0, "must be >= 0"); c.episode.attack.budget = b; },
       [=](const C& c) { return i2s(c.episode.attack.budget); }},
      {"warmup", [](C& c, S v) { auto w = to_int(v); check(w >= 0, "must be >= 0"); c.episode.warmup = w; },
       [](const C& c) { return std::to_string(c.episode.warmup); }},
      {"attack_slots", [](C& c, S v) { auto a = to_int(v); check(a >= 0, "must be >= 0"); c.episode.attack_slots = a; },
       [](const C& c) { return std::to_string(c.episode.attack_slots); }},
      {"horizon", [](C& c, S v) { auto h = to_int(v); check(h >= 1, "must be >= 1"); c.episode.horizon = h; },
       [](const C& c) { return std::to_string(c.episode.horizon); }},
      {"window", [](C& c, S v) { int w = to_int32(v); check(w >= 1, "must be >= 1"); c.episode.window = w; },
       [=](const C& c) { return i2s(c.episode.window); }},

      {"defense", [](C& c, S v) { c.episode.defense = defense_preset(v, c.episode.defense); c.defense = v; },
       [](const C& c) { return c.defense; }},
      {"q_protect", [](C& c, S v) { c.episode.defense.q_protect.enabled = to_bool(v); relabel(c); },
       [](const C& c) { return std::string(c.episode.defense.q_protect.enabled ? "true" : "false"); }},
      {"q_protect_threshold", [](C& c, S v) { double x = to_double(v); check(x > 0 && x < 1, "must be in (0,1)"); c.episode.defense.q_protect.drop_threshold = x; },
       [](const C& c) { return fmt(c.episode.defense.q_protect.drop_threshold); }},
      {"q_protect_window", [](C& c, S v) { int w = to_int32(v); check(w >= 1, "must be >= 1"); c.episode.defense.q_protect.window = w; },
       [=](const C& c) { return i2s(c.episode.defense.q_protect.window); }},
      {"random_opt", [](C& c, S v) { c.episode.defense.random_opt = to_bool(v); relabel(c); },
       [](const C& c) { return std::string(c.episode.defense.random_opt ? "true" : "false"); }},
      {"random_top", [](C& c, S v) { c.episode.defense.random_top.enabled = to_bool(v); relabel(c); },
       [](const C& c) { return std::string(c.episode.defense.random_top.enabled ? "true" : "false"); }},
      {"r_top", [](C& c, S v) { double r = to_double(v); check(r > 0 && r <= 1, "must be in (0,1]"); c.episode.defense.random_top.r_top = r; },
       [](const C& c) { return fmt(c.episode.defense.random_top.r_top); }},
      {"mis_nack", [](C& c, S v) { c.episode.defense.mis_nack = to_bool(v); relabel(c); },
       [](const C& c) { return std::string(c.episode.defense.mis_nack ? "true" : "false"); }},

      {"sweep_attacks", [](C& c, S v) { c.sweep_attacks.clear(); for (const auto& a : split_list(v)) c.sweep_attacks.push_back(to_attack(a)); },
       [](const C& c) { return join(c.sweep_attacks, [](AttackKind k) { return to_string(k); }); }},
      {"sweep_budgets", [](C& c, S v) { c.sweep_budgets.clear(); for (const auto& b : split_list(v)) { int x = to_int32(b); check(x >= 0, "budgets must be >= 0"); c.sweep_budgets.push_back(x); } },
       [=](const C& c) { return join(c.sweep_budgets, i2s); }},
      {"sweep_defenses", [](C& c, S v) { c.sweep_defenses = split_list(v); for (const auto& d : c.sweep_defenses) (void)defense_preset(d); },
       [](const C& c) { return join(c.sweep_defenses, [](const std::string& s) { return s; }); }},
      {"seeds", [](C& c, S v) {
         const auto xs = split_list(v);
         c.seeds.clear();
         if (xs.size() == 1) {
           const auto n = to_u64(xs[0]);
           check(n >= 1, "seed count must be >= 1");
           for (std::uint64_t s = 1; s <= n; ++s) c.seeds.push_back(s);
         } else {
           for (const auto& x : xs) c.seeds.push_back(to_u64(x));
         }
       },
       [](const C& c) { return std::to_string(c.seeds.size()); }},
      {"seed_list", [](C& c, S v) { c.seeds.clear(); for (const auto& x : split_list(v)) c.seeds.push_back(to_u64(x)); },
       [](const C& c) { return join(c.seeds, [](std::uint64_t s) { return std::to_string(s); }); }},
      {"output_dir", [](C& c, S v) { check(!v.empty(), "must not be empty"); c.output_dir = v; }, [](const C& c) { return c.output_dir; }},
      {"slot_logs", [](C& c, S v) { c.slot_logs = to_bool(v); }, [](const C& c) { return std::string(c.slot_logs ? "true" : "false"); }},
      {"dump_tables", [](C& c, S v) { c.dump_tables = to_bool(v); }, [](const C& c) { return std::string(c.dump_tables ? "true" : "false"); }},
  };
  return keys;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : detail::schema()) out.emplace_back(k.name);
  return out;
}

// Lines are `key = value`; `#` starts a comment; blank lines are ignored.
inline ExperimentConfig parse_config_text(std::string_view text, const std::string& origin = "<config>") {
  ExperimentConfig cfg;
  const auto& keys = detail::schema();
  std::vector<int> seen(keys.size(), 0);
  std::istringstream is{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto where = origin + ":" + std::to_string(line_no) + ": ";
    const auto hash = raw.find('#');
    const std::string line = detail::trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    std::size_t k = 0;
    while (k < keys.size() && key != keys[k].name) ++k;
    if (k == keys.size()) throw ConfigError(where + "unknown key '" + key + "'");
    if (seen[k]) throw ConfigError(where + "duplicate key '" + key + "' (first on line " + std::to_string(seen[k]) + ")");
    seen[k] = line_no;
    if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
    try {
      keys[k].set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config_text(os.str(), path.string());
}

// Fully resolved config, one `key = value` per schema key except output_dir.
// Parses back to the same experiment.
inline std::string canonical_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : detail::schema()) {
    if (std::string_view(k.name) == "seeds") continue;  // seed_list carries the seeds
    if (std::string_view(k.name) == "output_dir") continue;  // where results go is not part of the experiment
    if (std::string_view(k.name) == "defense") {
      if (cfg.defense == "custom") continue;
      out += "defense = " + cfg.defense + "\n";
      continue;
    }
    const std::string v = k.get(cfg);
    if (v.empty()) continue;  // unset sweep lists
    out += std::string(k.name) + " = " + v + "\n";
  }
  return out;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(canonical_config(cfg)));
  return buf;
}

// One (attack, budget, defense) combination.
struct Cell {
  AttackKind attack = AttackKind::kNone;
  int budget = 0;
  std::string defense_label = "none";
  DefenseConfig defense{};

  std::string name() const { return to_string(attack) + "_b" + std::to_string(budget) + "_" + defense_label; }
};

enum class RunMode { kSingle, kSweep };

// Cells in deterministic order. A sweep takes the sweep_* lists and falls back to
// the single-run values for any list left unset; the no-attack kind gets budget 0 only.
inline std::vector<Cell> plan_cells(const ExperimentConfig& cfg, RunMode mode) {
  std::vector<Cell> cells;
  if (mode == RunMode::kSingle) {
    Cell c{cfg.episode.attack.kind, cfg.episode.attack.budget, cfg.defense, cfg.episode.defense};
    if (c.attack == AttackKind::kNone) c.budget = 0;
    cells.push_back(c);
    return cells;
  }
  const auto attacks = cfg.sweep_attacks.empty() ? std::vector<AttackKind>{cfg.episode.attack.kind} : cfg.sweep_attacks;
  const auto budgets = cfg.sweep_budgets.empty() ? std::vector<int>{cfg.episode.attack.budget} : cfg.sweep_budgets;
  const bool preset_grid = !cfg.sweep_defenses.empty();
  const auto defenses = preset_grid ? cfg.sweep_defenses : std::vector<std::string>{cfg.defense};
  for (const auto& d : defenses) {
    const DefenseConfig dc = preset_grid ? defense_preset(d, cfg.episode.defense) : cfg.episode.defense;
    for (AttackKind a : attacks) {
      if (a == AttackKind::kNone) {
        cells.push_back({a, 0, d, dc});
        continue;
      }
      for (int b : budgets) cells.push_back({a, b, d, dc});
    }
  }
  return cells;
}

inline EpisodeConfig cell_episode(const ExperimentConfig& cfg, const Cell& cell) {
  EpisodeConfig e = cfg.episode;
  e.attack = {cell.attack, cell.budget};
  e.defense = cell.defense;
  return e;
}

struct RunResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
};

struct CellResult {
  Cell cell;
  std::vector<RunResult> runs;

  bool ok() const {
    return std::all_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.ok; });
  }
  std::vector<const MetricsReport*> completed() const {
    std::vector<const MetricsReport*> out;
    for (const auto& r : runs)
      if (r.ok) out.push_back(&r.metrics);
    return out;
  }
};

// Arithmetic means of the per-seed reports of one cell.
struct CellMeans {
  std::size_t runs = 0;
  double recovery_time = 0.0;
  double max_reduction = 0.0;
  double total_reduction = 0.0;
  double baseline_reward = 0.0;
  std::size_t censored = 0;
};

inline CellMeans cell_means(const CellResult& r) {
  CellMeans m;
  for (const auto* x : r.completed()) {
    ++m.runs;
    m.recovery_time += static_cast<double>(x->recovery_time);
    m.max_reduction += x->max_reduction;
    m.total_reduction += x->total_reduction;
    m.baseline_reward += x->baseline_reward;
    if (x->censored) ++m.censored;
  }
  if (m.runs) {
    const double n = static_cast<double>(m.runs);
    m.recovery_time /= n;
    m.max_reduction /= n;
    m.total_reduction /= n;
    m.baseline_reward /= n;
  }
  return m;
}

// ---- writers ----

inline std::string mask_list(RbMask m) {
  std::string out;
  for (int rb : rb_indices(m)) {
    if (!out.empty()) out += '+';
    out += std::to_string(rb);
  }
  return out;
}

inline const char* slot_csv_header() {
  return "t,arrivals,decisions,released,sensed_idle,jam_set,grants,nacks,gnb_reward,adv_reward,defense_flags,"
         "qprotect_suspended,free_after,waiting_after\n";
}

// grants: `ue:req:weight:jammed:rbs` joined by ';'; nacks: `rb:count` joined by ';'; RB sets as `a+b+c`.
inline std::string slot_csv_row(const SlotRecord& r) {
  std::string grants;
  for (const auto& g : r.grants) {
    if (!grants.empty()) grants += ';';
    grants += std::to_string(g.ue_id) + ':' + std::to_string(g.req_id) + ':' + std::to_string(g.weight) + ':' +
              (g.jammed ? "1" : "0") + ':' + mask_list(g.rb_set);
  }
  std::string nacks;
  for (const auto& n : r.nacks) {
    if (!nacks.empty()) nacks += ';';
    nacks += std::to_string(n.rb) + ':' + std::to_string(n.count);
  }
  std::string row = std::to_string(r.t) + ',' + std::to_string(r.arrivals) + ',' + std::to_string(r.decisions) + ',' +
                    mask_list(r.released) + ',' + mask_list(r.sensed_idle) + ',' + mask_list(r.jam_set) + ',' + grants +
                    ',' + nacks + ',' + detail::fmt(r.gnb_reward) + ',' + detail::fmt(r.adv_reward) + ',' +
                    std::to_string(r.defense_flags) + ',' + (r.qprotect_suspended ? "1" : "0") + ',' +
                    std::to_string(r.free_after) + ',' + std::to_string(r.waiting_after) + '\n';
  return row;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline void write_slot_csv(const std::filesystem::path& path, const std::vector<SlotRecord>& records) {
  std::string text = slot_csv_header();
  for (const auto& r : records) text += slot_csv_row(r);
  write_text(path, text);
}

// `state<TAB>action<TAB>value`, one line per table entry, rows in index order.
inline void dump_table(const std::filesystem::path& path, const QTable& table) {
  std::string text = "state\taction\tvalue\n";
  for (StateIndex s = 0; s < table.n_states(); ++s) {
    const auto row = table.row(s);
    for (std::size_t a = 0; a < row.size(); ++a)
      text += std::to_string(s) + '\t' + std::to_string(a) + '\t' + detail::fmt(row[a]) + '\n';
  }
  write_text(path, text);
}

inline nlohmann::ordered_json metrics_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["baseline_reward"] = m.baseline_reward;
  j["recovery_time"] = m.recovery_time;
  j["censored"] = m.censored;
  j["max_reduction"] = m.max_reduction;
  j["total_reduction"] = m.total_reduction;
  j["attack_start"] = m.attack_start;
  j["attack_stop"] = m.attack_stop;
  return j;
}

inline nlohmann::ordered_json cell_json(const CellResult& r) {
  nlohmann::ordered_json j;
  j["cell"] = r.cell.name();
  j["attack"] = to_string(r.cell.attack);
  j["budget"] = r.cell.budget;
  j["defense"] = r.cell.defense_label;
  j["status"] = r.ok() ? "ok" : "aborted";
  const auto means = cell_means(r);
  j["mean"] = {{"runs", means.runs},
               {"recovery_time", means.recovery_time},
               {"max_reduction", means.max_reduction},
               {"total_reduction", means.total_reduction},
               {"baseline_reward", means.baseline_reward},
               {"censored_runs", means.censored}};
  auto runs = nlohmann::ordered_json::array();
  for (const auto& run : r.runs) {
    nlohmann::ordered_json x;
    x["seed"] = run.seed;
    x["status"] = run.ok ? "ok" : "aborted";
    if (run.ok)
      x["metrics"] = metrics_json(run.metrics);
    else
      x["error"] = run.error;
    runs.push_back(x);
  }
  j["runs"] = runs;
  return j;
}

inline const char* aggregate_header() {
  return "cell,attack,budget,defense,runs,recovery_time,max_reduction,total_reduction,censored_runs,baseline_reward\n";
}

inline std::string aggregate_row(const CellResult& r) {
  const auto m = cell_means(r);
  return r.cell.name() + ',' + to_string(r.cell.attack) + ',' + std::to_string(r.cell.budget) + ',' +
         r.cell.defense_label + ',' + std::to_string(m.runs) + ',' + detail::fixed6(m.recovery_time) + ',' +
         detail::fixed6(m.max_reduction) + ',' + detail::fixed6(m.total_reduction) + ',' + std::to_string(m.censored) +
         ',' + detail::fixed6(m.baseline_reward) + '\n';
}

// Seed-mean running average, one file aligned at attack start (offset 0 = attack_start,
// through attack_stop - 1) and one at attack stop (offset 0 = attack_stop, through the horizon).
struct PlotFiles {
  std::string under;
  std::string after;
};

inline PlotFiles plot_data(const CellResult& r) {
  PlotFiles f{"offset,t,running_average\n", "offset,t,running_average\n"};
  const auto done = r.completed();
  if (done.empty()) return f;
  const auto& first = *done.front();
  const std::size_t len = first.series.size();
  std::vector<double> mean(len, 0.0);
  for (const auto* m : done)
    for (std::size_t t = 0; t < len; ++t) mean[t] += m->series[t];
  for (double& v : mean) v /= static_cast<double>(done.size());
  auto emit = [&](std::string& out, std::int64_t from, std::int64_t to) {
    for (std::int64_t t = from; t < to; ++t)
      out += std::to_string(t - from) + ',' + std::to_string(t) + ',' + detail::fmt(mean[static_cast<std::size_t>(t)]) + '\n';
  };
  emit(f.under, first.attack_start, first.attack_stop);
  emit(f.after, first.attack_stop, static_cast<std::int64_t>(len));
  return f;
}

inline void emit_plot_data(const CellResult& r, const std::filesystem::path& dir) {
  const auto f = plot_data(r);
  write_text(dir / (r.cell.name() + "_under.csv"), f.under);
  write_text(dir / (r.cell.name() + "_after.csv"), f.after);
}

struct ExperimentSummary {
  std::vector<CellResult> cells;
  std::size_t aborted_runs = 0;
  bool ok() const { return aborted_runs == 0; }
};

// Runs every (cell, seed) pair on up to `jobs` threads; per-run files are written by the
// worker that produced them, the aggregate files after all workers join.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg, RunMode mode, int jobs = 1,
                                        std::ostream* log = nullptr) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path out = cfg.output_dir;
  ExperimentSummary summary;
  for (const auto& c : plan_cells(cfg, mode)) {
    CellResult r{c, {}};
    for (auto s : cfg.seeds) r.runs.push_back({s, false, "not run", {}});
    summary.cells.push_back(std::move(r));
  }
  for (const auto& c : summary.cells) cell_episode(cfg, c.cell).validate();

  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t c = 0; c < summary.cells.size(); ++c)
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) tasks.emplace_back(c, s);

  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      auto& cell = summary.cells[tasks[i].first];
      auto& run = cell.runs[tasks[i].second];
      try {
        const auto result =
            run_episode(cell_episode(cfg, cell.cell), run.seed, EpisodeOptions{cfg.slot_logs, cfg.dump_tables});
        const auto stem = cell.cell.name() + "/seed_" + std::to_string(run.seed);
        if (cfg.slot_logs) write_slot_csv(out / "runs" / (stem + ".csv"), result.records);
        if (result.gnb_table) dump_table(out / "tables" / (stem + "_gnb.tsv"), *result.gnb_table);
        if (result.adversary_table) dump_table(out / "tables" / (stem + "_adversary.tsv"), *result.adversary_table);
        run.metrics = result.metrics;
        run.ok = true;
        run.error.clear();
      } catch (const std::exception& e) {
        run.ok = false;
        run.error = e.what();
      }
      if (log) {
        std::lock_guard lock(log_mu);
        *log << cell.cell.name() << " seed " << run.seed << (run.ok ? " ok" : " aborted: " + run.error) << '\n';
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::string aggregate = aggregate_header();
  nlohmann::ordered_json manifest;
  manifest["format_version"] = 1;
  manifest["config_hash"] = "fnv1a64:" + config_hash(cfg);
  manifest["mode"] = mode == RunMode::kSingle ? "run" : "sweep";
  manifest["seeds"] = cfg.seeds;
  auto cells = nlohmann::ordered_json::array();
  for (const auto& c : summary.cells) {
    for (const auto& r : c.runs)
      if (!r.ok) ++summary.aborted_runs;
    aggregate += aggregate_row(c);
    write_text(out / "cells" / (c.cell.name() + ".json"), cell_json(c).dump(2) + "\n");
    emit_plot_data(c, out / "series");
    cells.push_back({{"cell", c.cell.name()}, {"status", c.ok() ? "ok" : "aborted"}});
  }
  manifest["cells"] = cells;
  write_text(out / "aggregate.csv", aggregate);
  write_text(out / "config.resolved", canonical_config(cfg));
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

}  // namespace slicejam
