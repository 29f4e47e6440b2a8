#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "slicejam/experiment.hpp"

using namespace slicejam;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("slicejam_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string expect_config_error(const std::string& text) {
  try {
    parse_config_text(text, "cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return {};
}

// A small, fast experiment.
ExperimentConfig tiny(const fs::path& out) {
  auto cfg = parse_config_text(
      "rbs = 5\n"
      "warmup = 200\n"
      "attack_slots = 400\n"
      "horizon = 900\n"
      "window = 100\n"
      "seeds = 3\n");
  cfg.output_dir = out.string();
  return cfg;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string c;
    std::istringstream ls(line);
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

int cli(const std::string& args) {
  const int status = std::system((std::string(SLICEJAM_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ParseConfig, EmptyGivesDefaults) {
  const auto cfg = parse_config_text("");
  const auto& e = cfg.episode;
  EXPECT_EQ(e.scenario.ue_count, 30);
  EXPECT_DOUBLE_EQ(e.scenario.arrival_prob, 0.05);
  EXPECT_EQ(e.scenario.rbs, 11);
  EXPECT_DOUBLE_EQ(e.gnb.learn.gamma, 0.95);
  EXPECT_DOUBLE_EQ(e.gnb.learn.alpha, 0.1);
  EXPECT_EQ(e.window, 1000);
  EXPECT_EQ(e.warmup, 1000);
  EXPECT_EQ(e.attack_slots, 10000);
  EXPECT_EQ(cfg.seeds.size(), 20u);
  EXPECT_EQ(cfg.defense, "none");
}

TEST(ParseConfig, RbsOverride) {
  EXPECT_EQ(parse_config_text("rbs = 5\n").episode.scenario.rbs, 5);
}

TEST(ParseConfig, AlphaOutOfRange) {
  const auto msg = expect_config_error("# learning\n\nalpha = 1.5\n");
  EXPECT_NE(msg.find("cfg:3:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("alpha"), std::string::npos) << msg;
}

TEST(ParseConfig, UnknownKeyHasLineNumber) {
  const auto msg = expect_config_error("rbs = 5\nalfa = 0.2\n");
  EXPECT_NE(msg.find("cfg:2:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("unknown key 'alfa'"), std::string::npos) << msg;
}

TEST(ParseConfig, SyntaxErrors) {
  EXPECT_NE(expect_config_error("rbs 5\n").find("cfg:1:"), std::string::npos);
  EXPECT_NE(expect_config_error("rbs =\n").find("missing value"), std::string::npos);
  EXPECT_NE(expect_config_error("rbs = five\n").find("integer"), std::string::npos);
  EXPECT_NE(expect_config_error("rbs = 5\nrbs = 6\n").find("duplicate"), std::string::npos);
  EXPECT_NE(expect_config_error("attack = laser\n").find("unknown attack"), std::string::npos);
  EXPECT_NE(expect_config_error("defense = wall\n").find("unknown defense"), std::string::npos);
  EXPECT_NE(expect_config_error("random_opt = true\nrandom_top = true\n").find("mutually exclusive"), std::string::npos);
  EXPECT_NE(expect_config_error("horizon = 500\n").find("horizon"), std::string::npos);
  EXPECT_NE(expect_config_error("rbs = 20\n").find("cfg:1:"), std::string::npos);
}

TEST(ParseConfig, CommentsAndWhitespace) {
  const auto cfg = parse_config_text("  rbs=5   # five\n\t gamma = 0.5\n# alpha = 7\n");
  EXPECT_EQ(cfg.episode.scenario.rbs, 5);
  EXPECT_DOUBLE_EQ(cfg.episode.gnb.learn.gamma, 0.5);
}

TEST(ParseConfig, DefensePresetAndFlags) {
  auto cfg = parse_config_text("defense = combined\n");
  EXPECT_TRUE(cfg.episode.defense.q_protect.enabled);
  EXPECT_TRUE(cfg.episode.defense.random_top.enabled);
  EXPECT_TRUE(cfg.episode.defense.mis_nack);
  EXPECT_EQ(cfg.defense, "combined");
  cfg = parse_config_text("defense = combined\nmis_nack = true\n");
  EXPECT_EQ(cfg.defense, "combined");
  cfg = parse_config_text("defense = combined\nmis_nack = false\n");
  EXPECT_EQ(cfg.defense, "custom");
  EXPECT_FALSE(cfg.episode.defense.mis_nack);
  cfg = parse_config_text("r_top = 0.3\ndefense = random-top\n");
  EXPECT_DOUBLE_EQ(cfg.episode.defense.random_top.r_top, 0.3);
}

TEST(ParseConfig, Seeds) {
  EXPECT_EQ(parse_config_text("seeds = 4\n").seeds, (std::vector<std::uint64_t>{1, 2, 3, 4}));
  EXPECT_EQ(parse_config_text("seed_list = 9, 3, 12\n").seeds, (std::vector<std::uint64_t>{9, 3, 12}));
  EXPECT_NE(expect_config_error("seeds = 0\n").find("seed"), std::string::npos);
}

TEST(ParseConfig, MissingFile) {
  EXPECT_THROW(parse_config("/nonexistent/slicejam.cfg"), ConfigError);
}

TEST(ParseConfig, CanonicalRoundTrip) {
  const auto cfg = parse_config_text(
      "rbs = 5\ndefense = combined\nr_top = 0.4\nsweep_attacks = rl,myopic\nsweep_budgets = 1,2\n"
      "seed_list = 4,5\nadv_policy = greedy\nmin_rate_max = 1.1e6\n");
  const auto text = canonical_config(cfg);
  const auto again = parse_config_text(text);
  EXPECT_EQ(canonical_config(again), text);
  EXPECT_EQ(config_hash(again), config_hash(cfg));
  EXPECT_NE(config_hash(cfg), config_hash(parse_config_text("rbs = 5\n")));
}

TEST(ParseConfig, EveryKeyIsDocumented) {
  const auto readme = slurp(fs::path(SLICEJAM_SOURCE_DIR) / "README.md");
  for (const auto& k : config_keys()) EXPECT_NE(readme.find("`" + k + "`"), std::string::npos) << k;
}

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(Plan, SweepGridShape) {
  auto cfg = parse_config_text("sweep_attacks = rl,myopic,random\nsweep_budgets = 1,2,3,4,5\n");
  EXPECT_EQ(plan_cells(cfg, RunMode::kSweep).size(), 15u);
  cfg = parse_config_text("sweep_attacks = none,rl\nsweep_budgets = 2,3\nsweep_defenses = none,q-protect,random-opt,random-top,mis-nack,combined\n");
  const auto cells = plan_cells(cfg, RunMode::kSweep);
  EXPECT_EQ(cells.size(), 6u * 3u);
  EXPECT_EQ(cells.front().name(), "none_b0_none");
  EXPECT_EQ(plan_cells(cfg, RunMode::kSingle).size(), 1u);
}

TEST(Run, OutputsAndAggregates) {
  const auto dir = scratch("outputs");
  auto cfg = tiny(dir);
  cfg.sweep_attacks = {AttackKind::kNone, AttackKind::kRlSurrogate, AttackKind::kRandom};
  cfg.sweep_budgets = {2};
  const auto summary = run_experiment(cfg, RunMode::kSweep, 2);
  ASSERT_TRUE(summary.ok());
  for (const char* f : {"aggregate.csv", "manifest.json", "config.resolved"}) EXPECT_TRUE(fs::exists(dir / f)) << f;

  const auto agg = read_csv(dir / "aggregate.csv");
  ASSERT_EQ(agg.size(), 4u);
  EXPECT_EQ(agg[0][5], "recovery_time");
  EXPECT_EQ(agg[0][6], "max_reduction");
  EXPECT_EQ(agg[0][7], "total_reduction");
  // no-attack row is all zeros
  EXPECT_EQ(agg[1][1], "none");
  EXPECT_EQ(std::stod(agg[1][5]), 0.0);
  EXPECT_EQ(std::stod(agg[1][7]), 0.0);

  for (std::size_t row = 1; row < agg.size(); ++row) {
    const auto j = nlohmann::json::parse(slurp(dir / "cells" / (agg[row][0] + ".json")));
    ASSERT_EQ(j["runs"].size(), 3u);
    double rec = 0, mx = 0, tot = 0;
    for (const auto& r : j["runs"]) {
      rec += r["metrics"]["recovery_time"].get<double>();
      mx += r["metrics"]["max_reduction"].get<double>();
      tot += r["metrics"]["total_reduction"].get<double>();
    }
    EXPECT_NEAR(std::stod(agg[row][5]), rec / 3.0, 1e-6);
    EXPECT_NEAR(std::stod(agg[row][6]), mx / 3.0, 1e-6);
    EXPECT_NEAR(std::stod(agg[row][7]), tot / 3.0, 1e-6);
    EXPECT_NEAR(j["mean"]["total_reduction"].get<double>(), tot / 3.0, 1e-9);
  }

  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["config_hash"], "fnv1a64:" + config_hash(cfg));
  EXPECT_EQ(m["seeds"].size(), 3u);

  const auto log = read_csv(dir / "runs" / "rl_b2_none" / "seed_1.csv");
  EXPECT_EQ(log.size(), 901u);
  EXPECT_EQ(log[0][0], "t");
}

TEST(Run, AfterSeriesStartsAtAttackStop) {
  const auto dir = scratch("series");
  auto cfg = tiny(dir);
  cfg.slot_logs = false;
  const auto summary = run_experiment(cfg, RunMode::kSingle, 1);
  ASSERT_TRUE(summary.ok());
  const auto& cell = summary.cells.front();
  double expected_after = 0.0, expected_under = 0.0;
  for (const auto& r : cell.runs) {
    expected_after += r.metrics.series[static_cast<std::size_t>(r.metrics.attack_stop)];
    expected_under += r.metrics.series[static_cast<std::size_t>(r.metrics.attack_start)];
  }
  const auto after = read_csv(dir / "series" / (cell.cell.name() + "_after.csv"));
  const auto under = read_csv(dir / "series" / (cell.cell.name() + "_under.csv"));
  ASSERT_EQ(after[0], (std::vector<std::string>{"offset", "t", "running_average"}));
  EXPECT_EQ(after[1][0], "0");
  EXPECT_EQ(after[1][1], "600");
  EXPECT_NEAR(std::stod(after[1][2]), expected_after / 3.0, 1e-12);
  EXPECT_EQ(after.size(), 1u + 300u);
  EXPECT_EQ(under[1][1], "200");
  EXPECT_NEAR(std::stod(under[1][2]), expected_under / 3.0, 1e-12);
  EXPECT_EQ(under.size(), 1u + 400u);
  EXPECT_FALSE(fs::exists(dir / "runs"));
}

TEST(Run, EmptyCellIsHeaderOnly) {
  CellResult empty{Cell{}, {}};
  const auto f = plot_data(empty);
  EXPECT_EQ(f.under, "offset,t,running_average\n");
  EXPECT_EQ(f.after, "offset,t,running_average\n");
}

TEST(Run, TableDump) {
  const auto dir = scratch("tables");
  auto cfg = tiny(dir);
  cfg.seeds = {1};
  cfg.dump_tables = true;
  cfg.episode.scenario.rbs = 3;
  ASSERT_TRUE(run_experiment(cfg, RunMode::kSingle, 1).ok());
  const auto gnb = read_csv(dir / "tables" / "rl_b3_none" / "seed_1_gnb.tsv");
  // 2^3 availability masks x (1 x 5 + 1) demand codes x 4 actions, plus header
  EXPECT_EQ(gnb.size(), 1u + 8u * 6u * 4u);
  EXPECT_TRUE(fs::exists(dir / "tables" / "rl_b3_none" / "seed_1_adversary.tsv"));
}

TEST(Run, ParallelEqualsSerial) {
  const auto a = scratch("serial"), b = scratch("parallel");
  auto cfg = tiny(a);
  cfg.sweep_attacks = {AttackKind::kMyopic, AttackKind::kRandom};
  cfg.sweep_budgets = {1, 2};
  run_experiment(cfg, RunMode::kSweep, 1);
  cfg.output_dir = b.string();
  run_experiment(cfg, RunMode::kSweep, 3);
  EXPECT_EQ(slurp(a / "aggregate.csv"), slurp(b / "aggregate.csv"));
  EXPECT_EQ(slurp(a / "cells" / "myopic_b2_none.json"), slurp(b / "cells" / "myopic_b2_none.json"));
  EXPECT_EQ(slurp(a / "runs" / "random_b1_none" / "seed_2.csv"), slurp(b / "runs" / "random_b1_none" / "seed_2.csv"));
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  {
    std::ofstream(dir / "good.cfg") << "rbs = 5\nwarmup = 100\nattack_slots = 200\nhorizon = 400\nwindow = 50\nseeds = 2\n";
    std::ofstream(dir / "bad.cfg") << "rbs = 5\nalpha = 1.5\n";
    std::ofstream(dir / "unknown.cfg") << "colour = blue\n";
  }
  EXPECT_EQ(cli("validate " + (dir / "good.cfg").string()), 0);
  EXPECT_EQ(cli("validate " + (dir / "bad.cfg").string()), 1);
  EXPECT_EQ(cli("validate " + (dir / "unknown.cfg").string()), 1);
  EXPECT_EQ(cli("validate " + (dir / "missing.cfg").string()), 1);
  EXPECT_EQ(cli("run " + (dir / "bad.cfg").string() + " --out " + (dir / "x").string()), 1);
  EXPECT_EQ(cli("run " + (dir / "good.cfg").string() + " -q --seed 7 --out " + (dir / "run").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "runs" / "rl_b3_none" / "seed_7.csv"));
  EXPECT_EQ(cli("sweep " + (dir / "good.cfg").string() + " -q --jobs 2 --out " + (dir / "sweep").string()), 0);
  EXPECT_EQ(cli("frobnicate"), 1);
}

TEST(Run, AbortedRunIsRecorded) {
  // validation samples the rate model at the lowest SNR only; higher SNRs fail mid-run
  const auto dir = scratch("abort");
  auto cfg = tiny(dir);
  cfg.seeds = {1};
  cfg.sweep_attacks = {AttackKind::kRlSurrogate};
  cfg.sweep_budgets = {2};
  cfg.episode.scenario.rate.ber_curve = [](double snr) {
    if (snr > 1.6) throw DomainError("ber curve unavailable");
    return qpsk_ber(snr);
  };
  const auto summary = run_experiment(cfg, RunMode::kSweep, 1);
  EXPECT_FALSE(summary.ok());
  EXPECT_EQ(summary.aborted_runs, 1u);
  const auto j = nlohmann::json::parse(slurp(dir / "cells" / "rl_b2_none.json"));
  EXPECT_EQ(j["status"], "aborted");
  EXPECT_NE(j["runs"][0]["error"].get<std::string>().find("ber curve"), std::string::npos);
  EXPECT_EQ(slurp(dir / "series" / "rl_b2_none_after.csv"), "offset,t,running_average\n");
}
