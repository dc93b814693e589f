#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "prosocial/harness.hpp"

using namespace prosocial;
using namespace prosocial::harness;

namespace {

ExperimentConfig small_matrix(int replicates = 6) {
  ExperimentConfig c;
  c.experiment_id = "t";
  c.rounds = 120;
  c.block_size = 50;
  c.window = 50;
  c.replicates = replicates;
  c.assignment = Assignment::kSingle;
  return c;
}

RunSeries flat_series(long units, int agents, double reward, double hit) {
  RunSeries s;
  s.agents = agents;
  for (long t = 0; t < units; ++t) {
    for (int a = 0; a < agents; ++a) s.rewards.push_back(reward + a);
    s.coord_hits.push_back(hit);
    s.coord_chances.push_back(1.0);
  }
  return s;
}

std::string results_csv(const std::vector<ConditionResults>& conds) {
  std::ostringstream os;
  write_results_csv(os, conds);
  return os.str();
}

}  // namespace

TEST(MeanSe, Examples) {
  const auto two = mean_se({0.0, 1.0});
  EXPECT_DOUBLE_EQ(two.mean, 0.5);
  ASSERT_TRUE(two.se.has_value());
  EXPECT_DOUBLE_EQ(*two.se, 0.5);
  const auto one = mean_se({0.7});
  EXPECT_EQ(one.mean, 0.7);
  EXPECT_FALSE(one.se.has_value());
  EXPECT_EQ(fmt(one.se), "");
  EXPECT_THROW(mean_se({}), std::invalid_argument);
}

TEST(Blocks, CountAndPartialRemainder) {
  EXPECT_EQ(block_stats(flat_series(10000, 2, 0, 1), 1000).size(), 10u);
  const auto b = block_stats(flat_series(120, 2, 1.5, 1), 50);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[2].block, 2);
  EXPECT_DOUBLE_EQ(b[2].mean_reward[0], 1.5);
  EXPECT_DOUBLE_EQ(b[2].mean_reward[1], 2.5);
  EXPECT_DOUBLE_EQ(b[2].coord_rate, 1.0);
}

TEST(Blocks, CoordRateIsPooledRatio) {
  RunSeries s;
  s.agents = 1;
  s.rewards = {0, 0};
  s.coord_hits = {1, 0};
  s.coord_chances = {1, 3};
  EXPECT_DOUBLE_EQ(block_stats(s, 2)[0].coord_rate, 0.25);
  s.coord_chances = {0, 0};
  s.coord_hits = {0, 0};
  EXPECT_DOUBLE_EQ(block_stats(s, 2)[0].coord_rate, 0.0);
}

TEST(Classify, ThresholdIsInclusive) {
  EXPECT_EQ(classify_rate(0.5), Label::kPayoffDominant);
  EXPECT_EQ(classify_rate(0.4999), Label::kRiskDominant);
  ReplicateResult r;
  r.failed = true;
  EXPECT_EQ(classify_convergence(r, 0.5, 50), Label::kUnresolved);
  r.failed = false;
  r.series = flat_series(100, 2, 0, 0);
  std::fill(r.series.coord_hits.end() - 25, r.series.coord_hits.end(), 1.0);
  EXPECT_EQ(classify_convergence(r, 0.5, 50), Label::kPayoffDominant);
  EXPECT_EQ(classify_convergence(r, 0.5, 51), Label::kRiskDominant);
}

TEST(Aggregate, MeansAcrossReplicatesAndSkipsFailures) {
  std::vector<ReplicateResult> rs(3);
  rs[0].series = flat_series(100, 2, 0.0, 0);
  rs[0].label = Label::kRiskDominant;
  rs[1].series = flat_series(100, 2, 1.0, 1);
  rs[1].label = Label::kPayoffDominant;
  rs[2].failed = true;
  const auto s = aggregate(rs, 50);
  EXPECT_EQ(s.failed, 1u);
  EXPECT_DOUBLE_EQ(s.payoff_dominant.mean, 0.5);
  EXPECT_DOUBLE_EQ(*s.payoff_dominant.se, 0.5);
  ASSERT_EQ(s.rows.size(), 4u);
  EXPECT_DOUBLE_EQ(s.rows[0].reward.mean, 0.5);
  EXPECT_DOUBLE_EQ(s.rows[1].reward.mean, 1.5);
  EXPECT_DOUBLE_EQ(s.rows[0].coord.mean, 0.5);
  EXPECT_EQ(s.rows[0].reward.n, 2u);
}

TEST(Csv, HeadersAndFailedRow) {
  EXPECT_STREQ(kResultsHeader,
               "experiment_id,condition,replicate,block,agent,mean_reward,coord_rate,converged_label,seed");
  ConditionResults c{small_matrix(), {}};
  ReplicateResult bad;
  bad.replicate = 4;
  bad.seed = 5;
  bad.failed = true;
  c.replicates.push_back(bad);
  const std::string csv = results_csv({c});
  EXPECT_NE(csv.find("t,single,4,,,,,unresolved,5\n"), std::string::npos);
  std::istringstream is(csv);
  const auto rows = read_results_csv(is);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].block.has_value());
  std::istringstream wrong("a,b\n");
  EXPECT_THROW(read_results_csv(wrong), std::runtime_error);
}

TEST(Run, DeterministicAcrossWorkerCounts) {
  const auto cfg = small_matrix();
  const auto one = run_cells({cfg}, 1);
  const auto three = run_cells({cfg}, 3);
  EXPECT_EQ(results_csv(one), results_csv(three));
  for (std::size_t r = 0; r < one[0].replicates.size(); ++r) {
    EXPECT_EQ(one[0].replicates[r].seed, cfg.base_seed + r);
    EXPECT_FALSE(one[0].replicates[r].failed);
  }
  auto other = cfg;
  other.base_seed = 99;
  EXPECT_NE(results_csv(run_cells({other}, 1)), results_csv(one));
}

TEST(Run, WorkerCountFromEnvironment) {
  setenv("PROSOCIAL_WORKERS", "3", 1);
  EXPECT_EQ(worker_count(), 3);
  setenv("PROSOCIAL_WORKERS", "x", 1);
  EXPECT_THROW(worker_count(), std::invalid_argument);
  setenv("PROSOCIAL_WORKERS", "0", 1);
  EXPECT_THROW(worker_count(), std::invalid_argument);
  unsetenv("PROSOCIAL_WORKERS");
  EXPECT_GE(worker_count(), 1);
}

TEST(Run, StrategicCoordinationMeansEveryoneCooperates) {
  auto cfg = small_matrix(1);
  cfg.game = GameType::kWeakLink;
  cfg.assignment = Assignment::kAll;
  const auto r = run_replicate(cfg, 0);
  ASSERT_FALSE(r.failed) << r.error;
  EXPECT_EQ(r.series.agents, 5);
  EXPECT_EQ(r.series.units(), 120);
  // Replay the same seed and check the indicator against the raw actions.
  Rng rng(r.seed);
  const WeakLinkGame g(3.0);
  const auto log = run_repeated_play(g, cfg.mixers(), LearnerConfig{}, 120, rng);
  for (std::size_t t = 0; t < 120; ++t) {
    bool all = true;
    for (std::size_t i = 0; i < 5; ++i) all = all && log.action(t, i) == 5;
    EXPECT_EQ(r.series.coord_hits[t], all ? 1.0 : 0.0);
  }
}

TEST(Run, TinyMarkovRunCompletes) {
  Json j = Json::parse(R"({"game": {"type": "markov", "markov": {"kind": "escalation", "escalation_cap": 10}},
                           "learner": {"base_channels": 2, "batch_episodes": 2},
                           "episodes": 4, "replicates": 1, "block_size": 2})");
  const auto cfg = config_from_json(j);
  const auto r = run_replicate(cfg, 0);
  ASSERT_FALSE(r.failed) << r.error;
  EXPECT_EQ(r.series.units(), 4);
  EXPECT_EQ(r.blocks.size(), 2u);
  EXPECT_EQ(r.series.streaks.size(), 4u);
}

TEST(Config, DefaultsPerGame) {
  const auto mk = config_from_json(Json::parse(R"({"game": {"type": "markov"}, "episodes": 20000})"));
  EXPECT_DOUBLE_EQ(mk.learning_rate, 1e-3);
  EXPECT_EQ(mk.block_size, 1000);
  EXPECT_EQ(mk.window, 2000);
  EXPECT_DOUBLE_EQ(mk.entropy_weight, 0.05);
  const auto hv = config_from_json(Json::parse(R"({"game": {"type": "markov", "markov": {"kind": "harvest"}}})"));
  EXPECT_DOUBLE_EQ(hv.entropy_weight, 0.0);
  const auto mx = config_from_json(Json::parse(R"({"rounds": 30})"));
  EXPECT_DOUBLE_EQ(mx.learning_rate, 0.01);
  EXPECT_EQ(mx.window, 30);
  EXPECT_EQ(mx.block_size, 50);
}

TEST(Config, JsonRoundTrip) {
  auto cfg = small_matrix();
  cfg.game = GameType::kNetwork;
  cfg.assignment = Assignment::kLeafOnly;
  cfg.penalty = 1.5;
  const Json j = config_to_json(cfg);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(Config, AssignmentsAndValidation) {
  auto cfg = small_matrix();
  cfg.game = GameType::kNetwork;
  cfg.alpha = 0.4;
  cfg.assignment = Assignment::kCenterOnly;
  EXPECT_EQ(cfg.alpha_vector(), (std::vector<double>{0.4, 0, 0, 0, 0}));
  cfg.assignment = Assignment::kLeafOnly;
  EXPECT_EQ(cfg.alpha_vector(), (std::vector<double>{0, 0.4, 0, 0, 0}));
  cfg.assignment = Assignment::kCustom;
  cfg.alphas = {0.1, 0.2};
  EXPECT_THROW(cfg.alpha_vector(), std::invalid_argument);
  cfg.assignment = Assignment::kAll;
  cfg.alpha = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.alpha = 0.5;
  cfg.experiment_id = "a,b";
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(config_from_json(Json::parse(R"({"game": {"type": "chess"}})")), std::invalid_argument);
}

TEST(Config, Override) {
  Json j = Json::object();
  apply_override(j, "game.penalty=2");
  apply_override(j, "prosociality.assignment=all");
  apply_override(j, "learner.baseline=true");
  EXPECT_EQ(j["game"]["penalty"], 2);
  EXPECT_EQ(j["prosociality"]["assignment"], "all");
  EXPECT_EQ(j["learner"]["baseline"], true);
  const auto cfg = config_from_json(j);
  EXPECT_EQ(cfg.penalty, 2.0);
  EXPECT_EQ(cfg.assignment, Assignment::kAll);
  EXPECT_THROW(apply_override(j, "novalue"), std::invalid_argument);
}

TEST(Sweep, CartesianProductWithLabels) {
  const Json spec = Json::parse(R"({"experiment_id": "s", "rounds": 10,
      "sweep": {"game.penalty": [0, 1, 2], "prosociality.assignment": ["none", "all"]}})");
  const auto cells = expand_sweep(spec);
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[0].config.condition_label(), "penalty=0;assignment=none");
  EXPECT_EQ(cells[5].config.condition_label(), "penalty=2;assignment=all");
  EXPECT_EQ(cells[4].config.penalty, 1.0);
  EXPECT_EQ(cells[4].config.assignment, Assignment::kAll);
  EXPECT_EQ(expand_sweep(Json::parse(R"({"rounds": 10})")).size(), 1u);
  EXPECT_THROW(expand_sweep(Json::parse(R"({"sweep": {"game.penalty": []}})")), std::invalid_argument);
}

TEST(Report, ReproducesTheSummary) {
  auto cfg = small_matrix();
  const auto conds = run_cells({cfg}, 1);
  std::ostringstream summary;
  write_summary_csv(summary, cfg.experiment_id, cfg.condition_label(), aggregate(conds[0].replicates, cfg.block_size),
                    true);
  std::istringstream is(results_csv(conds));
  std::ostringstream report;
  report_csv(is, report);
  EXPECT_EQ(report.str(), summary.str());
}

TEST(Outputs, WritesSiblingFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "prosocial_harness_test";
  std::filesystem::remove_all(dir);
  auto cfg = small_matrix(2);
  cfg.output = (dir / "out" / "res.csv").string();
  const auto conds = run_cells({cfg}, 1);
  const auto rep = write_outputs(cfg.output, conds, config_to_json(cfg));
  EXPECT_EQ(rep.replicates, 2u);
  EXPECT_EQ(rep.failed, 0u);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "res.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "res.summary.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "res.config.json"));
  std::filesystem::remove_all(dir);
}
