#include <gtest/gtest.h>

#include <cmath>

#include "prosocial/envs_markov.hpp"

using namespace prosocial::markov;

namespace {

MarkovConfig config(GameKind k) {
  MarkovConfig c;
  c.kind = k;
  return c;
}

GridState blank(GameKind k) {
  GridState s;
  s.kind = k;
  s.horizon = 1000;
  return s;
}

// Action that moves from `from` to the adjacent cell `to`.
Action toward(Cell from, Cell to) {
  if (to.x > from.x) return Action::kEast;
  if (to.x < from.x) return Action::kWest;
  if (to.y > from.y) return Action::kSouth;
  return Action::kNorth;
}

Action random_action(Rng& rng) {
  return static_cast<Action>(std::uniform_int_distribution<int>(0, kNumActions - 1)(rng));
}

}  // namespace

TEST(MarkovStagHunt, JointCapturePaysBoth) {
  auto cfg = config(GameKind::kStagHunt);
  auto s = blank(GameKind::kStagHunt);
  s.agents = {Cell{1, 2}, Cell{2, 1}};
  s.entities = {{EntityType::kStag, {2, 2}}, {EntityType::kYoungPlant, {0, 0}},
                {EntityType::kYoungPlant, {4, 4}}};
  Rng rng(1);
  const auto o = advance(s, Action::kEast, Action::kSouth, cfg, rng);
  EXPECT_EQ(o.r1, 5.0);
  EXPECT_EQ(o.r2, 5.0);
  EXPECT_EQ(o.events.stag_captures, 1);
  EXPECT_NO_THROW(check_invariants(s, cfg));
}

TEST(MarkovStagHunt, LoneHunterIsGored) {
  auto cfg = config(GameKind::kStagHunt);
  cfg.stag_hunt.gore_penalty = 3;
  auto s = blank(GameKind::kStagHunt);
  s.agents = {Cell{1, 2}, Cell{4, 0}};
  s.entities = {{EntityType::kStag, {2, 2}}, {EntityType::kYoungPlant, {0, 0}},
                {EntityType::kYoungPlant, {0, 4}}};
  Rng rng(1);
  const auto o = advance(s, Action::kEast, Action::kEast, cfg, rng);
  EXPECT_EQ(o.r1, -3.0);
  EXPECT_EQ(o.r2, 0.0);
  EXPECT_EQ(o.events.gored[0], 1);
}

TEST(MarkovStagHunt, PlantPaysOneAndRespawns) {
  auto cfg = config(GameKind::kStagHunt);
  auto s = blank(GameKind::kStagHunt);
  s.agents = {Cell{0, 1}, Cell{4, 4}};
  s.entities = {{EntityType::kStag, {4, 0}}, {EntityType::kYoungPlant, {0, 0}},
                {EntityType::kYoungPlant, {2, 2}}};
  Rng rng(1);
  const auto o = advance(s, Action::kNorth, Action::kSouth, cfg, rng);
  EXPECT_EQ(o.r1, 1.0);
  EXPECT_EQ(o.r2, 0.0);
  EXPECT_EQ(s.count(EntityType::kYoungPlant), 2);
  EXPECT_NO_THROW(check_invariants(s, cfg));
}

TEST(MarkovStagHunt, StagStepsTowardNearestAgent) {
  auto cfg = config(GameKind::kStagHunt);
  Rng rng(21);
  for (int ep = 0; ep < 50; ++ep) {
    auto s = reset(cfg, rng);
    while (!s.terminated) {
      const Cell stag_before = s.entities[0].type == EntityType::kStag ? s.entities[0].pos
                               : [&] {
                                   for (auto& e : s.entities)
                                     if (e.type == EntityType::kStag) return e.pos;
                                   return Cell{};
                                 }();
      const auto t = step(s, random_action(rng), random_action(rng), cfg, rng);
      if (t.events.stag_captures == 0) {
        Cell stag_after{};
        for (auto& e : t.next.entities)
          if (e.type == EntityType::kStag) stag_after = e.pos;
        const auto& a = t.next.agents;
        const int d0 = manhattan(stag_before, a[0]), d1 = manhattan(stag_before, a[1]);
        const Cell target = d1 < d0 ? a[1] : a[0];
        EXPECT_LE(manhattan(stag_before, stag_after), 1);
        EXPECT_LE(manhattan(stag_after, target), manhattan(stag_before, target));
      }
      s = t.next;
    }
  }
}

TEST(Harvest, MaturePickupPaysBoth) {
  auto cfg = config(GameKind::kHarvest);
  cfg.harvest.spawn_prob = 0;
  auto s = blank(GameKind::kHarvest);
  s.agents = {Cell{1, 2}, Cell{4, 4}};
  s.entities = {{EntityType::kMaturePlant, {2, 2}}};
  Rng rng(1);
  const auto o = advance(s, Action::kEast, Action::kNorth, cfg, rng);
  EXPECT_EQ(o.r1, 2.0);
  EXPECT_EQ(o.r2, 2.0);
  EXPECT_EQ(o.events.mature_pickups[0], 1);
  EXPECT_TRUE(s.entities.empty());
}

TEST(Harvest, YoungPickupPaysPicker) {
  auto cfg = config(GameKind::kHarvest);
  cfg.harvest.spawn_prob = 0;
  auto s = blank(GameKind::kHarvest);
  s.agents = {Cell{1, 2}, Cell{4, 4}};
  s.entities = {{EntityType::kYoungPlant, {4, 3}}};
  Rng rng(1);
  const auto o = advance(s, Action::kEast, Action::kNorth, cfg, rng);
  EXPECT_EQ(o.r1, 0.0);
  EXPECT_EQ(o.r2, 1.0);
}

TEST(Harvest, ExpectedPlantLifetimeIsTwenty) {
  for (double f : {0.25, 0.5, 0.75}) {
    HarvestConfig cfg;
    cfg.young_fraction = f;
    Rng rng(17);
    const int n = 100000;
    double total = 0;
    for (int k = 0; k < n; ++k) {
      Entity p{EntityType::kYoungPlant, {0, 0}};
      bool died = false;
      int life = 0;
      while (!died) {
        detail::advance_plant(p, cfg, rng, died);
        ++life;
      }
      total += life;
    }
    EXPECT_NEAR(total / n, 20.0, 0.5) << "f=" << f;
  }
}

TEST(Escalation, BreakCostsTheStayerMultiplierTimesStreak) {
  auto cfg = config(GameKind::kEscalation);
  cfg.escalation.penalty_multiplier = 0.8;
  auto s = blank(GameKind::kEscalation);
  s.streak = 4;
  s.agents = {Cell{2, 1}, Cell{2, 2}};
  s.entities = {{EntityType::kMarker, {2, 2}}};
  Rng rng(1);
  const auto o = advance(s, Action::kSouth, Action::kEast, cfg, rng);
  EXPECT_NEAR(o.r1, -3.2, 1e-12);
  EXPECT_EQ(o.r2, 0.0);
  EXPECT_TRUE(o.done);
  EXPECT_TRUE(o.events.streak_broken);
}

TEST(Escalation, ScriptedStreakThenBreak) {
  for (int t_len : {1, 3, 7}) {
    for (double m : {0.5, 1.5}) {
      auto cfg = config(GameKind::kEscalation);
      cfg.escalation.penalty_multiplier = m;
      Rng rng(static_cast<unsigned>(t_len));
      auto s = reset(cfg, rng);
      double r1 = 0, r2 = 0;
      for (int k = 0; k < t_len; ++k) {
        const Cell mk = s.entities.at(0).pos;
        const Cell from = mk.y > 0 ? Cell{mk.x, mk.y - 1} : Cell{mk.x, mk.y + 1};
        s.agents = {from, from};
        const auto o = advance(s, toward(from, mk), toward(from, mk), cfg, rng);
        r1 += o.r1;
        r2 += o.r2;
        ASSERT_FALSE(o.done);
        ASSERT_NO_THROW(check_invariants(s, cfg));
      }
      EXPECT_EQ(s.streak, t_len);
      const Cell mk = s.entities.at(0).pos;
      const Cell from = mk.y > 0 ? Cell{mk.x, mk.y - 1} : Cell{mk.x, mk.y + 1};
      s.agents = {from, mk};
      const Action away = mk.x > 0 ? Action::kWest : Action::kEast;
      const auto o = advance(s, toward(from, mk), away, cfg, rng);
      r1 += o.r1;
      r2 += o.r2;
      EXPECT_NEAR(r1, t_len - m * t_len, 1e-12);
      EXPECT_NEAR(r2, t_len, 1e-12);
      EXPECT_TRUE(o.done);
    }
  }
}

TEST(Escalation, NoPenaltyBeforeStreakAndCapEndsEpisode) {
  auto cfg = config(GameKind::kEscalation);
  cfg.escalation_cap = 3;
  Rng rng(5);
  auto s = reset(cfg, rng);
  int steps = 0;
  while (!s.terminated) {
    const Cell mk = s.entities.at(0).pos;
    s.agents = {Cell{mk.x == 0 ? 1 : 0, 0}, Cell{mk.x == 0 ? 1 : 0, 4}};
    if (s.agents[0] == mk) s.agents[0].y = 1;
    if (s.agents[1] == mk) s.agents[1].y = 3;
    const auto o = advance(s, Action::kNorth, Action::kSouth, cfg, rng);
    EXPECT_EQ(o.r1, 0.0);
    EXPECT_EQ(o.r2, 0.0);
    ++steps;
  }
  EXPECT_EQ(steps, 3);
}

TEST(Grid, WallsBlockMoves) {
  auto cfg = config(GameKind::kHarvest);
  cfg.harvest.spawn_prob = 0;
  auto s = blank(GameKind::kHarvest);
  s.agents = {Cell{0, 0}, Cell{4, 4}};
  Rng rng(1);
  advance(s, Action::kNorth, Action::kEast, cfg, rng);
  EXPECT_EQ(s.agents[0], (Cell{0, 0}));
  EXPECT_EQ(s.agents[1], (Cell{4, 4}));
  advance(s, Action::kWest, Action::kSouth, cfg, rng);
  EXPECT_EQ(s.agents[0], (Cell{0, 0}));
  EXPECT_EQ(s.agents[1], (Cell{4, 4}));
  advance(s, Action::kSouth, Action::kWest, cfg, rng);
  EXPECT_EQ(s.agents[0], (Cell{0, 1}));
  EXPECT_EQ(s.agents[1], (Cell{3, 4}));
}

TEST(Observation, StreakPlaneAndSymmetry) {
  auto cfg = config(GameKind::kEscalation);
  Rng rng(3);
  auto s = reset(cfg, rng);
  s.streak = 3;
  const auto o1 = observe(s, 1, 50.0);
  const auto o2 = observe(s, 2, 50.0);
  for (double v : o1.plane(kStreakPlane)) EXPECT_NEAR(v, 0.06, 1e-15);
  EXPECT_EQ(o1.plane(kSelfPlane), o2.plane(kPartnerPlane));
  EXPECT_EQ(o1.plane(kPartnerPlane), o2.plane(kSelfPlane));
  for (int c = kStagPlane; c < kNumPlanes; ++c) EXPECT_EQ(o1.plane(c), o2.plane(c));
  EXPECT_EQ(o1.at(kSelfPlane, s.agents[0].y, s.agents[0].x), 1.0);
  EXPECT_EQ(o1.at(kMarkerPlane, s.entities[0].pos.y, s.entities[0].pos.x), 1.0);
  EXPECT_THROW(observe(s, 0), std::invalid_argument);
}

TEST(Sampler, MeanAndDegenerate) {
  Rng rng(8);
  const int n = 100000;
  double sum = 0;
  for (int k = 0; k < n; ++k) {
    const int len = episode_length_sampler(250.0, rng);
    ASSERT_GE(len, 1);
    sum += len;
  }
  EXPECT_NEAR(sum / n, 250.0, 5.0);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(episode_length_sampler(1.0, rng), 1);
  EXPECT_THROW(episode_length_sampler(0.0, rng), std::invalid_argument);
}

TEST(Episodes, InvariantsHoldUnderRandomPlay) {
  for (auto kind : {GameKind::kStagHunt, GameKind::kHarvest, GameKind::kEscalation}) {
    auto cfg = config(kind);
    cfg.episode_mean = 60;
    Rng rng(99);
    for (int ep = 0; ep < 30; ++ep) {
      auto s = reset(cfg, rng);
      ASSERT_NO_THROW(check_invariants(s, cfg));
      while (!s.terminated) {
        advance(s, random_action(rng), random_action(rng), cfg, rng);
        ASSERT_NO_THROW(check_invariants(s, cfg)) << to_string(kind);
      }
      EXPECT_THROW(advance(s, Action::kNorth, Action::kNorth, cfg, rng), std::logic_error);
    }
  }
}

TEST(Episodes, InvariantCheckCatchesStacking) {
  auto cfg = config(GameKind::kStagHunt);
  auto s = blank(GameKind::kStagHunt);
  s.entities = {{EntityType::kStag, {2, 2}}, {EntityType::kYoungPlant, {2, 2}},
                {EntityType::kYoungPlant, {4, 4}}};
  EXPECT_THROW(check_invariants(s, cfg), std::logic_error);
}

TEST(Episodes, TrajectoryDumpIsDeterministic) {
  for (auto kind : {GameKind::kStagHunt, GameKind::kHarvest, GameKind::kEscalation}) {
    const auto cfg = config(kind);
    auto run = [&](unsigned seed) {
      Rng rng(seed);
      std::string dump;
      auto s = reset(cfg, rng);
      while (!s.terminated) {
        const Action a1 = random_action(rng), a2 = random_action(rng);
        const auto o = advance(s, a1, a2, cfg, rng);
        dump += trajectory_line(s, a1, a2, o) + "\n";
      }
      return dump;
    };
    EXPECT_EQ(run(4), run(4));
    EXPECT_NE(run(4), run(5));
  }
}

TEST(Config, Validation) {
  MarkovConfig c;
  c.harvest.young_fraction = 0.01;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = MarkovConfig{};
  c.escalation.penalty_multiplier = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(parse_game_kind("chess"), std::invalid_argument);
  EXPECT_EQ(parse_game_kind(to_string(GameKind::kHarvest)), GameKind::kHarvest);
}
