#include <gtest/gtest.h>

#include <random>

#include "prosocial/envs_strategic.hpp"

using namespace prosocial;

namespace {
const StagHuntPayoffs kDefault(2, 1, 1, -1);
}

TEST(Dyad, PayoffTable) {
  EXPECT_EQ(dyad_step(kDefault, kHunt, kHunt), std::make_pair(2.0, 2.0));
  EXPECT_EQ(dyad_step(kDefault, kHunt, kForage), std::make_pair(-1.0, 1.0));
  EXPECT_EQ(dyad_step(kDefault, kForage, kHunt), std::make_pair(1.0, -1.0));
  EXPECT_EQ(dyad_step(kDefault, kForage, kForage), std::make_pair(1.0, 1.0));
  EXPECT_THROW(dyad_step(kDefault, 2, 0), std::invalid_argument);
  const DyadEnv env(kDefault);
  EXPECT_THROW(env.step(std::vector<std::size_t>{0}), std::invalid_argument);
}

TEST(Network, StarExamples) {
  const NetworkGame star(GraphPreset{GraphKind::kStar, 5}, kDefault);
  auto r = star.step(std::vector<std::size_t>(5, kHunt));
  for (double v : r) EXPECT_EQ(v, 2.0);
  // Center hunts, leaves forage.
  r = star.step(std::vector<std::size_t>{kHunt, kForage, kForage, kForage, kForage});
  EXPECT_EQ(r[0], -1.0);
  for (int i = 1; i < 5; ++i) EXPECT_EQ(r[i], 1.0);
  // Center hunts with two of four leaves: average (2+2-1-1)/4.
  r = star.step(std::vector<std::size_t>{kHunt, kHunt, kHunt, kForage, kForage});
  EXPECT_DOUBLE_EQ(r[0], 0.5);
  const NetworkGame total(GraphPreset{GraphKind::kStar, 5}, kDefault, Aggregation::kTotal);
  EXPECT_DOUBLE_EQ(total.step(std::vector<std::size_t>{kHunt, kHunt, kHunt, kForage, kForage})[0], 2.0);
}

TEST(Network, TwoNodeGraphIsTheDyad) {
  const NetworkGame g(GraphPreset{GraphKind::kComplete, 2}, kDefault);
  const DyadEnv d(kDefault);
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 2; ++b) {
      const std::vector<std::size_t> acts{a, b};
      EXPECT_EQ(g.step(acts), d.step(acts));
    }
  }
}

TEST(Network, MatchesEdgeSumOracle) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + rng() % 6;
    Adjacency adj(n, std::vector<bool>(n, false));
    for (std::size_t i = 1; i < n; ++i) {
      const std::size_t j = rng() % i;  // spanning tree keeps every degree > 0
      adj[i][j] = adj[j][i] = true;
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng() % 3 == 0) adj[i][j] = adj[j][i] = true;
    std::vector<std::size_t> acts(n);
    for (auto& a : acts) a = rng() % 2;
    const NetworkGame avg(adj, kDefault), tot(adj, kDefault, Aggregation::kTotal);
    const auto ra = avg.step(acts), rt = tot.step(acts);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      int d = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!adj[i][j]) continue;
        ++d;
        if (acts[i] == kHunt) s += acts[j] == kHunt ? 2 : -1;
        else s += 1;
      }
      EXPECT_DOUBLE_EQ(rt[i], s);
      EXPECT_DOUBLE_EQ(ra[i], s / d);
    }
  }
}

TEST(Network, RejectsBadGraphs) {
  Adjacency iso(3, std::vector<bool>(3, false));
  iso[0][1] = iso[1][0] = true;
  EXPECT_THROW(NetworkGame(iso, kDefault), std::invalid_argument);
  Adjacency asym(2, std::vector<bool>(2, false));
  asym[0][1] = true;
  EXPECT_THROW(NetworkGame(asym, kDefault), std::invalid_argument);
  EXPECT_THROW(GraphPreset({GraphKind::kStar, 1}).adjacency(), std::invalid_argument);
}

TEST(WeakLink, Examples) {
  const WeakLinkGame g(3.0);
  auto r = g.step(std::vector<std::size_t>(5, 5));
  for (double v : r) EXPECT_EQ(v, 10.0);
  r = g.step(std::vector<std::size_t>{5, 5, 5, 5, 0});
  for (int i = 0; i < 4; ++i) EXPECT_EQ(r[i], -5.0);
  EXPECT_EQ(r[4], 0.0);
  EXPECT_THROW(g.step(std::vector<std::size_t>{6, 0, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(WeakLinkGame(0.0), std::invalid_argument);
}

TEST(WeakLink, AccountingIdentity) {
  // sum_i r_i = A * n * min(e) - sum_i e_i
  std::mt19937_64 rng(12);
  for (double a : {1.5, 3.0, 7.0}) {
    const WeakLinkGame g(a);
    for (int k = 0; k < 500; ++k) {
      std::vector<std::size_t> e(5);
      std::size_t lo = 5, sum = 0;
      for (auto& v : e) {
        v = rng() % 6;
        lo = std::min(lo, v);
        sum += v;
      }
      const auto r = g.step(e);
      double total = 0;
      for (double v : r) total += v;
      EXPECT_NEAR(total, a * 5 * lo - static_cast<double>(sum), 1e-12);
    }
  }
}

TEST(WeakLink, SymmetricEffortsAreNash) {
  for (double a : {1.5, 3.0}) {
    const WeakLinkGame g(a);
    for (std::size_t e = 0; e <= 5; ++e) {
      std::vector<std::size_t> prof(5, e);
      const double base = g.step(prof)[0];
      for (std::size_t dev = 0; dev <= 5; ++dev) {
        prof[0] = dev;
        EXPECT_LE(g.step(prof)[0], base);
      }
    }
  }
}

TEST(RepeatedPlay, LogShapeAndDeterminism) {
  const WeakLinkGame g(3.0);
  const std::vector<RewardMixer> mixers(5, RewardMixer{ProsocialWeight(0.5)});
  Rng a(7), b(7);
  const auto la = run_repeated_play(g, mixers, LearnerConfig{}, 30, a);
  const auto lb = run_repeated_play(g, mixers, LearnerConfig{}, 30, b);
  EXPECT_EQ(la.rounds(), 30u);
  EXPECT_EQ(la.actions, lb.actions);
  EXPECT_EQ(la.rewards, lb.rewards);
  for (std::size_t t = 0; t < la.rounds(); ++t) {
    std::vector<std::size_t> acts(5);
    for (std::size_t i = 0; i < 5; ++i) acts[i] = la.action(t, i);
    const auto r = g.step(acts);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(la.reward(t, i), r[i]);
  }
  const std::vector<RewardMixer> four(4, RewardMixer{});
  EXPECT_THROW(run_repeated_play(g, four, LearnerConfig{}, 1, a), std::invalid_argument);
}
