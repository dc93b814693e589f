// Strategic-form environments (the repeated Stag Hunt dyad, Stag Hunts on
// graphs, the weak-link game) and the repeated-play loop that trains one
// independent softmax learner per agent on any of them.
#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prosocial/learners.hpp"
#include "prosocial/matrix_games.hpp"

namespace prosocial {

/// Rewards (row, column) of one Stag Hunt round.
inline std::pair<double, double> dyad_step(const StagHuntPayoffs& p,
                                           std::size_t a1, std::size_t a2) {
  if (a1 > kForage || a2 > kForage) {
    throw std::invalid_argument("dyad_step: actions must be Hunt or Forage");
  }
  static constexpr auto pick = [](const StagHuntPayoffs& q, std::size_t me,
                                  std::size_t other) {
    if (me == kHunt) return other == kHunt ? q.h() : q.g();
    return other == kHunt ? q.c() : q.m();
  };
  return {pick(p, a1, a2), pick(p, a2, a1)};
}

/// Two-player repeated Stag Hunt.
class DyadEnv {
 public:
  explicit DyadEnv(StagHuntPayoffs p) : payoffs_(p) {}
  std::size_t num_agents() const { return 2; }
  std::size_t num_actions() const { return 2; }
  std::size_t cooperative_action() const { return kHunt; }
  const StagHuntPayoffs& payoffs() const { return payoffs_; }

  std::vector<double> step(std::span<const std::size_t> actions) const {
    if (actions.size() != 2) throw std::invalid_argument("DyadEnv: need 2 actions");
    const auto [r1, r2] = dyad_step(payoffs_, actions[0], actions[1]);
    return {r1, r2};
  }

 private:
  StagHuntPayoffs payoffs_;
};

enum class Aggregation { kAverage, kTotal };

using Adjacency = std::vector<std::vector<bool>>;

/// Named graph shapes. The star's center is agent 0.
enum class GraphKind { kStar, kComplete };

inline GraphKind parse_graph_kind(const std::string& s) {
  if (s == "star") return GraphKind::kStar;
  if (s == "complete") return GraphKind::kComplete;
  throw std::invalid_argument("unknown graph preset '" + s + "'");
}

inline const char* to_string(GraphKind k) {
  return k == GraphKind::kStar ? "star" : "complete";
}

struct GraphPreset {
  GraphKind kind = GraphKind::kStar;
  std::size_t n = 5;

  Adjacency adjacency() const {
    if (n < 2) throw std::invalid_argument("GraphPreset: need at least 2 nodes");
    Adjacency adj(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        adj[i][j] = kind == GraphKind::kComplete || i == 0 || j == 0;
      }
    }
    return adj;
  }
};

/// Every agent plays one action against all its neighbours and receives the
/// average (or total) of the resulting Stag Hunt payoffs.
class NetworkGame {
 public:
  NetworkGame(Adjacency adjacency, StagHuntPayoffs payoffs,
              Aggregation aggregation = Aggregation::kAverage)
      : adj_(std::move(adjacency)), payoffs_(payoffs), aggregation_(aggregation) {
    const std::size_t n = adj_.size();
    if (n < 2) throw std::invalid_argument("NetworkGame: need at least 2 agents");
    for (std::size_t i = 0; i < n; ++i) {
      if (adj_[i].size() != n) throw std::invalid_argument("NetworkGame: adjacency not square");
      if (adj_[i][i]) throw std::invalid_argument("NetworkGame: self-loop");
      bool any = false;
      for (std::size_t j = 0; j < n; ++j) {
        if (adj_[i][j] != adj_[j][i]) {
          throw std::invalid_argument("NetworkGame: adjacency not symmetric");
        }
        any = any || adj_[i][j];
      }
      if (!any) {
        throw std::invalid_argument("NetworkGame: agent " + std::to_string(i) +
                                    " has no neighbour");
      }
    }
  }

  NetworkGame(const GraphPreset& preset, StagHuntPayoffs payoffs,
              Aggregation aggregation = Aggregation::kAverage)
      : NetworkGame(preset.adjacency(), payoffs, aggregation) {}

  std::size_t num_agents() const { return adj_.size(); }
  std::size_t num_actions() const { return 2; }
  std::size_t cooperative_action() const { return kHunt; }
  const Adjacency& adjacency() const { return adj_; }
  const StagHuntPayoffs& payoffs() const { return payoffs_; }
  Aggregation aggregation() const { return aggregation_; }

  std::vector<double> step(std::span<const std::size_t> actions) const {
    return network_step(*this, actions);
  }

  friend std::vector<double> network_step(const NetworkGame& game,
                                          std::span<const std::size_t> actions) {
    const std::size_t n = game.num_agents();
    if (actions.size() != n) {
      throw std::invalid_argument("network_step: one action per agent required");
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      int degree = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!game.adj_[i][j]) continue;
        sum += dyad_step(game.payoffs_, actions[i], actions[j]).first;
        ++degree;
      }
      out[i] = game.aggregation_ == Aggregation::kAverage ? sum / degree : sum;
    }
    return out;
  }

 private:
  Adjacency adj_;
  StagHuntPayoffs payoffs_;
  Aggregation aggregation_;
};

/// Minimum-effort coordination game: reward_i = A * min_j e_j - e_i.
class WeakLinkGame {
 public:
  static constexpr int kMaxEffort = 5;

  explicit WeakLinkGame(double multiplier, std::size_t n_players = 5)
      : a_(multiplier), n_(n_players) {
    if (!(multiplier > 0.0)) {
      throw std::invalid_argument("WeakLinkGame: multiplier must be positive");
    }
    if (n_players < 2) throw std::invalid_argument("WeakLinkGame: need 2+ players");
  }

  std::size_t num_agents() const { return n_; }
  std::size_t num_actions() const { return kMaxEffort + 1; }
  std::size_t cooperative_action() const { return kMaxEffort; }
  double multiplier() const { return a_; }

  std::vector<double> step(std::span<const std::size_t> efforts) const {
    return weaklink_step(*this, efforts);
  }

  friend std::vector<double> weaklink_step(const WeakLinkGame& game,
                                           std::span<const std::size_t> efforts) {
    if (efforts.size() != game.n_) {
      throw std::invalid_argument("weaklink_step: one effort per player required");
    }
    std::size_t lo = WeakLinkGame::kMaxEffort;
    for (std::size_t e : efforts) {
      if (e > static_cast<std::size_t>(WeakLinkGame::kMaxEffort)) {
        throw std::invalid_argument("weaklink_step: effort out of range");
      }
      lo = std::min(lo, e);
    }
    std::vector<double> out(efforts.size());
    for (std::size_t i = 0; i < efforts.size(); ++i) {
      out[i] = game.a_ * static_cast<double>(lo) - static_cast<double>(efforts[i]);
    }
    return out;
  }

 private:
  double a_;
  std::size_t n_;
};

// ---------------------------------------------------------------------------
// Repeated play with independent learners.

struct LearnerConfig {
  double learning_rate = 0.01;
  double init_sigma = 1.0;
  bool baseline = false;
};

/// Per-round record of a repeated game: actions and environment (unmixed)
/// rewards, row-major [round][agent].
struct RepeatedPlayLog {
  std::size_t agents = 0;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;

  std::size_t rounds() const { return agents == 0 ? 0 : actions.size() / agents; }
  std::size_t action(std::size_t round, std::size_t agent) const {
    return actions[round * agents + agent];
  }
  double reward(std::size_t round, std::size_t agent) const {
    return rewards[round * agents + agent];
  }
};

template <typename Env>
concept StrategicEnv = requires(const Env& env, std::span<const std::size_t> a) {
  { env.num_agents() } -> std::convertible_to<std::size_t>;
  { env.num_actions() } -> std::convertible_to<std::size_t>;
  { env.cooperative_action() } -> std::convertible_to<std::size_t>;
  { env.step(a) } -> std::convertible_to<std::vector<double>>;
};

/// Trains one softmax learner per agent for `rounds` rounds. Every round is a
/// one-step episode: all agents sample, the environment pays out, each agent
/// mixes the payouts with its RewardMixer and takes one Adam step.
template <StrategicEnv Env>
RepeatedPlayLog run_repeated_play(const Env& env, std::span<const RewardMixer> mixers,
                                  const LearnerConfig& cfg, std::size_t rounds,
                                  Rng& rng) {
  const std::size_t n = env.num_agents();
  if (mixers.size() != n) {
    throw std::invalid_argument("run_repeated_play: one mixer per agent required");
  }
  std::vector<SoftmaxPolicy> policies;
  std::vector<AdamState> optimizers;
  std::vector<RunningBaseline> baselines(n);
  policies.reserve(n);
  optimizers.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    policies.push_back(SoftmaxPolicy::random(env.num_actions(), cfg.init_sigma, rng));
    optimizers.emplace_back(env.num_actions(), cfg.learning_rate);
  }
  const ReinforceOptions opt{1.0, cfg.baseline};

  RepeatedPlayLog log;
  log.agents = n;
  log.actions.reserve(rounds * n);
  log.rewards.reserve(rounds * n);
  std::vector<std::size_t> actions(n);
  std::vector<Episode> one(1, Episode(1));
  for (std::size_t t = 0; t < rounds; ++t) {
    for (std::size_t i = 0; i < n; ++i) actions[i] = sample_action(policies[i], rng).action;
    const std::vector<double> rewards = env.step(actions);
    const std::vector<double> mixed = mix_group_rewards(mixers, rewards);
    for (std::size_t i = 0; i < n; ++i) {
      one[0][0] = Step{actions[i], mixed[i]};
      reinforce_update(policies[i], one, optimizers[i], opt, &baselines[i]);
    }
    log.actions.insert(log.actions.end(), actions.begin(), actions.end());
    log.rewards.insert(log.rewards.end(), rewards.begin(), rewards.end());
  }
  return log;
}

}  // namespace prosocial
