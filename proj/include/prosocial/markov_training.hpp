// Independent Reinforce learners on the grid games. Each batch runs
// `batch_episodes` environments in lockstep so the two policy networks see
// one forward pass per time step; every agent then takes one RMSProp step on
// its own (prosocially mixed) returns.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "prosocial/envs_markov.hpp"
#include "prosocial/learners.hpp"
#include "prosocial/neural.hpp"

namespace prosocial::markov {

struct MarkovTrainConfig {
  MarkovConfig env;
  nn::TrainSpec train;
  int base_channels = 16;
  double rmsprop_decay = 0.99;
  double rmsprop_eps = 1e-8;

  nn::NetConfig net() const { return {kNumPlanes, env.size, base_channels, kNumActions}; }
};

/// Default entropy weight per game: only the Markov Stag Hunt is regularized.
inline double default_entropy_weight(GameKind k) { return k == GameKind::kStagHunt ? 0.05 : 0.0; }

/// Per-episode summary. Rewards are environment rewards, before mixing.
/// The coordination rate of a block is sum(coord_hits) / sum(coord_chances):
///   Stag Hunt   stag captures / (captures + plant pickups)
///   Harvest     mature pickups / all pickups
///   Escalation  joint-marker steps / steps
struct EpisodeSummary {
  std::array<double, 2> returns{};
  int length = 0;
  double coord_hits = 0.0;
  double coord_chances = 0.0;
  int final_streak = 0;
};

namespace detail {

inline void tally(GameKind kind, const StepEvents& ev, EpisodeSummary& s) {
  switch (kind) {
    case GameKind::kStagHunt: {
      const int plants = ev.plant_pickups[0] + ev.plant_pickups[1];
      s.coord_hits += ev.stag_captures;
      s.coord_chances += ev.stag_captures + plants;
      break;
    }
    case GameKind::kHarvest: {
      const int mature = ev.mature_pickups[0] + ev.mature_pickups[1] > 0 ? 1 : 0;
      const int young = ev.plant_pickups[0] + ev.plant_pickups[1];
      s.coord_hits += mature;
      s.coord_chances += mature + young;
      break;
    }
    case GameKind::kEscalation:
      s.coord_hits += ev.joint_marker ? 1 : 0;
      s.coord_chances += 1;
      break;
  }
}

template <typename T>
int sample_from_logits(const nn::Mat<T>& logits, Eigen::Index col, Rng& rng) {
  std::array<double, kNumActions> l{};
  for (int k = 0; k < kNumActions; ++k) {
    l[k] = static_cast<double>(logits(k, col));
    if (!std::isfinite(l[k])) throw std::runtime_error("markov training: non-finite logit");
  }
  const auto p = softmax(l);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  for (int k = 0; k < kNumActions; ++k) {
    acc += p[k];
    if (x < acc) return k;
  }
  return kNumActions - 1;
}

}  // namespace detail

/// Two networks and their optimizers, trained together.
template <typename T>
class MarkovTrainer {
 public:
  MarkovTrainer(const MarkovTrainConfig& cfg, std::array<RewardMixer, 2> mixers, Rng& rng)
      : cfg_(cfg), mixers_(mixers),
        nets_{nn::ConvPolicyNet<T>(cfg.net(), rng), nn::ConvPolicyNet<T>(cfg.net(), rng)},
        opts_{nn::RMSPropState<T>(nets_[0], cfg.train.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_eps),
              nn::RMSPropState<T>(nets_[1], cfg.train.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_eps)} {
    cfg_.env.validate();
    cfg_.train.validate();
  }

  nn::ConvPolicyNet<T>& net(int agent) { return nets_.at(agent); }

  /// Plays one batch of episodes and updates both agents. Returns the
  /// episodes' summaries in environment order.
  std::vector<EpisodeSummary> train_batch(Rng& rng, int episodes) {
    if (episodes < 1) throw std::invalid_argument("train_batch: need at least one episode");
    const int obs_size = nets_[0].observation_size();
    std::vector<GridState> envs;
    envs.reserve(episodes);
    for (int e = 0; e < episodes; ++e) envs.push_back(reset(cfg_.env, rng));
    std::array<std::vector<nn::EpisodeBuffer<T>>, 2> buf;
    for (auto& b : buf) b.assign(episodes, {});
    std::vector<EpisodeSummary> summary(episodes);

    std::vector<int> active;
    std::array<std::vector<T>, 2> obs;
    while (true) {
      active.clear();
      for (int e = 0; e < episodes; ++e) {
        if (!envs[e].terminated) active.push_back(e);
      }
      if (active.empty()) break;
      const int n = static_cast<int>(active.size());
      std::array<nn::Mat<T>, 2> logits;
      for (int a = 0; a < 2; ++a) {
        obs[a].resize(static_cast<std::size_t>(n) * obs_size);
        for (int k = 0; k < n; ++k) {
          encode_observation(envs[active[k]], a + 1, cfg_.env.streak_norm,
                             obs[a].data() + static_cast<std::size_t>(k) * obs_size);
        }
        logits[a] = nets_[a].forward(obs[a], n, nn::Mode::kEval);
      }
      for (int k = 0; k < n; ++k) {
        const int e = active[k];
        std::array<int, 2> act{};
        for (int a = 0; a < 2; ++a) act[a] = detail::sample_from_logits(logits[a], k, rng);
        const StepOutcome o = advance(envs[e], static_cast<Action>(act[0]), static_cast<Action>(act[1]),
                                      cfg_.env, rng);
        const std::array<double, 2> r{o.r1, o.r2};
        for (int a = 0; a < 2; ++a) {
          auto& b = buf[a][e];
          const T* src = obs[a].data() + static_cast<std::size_t>(k) * obs_size;
          b.observations.insert(b.observations.end(), src, src + obs_size);
          b.actions.push_back(act[a]);
          const double other = r[1 - a];
          b.rewards.push_back(mix_rewards(mixers_[a], r[a], std::span<const double>(&other, 1)));
          summary[e].returns[a] += r[a];
        }
        ++summary[e].length;
        detail::tally(cfg_.env.kind, o.events, summary[e]);
        if (envs[e].terminated) summary[e].final_streak = envs[e].streak;
      }
    }
    for (int a = 0; a < 2; ++a) {
      last_stats_[a] = nn::reinforce_batch_update<T>(nets_[a], buf[a], cfg_.train, opts_[a], &baselines_[a]);
    }
    return summary;
  }

  /// Trains for cfg.train.total_episodes episodes, calling `on_batch` after
  /// every update.
  std::vector<EpisodeSummary> train(Rng& rng,
                                    const std::function<void(long done)>& on_batch = {}) {
    std::vector<EpisodeSummary> all;
    all.reserve(static_cast<std::size_t>(cfg_.train.total_episodes));
    long done = 0;
    while (done < cfg_.train.total_episodes) {
      const int b = static_cast<int>(std::min<long>(cfg_.train.batch_episodes, cfg_.train.total_episodes - done));
      auto s = train_batch(rng, b);
      all.insert(all.end(), s.begin(), s.end());
      done += b;
      if (on_batch) on_batch(done);
    }
    return all;
  }

  const nn::UpdateStats& last_update(int agent) const { return last_stats_.at(agent); }

 private:
  MarkovTrainConfig cfg_;
  std::array<RewardMixer, 2> mixers_;
  std::array<nn::ConvPolicyNet<T>, 2> nets_;
  std::array<nn::RMSPropState<T>, 2> opts_;
  std::array<RunningBaseline, 2> baselines_{};
  std::array<nn::UpdateStats, 2> last_stats_{};
};

}  // namespace prosocial::markov
