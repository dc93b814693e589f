// Independent reactive learners for strategic-form games: tabular softmax
// policies trained by Reinforce with Adam, and the prosocial reward mixer.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prosocial/matrix_games.hpp"

namespace prosocial {

using Rng = std::mt19937_64;

enum class MixMode { kAverage, kSum };

inline const char* to_string(MixMode mode) {
  return mode == MixMode::kAverage ? "average" : "sum";
}

inline MixMode parse_mix_mode(const std::string& s) {
  if (s == "average") return MixMode::kAverage;
  if (s == "sum") return MixMode::kSum;
  throw std::invalid_argument("unknown mixer mode '" + s + "'");
}

struct RewardMixer {
  ProsocialWeight alpha;
  MixMode mode = MixMode::kAverage;
};

/// (1 - alpha) * own + alpha * aggregate(others), aggregate = mean or sum.
inline double mix_rewards(const RewardMixer& mixer, double own,
                          std::span<const double> others) {
  if (others.empty()) {
    throw std::invalid_argument("mix_rewards: others must be non-empty");
  }
  const double a = mixer.alpha.value();
  if (a == 0.0) return own;
  double agg = std::accumulate(others.begin(), others.end(), 0.0);
  if (mixer.mode == MixMode::kAverage) agg /= static_cast<double>(others.size());
  return (1.0 - a) * own + a * agg;
}

/// Mixed learning signal for every agent of a group: agent i combines its own
/// reward with all the other agents' rewards.
inline std::vector<double> mix_group_rewards(std::span<const RewardMixer> mixers,
                                             std::span<const double> rewards) {
  if (mixers.size() != rewards.size() || rewards.size() < 2) {
    throw std::invalid_argument("mix_group_rewards: size mismatch");
  }
  std::vector<double> out(rewards.size());
  std::vector<double> others(rewards.size() - 1);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < rewards.size(); ++j) {
      if (j != i) others[k++] = rewards[j];
    }
    out[i] = mix_rewards(mixers[i], rewards[i], others);
  }
  return out;
}

/// Numerically stable softmax of a logit vector.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

class SoftmaxPolicy {
 public:
  explicit SoftmaxPolicy(std::size_t n_actions)
      : logits_(n_actions, 0.0) {
    if (n_actions == 0) throw std::invalid_argument("SoftmaxPolicy: no actions");
  }
  explicit SoftmaxPolicy(std::vector<double> logits) : logits_(std::move(logits)) {
    if (logits_.empty()) throw std::invalid_argument("SoftmaxPolicy: no actions");
  }

  /// i.i.d. N(0, sigma^2) logits.
  static SoftmaxPolicy random(std::size_t n_actions, double sigma, Rng& rng) {
    std::normal_distribution<double> normal(0.0, sigma);
    std::vector<double> logits(n_actions);
    for (auto& l : logits) l = sigma > 0.0 ? normal(rng) : 0.0;
    return SoftmaxPolicy(std::move(logits));
  }

  std::size_t n_actions() const { return logits_.size(); }
  std::span<const double> logits() const { return logits_; }
  std::span<double> mutable_logits() { return logits_; }

  std::vector<double> action_probabilities() const { return softmax(logits_); }

  /// Gradient of log pi(a) with respect to the logits: one_hot(a) - pi.
  std::vector<double> grad_log_prob(std::size_t action) const {
    auto g = action_probabilities();
    for (auto& v : g) v = -v;
    g.at(action) += 1.0;
    return g;
  }

  double log_prob(std::size_t action) const {
    const double mx = *std::max_element(logits_.begin(), logits_.end());
    double z = 0.0;
    for (double l : logits_) z += std::exp(l - mx);
    return logits_.at(action) - mx - std::log(z);
  }

 private:
  std::vector<double> logits_;
};

struct SampledAction {
  std::size_t action = 0;
  double log_prob = 0.0;
};

inline SampledAction sample_action(const SoftmaxPolicy& policy, Rng& rng) {
  for (double l : policy.logits()) {
    if (!std::isfinite(l)) {
      throw std::runtime_error("sample_action: non-finite logit (training diverged)");
    }
  }
  const auto probs = policy.action_probabilities();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  std::size_t a = probs.size() - 1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) {
      a = i;
      break;
    }
  }
  return {a, policy.log_prob(a)};
}

class AdamState {
 public:
  AdamState(std::size_t n_params, double lr, double beta1 = 0.9,
            double beta2 = 0.999, double eps = 1e-8)
      : m_(n_params, 0.0), v_(n_params, 0.0), lr_(lr), beta1_(beta1),
        beta2_(beta2), eps_(eps) {
    if (!(lr >= 0.0)) throw std::invalid_argument("Adam: negative learning rate");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
      throw std::invalid_argument("Adam: betas must lie in [0,1)");
    }
  }

  /// Gradient-descent step on `params` using `grad` (of the loss).
  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
      throw std::invalid_argument("Adam: parameter shape mismatch");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }
  std::uint64_t timestep() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
};

struct Step {
  std::size_t action = 0;
  double reward = 0.0;  // already mixed
};

using Episode = std::vector<Step>;

struct ReinforceOptions {
  double discount = 1.0;
  bool baseline = false;
};

/// Exponential running mean of observed returns, subtracted from G_t when
/// the baseline option is on.
struct RunningBaseline {
  double value = 0.0;
  double rate = 0.01;
  bool primed = false;

  void observe(double mean_return) {
    if (!primed) {
      value = mean_return;
      primed = true;
    } else {
      value += rate * (mean_return - value);
    }
  }
};

/// Discounted return-to-go G_t for every step.
inline std::vector<double> discounted_returns(std::span<const double> rewards,
                                              double discount) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    acc = rewards[k] + discount * acc;
    g[k] = acc;
  }
  return g;
}

/// Ascent direction of the Reinforce surrogate
///   J = mean over episodes of sum_t log pi(a_t) * (G_t - b).
inline std::vector<double> reinforce_gradient(const SoftmaxPolicy& policy,
                                              std::span<const Episode> batch,
                                              double discount, double b = 0.0) {
  if (batch.empty()) throw std::invalid_argument("reinforce: empty batch");
  const auto probs = policy.action_probabilities();
  std::vector<double> grad(policy.n_actions(), 0.0);
  std::vector<double> rewards;
  for (const auto& ep : batch) {
    rewards.resize(ep.size());
    for (std::size_t t = 0; t < ep.size(); ++t) rewards[t] = ep[t].reward;
    const auto returns = discounted_returns(rewards, discount);
    for (std::size_t t = 0; t < ep.size(); ++t) {
      const double w = returns[t] - b;
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= w * probs[k];
      grad.at(ep[t].action) += w;
    }
  }
  for (auto& g : grad) g /= static_cast<double>(batch.size());
  return grad;
}

/// One Adam step that increases the Reinforce surrogate. With
/// `opt.baseline` set, `baseline` is subtracted from the returns and then
/// updated with this batch's mean return.
inline void reinforce_update(SoftmaxPolicy& policy, std::span<const Episode> batch,
                             AdamState& adam, const ReinforceOptions& opt = {},
                             RunningBaseline* baseline = nullptr) {
  const bool use_baseline = opt.baseline && baseline != nullptr;
  const double b = use_baseline ? baseline->value : 0.0;
  auto grad = reinforce_gradient(policy, batch, opt.discount, b);
  for (auto& g : grad) {
    if (!std::isfinite(g)) throw std::runtime_error("reinforce: non-finite gradient");
    g = -g;
  }
  adam.step(policy.mutable_logits(), grad);
  if (use_baseline) {
    double sum = 0.0;
    std::size_t n = 0;
    std::vector<double> rewards;
    for (const auto& ep : batch) {
      rewards.resize(ep.size());
      for (std::size_t t = 0; t < ep.size(); ++t) rewards[t] = ep[t].reward;
      for (double g : discounted_returns(rewards, opt.discount)) sum += g;
      n += ep.size();
    }
    if (n > 0) baseline->observe(sum / static_cast<double>(n));
  }
}

}  // namespace prosocial
