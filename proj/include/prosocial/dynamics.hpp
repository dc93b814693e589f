// Belief-based best-response dynamics on 2x2 games and basin-of-attraction
// estimates on a grid of initial beliefs.
//
// The update is exponential smoothing toward the partner's observed action:
// each agent best-responds to its belief that the partner hunts, then moves
// that belief a fraction `step` of the way toward 1 (partner hunted) or 0.
// This is one concrete instance of "beliefs move in the direction of the
// observed play"; both agents act and update simultaneously.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "prosocial/matrix_games.hpp"

namespace prosocial {

class BeliefState {
 public:
  BeliefState(double p1, double p2) : p1_(p1), p2_(p2) {
    if (!(p1 >= 0.0 && p1 <= 1.0 && p2 >= 0.0 && p2 <= 1.0)) {
      throw std::invalid_argument("BeliefState: beliefs must lie in [0,1]");
    }
  }
  double p1() const { return p1_; }
  double p2() const { return p2_; }

  friend bool operator==(const BeliefState&, const BeliefState&) = default;

 private:
  double p1_;
  double p2_;
};

struct DynamicConfig {
  double step = 0.2;
  long max_iters = 10000;
  double tol = 1e-6;

  void validate() const {
    if (!(step > 0.0 && step <= 1.0)) {
      throw std::invalid_argument("DynamicConfig: step must lie in (0,1]");
    }
    if (max_iters <= 0) {
      throw std::invalid_argument("DynamicConfig: max_iters must be positive");
    }
    if (!(tol > 0.0)) throw std::invalid_argument("DynamicConfig: tol must be > 0");
  }
};

struct BasinEstimate {
  double fraction_hunt = 0.0;
  double fraction_forage = 0.0;
  double unresolved = 0.0;
  long resolution = 0;
};

namespace detail {

// Belief threshold at which a player with payoffs
//   [[hunt vs hunt, hunt vs forage], [forage vs hunt, forage vs forage]]
// weakly prefers Hunt. Returns a value outside [0,1] for the degenerate
// cases where one action is always (or never) preferred.
inline double hunt_threshold(double hh, double hf, double fh, double ff) {
  const double gain_if_hunt = hh - fh;
  const double gain_if_forage = ff - hf;
  const double denom = gain_if_hunt + gain_if_forage;
  if (denom > 0.0) return std::clamp(gain_if_forage / denom, 0.0, 1.0);
  // Preference does not increase with p; compare at the endpoints.
  if (gain_if_forage <= 0.0) return 0.0;   // Hunt never worse
  return 2.0;                              // Forage always (weakly) better
}

struct Thresholds {
  double row;
  double col;
};

inline Thresholds thresholds(const BimatrixGame& game) {
  if (game.n1() != 2 || game.n2() != 2) {
    throw std::invalid_argument("belief dynamics need a 2x2 game");
  }
  const Matrix& u1 = game.r1();
  const Matrix& u2 = game.r2();
  return {hunt_threshold(u1(0, 0), u1(0, 1), u1(1, 0), u1(1, 1)),
          hunt_threshold(u2(0, 0), u2(1, 0), u2(0, 1), u2(1, 1))};
}

inline void step_raw(const Thresholds& t, double lambda, double& p1,
                     double& p2) {
  const bool hunt1 = p1 >= t.row;
  const bool hunt2 = p2 >= t.col;
  p1 = (1.0 - lambda) * p1 + (hunt2 ? lambda : 0.0);
  p2 = (1.0 - lambda) * p2 + (hunt1 ? lambda : 0.0);
}

}  // namespace detail

/// One synchronous round: both players best-respond (ties go to Hunt) and
/// then smooth their beliefs toward the partner's action. `game` holds the
/// players' (already prosocially transformed) utilities.
inline BeliefState step_beliefs(const BimatrixGame& game, const BeliefState& b,
                                const DynamicConfig& cfg) {
  cfg.validate();
  const auto t = detail::thresholds(game);
  double p1 = b.p1();
  double p2 = b.p2();
  detail::step_raw(t, cfg.step, p1, p2);
  return BeliefState(std::clamp(p1, 0.0, 1.0), std::clamp(p2, 0.0, 1.0));
}

/// Fraction of the interior belief grid ((i+0.5)/R, (j+0.5)/R) absorbed into
/// (Hunt, Hunt), i.e. both beliefs within tol of 1.
inline BasinEstimate basin_fraction(const BimatrixGame& transformed,
                                    const DynamicConfig& cfg, long resolution) {
  cfg.validate();
  if (resolution <= 0) {
    throw std::invalid_argument("basin_fraction: resolution must be positive");
  }
  const auto t = detail::thresholds(transformed);
  long hunt = 0;
  long forage = 0;
  long open = 0;
  const double r = static_cast<double>(resolution);
  for (long i = 0; i < resolution; ++i) {
    for (long j = 0; j < resolution; ++j) {
      double p1 = (static_cast<double>(i) + 0.5) / r;
      double p2 = (static_cast<double>(j) + 0.5) / r;
      int label = 0;
      for (long it = 0; it < cfg.max_iters; ++it) {
        detail::step_raw(t, cfg.step, p1, p2);
        if (p1 >= 1.0 - cfg.tol && p2 >= 1.0 - cfg.tol) {
          label = 1;
          break;
        }
        if (p1 <= cfg.tol && p2 <= cfg.tol) {
          label = -1;
          break;
        }
      }
      if (label > 0) {
        ++hunt;
      } else if (label < 0) {
        ++forage;
      } else {
        ++open;
      }
    }
  }
  const double total = r * r;
  BasinEstimate out;
  out.resolution = resolution;
  out.fraction_hunt = static_cast<double>(hunt) / total;
  out.fraction_forage = static_cast<double>(forage) / total;
  out.unresolved = static_cast<double>(open) / total;
  return out;
}

inline BasinEstimate basin_fraction(const StagHuntPayoffs& p,
                                    ProsocialWeight alpha1,
                                    ProsocialWeight alpha2,
                                    const DynamicConfig& cfg, long resolution) {
  return basin_fraction(prosocial_transform(to_bimatrix(p), alpha1, alpha2), cfg,
                        resolution);
}

}  // namespace prosocial
