// Two-agent grid-world Markov games with Stag Hunt structure: Markov Stag
// Hunt, Harvest and Coordinated Escalation.
//
// Every step applies, in order: (1) simultaneous agent moves (moves off the
// board are no-ops, agents may share a cell), (2) the game's entity dynamics
// and rewards, (3) respawn of consumed entities, (4) the termination check.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace prosocial::markov {

using Rng = std::mt19937_64;

enum class GameKind { kStagHunt, kHarvest, kEscalation };

inline const char* to_string(GameKind k) {
  switch (k) {
    case GameKind::kStagHunt: return "staghunt";
    case GameKind::kHarvest: return "harvest";
    case GameKind::kEscalation: return "escalation";
  }
  return "?";
}

inline GameKind parse_game_kind(const std::string& s) {
  if (s == "staghunt") return GameKind::kStagHunt;
  if (s == "harvest") return GameKind::kHarvest;
  if (s == "escalation") return GameKind::kEscalation;
  throw std::invalid_argument("unknown Markov game '" + s + "'");
}

enum class Action : int { kNorth = 0, kSouth = 1, kEast = 2, kWest = 3 };
inline constexpr int kNumActions = 4;

inline char action_letter(Action a) { return "NSEW"[static_cast<int>(a)]; }

struct Cell {
  int x = 0;  // column
  int y = 0;  // row, North is y - 1
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

enum class EntityType : int { kStag, kYoungPlant, kMaturePlant, kMarker };

struct Entity {
  EntityType type;
  Cell pos;
  friend bool operator==(const Entity&, const Entity&) = default;
};

struct StagHuntGridConfig {
  double gore_penalty = 2.0;  // points lost, applied as -gore_penalty
  double stag_reward = 5.0;
  double plant_reward = 1.0;
};

struct HarvestConfig {
  static constexpr double kExpectedLifetime = 20.0;
  double young_fraction = 0.5;
  double spawn_prob = 0.5;
  int max_plants = 4;
  double young_reward = 1.0;
  double mature_reward = 2.0;  // paid to both agents

  double r_mature() const { return 1.0 / (kExpectedLifetime * young_fraction); }
  double r_death() const { return 1.0 / (kExpectedLifetime * (1.0 - young_fraction)); }
};

struct EscalationConfig {
  double penalty_multiplier = 1.0;
  double step_reward = 1.0;
};

struct MarkovConfig {
  GameKind kind = GameKind::kStagHunt;
  int size = 5;
  double episode_mean = 250.0;  // Stag Hunt and Harvest horizon mean
  int escalation_cap = 50;
  double streak_norm = 50.0;    // T_max for the streak plane
  StagHuntGridConfig stag_hunt;
  HarvestConfig harvest;
  EscalationConfig escalation;

  void validate() const {
    if (size < 2) throw std::invalid_argument("MarkovConfig: board must be at least 2x2");
    if (!(episode_mean >= 1.0)) throw std::invalid_argument("MarkovConfig: episode_mean must be >= 1");
    if (escalation_cap < 1) throw std::invalid_argument("MarkovConfig: escalation_cap must be >= 1");
    if (!(streak_norm > 0.0)) throw std::invalid_argument("MarkovConfig: streak_norm must be > 0");
    if (!(stag_hunt.gore_penalty >= 0.0)) {
      throw std::invalid_argument("StagHuntGridConfig: gore_penalty must be >= 0");
    }
    const double f = harvest.young_fraction;
    // Both transition probabilities must be valid: f in [0.05, 0.95].
    if (!(harvest.r_mature() <= 1.0 && harvest.r_death() <= 1.0 && f > 0.0 && f < 1.0)) {
      throw std::invalid_argument("HarvestConfig: young_fraction must lie in [0.05, 0.95]");
    }
    if (!(harvest.spawn_prob >= 0.0 && harvest.spawn_prob <= 1.0)) {
      throw std::invalid_argument("HarvestConfig: spawn_prob must lie in [0,1]");
    }
    if (harvest.max_plants < 1 || harvest.max_plants > size * size - 2) {
      throw std::invalid_argument("HarvestConfig: max_plants out of range");
    }
    if (!(escalation.penalty_multiplier > 0.0)) {
      throw std::invalid_argument("EscalationConfig: penalty_multiplier must be > 0");
    }
  }
};

struct GridState {
  GameKind kind = GameKind::kStagHunt;
  int width = 5;
  int height = 5;
  std::array<Cell, 2> agents{};
  std::vector<Entity> entities;
  int streak = 0;
  int step_count = 0;
  int horizon = 1;
  bool terminated = false;

  int count(EntityType t) const {
    return static_cast<int>(std::count_if(entities.begin(), entities.end(),
                                          [t](const Entity& e) { return e.type == t; }));
  }
  bool in_bounds(Cell c) const { return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height; }

  friend bool operator==(const GridState&, const GridState&) = default;
};

/// Per-step event counts, used for reward accounting and coordination rates.
struct StepEvents {
  std::array<int, 2> plant_pickups{};   // Stag Hunt plants and young Harvest plants
  std::array<int, 2> mature_pickups{};  // Harvest mature plants, by the agent on it
  std::array<int, 2> gored{};
  int stag_captures = 0;
  bool joint_marker = false;
  bool streak_broken = false;
};

struct StepOutcome {
  double r1 = 0.0;
  double r2 = 0.0;
  bool done = false;
  StepEvents events;
};

struct Transition {
  GridState next;
  double r1 = 0.0;
  double r2 = 0.0;
  bool done = false;
  StepEvents events;
};

/// Geometric horizon with continuation probability 1 - 1/mean (mean `mean`).
inline int episode_length_sampler(double mean, Rng& rng) {
  if (!(mean > 0.0)) throw std::invalid_argument("episode_length_sampler: mean must be > 0");
  if (mean <= 1.0) return 1;
  std::geometric_distribution<int> geo(1.0 / mean);
  return geo(rng) + 1;
}

namespace detail {

inline Cell moved(const GridState& s, Cell c, Action a) {
  Cell n = c;
  switch (a) {
    case Action::kNorth: --n.y; break;
    case Action::kSouth: ++n.y; break;
    case Action::kEast: ++n.x; break;
    case Action::kWest: --n.x; break;
  }
  return s.in_bounds(n) ? n : c;
}

inline bool occupied(const GridState& s, Cell c) {
  if (s.agents[0] == c || s.agents[1] == c) return true;
  return std::any_of(s.entities.begin(), s.entities.end(),
                     [c](const Entity& e) { return e.pos == c; });
}

/// Uniformly random cell holding neither an agent nor an entity.
inline std::optional<Cell> random_empty_cell(const GridState& s, Rng& rng) {
  std::vector<Cell> free;
  free.reserve(static_cast<std::size_t>(s.width * s.height));
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (!occupied(s, {x, y})) free.push_back({x, y});
    }
  }
  if (free.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
  return free[pick(rng)];
}

inline Cell must_place(const GridState& s, Rng& rng) {
  auto c = random_empty_cell(s, rng);
  if (!c) throw std::logic_error("grid full: cannot place entity");
  return *c;
}

inline bool bernoulli(double p, Rng& rng) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < p;
}

// Picks the crediting agent when both stand on a single-picker plant.
inline int tie_picker(Rng& rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  return coin(rng);
}

/// One step of the stag toward the closer agent (ties toward agent 1), the
/// horizontal axis first. Cells holding a plant block the stag.
inline void move_stag(GridState& s, Entity& stag) {
  const int d0 = manhattan(stag.pos, s.agents[0]);
  const int d1 = manhattan(stag.pos, s.agents[1]);
  const Cell target = d1 < d0 ? s.agents[1] : s.agents[0];
  if (stag.pos == target) return;
  auto blocked = [&s](Cell c) {
    return std::any_of(s.entities.begin(), s.entities.end(), [c](const Entity& e) {
      return e.pos == c && e.type != EntityType::kStag;
    });
  };
  const int dx = (target.x > stag.pos.x) - (target.x < stag.pos.x);
  const int dy = (target.y > stag.pos.y) - (target.y < stag.pos.y);
  if (dx != 0) {
    const Cell h{stag.pos.x + dx, stag.pos.y};
    if (!blocked(h)) {
      stag.pos = h;
      return;
    }
  }
  if (dy != 0) {
    const Cell v{stag.pos.x, stag.pos.y + dy};
    if (!blocked(v)) stag.pos = v;
  }
}

inline void advance_plant(Entity& plant, const HarvestConfig& cfg, Rng& rng, bool& died) {
  died = false;
  if (plant.type == EntityType::kMaturePlant) {
    died = bernoulli(cfg.r_death(), rng);
  } else if (bernoulli(cfg.r_mature(), rng)) {
    plant.type = EntityType::kMaturePlant;
  }
}

inline void step_stag_hunt(GridState& s, const StagHuntGridConfig& cfg, Rng& rng,
                           StepOutcome& out) {
  std::array<double, 2> r{0.0, 0.0};
  std::vector<EntityType> respawn;
  // Plants.
  for (std::size_t k = 0; k < s.entities.size();) {
    Entity& e = s.entities[k];
    if (e.type != EntityType::kYoungPlant) {
      ++k;
      continue;
    }
    const bool on0 = s.agents[0] == e.pos;
    const bool on1 = s.agents[1] == e.pos;
    if (!on0 && !on1) {
      ++k;
      continue;
    }
    const int who = (on0 && on1) ? tie_picker(rng) : (on0 ? 0 : 1);
    r[who] += cfg.plant_reward;
    ++out.events.plant_pickups[who];
    respawn.push_back(e.type);
    s.entities.erase(s.entities.begin() + static_cast<long>(k));
  }
  // Stag.
  for (std::size_t k = 0; k < s.entities.size(); ++k) {
    if (s.entities[k].type != EntityType::kStag) continue;
    const bool on0 = s.agents[0] == s.entities[k].pos;
    const bool on1 = s.agents[1] == s.entities[k].pos;
    if (on0 && on1) {
      r[0] += cfg.stag_reward;
      r[1] += cfg.stag_reward;
      ++out.events.stag_captures;
      respawn.push_back(EntityType::kStag);
      s.entities.erase(s.entities.begin() + static_cast<long>(k));
    } else if (on0 || on1) {
      const int who = on0 ? 0 : 1;
      r[who] -= cfg.gore_penalty;
      ++out.events.gored[who];
    }
    break;
  }
  for (EntityType t : respawn) s.entities.push_back({t, must_place(s, rng)});
  for (auto& e : s.entities) {
    if (e.type == EntityType::kStag) move_stag(s, e);
  }
  out.r1 = r[0];
  out.r2 = r[1];
}

inline void step_harvest(GridState& s, const HarvestConfig& cfg, Rng& rng, StepOutcome& out) {
  std::array<double, 2> r{0.0, 0.0};
  for (std::size_t k = 0; k < s.entities.size();) {
    const Entity& e = s.entities[k];
    const bool on0 = s.agents[0] == e.pos;
    const bool on1 = s.agents[1] == e.pos;
    if (!on0 && !on1) {
      ++k;
      continue;
    }
    if (e.type == EntityType::kMaturePlant) {
      r[0] += cfg.mature_reward;
      r[1] += cfg.mature_reward;
      if (on0) ++out.events.mature_pickups[0];
      if (on1) ++out.events.mature_pickups[1];
    } else {
      const int who = (on0 && on1) ? tie_picker(rng) : (on0 ? 0 : 1);
      r[who] += cfg.young_reward;
      ++out.events.plant_pickups[who];
    }
    s.entities.erase(s.entities.begin() + static_cast<long>(k));
  }
  for (std::size_t k = 0; k < s.entities.size();) {
    bool died = false;
    advance_plant(s.entities[k], cfg, rng, died);
    if (died) {
      s.entities.erase(s.entities.begin() + static_cast<long>(k));
    } else {
      ++k;
    }
  }
  if (s.count(EntityType::kYoungPlant) + s.count(EntityType::kMaturePlant) < cfg.max_plants &&
      bernoulli(cfg.spawn_prob, rng)) {
    if (auto c = random_empty_cell(s, rng)) s.entities.push_back({EntityType::kYoungPlant, *c});
  }
  out.r1 = r[0];
  out.r2 = r[1];
}

inline Cell random_neighbour(const GridState& s, Cell c, Rng& rng) {
  std::array<Cell, 4> opts{};
  int n = 0;
  for (Cell d : {Cell{0, -1}, Cell{0, 1}, Cell{1, 0}, Cell{-1, 0}}) {
    const Cell q{c.x + d.x, c.y + d.y};
    if (s.in_bounds(q)) opts[n++] = q;
  }
  std::uniform_int_distribution<int> pick(0, n - 1);
  return opts[pick(rng)];
}

inline void step_escalation(GridState& s, const EscalationConfig& cfg, Rng& rng,
                            StepOutcome& out) {
  auto it = std::find_if(s.entities.begin(), s.entities.end(),
                         [](const Entity& e) { return e.type == EntityType::kMarker; });
  if (it == s.entities.end()) throw std::logic_error("escalation: no active marker");
  const bool on0 = s.agents[0] == it->pos;
  const bool on1 = s.agents[1] == it->pos;
  if (on0 && on1) {
    out.r1 = cfg.step_reward;
    out.r2 = cfg.step_reward;
    ++s.streak;
    out.events.joint_marker = true;
    it->pos = random_neighbour(s, it->pos, rng);
    return;
  }
  if (s.streak == 0) return;  // coordination has not begun
  // Streak broken: whoever is still on the marker is paid the penalty. If
  // both stepped off, each is the partner of a breaker and both pay.
  const double penalty = -cfg.penalty_multiplier * static_cast<double>(s.streak);
  out.r1 = (on0 || !on1) ? penalty : 0.0;
  out.r2 = (on1 || !on0) ? penalty : 0.0;
  out.events.streak_broken = true;
  s.terminated = true;
  s.entities.erase(it);
}

}  // namespace detail

/// Fresh episode: agents and entities on distinct uniformly random cells.
inline GridState reset(const MarkovConfig& cfg, Rng& rng) {
  cfg.validate();
  GridState s;
  s.kind = cfg.kind;
  s.width = cfg.size;
  s.height = cfg.size;
  // Agents first, on distinct cells.
  s.agents[0] = {-1, -1};
  s.agents[1] = {-1, -1};
  s.agents[0] = detail::must_place(s, rng);
  s.agents[1] = detail::must_place(s, rng);
  switch (cfg.kind) {
    case GameKind::kStagHunt:
      s.entities.push_back({EntityType::kStag, detail::must_place(s, rng)});
      for (int k = 0; k < 2; ++k) {
        s.entities.push_back({EntityType::kYoungPlant, detail::must_place(s, rng)});
      }
      s.horizon = episode_length_sampler(cfg.episode_mean, rng);
      break;
    case GameKind::kHarvest:
      s.horizon = episode_length_sampler(cfg.episode_mean, rng);
      break;
    case GameKind::kEscalation:
      s.entities.push_back({EntityType::kMarker, detail::must_place(s, rng)});
      s.horizon = cfg.escalation_cap;
      break;
  }
  return s;
}

/// Advances `s` in place.
inline StepOutcome advance(GridState& s, Action a1, Action a2, const MarkovConfig& cfg,
                           Rng& rng) {
  if (s.terminated) throw std::logic_error("step: episode already terminated");
  if (s.kind != cfg.kind) throw std::invalid_argument("step: config is for another game");
  s.agents[0] = detail::moved(s, s.agents[0], a1);
  s.agents[1] = detail::moved(s, s.agents[1], a2);
  StepOutcome out;
  switch (s.kind) {
    case GameKind::kStagHunt: detail::step_stag_hunt(s, cfg.stag_hunt, rng, out); break;
    case GameKind::kHarvest: detail::step_harvest(s, cfg.harvest, rng, out); break;
    case GameKind::kEscalation: detail::step_escalation(s, cfg.escalation, rng, out); break;
  }
  ++s.step_count;
  if (s.step_count >= s.horizon) s.terminated = true;
  out.done = s.terminated;
  return out;
}

inline Transition step(const GridState& state, Action a1, Action a2, const MarkovConfig& cfg,
                       Rng& rng) {
  Transition t{state, 0.0, 0.0, false, {}};
  const StepOutcome o = advance(t.next, a1, a2, cfg, rng);
  t.r1 = o.r1;
  t.r2 = o.r2;
  t.done = o.done;
  t.events = o.events;
  return t;
}

// ---------------------------------------------------------------------------
// Observations.

enum Plane : int {
  kSelfPlane = 0,
  kPartnerPlane,
  kStagPlane,
  kYoungPlantPlane,  // also the plants of the Markov Stag Hunt
  kMaturePlantPlane,
  kMarkerPlane,
  kStreakPlane,
  kNumPlanes
};

/// Channel planes, row-major [plane][y][x].
struct Observation {
  int channels = kNumPlanes;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int c, int y, int x) const {
    return values[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  std::vector<double> plane(int c) const {
    const auto n = static_cast<std::size_t>(height * width);
    return {values.begin() + static_cast<long>(c * n), values.begin() + static_cast<long>((c + 1) * n)};
  }
};

/// Writes the encoding of `s` from agent `agent_id` (1 or 2) into `out`,
/// which must hold kNumPlanes * height * width values.
template <typename T>
void encode_observation(const GridState& s, int agent_id, double streak_norm, T* out) {
  if (agent_id != 1 && agent_id != 2) throw std::invalid_argument("observe: agent_id must be 1 or 2");
  const int hw = s.width * s.height;
  std::fill(out, out + kNumPlanes * hw, T(0));
  auto put = [&](int plane, Cell c) { out[plane * hw + c.y * s.width + c.x] = T(1); };
  put(kSelfPlane, s.agents[agent_id - 1]);
  put(kPartnerPlane, s.agents[2 - agent_id]);
  for (const auto& e : s.entities) {
    switch (e.type) {
      case EntityType::kStag: put(kStagPlane, e.pos); break;
      case EntityType::kYoungPlant: put(kYoungPlantPlane, e.pos); break;
      case EntityType::kMaturePlant: put(kMaturePlantPlane, e.pos); break;
      case EntityType::kMarker: put(kMarkerPlane, e.pos); break;
    }
  }
  const T streak = static_cast<T>(static_cast<double>(s.streak) / streak_norm);
  std::fill(out + kStreakPlane * hw, out + (kStreakPlane + 1) * hw, streak);
}

inline Observation observe(const GridState& s, int agent_id, double streak_norm = 50.0) {
  Observation o;
  o.height = s.height;
  o.width = s.width;
  o.values.resize(static_cast<std::size_t>(kNumPlanes * s.height * s.width));
  encode_observation(s, agent_id, streak_norm, o.values.data());
  return o;
}

// ---------------------------------------------------------------------------
// Invariants, hashing and trajectory dumps.

/// Throws std::logic_error describing the first violated state invariant.
inline void check_invariants(const GridState& s, const MarkovConfig& cfg) {
  auto fail = [](const std::string& what) { throw std::logic_error("invariant: " + what); };
  for (const Cell& a : s.agents) {
    if (!s.in_bounds(a)) fail("agent out of bounds");
  }
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    if (!s.in_bounds(s.entities[i].pos)) fail("entity out of bounds");
    for (std::size_t j = i + 1; j < s.entities.size(); ++j) {
      if (s.entities[i].pos == s.entities[j].pos) fail("stacked entities");
    }
  }
  if (s.streak < 0) fail("negative streak");
  switch (s.kind) {
    case GameKind::kStagHunt:
      if (s.count(EntityType::kStag) != 1) fail("stag count != 1");
      if (s.count(EntityType::kYoungPlant) != 2) fail("plant count != 2");
      if (s.entities.size() != 3) fail("unexpected entity");
      break;
    case GameKind::kHarvest: {
      const int plants = s.count(EntityType::kYoungPlant) + s.count(EntityType::kMaturePlant);
      if (plants > cfg.harvest.max_plants) fail("too many plants");
      if (plants != static_cast<int>(s.entities.size())) fail("unexpected entity");
      break;
    }
    case GameKind::kEscalation:
      if (!s.terminated && s.count(EntityType::kMarker) != 1) fail("marker count != 1");
      if (s.entities.size() > 1) fail("unexpected entity");
      break;
  }
}

/// FNV-1a over the full state.
inline std::uint64_t state_hash(const GridState& s) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::int64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>((v >> (8 * b)) & 0xff);
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<int>(s.kind));
  mix(s.width);
  mix(s.height);
  for (const Cell& a : s.agents) {
    mix(a.x);
    mix(a.y);
  }
  for (const Entity& e : s.entities) {
    mix(static_cast<int>(e.type));
    mix(e.pos.x);
    mix(e.pos.y);
  }
  mix(s.streak);
  mix(s.step_count);
  mix(s.horizon);
  mix(s.terminated ? 1 : 0);
  return h;
}

/// One dump line: "<step> <hash> <a1><a2> <r1> <r2> <done>", with the hash of
/// the state after the step and rewards printed with round-trip precision.
inline std::string trajectory_line(const GridState& after, Action a1, Action a2,
                                   const StepOutcome& o) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d %016llx %c%c %.17g %.17g %d", after.step_count,
                static_cast<unsigned long long>(state_hash(after)), action_letter(a1),
                action_letter(a2), o.r1, o.r2, o.done ? 1 : 0);
  return buf;
}

}  // namespace prosocial::markov
