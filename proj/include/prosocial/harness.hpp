// Experiment definitions, seeded replicate execution, block aggregation and
// CSV output.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "prosocial/envs_markov.hpp"
#include "prosocial/envs_strategic.hpp"
#include "prosocial/learners.hpp"
#include "prosocial/markov_training.hpp"

namespace prosocial::harness {

using Json = nlohmann::json;

enum class GameType { kMatrix, kNetwork, kWeakLink, kMarkov };

inline GameType parse_game_type(const std::string& s) {
  if (s == "matrix") return GameType::kMatrix;
  if (s == "network") return GameType::kNetwork;
  if (s == "weaklink") return GameType::kWeakLink;
  if (s == "markov") return GameType::kMarkov;
  throw std::invalid_argument("unknown game type '" + s + "'");
}

inline const char* to_string(GameType t) {
  switch (t) {
    case GameType::kMatrix: return "matrix";
    case GameType::kNetwork: return "network";
    case GameType::kWeakLink: return "weaklink";
    case GameType::kMarkov: return "markov";
  }
  return "?";
}

/// Which agents receive the prosocial weight. `single` and `center-only`
/// both mean agent 0 (the star's center); `leaf-only` means agent 1, one
/// leaf of the star.
enum class Assignment { kNone, kSingle, kAll, kCenterOnly, kLeafOnly, kCustom };

inline Assignment parse_assignment(const std::string& s) {
  if (s == "none") return Assignment::kNone;
  if (s == "single") return Assignment::kSingle;
  if (s == "all") return Assignment::kAll;
  if (s == "center-only") return Assignment::kCenterOnly;
  if (s == "leaf-only") return Assignment::kLeafOnly;
  if (s == "custom") return Assignment::kCustom;
  throw std::invalid_argument("unknown alpha assignment '" + s + "'");
}

inline const char* to_string(Assignment a) {
  switch (a) {
    case Assignment::kNone: return "none";
    case Assignment::kSingle: return "single";
    case Assignment::kAll: return "all";
    case Assignment::kCenterOnly: return "center-only";
    case Assignment::kLeafOnly: return "leaf-only";
    case Assignment::kCustom: return "custom";
  }
  return "?";
}

enum class Label { kPayoffDominant, kRiskDominant, kUnresolved };

inline const char* to_string(Label l) {
  switch (l) {
    case Label::kPayoffDominant: return "payoff-dominant";
    case Label::kRiskDominant: return "risk-dominant";
    case Label::kUnresolved: return "unresolved";
  }
  return "?";
}

/// Fully resolved experiment. Missing keys in a config file fall back to the
/// per-game defaults filled in by `resolve_defaults`.
struct ExperimentConfig {
  std::string experiment_id = "experiment";
  std::string condition;  // empty: derived from the assignment
  GameType game = GameType::kMatrix;

  // Stag Hunt payoffs for the dyad and network games; g = -penalty.
  double h = 2.0;
  double c = 1.0;
  double m = 1.0;
  double penalty = 0.0;
  GraphKind graph = GraphKind::kStar;
  int agents = 5;
  Aggregation aggregation = Aggregation::kAverage;
  double weaklink_multiplier = 3.0;
  int weaklink_players = 5;
  markov::MarkovConfig markov;

  double learning_rate = 0.01;
  double init_sigma = 1.0;
  bool baseline = false;
  double entropy_weight = 0.0;
  int base_channels = 16;
  int batch_episodes = 64;
  double discount = 0.99;
  bool single_precision = false;

  Assignment assignment = Assignment::kNone;
  double alpha = 0.5;
  std::vector<double> alphas;  // for `custom`
  MixMode mix_mode = MixMode::kAverage;

  long rounds = 400;      // strategic games
  long episodes = 20000;  // Markov games
  int replicates = 300;
  std::uint64_t base_seed = 1;
  long block_size = 50;
  long window = 50;
  double threshold = 0.5;
  std::string output = "results.csv";

  int num_agents() const {
    switch (game) {
      case GameType::kMatrix: return 2;
      case GameType::kNetwork: return agents;
      case GameType::kWeakLink: return weaklink_players;
      case GameType::kMarkov: return 2;
    }
    return 0;
  }

  long units() const { return game == GameType::kMarkov ? episodes : rounds; }

  StagHuntPayoffs payoffs() const { return StagHuntPayoffs(h, c, m, -penalty); }

  std::string condition_label() const { return condition.empty() ? to_string(assignment) : condition; }

  std::vector<double> alpha_vector() const {
    const int n = num_agents();
    std::vector<double> a(static_cast<std::size_t>(n), 0.0);
    switch (assignment) {
      case Assignment::kNone: break;
      case Assignment::kSingle:
      case Assignment::kCenterOnly: a[0] = alpha; break;
      case Assignment::kLeafOnly: a.at(1) = alpha; break;
      case Assignment::kAll: std::fill(a.begin(), a.end(), alpha); break;
      case Assignment::kCustom:
        if (alphas.size() != a.size()) {
          throw std::invalid_argument("custom alphas: need one value per agent (" + std::to_string(n) + ")");
        }
        a = alphas;
        break;
    }
    return a;
  }

  std::vector<RewardMixer> mixers() const {
    std::vector<RewardMixer> out;
    for (double v : alpha_vector()) out.push_back({ProsocialWeight(v), mix_mode});
    return out;
  }

  void validate() const {
    if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
    if (units() < 1) throw std::invalid_argument("rounds/episodes must be >= 1");
    if (block_size < 1) throw std::invalid_argument("block_size must be >= 1");
    if (window < 1 || window > units()) throw std::invalid_argument("window must lie in [1, rounds/episodes]");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must lie in [0,1]");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (experiment_id.find_first_of(",\n\"") != std::string::npos ||
        condition_label().find_first_of(",\n\"") != std::string::npos) {
      throw std::invalid_argument("experiment_id and condition may not contain commas, quotes or newlines");
    }
    (void)mixers();  // validates every alpha
    switch (game) {
      case GameType::kMatrix: (void)payoffs(); break;
      case GameType::kNetwork: NetworkGame(GraphPreset{graph, static_cast<std::size_t>(agents)}, payoffs()); break;
      case GameType::kWeakLink: WeakLinkGame(weaklink_multiplier, static_cast<std::size_t>(weaklink_players)); break;
      case GameType::kMarkov:
        markov.validate();
        if (batch_episodes < 1) throw std::invalid_argument("batch_episodes must be >= 1");
        if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
        break;
    }
  }
};

// ---------------------------------------------------------------------------
// JSON <-> config.

namespace detail {

template <typename V>
void read(const Json& j, const char* key, V& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<V>();
}

inline const Json& section(const Json& j, const char* key) {
  static const Json empty = Json::object();
  return j.contains(key) ? j.at(key) : empty;
}

}  // namespace detail

/// Builds a config from nested JSON. Keys that are absent take the per-game
/// defaults (learning rate, block size, window, entropy weight).
inline ExperimentConfig config_from_json(const Json& j) {
  using detail::read;
  ExperimentConfig cfg;
  read(j, "experiment_id", cfg.experiment_id);
  read(j, "condition", cfg.condition);

  const Json& g = detail::section(j, "game");
  std::string s;
  if (g.contains("type")) cfg.game = parse_game_type(g.at("type").get<std::string>());
  read(g, "h", cfg.h);
  read(g, "c", cfg.c);
  read(g, "m", cfg.m);
  read(g, "penalty", cfg.penalty);
  if (g.contains("graph")) cfg.graph = parse_graph_kind(g.at("graph").get<std::string>());
  read(g, "agents", cfg.agents);
  if (g.contains("aggregation")) {
    s = g.at("aggregation").get<std::string>();
    if (s != "average" && s != "total") throw std::invalid_argument("aggregation must be average or total");
    cfg.aggregation = s == "average" ? Aggregation::kAverage : Aggregation::kTotal;
  }
  read(g, "multiplier", cfg.weaklink_multiplier);
  read(g, "players", cfg.weaklink_players);
  const Json& mk = detail::section(g, "markov");
  if (mk.contains("kind")) cfg.markov.kind = markov::parse_game_kind(mk.at("kind").get<std::string>());
  read(mk, "size", cfg.markov.size);
  read(mk, "episode_mean", cfg.markov.episode_mean);
  read(mk, "escalation_cap", cfg.markov.escalation_cap);
  read(mk, "streak_norm", cfg.markov.streak_norm);
  read(mk, "gore_penalty", cfg.markov.stag_hunt.gore_penalty);
  read(mk, "young_fraction", cfg.markov.harvest.young_fraction);
  read(mk, "spawn_prob", cfg.markov.harvest.spawn_prob);
  read(mk, "penalty_multiplier", cfg.markov.escalation.penalty_multiplier);

  const bool is_markov = cfg.game == GameType::kMarkov;
  cfg.learning_rate = is_markov ? 1e-3 : 0.01;
  cfg.entropy_weight = is_markov ? markov::default_entropy_weight(cfg.markov.kind) : 0.0;
  const Json& l = detail::section(j, "learner");
  read(l, "learning_rate", cfg.learning_rate);
  read(l, "init_sigma", cfg.init_sigma);
  read(l, "baseline", cfg.baseline);
  read(l, "entropy_weight", cfg.entropy_weight);
  read(l, "base_channels", cfg.base_channels);
  read(l, "batch_episodes", cfg.batch_episodes);
  read(l, "discount", cfg.discount);
  if (l.contains("precision")) {
    s = l.at("precision").get<std::string>();
    if (s != "double" && s != "float") throw std::invalid_argument("precision must be double or float");
    cfg.single_precision = s == "float";
  }

  const Json& p = detail::section(j, "prosociality");
  if (p.contains("assignment")) cfg.assignment = parse_assignment(p.at("assignment").get<std::string>());
  read(p, "alpha", cfg.alpha);
  read(p, "alphas", cfg.alphas);
  if (p.contains("mode")) cfg.mix_mode = parse_mix_mode(p.at("mode").get<std::string>());

  read(j, "rounds", cfg.rounds);
  read(j, "episodes", cfg.episodes);
  read(j, "replicates", cfg.replicates);
  read(j, "base_seed", cfg.base_seed);
  cfg.block_size = is_markov ? 1000 : 50;
  read(j, "block_size", cfg.block_size);
  cfg.window = is_markov ? std::max<long>(1, cfg.episodes / 10) : std::min<long>(50, cfg.rounds);
  read(j, "window", cfg.window);
  read(j, "threshold", cfg.threshold);
  read(j, "output", cfg.output);
  return cfg;
}

/// Every field of `cfg`, in the same layout `config_from_json` reads.
inline Json config_to_json(const ExperimentConfig& cfg) {
  Json j;
  j["experiment_id"] = cfg.experiment_id;
  j["condition"] = cfg.condition_label();
  j["game"] = {{"type", to_string(cfg.game)},
               {"h", cfg.h},
               {"c", cfg.c},
               {"m", cfg.m},
               {"penalty", cfg.penalty},
               {"graph", to_string(cfg.graph)},
               {"agents", cfg.agents},
               {"aggregation", cfg.aggregation == Aggregation::kAverage ? "average" : "total"},
               {"multiplier", cfg.weaklink_multiplier},
               {"players", cfg.weaklink_players},
               {"markov",
                {{"kind", markov::to_string(cfg.markov.kind)},
                 {"size", cfg.markov.size},
                 {"episode_mean", cfg.markov.episode_mean},
                 {"escalation_cap", cfg.markov.escalation_cap},
                 {"streak_norm", cfg.markov.streak_norm},
                 {"gore_penalty", cfg.markov.stag_hunt.gore_penalty},
                 {"young_fraction", cfg.markov.harvest.young_fraction},
                 {"spawn_prob", cfg.markov.harvest.spawn_prob},
                 {"penalty_multiplier", cfg.markov.escalation.penalty_multiplier}}}};
  j["learner"] = {{"learning_rate", cfg.learning_rate},
                  {"init_sigma", cfg.init_sigma},
                  {"baseline", cfg.baseline},
                  {"entropy_weight", cfg.entropy_weight},
                  {"base_channels", cfg.base_channels},
                  {"batch_episodes", cfg.batch_episodes},
                  {"discount", cfg.discount},
                  {"precision", cfg.single_precision ? "float" : "double"}};
  j["prosociality"] = {{"assignment", to_string(cfg.assignment)},
                       {"alpha", cfg.alpha},
                       {"alphas", cfg.alphas},
                       {"mode", to_string(cfg.mix_mode)}};
  j["rounds"] = cfg.rounds;
  j["episodes"] = cfg.episodes;
  j["replicates"] = cfg.replicates;
  j["base_seed"] = cfg.base_seed;
  j["block_size"] = cfg.block_size;
  j["window"] = cfg.window;
  j["threshold"] = cfg.threshold;
  j["output"] = cfg.output;
  return j;
}

/// Applies a "dotted.path=value" override. The value is parsed as JSON when
/// possible and taken as a string otherwise.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value = Json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::string pointer = "/" + key;
  std::replace(pointer.begin(), pointer.end(), '.', '/');
  j[Json::json_pointer(pointer)] = value;
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  try {
    return Json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("config '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sweeps: the "sweep" object maps dotted config paths to value lists; every
// point of their cartesian product is one condition.

struct SweepCell {
  ExperimentConfig config;
  Json resolved;
};

inline std::string short_key(const std::string& path) {
  const auto dot = path.rfind('.');
  return dot == std::string::npos ? path : path.substr(dot + 1);
}

inline std::string value_label(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

inline std::vector<SweepCell> expand_sweep(const Json& spec) {
  Json base = spec;
  Json grid = Json::object();
  if (base.contains("sweep")) {
    grid = base.at("sweep");
    base.erase("sweep");
  }
  if (!grid.is_object()) throw std::invalid_argument("sweep must be an object of value lists");
  std::vector<std::pair<std::string, std::vector<Json>>> axes;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    if (!it.value().is_array() || it.value().empty()) {
      throw std::invalid_argument("sweep axis '" + it.key() + "' must be a non-empty list");
    }
    axes.emplace_back(it.key(), std::vector<Json>(it.value().begin(), it.value().end()));
  }
  std::vector<SweepCell> cells;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    Json j = base;
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const Json& v = axes[a].second[idx[a]];
      apply_override(j, axes[a].first + "=" + v.dump());
      if (!label.empty()) label += ';';
      label += short_key(axes[a].first) + "=" + value_label(v);
    }
    if (!axes.empty() && !(j.contains("condition") && !j.at("condition").is_null())) j["condition"] = label;
    ExperimentConfig cfg = config_from_json(j);
    cfg.validate();
    cells.push_back({cfg, config_to_json(cfg)});
    std::size_t a = 0;
    while (a < axes.size() && ++idx[a] == axes[a].second.size()) idx[a++] = 0;
    if (a == axes.size()) break;
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Replicates.

/// Raw per-unit (round or episode) series. Rewards are environment rewards,
/// unit-major [unit][agent].
struct RunSeries {
  int agents = 0;
  std::vector<double> rewards;
  std::vector<double> coord_hits;
  std::vector<double> coord_chances;
  std::vector<double> streaks;  // Markov only: final streak of each episode

  long units() const { return static_cast<long>(coord_hits.size()); }
};

struct BlockStat {
  long block = 0;
  std::vector<double> mean_reward;  // per agent
  double coord_rate = 0.0;
};

struct ReplicateResult {
  int replicate = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  Label label = Label::kUnresolved;
  double wall_seconds = 0.0;
  RunSeries series;
  std::vector<BlockStat> blocks;
};

inline double ratio(double hits, double chances) { return chances > 0.0 ? hits / chances : 0.0; }

/// Consecutive blocks of `block_size` units; the last block holds the
/// remainder, so the blocks cover the run without gaps.
inline std::vector<BlockStat> block_stats(const RunSeries& s, long block_size) {
  if (block_size < 1) throw std::invalid_argument("block_size must be >= 1");
  std::vector<BlockStat> out;
  const long n = s.units();
  for (long b0 = 0, k = 0; b0 < n; b0 += block_size, ++k) {
    const long b1 = std::min(n, b0 + block_size);
    BlockStat st;
    st.block = k;
    st.mean_reward.assign(static_cast<std::size_t>(s.agents), 0.0);
    double hits = 0.0;
    double chances = 0.0;
    for (long t = b0; t < b1; ++t) {
      for (int a = 0; a < s.agents; ++a) st.mean_reward[a] += s.rewards[static_cast<std::size_t>(t) * s.agents + a];
      hits += s.coord_hits[t];
      chances += s.coord_chances[t];
    }
    for (auto& r : st.mean_reward) r /= static_cast<double>(b1 - b0);
    st.coord_rate = ratio(hits, chances);
    out.push_back(std::move(st));
  }
  return out;
}

/// Coordination rate over the last `window` units.
inline double final_coord_rate(const RunSeries& s, long window) {
  const long n = s.units();
  if (window < 1 || window > n) throw std::invalid_argument("final window out of range");
  double hits = 0.0;
  double chances = 0.0;
  for (long t = n - window; t < n; ++t) {
    hits += s.coord_hits[t];
    chances += s.coord_chances[t];
  }
  return ratio(hits, chances);
}

/// rate >= threshold is payoff-dominant (the threshold itself included).
inline Label classify_rate(double rate, double threshold = 0.5) {
  return rate >= threshold ? Label::kPayoffDominant : Label::kRiskDominant;
}

inline Label classify_convergence(const ReplicateResult& r, double threshold, long window) {
  if (r.failed) return Label::kUnresolved;
  return classify_rate(final_coord_rate(r.series, window), threshold);
}

namespace detail {

template <StrategicEnv Env>
RunSeries strategic_series(const Env& env, const ExperimentConfig& cfg, Rng& rng) {
  const auto mixers = cfg.mixers();
  const LearnerConfig lc{cfg.learning_rate, cfg.init_sigma, cfg.baseline};
  const RepeatedPlayLog log = run_repeated_play(env, mixers, lc, static_cast<std::size_t>(cfg.rounds), rng);
  RunSeries s;
  s.agents = static_cast<int>(env.num_agents());
  s.rewards = log.rewards;
  for (std::size_t t = 0; t < log.rounds(); ++t) {
    bool all = true;
    for (std::size_t i = 0; i < log.agents; ++i) all = all && log.action(t, i) == env.cooperative_action();
    s.coord_hits.push_back(all ? 1.0 : 0.0);
    s.coord_chances.push_back(1.0);
  }
  return s;
}

template <typename T>
RunSeries markov_series(const ExperimentConfig& cfg, Rng& rng) {
  markov::MarkovTrainConfig mc;
  mc.env = cfg.markov;
  mc.base_channels = cfg.base_channels;
  mc.train.batch_episodes = cfg.batch_episodes;
  mc.train.discount = cfg.discount;
  mc.train.entropy_weight = cfg.entropy_weight;
  mc.train.total_episodes = cfg.episodes;
  mc.train.learning_rate = cfg.learning_rate;
  mc.train.baseline = cfg.baseline;
  const auto mx = cfg.mixers();
  markov::MarkovTrainer<T> trainer(mc, {mx[0], mx[1]}, rng);
  const auto eps = trainer.train(rng);
  RunSeries s;
  s.agents = 2;
  for (const auto& e : eps) {
    s.rewards.push_back(e.returns[0]);
    s.rewards.push_back(e.returns[1]);
    s.coord_hits.push_back(e.coord_hits);
    s.coord_chances.push_back(e.coord_chances);
    s.streaks.push_back(e.final_streak);
  }
  return s;
}

}  // namespace detail

inline RunSeries run_series(const ExperimentConfig& cfg, Rng& rng) {
  switch (cfg.game) {
    case GameType::kMatrix: return detail::strategic_series(DyadEnv(cfg.payoffs()), cfg, rng);
    case GameType::kNetwork:
      return detail::strategic_series(
          NetworkGame(GraphPreset{cfg.graph, static_cast<std::size_t>(cfg.agents)}, cfg.payoffs(), cfg.aggregation),
          cfg, rng);
    case GameType::kWeakLink:
      return detail::strategic_series(
          WeakLinkGame(cfg.weaklink_multiplier, static_cast<std::size_t>(cfg.weaklink_players)), cfg, rng);
    case GameType::kMarkov:
      return cfg.single_precision ? detail::markov_series<float>(cfg, rng) : detail::markov_series<double>(cfg, rng);
  }
  throw std::logic_error("unreachable");
}

/// Replicate r, seeded with base_seed + r. Failures are caught and recorded.
inline ReplicateResult run_replicate(const ExperimentConfig& cfg, int r) {
  ReplicateResult out;
  out.replicate = r;
  out.seed = cfg.base_seed + static_cast<std::uint64_t>(r);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    Rng rng(out.seed);
    out.series = run_series(cfg, rng);
    out.blocks = block_stats(out.series, cfg.block_size);
    out.label = classify_convergence(out, cfg.threshold, cfg.window);
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
    out.label = Label::kUnresolved;
    out.blocks.clear();
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Worker count: PROSOCIAL_WORKERS if set, else the hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("PROSOCIAL_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw std::invalid_argument("PROSOCIAL_WORKERS must be a positive integer");
    }
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `jobs` indexed tasks on `workers` threads; results land in index
/// order whatever the schedule.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(std::size_t jobs, int workers, Fn fn) {
  std::vector<Result> out(jobs);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs; i = next++) out[i] = fn(i);
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs)));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return out;
}

struct ConditionResults {
  ExperimentConfig config;
  std::vector<ReplicateResult> replicates;
};

/// All replicates of all cells; replicates are the unit of parallelism.
inline std::vector<ConditionResults> run_cells(const std::vector<ExperimentConfig>& cells, int workers) {
  std::vector<std::pair<std::size_t, int>> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    cells[c].validate();
    for (int r = 0; r < cells[c].replicates; ++r) jobs.emplace_back(c, r);
  }
  auto flat = parallel_map<ReplicateResult>(jobs.size(), workers, [&](std::size_t i) {
    return run_replicate(cells[jobs[i].first], jobs[i].second);
  });
  std::vector<ConditionResults> out;
  for (const auto& cfg : cells) out.push_back({cfg, {}});
  for (std::size_t i = 0; i < jobs.size(); ++i) out[jobs[i].first].replicates.push_back(std::move(flat[i]));
  return out;
}

inline std::vector<ReplicateResult> run_experiment(const ExperimentConfig& cfg, int workers = 1) {
  return run_cells({cfg}, workers).front().replicates;
}

// ---------------------------------------------------------------------------
// Aggregation.

/// Mean and standard error (sample stddev / sqrt(n)); the error is absent
/// for n = 1.
struct MeanSe {
  double mean = 0.0;
  std::optional<double> se;
  std::size_t n = 0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_se: no values");
  MeanSe out;
  out.n = xs.size();
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
  }
  return out;
}

struct SummaryRow {
  long block = 0;
  int agent = 0;
  MeanSe reward;
  MeanSe coord;
};

struct Summary {
  std::vector<SummaryRow> rows;
  MeanSe payoff_dominant;  // share of replicates labelled payoff-dominant
  std::size_t failed = 0;
};

/// Per (block, agent) mean and standard error over the successful
/// replicates, re-blocking the raw series with `block_size`.
inline Summary aggregate(const std::vector<ReplicateResult>& results, long block_size) {
  if (results.empty()) throw std::invalid_argument("aggregate: no results");
  Summary out;
  std::vector<const ReplicateResult*> ok;
  std::vector<double> pd;
  for (const auto& r : results) {
    if (r.failed) {
      ++out.failed;
      continue;
    }
    ok.push_back(&r);
    pd.push_back(r.label == Label::kPayoffDominant ? 1.0 : 0.0);
  }
  if (ok.empty()) return out;
  out.payoff_dominant = mean_se(pd);
  std::vector<std::vector<BlockStat>> blocks;
  for (const auto* r : ok) blocks.push_back(block_stats(r->series, block_size));
  const std::size_t nb = blocks.front().size();
  const int agents = ok.front()->series.agents;
  for (const auto& b : blocks) {
    if (b.size() != nb) throw std::invalid_argument("aggregate: replicates differ in length");
  }
  for (std::size_t k = 0; k < nb; ++k) {
    std::vector<double> coord;
    for (const auto& b : blocks) coord.push_back(b[k].coord_rate);
    const MeanSe c = mean_se(coord);
    for (int a = 0; a < agents; ++a) {
      std::vector<double> rew;
      for (const auto& b : blocks) rew.push_back(b[k].mean_reward[a]);
      out.rows.push_back({static_cast<long>(k), a, mean_se(rew), c});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV.

inline constexpr const char* kResultsHeader =
    "experiment_id,condition,replicate,block,agent,mean_reward,coord_rate,converged_label,seed";

inline constexpr const char* kSummaryHeader =
    "experiment_id,condition,block,agent,n,mean_reward,se_reward,coord_rate,se_coord_rate,"
    "p_payoff_dominant,se_p_payoff_dominant";

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

/// One row per (replicate, block, agent); a failed replicate gets a single
/// row with empty block, agent and value fields.
inline void write_results_csv(std::ostream& os, const std::vector<ConditionResults>& conds) {
  os << kResultsHeader << '\n';
  for (const auto& c : conds) {
    const std::string prefix = c.config.experiment_id + "," + c.config.condition_label() + ",";
    for (const auto& r : c.replicates) {
      if (r.failed) {
        os << prefix << r.replicate << ",,,,," << to_string(r.label) << ',' << r.seed << '\n';
        continue;
      }
      for (const auto& b : r.blocks) {
        for (std::size_t a = 0; a < b.mean_reward.size(); ++a) {
          os << prefix << r.replicate << ',' << b.block << ',' << a << ',' << fmt(b.mean_reward[a]) << ','
             << fmt(b.coord_rate) << ',' << to_string(r.label) << ',' << r.seed << '\n';
        }
      }
    }
  }
}

inline void write_summary_csv(std::ostream& os, const std::string& experiment_id, const std::string& condition,
                              const Summary& s, bool header) {
  if (header) os << kSummaryHeader << '\n';
  for (const auto& row : s.rows) {
    os << experiment_id << ',' << condition << ',' << row.block << ',' << row.agent << ',' << row.reward.n << ','
       << fmt(row.reward.mean) << ',' << fmt(row.reward.se) << ',' << fmt(row.coord.mean) << ','
       << fmt(row.coord.se) << ',' << fmt(s.payoff_dominant.mean) << ',' << fmt(s.payoff_dominant.se) << '\n';
  }
}

/// Path of a sibling output: results.csv -> results.<suffix>.
inline std::filesystem::path sibling(const std::string& output, const std::string& suffix) {
  std::filesystem::path p(output);
  p.replace_extension(suffix);
  return p;
}

struct RunReport {
  std::size_t replicates = 0;
  std::size_t failed = 0;
};

/// Writes the results CSV, a summary CSV (<output>.summary.csv) and the
/// resolved configuration (<output>.config.json) beside each other.
inline RunReport write_outputs(const std::string& output, const std::vector<ConditionResults>& conds,
                               const Json& resolved) {
  const std::filesystem::path out(output);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + output + "'");
    write_results_csv(f, conds);
  }
  {
    std::ofstream f(sibling(output, ".summary.csv"), std::ios::binary);
    bool header = true;
    for (const auto& c : conds) {
      write_summary_csv(f, c.config.experiment_id, c.config.condition_label(),
                        aggregate(c.replicates, c.config.block_size), header);
      header = false;
    }
  }
  {
    std::ofstream f(sibling(output, ".config.json"), std::ios::binary);
    f << resolved.dump(2) << '\n';
  }
  RunReport rep;
  for (const auto& c : conds) {
    for (const auto& r : c.replicates) {
      ++rep.replicates;
      if (r.failed) ++rep.failed;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Reading results back (the `report` subcommand).

struct ResultsRow {
  std::string experiment_id;
  std::string condition;
  int replicate = 0;
  std::optional<long> block;
  std::optional<int> agent;
  double mean_reward = 0.0;
  double coord_rate = 0.0;
  std::string label;
  std::uint64_t seed = 0;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<ResultsRow> read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("results CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw std::runtime_error("results CSV header mismatch: got '" + line + "'");
  std::vector<ResultsRow> rows;
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw std::runtime_error("results CSV line " + std::to_string(lineno) + ": expected 9 fields");
    try {
      ResultsRow r;
      r.experiment_id = f[0];
      r.condition = f[1];
      r.replicate = std::stoi(f[2]);
      if (!f[3].empty()) r.block = std::stol(f[3]);
      if (!f[4].empty()) r.agent = std::stoi(f[4]);
      if (!f[5].empty()) r.mean_reward = std::stod(f[5]);
      if (!f[6].empty()) r.coord_rate = std::stod(f[6]);
      r.label = f[7];
      r.seed = std::stoull(f[8]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw std::runtime_error("results CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

/// Summary of a results CSV at its own block granularity.
inline void report_csv(std::istream& is, std::ostream& os) {
  const auto rows = read_results_csv(is);
  struct Cell {
    std::map<int, std::string> labels;
    std::map<std::pair<long, int>, std::vector<double>> reward;
    std::map<std::pair<long, int>, std::vector<double>> coord;
  };
  std::map<std::pair<std::string, std::string>, Cell> cells;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.experiment_id, r.condition);
    if (!cells.count(key)) order.push_back(key);
    Cell& c = cells[key];
    c.labels[r.replicate] = r.label;
    if (!r.block) continue;
    c.reward[{*r.block, *r.agent}].push_back(r.mean_reward);
    c.coord[{*r.block, *r.agent}].push_back(r.coord_rate);
  }
  os << kSummaryHeader << '\n';
  for (const auto& key : order) {
    const Cell& c = cells.at(key);
    std::vector<double> pd;
    for (const auto& [rep, label] : c.labels) {
      if (label != to_string(Label::kUnresolved)) pd.push_back(label == to_string(Label::kPayoffDominant) ? 1.0 : 0.0);
    }
    Summary s;
    if (!pd.empty()) s.payoff_dominant = mean_se(pd);
    for (const auto& [ba, rew] : c.reward) {
      s.rows.push_back({ba.first, ba.second, mean_se(rew), mean_se(c.coord.at(ba))});
    }
    write_summary_csv(os, key.first, key.second, s, false);
  }
}

}  // namespace prosocial::harness
