#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "prosocial/dynamics.hpp"
#include "prosocial/harness.hpp"
#include "prosocial/matrix_games.hpp"

using namespace prosocial;
using namespace prosocial::harness;

namespace {

struct AnalyzeArgs {
  double h = 2.0, c = 1.0, m = 1.0, g = -1.0;
  double alpha1 = 0.0, alpha2 = 0.0;
  long resolution = 101;
  std::string matrix_file;
  std::string basin_csv;
  std::vector<double> basin_alphas{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> basin_g;
};

void print_nash(const BimatrixGame& game) {
  const auto eq = enumerate_pure_nash(game);
  std::printf("pure nash:");
  if (eq.empty()) std::printf(" none");
  for (const auto& e : eq) std::printf(" (%zu,%zu)", e.a1, e.a2);
  std::printf("\n");
}

int analyze_matrix(const AnalyzeArgs& a) {
  std::ifstream in(a.matrix_file);
  if (!in) throw std::runtime_error("cannot open '" + a.matrix_file + "'");
  const BimatrixGame game = parse_bimatrix(in);
  std::printf("strategies: %zu x %zu%s\n", game.n1(), game.n2(), game.symmetric() ? " (symmetric)" : "");
  print_nash(game);
  if (a.alpha1 > 0 || a.alpha2 > 0) {
    const auto t = prosocial_transform(game, ProsocialWeight(a.alpha1), ProsocialWeight(a.alpha2));
    std::printf("after transform (alpha1=%g, alpha2=%g):\n", a.alpha1, a.alpha2);
    write_bimatrix(std::cout, t);
    std::cout.flush();
    print_nash(t);
  }
  if (!game.symmetric()) return 0;
  const auto canon = canonicalize_by_diagonal(game);
  std::printf("diagonal order:");
  for (auto i : canon.order) std::printf(" %zu", i);
  std::printf("\n");
  const bool all_sh = is_all_subgames_staghunt(canon.game);
  std::printf("all 2x2 subgames stag hunts: %s\n", all_sh ? "yes" : "no");
  if (all_sh) {
    try {
      std::printf("dominance alpha: %.4f\n", dominance_alpha(canon.game).value());
    } catch (const std::logic_error& e) {
      std::printf("dominance alpha: none (%s)\n", e.what());
    }
  }
  return 0;
}

int analyze_staghunt(const AnalyzeArgs& a) {
  const StagHuntPayoffs p(a.h, a.c, a.m, a.g);
  const ProsocialWeight a1(a.alpha1), a2(a.alpha2);
  const auto rd = risk_dominance(p);
  std::printf("payoffs: h=%g c=%g m=%g g=%g\n", p.h(), p.c(), p.m(), p.g());
  std::printf("pstar(alpha=0): %.6f\n", rd.selfish_pstar);
  std::printf("pstar(alpha1=%g): %.6f\n", a1.value(), pstar(p, a1));
  std::printf("pstar(alpha2=%g): %.6f\n", a2.value(), pstar(p, a2));
  std::printf("alpha_star: %.6f\n", alpha_star(p).value());
  std::printf("hunt risk dominant: %s%s\n", rd.hunt_risk_dominant ? "yes" : "no", rd.tie ? " (tie)" : "");
  const auto game = prosocial_transform(to_bimatrix(p), a1, a2);
  print_nash(game);
  const DynamicConfig dyn;
  const auto b = basin_fraction(game, dyn, a.resolution);
  std::printf("basin (resolution %ld): hunt %.6f forage %.6f unresolved %.6f\n", a.resolution, b.fraction_hunt,
              b.fraction_forage, b.unresolved);

  if (a.basin_csv.empty()) return 0;
  std::ofstream out(a.basin_csv, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + a.basin_csv + "'");
  out << "alpha1,alpha2,g,fraction_hunt,fraction_forage,unresolved\n";
  const std::vector<double> gs = a.basin_g.empty() ? std::vector<double>{a.g} : a.basin_g;
  for (double g : gs) {
    const StagHuntPayoffs pg(a.h, a.c, a.m, g);
    for (double x : a.basin_alphas) {
      for (double y : a.basin_alphas) {
        const auto e = basin_fraction(pg, ProsocialWeight(x), ProsocialWeight(y), dyn, a.resolution);
        out << fmt(x) << ',' << fmt(y) << ',' << fmt(g) << ',' << fmt(e.fraction_hunt) << ','
            << fmt(e.fraction_forage) << ',' << fmt(e.unresolved) << '\n';
      }
    }
  }
  std::printf("wrote %s\n", a.basin_csv.c_str());
  return 0;
}

struct RunArgs {
  std::string game;
  std::string config;
  std::vector<std::string> overrides;
  std::string output;
};

int execute(Json spec, const RunArgs& a) {
  for (const auto& o : a.overrides) apply_override(spec, o);
  if (!a.output.empty()) spec["output"] = a.output;
  if (!a.game.empty()) {
    const Json* type = spec.contains("game") ? &spec["game"] : nullptr;
    if (type && type->contains("type") && (*type)["type"] != a.game) {
      throw std::invalid_argument("config game type '" + (*type)["type"].get<std::string>() +
                                  "' does not match subcommand '" + a.game + "'");
    }
    spec["game"]["type"] = a.game;
  }
  const auto cells = expand_sweep(spec);
  std::vector<ExperimentConfig> cfgs;
  Json resolved = Json::array();
  for (const auto& c : cells) {
    cfgs.push_back(c.config);
    resolved.push_back(c.resolved);
  }
  const int workers = worker_count();
  const std::string output = cfgs.front().output;
  std::fprintf(stderr, "%zu condition(s), %d worker(s)\n", cfgs.size(), workers);
  const auto conds = run_cells(cfgs, workers);
  const auto rep = write_outputs(output, conds, resolved);
  for (const auto& c : conds) {
    const auto s = aggregate(c.replicates, c.config.block_size);
    std::printf("%-40s payoff-dominant %.3f (se %.3f, n %zu)", c.config.condition_label().c_str(),
                s.payoff_dominant.mean, s.payoff_dominant.se.value_or(0.0), s.payoff_dominant.n);
    if (s.failed) std::printf("  failed %zu", s.failed);
    std::printf("\n");
    for (const auto& r : c.replicates)
      if (r.failed) std::fprintf(stderr, "  replicate %d failed: %s\n", r.replicate, r.error.c_str());
  }
  std::printf("wrote %s (%zu replicates, %zu failed)\n", output.c_str(), rep.replicates, rep.failed);
  return rep.failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prosocial reward shaping in generalized stag hunts"};
  app.require_subcommand(1);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "closed-form thresholds, nash equilibria and basins");
  analyze->set_help_flag("--help", "print this help and exit");
  analyze->add_option("--h", an.h, "mutual hunt payoff");
  analyze->add_option("--c", an.c, "forager payoff against a hunter");
  analyze->add_option("--m", an.m, "mutual forage payoff");
  analyze->add_option("--g", an.g, "lone hunter payoff");
  analyze->add_option("--alpha1", an.alpha1, "prosociality of player 1")->check(CLI::Range(0.0, 1.0));
  analyze->add_option("--alpha2", an.alpha2, "prosociality of player 2")->check(CLI::Range(0.0, 1.0));
  analyze->add_option("--resolution", an.resolution, "belief grid points per axis")->check(CLI::PositiveNumber);
  analyze->add_option("--matrix", an.matrix_file, "general bimatrix table file")->check(CLI::ExistingFile);
  analyze->add_option("--basin-csv", an.basin_csv, "write a basin grid over alpha1 x alpha2 x g");
  analyze->add_option("--basin-alphas", an.basin_alphas, "alpha values for --basin-csv");
  analyze->add_option("--basin-g", an.basin_g, "lone hunter payoffs for --basin-csv");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "run one experiment (or the sweep inside its config)");
  run->add_option("game", ra.game, "matrix | network | weaklink | markov")
      ->required()
      ->check(CLI::IsMember({"matrix", "network", "weaklink", "markov"}));
  run->add_option("--config", ra.config, "JSON config")->check(CLI::ExistingFile);

  RunArgs sa;
  auto* sweep = app.add_subcommand("sweep", "run every cell of a sweep config");
  sweep->add_option("config", sa.config, "JSON config with a \"sweep\" object")->required()->check(CLI::ExistingFile);

  for (auto [cmd, args] : {std::pair{run, &ra}, std::pair{sweep, &sa}}) {
    cmd->add_option("--set", args->overrides, "override, e.g. game.penalty=3 (repeatable)");
    cmd->add_option("-o,--output", args->output, "results CSV path");
  }

  std::string report_path;
  auto* report = app.add_subcommand("report", "summarize a results CSV");
  report->add_option("csv", report_path, "results CSV")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) return an.matrix_file.empty() ? analyze_staghunt(an) : analyze_matrix(an);
    if (*run) return execute(ra.config.empty() ? Json::object() : load_json_file(ra.config), ra);
    if (*sweep) return execute(load_json_file(sa.config), sa);
    if (*report) {
      std::ifstream in(report_path, std::ios::binary);
      report_csv(in, std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
