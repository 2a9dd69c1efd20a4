#pragma once

// Measurement protocol: greedy test episodes over a game set, averaged over
// seeded runs, reported per (agent, difficulty, split) cell.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "vistext/agent.hpp"
#include "vistext/envcore.hpp"

namespace vistext::eval {

double normalized_score(int score, int max_score);

struct CellMetrics {
  std::string agent;
  std::string difficulty;
  std::string split;
  int runs = 0;
  double mean_score = 0.0;
  double std_score = 0.0;
  double mean_steps = 0.0;
  double std_steps = 0.0;
  std::vector<double> run_scores;  // per run, averaged over the game set
  std::vector<double> run_steps;
  std::vector<std::uint64_t> seeds;  // first game's seed of every run
  bool operator==(const CellMetrics&) const = default;
};

struct MetricsReport {
  std::string config_hash;
  int step_cap = envcore::kDefaultStepCap;
  std::uint64_t master_seed = 0;
  std::vector<CellMetrics> cells;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
  // agent,difficulty,split,runs,mean_score,std_score,mean_steps,std_steps
  std::string to_csv() const;
  bool operator==(const MetricsReport&) const = default;
};

class EvalError : public std::runtime_error {
 public:
  EvalError(std::string game, int run, const std::string& what)
      : std::runtime_error("game " + game + " run " + std::to_string(run) + ": " + what),
        game_(std::move(game)),
        run_(run) {}
  const std::string& game() const { return game_; }
  int run() const { return run_; }

 private:
  std::string game_;
  int run_;
};

inline constexpr int kDefaultRuns = 5;

struct EvalSpec {
  std::string difficulty = "easy";
  std::string split = "IN";
  int runs = kDefaultRuns;
};

// run seed = derive_seed(master, agent, game id, run index)
std::uint64_t run_seed(std::uint64_t master, agent::AgentKind kind, const std::string& game_id, int run);

MetricsReport evaluate(agent::AgentKind kind, agent::AgentResources& res, const std::vector<agent::Game>& games,
                       const agent::TrainConfig& config, const EvalSpec& spec);

// Concatenates cells; every report must share step_cap.
MetricsReport merge(const std::vector<MetricsReport>& reports);

struct Comparison {
  std::string text;  // aligned table, best cells marked with '*'
  std::string csv;
};

// Rows are agents; columns are difficulty x split, once for score and once
// for steps. Best = highest score / lowest steps per column.
Comparison compare(const std::vector<MetricsReport>& reports);

// Index of the best value (lowest index on ties).
std::size_t best_index(const std::vector<double>& values, bool higher_is_better);

// Line plot of normalized score per episode, one series per name.
std::string curves_svg(const std::map<std::string, std::vector<agent::CurveRow>>& curves, const std::string& title);

// Bundled MiniHouse game sets: the master pool is split once per split_seed
// (30% of each tag family held out) and `count` worlds are drawn from the
// requested side.
struct GameSetSpec {
  envcore::Level level = envcore::Level::easy;
  int count = 10;
  bool out_split = false;
  std::uint64_t split_seed = 1;
  std::uint64_t world_seed = 1;
};

inline constexpr double kOutFraction = 0.3;

std::vector<agent::Game> bundled_games(const GameSetSpec& spec);

// Expected steps of the uniform random walk over admissible actions, by exact
// dynamic programming on the reachable state graph: E[min(T, step_cap)].
double random_walk_expected_steps(std::shared_ptr<const envcore::WorldSpec> world, int step_cap);
// Absorption time without a cap, from (I - Q) t = 1.
double random_walk_absorption_time(std::shared_ptr<const envcore::WorldSpec> world);

}  // namespace vistext::eval
