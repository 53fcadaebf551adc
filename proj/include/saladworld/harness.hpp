#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "saladworld/agents.hpp"
#include "saladworld/levels.hpp"

namespace saladworld {

struct RunConfig {
  int level = 1;
  AgentConfig agent;
  bool oracle_gating = false;   // swap the true admissible set in for xi
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  long max_steps = 100000;      // environment steps per seed
  int episode_cap = 0;          // T; 0 picks the level default (100 for L1, 200 above)
  int look_interval = 20;       // forced look period
  int update_every = 4;         // gradient step cadence in env steps
  int target_sync = 1000;       // target parameter sync cadence in env steps
  double eps_start = 1.0;
  double eps_end = 0.1;
  long eps_anneal_steps = 1000000;
  int eval_episodes = 1;        // greedy episodes after training
  std::string out_dir;          // empty = no files written
  std::string levels_dir;       // optional override for level files
};

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& json_text);

int episode_cap_for(const RunConfig& cfg);
double epsilon_at(const RunConfig& cfg, long step);  // linear anneal, then floor

// One row per finished episode.
struct MetricsRow {
  long step = 0;       // global env step at episode end
  long episode = 0;
  int score = 0;
  double fraction = 0.0;  // completed subtasks / total subtasks
  double epsilon = 0.0;
  std::uint64_t seed = 0;
};

extern const char* kMetricsHeader;  // "step,episode,score,fraction,epsilon,seed"

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

struct EvalSummary {
  int episodes = 0;
  double mean_fraction = 0.0;
  double std_fraction = 0.0;
  double mean_score = 0.0;
  double std_score = 0.0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  EvalSummary eval;
  long gating_fallbacks = 0;
};

// Trains one seed to completion; optionally keeps the agent alive for callers
// that want to probe it afterwards.
SeedResult train_single_seed(const RunConfig& cfg, std::uint64_t seed, const WorldSpec& world,
                             std::ostream* log = nullptr,
                             std::unique_ptr<Agent>* agent_out = nullptr);

// Runs every seed, writing config.json, metrics_seed<S>.csv,
// checkpoint_seed<S>.bin and run.log under cfg.out_dir.
std::vector<SeedResult> train(const RunConfig& cfg);

// Greedy rollouts (epsilon = 0, learning off, forced look still applied).
EvalSummary evaluate_agent(const WorldSpec& world, Agent& agent, const RunConfig& cfg,
                           int episodes, std::uint64_t seed);
EvalSummary evaluate_checkpoint(const std::string& checkpoint_path, const RunConfig& cfg,
                                int episodes);

// Interactive session; reads commands from `in` until EOF or :quit.
void play(const WorldSpec& world, std::istream& in, std::ostream& out);

// Trailing mean over a step window: entry i averages every sample whose step
// lies in (step_i - window, step_i]. Window 1 is the identity for distinct
// integer steps.
std::vector<double> moving_average(const std::vector<std::pair<long, double>>& series,
                                   long window);

struct AggregateRow {
  long step = 0;
  double mean = 0.0;
  double stddev = 0.0;
  int seeds = 0;
};

// Aligns per-seed fraction curves on a uniform step grid (trailing moving
// average per seed, then mean +- std across seeds).
std::vector<AggregateRow> aggregate_fraction(const std::vector<std::vector<MetricsRow>>& runs,
                                             long window, long grid);
void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows);

}  // namespace saladworld
