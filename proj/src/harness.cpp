#include "saladworld/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace saladworld {

const char* kMetricsHeader = "step,episode,score,fraction,epsilon,seed";

std::string run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["level"] = cfg.level;
  j["agent"] = nlohmann::json::parse(agent_config_to_json(cfg.agent));
  j["oracle_gating"] = cfg.oracle_gating;
  j["seeds"] = cfg.seeds;
  j["max_steps"] = cfg.max_steps;
  j["episode_cap"] = cfg.episode_cap;
  j["look_interval"] = cfg.look_interval;
  j["update_every"] = cfg.update_every;
  j["target_sync"] = cfg.target_sync;
  j["eps_start"] = cfg.eps_start;
  j["eps_end"] = cfg.eps_end;
  j["eps_anneal_steps"] = cfg.eps_anneal_steps;
  j["eval_episodes"] = cfg.eval_episodes;
  j["out_dir"] = cfg.out_dir;
  j["levels_dir"] = cfg.levels_dir;
  return j.dump(2);
}

RunConfig run_config_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  RunConfig cfg;
  cfg.level = j.value("level", cfg.level);
  if (j.contains("agent")) cfg.agent = agent_config_from_json(j["agent"].dump());
  cfg.oracle_gating = j.value("oracle_gating", cfg.oracle_gating);
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  cfg.max_steps = j.value("max_steps", cfg.max_steps);
  cfg.episode_cap = j.value("episode_cap", cfg.episode_cap);
  cfg.look_interval = j.value("look_interval", cfg.look_interval);
  cfg.update_every = j.value("update_every", cfg.update_every);
  cfg.target_sync = j.value("target_sync", cfg.target_sync);
  cfg.eps_start = j.value("eps_start", cfg.eps_start);
  cfg.eps_end = j.value("eps_end", cfg.eps_end);
  cfg.eps_anneal_steps = j.value("eps_anneal_steps", cfg.eps_anneal_steps);
  cfg.eval_episodes = j.value("eval_episodes", cfg.eval_episodes);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.levels_dir = j.value("levels_dir", cfg.levels_dir);
  return cfg;
}

int episode_cap_for(const RunConfig& cfg) {
  if (cfg.episode_cap > 0) return cfg.episode_cap;
  return cfg.level == 1 ? 100 : 200;
}

double epsilon_at(const RunConfig& cfg, long step) {
  if (step >= cfg.eps_anneal_steps) return cfg.eps_end;
  double frac = static_cast<double>(step) / static_cast<double>(cfg.eps_anneal_steps);
  return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write metrics: " + path);
  out << kMetricsHeader << "\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%ld,%ld,%d,%.6f,%.6f,%llu\n", r.step, r.episode, r.score,
                  r.fraction, r.epsilon, static_cast<unsigned long long>(r.seed));
    out << buf;
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open metrics: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw ParseError("bad metrics header in " + path);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRow r;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(), "%ld,%ld,%d,%lf,%lf,%llu", &r.step, &r.episode, &r.score,
                    &r.fraction, &r.epsilon, &seed) != 6)
      throw ParseError("bad metrics row in " + path + ": " + line);
    r.seed = seed;
    rows.push_back(r);
  }
  return rows;
}

namespace {

struct EpisodeOutcome {
  int score = 0;
  double fraction = 0.0;
  int steps = 0;
  bool done = false;
};

// One episode of the training protocol: the opening command is "look", a look
// is forced every look_interval steps, and the agent sees only the latest
// feedback (plus whatever its variant is entitled to).
EpisodeOutcome run_episode(const WorldSpec& world, Agent& agent, const RunConfig& cfg,
                           Rng& rng, long* global_step, bool training) {
  int look_id = world.action_index({Verb::Look, -1, -1});
  if (look_id < 0) throw ValidationError("level has no look action");
  const bool want_li = agent.kind() == AgentKind::LiTabular;
  const bool want_oracle = cfg.oracle_gating || cfg.agent.estimator == EstimatorKind::Oracle;
  const int total_subtasks = static_cast<int>(world.subtasks.size());
  const int cap = episode_cap_for(cfg);

  GameState state = initial_state(world);
  agent.begin_episode();
  std::string obs = render_look(world, state);
  int prev_action = look_id;

  std::string cur_look, cur_inv, next_look, next_inv;
  std::vector<int> cur_oracle, next_oracle;
  if (want_li) {
    cur_look = render_look(world, state);
    cur_inv = render_inventory(world, state);
  }
  if (want_oracle) cur_oracle = admissible_set_oracle(world, state);

  EpisodeRecord record;
  EpisodeOutcome outcome;
  for (int t = 1; t <= cap; ++t) {
    StepView view;
    view.feedback = &obs;
    if (want_li) {
      view.look = &cur_look;
      view.inventory = &cur_inv;
    }
    if (want_oracle) view.oracle_admissible = &cur_oracle;
    view.prev_action = prev_action;
    view.score = state.score;

    double epsilon = training ? epsilon_at(cfg, *global_step) : 0.0;
    int action = agent.act(view, epsilon, rng);
    bool forced = cfg.look_interval > 0 && t % cfg.look_interval == 0;
    if (forced) action = look_id;

    Transition tr = step_action(world, state, action);
    ++*global_step;

    StepRecord rec;
    rec.obs = world.vocab.encode(obs);
    rec.next_obs = world.vocab.encode(tr.feedback);
    rec.prev_action = prev_action;
    rec.action = action;
    rec.reward = tr.reward;
    rec.score = state.score;
    rec.admissible = tr.admissible;
    rec.terminal = tr.done;
    rec.forced = forced;
    record.steps.push_back(std::move(rec));

    StepView next_view;
    next_view.feedback = &tr.feedback;
    if (want_li) {
      next_look = render_look(world, tr.next);
      next_inv = render_inventory(world, tr.next);
      next_view.look = &next_look;
      next_view.inventory = &next_inv;
    }
    if (want_oracle) {
      next_oracle = admissible_set_oracle(world, tr.next);
      next_view.oracle_admissible = &next_oracle;
    }
    next_view.prev_action = action;
    next_view.score = tr.next.score;
    agent.observe(view, action, tr.reward, tr.done, next_view);

    state = tr.next;
    obs = tr.feedback;
    prev_action = action;
    if (want_li) {
      cur_look = next_look;
      cur_inv = next_inv;
    }
    if (want_oracle) cur_oracle = next_oracle;
    outcome.steps = t;
    outcome.done = tr.done;

    if (training) {
      if (cfg.update_every > 0 && *global_step % cfg.update_every == 0) agent.train_step(rng);
      if (cfg.target_sync > 0 && *global_step % cfg.target_sync == 0) agent.sync_target();
    }
    if (tr.done) break;
    if (training && *global_step >= cfg.max_steps) break;
  }
  outcome.score = state.score;
  outcome.fraction = total_subtasks > 0
                         ? static_cast<double>(state.subtasks_completed()) / total_subtasks
                         : 0.0;
  if (training) agent.end_episode(std::move(record));
  return outcome;
}

}  // namespace

SeedResult train_single_seed(const RunConfig& cfg, std::uint64_t seed, const WorldSpec& world,
                             std::ostream* log, std::unique_ptr<Agent>* agent_out) {
  Rng rng(seed);
  auto agent = make_agent(cfg.agent, world, seed);
  SeedResult result;
  result.seed = seed;

  long global_step = 0;
  long episode = 0;
  while (global_step < cfg.max_steps) {
    EpisodeOutcome out = run_episode(world, *agent, cfg, rng, &global_step, true);
    ++episode;
    MetricsRow row;
    row.step = global_step;
    row.episode = episode;
    row.score = out.score;
    row.fraction = out.fraction;
    row.epsilon = epsilon_at(cfg, global_step);
    row.seed = seed;
    result.rows.push_back(row);
    if (log) {
      *log << "[seed " << seed << "] episode " << episode << " step " << global_step
           << " score " << out.score << " fraction " << out.fraction << " epsilon "
           << row.epsilon << "\n";
    }
  }
  result.eval = evaluate_agent(world, *agent, cfg, cfg.eval_episodes, seed);
  result.gating_fallbacks = agent->gating_fallbacks();
  if (log) {
    *log << "[seed " << seed << "] eval mean_fraction " << result.eval.mean_fraction
         << " mean_score " << result.eval.mean_score << " gating_fallbacks "
         << result.gating_fallbacks << "\n";
  }
  if (agent_out) *agent_out = std::move(agent);
  return result;
}

std::vector<SeedResult> train(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  if (cfg.oracle_gating) cfg.agent.estimator = EstimatorKind::Oracle;
  if (!cfg.levels_dir.empty()) set_level_data_dir(cfg.levels_dir);
  WorldSpec world = load_level(cfg.level);

  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream config_out(cfg.out_dir + "/config.json");
    config_out << run_config_to_json(cfg) << "\n";
    log.open(cfg.out_dir + "/run.log");
  }

  std::vector<SeedResult> results;
  for (std::uint64_t seed : cfg.seeds) {
    std::unique_ptr<Agent> agent;
    SeedResult res = train_single_seed(cfg, seed, world, log.is_open() ? &log : nullptr, &agent);
    if (!cfg.out_dir.empty()) {
      std::string tag = std::to_string(seed);
      write_metrics_csv(cfg.out_dir + "/metrics_seed" + tag + ".csv", res.rows);
      save_agent_checkpoint(cfg.out_dir + "/checkpoint_seed" + tag + ".bin", *agent, cfg.agent,
                            cfg.level);
    }
    results.push_back(std::move(res));
  }
  return results;
}

EvalSummary evaluate_agent(const WorldSpec& world, Agent& agent, const RunConfig& cfg,
                           int episodes, std::uint64_t seed) {
  agent.set_learning(false);
  Rng rng(seed ^ 0xe7a1ce5c0ffee000ull);
  std::vector<double> fractions, scores;
  long step = 0;
  for (int e = 0; e < episodes; ++e) {
    EpisodeOutcome out = run_episode(world, agent, cfg, rng, &step, false);
    fractions.push_back(out.fraction);
    scores.push_back(out.score);
  }
  agent.set_learning(true);

  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto stddev = [&](const std::vector<double>& v, double m) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
  };
  EvalSummary summary;
  summary.episodes = episodes;
  summary.mean_fraction = mean(fractions);
  summary.std_fraction = stddev(fractions, summary.mean_fraction);
  summary.mean_score = mean(scores);
  summary.std_score = stddev(scores, summary.mean_score);
  return summary;
}

EvalSummary evaluate_checkpoint(const std::string& checkpoint_path, const RunConfig& cfg_in,
                                int episodes) {
  RunConfig cfg = cfg_in;
  if (!cfg.levels_dir.empty()) set_level_data_dir(cfg.levels_dir);
  WorldSpec world = load_level(cfg.level);
  AgentConfig loaded;
  auto agent = load_agent_checkpoint(checkpoint_path, world, &loaded);
  cfg.agent = loaded;
  if (cfg.oracle_gating) cfg.agent.estimator = EstimatorKind::Oracle;
  std::uint64_t seed = cfg.seeds.empty() ? 1 : cfg.seeds.front();
  return evaluate_agent(world, *agent, cfg, episodes, seed);
}

void play(const WorldSpec& world, std::istream& in, std::ostream& out) {
  GameState state = initial_state(world);
  out << world.title << "\n\n" << render_look(world, state) << "\n";
  std::string line;
  int moves = 0;
  while (out << "> " << std::flush, std::getline(in, line)) {
    if (line == ":quit" || line == ":q") break;
    if (line == ":score") {
      out << "Score: " << state.score << " of " << world.max_score() << " in " << moves
          << " moves.\n";
      continue;
    }
    try {
      Transition tr = step(world, state, parse_command(world, line));
      ++moves;
      state = tr.next;
      out << tr.feedback << "\n";
      if (tr.reward > 0)
        out << "[Your score went up by " << tr.reward << ". Score: " << state.score << "]\n";
      if (tr.done) {
        out << "Every subtask is complete. Final score " << state.score << " in " << moves
            << " moves.\n";
        break;
      }
    } catch (const std::exception& e) {
      out << e.what() << "\n";
    }
  }
}

std::vector<double> moving_average(const std::vector<std::pair<long, double>>& series,
                                   long window) {
  std::vector<double> out(series.size(), 0.0);
  double sum = 0.0;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i].second;
    while (series[lo].first <= series[i].first - window) {
      sum -= series[lo].second;
      ++lo;
    }
    out[i] = sum / static_cast<double>(i - lo + 1);
  }
  return out;
}

std::vector<AggregateRow> aggregate_fraction(const std::vector<std::vector<MetricsRow>>& runs,
                                             long window, long grid) {
  std::vector<AggregateRow> rows;
  if (runs.empty() || grid <= 0) return rows;
  long max_step = 0;
  std::vector<std::vector<std::pair<long, double>>> series(runs.size());
  std::vector<std::vector<double>> smoothed(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const auto& row : runs[r]) series[r].emplace_back(row.step, row.fraction);
    if (!series[r].empty()) max_step = std::max(max_step, series[r].back().first);
    smoothed[r] = moving_average(series[r], window);
  }
  for (long g = grid; g <= max_step; g += grid) {
    AggregateRow agg;
    agg.step = g;
    std::vector<double> vals;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      // last sample at or before the grid point
      const auto& s = series[r];
      auto it = std::upper_bound(s.begin(), s.end(), std::make_pair(g, 2.0));
      if (it == s.begin()) continue;
      vals.push_back(smoothed[r][static_cast<std::size_t>(it - s.begin()) - 1]);
    }
    if (vals.empty()) continue;
    double m = 0.0;
    for (double v : vals) m += v;
    m /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - m) * (v - m);
    agg.mean = m;
    agg.stddev = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size())) : 0.0;
    agg.seeds = static_cast<int>(vals.size());
    rows.push_back(agg);
  }
  return rows;
}

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write aggregate: " + path);
  out << "step,mean_fraction,std_fraction,seeds\n";
  char buf[120];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%ld,%.6f,%.6f,%d\n", r.step, r.mean, r.stddev, r.seeds);
    out << buf;
  }
}

}  // namespace saladworld
