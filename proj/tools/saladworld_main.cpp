#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "saladworld/harness.hpp"

using namespace saladworld;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_eval(const EvalSummary& s) {
  std::printf("episodes %d mean_fraction %.6f std_fraction %.6f mean_score %.3f std_score %.3f\n",
              s.episodes, s.mean_fraction, s.std_fraction, s.mean_score, s.std_score);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saladworld: a text-game workbench for admissibility-aware Q-learning"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string agent_kind = "neural", gating = "none", estimator = "classifier";
  std::string cqlh_form = "bootstrap-next";

  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--level", cfg.level, "level 1..7")->check(CLI::Range(1, 7));
    cmd->add_option("--agent", agent_kind,
                    "agent kind: tabular | li-tabular | window-tabular | neural");
    cmd->add_option("--gating", gating, "action gating: none | dropout | masking | cqlh | acqlh");
    cmd->add_option("--estimator", estimator,
                    "admissibility estimate: classifier | oracle | constant-one");
    cmd->add_option("--cqlh-form", cqlh_form, "cqlh bootstrap: bootstrap-next | same-history");
    cmd->add_flag("--oracle-gating", cfg.oracle_gating, "use the true admissible set");
    cmd->add_option("--mask-threshold", cfg.agent.mask_threshold, "masking threshold c");
    cmd->add_option("--eps1", cfg.agent.eps1, "gating softness");
    cmd->add_option("--heads", cfg.agent.heads, "context heads K");
    cmd->add_option("--gamma", cfg.agent.gamma, "discount");
    cmd->add_option("--alpha", cfg.agent.alpha, "learning rate");
    cmd->add_option("--seq-len", cfg.agent.seq_len, "replay subsequence length");
    cmd->add_option("--min-history", cfg.agent.min_history, "burn-in steps without loss");
    cmd->add_option("--batch", cfg.agent.batch, "minibatch size");
    cmd->add_option("--replay-capacity", cfg.agent.replay_capacity, "episodic buffer capacity");
    cmd->add_option("--tau-p", cfg.agent.tau_p, "positive pool probability");
    cmd->add_option("--tau-n", cfg.agent.tau_n, "negative pool probability");
    cmd->add_option("--window-m", cfg.agent.window_m, "window-hash pair count");
    cmd->add_option("--embed-dim", cfg.agent.embed_dim, "word embedding size");
    cmd->add_option("--encoder-hidden", cfg.agent.encoder_hidden, "sentence encoder width");
    cmd->add_option("--context-hidden", cfg.agent.context_hidden, "context memory width");
    cmd->add_option("--scorer-hidden", cfg.agent.scorer_hidden, "scorer hidden width");
    cmd->add_option("--seeds", cfg.seeds, "training seeds")->delimiter(',');
    cmd->add_option("--steps", cfg.max_steps, "environment steps per seed");
    cmd->add_option("--episode-cap", cfg.episode_cap, "episode step cap (0 = level default)");
    cmd->add_option("--look-interval", cfg.look_interval, "forced look period");
    cmd->add_option("--update-every", cfg.update_every, "train step cadence");
    cmd->add_option("--target-sync", cfg.target_sync, "target sync cadence");
    cmd->add_option("--eps-start", cfg.eps_start, "initial epsilon");
    cmd->add_option("--eps-end", cfg.eps_end, "final epsilon");
    cmd->add_option("--eps-anneal-steps", cfg.eps_anneal_steps, "anneal length");
    cmd->add_option("--eval-episodes", cfg.eval_episodes, "greedy episodes after training");
    cmd->add_option("--levels-dir", cfg.levels_dir, "level file directory override");
  };

  auto* train_cmd = app.add_subcommand("train", "train agents and write metrics");
  add_run_options(train_cmd);
  train_cmd->add_option("--out", cfg.out_dir, "run directory")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "greedy evaluation of a checkpoint");
  std::string run_dir, checkpoint;
  int episodes = 5;
  std::uint64_t eval_seed = 1;
  eval_cmd->add_option("--run", run_dir, "run directory written by train");
  eval_cmd->add_option("--checkpoint", checkpoint, "explicit checkpoint file");
  eval_cmd->add_option("--level", cfg.level, "level (with --checkpoint)");
  eval_cmd->add_option("--episodes", episodes, "evaluation episodes");
  eval_cmd->add_option("--seed", eval_seed, "seed whose checkpoint to load / eval rng");
  eval_cmd->add_option("--levels-dir", cfg.levels_dir, "level file directory override");

  auto* play_cmd = app.add_subcommand("play", "interactive session on one level");
  int play_level = 1;
  std::string play_levels_dir;
  play_cmd->add_option("--level", play_level, "level 1..7")->check(CLI::Range(1, 7));
  play_cmd->add_option("--levels-dir", play_levels_dir, "level file directory override");

  auto* agg_cmd = app.add_subcommand("aggregate", "merge per-seed metrics into one curve");
  std::string agg_run, agg_out;
  long window = 20000, grid = 1000;
  agg_cmd->add_option("--run", agg_run, "run directory with metrics_seed*.csv")->required();
  agg_cmd->add_option("--out", agg_out, "output csv (default <run>/aggregate.csv)");
  agg_cmd->add_option("--window", window, "trailing moving-average window in steps");
  agg_cmd->add_option("--grid", grid, "step grid spacing");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      AgentConfig a = cfg.agent;
      a.kind = agent_config_from_json("{\"kind\":\"" + agent_kind + "\"}").kind;
      a.gating = agent_config_from_json("{\"gating\":\"" + gating + "\"}").gating;
      a.estimator = agent_config_from_json("{\"estimator\":\"" + estimator + "\"}").estimator;
      a.cqlh_form = agent_config_from_json("{\"cqlh_form\":\"" + cqlh_form + "\"}").cqlh_form;
      cfg.agent = a;
      auto results = train(cfg);
      for (const auto& res : results) {
        std::printf("seed %llu: episodes %zu final_score %d eval_fraction %.6f\n",
                    static_cast<unsigned long long>(res.seed), res.rows.size(),
                    res.rows.empty() ? 0 : res.rows.back().score, res.eval.mean_fraction);
      }
      return 0;
    }
    if (eval_cmd->parsed()) {
      RunConfig rc = cfg;
      if (!run_dir.empty()) {
        rc = run_config_from_json(slurp(run_dir + "/config.json"));
        if (!cfg.levels_dir.empty()) rc.levels_dir = cfg.levels_dir;
        if (checkpoint.empty())
          checkpoint = run_dir + "/checkpoint_seed" + std::to_string(eval_seed) + ".bin";
      }
      if (checkpoint.empty())
        throw ParseError("evaluate needs --run or --checkpoint");
      rc.seeds = {eval_seed};
      print_eval(evaluate_checkpoint(checkpoint, rc, episodes));
      return 0;
    }
    if (play_cmd->parsed()) {
      if (!play_levels_dir.empty()) set_level_data_dir(play_levels_dir);
      WorldSpec world = load_level(play_level);
      play(world, std::cin, std::cout);
      return 0;
    }
    if (agg_cmd->parsed()) {
      std::vector<std::vector<MetricsRow>> runs;
      std::vector<std::string> files;
      for (const auto& entry : std::filesystem::directory_iterator(agg_run)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("metrics_seed", 0) == 0 && name.size() > 4 &&
            name.substr(name.size() - 4) == ".csv")
          files.push_back(entry.path().string());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) runs.push_back(read_metrics_csv(f));
      if (runs.empty()) throw ParseError("no metrics_seed*.csv under " + agg_run);
      auto rows = aggregate_fraction(runs, window, grid);
      if (agg_out.empty()) agg_out = agg_run + "/aggregate.csv";
      write_aggregate_csv(agg_out, rows);
      std::printf("wrote %zu rows from %zu seeds to %s\n", rows.size(), runs.size(),
                  agg_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
