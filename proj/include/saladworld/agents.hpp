#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "saladworld/nn.hpp"
#include "saladworld/replay.hpp"
#include "saladworld/rng.hpp"
#include "saladworld/world.hpp"

namespace saladworld {

// ---- update rules (temporal-difference deltas) ----

double q_learning_delta(double r, double gamma, double q_next_max, double q_sa);
// State-based consistent rule: the same-state branch contracts Q toward r.
double cql_delta(double r, double gamma, double q_next_max, double q_sa, bool same_state);
// History-based consistent rule blended by the admissibility estimate xi.
// q_boot is Q(h_{t+1}, a_t) in the default form; passing Q(h_t, a_t) gives the
// alternate form kept behind AgentConfig::cqlh_form.
double cqlh_delta(double r, double gamma, double q_next_max, double q_boot,
                  double xi, double q_sa);
// Aggressive variant: inadmissible mass is dropped instead of recycled.
double acqlh_delta(double r, double gamma, double q_next_max, double xi, double q_sa);

// ---- configuration ----

enum class AgentKind { Tabular, LiTabular, WindowTabular, Neural };
enum class GatingKind { None, Dropout, Masking, Cqlh, Acqlh };
enum class EstimatorKind { Classifier, Oracle, ConstantOne };
enum class CqlhForm { BootstrapNext, SameHistory };

const char* to_string(AgentKind k);
const char* to_string(GatingKind g);

struct AgentConfig {
  AgentKind kind = AgentKind::Neural;
  GatingKind gating = GatingKind::None;
  EstimatorKind estimator = EstimatorKind::Classifier;
  CqlhForm cqlh_form = CqlhForm::BootstrapNext;
  double mask_threshold = 0.001;  // c
  double eps1 = 0.0;              // gating softness: chance of keeping the full set
  int heads = 5;                  // K context heads
  double gamma = 0.9;
  double alpha = 0.001;           // Adam step size; tabular step size
  int seq_len = 15;               // l
  int min_history = 6;            // n: steps 1..n-1 carry no loss
  int batch = 32;
  std::size_t replay_capacity = 5000;
  double tau_p = 0.25;
  double tau_n = 0.25;
  int window_m = 4;               // window-hash pair count
  bool classifier_on_forced = false;
  int embed_dim = 20;
  int encoder_hidden = 64;
  int context_hidden = 512;
  int scorer_hidden = 128;
};

std::string agent_config_to_json(const AgentConfig& cfg);
AgentConfig agent_config_from_json(const std::string& json_text);

// ---- action gating ----

// Set of candidate action ids per scheme. Dropout keeps each action with
// probability xi[a]; masking keeps xi[a] >= c; cqlh/acqlh and none keep the
// full set. With probability eps1 the full set is used instead. An empty
// result falls back to the full set and reports it through fell_back.
std::vector<int> build_gated_set(const std::vector<double>& xi, GatingKind gating,
                                 double mask_threshold, double eps1, int action_count,
                                 Rng& rng, bool* fell_back = nullptr);

// Lowest index wins ties; actions outside `allowed` are skipped (their stored
// values are never modified).
int argmax_over(const std::vector<double>& q, const std::vector<int>& allowed);
int epsilon_greedy(const std::vector<double>& q, const std::vector<int>& allowed,
                   double epsilon, Rng& rng);

// ---- score contextualisation ----

// Maps cumulative scores to context heads, assigning heads round-robin in
// order of first appearance. The table is part of agent checkpoints.
class ScoreContext {
 public:
  explicit ScoreContext(int heads) : heads_(heads) {}
  int head_for(int score);  // assigns on first sight
  // Lookup without insertion; unseen scores report the head they would get.
  int peek_head(int score) const;
  int heads() const { return heads_; }
  const std::map<int, int>& table() const { return table_; }
  void restore(const std::map<int, int>& table) { table_ = table; }

 private:
  int heads_;
  std::map<int, int> table_;
};

// ---- agent interface ----

// What an agent may observe at one step. Oracle fields are only populated for
// the configured variants (oracle gating / LI keys).
struct StepView {
  const std::string* feedback = nullptr;
  const std::string* look = nullptr;
  const std::string* inventory = nullptr;
  const std::vector<int>* oracle_admissible = nullptr;
  int prev_action = -1;
  int score = 0;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual AgentKind kind() const = 0;
  virtual void begin_episode() = 0;
  virtual int act(const StepView& view, double epsilon, Rng& rng) = 0;
  // Called once per executed step; advances history encoders and lets tabular
  // variants learn online. next_view describes o_{t+1}.
  virtual void observe(const StepView& view, int action, int reward, bool terminal,
                       const StepView& next_view) = 0;
  virtual void end_episode(EpisodeRecord episode) { (void)episode; }
  virtual double train_step(Rng& rng) { (void)rng; return 0.0; }
  virtual void sync_target() {}
  virtual void set_learning(bool on) { learning_ = on; }
  virtual long gating_fallbacks() const { return 0; }
  virtual void save(std::ostream& out) const = 0;

 protected:
  bool learning_ = true;
};

// ---- tabular agents ----

// History keys for the hash-table agents: latest feedback (Tabular), rendered
// look + inventory text (LiTabular), or the last m (action, feedback) pairs
// (WindowTabular).
class TabularAgent : public Agent {
 public:
  TabularAgent(const AgentConfig& cfg, const WorldSpec& world);

  AgentKind kind() const override { return cfg_.kind; }
  void begin_episode() override;
  int act(const StepView& view, double epsilon, Rng& rng) override;
  void observe(const StepView& view, int action, int reward, bool terminal,
               const StepView& next_view) override;
  void save(std::ostream& out) const override;
  void load_table(std::istream& in);

  const AgentConfig& config() const { return cfg_; }
  std::size_t table_size() const { return q_.size(); }
  const std::vector<double>* row(const std::string& key) const;

 private:
  AgentConfig cfg_;
  int action_count_;
  std::vector<std::string> action_texts_;
  std::unordered_map<std::string, std::vector<double>> q_;
  std::deque<std::pair<std::string, std::string>> history_;  // (action, feedback)
  std::string last_key_;

  std::string key_for(const StepView& view) const;
  std::vector<double>& q_row(const std::string& key);
};

// ---- recurrent score-contextualised agent ----

struct EncodedStep {
  std::vector<double> h, c;
};

class NeuralAgent : public Agent {
 public:
  NeuralAgent(const AgentConfig& cfg, const WorldSpec& world, std::uint64_t init_seed);

  AgentKind kind() const override { return AgentKind::Neural; }
  void begin_episode() override;
  int act(const StepView& view, double epsilon, Rng& rng) override;
  void observe(const StepView& view, int action, int reward, bool terminal,
               const StepView& next_view) override;
  void end_episode(EpisodeRecord episode) override;
  // One gradient step on a replay minibatch (TD loss + classifier BCE).
  double train_step(Rng& rng) override;
  // Classifier-only gradient step (BCE), for admissibility pretraining.
  double train_classifier_step(Rng& rng);
  void sync_target() override;
  long gating_fallbacks() const override { return fallbacks_; }
  void save(std::ostream& out) const override;
  void load(std::istream& in);

  // Targets for one sampled subsequence, computed with the target parameters
  // under the configured rule. y[i] pairs with steps sample.start + i.
  struct SeqTargets {
    std::vector<double> y;
    std::vector<double> xi;  // estimate used for the blend, per step
  };
  SeqTargets compute_targets(const ReplayMemory::Sample& sample) const;

  // Unrolls the online network over a full episode; returns per-step
  // admissibility estimates for every action (rows follow episode.steps).
  std::vector<std::vector<double>> classifier_rollout(const EpisodeRecord& episode) const;
  // Same unroll, returning per-step Q rows from the active head.
  std::vector<std::vector<double>> q_rollout(const EpisodeRecord& episode) const;

  const AgentConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const nn::ParamStore& target_params() const { return target_; }
  ScoreContext& context() { return context_; }
  ReplayMemory& replay() { return replay_; }
  int vocab_size() const { return vocab_size_; }

 private:
  AgentConfig cfg_;
  int action_count_;
  int vocab_size_;
  std::vector<std::vector<int>> action_tokens_;
  nn::ParamStore params_;
  nn::ParamStore target_;
  ScoreContext context_;
  ReplayMemory replay_;
  const Vocab* vocab_;
  long fallbacks_ = 0;

  EncodedStep state_;  // episode hidden state
  mutable std::unordered_map<std::string, std::vector<int>> token_cache_;
  // Sentence vectors under the target parameters stay valid between syncs.
  mutable std::map<std::vector<int>, std::vector<double>> target_enc_cache_;

  const std::vector<int>& tokens_for(const std::string& text) const;
  std::vector<double> target_encode(const std::vector<int>& tokens) const;
  double run_batch(Rng& rng, bool td_loss, bool bce_loss);

  friend std::unique_ptr<Agent> load_agent_checkpoint(const std::string&, const WorldSpec&,
                                                      AgentConfig*);
};

std::unique_ptr<Agent> make_agent(const AgentConfig& cfg, const WorldSpec& world,
                                  std::uint64_t init_seed);

// Checkpoints carry the agent config, the score-context table, and either the
// parameter tensors or the tabular hash dump (format in docs/checkpoints.md).
void save_agent_checkpoint(const std::string& path, const Agent& agent,
                           const AgentConfig& cfg, int level);
std::unique_ptr<Agent> load_agent_checkpoint(const std::string& path, const WorldSpec& world,
                                             AgentConfig* cfg_out = nullptr);

}  // namespace saladworld
