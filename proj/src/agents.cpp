#include "saladworld/agents.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace saladworld {

double q_learning_delta(double r, double gamma, double q_next_max, double q_sa) {
  return r + gamma * q_next_max - q_sa;
}

double cql_delta(double r, double gamma, double q_next_max, double q_sa, bool same_state) {
  if (same_state) return r + (gamma - 1.0) * q_sa;
  return r + gamma * q_next_max - q_sa;
}

double cqlh_delta(double r, double gamma, double q_next_max, double q_boot, double xi,
                  double q_sa) {
  // Left to right so xi = 1 reproduces q_learning_delta exactly.
  return ((r + gamma * q_next_max * xi) + gamma * q_boot * (1.0 - xi)) - q_sa;
}

double acqlh_delta(double r, double gamma, double q_next_max, double xi, double q_sa) {
  return r + gamma * q_next_max * xi - q_sa;
}

const char* to_string(AgentKind k) {
  switch (k) {
    case AgentKind::Tabular: return "tabular";
    case AgentKind::LiTabular: return "li-tabular";
    case AgentKind::WindowTabular: return "window-tabular";
    case AgentKind::Neural: return "neural";
  }
  return "neural";
}

const char* to_string(GatingKind g) {
  switch (g) {
    case GatingKind::None: return "none";
    case GatingKind::Dropout: return "dropout";
    case GatingKind::Masking: return "masking";
    case GatingKind::Cqlh: return "cqlh";
    case GatingKind::Acqlh: return "acqlh";
  }
  return "none";
}

namespace {

const char* to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::Classifier: return "classifier";
    case EstimatorKind::Oracle: return "oracle";
    case EstimatorKind::ConstantOne: return "constant-one";
  }
  return "classifier";
}

AgentKind agent_kind_from(const std::string& s) {
  if (s == "tabular") return AgentKind::Tabular;
  if (s == "li-tabular") return AgentKind::LiTabular;
  if (s == "window-tabular") return AgentKind::WindowTabular;
  if (s == "neural") return AgentKind::Neural;
  throw ParseError("unknown agent kind: " + s);
}

GatingKind gating_from(const std::string& s) {
  if (s == "none") return GatingKind::None;
  if (s == "dropout") return GatingKind::Dropout;
  if (s == "masking") return GatingKind::Masking;
  if (s == "cqlh") return GatingKind::Cqlh;
  if (s == "acqlh") return GatingKind::Acqlh;
  throw ParseError("unknown gating: " + s);
}

EstimatorKind estimator_from(const std::string& s) {
  if (s == "classifier") return EstimatorKind::Classifier;
  if (s == "oracle") return EstimatorKind::Oracle;
  if (s == "constant-one") return EstimatorKind::ConstantOne;
  throw ParseError("unknown estimator: " + s);
}

}  // namespace

std::string agent_config_to_json(const AgentConfig& cfg) {
  nlohmann::json j;
  j["kind"] = to_string(cfg.kind);
  j["gating"] = to_string(cfg.gating);
  j["estimator"] = to_string(cfg.estimator);
  j["cqlh_form"] = cfg.cqlh_form == CqlhForm::BootstrapNext ? "bootstrap-next" : "same-history";
  j["mask_threshold"] = cfg.mask_threshold;
  j["eps1"] = cfg.eps1;
  j["heads"] = cfg.heads;
  j["gamma"] = cfg.gamma;
  j["alpha"] = cfg.alpha;
  j["seq_len"] = cfg.seq_len;
  j["min_history"] = cfg.min_history;
  j["batch"] = cfg.batch;
  j["replay_capacity"] = cfg.replay_capacity;
  j["tau_p"] = cfg.tau_p;
  j["tau_n"] = cfg.tau_n;
  j["window_m"] = cfg.window_m;
  j["classifier_on_forced"] = cfg.classifier_on_forced;
  j["embed_dim"] = cfg.embed_dim;
  j["encoder_hidden"] = cfg.encoder_hidden;
  j["context_hidden"] = cfg.context_hidden;
  j["scorer_hidden"] = cfg.scorer_hidden;
  return j.dump(2);
}

AgentConfig agent_config_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  AgentConfig cfg;
  cfg.kind = agent_kind_from(j.value("kind", std::string(to_string(cfg.kind))));
  cfg.gating = gating_from(j.value("gating", std::string(to_string(cfg.gating))));
  cfg.estimator = estimator_from(j.value("estimator", std::string(to_string(cfg.estimator))));
  std::string form = j.value("cqlh_form", std::string("bootstrap-next"));
  if (form == "bootstrap-next") cfg.cqlh_form = CqlhForm::BootstrapNext;
  else if (form == "same-history") cfg.cqlh_form = CqlhForm::SameHistory;
  else throw ParseError("unknown cqlh_form: " + form);
  cfg.mask_threshold = j.value("mask_threshold", cfg.mask_threshold);
  cfg.eps1 = j.value("eps1", cfg.eps1);
  cfg.heads = j.value("heads", cfg.heads);
  cfg.gamma = j.value("gamma", cfg.gamma);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.seq_len = j.value("seq_len", cfg.seq_len);
  cfg.min_history = j.value("min_history", cfg.min_history);
  cfg.batch = j.value("batch", cfg.batch);
  cfg.replay_capacity = j.value("replay_capacity", cfg.replay_capacity);
  cfg.tau_p = j.value("tau_p", cfg.tau_p);
  cfg.tau_n = j.value("tau_n", cfg.tau_n);
  cfg.window_m = j.value("window_m", cfg.window_m);
  cfg.classifier_on_forced = j.value("classifier_on_forced", cfg.classifier_on_forced);
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  cfg.encoder_hidden = j.value("encoder_hidden", cfg.encoder_hidden);
  cfg.context_hidden = j.value("context_hidden", cfg.context_hidden);
  cfg.scorer_hidden = j.value("scorer_hidden", cfg.scorer_hidden);
  if (cfg.heads < 1) throw ParseError("heads must be >= 1");
  return cfg;
}

std::vector<int> build_gated_set(const std::vector<double>& xi, GatingKind gating,
                                 double mask_threshold, double eps1, int action_count,
                                 Rng& rng, bool* fell_back) {
  if (fell_back) *fell_back = false;
  std::vector<int> full(action_count);
  std::iota(full.begin(), full.end(), 0);
  if (gating == GatingKind::None || gating == GatingKind::Cqlh || gating == GatingKind::Acqlh)
    return full;
  if (eps1 > 0.0 && rng.uniform01() < eps1) return full;
  std::vector<int> out;
  for (int a = 0; a < action_count; ++a) {
    if (gating == GatingKind::Dropout) {
      if (rng.uniform01() < xi[a]) out.push_back(a);
    } else if (xi[a] >= mask_threshold) {
      out.push_back(a);
    }
  }
  if (out.empty()) {
    if (fell_back) *fell_back = true;
    return full;
  }
  return out;
}

int argmax_over(const std::vector<double>& q, const std::vector<int>& allowed) {
  int best = -1;
  for (int a : allowed)
    if (best < 0 || q[a] > q[best]) best = a;
  return best;
}

int epsilon_greedy(const std::vector<double>& q, const std::vector<int>& allowed,
                   double epsilon, Rng& rng) {
  if (epsilon > 0.0 && rng.uniform01() < epsilon)
    return allowed[rng.below(allowed.size())];
  return argmax_over(q, allowed);
}

int ScoreContext::head_for(int score) {
  auto it = table_.find(score);
  if (it != table_.end()) return it->second;
  int head = static_cast<int>(table_.size()) % heads_;
  table_.emplace(score, head);
  return head;
}

int ScoreContext::peek_head(int score) const {
  auto it = table_.find(score);
  if (it != table_.end()) return it->second;
  return static_cast<int>(table_.size()) % heads_;
}

// ---- binary io helpers ----

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  std::string s(read_u64(in), '\0');
  in.read(s.data(), static_cast<std::streamsize>(s.size()));
  return s;
}

constexpr std::uint64_t kCheckpointMagic = 0x31504b4357531aull;

}  // namespace

// ---- tabular agents ----

TabularAgent::TabularAgent(const AgentConfig& cfg, const WorldSpec& world)
    : cfg_(cfg),
      action_count_(static_cast<int>(world.action_set.size())),
      action_texts_(world.action_texts) {}

void TabularAgent::begin_episode() {
  history_.clear();
  last_key_.clear();
}

std::string TabularAgent::key_for(const StepView& view) const {
  switch (cfg_.kind) {
    case AgentKind::Tabular:
      return *view.feedback;
    case AgentKind::LiTabular:
      return *view.look + "\n" + *view.inventory;
    case AgentKind::WindowTabular: {
      std::string key;
      for (const auto& [a, f] : history_) key += a + "\x1f" + f + "\x1e";
      std::string prev = view.prev_action >= 0 ? action_texts_[view.prev_action] : "";
      key += prev + "\x1f" + *view.feedback;
      return key;
    }
    default:
      throw ValidationError("tabular key requested for a neural agent");
  }
}

std::vector<double>& TabularAgent::q_row(const std::string& key) {
  auto it = q_.find(key);
  if (it == q_.end())
    it = q_.emplace(key, std::vector<double>(action_count_, 0.0)).first;
  return it->second;
}

const std::vector<double>* TabularAgent::row(const std::string& key) const {
  auto it = q_.find(key);
  return it == q_.end() ? nullptr : &it->second;
}

int TabularAgent::act(const StepView& view, double epsilon, Rng& rng) {
  last_key_ = key_for(view);
  std::vector<double> xi(action_count_, 1.0);
  if (cfg_.estimator == EstimatorKind::Oracle && view.oracle_admissible) {
    std::fill(xi.begin(), xi.end(), 0.0);
    for (int a : *view.oracle_admissible) xi[a] = 1.0;
  }
  std::vector<int> allowed = build_gated_set(xi, cfg_.gating, cfg_.mask_threshold, cfg_.eps1,
                                             action_count_, rng, nullptr);
  return epsilon_greedy(q_row(last_key_), allowed, epsilon, rng);
}

void TabularAgent::observe(const StepView& view, int action, int reward, bool terminal,
                           const StepView& next_view) {
  if (last_key_.empty()) last_key_ = key_for(view);
  std::string key = last_key_;
  double xi_exec = 1.0;
  if (cfg_.estimator == EstimatorKind::Oracle && view.oracle_admissible) {
    xi_exec = 0.0;
    for (int a : *view.oracle_admissible)
      if (a == action) xi_exec = 1.0;
  }
  if (cfg_.kind == AgentKind::WindowTabular) {
    std::string prev = view.prev_action >= 0 ? action_texts_[view.prev_action] : "";
    history_.emplace_back(prev, *view.feedback);
    while (static_cast<int>(history_.size()) > cfg_.window_m - 1) history_.pop_front();
  }
  std::string next_key = key_for(next_view);
  if (learning_) {
    std::vector<double>& q = q_row(key);
    double q_sa = q[action];
    double q_next_max = 0.0;
    if (!terminal) {
      const std::vector<double>& qn = q_row(next_key);
      q_next_max = *std::max_element(qn.begin(), qn.end());
    }
    double delta;
    switch (cfg_.gating) {
      case GatingKind::Cqlh: {
        double q_boot = q_sa;
        if (cfg_.cqlh_form == CqlhForm::BootstrapNext && !terminal)
          q_boot = q_row(next_key)[action];
        else if (cfg_.cqlh_form == CqlhForm::BootstrapNext)
          q_boot = 0.0;
        delta = cqlh_delta(reward, cfg_.gamma, q_next_max, q_boot, xi_exec, q_sa);
        break;
      }
      case GatingKind::Acqlh:
        delta = acqlh_delta(reward, cfg_.gamma, q_next_max, xi_exec, q_sa);
        break;
      default:
        delta = q_learning_delta(reward, cfg_.gamma, q_next_max, q_sa);
    }
    q[action] += cfg_.alpha * delta;
  }
  last_key_ = next_key;
}

void TabularAgent::save(std::ostream& out) const {
  std::vector<const std::string*> keys;
  keys.reserve(q_.size());
  for (const auto& [k, row] : q_) keys.push_back(&k);
  std::sort(keys.begin(), keys.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });
  write_u64(out, q_.size());
  for (const std::string* k : keys) {
    write_string(out, *k);
    const auto& row = q_.at(*k);
    for (double v : row) out.write(reinterpret_cast<const char*>(&v), sizeof(double));
  }
}

void TabularAgent::load_table(std::istream& in) {
  q_.clear();
  std::size_t count = read_u64(in);
  for (std::size_t i = 0; i < count; ++i) {
    std::string key = read_string(in);
    std::vector<double> row(action_count_);
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
    q_.emplace(std::move(key), std::move(row));
  }
  if (!in) throw ParseError("truncated tabular checkpoint");
}

// ---- neural agent ----

NeuralAgent::NeuralAgent(const AgentConfig& cfg, const WorldSpec& world, std::uint64_t init_seed)
    : cfg_(cfg),
      action_count_(static_cast<int>(world.action_set.size())),
      vocab_size_(static_cast<int>(world.vocab.size())),
      context_(cfg.heads),
      replay_(cfg.replay_capacity, cfg.tau_p, cfg.tau_n),
      vocab_(&world.vocab) {
  for (const auto& t : world.action_texts) action_tokens_.push_back(vocab_->encode(t));
  const std::size_t V = vocab_size_, E = cfg_.embed_dim, He = cfg_.encoder_hidden,
                    Hc = cfg_.context_hidden, S = cfg_.scorer_hidden,
                    A = static_cast<std::size_t>(action_count_);
  Rng rng(init_seed ^ 0x9e3779b97f4a7c15ull);
  init_uniform(params_.add("embed", {V, E}), static_cast<double>(E), rng);
  init_uniform(params_.add("enc.W", {4 * He, E + He}), static_cast<double>(E + He), rng);
  params_.add("enc.b", {4 * He});
  for (int k = 0; k < cfg_.heads; ++k) {
    std::string p = "ctx" + std::to_string(k);
    init_uniform(params_.add(p + ".W", {4 * Hc, 2 * He + Hc}), static_cast<double>(2 * He + Hc),
                 rng);
    params_.add(p + ".b", {4 * Hc});
    std::string h = "head" + std::to_string(k);
    init_uniform(params_.add(h + ".W1", {S, Hc}), static_cast<double>(Hc), rng);
    params_.add(h + ".b1", {S});
    init_uniform(params_.add(h + ".W2", {A, S}), static_cast<double>(S), rng);
    params_.add(h + ".b2", {A});
  }
  init_uniform(params_.add("clf.W1", {S, Hc}), static_cast<double>(Hc), rng);
  params_.add("clf.b1", {S});
  init_uniform(params_.add("clf.W2", {A, S}), static_cast<double>(S), rng);
  params_.add("clf.b2", {A});
  target_ = params_;
  begin_episode();
}

void NeuralAgent::begin_episode() {
  state_.h.assign(cfg_.context_hidden, 0.0);
  state_.c.assign(cfg_.context_hidden, 0.0);
}

const std::vector<int>& NeuralAgent::tokens_for(const std::string& text) const {
  auto it = token_cache_.find(text);
  if (it == token_cache_.end()) it = token_cache_.emplace(text, vocab_->encode(text)).first;
  return it->second;
}

std::vector<double> NeuralAgent::target_encode(const std::vector<int>& tokens) const {
  auto it = target_enc_cache_.find(tokens);
  if (it != target_enc_cache_.end()) return it->second;
  auto h = nn::embed_sequence(target_.at("embed").value, target_.at("enc.W").value,
                              target_.at("enc.b").value, tokens, nullptr);
  target_enc_cache_.emplace(tokens, h);
  return h;
}

namespace {

std::vector<double> concat2(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

int NeuralAgent::act(const StepView& view, double epsilon, Rng& rng) {
  const auto& obs_toks = tokens_for(*view.feedback);
  const auto& act_toks = action_tokens_[view.prev_action];
  auto phi_o = nn::embed_sequence(params_.at("embed").value, params_.at("enc.W").value,
                                  params_.at("enc.b").value, obs_toks, nullptr);
  auto phi_a = nn::embed_sequence(params_.at("embed").value, params_.at("enc.W").value,
                                  params_.at("enc.b").value, act_toks, nullptr);
  int head = context_.head_for(view.score);
  std::string ctx = "ctx" + std::to_string(head);
  std::vector<double> h, c;
  nn::lstm_cell(params_.at(ctx + ".W").value, params_.at(ctx + ".b").value,
                concat2(phi_o, phi_a), state_.h, state_.c, h, c, nullptr);
  state_.h = h;
  state_.c = c;

  std::string hd = "head" + std::to_string(head);
  auto q = nn::feedforward_scorer(params_.at(hd + ".W1").value, params_.at(hd + ".b1").value,
                                  params_.at(hd + ".W2").value, params_.at(hd + ".b2").value, h,
                                  nullptr);
  std::vector<double> xi(action_count_, 1.0);
  if (cfg_.estimator == EstimatorKind::Classifier &&
      (cfg_.gating == GatingKind::Dropout || cfg_.gating == GatingKind::Masking)) {
    auto logits = nn::feedforward_scorer(params_.at("clf.W1").value, params_.at("clf.b1").value,
                                         params_.at("clf.W2").value, params_.at("clf.b2").value,
                                         h, nullptr);
    for (int a = 0; a < action_count_; ++a) xi[a] = nn::sigmoid_clamped(logits[a]);
  } else if (cfg_.estimator == EstimatorKind::Oracle && view.oracle_admissible) {
    std::fill(xi.begin(), xi.end(), 0.0);
    for (int a : *view.oracle_admissible) xi[a] = 1.0;
  }
  bool fell_back = false;
  std::vector<int> allowed = build_gated_set(xi, cfg_.gating, cfg_.mask_threshold, cfg_.eps1,
                                             action_count_, rng, &fell_back);
  if (fell_back) ++fallbacks_;
  return epsilon_greedy(q, allowed, epsilon, rng);
}

void NeuralAgent::observe(const StepView& view, int action, int reward, bool terminal,
                          const StepView& next_view) {
  (void)view;
  (void)action;
  (void)reward;
  (void)terminal;
  (void)next_view;
  // History encoding advanced in act(); episodes arrive via end_episode().
}

void NeuralAgent::end_episode(EpisodeRecord episode) {
  if (!learning_ || episode.steps.empty()) return;
  for (const auto& s : episode.steps) context_.head_for(s.score);
  const auto& last = episode.steps.back();
  context_.head_for(last.score + last.reward);
  replay_.store_episode(std::move(episode));
}

NeuralAgent::SeqTargets NeuralAgent::compute_targets(const ReplayMemory::Sample& sample) const {
  const auto& steps = sample.episode->steps;
  const std::size_t L = sample.len;
  SeqTargets out;
  out.y.resize(L);
  out.xi.assign(L, 1.0);

  // Target-network unroll over the subsequence plus one successor position.
  const std::size_t Hc = cfg_.context_hidden;
  std::vector<double> h(Hc, 0.0), c(Hc, 0.0);
  std::vector<std::vector<double>> hs(L + 1);
  std::vector<int> heads(L + 1);
  for (std::size_t i = 0; i <= L; ++i) {
    const std::vector<int>* obs;
    int prev_action, score;
    if (i < L) {
      const StepRecord& s = steps[sample.start + i];
      obs = &s.obs;
      prev_action = s.prev_action;
      score = s.score;
    } else {
      const StepRecord& s = steps[sample.start + L - 1];
      obs = &s.next_obs;
      prev_action = s.action;
      score = s.score + s.reward;
    }
    heads[i] = context_.peek_head(score);
    auto phi_o = target_encode(*obs);
    auto phi_a = target_encode(action_tokens_[prev_action]);
    std::string ctx = "ctx" + std::to_string(heads[i]);
    std::vector<double> h2, c2;
    nn::lstm_cell(target_.at(ctx + ".W").value, target_.at(ctx + ".b").value,
                  concat2(phi_o, phi_a), h, c, h2, c2, nullptr);
    h = std::move(h2);
    c = std::move(c2);
    hs[i] = h;
  }

  auto q_row = [&](std::size_t i) {
    std::string hd = "head" + std::to_string(heads[i]);
    return nn::feedforward_scorer(target_.at(hd + ".W1").value, target_.at(hd + ".b1").value,
                                  target_.at(hd + ".W2").value, target_.at(hd + ".b2").value,
                                  hs[i], nullptr);
  };
  std::vector<double> q_next = q_row(L);
  for (std::size_t i = L; i-- > 0;) {
    const StepRecord& s = steps[sample.start + i];
    double r = s.reward;
    if (s.terminal) {
      out.y[i] = r;
    } else {
      double q_next_max = *std::max_element(q_next.begin(), q_next.end());
      double xi = 1.0;
      if (cfg_.gating == GatingKind::Cqlh || cfg_.gating == GatingKind::Acqlh) {
        if (cfg_.estimator == EstimatorKind::Oracle) {
          xi = s.admissible ? 1.0 : 0.0;
        } else if (cfg_.estimator == EstimatorKind::Classifier) {
          auto logits = nn::feedforward_scorer(
              target_.at("clf.W1").value, target_.at("clf.b1").value,
              target_.at("clf.W2").value, target_.at("clf.b2").value, hs[i], nullptr);
          xi = nn::sigmoid_clamped(logits[s.action]);
        }
      }
      out.xi[i] = xi;
      switch (cfg_.gating) {
        case GatingKind::Cqlh: {
          double q_boot;
          if (cfg_.cqlh_form == CqlhForm::BootstrapNext) {
            q_boot = q_next[s.action];
          } else {
            q_boot = q_row(i)[s.action];
          }
          out.y[i] = r + cfg_.gamma * (q_next_max * xi + q_boot * (1.0 - xi));
          break;
        }
        case GatingKind::Acqlh:
          out.y[i] = r + cfg_.gamma * q_next_max * xi;
          break;
        default:
          out.y[i] = r + cfg_.gamma * q_next_max;
      }
    }
    if (i > 0) q_next = q_row(i);
  }
  return out;
}

namespace {

// Per-position forward state kept for the batch backward pass.
struct BatchPos {
  const StepRecord* step = nullptr;
  int head = 0;
  std::vector<double>* obs_dh = nullptr;
  std::vector<double>* act_dh = nullptr;
  nn::LstmCache lstm;
  std::vector<double> h;
  nn::MlpCache q_cache, clf_cache;
  std::vector<double> q, clf_logits;
  bool td_valid = false, bce_valid = false;
  double y = 0.0;
};

struct EncSlot {
  nn::SeqEncoderCache cache;
  std::vector<double> h;
  std::vector<double> dh;
};

}  // namespace

double NeuralAgent::run_batch(Rng& rng, bool td_loss, bool bce_loss) {
  auto batch = replay_.sample_minibatch(cfg_.batch, cfg_.seq_len, rng);
  if (batch.empty()) return 0.0;
  params_.zero_grads();

  const std::size_t Hc = cfg_.context_hidden;
  const std::size_t He = cfg_.encoder_hidden;
  std::map<std::vector<int>, EncSlot> enc;
  auto encode_online = [&](const std::vector<int>& toks) -> EncSlot* {
    auto it = enc.find(toks);
    if (it == enc.end()) {
      EncSlot slot;
      slot.h = nn::embed_sequence(params_.at("embed").value, params_.at("enc.W").value,
                                  params_.at("enc.b").value, toks, &slot.cache);
      slot.dh.assign(He, 0.0);
      it = enc.emplace(toks, std::move(slot)).first;
    }
    return &it->second;
  };

  static bool warned_short = false;
  std::vector<std::vector<BatchPos>> fwd(batch.size());
  std::size_t n_td = 0, n_bce = 0;
  double td_sum = 0.0, bce_sum = 0.0;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& sample = batch[b];
    if (static_cast<int>(sample.len) < cfg_.min_history) {
      if (!warned_short) {
        std::fprintf(stderr,
                     "warning: replay episode shorter than min_history (%zu < %d), skipped\n",
                     sample.len, cfg_.min_history);
        warned_short = true;
      }
      continue;
    }
    SeqTargets targets;
    if (td_loss) targets = compute_targets(sample);
    auto& positions = fwd[b];
    positions.resize(sample.len);
    std::vector<double> h(Hc, 0.0), c(Hc, 0.0);
    for (std::size_t i = 0; i < sample.len; ++i) {
      BatchPos& p = positions[i];
      p.step = &sample.episode->steps[sample.start + i];
      EncSlot* so = encode_online(p.step->obs);
      EncSlot* sa = encode_online(action_tokens_[p.step->prev_action]);
      p.obs_dh = &so->dh;
      p.act_dh = &sa->dh;
      p.head = context_.head_for(p.step->score);
      std::string ctx = "ctx" + std::to_string(p.head);
      std::vector<double> h2, c2;
      nn::lstm_cell(params_.at(ctx + ".W").value, params_.at(ctx + ".b").value,
                    concat2(so->h, sa->h), h, c, h2, c2, &p.lstm);
      h = h2;
      c = c2;
      p.h = h;
      bool history_ok = static_cast<int>(i) >= cfg_.min_history - 1;
      p.td_valid = td_loss && history_ok;
      p.bce_valid = bce_loss && history_ok && (!p.step->forced || cfg_.classifier_on_forced);
      if (p.td_valid) {
        std::string hd = "head" + std::to_string(p.head);
        p.q = nn::feedforward_scorer(params_.at(hd + ".W1").value,
                                     params_.at(hd + ".b1").value,
                                     params_.at(hd + ".W2").value,
                                     params_.at(hd + ".b2").value, h, &p.q_cache);
        p.y = targets.y[i];
        double diff = p.q[p.step->action] - p.y;
        td_sum += 0.5 * diff * diff;
        ++n_td;
      }
      if (p.bce_valid) {
        p.clf_logits = nn::feedforward_scorer(params_.at("clf.W1").value,
                                              params_.at("clf.b1").value,
                                              params_.at("clf.W2").value,
                                              params_.at("clf.b2").value, h, &p.clf_cache);
        bce_sum += nn::bce_loss(p.clf_logits[p.step->action], p.step->admissible ? 1.0 : 0.0);
        ++n_bce;
      }
    }
  }
  if (n_td == 0 && n_bce == 0) return 0.0;
  const double td_scale = n_td ? 1.0 / static_cast<double>(n_td) : 0.0;
  const double bce_scale = n_bce ? 1.0 / static_cast<double>(n_bce) : 0.0;

  std::vector<double> dh_next(Hc), dc_next(Hc), dx, dh_prev, dc_prev;
  for (auto& positions : fwd) {
    if (positions.empty()) continue;
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    std::fill(dc_next.begin(), dc_next.end(), 0.0);
    for (std::size_t i = positions.size(); i-- > 0;) {
      BatchPos& p = positions[i];
      std::vector<double> dh = dh_next;
      if (p.td_valid) {
        std::vector<double> dq(action_count_, 0.0);
        dq[p.step->action] = (p.q[p.step->action] - p.y) * td_scale;
        std::string hd = "head" + std::to_string(p.head);
        std::vector<double> dmlp;
        nn::feedforward_scorer_backward(params_.at(hd + ".W1").value,
                                        params_.at(hd + ".W2").value, p.q_cache, dq,
                                        params_.at(hd + ".W1").grad, params_.at(hd + ".b1").grad,
                                        params_.at(hd + ".W2").grad, params_.at(hd + ".b2").grad,
                                        dmlp);
        for (std::size_t j = 0; j < Hc; ++j) dh[j] += dmlp[j];
      }
      if (p.bce_valid) {
        std::vector<double> dl(action_count_, 0.0);
        dl[p.step->action] = nn::bce_logit_grad(p.clf_logits[p.step->action],
                                                p.step->admissible ? 1.0 : 0.0) *
                             bce_scale;
        std::vector<double> dmlp;
        nn::feedforward_scorer_backward(params_.at("clf.W1").value, params_.at("clf.W2").value,
                                        p.clf_cache, dl, params_.at("clf.W1").grad,
                                        params_.at("clf.b1").grad, params_.at("clf.W2").grad,
                                        params_.at("clf.b2").grad, dmlp);
        for (std::size_t j = 0; j < Hc; ++j) dh[j] += dmlp[j];
      }
      std::string ctx = "ctx" + std::to_string(p.head);
      nn::lstm_cell_backward(params_.at(ctx + ".W").value, p.lstm, dh, dc_next,
                             params_.at(ctx + ".W").grad, params_.at(ctx + ".b").grad, dx,
                             dh_prev, dc_prev);
      for (std::size_t j = 0; j < He; ++j) {
        (*p.obs_dh)[j] += dx[j];
        (*p.act_dh)[j] += dx[He + j];
      }
      dh_next = dh_prev;
      dc_next = dc_prev;
    }
  }
  for (auto& [toks, slot] : enc) {
    bool any = false;
    for (double d : slot.dh)
      if (d != 0.0) { any = true; break; }
    if (!any) continue;
    nn::embed_sequence_backward(params_.at("embed").value, params_.at("enc.W").value, slot.cache,
                                slot.dh, params_.at("embed").grad, params_.at("enc.W").grad,
                                params_.at("enc.b").grad);
  }
  params_.adam_step(cfg_.alpha);
  return td_sum * td_scale + bce_sum * bce_scale;
}

double NeuralAgent::train_step(Rng& rng) { return run_batch(rng, true, true); }

double NeuralAgent::train_classifier_step(Rng& rng) { return run_batch(rng, false, true); }

void NeuralAgent::sync_target() {
  target_.copy_values_from(params_);
  target_enc_cache_.clear();
}

std::vector<std::vector<double>> NeuralAgent::classifier_rollout(
    const EpisodeRecord& episode) const {
  std::vector<std::vector<double>> rows;
  const std::size_t Hc = cfg_.context_hidden;
  std::vector<double> h(Hc, 0.0), c(Hc, 0.0);
  for (const auto& s : episode.steps) {
    auto phi_o = nn::embed_sequence(params_.at("embed").value, params_.at("enc.W").value,
                                    params_.at("enc.b").value, s.obs, nullptr);
    auto phi_a = nn::embed_sequence(params_.at("embed").value, params_.at("enc.W").value,
                                    params_.at("enc.b").value, action_tokens_[s.prev_action],
                                    nullptr);
    int head = context_.peek_head(s.score);
    std::string ctx = "ctx" + std::to_string(head);
    std::vector<double> h2, c2;
    nn::lstm_cell(params_.at(ctx + ".W").value, params_.at(ctx + ".b").value,
                  concat2(phi_o, phi_a), h, c, h2, c2, nullptr);
    h = std::move(h2);
    c = std::move(c2);
    auto logits = nn::feedforward_scorer(params_.at("clf.W1").value, params_.at("clf.b1").value,
                                         params_.at("clf.W2").value, params_.at("clf.b2").value,
                                         h, nullptr);
    for (auto& v : logits) v = nn::sigmoid_clamped(v);
    rows.push_back(std::move(logits));
  }
  return rows;
}

std::vector<std::vector<double>> NeuralAgent::q_rollout(const EpisodeRecord& episode) const {
  std::vector<std::vector<double>> rows;
  const std::size_t Hc = cfg_.context_hidden;
  std::vector<double> h(Hc, 0.0), c(Hc, 0.0);
  for (const auto& s : episode.steps) {
    auto phi_o = nn::embed_sequence(params_.at("embed").value, params_.at("enc.W").value,
                                    params_.at("enc.b").value, s.obs, nullptr);
    auto phi_a = nn::embed_sequence(params_.at("embed").value, params_.at("enc.W").value,
                                    params_.at("enc.b").value, action_tokens_[s.prev_action],
                                    nullptr);
    int head = context_.peek_head(s.score);
    std::string ctx = "ctx" + std::to_string(head);
    std::vector<double> h2, c2;
    nn::lstm_cell(params_.at(ctx + ".W").value, params_.at(ctx + ".b").value,
                  concat2(phi_o, phi_a), h, c, h2, c2, nullptr);
    h = std::move(h2);
    c = std::move(c2);
    std::string hd = "head" + std::to_string(head);
    rows.push_back(nn::feedforward_scorer(params_.at(hd + ".W1").value,
                                          params_.at(hd + ".b1").value,
                                          params_.at(hd + ".W2").value,
                                          params_.at(hd + ".b2").value, h, nullptr));
  }
  return rows;
}

void NeuralAgent::save(std::ostream& out) const {
  write_u64(out, context_.table().size());
  for (const auto& [score, head] : context_.table()) {
    write_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(score)));
    write_u64(out, static_cast<std::uint64_t>(head));
  }
  params_.save(out);
  target_.save(out);
}

void NeuralAgent::load(std::istream& in) {
  std::map<int, int> table;
  std::size_t count = read_u64(in);
  for (std::size_t i = 0; i < count; ++i) {
    int score = static_cast<int>(static_cast<std::int64_t>(read_u64(in)));
    int head = static_cast<int>(read_u64(in));
    table[score] = head;
  }
  context_.restore(table);
  params_.load(in);
  target_.load(in);
  if (params_.at("embed").value.shape[0] != static_cast<std::size_t>(vocab_size_))
    throw ParseError("checkpoint vocabulary does not match the level");
  if (params_.at("clf.b2").value.size() != static_cast<std::size_t>(action_count_))
    throw ParseError("checkpoint action count does not match the level");
}

std::unique_ptr<Agent> make_agent(const AgentConfig& cfg, const WorldSpec& world,
                                  std::uint64_t init_seed) {
  if (cfg.kind == AgentKind::Neural)
    return std::make_unique<NeuralAgent>(cfg, world, init_seed);
  return std::make_unique<TabularAgent>(cfg, world);
}

void save_agent_checkpoint(const std::string& path, const Agent& agent, const AgentConfig& cfg,
                           int level) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write checkpoint: " + path);
  write_u64(out, kCheckpointMagic);
  write_u64(out, static_cast<std::uint64_t>(level));
  write_string(out, agent_config_to_json(cfg));
  agent.save(out);
  if (!out) throw ParseError("failed writing checkpoint: " + path);
}

std::unique_ptr<Agent> load_agent_checkpoint(const std::string& path, const WorldSpec& world,
                                             AgentConfig* cfg_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  if (read_u64(in) != kCheckpointMagic) throw ParseError("not a checkpoint file: " + path);
  int level = static_cast<int>(read_u64(in));
  if (level != world.level)
    throw ParseError("checkpoint is for level " + std::to_string(level));
  AgentConfig cfg = agent_config_from_json(read_string(in));
  if (cfg_out) *cfg_out = cfg;
  auto agent = make_agent(cfg, world, 0);
  if (cfg.kind == AgentKind::Neural)
    static_cast<NeuralAgent*>(agent.get())->load(in);
  else
    static_cast<TabularAgent*>(agent.get())->load_table(in);
  return agent;
}

}  // namespace saladworld
