#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "saladworld/rng.hpp"

namespace saladworld::nn {

// Dense row-major tensor of doubles. Double precision keeps finite-difference
// gradient checks meaningful.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  static Tensor zeros(std::vector<std::size_t> shape);
  std::size_t size() const { return v.size(); }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
  bool all_finite() const;
};

struct Param {
  Tensor value;
  Tensor grad;
  Tensor m;  // Adam first moment
  Tensor s;  // Adam second moment
};

// Named parameter collection with one shared Adam step counter. Iteration is
// name-ordered so checkpoints and updates are deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, std::vector<std::size_t> shape);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  const std::map<std::string, Param>& all() const { return params_; }
  std::map<std::string, Param>& all() { return params_; }

  void zero_grads();
  // Adam with bias correction; rejects non-finite gradients.
  void adam_step(double alpha, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);
  std::int64_t adam_t() const { return adam_t_; }

  void copy_values_from(const ParamStore& other);  // target network sync

  std::size_t total_size() const;
  std::vector<double> flatten_values() const;
  void unflatten_values(const std::vector<double>& flat);
  std::vector<double> flatten_grads() const;

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  std::map<std::string, Param> params_;
  std::int64_t adam_t_ = 0;
};

// ---- layer ops (forward + hand-written backward) ----

struct LstmCache {
  std::vector<double> x, h_prev, c_prev;
  std::vector<double> i, f, g, o, c, tanh_c;
};

// One LSTM step. W is [4H x (I+H)] with gate rows ordered (i, f, g, o),
// b is [4H]. Returns h and c through out parameters.
void lstm_cell(const Tensor& W, const Tensor& b, const std::vector<double>& x,
               const std::vector<double>& h_prev, const std::vector<double>& c_prev,
               std::vector<double>& h_out, std::vector<double>& c_out,
               LstmCache* cache);
void lstm_cell_backward(const Tensor& W, const LstmCache& cache,
                        const std::vector<double>& dh, const std::vector<double>& dc_in,
                        Tensor& dW, Tensor& db, std::vector<double>& dx,
                        std::vector<double>& dh_prev, std::vector<double>& dc_prev);

struct SeqEncoderCache {
  std::vector<int> tokens;
  std::vector<LstmCache> steps;
};

// Embeds a token sequence and runs the encoder LSTM; the sentence vector is
// the final hidden state. An empty sequence encodes to zeros.
std::vector<double> embed_sequence(const Tensor& embed, const Tensor& W, const Tensor& b,
                                   const std::vector<int>& tokens, SeqEncoderCache* cache);
// Accumulates into dEmbed/dW/db; dh is the gradient at the sentence vector.
void embed_sequence_backward(const Tensor& embed, const Tensor& W,
                             const SeqEncoderCache& cache, const std::vector<double>& dh,
                             Tensor& dEmbed, Tensor& dW, Tensor& db);

struct MlpCache {
  std::vector<double> in, z1, a1;
};

// Two-layer scorer: W2 * relu(W1 * in + b1) + b2.
std::vector<double> feedforward_scorer(const Tensor& W1, const Tensor& b1,
                                       const Tensor& W2, const Tensor& b2,
                                       const std::vector<double>& in, MlpCache* cache);
void feedforward_scorer_backward(const Tensor& W1, const Tensor& W2, const MlpCache& cache,
                                 const std::vector<double>& dout, Tensor& dW1, Tensor& db1,
                                 Tensor& dW2, Tensor& db2, std::vector<double>& din);

// Binary cross-entropy on a logit. Logits are clamped to +-15 before the
// sigmoid so the loss stays finite; the gradient is p - target.
double sigmoid_clamped(double logit);
double bce_loss(double logit, double target);
double bce_logit_grad(double logit, double target);

void init_uniform(Tensor& t, double fan_in, Rng& rng);

}  // namespace saladworld::nn
