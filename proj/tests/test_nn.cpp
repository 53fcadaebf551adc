#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "saladworld/nn.hpp"

using namespace saladworld;
using namespace saladworld::nn;

namespace {

// Small pipeline with every layer in play: embedding -> encoder lstm -> mlp,
// mixed into a scalar together with two BCE terms.
struct Net {
  ParamStore ps;
  std::vector<int> tokens{3, 1, 4, 1, 5};
  std::vector<double> mix;
  explicit Net(Rng& rng) {
    init_uniform(ps.add("embed", {7, 4}), 4, rng);
    init_uniform(ps.add("enc.W", {4 * 6, 4 + 6}), 10, rng);
    init_uniform(ps.add("enc.b", {4 * 6}), 10, rng);
    init_uniform(ps.add("mlp.W1", {5, 6}), 6, rng);
    init_uniform(ps.add("mlp.b1", {5}), 6, rng);
    init_uniform(ps.add("mlp.W2", {3, 5}), 5, rng);
    init_uniform(ps.add("mlp.b2", {3}), 5, rng);
    for (int i = 0; i < 3; ++i) mix.push_back(rng.uniform(-1, 1));
  }
  double forward(bool backward) {
    SeqEncoderCache ecache;
    auto h = embed_sequence(ps.at("embed").value, ps.at("enc.W").value, ps.at("enc.b").value,
                            tokens, backward ? &ecache : nullptr);
    MlpCache mcache;
    auto out = feedforward_scorer(ps.at("mlp.W1").value, ps.at("mlp.b1").value,
                                  ps.at("mlp.W2").value, ps.at("mlp.b2").value, h,
                                  backward ? &mcache : nullptr);
    double loss = 0.0;
    for (int i = 0; i < 3; ++i) loss += mix[i] * out[i];
    loss += bce_loss(out[0], 1.0) + bce_loss(out[2], 0.0);
    if (backward) {
      std::vector<double> dout = mix;
      dout[0] += bce_logit_grad(out[0], 1.0);
      dout[2] += bce_logit_grad(out[2], 0.0);
      std::vector<double> dh;
      feedforward_scorer_backward(ps.at("mlp.W1").value, ps.at("mlp.W2").value, mcache, dout,
                                  ps.at("mlp.W1").grad, ps.at("mlp.b1").grad,
                                  ps.at("mlp.W2").grad, ps.at("mlp.b2").grad, dh);
      embed_sequence_backward(ps.at("embed").value, ps.at("enc.W").value, ecache, dh,
                              ps.at("embed").grad, ps.at("enc.W").grad, ps.at("enc.b").grad);
    }
    return loss;
  }
};

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
  t[4] = 1.0 / 0.0;
  CHECK(!t.all_finite());
}

TEST_CASE("composite backward matches central differences") {
  double worst = 0.0;
  for (unsigned seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Net net(rng);
    net.ps.zero_grads();
    net.forward(true);
    auto analytic = net.ps.flatten_grads();
    auto flat = net.ps.flatten_values();
    const double eps = 1e-6;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      auto probe = flat;
      probe[i] = flat[i] + eps;
      net.ps.unflatten_values(probe);
      double up = net.forward(false);
      probe[i] = flat[i] - eps;
      net.ps.unflatten_values(probe);
      double down = net.forward(false);
      net.ps.unflatten_values(flat);
      double numeric = (up - down) / (2 * eps);
      double denom = std::max({1.0, std::abs(numeric), std::abs(analytic[i])});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("lstm gate rows are ordered i, f, g, o") {
  // zero weights: i = f = o = sigmoid(b) and g = tanh(b), driven per block
  const int H = 2, I = 1;
  Tensor W = Tensor::zeros({std::size_t(4 * H), std::size_t(I + H)});
  Tensor b = Tensor::zeros({std::size_t(4 * H)});
  std::vector<double> x{0.0}, h0(H, 0.0), c0{1.0, 1.0}, h, c;

  // all biases 0: i=f=o=0.5, g=0 -> c = 0.5 * c_prev
  lstm_cell(W, b, x, h0, c0, h, c, nullptr);
  CHECK(c[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(h[0] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-12));

  // push the input-gate block only: i -> sigmoid(10), g still 0
  for (int r = 0; r < H; ++r) b[r] = 10.0;
  lstm_cell(W, b, x, h0, c0, h, c, nullptr);
  CHECK(c[0] == doctest::Approx(0.5).epsilon(1e-6));  // g = 0 so i is invisible

  // push the g block: c = f*c_prev + i*tanh(10)
  for (int r = 2 * H; r < 3 * H; ++r) b[r] = 10.0;
  lstm_cell(W, b, x, h0, c0, h, c, nullptr);
  double want_c = 0.5 * 1.0 + (1.0 / (1.0 + std::exp(-10.0))) * std::tanh(10.0);
  CHECK(c[0] == doctest::Approx(want_c).epsilon(1e-9));

  // forget-gate block scales c_prev
  Tensor b2 = Tensor::zeros({std::size_t(4 * H)});
  for (int r = H; r < 2 * H; ++r) b2[r] = 10.0;
  lstm_cell(W, b2, x, h0, c0, h, c, nullptr);
  CHECK(c[0] == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-9));

  // output-gate block scales tanh(c)
  Tensor b3 = Tensor::zeros({std::size_t(4 * H)});
  for (int r = 3 * H; r < 4 * H; ++r) b3[r] = 10.0;
  lstm_cell(W, b3, x, h0, c0, h, c, nullptr);
  CHECK(h[0] == doctest::Approx((1.0 / (1.0 + std::exp(-10.0))) * std::tanh(0.5)).epsilon(1e-9));
}

TEST_CASE("empty sequence encodes to zeros") {
  Rng rng(3);
  ParamStore ps;
  init_uniform(ps.add("embed", {5, 3}), 3, rng);
  init_uniform(ps.add("W", {4 * 4, 3 + 4}), 7, rng);
  init_uniform(ps.add("b", {4 * 4}), 7, rng);
  SeqEncoderCache cache;
  auto h = embed_sequence(ps.at("embed").value, ps.at("W").value, ps.at("b").value, {}, &cache);
  CHECK(h == std::vector<double>(4, 0.0));
  // backward through it is a no-op
  ps.zero_grads();
  embed_sequence_backward(ps.at("embed").value, ps.at("W").value, cache,
                          std::vector<double>(4, 1.0), ps.at("embed").grad, ps.at("W").grad,
                          ps.at("b").grad);
  for (double g : ps.at("W").grad.v) CHECK(g == 0.0);
}

TEST_CASE("adam step algebra") {
  ParamStore ps;
  Tensor& w = ps.add("w", {1});
  w[0] = 1.0;
  ps.at("w").grad[0] = 0.5;
  const double alpha = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ps.adam_step(alpha, b1, b2, eps);
  double m = (1 - b1) * 0.5;
  double s = (1 - b2) * 0.25;
  double mhat = m / (1 - b1);
  double shat = s / (1 - b2);
  CHECK(ps.adam_t() == 1);
  CHECK(ps.at("w").value[0] ==
        doctest::Approx(1.0 - alpha * mhat / (std::sqrt(shat) + eps)).epsilon(1e-15));

  // second step keeps the shared counter and compounds moments
  ps.at("w").grad[0] = -0.25;
  ps.adam_step(alpha, b1, b2, eps);
  CHECK(ps.adam_t() == 2);
  double m2 = b1 * m + (1 - b1) * -0.25;
  double s2 = b2 * s + (1 - b2) * 0.0625;
  double want = 1.0 - alpha * (m / (1 - b1)) / (std::sqrt(s / (1 - b2)) + eps);
  want -= alpha * (m2 / (1 - b1 * b1)) / (std::sqrt(s2 / (1 - b2 * b2)) + eps);
  CHECK(ps.at("w").value[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients") {
  ParamStore ps;
  ps.add("w", {2});
  ps.at("w").grad[0] = std::nan("");
  CHECK_THROWS_AS(ps.adam_step(0.1), std::exception);
}

TEST_CASE("flatten and unflatten round trip in name order") {
  Rng rng(9);
  ParamStore ps;
  init_uniform(ps.add("b.second", {3}), 3, rng);
  init_uniform(ps.add("a.first", {2, 2}), 2, rng);
  auto flat = ps.flatten_values();
  CHECK(flat.size() == 7);
  // name order: a.first's 4 entries precede b.second's 3
  CHECK(flat[0] == ps.at("a.first").value[0]);
  CHECK(flat[4] == ps.at("b.second").value[0]);
  auto perturbed = flat;
  for (auto& v : perturbed) v += 1.0;
  ps.unflatten_values(perturbed);
  CHECK(ps.flatten_values() == perturbed);
  ps.unflatten_values(flat);
  CHECK(ps.flatten_values() == flat);
}

TEST_CASE("save and load round trip bit for bit") {
  Rng rng(11);
  ParamStore ps;
  init_uniform(ps.add("embed", {4, 3}), 3, rng);
  init_uniform(ps.add("W", {8, 5}), 5, rng);
  ps.at("W").grad[0] = 1.0;
  ps.adam_step(0.01);
  ps.at("W").grad[0] = -2.0;
  ps.adam_step(0.01);

  std::stringstream buf;
  ps.save(buf);
  ParamStore back;
  back.add("embed", {4, 3});
  back.add("W", {8, 5});
  back.load(buf);
  CHECK(back.adam_t() == ps.adam_t());
  CHECK(back.flatten_values() == ps.flatten_values());
  CHECK(back.at("W").m.v == ps.at("W").m.v);
  CHECK(back.at("W").s.v == ps.at("W").s.v);

  // resumed training continues identically
  ParamStore again;
  again.add("embed", {4, 3});
  again.add("W", {8, 5});
  std::stringstream buf2;
  ps.save(buf2);
  again.load(buf2);
  ps.zero_grads();
  ps.at("W").grad[5] = 0.7;
  again.at("W").grad[5] = 0.7;
  ps.adam_step(0.01);
  again.adam_step(0.01);
  CHECK(again.flatten_values() == ps.flatten_values());
}

TEST_CASE("copy_values_from leaves optimizer state alone") {
  Rng rng(13);
  ParamStore a, b;
  init_uniform(a.add("w", {3}), 3, rng);
  init_uniform(b.add("w", {3}), 3, rng);
  b.at("w").grad.v = {1.0, 1.0, 1.0};
  b.adam_step(0.1);
  auto b_m = b.at("w").m.v;
  b.copy_values_from(a);
  CHECK(b.at("w").value.v == a.at("w").value.v);
  CHECK(b.at("w").m.v == b_m);
}

TEST_CASE("bce identities") {
  CHECK(sigmoid_clamped(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sigmoid_clamped(100.0) == sigmoid_clamped(15.0));   // clamped
  CHECK(sigmoid_clamped(-100.0) == sigmoid_clamped(-15.0));
  for (double logit : {-20.0, -3.0, -0.5, 0.0, 0.5, 3.0, 20.0}) {
    for (double target : {0.0, 1.0}) {
      CHECK(std::isfinite(bce_loss(logit, target)));
      CHECK(bce_logit_grad(logit, target) ==
            doctest::Approx(sigmoid_clamped(logit) - target).epsilon(1e-12));
    }
  }
  // loss really is -log p at the clamp-free points
  CHECK(bce_loss(0.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(2.0, 1.0) == doctest::Approx(-std::log(sigmoid_clamped(2.0))).epsilon(1e-12));
  CHECK(bce_loss(2.0, 0.0) ==
        doctest::Approx(-std::log(1.0 - sigmoid_clamped(2.0))).epsilon(1e-12));
}

TEST_CASE("init_uniform stays inside the fan-in bound") {
  Rng rng(17);
  Tensor t = Tensor::zeros({50, 4});
  init_uniform(t, 16.0, rng);
  double bound = 1.0 / std::sqrt(16.0);
  double lo = 1e9, hi = -1e9;
  for (double v : t.v) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi > bound * 0.5);   // actually spreads over the range
  CHECK(lo < -bound * 0.5);
}
