#include "saladworld/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace saladworld::nn {

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  t.shape = std::move(shape);
  t.v.assign(n, 0.0);
  return t;
}

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

Tensor& ParamStore::add(const std::string& name, std::vector<std::size_t> shape) {
  if (params_.count(name)) throw std::runtime_error("duplicate param: " + name);
  Param p;
  p.value = Tensor::zeros(shape);
  p.grad = Tensor::zeros(shape);
  p.m = Tensor::zeros(shape);
  p.s = Tensor::zeros(shape);
  return params_.emplace(name, std::move(p)).first->second.value;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("unknown param: " + name);
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("unknown param: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) std::fill(p.grad.v.begin(), p.grad.v.end(), 0.0);
}

void ParamStore::adam_step(double alpha, double beta1, double beta2, double eps) {
  ++adam_t_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
  for (auto& [name, p] : params_) {
    if (!p.grad.all_finite()) throw std::runtime_error("non-finite gradient in " + name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      p.m[i] = beta1 * p.m[i] + (1.0 - beta1) * g;
      p.s[i] = beta2 * p.s[i] + (1.0 - beta2) * g * g;
      double mhat = p.m[i] / bc1;
      double shat = p.s[i] / bc2;
      p.value[i] -= alpha * mhat / (std::sqrt(shat) + eps);
    }
  }
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (auto& [name, p] : params_) {
    const Param& src = other.at(name);
    if (src.value.size() != p.value.size())
      throw std::runtime_error("shape mismatch syncing " + name);
    p.value.v = src.value.v;
  }
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

std::vector<double> ParamStore::flatten_values() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& [name, p] : params_) flat.insert(flat.end(), p.value.v.begin(), p.value.v.end());
  return flat;
}

void ParamStore::unflatten_values(const std::vector<double>& flat) {
  if (flat.size() != total_size()) throw std::runtime_error("flat size mismatch");
  std::size_t off = 0;
  for (auto& [name, p] : params_) {
    std::copy(flat.begin() + off, flat.begin() + off + p.value.size(), p.value.v.begin());
    off += p.value.size();
  }
}

std::vector<double> ParamStore::flatten_grads() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& [name, p] : params_) flat.insert(flat.end(), p.grad.v.begin(), p.grad.v.end());
  return flat;
}

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

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  write_u64(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& in) {
  std::vector<double> v(read_u64(in));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  return v;
}

}  // namespace

void ParamStore::save(std::ostream& out) const {
  write_u64(out, 0x53574e4e01ull);  // magic + version
  write_u64(out, static_cast<std::uint64_t>(adam_t_));
  write_u64(out, params_.size());
  for (const auto& [name, p] : params_) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, p.value.shape.size());
    for (auto d : p.value.shape) write_u64(out, d);
    write_doubles(out, p.value.v);
    write_doubles(out, p.m.v);
    write_doubles(out, p.s.v);
  }
}

void ParamStore::load(std::istream& in) {
  if (read_u64(in) != 0x53574e4e01ull) throw std::runtime_error("bad param store header");
  adam_t_ = static_cast<std::int64_t>(read_u64(in));
  std::size_t count = read_u64(in);
  params_.clear();
  for (std::size_t k = 0; k < count; ++k) {
    std::string name(read_u64(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    std::vector<std::size_t> shape(read_u64(in));
    for (auto& d : shape) d = read_u64(in);
    Param p;
    p.value = Tensor::zeros(shape);
    p.value.v = read_doubles(in);
    p.grad = Tensor::zeros(shape);
    p.m = Tensor::zeros(shape);
    p.m.v = read_doubles(in);
    p.s = Tensor::zeros(shape);
    p.s.v = read_doubles(in);
    if (p.value.v.size() != p.grad.v.size()) throw std::runtime_error("bad tensor in " + name);
    params_.emplace(name, std::move(p));
  }
  if (!in) throw std::runtime_error("truncated param store");
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void lstm_cell(const Tensor& W, const Tensor& b, const std::vector<double>& x,
               const std::vector<double>& h_prev, const std::vector<double>& c_prev,
               std::vector<double>& h_out, std::vector<double>& c_out, LstmCache* cache) {
  const std::size_t H = b.size() / 4;
  const std::size_t I = x.size();
  const std::size_t cols = I + H;
  std::vector<double> gi(H), gf(H), gg(H), go(H);
  for (std::size_t row = 0; row < 4 * H; ++row) {
    const double* w = &W.v[row * cols];
    double acc = b[row];
    for (std::size_t j = 0; j < I; ++j) acc += w[j] * x[j];
    for (std::size_t j = 0; j < H; ++j) acc += w[I + j] * h_prev[j];
    std::size_t u = row % H;
    switch (row / H) {
      case 0: gi[u] = sigmoid(acc); break;
      case 1: gf[u] = sigmoid(acc); break;
      case 2: gg[u] = std::tanh(acc); break;
      case 3: go[u] = sigmoid(acc); break;
    }
  }
  c_out.resize(H);
  h_out.resize(H);
  std::vector<double> tanh_c(H);
  for (std::size_t u = 0; u < H; ++u) {
    c_out[u] = gf[u] * c_prev[u] + gi[u] * gg[u];
    tanh_c[u] = std::tanh(c_out[u]);
    h_out[u] = go[u] * tanh_c[u];
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->g = std::move(gg);
    cache->o = std::move(go);
    cache->c = c_out;
    cache->tanh_c = std::move(tanh_c);
  }
}

void lstm_cell_backward(const Tensor& W, const LstmCache& cache, const std::vector<double>& dh,
                        const std::vector<double>& dc_in, Tensor& dW, Tensor& db,
                        std::vector<double>& dx, std::vector<double>& dh_prev,
                        std::vector<double>& dc_prev) {
  const std::size_t H = cache.i.size();
  const std::size_t I = cache.x.size();
  const std::size_t cols = I + H;
  // Pre-activation gradients, gate order (i, f, g, o).
  std::vector<double> da(4 * H);
  dc_prev.assign(H, 0.0);
  for (std::size_t u = 0; u < H; ++u) {
    double do_ = dh[u] * cache.tanh_c[u];
    double dc = dc_in[u] + dh[u] * cache.o[u] * (1.0 - cache.tanh_c[u] * cache.tanh_c[u]);
    double di = dc * cache.g[u];
    double df = dc * cache.c_prev[u];
    double dg = dc * cache.i[u];
    dc_prev[u] = dc * cache.f[u];
    da[0 * H + u] = di * cache.i[u] * (1.0 - cache.i[u]);
    da[1 * H + u] = df * cache.f[u] * (1.0 - cache.f[u]);
    da[2 * H + u] = dg * (1.0 - cache.g[u] * cache.g[u]);
    da[3 * H + u] = do_ * cache.o[u] * (1.0 - cache.o[u]);
  }
  dx.assign(I, 0.0);
  dh_prev.assign(H, 0.0);
  for (std::size_t row = 0; row < 4 * H; ++row) {
    double d = da[row];
    if (d == 0.0) continue;
    const double* w = &W.v[row * cols];
    double* gw = &dW.v[row * cols];
    for (std::size_t j = 0; j < I; ++j) {
      gw[j] += d * cache.x[j];
      dx[j] += d * w[j];
    }
    for (std::size_t j = 0; j < H; ++j) {
      gw[I + j] += d * cache.h_prev[j];
      dh_prev[j] += d * w[I + j];
    }
    db[row] += d;
  }
}

std::vector<double> embed_sequence(const Tensor& embed, const Tensor& W, const Tensor& b,
                                   const std::vector<int>& tokens, SeqEncoderCache* cache) {
  const std::size_t H = b.size() / 4;
  const std::size_t E = embed.shape[1];
  std::vector<double> h(H, 0.0), c(H, 0.0);
  if (cache) {
    cache->tokens = tokens;
    cache->steps.clear();
    cache->steps.resize(tokens.size());
  }
  std::vector<double> x(E), h_next, c_next;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const double* row = &embed.v[static_cast<std::size_t>(tokens[t]) * E];
    std::copy(row, row + E, x.begin());
    lstm_cell(W, b, x, h, c, h_next, c_next, cache ? &cache->steps[t] : nullptr);
    h = h_next;
    c = c_next;
  }
  return h;
}

void embed_sequence_backward(const Tensor& embed, const Tensor& W, const SeqEncoderCache& cache,
                             const std::vector<double>& dh, Tensor& dEmbed, Tensor& dW,
                             Tensor& db) {
  const std::size_t E = embed.shape[1];
  std::vector<double> dh_cur = dh;
  std::vector<double> dc_cur(dh.size(), 0.0);
  std::vector<double> dx, dh_prev, dc_prev;
  for (std::size_t t = cache.steps.size(); t-- > 0;) {
    lstm_cell_backward(W, cache.steps[t], dh_cur, dc_cur, dW, db, dx, dh_prev, dc_prev);
    double* grow = &dEmbed.v[static_cast<std::size_t>(cache.tokens[t]) * E];
    for (std::size_t j = 0; j < E; ++j) grow[j] += dx[j];
    dh_cur = dh_prev;
    dc_cur = dc_prev;
  }
}

std::vector<double> feedforward_scorer(const Tensor& W1, const Tensor& b1, const Tensor& W2,
                                       const Tensor& b2, const std::vector<double>& in,
                                       MlpCache* cache) {
  const std::size_t Hid = b1.size();
  const std::size_t Out = b2.size();
  const std::size_t In = in.size();
  std::vector<double> z1(Hid), a1(Hid);
  for (std::size_t r = 0; r < Hid; ++r) {
    const double* w = &W1.v[r * In];
    double acc = b1[r];
    for (std::size_t j = 0; j < In; ++j) acc += w[j] * in[j];
    z1[r] = acc;
    a1[r] = acc > 0.0 ? acc : 0.0;
  }
  std::vector<double> out(Out);
  for (std::size_t r = 0; r < Out; ++r) {
    const double* w = &W2.v[r * Hid];
    double acc = b2[r];
    for (std::size_t j = 0; j < Hid; ++j) acc += w[j] * a1[j];
    out[r] = acc;
  }
  if (cache) {
    cache->in = in;
    cache->z1 = std::move(z1);
    cache->a1 = std::move(a1);
  }
  return out;
}

void feedforward_scorer_backward(const Tensor& W1, const Tensor& W2, const MlpCache& cache,
                                 const std::vector<double>& dout, Tensor& dW1, Tensor& db1,
                                 Tensor& dW2, Tensor& db2, std::vector<double>& din) {
  const std::size_t Hid = cache.a1.size();
  const std::size_t In = cache.in.size();
  const std::size_t Out = dout.size();
  std::vector<double> da1(Hid, 0.0);
  for (std::size_t r = 0; r < Out; ++r) {
    double d = dout[r];
    if (d == 0.0) continue;
    const double* w = &W2.v[r * Hid];
    double* gw = &dW2.v[r * Hid];
    for (std::size_t j = 0; j < Hid; ++j) {
      gw[j] += d * cache.a1[j];
      da1[j] += d * w[j];
    }
    db2[r] += d;
  }
  din.assign(In, 0.0);
  for (std::size_t r = 0; r < Hid; ++r) {
    if (cache.z1[r] <= 0.0 || da1[r] == 0.0) continue;
    double d = da1[r];
    const double* w = &W1.v[r * In];
    double* gw = &dW1.v[r * In];
    for (std::size_t j = 0; j < In; ++j) {
      gw[j] += d * cache.in[j];
      din[j] += d * w[j];
    }
    db1[r] += d;
  }
}

double sigmoid_clamped(double logit) {
  if (logit > 15.0) logit = 15.0;
  if (logit < -15.0) logit = -15.0;
  return sigmoid(logit);
}

double bce_loss(double logit, double target) {
  if (logit > 15.0) logit = 15.0;
  if (logit < -15.0) logit = -15.0;
  // -t*log(p) - (1-t)*log(1-p), written on the logit for stability
  double m = logit > 0.0 ? logit : 0.0;
  return m - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

double bce_logit_grad(double logit, double target) {
  return sigmoid_clamped(logit) - target;
}

void init_uniform(Tensor& t, double fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(fan_in > 0.0 ? fan_in : 1.0);
  for (auto& x : t.v) x = rng.uniform(-bound, bound);
}

}  // namespace saladworld::nn
