#pragma once

// Attention-recurrent memorability head: location attention over an L×D
// feature grid, T LSTM steps, one regressed score per step, summed.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "amnet/numerics.hpp"

namespace amnet {

struct ModelConfig {
  std::size_t W = 14;
  std::size_t H = 14;
  std::size_t D = 1024;
  std::size_t B = 1024;
  std::size_t T = 3;
  std::size_t fm_hidden = 512;
  /// Dropout on the regression hidden layer.
  double dropout_rate = 0.5;
  /// Dropout on the context vector z before it enters the LSTM.
  double context_dropout_rate = 0.5;
  bool attention_enabled = true;
  std::uint64_t seed = 0;

  std::size_t L() const { return W * H; }

  void validate() const {
    if (W == 0 || H == 0) throw std::invalid_argument("ModelConfig: W and H must be >= 1");
    if (D == 0 || B == 0 || T == 0 || fm_hidden == 0)
      throw std::invalid_argument("ModelConfig: D, B, T and fm_hidden must be >= 1");
    for (double r : {dropout_rate, context_dropout_rate})
      if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("ModelConfig: dropout rates must lie in [0,1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class DropoutMode { eval, train };

/// All learnable weights. Matrices use the row-vector convention
/// (y = x·W + b) except M, U, K, b, which keep their attention shapes:
/// M is L×D, U is D×B, K is D×D, b has D entries.
struct ModelParams {
  Param M, U, K, b;
  // LSTM gates: input (i), forget (f), output (o), candidate (g).
  Param Wi, Wf, Wo, Wg;  // D×B, applied to z
  Param Ui, Uf, Uo, Ug;  // B×B, applied to h_prev
  Param bi, bf, bo, bg;  // B
  Param init_h_w, init_h_b, init_c_w, init_c_b;  // D×B, B
  Param fm_w1, fm_b1, fm_w2, fm_b2;  // B×fm_hidden, fm_hidden, fm_hidden×1, 1

  template <class Self>
  static auto list_of(Self& self) {
    using P = std::conditional_t<std::is_const_v<Self>, const Param*, Param*>;
    return std::vector<P>{&self.M,  &self.U,  &self.K,  &self.b,  &self.Wi, &self.Wf, &self.Wo,
                          &self.Wg, &self.Ui, &self.Uf, &self.Uo, &self.Ug, &self.bi, &self.bf,
                          &self.bo, &self.bg, &self.init_h_w, &self.init_h_b, &self.init_c_w,
                          &self.init_c_b, &self.fm_w1, &self.fm_b1, &self.fm_w2, &self.fm_b2};
  }
  std::vector<Param*> list() { return list_of(*this); }
  std::vector<const Param*> list() const { return list_of(*this); }

  Param* find(const std::string& name) {
    for (Param* p : list())
      if (p->name == name) return p;
    return nullptr;
  }
};

/// Expected shape of every named parameter.
inline std::vector<std::pair<std::string, Shape>> param_layout(const ModelConfig& c) {
  const std::size_t D = c.D, B = c.B, F = c.fm_hidden;
  return {{"M", {c.L(), D}},    {"U", {D, B}},        {"K", {D, D}},        {"b", {D}},
          {"Wi", {D, B}},       {"Wf", {D, B}},       {"Wo", {D, B}},       {"Wg", {D, B}},
          {"Ui", {B, B}},       {"Uf", {B, B}},       {"Uo", {B, B}},       {"Ug", {B, B}},
          {"bi", {B}},          {"bf", {B}},          {"bo", {B}},          {"bg", {B}},
          {"init_h_w", {D, B}}, {"init_h_b", {B}},    {"init_c_w", {D, B}}, {"init_c_b", {B}},
          {"fm_w1", {B, F}},    {"fm_b1", {F}},       {"fm_w2", {F, 1}},    {"fm_b2", {1}}};
}

/// Zero-filled params with the layout of `config`.
inline ModelParams zero_params(const ModelConfig& config) {
  ModelParams p;
  const auto layout = param_layout(config);
  auto slots = p.list();
  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = Param(layout[i].first, Tensor(layout[i].second));
  return p;
}

/// Glorot-uniform matrices, zero biases, deterministic in config.seed.
inline ModelParams init_params(const ModelConfig& config) {
  config.validate();
  ModelParams p = zero_params(config);
  std::mt19937_64 rng(config.seed);
  for (Param* q : p.list()) {
    if (q->value.rank() != 2) continue;
    const double fan = static_cast<double>(q->value.dim(0) + q->value.dim(1));
    std::uniform_real_distribution<double> u(-std::sqrt(6.0 / fan), std::sqrt(6.0 / fan));
    for (double& v : q->value.values()) v = u(rng);
  }
  return p;
}

/// Throws DimensionError unless every param matches the config layout.
inline void check_params(const ModelParams& p, const ModelConfig& c) {
  const auto layout = param_layout(c);
  const auto slots = p.list();
  for (std::size_t i = 0; i < slots.size(); ++i)
    if (slots[i]->value.shape() != layout[i].second)
      throw DimensionError("param " + layout[i].first + " has shape " + shape_str(slots[i]->value.shape()) +
                           ", expected " + shape_str(layout[i].second));
}

/// Per-sample record of one forward pass.
struct ForwardTrace {
  Tensor alpha;  // T×L
  Tensor z;      // T×D
  Tensor h;      // T×B
  std::vector<double> m;
  double y = 0.0;
};

// ---------------------------------------------------------------------------
// Tape-level building blocks.

/// Params bound as tape leaves.
struct BoundParams {
  Var M, U, K, b, Wi, Wf, Wo, Wg, Ui, Uf, Uo, Ug, bi, bf, bo, bg;
  Var init_h_w, init_h_b, init_c_w, init_c_b, fm_w1, fm_b1, fm_w2, fm_b2;
};

/// Tracked binding: backward() accumulates into each Param::grad.
inline BoundParams bind(Tape& t, ModelParams& p) {
  auto s = p.list();
  std::vector<Var> v;
  v.reserve(s.size());
  for (Param* q : s) v.push_back(t.param(*q));
  return {v[0],  v[1],  v[2],  v[3],  v[4],  v[5],  v[6],  v[7],  v[8],  v[9],  v[10], v[11],
          v[12], v[13], v[14], v[15], v[16], v[17], v[18], v[19], v[20], v[21], v[22], v[23]};
}

/// Untracked binding for inference.
inline BoundParams bind(Tape& t, const ModelParams& p) {
  auto s = p.list();
  std::vector<Var> v;
  v.reserve(s.size());
  for (const Param* q : s) v.push_back(t.constant(q->value));
  return {v[0],  v[1],  v[2],  v[3],  v[4],  v[5],  v[6],  v[7],  v[8],  v[9],  v[10], v[11],
          v[12], v[13], v[14], v[15], v[16], v[17], v[18], v[19], v[20], v[21], v[22], v[23]};
}

struct LstmState {
  Var h;
  Var c;
};

namespace detail {
inline void check_features(const Tensor& x, const ModelConfig& c) {
  if (x.rank() != 2 || x.dim(0) != c.L() || x.dim(1) != c.D)
    throw DimensionError("features have shape " + shape_str(x.shape()) + ", model expects " +
                         shape_str({c.L(), c.D}));
}
}  // namespace detail

/// h0 = tanh(x̄·W_h + b_h), c0 = tanh(x̄·W_c + b_c), x̄ the location mean.
inline LstmState init_state(Var x, const BoundParams& p) {
  Var mean = row_mean(x);
  Var h0 = tanh_elem(add_row(matmul(mean, p.init_h_w), p.init_h_b));
  Var c0 = tanh_elem(add_row(matmul(mean, p.init_c_w), p.init_c_b));
  return {h0, c0};
}

/// e_i = M_i · tanh(U·h_prev + K·x_i + b). `kx` is x·Kᵀ (L×D), shared
/// across steps; U·h_prev + b is formed once and broadcast over locations.
inline Var attention_scores(Var kx, Var h_prev, const BoundParams& p) {
  Var uh = add_row(matmul_nt(h_prev, p.U), p.b);
  Var act = tanh_elem(add_row(kx, uh));
  return row_sum(mul(p.M, act));
}

/// z = Σ_i α_i x_i
inline Var attend(Var x, Var alpha) {
  const std::size_t L = alpha.value().size();
  if (L != x.value().rows())
    throw DimensionError("attend: " + std::to_string(L) + " weights for " + std::to_string(x.value().rows()) +
                         " locations");
  return matmul(reshape(alpha, {1, L}), x);
}

/// Forget-gate LSTM without peepholes.
inline LstmState lstm_step(Var z, LstmState prev, const BoundParams& p) {
  auto gate = [&](Var W, Var U, Var bias) { return add_row(add(matmul(z, W), matmul(prev.h, U)), bias); };
  Var i = sigmoid_elem(gate(p.Wi, p.Ui, p.bi));
  Var f = sigmoid_elem(gate(p.Wf, p.Uf, p.bf));
  Var o = sigmoid_elem(gate(p.Wo, p.Uo, p.bo));
  Var g = tanh_elem(gate(p.Wg, p.Ug, p.bg));
  Var c = add(mul(f, prev.c), mul(i, g));
  Var h = mul(o, tanh_elem(c));
  return {h, c};
}

/// m = w2ᵀ·relu(W1·h + b1) + b2, with dropout on the hidden layer.
template <class Rng>
Var discrete_score(Var h, const BoundParams& p, double dropout_rate, DropoutMode mode, Rng& rng) {
  Var hidden = relu_elem(add_row(matmul(h, p.fm_w1), p.fm_b1));
  hidden = dropout(hidden, dropout_rate, mode == DropoutMode::train, rng);
  return add_row(matmul(hidden, p.fm_w2), p.fm_b2);
}

/// L_α = Σ_i (1 − Σ_t α_{t,i})²
inline Var attention_penalty(std::span<const Var> alphas) {
  if (alphas.empty()) throw std::invalid_argument("attention_penalty: no attention maps");
  Tape& t = *alphas.front().tape;
  Var total = alphas.front();
  for (std::size_t k = 1; k < alphas.size(); ++k) total = add(total, alphas[k]);
  Var ones = t.constant(Tensor(total.value().shape(), 1.0));
  return sum_all(square_elem(sub(ones, total)));
}

/// y = m_1 + m_2 + ... + m_T, accumulated left to right (the order forward uses).
inline double total_score(std::span<const double> m) {
  double y = 0.0;
  for (double v : m) y += v;
  return y;
}

/// Nodes of one forward pass on a tape, plus the extracted trace.
struct ForwardGraph {
  Var y;
  std::vector<Var> alphas;
  std::vector<Var> m;
  ForwardTrace trace;
};

template <class Rng>
ForwardGraph build_forward(Tape& tape, const Tensor& x, const BoundParams& p, const ModelConfig& cfg,
                           DropoutMode mode, Rng& rng) {
  detail::check_features(x, cfg);
  const std::size_t L = cfg.L();
  Var xv = tape.constant(x);
  LstmState state = init_state(xv, p);
  Var kx = cfg.attention_enabled ? matmul_nt(xv, p.K) : Var{};

  ForwardGraph g;
  g.trace.alpha = Tensor({cfg.T, L});
  g.trace.z = Tensor({cfg.T, cfg.D});
  g.trace.h = Tensor({cfg.T, cfg.B});
  const bool train = mode == DropoutMode::train;
  for (std::size_t t = 0; t < cfg.T; ++t) {
    Var e = cfg.attention_enabled ? attention_scores(kx, state.h, p) : tape.constant(Tensor({L}, 1.0));
    Var alpha = softmax_vec(e);
    Var z = attend(xv, alpha);
    std::copy_n(alpha.value().data(), L, g.trace.alpha.data() + t * L);
    std::copy_n(z.value().data(), cfg.D, g.trace.z.data() + t * cfg.D);
    z = dropout(z, cfg.context_dropout_rate, train, rng);
    state = lstm_step(z, state, p);
    std::copy_n(state.h.value().data(), cfg.B, g.trace.h.data() + t * cfg.B);
    Var m = discrete_score(state.h, p, cfg.dropout_rate, mode, rng);
    g.alphas.push_back(alpha);
    g.m.push_back(m);
    g.trace.m.push_back(m.item());
  }
  g.y = g.m.front();
  for (std::size_t t = 1; t < g.m.size(); ++t) g.y = add(g.y, g.m[t]);
  g.trace.y = g.y.item();
  return g;
}

// ---------------------------------------------------------------------------
// Plain-value entry points.

/// Eval-mode forward pass.
inline ForwardTrace forward(const Tensor& x, const ModelParams& params, const ModelConfig& cfg) {
  Tape tape;
  std::mt19937_64 unused(0);
  return build_forward(tape, x, bind(tape, params), cfg, DropoutMode::eval, unused).trace;
}

template <class Rng>
ForwardTrace forward(const Tensor& x, const ModelParams& params, const ModelConfig& cfg, DropoutMode mode,
                     Rng& rng) {
  Tape tape;
  return build_forward(tape, x, bind(tape, params), cfg, mode, rng).trace;
}

inline std::pair<Tensor, Tensor> init_state(const Tensor& x, const ModelParams& params, const ModelConfig& cfg) {
  detail::check_features(x, cfg);
  Tape tape;
  auto s = init_state(tape.constant(x), bind(tape, params));
  return {s.h.value().reshaped({cfg.B}), s.c.value().reshaped({cfg.B})};
}

inline Tensor attention_scores(const Tensor& x, const Tensor& h_prev, const ModelParams& params,
                               const ModelConfig& cfg) {
  detail::check_features(x, cfg);
  if (h_prev.size() != cfg.B)
    throw DimensionError("attention_scores: state has shape " + shape_str(h_prev.shape()) + ", expected [" +
                         std::to_string(cfg.B) + "]");
  if (!cfg.attention_enabled) return Tensor({cfg.L()}, 1.0);
  Tape tape;
  BoundParams p = bind(tape, params);
  Var kx = matmul_nt(tape.constant(x), p.K);
  return attention_scores(kx, tape.constant(h_prev.reshaped({1, cfg.B})), p).value();
}

inline Tensor attend(const Tensor& x, const Tensor& alpha) {
  Tape tape;
  const Tensor z = attend(tape.constant(x), tape.constant(alpha)).value();
  return z.reshaped({z.size()});
}

inline std::pair<Tensor, Tensor> lstm_step(const Tensor& z, const Tensor& h_prev, const Tensor& c_prev,
                                           const ModelParams& params, const ModelConfig& cfg) {
  if (z.size() != cfg.D || h_prev.size() != cfg.B || c_prev.size() != cfg.B)
    throw DimensionError("lstm_step: got z " + shape_str(z.shape()) + ", h " + shape_str(h_prev.shape()) + ", c " +
                         shape_str(c_prev.shape()));
  Tape tape;
  BoundParams p = bind(tape, params);
  LstmState prev{tape.constant(h_prev.reshaped({1, cfg.B})), tape.constant(c_prev.reshaped({1, cfg.B}))};
  LstmState next = lstm_step(tape.constant(z.reshaped({1, cfg.D})), prev, p);
  return {next.h.value().reshaped({cfg.B}), next.c.value().reshaped({cfg.B})};
}

template <class Rng>
double discrete_score(const Tensor& h, const ModelParams& params, const ModelConfig& cfg, DropoutMode mode,
                      Rng& rng) {
  if (h.size() != cfg.B)
    throw DimensionError("discrete_score: state has shape " + shape_str(h.shape()));
  Tape tape;
  return discrete_score(tape.constant(h.reshaped({1, cfg.B})), bind(tape, params), cfg.dropout_rate, mode, rng)
      .item();
}

inline double discrete_score(const Tensor& h, const ModelParams& params, const ModelConfig& cfg) {
  std::mt19937_64 unused(0);
  return discrete_score(h, params, cfg, DropoutMode::eval, unused);
}

/// alpha is T×L.
inline double attention_penalty(const Tensor& alpha) {
  const std::size_t T = alpha.rows(), L = alpha.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    double s = 1.0;
    for (std::size_t t = 0; t < T; ++t) s -= alpha[t * L + i];
    total += s * s;
  }
  return total;
}

}  // namespace amnet
