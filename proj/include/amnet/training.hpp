#pragma once

// Loss, ADAM with decoupled weight decay, minibatch epochs and early stopping
// on validation rank correlation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "amnet/data.hpp"
#include "amnet/metrics.hpp"
#include "amnet/model.hpp"
#include "amnet/numerics.hpp"

namespace amnet {

struct TrainConfig {
  double learning_rate = 1e-3;
  double lambda = 1e-4;
  double weight_decay = 1e-6;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (!(lambda >= 0.0)) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (patience == 0) throw std::invalid_argument("TrainConfig: patience must be >= 1");
    if (max_epochs == 0) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Stronger weight decay for small training sets.
inline constexpr double kSmallDataWeightDecay = 1e-4;

class DegenerateDataset : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Score normalization to [-1, 1] on the training split.

struct NormStats {
  double mean = 0.0;
  double half_range = 1.0;
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline NormStats compute_norm_stats(std::span<const double> scores) {
  if (scores.empty()) throw DegenerateDataset("no training scores to normalize");
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  double half = 0.0;
  for (double s : scores) half = std::max(half, std::abs(s - mean));
  if (!(half > 0.0)) throw DegenerateDataset("all training scores are equal; cannot scale to [-1,1]");
  return {mean, half};
}

inline double normalize_score(double s, const NormStats& st) {
  if (!(st.half_range > 0.0)) throw DegenerateDataset("normalization half_range must be > 0");
  return (s - st.mean) / st.half_range;
}

inline double denormalize_score(double n, const NormStats& st) { return n * st.half_range + st.mean; }

// ---------------------------------------------------------------------------
// Loss.

struct LossResult {
  double loss = 0.0;
  ForwardTrace trace;
};

/// Builds (y − target)² + λ·L_α on `tape` and returns the loss node.
inline Var build_loss(Tape& tape, const ForwardGraph& g, double target, double lambda) {
  Var diff = sub(g.y, tape.constant(Tensor(g.y.value().shape(), target)));
  Var loss = square_elem(diff);
  if (lambda != 0.0) loss = add(loss, scale(attention_penalty(g.alphas), lambda));
  return loss;
}

/// Loss value without gradients. Weight decay lives in the optimizer, not here.
inline LossResult loss(const Tensor& x, double target_normalized, const ModelParams& params, const ModelConfig& mcfg,
                       const TrainConfig& tcfg) {
  if (!std::isfinite(target_normalized)) throw std::invalid_argument("loss: target must be finite");
  Tape tape;
  std::mt19937_64 unused(0);
  ForwardGraph g = build_forward(tape, x, bind(tape, params), mcfg, DropoutMode::eval, unused);
  Var l = build_loss(tape, g, target_normalized, tcfg.lambda);
  return {l.item(), std::move(g.trace)};
}

/// One sample's loss with its gradient, scaled by `weight`, added to params.
template <class Rng>
double accumulate_sample_grad(const Tensor& x, double target_normalized, ModelParams& params,
                              const ModelConfig& mcfg, const TrainConfig& tcfg, DropoutMode mode, Rng& rng,
                              double weight = 1.0) {
  Tape tape;
  ForwardGraph g = build_forward(tape, x, bind(tape, params), mcfg, mode, rng);
  Var l = build_loss(tape, g, target_normalized, tcfg.lambda);
  tape.backward(l, weight);
  return l.item();
}

// ---------------------------------------------------------------------------
// ADAM.

struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

/// Bias-corrected ADAM. Decoupled weight decay θ ← θ − lr·wd·θ runs before
/// the adaptive update.
inline void adam_step(std::span<Param* const> params, OptimizerState& st, const TrainConfig& cfg) {
  if (st.first_moment.empty()) {
    for (Param* p : params) {
      st.first_moment.push_back(Tensor::zeros_like(p->value));
      st.second_moment.push_back(Tensor::zeros_like(p->value));
    }
  }
  if (st.first_moment.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state tracks a different parameter set");
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  const double decay = cfg.learning_rate * cfg.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    Tensor& m = st.first_moment[k];
    Tensor& v = st.second_moment[k];
    if (m.shape() != p.value.shape()) throw DimensionError("adam_step: moment shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.value[i] -= decay * p.value[i];
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

inline void adam_step(ModelParams& params, OptimizerState& st, const TrainConfig& cfg) {
  auto list = params.list();
  adam_step(list, st, cfg);
}

// ---------------------------------------------------------------------------
// Epochs.

/// A training example: borrowed features and a normalized target.
struct Example {
  const Tensor* features = nullptr;
  double target = 0.0;
};

/// Shuffles, runs one ADAM step per minibatch of averaged gradients and
/// returns the mean per-sample loss.
template <class Rng>
double train_epoch(std::span<const Example> train_set, ModelParams& params, OptimizerState& opt,
                   const ModelConfig& mcfg, const TrainConfig& tcfg, Rng& rng) {
  if (train_set.empty()) throw std::invalid_argument("train_epoch: empty training set");
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  auto plist = params.list();
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
    const double weight = 1.0 / static_cast<double>(end - start);
    zero_grads(plist);
    for (std::size_t k = start; k < end; ++k) {
      const Example& ex = train_set[order[k]];
      total += accumulate_sample_grad(*ex.features, ex.target, params, mcfg, tcfg, DropoutMode::train, rng, weight);
    }
    adam_step(plist, opt, tcfg);
  }
  return total / static_cast<double>(train_set.size());
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalMetrics {
  double rho = 0.0;
  double mse = 0.0;
  std::size_t n = 0;
};

/// Denormalized (unclamped) eval-mode prediction.
inline double predict_score(const Tensor& x, const ModelParams& params, const ModelConfig& cfg, const NormStats& st) {
  return denormalize_score(forward(x, params, cfg).y, st);
}

/// ρ and MSE of denormalized predictions against ground-truth scores.
/// Throws UndefinedCorrelation when either side is constant.
inline EvalMetrics evaluate(std::span<const FeatureRecord> records, const ModelParams& params, const ModelConfig& cfg,
                            const NormStats& st) {
  std::vector<ScorePair> pairs;
  pairs.reserve(records.size());
  for (const auto& r : records) {
    if (!r.score) throw std::invalid_argument("evaluate: record '" + r.id + "' has no ground-truth score");
    pairs.push_back({*r.score, predict_score(r.features, params, cfg, st)});
  }
  return {spearman_rho(pairs), mse(pairs), pairs.size()};
}

// ---------------------------------------------------------------------------
// Fit.

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_rho = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_rho = -std::numeric_limits<double>::infinity();
  bool stopped_early = false;
  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

/// One JSON object per epoch, newline-terminated.
inline void write_report_jsonl(std::ostream& os, const TrainReport& r) {
  for (const auto& e : r.epochs) {
    nlohmann::json j{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_mse", e.val_mse}, {"val_rho", e.val_rho}};
    os << j.dump() << '\n';
  }
}

inline std::vector<EpochRecord> parse_report_jsonl(std::istream& is) {
  std::vector<EpochRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("epoch").get<std::size_t>(), j.at("train_loss").get<double>(), j.at("val_mse").get<double>(),
                   j.at("val_rho").get<double>()});
  }
  return out;
}

struct FitResult {
  ModelParams params;  // from the best-ρ epoch
  NormStats stats;
  TrainReport report;
};

/// Validation hook: (params at end of epoch, 1-based epoch) → metrics.
using Validator = std::function<EvalMetrics(const ModelParams&, std::size_t)>;

/// Called after every epoch with the record just appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from init_params(mcfg) until validation ρ has not improved for
/// `patience` epochs or `max_epochs` is reached. An undefined validation ρ
/// (constant predictions) counts as 0.
inline FitResult fit(std::span<const FeatureRecord> train_set, std::span<const FeatureRecord> val_set,
                     const ModelConfig& mcfg, const TrainConfig& tcfg, const Validator& validator = {},
                     const EpochCallback& on_epoch = {}) {
  mcfg.validate();
  tcfg.validate();
  if (train_set.empty()) throw std::invalid_argument("fit: empty training set");
  if (val_set.empty() && !validator) throw std::invalid_argument("fit: empty validation set");

  std::vector<double> scores;
  for (const auto& r : train_set) {
    if (!r.score) throw std::invalid_argument("fit: training record '" + r.id + "' has no score");
    scores.push_back(*r.score);
  }
  FitResult out;
  out.stats = compute_norm_stats(scores);
  std::vector<Example> examples;
  examples.reserve(train_set.size());
  for (const auto& r : train_set) examples.push_back({&r.features, normalize_score(*r.score, out.stats)});

  ModelParams params = init_params(mcfg);
  check_params(params, mcfg);
  out.params = params;
  OptimizerState opt;
  std::mt19937_64 rng(tcfg.seed);

  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_epoch(std::span<const Example>(examples), params, opt, mcfg, tcfg, rng);
    EvalMetrics m;
    if (validator) {
      m = validator(params, epoch);
    } else {
      try {
        m = evaluate(val_set, params, mcfg, out.stats);
      } catch (const UndefinedCorrelation&) {
        std::vector<ScorePair> pairs;
        for (const auto& r : val_set) pairs.push_back({r.score.value_or(0.0), predict_score(r.features, params, mcfg, out.stats)});
        m = {0.0, mse(pairs), pairs.size()};
      }
    }
    rec.val_mse = m.mse;
    rec.val_rho = m.rho;
    out.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_rho > out.report.best_rho) {
      out.report.best_rho = rec.val_rho;
      out.report.best_epoch = epoch;
      out.params = params;
    }
    if (epoch - out.report.best_epoch >= tcfg.patience) {
      out.report.stopped_early = epoch < tcfg.max_epochs;
      break;
    }
  }
  return out;
}

}  // namespace amnet
