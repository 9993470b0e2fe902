#pragma once

// Finite-difference verification of every parameter group of the full loss.

#include <chrono>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "amnet/model.hpp"
#include "amnet/numerics.hpp"
#include "amnet/training.hpp"

namespace amnet {

struct GradCheckOptions {
  ModelConfig config = [] {
    ModelConfig c;
    c.W = 3;
    c.H = 3;
    c.D = 8;
    c.B = 6;
    c.T = 3;
    c.fm_hidden = 5;
    c.dropout_rate = 0.0;
    c.context_dropout_rate = 0.0;
    c.seed = 7;
    return c;
  }();
  /// Penalty weight; large enough that the attention-penalty path matters.
  double lambda = 0.1;
  double target = 0.3;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t data_seed = 11;
  /// Test hook run on the analytic gradients before comparison.
  std::function<void(ModelParams&)> tamper_grads;
};

struct GroupResult {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GroupResult> groups;
  bool pass = true;
  std::string worst;
  double worst_error = 0.0;
  double seconds = 0.0;
};

inline GradCheckReport run_gradcheck(const GradCheckOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig cfg = opt.config;
  cfg.dropout_rate = 0.0;
  cfg.context_dropout_rate = 0.0;
  cfg.validate();

  ModelParams params = init_params(cfg);
  std::mt19937_64 rng(opt.data_seed);
  std::uniform_real_distribution<double> small(-0.2, 0.2);
  for (Param* p : params.list())
    if (p->value.rank() == 1)
      for (double& v : p->value.values()) v = small(rng);
  // Keep the regression hidden units active so their gradients are exercised.
  for (double& v : params.fm_b1.value.values()) v = 0.5 + small(rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor x({cfg.L(), cfg.D});
  for (double& v : x.values()) v = normal(rng);

  TrainConfig tcfg;
  tcfg.lambda = opt.lambda;

  auto plist = params.list();
  zero_grads(plist);
  std::mt19937_64 unused(0);
  accumulate_sample_grad(x, opt.target, params, cfg, tcfg, DropoutMode::eval, unused);
  if (opt.tamper_grads) opt.tamper_grads(params);

  const auto loss_fn = [&] { return loss(x, opt.target, params, cfg, tcfg).loss; };
  GradCheckReport report;
  for (Param* p : plist) {
    const Tensor numeric = finite_diff_grad(loss_fn, *p, opt.step);
    const double err = max_relative_error(p->grad, numeric);
    const bool ok = err < opt.tolerance;
    report.groups.push_back({p->name, err, ok});
    report.pass = report.pass && ok;
    if (err >= report.worst_error) {
      report.worst_error = err;
      report.worst = p->name;
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace amnet
