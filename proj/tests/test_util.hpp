#pragma once

#include <functional>
#include <random>
#include <vector>

#include "amnet/numerics.hpp"

namespace amnet::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

using OpBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Worst relative error between tape gradients and central differences for
/// loss = Σ w ⊙ op(inputs) with fixed random weights w.
inline double op_grad_error(const OpBuilder& op, std::vector<Tensor> inputs, std::uint64_t seed = 1) {
  std::vector<Param> params;
  for (std::size_t i = 0; i < inputs.size(); ++i) params.emplace_back("in" + std::to_string(i), inputs[i]);
  std::mt19937_64 rng(seed);
  Tensor weights;
  auto run = [&](bool backward) {
    Tape t;
    std::vector<Var> vars;
    for (Param& p : params) vars.push_back(t.param(p));
    Var out = op(t, vars);
    if (weights.size() != out.value().size()) weights = random_tensor(out.value().shape(), rng);
    Var loss = sum_all(mul(out, t.constant(weights)));
    if (backward) t.backward(loss);
    return loss.item();
  };
  std::vector<Param*> ptrs;
  for (Param& p : params) ptrs.push_back(&p);
  zero_grads(ptrs);
  run(true);
  double worst = 0.0;
  for (Param& p : params) {
    const Tensor numeric = finite_diff_grad([&] { return run(false); }, p, 1e-5);
    worst = std::max(worst, max_relative_error(p.grad, numeric));
  }
  return worst;
}

}  // namespace amnet::test
