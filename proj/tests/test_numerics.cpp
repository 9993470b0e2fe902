#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "amnet/numerics.hpp"
#include "test_util.hpp"

using namespace amnet;
using amnet::test::op_grad_error;
using amnet::test::random_tensor;
using Catch::Matchers::WithinAbs;

TEST_CASE("matmul forward", "[numerics]") {
  const Tensor id = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(matmul(id, a) == a);

  const Tensor proj = Tensor::matrix(2, 2, {1, 0, 0, 0});
  const Tensor col = Tensor::matrix(2, 1, {5, 7});
  CHECK(matmul(proj, col) == Tensor::matrix(2, 1, {5, 0}));
}

TEST_CASE("matmul shape mismatch names both shapes", "[numerics]") {
  const Tensor a({2, 3});
  const Tensor b({2, 3});
  try {
    (void)matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences", "[numerics][gradient]") {
  std::mt19937_64 rng(3);
  const double err = op_grad_error([](Tape&, const std::vector<Var>& v) { return matmul(v[0], v[1]); },
                                   {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  CHECK(err < 1e-6);
  const double err_nt = op_grad_error([](Tape&, const std::vector<Var>& v) { return matmul_nt(v[0], v[1]); },
                                      {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng)});
  CHECK(err_nt < 1e-6);
}

TEST_CASE("tanh_elem values and gradient", "[numerics]") {
  CHECK(tanh_elem(Tensor::vector({0.0}))[0] == 0.0);
  CHECK_THAT(tanh_elem(Tensor::vector({50.0}))[0], WithinAbs(1.0, 1e-12));
  const double err =
      op_grad_error([](Tape&, const std::vector<Var>& v) { return tanh_elem(v[0]); }, {Tensor::vector({0.3})});
  CHECK(err < 1e-8);
  CHECK_THROWS_AS(tanh_elem(Tensor::vector({std::nan("")})), NonFiniteError);
}

TEST_CASE("softmax_vec", "[numerics]") {
  SECTION("constant input is uniform") {
    const Tensor s = softmax_vec(Tensor({5}, 3.7));
    for (double v : s.values()) CHECK_THAT(v, WithinAbs(0.2, 1e-15));
  }
  SECTION("length one") { CHECK(softmax_vec(Tensor::vector({-12.0}))[0] == 1.0); }
  SECTION("closed form exp ratio") {
    const Tensor s = softmax_vec(Tensor::vector({0.0, std::log(3.0)}));
    CHECK_THAT(s[0], WithinAbs(0.25, 1e-15));
    CHECK_THAT(s[1], WithinAbs(0.75, 1e-15));
  }
  SECTION("empty vector") { CHECK_THROWS_AS(softmax_vec(Tensor({0})), std::invalid_argument); }
  SECTION("large logits stay finite") {
    const Tensor s = softmax_vec(Tensor::vector({1000.0, 999.0, -1000.0}));
    CHECK(s.all_finite());
    CHECK_THAT(s[0] + s[1] + s[2], WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("softmax sums to one and is shift invariant", "[numerics][property]") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor e = random_tensor({len(rng)}, rng, -10.0, 10.0);
    const Tensor s = softmax_vec(e);
    double total = 0.0;
    for (double v : s.values()) {
      CHECK(v > 0.0);
      total += v;
    }
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));
    Tensor shifted = e;
    const double c = shift(rng);
    for (double& v : shifted.values()) v += c;
    const Tensor s2 = softmax_vec(shifted);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK_THAT(s2[i], WithinAbs(s[i], 1e-12));
  }
}

TEST_CASE("every primitive's gradient matches finite differences", "[numerics][gradient]") {
  std::mt19937_64 rng(5);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({3, 4}, rng);
  const Tensor r = random_tensor({4}, rng);
  auto check = [](double err) { CHECK(err < 1e-4); };

  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }, {a, b}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return sub(v[0], v[1]); }, {a, b}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return mul(v[0], v[1]); }, {a, b}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return add_row(v[0], v[1]); }, {a, r}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return scale(v[0], -2.5); }, {a}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return sigmoid_elem(v[0]); }, {a}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return square_elem(v[0]); }, {a}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return relu_elem(v[0]); }, {a}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return softmax_vec(v[0]); }, {r}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return sum_all(v[0]); }, {a}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return mean_all(v[0]); }, {a}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return row_sum(v[0]); }, {a}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return row_mean(v[0]); }, {a}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return row(v[0], 1); }, {a}));
  check(op_grad_error([](Tape&, const std::vector<Var>& v) { return reshape(v[0], {12}); }, {a}));
  check(op_grad_error(
      [](Tape&, const std::vector<Var>& v) {
        const std::vector<Var> parts{v[1], v[0], v[1]};
        return concat(parts);
      },
      {r, random_tensor({2}, rng)}));
}

TEST_CASE("shape errors from primitives", "[numerics]") {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  Var b = t.constant(Tensor({3, 2}));
  CHECK_THROWS_AS(add(a, b), DimensionError);
  CHECK_THROWS_AS(mul(a, b), DimensionError);
  CHECK_THROWS_AS(add_row(a, t.constant(Tensor({2}))), DimensionError);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("dropout", "[numerics]") {
  std::mt19937_64 rng(1);
  Tape t;
  Var x = t.constant(Tensor({1, 1000}, 1.0));
  SECTION("disabled is the identity node") {
    Var y = dropout(x, 0.5, false, rng);
    CHECK(y.id == x.id);
  }
  SECTION("enabled zeroes entries and rescales the rest") {
    Var y = dropout(x, 0.5, true, rng);
    std::size_t zeros = 0;
    for (double v : y.value().values()) {
      CHECK((v == 0.0 || v == 2.0));
      zeros += v == 0.0;
    }
    CHECK(zeros > 400);
    CHECK(zeros < 600);
  }
  SECTION("backward uses the forward mask") {
    Param p("p", Tensor({1, 50}, 0.7));
    Tape tp;
    Var y = dropout(tp.param(p), 0.3, true, rng);
    tp.backward(sum_all(y));
    for (std::size_t i = 0; i < 50; ++i) CHECK_THAT(p.grad[i], WithinAbs(y.value()[i] / 0.7, 1e-12));
  }
}

TEST_CASE("zero_grads", "[numerics]") {
  Param p("p", Tensor({2, 3}, 1.0));
  Tape t;
  t.backward(sum_all(square_elem(t.param(p))));
  CHECK(p.grad[0] == 2.0);
  std::vector<Param*> ps{&p};
  zero_grads(ps);
  for (double g : p.grad.values()) CHECK(g == 0.0);
  zero_grads(ps);
  for (double g : p.grad.values()) CHECK(g == 0.0);
  CHECK(p.grad.shape() == Shape{2, 3});
}

TEST_CASE("grads accumulate additively and backward is linear", "[numerics][property]") {
  std::mt19937_64 rng(8);
  Param w("w", random_tensor({3, 3}, rng));
  const Tensor x1 = random_tensor({2, 3}, rng);
  const Tensor x2 = random_tensor({2, 3}, rng);
  auto loss_of = [&](Tape& t, const Tensor& x) { return sum_all(square_elem(tanh_elem(matmul(t.constant(x), t.param(w))))); };

  std::vector<Param*> ps{&w};
  zero_grads(ps);
  {
    Tape t;
    t.backward(loss_of(t, x1));
  }
  {
    Tape t;
    t.backward(loss_of(t, x2));
  }
  const Tensor separate = w.grad;

  zero_grads(ps);
  {
    Tape t;
    t.backward(add(loss_of(t, x1), loss_of(t, x2)));
  }
  for (std::size_t i = 0; i < separate.size(); ++i) CHECK_THAT(w.grad[i], WithinAbs(separate[i], 1e-10));
}

TEST_CASE("finite_diff_grad", "[numerics][oracle]") {
  Param theta("theta", Tensor::vector({3.0}));
  SECTION("quadratic") {
    const Tensor g = finite_diff_grad([&] { return theta.value[0] * theta.value[0]; }, theta, 1e-5);
    CHECK_THAT(g[0], WithinAbs(6.0, 1e-6));
  }
  SECTION("constant") {
    const Tensor g = finite_diff_grad([] { return 4.2; }, theta, 1e-5);
    CHECK_THAT(g[0], WithinAbs(0.0, 1e-10));
  }
  SECTION("non-deterministic loss is rejected") {
    int calls = 0;
    CHECK_THROWS_AS(finite_diff_grad([&] { return static_cast<double>(++calls); }, theta, 1e-5), OracleError);
  }
  SECTION("non-positive step") {
    CHECK_THROWS_AS(finite_diff_grad([] { return 0.0; }, theta, 0.0), std::invalid_argument);
  }
  SECTION("parameter restored") {
    (void)finite_diff_grad([&] { return std::sin(theta.value[0]); }, theta, 1e-3);
    CHECK(theta.value[0] == 3.0);
  }
}
