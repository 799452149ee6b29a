#include <doctest.h>

#include <cmath>
#include <functional>

#include "lorekt/autograd/gate.hpp"
#include "lorekt/autograd/ops.hpp"
#include "lorekt/common/error.hpp"

using namespace lorekt;
using ag::Parameter;
using ag::Shape;
using ag::Tape;
using ag::Tensor;
using ag::Var;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.storage()) v = normal(rng, 0.0, scale);
  return t;
}

using LossFn = std::function<Var<double>(Tape<double>&, std::vector<Parameter<double>>&)>;

double loss_value(const LossFn& fn, std::vector<Parameter<double>>& params) {
  Tape<double> tape(false);
  return fn(tape, params).value()[0];
}

// Central differences on every element of every parameter against backward.
void check_gradients(const LossFn& fn, std::vector<Parameter<double>>& params, double tol = 1e-6) {
  for (auto& p : params) p.zero_grad();
  {
    Tape<double> tape;
    tape.backward(fn(tape, params));
  }
  const double h = 1e-5;
  for (auto& p : params) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + h;
      const double up = loss_value(fn, params);
      p.value[k] = saved - h;
      const double down = loss_value(fn, params);
      p.value[k] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = p.has_grad() ? p.grad[k] : 0.0;
      INFO(p.name << "[" << k << "] fd=" << fd << " analytic=" << an);
      CHECK(std::abs(fd - an) <= tol * std::max(1.0, std::abs(fd)));
    }
  }
}

// Contracts an op output with fixed random weights so every element matters.
Var<double> contract(Tape<double>& tape, const Var<double>& y, std::uint64_t seed) {
  Rng rng(seed);
  return ag::sum(ag::mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

}  // namespace

TEST_CASE("tensor construction and shape errors") {
  Tensor<float> t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 1.5f);
  CHECK_THROWS_AS(Tensor<float>({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  t.reshape({3, 2});
  CHECK(t.shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshape({4, 2}), ShapeError);
  t[0] = std::nanf("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("trivial op values") {
  Tape<double> tape;
  const auto s = ag::softmax(tape.constant(Tensor<double>({3})));
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.value()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(ag::sigmoid(tape.constant(Tensor<double>({1}))).value()[0] == 0.5);
  const auto ln = ag::layer_norm(tape.constant(Tensor<double>({2, 4}, 3.25)));
  for (double v : ln.value().span()) CHECK(v == 0.0);
}

TEST_CASE("shape mismatch names the op and both shapes") {
  Tape<double> tape;
  const auto a = tape.constant(Tensor<double>({2, 3}));
  const auto b = tape.constant(Tensor<double>({4, 5}));
  try {
    ag::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 5]") != std::string::npos);
  }
  CHECK_THROWS_AS(ag::matmul(a, b), ShapeError);
}

TEST_CASE("non-finite output raises NumericalError") {
  Tape<double> tape;
  Tensor<double> big({1}, 1e308);
  const auto x = tape.constant(big);
  CHECK_THROWS_AS(ag::mul(x, x), NumericalError);
}

TEST_CASE("backward of x*x at 3 is 6") {
  Parameter<double> x("x", Tensor<double>({1}, 3.0));
  Tape<double> tape;
  const auto v = tape.parameter(x);
  tape.backward(ag::mul(v, v));
  CHECK(x.grad[0] == 6.0);
}

TEST_CASE("backward errors and dead branches") {
  Parameter<double> x("x", Tensor<double>({2}, 1.0));
  Parameter<double> unused("unused", Tensor<double>({2}, 1.0));
  Tape<double> tape;
  const auto v = tape.parameter(x);
  const auto dead = tape.parameter(unused);
  (void)ag::mul(dead, dead);
  CHECK_THROWS_AS(tape.backward(v), ShapeError);
  CHECK_THROWS_AS(tape.backward(tape.constant(Tensor<double>({1}, 2.0))), Error);
  tape.backward(ag::sum(ag::mul(v, v)));
  CHECK(x.grad[0] == 2.0);
  // Nothing flowed into `unused`: its gradient stays exactly zero.
  for (std::size_t i = 0; i < 2; ++i) CHECK((unused.has_grad() ? unused.grad[i] : 0.0) == 0.0);

  Tape<double> other;
  CHECK_THROWS_AS(other.backward(v), Error);
}

TEST_CASE("parameter gradients accumulate until zero_grad") {
  Parameter<double> x("x", Tensor<double>({1}, 2.0));
  for (int i = 0; i < 2; ++i) {
    Tape<double> tape;
    const auto v = tape.parameter(x);
    tape.backward(ag::mul(v, v));
  }
  CHECK(x.grad[0] == 8.0);
  x.zero_grad();
  CHECK(x.grad[0] == 0.0);
}

TEST_CASE("untracked tape keeps no gradients") {
  Parameter<double> x("x", Tensor<double>({1}, 2.0));
  Tape<double> tape(false);
  const auto y = ag::mul(tape.parameter(x), tape.parameter(x));
  CHECK_FALSE(y.requires_grad());
  CHECK_THROWS_AS(tape.backward(y), Error);
}

TEST_CASE("binary cross-entropy values") {
  Tape<double> tape;
  auto bce = [&](std::vector<double> p, std::vector<double> t, std::vector<double> m) {
    const Shape s{p.size(), 1};
    return ag::bce_loss(tape.constant(Tensor<double>(s, p)), Tensor<double>(s, t), Tensor<double>(s, m)).value()[0];
  };
  CHECK(bce({0.5}, {1}, {1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce({1 - 1e-7}, {1}, {1}) == doctest::Approx(1e-7).epsilon(1e-6));
  CHECK(bce({0.9, 0.2}, {1, 0}, {1, 0}) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
  CHECK_THROWS_AS(bce({0.9, 0.2}, {1, 0}, {0, 0}), Error);
  CHECK_THROWS_AS(bce({0.9}, {2}, {1}), Error);
}

TEST_CASE("gate is transparent and its gradient is the layer output") {
  ag::GateParam<double> gate("g", 2);
  Tape<double> tape;
  const auto o = tape.constant(Tensor<double>({1, 2}, {0.2, -1.5}));
  const auto gated = ag::gate_apply(o, gate);
  CHECK(gated.value()[0] == 0.2);
  CHECK(gated.value()[1] == -1.5);
  tape.backward(ag::sum(gated));
  CHECK(gate.captured_grad()[0] == 0.2);
  CHECK(gate.captured_grad()[1] == -1.5);
  gate.reset();
  CHECK(gate.captured_grad()[0] == 0.0);

  ag::GateParam<double> wide("w", 3);
  CHECK_THROWS_AS(ag::gate_apply(o, wide), ShapeError);
}

TEST_CASE("finite differences: elementwise and reduction ops") {
  Rng rng(11);
  std::vector<Parameter<double>> ps;
  ps.emplace_back("a", random_tensor({3, 4}, rng));
  ps.emplace_back("b", random_tensor({3, 4}, rng));
  ps.emplace_back("row", random_tensor({4}, rng));
  check_gradients(
      [](Tape<double>& t, auto& p) {
        const auto a = t.parameter(p[0]), b = t.parameter(p[1]), row = t.parameter(p[2]);
        auto y = ag::add(ag::mul(a, b), row);
        y = ag::add(y, ag::mul(a, row));
        y = ag::scale(ag::sigmoid(y), 1.7);
        y = ag::add(y, ag::gelu(b));
        y = ag::add(y, ag::softmax(a));
        y = ag::add(y, ag::layer_norm(b));
        return ag::add(contract(t, y, 1), ag::sum(ag::mean(ag::mul(a, a), 0)));
      },
      ps);
}

TEST_CASE("finite differences: matmul, embedding, concat") {
  Rng rng(12);
  std::vector<Parameter<double>> ps;
  ps.emplace_back("x", random_tensor({3, 4}, rng));
  ps.emplace_back("w", random_tensor({5, 4}, rng));
  ps.emplace_back("v", random_tensor({4, 2}, rng));
  ps.emplace_back("table", random_tensor({6, 5}, rng));
  check_gradients(
      [](Tape<double>& t, auto& p) {
        const auto x = t.parameter(p[0]);
        const auto y = ag::matmul(x, t.parameter(p[1]), true);  // [3, 5]
        const auto z = ag::matmul(x, t.parameter(p[2]));        // [3, 2]
        ag::EmbeddingIndex idx;
        idx.push({0, 2});
        idx.push({});
        idx.push({5});
        const auto e = ag::embedding_lookup(t.parameter(p[3]), idx);  // [3, 5]
        const auto joined = ag::concat<double>({ag::add(y, e), z}, 1);
        const auto stacked = ag::concat<double>({joined, joined}, 0);
        return contract(t, stacked, 2);
      },
      ps);
}

TEST_CASE("finite differences: causal attention with two heads") {
  Rng rng(13);
  const ag::AttentionShape shape{2, 3, 2};
  std::vector<Parameter<double>> ps;
  ps.emplace_back("q", random_tensor({6, 4}, rng));
  ps.emplace_back("k", random_tensor({6, 4}, rng));
  ps.emplace_back("v", random_tensor({6, 4}, rng));
  check_gradients(
      [&](Tape<double>& t, auto& p) {
        return contract(t, ag::causal_attention(t.parameter(p[0]), t.parameter(p[1]), t.parameter(p[2]), shape), 3);
      },
      ps);
}

TEST_CASE("causal attention ignores the future") {
  Rng rng(14);
  const ag::AttentionShape shape{1, 4, 1};
  Tensor<double> q = random_tensor({4, 2}, rng), k = random_tensor({4, 2}, rng), v = random_tensor({4, 2}, rng);
  Tape<double> tape;
  const auto before = ag::causal_attention(tape.constant(q), tape.constant(k), tape.constant(v), shape).value();
  k.at(3, 0) += 5.0;
  v.at(3, 1) -= 5.0;
  const auto after = ag::causal_attention(tape.constant(q), tape.constant(k), tape.constant(v), shape).value();
  for (std::size_t i = 0; i < 6; ++i) CHECK(before[i] == after[i]);
  CHECK(before[7] != after[7]);
}

TEST_CASE("finite differences: bce loss") {
  Rng rng(15);
  std::vector<Parameter<double>> ps;
  ps.emplace_back("logits", random_tensor({4, 1}, rng));
  const Tensor<double> targets({4, 1}, {1, 0, 1, 0});
  const Tensor<double> mask({4, 1}, {1, 1, 0, 1});
  check_gradients(
      [&](Tape<double>& t, auto& p) { return ag::bce_loss(ag::sigmoid(t.parameter(p[0])), targets, mask); }, ps);
}

TEST_CASE("dropout is identity in eval and inverted in train") {
  Rng rng(3);
  Tape<double> tape;
  const auto x = tape.constant(Tensor<double>({200, 5}, 1.0));
  const auto eval = ag::dropout(x, 0.5, rng, false);
  for (double v : eval.value().span()) CHECK(v == 1.0);
  const auto train = ag::dropout(x, 0.5, rng, true);
  std::size_t kept = 0;
  for (double v : train.value().span()) {
    CHECK((v == 0.0 || v == 2.0));
    kept += v != 0.0;
  }
  CHECK(kept > 400);
  CHECK(kept < 600);
  CHECK_THROWS(ag::dropout(x, 1.0, rng, true));
}
