// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <doctest.h>

#include "kanbench/autodiff.hpp"

using kanbench::NumericError;
using namespace kanbench::ad;

namespace {

double central_difference(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

}  // namespace

TEST_CASE("binary ops record values and local partials") {
  Tape t;
  const Var a = t.variable(2.0);
  const Var b = t.variable(3.0);
  const Var p = a * b;
  CHECK(p.value() == 6.0);
  t.backward(p);
  CHECK(t.adjoint(a) == 3.0);
  CHECK(t.adjoint(b) == 2.0);

  Tape t2;
  const Var x = t2.variable(1.7);
  const Var zero = x - x;
  CHECK(zero.value() == 0.0);
  t2.backward(zero);
  CHECK(t2.adjoint(x) == 0.0);

  Tape t3;
  const Var one = t3.variable(1.0);
  const Var four = t3.variable(4.0);
  const Var q = one / four;
  CHECK(q.value() == 0.25);
  t3.backward(q);
  CHECK(t3.adjoint(four) == doctest::Approx(-1.0 / 16.0).epsilon(1e-15));
  CHECK(t3.adjoint(one) == 0.25);
}

TEST_CASE("unary ops: values and slopes") {
  struct Case {
    UnaryOp op;
    double x, value, slope;
  };
  const Case cases[] = {
      {UnaryOp::silu, 0.0, 0.0, 0.5},   {UnaryOp::relu, -1.0, 0.0, 0.0}, {UnaryOp::square, 3.0, 9.0, 6.0},
      {UnaryOp::neg, 2.5, -2.5, -1.0},  {UnaryOp::abs, -2.0, 2.0, -1.0}, {UnaryOp::abs, 0.0, 0.0, 0.0},
      {UnaryOp::relu, 2.0, 2.0, 1.0},   {UnaryOp::exp, 0.0, 1.0, 1.0},   {UnaryOp::tanh, 0.0, 0.0, 1.0},
  };
  for (const auto& c : cases) {
    CAPTURE(to_string(c.op));
    CAPTURE(c.x);
    Tape t;
    const Var x = t.variable(c.x);
    const Var y = apply(c.op, x);
    CHECK(y.value() == c.value);
    t.backward(y);
    CHECK(t.adjoint(x) == c.slope);
  }
}

TEST_CASE("hand-derived chain rule: x*y + y") {
  Tape t;
  const Var x = t.variable(2.0);
  const Var y = t.variable(3.0);
  const Var z = t.variable(-4.0);  // unused leaf
  const Var root = x * y + y;
  const auto& g = t.backward(root);
  CHECK(g[x.index()] == 3.0);
  CHECK(g[y.index()] == 3.0);
  CHECK(g[z.index()] == 0.0);
  CHECK(g[root.index()] == 1.0);
}

TEST_CASE("silu(2x) matches a central difference") {
  Tape t;
  const Var x = t.variable(1.0);
  t.backward(silu(Var{2.0} * x));
  const double fd = central_difference([](double v) { return 2 * v / (1 + std::exp(-2 * v)); }, 1.0);
  CHECK(std::fabs(t.adjoint(x) - fd) / std::fabs(fd) < 1e-6);
}

TEST_CASE("fan-out: a leaf used on several paths gets the sum of contributions") {
  Tape t;
  const Var x = t.variable(0.7);
  // f = x*x*x + exp(x) + x  ->  f' = 3x^2 + e^x + 1
  const Var f = x * x * x + exp(x) + x;
  t.backward(f);
  CHECK(t.adjoint(x) == doctest::Approx(3 * 0.49 + std::exp(0.7) + 1).epsilon(1e-14));
}

namespace {

// Independent random-expression harness: a program of (op, lhs, rhs)
// triples evaluated once in plain long double arithmetic (for the
// finite-difference oracle) and once on the tape.
enum Op { kAdd, kSub, kMul, kDiv, kExp, kSilu, kRelu, kTanh, kSquare, kOpCount };

struct Instr {
  Op op;
  std::size_t a, b;
};

long double eval_ld(const std::vector<Instr>& prog, std::vector<long double> v) {
  for (const auto& in : prog) {
    const long double a = v[in.a];
    const long double b = v[in.b];
    long double r = 0;
    switch (in.op) {
      case kAdd: r = a + b; break;
      case kSub: r = a - b; break;
      case kMul: r = a * b; break;
      case kDiv: r = a / b; break;
      case kExp: r = std::exp(a); break;
      case kSilu: r = a / (1 + std::exp(-a)); break;
      case kRelu: r = a > 0 ? a : 0; break;
      case kTanh: r = std::tanh(a); break;
      default: r = a * a; break;
    }
    v.push_back(r);
  }
  return v.back();
}

Var eval_tape(const std::vector<Instr>& prog, std::vector<Var> v) {
  for (const auto& in : prog) {
    const Var a = v[in.a];
    const Var b = v[in.b];
    switch (in.op) {
      case kAdd: v.push_back(a + b); break;
      case kSub: v.push_back(a - b); break;
      case kMul: v.push_back(a * b); break;
      case kDiv: v.push_back(a / b); break;
      case kExp: v.push_back(exp(a)); break;
      case kSilu: v.push_back(silu(a)); break;
      case kRelu: v.push_back(relu(a)); break;
      case kTanh: v.push_back(tanh(a)); break;
      default: v.push_back(square(a)); break;
    }
  }
  return v.back();
}

// Rejects programs that pass near a pole or kink, where a central
// difference is not a valid oracle.
bool well_conditioned(const std::vector<Instr>& prog, const std::vector<long double>& leaves) {
  std::vector<long double> v = leaves;
  for (const auto& in : prog) {
    const long double a = v[in.a];
    const long double b = v[in.b];
    if (in.op == kDiv && std::fabs(b) < 0.3L) return false;
    if (in.op == kExp && a > 6) return false;
    if (in.op == kRelu && std::fabs(a) < 1e-2L) return false;
    const long double r = eval_ld({{in.op, 0, 1}}, {a, b});
    if (!(std::fabs(r) < 1e5L)) return false;
    v.push_back(r);
  }
  return true;
}

}  // namespace

TEST_CASE("100 random expressions agree with central differences") {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> input(-2.0, 2.0);
  constexpr std::size_t kLeaves = 3;
  int tested = 0;
  int attempts = 0;
  while (tested < 100) {
    REQUIRE(++attempts < 100000);
    std::vector<Instr> prog;
    const std::size_t len = 1 + rng() % 7;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t n = kLeaves + i;
      prog.push_back({static_cast<Op>(rng() % kOpCount), rng() % n, rng() % n});
    }
    std::vector<long double> x(kLeaves);
    for (auto& xi : x) xi = input(rng);
    if (!well_conditioned(prog, x)) continue;

    Tape tape;
    std::vector<Var> leaves;
    for (auto xi : x) leaves.push_back(tape.variable(static_cast<double>(xi)));
    const Var root = eval_tape(prog, leaves);
    tape.backward(root);
    for (std::size_t i = 0; i < kLeaves; ++i) {
      const long double h = 1e-5L;
      auto up = x;
      auto down = x;
      up[i] += h;
      down[i] -= h;
      const double fd = static_cast<double>((eval_ld(prog, up) - eval_ld(prog, down)) / (2 * h));
      const double g = tape.adjoint(leaves[i]);
      CAPTURE(tested);
      CAPTURE(i);
      const double err = std::fabs(g - fd);
      if (std::fabs(fd) < 1e-2) {
        CHECK(err < 1e-6);
      } else {
        CHECK(err / std::fabs(fd) < 1e-4);
      }
    }
    ++tested;
  }
}

TEST_CASE("replaying the same construction gives identical tapes and gradients") {
  const auto build = [](Tape& t) {
    const Var a = t.variable(0.3);
    const Var b = t.variable(-1.2);
    const Var r = tanh(a * b) + silu(a) / (b * b) - exp(a);
    t.backward(r);
    return std::vector<double>{t.adjoint(a), t.adjoint(b)};
  };
  Tape t1;
  Tape t2;
  const auto g1 = build(t1);
  const auto g2 = build(t2);
  CHECK(t1.size() == t2.size());
  CHECK(t1.partial_count() == t2.partial_count());
  CHECK(g1 == g2);
}

TEST_CASE("parents always precede children") {
  Tape t;
  const Var a = t.variable(1.0);
  const Var b = t.variable(2.0);
  const Var c = exp(a * b) + a;
  (void)c;
  for (NodeIndex i = 0; i < t.size(); ++i) {
    for (const auto& p : t.partials_of(i)) CHECK(p.parent < i);
  }
}

TEST_CASE("errors surface instead of non-finite values") {
  Tape t;
  const Var x = t.variable(1.0);
  const Var zero = t.variable(0.0);
  CHECK_THROWS_AS(x / zero, NumericError);
  CHECK_THROWS_AS(exp(Var{t.variable(800.0)}), NumericError);
  const std::size_t before = t.size();
  CHECK_THROWS_AS(x / zero, NumericError);
  CHECK(t.size() == before);  // failed ops leave nothing behind

  Tape other;
  const Var y = other.variable(2.0);
  CHECK_THROWS_AS(x + y, std::logic_error);
}

TEST_CASE("constants never touch a tape") {
  const Var a{2.0};
  const Var b{5.0};
  const Var c = a * b + exp(a);
  CHECK(c.is_constant());
  CHECK(c.value() == doctest::Approx(10.0 + std::exp(2.0)));

  Tape t;
  const Var x = t.variable(3.0);
  const Var y = x * a;  // mixing is allowed
  t.backward(y);
  CHECK(t.adjoint(x) == 2.0);
}

TEST_CASE("builder API closes a node with the added partials") {
  Tape t;
  const Var a = t.variable(1.0);
  const Var b = t.variable(2.0);
  t.add_partial(a, 4.0);
  t.add_partial(Var{9.0}, 100.0);  // constants are skipped
  t.add_partial(b, -1.0);
  CHECK(t.open_partials() == 2);
  const Var n = t.close_node(7.0);
  CHECK(t.open_partials() == 0);
  t.backward(n);
  CHECK(t.adjoint(a) == 4.0);
  CHECK(t.adjoint(b) == -1.0);
}

TEST_CASE("sum and weighted_sum") {
  Tape t;
  const Var a = t.variable(1.0);
  const Var b = t.variable(2.0);
  const std::vector<Var> terms{a, b, a};
  const Var s = t.weighted_sum(terms, 0.5);
  CHECK(s.value() == 2.0);
  t.backward(s);
  CHECK(t.adjoint(a) == 1.0);
  CHECK(t.adjoint(b) == 0.5);
}
