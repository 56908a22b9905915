// SPDX-License-Identifier: Apache-2.0

#include "kanbench/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace kanbench::ad {

namespace {

// Largest argument for which std::exp stays finite.
const double kExpLimit = std::log(std::numeric_limits<double>::max());

Tape* common_tape(Var a, Var b) {
  if (a.is_constant()) return b.tape();
  if (!b.is_constant() && a.tape() != b.tape()) {
    throw std::logic_error("operands live on different tapes");
  }
  return a.tape();
}

double checked(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw NumericError(fmt::format("{} produced a non-finite value", what));
  }
  return value;
}

Var binary_node(Var a, Var b, double value, double da, double db, const char* what) {
  checked(value, what);
  Tape* tape = common_tape(a, b);
  if (tape == nullptr) return Var{value};
  return tape->record(value, {a, b}, {da, db});
}

Var unary_node(Var a, double value, double da, const char* what) {
  checked(value, what);
  if (a.is_constant()) return Var{value};
  return a.tape()->record(value, {a}, {da});
}

}  // namespace

Var Tape::variable(double value) {
  checked(value, "leaf");
  nodes_.push_back({value, static_cast<std::uint32_t>(partials_.size())});
  return {this, static_cast<NodeIndex>(nodes_.size() - 1), value};
}

void Tape::check_parent(NodeIndex parent) const {
  if (parent >= nodes_.size()) {
    throw std::logic_error(fmt::format("parent {} is not on the tape (size {})", parent, nodes_.size()));
  }
}

Var Tape::push(double value, std::span<const Partial> partials) {
  for (const Partial& p : partials) check_parent(p.parent);
  partials_.insert(partials_.end(), partials.begin(), partials.end());
  nodes_.push_back({value, static_cast<std::uint32_t>(partials_.size())});
  return {this, static_cast<NodeIndex>(nodes_.size() - 1), value};
}

Var Tape::record(double value, std::span<const Var> parents, std::span<const double> partials) {
  if (parents.size() != partials.size()) {
    throw std::invalid_argument("record: parents and partials differ in length");
  }
  for (const Var& p : parents) {
    if (!p.is_constant() && p.tape() != this) throw std::logic_error("record: parent lives on another tape");
  }
  for (std::size_t i = 0; i < parents.size(); ++i) {
    if (!parents[i].is_constant()) partials_.push_back({parents[i].index(), partials[i]});
  }
  nodes_.push_back({value, static_cast<std::uint32_t>(partials_.size())});
  return {this, static_cast<NodeIndex>(nodes_.size() - 1), value};
}

Var Tape::record(double value, std::initializer_list<Var> parents, std::initializer_list<double> partials) {
  return record(value, std::span<const Var>(parents.begin(), parents.size()),
                std::span<const double>(partials.begin(), partials.size()));
}

Var Tape::sum(std::span<const Var> terms) { return weighted_sum(terms, 1.0); }

Var Tape::weighted_sum(std::span<const Var> terms, double weight) {
  double total = 0.0;
  for (const Var& t : terms) {
    if (!t.is_constant() && t.tape() != this) throw std::logic_error("sum: term lives on another tape");
  }
  for (const Var& t : terms) {
    total += t.value();
    if (!t.is_constant()) partials_.push_back({t.index(), weight});
  }
  total *= weight;
  checked(total, "sum");
  nodes_.push_back({total, static_cast<std::uint32_t>(partials_.size())});
  return {this, static_cast<NodeIndex>(nodes_.size() - 1), total};
}

const std::vector<double>& Tape::backward(Var root) {
  if (root.is_constant() || root.tape() != this) {
    throw std::logic_error("backward: root is not a node of this tape");
  }
  adjoints_.assign(root.index() + 1, 0.0);
  adjoints_[root.index()] = 1.0;
  for (std::size_t i = root.index() + 1; i-- > 0;) {
    const double a = adjoints_[i];
    if (a == 0.0) continue;
    const std::uint32_t begin = i == 0 ? 0 : nodes_[i - 1].partial_end;
    for (std::uint32_t p = begin; p < nodes_[i].partial_end; ++p) {
      adjoints_[partials_[p].parent] += partials_[p].d * a;
    }
  }
  // Nodes recorded after the root do not influence it.
  adjoints_.resize(nodes_.size(), 0.0);
  return adjoints_;
}

double Tape::adjoint(Var v) const {
  if (v.is_constant() || v.index() >= adjoints_.size()) return 0.0;
  return adjoints_[v.index()];
}

std::span<const Partial> Tape::partials_of(NodeIndex i) const {
  const std::uint32_t begin = i == 0 ? 0 : nodes_[i - 1].partial_end;
  return {partials_.data() + begin, nodes_[i].partial_end - begin};
}

void Tape::clear() {
  nodes_.clear();
  partials_.clear();
  adjoints_.clear();
}

void Tape::reserve(std::size_t nodes, std::size_t partials) {
  nodes_.reserve(nodes);
  partials_.reserve(partials);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu_value(double x) { return x * sigmoid(x); }

double silu_slope(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

Var add(Var a, Var b) { return binary_node(a, b, a.value() + b.value(), 1.0, 1.0, "add"); }
Var sub(Var a, Var b) { return binary_node(a, b, a.value() - b.value(), 1.0, -1.0, "sub"); }
Var mul(Var a, Var b) { return binary_node(a, b, a.value() * b.value(), b.value(), a.value(), "mul"); }

Var div(Var a, Var b) {
  if (b.value() == 0.0) throw NumericError("division by zero");
  const double q = a.value() / b.value();
  return binary_node(a, b, q, 1.0 / b.value(), -q / b.value(), "div");
}

Var neg(Var a) { return unary_node(a, -a.value(), -1.0, "neg"); }

Var exp(Var a) {
  if (a.value() > kExpLimit) {
    throw NumericError(fmt::format("exp overflow at {}", a.value()));
  }
  const double e = std::exp(a.value());
  return unary_node(a, e, e, "exp");
}

Var silu(Var a) { return unary_node(a, silu_value(a.value()), silu_slope(a.value()), "silu"); }

Var relu(Var a) {
  const double x = a.value();
  return unary_node(a, x > 0.0 ? x : 0.0, x > 0.0 ? 1.0 : 0.0, "relu");
}

Var tanh(Var a) {
  const double t = std::tanh(a.value());
  return unary_node(a, t, 1.0 - t * t, "tanh");
}

Var square(Var a) { return unary_node(a, a.value() * a.value(), 2.0 * a.value(), "square"); }

// abs'(0) := 0
Var abs(Var a) {
  const double x = a.value();
  const double slope = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  return unary_node(a, std::fabs(x), slope, "abs");
}

Var apply(BinaryOp op, Var a, Var b) {
  switch (op) {
    case BinaryOp::add: return add(a, b);
    case BinaryOp::sub: return sub(a, b);
    case BinaryOp::mul: return mul(a, b);
    case BinaryOp::div: return div(a, b);
  }
  throw std::invalid_argument("unknown binary op");
}

Var apply(UnaryOp op, Var a) {
  switch (op) {
    case UnaryOp::neg: return neg(a);
    case UnaryOp::exp: return exp(a);
    case UnaryOp::silu: return silu(a);
    case UnaryOp::relu: return relu(a);
    case UnaryOp::tanh: return tanh(a);
    case UnaryOp::square: return square(a);
    case UnaryOp::abs: return abs(a);
  }
  throw std::invalid_argument("unknown unary op");
}

std::string to_string(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
  }
  return "?";
}

std::string to_string(UnaryOp op) {
  switch (op) {
    case UnaryOp::neg: return "neg";
    case UnaryOp::exp: return "exp";
    case UnaryOp::silu: return "silu";
    case UnaryOp::relu: return "relu";
    case UnaryOp::tanh: return "tanh";
    case UnaryOp::square: return "square";
    case UnaryOp::abs: return "abs";
  }
  return "?";
}

}  // namespace kanbench::ad
