// SPDX-License-Identifier: Apache-2.0
//
// Scalar reverse-mode automatic differentiation.
//
// A Tape is an append-only list of nodes. Each node stores its value and the
// local partial derivatives with respect to its parents; parents always have
// a smaller index than the node itself, so a single reverse sweep over the
// tape accumulates adjoints in topological order.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kanbench {

/// Raised when an arithmetic operation would push a non-finite value into a
/// computation (division by zero, overflow, NaN input).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kanbench

namespace kanbench::ad {

using NodeIndex = std::uint32_t;
inline constexpr NodeIndex kNoNode = std::numeric_limits<NodeIndex>::max();

struct Partial {
  NodeIndex parent;
  double d;
};

class Tape;

/// A value that is either a node on a tape or a plain constant.
///
/// Constants carry no tape and contribute no partials; mixing constants and
/// tape nodes in an operation is allowed.
class Var {
 public:
  Var() = default;
  // NOLINTNEXTLINE(google-explicit-constructor): constants promote implicitly
  Var(double constant) : value_(constant) {}

  [[nodiscard]] double value() const { return value_; }
  [[nodiscard]] NodeIndex index() const { return index_; }
  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] bool is_constant() const { return tape_ == nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, NodeIndex index, double value) : tape_(tape), index_(index), value_(value) {}

  Tape* tape_ = nullptr;
  NodeIndex index_ = kNoNode;
  double value_ = 0.0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  /// New leaf node.
  Var variable(double value);

  /// Appends a node with the given local partials. Parents must already be on
  /// this tape.
  Var push(double value, std::span<const Partial> partials);

  /// Appends a node whose parents are given as Vars; constant parents are
  /// skipped. `parents` and `partials` must have equal length.
  Var record(double value, std::span<const Var> parents, std::span<const double> partials);
  Var record(double value, std::initializer_list<Var> parents, std::initializer_list<double> partials);

  /// Incremental node construction for fused kernels: add the partials of
  /// the next node, then close it with its value. Parents are not checked.
  void add_partial(NodeIndex parent, double d) { partials_.push_back({parent, d}); }
  void add_partial(const Var& parent, double d) {
    if (!parent.is_constant()) partials_.push_back({parent.index(), d});
  }
  Var close_node(double value) {
    nodes_.push_back({value, static_cast<std::uint32_t>(partials_.size())});
    return {this, static_cast<NodeIndex>(nodes_.size() - 1), value};
  }
  /// Partials added since the last closed node.
  [[nodiscard]] std::size_t open_partials() const {
    return partials_.size() - (nodes_.empty() ? 0 : nodes_.back().partial_end);
  }

  /// Sum of `terms` as a single node with unit partials.
  Var sum(std::span<const Var> terms);

  /// Weighted sum Σ w_i·t_i as a single node.
  Var weighted_sum(std::span<const Var> terms, double weight);

  /// Reverse sweep from `root`. Returns adjoints indexed by node; the vector
  /// is owned by the tape and stays valid until the next mutation.
  const std::vector<double>& backward(Var root);

  [[nodiscard]] double adjoint(Var v) const;
  [[nodiscard]] double value(NodeIndex i) const { return nodes_[i].value; }

  void clear();
  void reserve(std::size_t nodes, std::size_t partials);

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] std::size_t partial_count() const { return partials_.size(); }

  /// Partials of node `i`, for inspection and tests.
  [[nodiscard]] std::span<const Partial> partials_of(NodeIndex i) const;

 private:
  struct Node {
    double value;
    std::uint32_t partial_end;
  };

  void check_parent(NodeIndex parent) const;

  std::vector<Node> nodes_;
  std::vector<Partial> partials_;
  std::vector<double> adjoints_;
};

enum class BinaryOp { add, sub, mul, div };
enum class UnaryOp { neg, exp, silu, relu, tanh, square, abs };

Var apply(BinaryOp op, Var a, Var b);
Var apply(UnaryOp op, Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var a);
Var exp(Var a);
Var silu(Var a);
Var relu(Var a);
Var tanh(Var a);
Var square(Var a);
Var abs(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

// Plain scalar helpers shared by the fused kernels.

/// Logistic sigmoid, evaluated without overflow for large |x|.
double sigmoid(double x);
/// x·sigmoid(x)
double silu_value(double x);
/// d/dx of x·sigmoid(x)
double silu_slope(double x);

std::string to_string(BinaryOp op);
std::string to_string(UnaryOp op);

}  // namespace kanbench::ad
