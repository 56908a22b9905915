// SPDX-License-Identifier: Apache-2.0
//
// Uniform B-spline bases and the KAN edge function
//
//   phi(x) = w_b * silu(x) + w_s * sum_i c_i B_i(x)
//
// The knot vector extends the domain [a, b] by `degree` uniform steps on
// each side, which leaves exactly grid + degree basis functions supported on
// [a, b]. Outside [a, b] every basis function continues as the polynomial of
// the nearest boundary interval, so splines extend smoothly instead of
// clamping or decaying to zero.

#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "kanbench/autodiff.hpp"

namespace kanbench::spline {

inline constexpr int kMaxDegree = 10;

struct SplineSpec {
  int grid = 3;
  int degree = 3;
  double lo = -1.0;
  double hi = 1.0;

  [[nodiscard]] int basis_count() const { return grid + degree; }
  /// Throws std::invalid_argument unless grid >= 1, 0 <= degree <= kMaxDegree, lo < hi.
  void validate() const;

  friend bool operator==(const SplineSpec&, const SplineSpec&) = default;
};

class KnotVector {
 public:
  explicit KnotVector(const SplineSpec& spec);

  [[nodiscard]] const SplineSpec& spec() const { return spec_; }
  [[nodiscard]] std::span<const double> knots() const { return knots_; }
  [[nodiscard]] double operator[](std::size_t i) const { return knots_[i]; }
  [[nodiscard]] std::size_t size() const { return knots_.size(); }
  [[nodiscard]] double step() const { return step_; }

  /// Knot index s with knots[s] <= x < knots[s+1], clamped to the interior
  /// intervals [degree, grid + degree - 1].
  [[nodiscard]] int interval(double x) const;

 private:
  SplineSpec spec_;
  double step_;
  std::vector<double> knots_;
};

/// The degree+1 basis functions that are nonzero around x, with their first
/// derivatives. Entry r belongs to basis function `first + r`.
struct LocalBasis {
  int first = 0;
  int count = 0;
  std::array<double, kMaxDegree + 1> value{};
  std::array<double, kMaxDegree + 1> slope{};
};

LocalBasis local_basis(const KnotVector& knots, double x);

/// All grid + degree basis values at x.
std::vector<double> basis(const KnotVector& knots, double x);

/// Sum_i coef_i B_i(x).
double spline_value(const KnotVector& knots, std::span<const double> coef, double x);

/// Parameter block of one edge: basis_count spline coefficients, then the
/// base scale w_b, then the spline scale w_s.
struct EdgeLayout {
  int basis_count;
  [[nodiscard]] int trainable() const { return basis_count + 2; }
  [[nodiscard]] int base_scale() const { return basis_count; }
  [[nodiscard]] int spline_scale() const { return basis_count + 1; }
};

/// Number of frozen reals each edge carries for parameter accounting.
inline constexpr int kAffineSlot = 4;

/// Standalone edge function. Inside networks the trainable block lives in
/// the network's flat parameter vector instead.
class EdgeFunction {
 public:
  explicit EdgeFunction(const SplineSpec& spec);

  [[nodiscard]] const SplineSpec& spec() const { return spec_; }
  [[nodiscard]] EdgeLayout layout() const { return {spec_.basis_count()}; }

  std::span<double> coef() { return std::span(params_).first(spec_.basis_count()); }
  [[nodiscard]] std::span<const double> coef() const { return std::span(params_).first(spec_.basis_count()); }
  double& base_scale() { return params_[spec_.basis_count()]; }
  double& spline_scale() { return params_[spec_.basis_count() + 1]; }
  [[nodiscard]] double base_scale() const { return params_[spec_.basis_count()]; }
  [[nodiscard]] double spline_scale() const { return params_[spec_.basis_count() + 1]; }

  std::span<double> trainable() { return params_; }
  [[nodiscard]] std::span<const double> trainable() const { return params_; }
  [[nodiscard]] const std::array<double, kAffineSlot>& affine_slot() const { return affine_; }

  [[nodiscard]] int trainable_count() const { return spec_.basis_count() + 2; }
  [[nodiscard]] int counted_count() const { return spec_.basis_count() + 2 + kAffineSlot; }

 private:
  SplineSpec spec_;
  std::vector<double> params_;
  std::array<double, kAffineSlot> affine_{};
};

/// Per-input quantities shared by every edge that reads the same value x.
struct EdgeInput {
  double x = 0.0;
  LocalBasis basis;
  double base = 0.0;        // silu(x)
  double base_slope = 0.0;  // silu'(x)
};
EdgeInput prepare_edge_input(const KnotVector& knots, double x);

/// phi(x) for a trainable block laid out as EdgeLayout.
double edge_value(const EdgeInput& in, std::span<const double> edge_params);
double edge_value(const KnotVector& knots, std::span<const double> edge_params, double x);

/// phi(x) and dphi/dx.
struct EdgeValueSlope {
  double value;
  double slope;
};
EdgeValueSlope edge_value_slope(const KnotVector& knots, std::span<const double> edge_params, double x);

/// phi(x) recorded as one tape node whose partials cover x, w_b, w_s and the
/// degree+1 active coefficients.
ad::Var edge_eval(const KnotVector& knots, std::span<const ad::Var> edge_params, ad::Var x);
/// Same, reusing a prepared input; `x` must carry the value in.x.
ad::Var edge_eval(const EdgeInput& in, std::span<const ad::Var> edge_params, ad::Var x);

/// phi(x) built from primitive tape operations, with the basis expanded by
/// the Cox-de Boor recurrence on Vars. Slow; kept as the reference path.
ad::Var edge_eval_reference(const KnotVector& knots, std::span<const ad::Var> edge_params, ad::Var x);

/// Thrown when the least-squares design matrix does not have full column rank.
class DegenerateSampling : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Coefficients minimizing sum_j (sum_i c_i B_i(x_j) - y_j)^2.
std::vector<double> fit_coef_least_squares(const KnotVector& knots, std::span<const double> x,
                                           std::span<const double> y);

}  // namespace kanbench::spline
