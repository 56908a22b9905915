// SPDX-License-Identifier: Apache-2.0

#include "kanbench/spline.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ranges.h>

namespace kanbench::spline {

void SplineSpec::validate() const {
  if (grid < 1) throw std::invalid_argument(fmt::format("grid must be >= 1, got {}", grid));
  if (degree < 0 || degree > kMaxDegree) {
    throw std::invalid_argument(fmt::format("degree must lie in [0, {}], got {}", kMaxDegree, degree));
  }
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw std::invalid_argument(fmt::format("spline domain [{}, {}] is empty or not finite", lo, hi));
  }
}

KnotVector::KnotVector(const SplineSpec& spec) : spec_(spec) {
  spec_.validate();
  const int g = spec_.grid;
  const int k = spec_.degree;
  step_ = (spec_.hi - spec_.lo) / g;
  knots_.resize(static_cast<std::size_t>(g + 2 * k + 1));
  for (int i = 0; i < static_cast<int>(knots_.size()); ++i) {
    const int j = i - k;
    // Interpolating form keeps knots[k] == lo and knots[g + k] == hi bit-exact.
    knots_[i] = (static_cast<double>(g - j) * spec_.lo + static_cast<double>(j) * spec_.hi) / g;
  }
}

int KnotVector::interval(double x) const {
  if (!std::isfinite(x)) throw NumericError(fmt::format("spline argument {} is not finite", x));
  const double u = std::floor((x - spec_.lo) / step_);
  const double clamped = std::clamp(u, 0.0, static_cast<double>(spec_.grid - 1));
  return static_cast<int>(clamped) + spec_.degree;
}

LocalBasis local_basis(const KnotVector& knots, double x) {
  const int k = knots.spec().degree;
  const int s = knots.interval(x);
  const auto t = knots.knots();

  LocalBasis out;
  out.first = s - k;
  out.count = k + 1;

  std::array<double, kMaxDegree + 1> n{};
  std::array<double, kMaxDegree + 1> left{};
  std::array<double, kMaxDegree + 1> right{};
  std::array<double, kMaxDegree + 1> lower{};  // degree k-1 values of functions s-k+1 .. s
  n[0] = 1.0;
  for (int j = 1; j <= k; ++j) {
    if (j == k) lower = n;
    left[j] = x - t[s + 1 - j];
    right[j] = t[s + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    n[j] = saved;
  }
  out.value = n;

  if (k > 0) {
    // B'_{i,k} = k/(t_{i+k}-t_i) B_{i,k-1} - k/(t_{i+k+1}-t_{i+1}) B_{i+1,k-1}
    for (int r = 0; r <= k; ++r) {
      const int i = s - k + r;
      double d = 0.0;
      if (r >= 1) d += lower[r - 1] / (t[i + k] - t[i]);
      if (r <= k - 1) d -= lower[r] / (t[i + k + 1] - t[i + 1]);
      out.slope[r] = k * d;
    }
  }
  return out;
}

std::vector<double> basis(const KnotVector& knots, double x) {
  std::vector<double> out(static_cast<std::size_t>(knots.spec().basis_count()), 0.0);
  const LocalBasis lb = local_basis(knots, x);
  for (int r = 0; r < lb.count; ++r) out[lb.first + r] = lb.value[r];
  return out;
}

double spline_value(const KnotVector& knots, std::span<const double> coef, double x) {
  const LocalBasis lb = local_basis(knots, x);
  double s = 0.0;
  for (int r = 0; r < lb.count; ++r) s += coef[lb.first + r] * lb.value[r];
  return s;
}

EdgeFunction::EdgeFunction(const SplineSpec& spec)
    : spec_(spec), params_(static_cast<std::size_t>(spec.basis_count() + 2), 0.0) {
  spec_.validate();
  base_scale() = 1.0;
  spline_scale() = 1.0;
}

EdgeInput prepare_edge_input(const KnotVector& knots, double x) {
  EdgeInput in;
  in.x = x;
  in.basis = local_basis(knots, x);
  const double sig = ad::sigmoid(x);
  in.base = x * sig;
  in.base_slope = sig * (1.0 + x * (1.0 - sig));
  return in;
}

double edge_value(const EdgeInput& in, std::span<const double> edge_params) {
  const std::size_t nb = edge_params.size() - 2;
  double s = 0.0;
  for (int r = 0; r < in.basis.count; ++r) s += edge_params[in.basis.first + r] * in.basis.value[r];
  return edge_params[nb] * in.base + edge_params[nb + 1] * s;
}

double edge_value(const KnotVector& knots, std::span<const double> edge_params, double x) {
  return edge_value(prepare_edge_input(knots, x), edge_params);
}

EdgeValueSlope edge_value_slope(const KnotVector& knots, std::span<const double> edge_params, double x) {
  const EdgeLayout layout{knots.spec().basis_count()};
  const EdgeInput in = prepare_edge_input(knots, x);
  double s = 0.0;
  double ds = 0.0;
  for (int r = 0; r < in.basis.count; ++r) {
    const double c = edge_params[in.basis.first + r];
    s += c * in.basis.value[r];
    ds += c * in.basis.slope[r];
  }
  const double wb = edge_params[layout.base_scale()];
  const double ws = edge_params[layout.spline_scale()];
  return {wb * in.base + ws * s, wb * in.base_slope + ws * ds};
}

ad::Var edge_eval(const KnotVector& knots, std::span<const ad::Var> edge_params, ad::Var x) {
  if (static_cast<int>(edge_params.size()) != knots.spec().basis_count() + 2) {
    throw std::invalid_argument("edge_eval: parameter block has the wrong length");
  }
  return edge_eval(prepare_edge_input(knots, x.value()), edge_params, x);
}

ad::Var edge_eval(const EdgeInput& in, std::span<const ad::Var> edge_params, ad::Var x) {
  const std::size_t nb = edge_params.size() - 2;
  const LocalBasis& lb = in.basis;
  const ad::Var& wb = edge_params[nb];
  const ad::Var& ws = edge_params[nb + 1];

  double s = 0.0;
  double ds = 0.0;
  for (int r = 0; r < lb.count; ++r) {
    const double c = edge_params[lb.first + r].value();
    s += c * lb.value[r];
    ds += c * lb.slope[r];
  }
  const double value = wb.value() * in.base + ws.value() * s;
  if (!std::isfinite(value)) throw NumericError(fmt::format("edge value non-finite at x = {}", in.x));

  ad::Tape* tape = x.tape();
  if (tape == nullptr) tape = wb.tape();
  if (tape == nullptr) tape = ws.tape();
  for (int r = 0; tape == nullptr && r < lb.count; ++r) tape = edge_params[lb.first + r].tape();
  if (tape == nullptr) return ad::Var{value};

  const double wsv = ws.value();
  tape->add_partial(x, wb.value() * in.base_slope + wsv * ds);
  tape->add_partial(wb, in.base);
  tape->add_partial(ws, s);
  for (int r = 0; r < lb.count; ++r) tape->add_partial(edge_params[lb.first + r], wsv * lb.value[r]);
  return tape->close_node(value);
}

ad::Var edge_eval_reference(const KnotVector& knots, std::span<const ad::Var> edge_params, ad::Var x) {
  const SplineSpec& spec = knots.spec();
  const EdgeLayout layout{spec.basis_count()};
  if (static_cast<int>(edge_params.size()) != layout.trainable()) {
    throw std::invalid_argument("edge_eval_reference: parameter block has the wrong length");
  }
  const auto t = knots.knots();
  const int s = knots.interval(x.value());
  const int intervals = static_cast<int>(t.size()) - 1;

  // Degree-0 indicators select the polynomial piece of interval s, which
  // also serves as the extension beyond [lo, hi].
  std::vector<ad::Var> b(static_cast<std::size_t>(intervals));
  for (int i = 0; i < intervals; ++i) b[i] = ad::Var{i == s ? 1.0 : 0.0};

  auto is_zero = [](const ad::Var& v) { return v.is_constant() && v.value() == 0.0; };
  for (int p = 1; p <= spec.degree; ++p) {
    std::vector<ad::Var> next(static_cast<std::size_t>(intervals - p));
    for (int i = 0; i < intervals - p; ++i) {
      ad::Var term{0.0};
      if (!is_zero(b[i])) {
        term = (x - t[i]) / (t[i + p] - t[i]) * b[i];
      }
      if (!is_zero(b[i + 1])) {
        term = term + (ad::Var{t[i + p + 1]} - x) / (t[i + p + 1] - t[i + 1]) * b[i + 1];
      }
      next[i] = term;
    }
    b = std::move(next);
  }

  ad::Var spline{0.0};
  for (int i = 0; i < layout.basis_count; ++i) spline = spline + edge_params[i] * b[i];
  return edge_params[layout.base_scale()] * ad::silu(x) + edge_params[layout.spline_scale()] * spline;
}

std::vector<double> fit_coef_least_squares(const KnotVector& knots, std::span<const double> x,
                                           std::span<const double> y) {
  const int nb = knots.spec().basis_count();
  if (x.size() != y.size()) throw std::invalid_argument("fit: x and y differ in length");
  if (static_cast<int>(x.size()) < nb) {
    throw DegenerateSampling(fmt::format("fit needs at least {} samples, got {}", nb, x.size()));
  }
  const auto rows = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(rows, nb);
  Eigen::VectorXd rhs(rows);
  for (Eigen::Index j = 0; j < rows; ++j) {
    const LocalBasis lb = local_basis(knots, x[j]);
    for (int r = 0; r < lb.count; ++r) design(j, lb.first + r) = lb.value[r];
    rhs(j) = y[j];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < nb) {
    std::vector<int> empty;
    for (int i = 0; i < nb; ++i) {
      if (design.col(i).cwiseAbs().maxCoeff() == 0.0) empty.push_back(i);
    }
    throw DegenerateSampling(fmt::format(
        "design matrix has rank {} < {}; basis functions without samples in their support: [{}]", qr.rank(),
        nb, fmt::join(empty, ", ")));
  }
  const Eigen::VectorXd c = qr.solve(rhs);
  return {c.data(), c.data() + c.size()};
}

}  // namespace kanbench::spline
