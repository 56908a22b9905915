// SPDX-License-Identifier: Apache-2.0

#include "kanbench/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "kanbench/kernels.hpp"

namespace kanbench::optim {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

// Minimizer of the cubic through (x1, f1, g1) and (x2, f2, g2), clamped to
// [lo, hi]; the midpoint when the cubic has no real minimizer.
double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2, double lo, double hi) {
  if (!std::isfinite(f1) || !std::isfinite(f2) || !std::isfinite(g1) || !std::isfinite(g2)) {
    return 0.5 * (lo + hi);
  }
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2_sq = d1 * d1 - g1 * g2;
  if (d2_sq >= 0.0) {
    const double d2 = std::sqrt(d2_sq);
    const double pos = x1 <= x2 ? x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
                                : x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    if (std::isfinite(pos)) return std::clamp(pos, lo, hi);
  }
  return 0.5 * (lo + hi);
}

struct Probe {
  double t = 0.0;
  double f = 0.0;
  double gtd = 0.0;
  std::vector<double> g;
};

// Evaluates the objective at x + t d. A NumericError counts as an infinite
// loss so the search backs off instead of aborting.
class LineFunction {
 public:
  LineFunction(const Objective& obj, std::span<const double> x, std::span<const double> d)
      : obj_(obj), x_(x), d_(d), trial_(x.size()) {}

  Probe operator()(double t) {
    ++evaluations;
    Probe p;
    p.t = t;
    p.g.assign(x_.size(), 0.0);
    for (std::size_t i = 0; i < x_.size(); ++i) trial_[i] = x_[i] + t * d_[i];
    try {
      p.f = obj_(trial_, p.g);
      p.gtd = dot(p.g, d_);
    } catch (const NumericError&) {
      p.f = std::numeric_limits<double>::infinity();
      p.gtd = std::numeric_limits<double>::infinity();
    }
    return p;
  }

  int evaluations = 0;

 private:
  const Objective& obj_;
  std::span<const double> x_;
  std::span<const double> d_;
  std::vector<double> trial_;
};

struct SearchResult {
  bool wolfe = false;
  Probe point;
};

// Strong-Wolfe line search: bracketing followed by zoom with safeguarded
// cubic interpolation.
SearchResult strong_wolfe(LineFunction& phi, double f0, double gtd0, double t, double d_norm,
                          const LbfgsConfig& cfg) {
  const int max_evals = cfg.max_line_search;
  const auto armijo = [&](const Probe& p) { return p.f <= f0 + cfg.c1 * p.t * gtd0; };
  const auto curvature = [&](const Probe& p) { return std::fabs(p.gtd) <= -cfg.c2 * gtd0; };

  Probe prev;
  prev.t = 0.0;
  prev.f = f0;
  prev.gtd = gtd0;
  Probe cur = phi(t);

  Probe lo;
  Probe hi;
  bool bracketed = false;
  for (int iter = 0;; ++iter) {
    if (!std::isfinite(cur.f) || !armijo(cur) || (iter > 0 && cur.f >= prev.f)) {
      lo = prev;
      hi = cur;
      bracketed = true;
      break;
    }
    if (curvature(cur)) return {true, cur};
    if (cur.gtd >= 0.0) {
      lo = cur;
      hi = prev;
      bracketed = true;
      break;
    }
    if (phi.evaluations >= max_evals) break;
    const double min_step = cur.t + 0.01 * (cur.t - prev.t);
    const double max_step = cur.t * 10.0;
    const double next = cubic_interpolate(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, min_step, max_step);
    prev = std::move(cur);
    cur = phi(next);
  }
  if (!bracketed) return {false, cur};

  // Zoom: lo always satisfies Armijo and has the lowest loss seen so far.
  bool insufficient = false;
  while (phi.evaluations < max_evals) {
    const double a = std::min(lo.t, hi.t);
    const double b = std::max(lo.t, hi.t);
    if ((b - a) * d_norm < 1e-15 * std::max(1.0, b)) break;
    double t_new = cubic_interpolate(lo.t, lo.f, lo.gtd, hi.t, hi.f, hi.gtd, a, b);
    const double eps = 0.1 * (b - a);
    if (std::min(b - t_new, t_new - a) < eps) {
      if (insufficient || t_new >= b || t_new <= a) {
        t_new = std::fabs(t_new - b) < std::fabs(t_new - a) ? b - eps : a + eps;
        insufficient = false;
      } else {
        insufficient = true;
      }
    } else {
      insufficient = false;
    }
    Probe p = phi(t_new);
    if (!std::isfinite(p.f) || !armijo(p) || p.f >= lo.f) {
      hi = std::move(p);
    } else {
      if (curvature(p)) return {true, p};
      if (p.gtd * (hi.t - lo.t) >= 0.0) hi = lo;
      lo = std::move(p);
    }
  }
  return {false, lo};
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam

AdamState::AdamState(std::size_t n, AdamConfig cfg) : config(cfg), m(n, 0.0), v(n, 0.0) {}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError(fmt::format("non-finite gradient {} at parameter {}", grads[i], i));
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

// ---------------------------------------------------------------------------
// L-BFGS

LbfgsState::LbfgsState(std::size_t n, LbfgsConfig cfg) : config(cfg), grad(n, 0.0) {
  if (cfg.memory < 1) throw std::invalid_argument("L-BFGS memory must be >= 1");
  if (!(0.0 < cfg.c1 && cfg.c1 < cfg.c2 && cfg.c2 < 1.0)) {
    throw std::invalid_argument("Wolfe constants need 0 < c1 < c2 < 1");
  }
}

std::vector<double> lbfgs_direction(const LbfgsState& state, std::span<const double> grad) {
  std::vector<double> q(grad.begin(), grad.end());
  const std::size_t m = state.s.size();
  std::vector<double> alpha(m, 0.0);
  for (std::size_t i = m; i-- > 0;) {
    alpha[i] = state.rho[i] * dot(state.s[i], q);
    for (std::size_t k = 0; k < q.size(); ++k) q[k] -= alpha[i] * state.y[i][k];
  }
  if (m > 0) {
    const double gamma = dot(state.s.back(), state.y.back()) / dot(state.y.back(), state.y.back());
    for (double& v : q) v *= gamma;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double beta = state.rho[i] * dot(state.y[i], q);
    for (std::size_t k = 0; k < q.size(); ++k) q[k] += (alpha[i] - beta) * state.s[i][k];
  }
  for (double& v : q) v = -v;
  return q;
}

LbfgsStep lbfgs_step(LbfgsState& state, std::span<double> params, const Objective& objective) {
  const LbfgsConfig& cfg = state.config;
  const std::size_t n = params.size();
  if (state.grad.size() != n) throw std::invalid_argument("lbfgs_step: state and parameters differ in size");

  LbfgsStep out;
  if (!state.initialized) {
    state.loss = objective(params, state.grad);
    out.evaluations = 1;
    state.initialized = true;
  }
  out.loss_before = state.loss;
  out.loss = state.loss;

  if (state.stalled) {
    // Same point and history as the failed step: the outcome would repeat.
    out.stalled = true;
    return out;
  }
  if (max_abs(state.grad) <= cfg.tolerance_grad) {
    out.direction.assign(n, 0.0);
    out.wolfe = true;
    return out;
  }

  std::vector<double> d = lbfgs_direction(state, state.grad);
  double gtd = dot(state.grad, d);
  if (!(gtd < 0.0)) {
    // Lost descent through round-off: restart from the gradient.
    state.s.clear();
    state.y.clear();
    state.rho.clear();
    d = lbfgs_direction(state, state.grad);
    gtd = dot(state.grad, d);
  }

  double t0 = 1.0;
  if (state.iteration == 0) {
    double l1 = 0.0;
    for (double v : state.grad) l1 += std::fabs(v);
    t0 = std::min(1.0, 1.0 / l1);
  }
  ++state.iteration;

  const std::vector<double> x0(params.begin(), params.end());
  LineFunction phi(objective, x0, d);
  SearchResult sr = strong_wolfe(phi, state.loss, gtd, t0, max_abs(d), cfg);
  out.slope_before = gtd;

  Probe accepted;
  std::vector<double> step_dir = d;
  if (sr.wolfe) {
    accepted = std::move(sr.point);
    out.wolfe = true;
  } else {
    // Backtracking along -g until sufficient decrease.
    out.fallback = true;
    std::vector<double> sd(state.grad.size());
    for (std::size_t i = 0; i < n; ++i) sd[i] = -state.grad[i];
    const double sd_slope = -dot(state.grad, state.grad);
    double l1 = 0.0;
    for (double v : state.grad) l1 += std::fabs(v);
    double t = std::min(1.0, 1.0 / l1);
    LineFunction back(objective, x0, sd);
    bool found = false;
    for (int k = 0; k < cfg.max_backtracks; ++k, t *= 0.5) {
      Probe p = back(t);
      if (std::isfinite(p.f) && p.f <= state.loss + cfg.c1 * t * sd_slope && p.f < state.loss) {
        accepted = std::move(p);
        found = true;
        break;
      }
    }
    phi.evaluations += back.evaluations;
    step_dir = std::move(sd);
    out.slope_before = sd_slope;
    if (!found) {
      out.evaluations += phi.evaluations;
      out.stalled = true;
      state.stalled = true;
      out.direction = std::move(step_dir);
      return out;
    }
  }
  out.evaluations += phi.evaluations;

  // History update.
  std::vector<double> s(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = accepted.t * step_dir[i];
    y[i] = accepted.g[i] - state.grad[i];
  }
  const double sy = dot(s, y);
  if (sy > cfg.min_curvature) {
    state.s.push_back(std::move(s));
    state.y.push_back(std::move(y));
    state.rho.push_back(1.0 / sy);
    if (static_cast<int>(state.s.size()) > cfg.memory) {
      state.s.pop_front();
      state.y.pop_front();
      state.rho.pop_front();
    }
  }

  for (std::size_t i = 0; i < n; ++i) params[i] = x0[i] + accepted.t * step_dir[i];
  state.loss = accepted.f;
  state.grad = std::move(accepted.g);
  out.loss = state.loss;
  out.step = accepted.t;
  out.slope_after = accepted.gtd;
  out.direction = std::move(step_dir);
  return out;
}

// ---------------------------------------------------------------------------
// Training

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "lbfgs"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "lbfgs" || s == "l-bfgs" || s == "LBFGS" || s == "L-BFGS") return OptimizerKind::lbfgs;
  throw std::invalid_argument(fmt::format("unknown optimizer '{}'", s));
}

nlohmann::json OptimizerConfig::to_json() const {
  if (kind == OptimizerKind::adam) {
    return {{"kind", "adam"}, {"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}};
  }
  return {{"kind", "lbfgs"},
          {"memory", lbfgs.memory},
          {"c1", lbfgs.c1},
          {"c2", lbfgs.c2},
          {"max_line_search", lbfgs.max_line_search},
          {"min_curvature", lbfgs.min_curvature},
          {"tolerance_grad", lbfgs.tolerance_grad},
          {"max_backtracks", lbfgs.max_backtracks}};
}

RunRecord train(nn::Network& net, const corpus::Dataset& data, const OptimizerConfig& optimizer,
                const TrainOptions& options) {
  if (options.epochs < 1) throw std::invalid_argument(fmt::format("epochs must be >= 1, got {}", options.epochs));
  if (data.train_x.empty()) throw std::invalid_argument("training set is empty");
  if (net.input_dim() != 1 || net.output_dim() != 1) {
    throw std::invalid_argument("training on corpus datasets needs a 1 -> 1 network");
  }

  RunRecord rec;
  rec.config = {{"network", net.describe()},
                {"optimizer", optimizer.to_json()},
                {"epochs", options.epochs},
                {"function", data.function_id},
                {"samples", data.train_size()},
                {"sigma", data.sigma},
                {"data_seed", data.seed},
                {"test_targets", options.noisy_test_targets ? "noisy" : "clean"}};
  if (options.stop_below_rmse > 0.0) rec.config["stop_below_rmse"] = options.stop_below_rmse;
  rec.train_loss.reserve(static_cast<std::size_t>(std::min(options.epochs, 1 << 20)));
  rec.test_rmse.reserve(rec.train_loss.capacity());

  const auto& targets = options.noisy_test_targets ? data.test_y_noisy : data.test_y_clean;
  std::vector<double> pred(data.test_x.size());
  const auto test_rmse = [&] {
    kernels::predict(net, data.test_x, pred);
    return kernels::rmse(pred, targets);
  };

  kernels::MseObjective objective(net, data.train_x, data.train_y);
  std::vector<double> w(net.params().begin(), net.params().end());
  std::vector<double> g(w.size(), 0.0);
  const Objective fn = [&](std::span<const double> p, std::span<double> grad) {
    return objective.value_and_gradient(p, grad);
  };
  const auto load = [&] { std::copy(w.begin(), w.end(), net.params().begin()); };

  try {
    rec.initial_rmse = test_rmse();
  } catch (const NumericError& e) {
    rec.initial_rmse = std::numeric_limits<double>::quiet_NaN();
    rec.failed = true;
    rec.failure = e.what();
    return rec;
  }

  AdamState adam(w.size(), optimizer.adam);
  LbfgsState lbfgs(w.size(), optimizer.lbfgs);

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    double loss = 0.0;
    try {
      if (optimizer.kind == OptimizerKind::adam) {
        loss = objective.value_and_gradient(w, g);
        adam_step(adam, w, g);
      } else {
        const LbfgsStep step = lbfgs_step(lbfgs, w, fn);
        loss = step.loss;
        rec.line_search_evaluations += step.evaluations - (epoch == 1 ? 1 : 0);
        rec.fallback_steps += step.fallback ? 1 : 0;
        rec.stalled_steps += step.stalled ? 1 : 0;
      }
      load();
      const double r = test_rmse();
      if (!std::isfinite(loss) || !std::isfinite(r)) {
        throw NumericError(fmt::format("non-finite loss {} or test RMSE {} at epoch {}", loss, r, epoch));
      }
      rec.train_loss.push_back(loss);
      rec.test_rmse.push_back(r);
      if (r < options.stop_below_rmse) break;
    } catch (const NumericError& e) {
      rec.failed = true;
      rec.failure = e.what();
      break;
    }
    const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
    if (elapsed >= options.max_wall_seconds) break;
  }
  rec.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
  load();
  rec.loss_evaluations = static_cast<long>(objective.evaluations());
  if (!rec.test_rmse.empty()) rec.final_rmse = rec.test_rmse.back();
  return rec;
}

}  // namespace kanbench::optim
