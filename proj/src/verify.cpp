// SPDX-License-Identifier: Apache-2.0

#include "kanbench/verify.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>

#include "kanbench/autodiff.hpp"
#include "kanbench/bench.hpp"
#include "kanbench/corpus.hpp"
#include "kanbench/kernels.hpp"
#include "kanbench/models.hpp"
#include "kanbench/optim.hpp"
#include "kanbench/spline.hpp"

namespace kanbench::verify {

namespace {

constexpr double kH = 1e-5;

bool close_to_fd(double ad, double fd) {
  const double err = std::fabs(ad - fd);
  return err < 1e-6 || err < 1e-4 * std::fabs(fd);
}

Check param_counts() {
  using nn::Convention;
  const spline::SplineSpec spec{};
  struct Row {
    nn::LayerWidths w;
    bool kan;
    Convention c;
    std::size_t want;
  };
  const Row rows[] = {
      {{1, 7, 1}, false, Convention::table2, 22},     {{1, 39, 1}, false, Convention::table2, 118},
      {{1, 79, 1}, false, Convention::table2, 238},   {{1, 1, 1}, true, Convention::table2, 24},
      {{1, 5, 1}, true, Convention::table2, 120},     {{1, 10, 1}, true, Convention::table2, 240},
      {{1, 1, 1}, true, Convention::trainable, 16},   {{1, 5, 1}, true, Convention::trainable, 80},
  };
  for (const auto& r : rows) {
    const std::size_t got = r.kan ? nn::count_kan_params(r.w, spec, r.c) : nn::count_mlp_params(r.w);
    if (got != r.want) {
      return {"parameter counts", false,
              fmt::format("{} {}: {} != {}", r.kan ? "KAN" : "MLP", nn::to_string(r.w), got, r.want)};
    }
  }
  return {"parameter counts", true, "8 golden counts"};
}

// Random straight-line programs over the primitive operations.
struct Step {
  int op;  // 0-3 binary (add sub mul div), 4-8 unary (exp silu relu tanh square)
  int a;
  int b;
};

double apply_plain(int op, double a, double b) {
  switch (op) {
    case 0: return a + b;
    case 1: return a - b;
    case 2: return a * b;
    case 3: return a / b;
    case 4: return std::exp(a);
    case 5: return a / (1.0 + std::exp(-a));
    case 6: return a > 0.0 ? a : 0.0;
    case 7: return std::tanh(a);
    default: return a * a;
  }
}

ad::Var apply_var(int op, ad::Var a, ad::Var b) {
  static constexpr ad::BinaryOp bin[] = {ad::BinaryOp::add, ad::BinaryOp::sub, ad::BinaryOp::mul, ad::BinaryOp::div};
  static constexpr ad::UnaryOp un[] = {ad::UnaryOp::exp, ad::UnaryOp::silu, ad::UnaryOp::relu, ad::UnaryOp::tanh,
                                       ad::UnaryOp::square};
  return op < 4 ? ad::apply(bin[op], a, b) : ad::apply(un[op - 4], a);
}

std::vector<double> run_plain(const std::vector<Step>& prog, std::vector<double> v) {
  for (const auto& s : prog) v.push_back(apply_plain(s.op, v[s.a], v[s.b]));
  return v;
}

// A program whose every intermediate stays well away from the kinks and
// poles of its operations.
bool acceptable(const std::vector<Step>& prog, const std::vector<double>& v, std::size_t leaves) {
  for (std::size_t i = 0; i < prog.size(); ++i) {
    const auto& s = prog[i];
    if (s.op == 3 && std::fabs(v[s.b]) < 0.25) return false;
    if (s.op == 4 && v[s.a] > 8.0) return false;
    if (s.op == 6 && std::fabs(v[s.a]) < 1e-3) return false;
    if (!(std::fabs(v[leaves + i]) < 1e6)) return false;
  }
  return true;
}

Check random_gradients(std::mt19937_64& rng) {
  constexpr int kExpressions = 100;
  constexpr std::size_t kLeaves = 3;
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  int checked = 0;
  double worst = 0.0;
  while (checked < kExpressions) {
    std::vector<double> x(kLeaves);
    for (auto& xi : x) xi = u(rng);
    std::vector<Step> prog;
    const int len = 2 + static_cast<int>(rng() % 6);
    for (int i = 0; i < len; ++i) {
      const int n = static_cast<int>(kLeaves) + i;
      prog.push_back({static_cast<int>(rng() % 9), static_cast<int>(rng() % n), static_cast<int>(rng() % n)});
    }
    const auto v = run_plain(prog, x);
    if (!acceptable(prog, v, kLeaves)) continue;

    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (double xi : x) vars.push_back(tape.variable(xi));
    for (const auto& s : prog) vars.push_back(apply_var(s.op, vars[s.a], vars[s.b]));
    const auto& adj = tape.backward(vars.back());
    for (std::size_t i = 0; i < kLeaves; ++i) {
      auto xp = x;
      auto xm = x;
      xp[i] += kH;
      xm[i] -= kH;
      const double fd = (run_plain(prog, xp).back() - run_plain(prog, xm).back()) / (2 * kH);
      const double g = adj[vars[i].index()];
      if (!close_to_fd(g, fd)) {
        return {"autodiff vs finite differences", false,
                fmt::format("expression {}: leaf {} autodiff {} vs fd {}", checked, i, g, fd)};
      }
      worst = std::max(worst, std::fabs(g - fd) / std::max(std::fabs(fd), 1e-2));
    }
    ++checked;
  }
  return {"autodiff vs finite differences", true, fmt::format("{} expressions, worst scaled error {:.2e}", checked, worst)};
}

Check fan_out() {
  ad::Tape tape;
  const ad::Var x = tape.variable(1.5);
  const ad::Var y = x * x + ad::Var{3.0} * x;  // dy/dx = 2x + 3
  tape.backward(y);
  const bool ok = tape.adjoint(x) == 6.0;
  return {"fan-out accumulation", ok, fmt::format("dy/dx = {}", tape.adjoint(x))};
}

Check spline_properties() {
  const spline::KnotVector knots(spline::SplineSpec{});
  const auto t = knots.knots();
  constexpr int kPoints = 1000;
  double worst = 0.0;
  for (int j = 0; j < kPoints; ++j) {
    const double x = -1.0 + 2.0 * (j + 0.5) / kPoints;
    const auto b = spline::basis(knots, x);
    double sum = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (b[i] < 0.0) return {"spline basis", false, fmt::format("B_{}({}) = {} < 0", i, x, b[i])};
      if ((x < t[i] || x > t[i + knots.spec().degree + 1]) && b[i] != 0.0) {
        return {"spline basis", false, fmt::format("B_{}({}) = {} outside its support", i, x, b[i])};
      }
      sum += b[i];
    }
    worst = std::max(worst, std::fabs(sum - 1.0));
  }
  const bool ok = worst < 1e-12;
  return {"spline basis", ok, fmt::format("partition of unity error {:.2e} on {} points", worst, kPoints)};
}

Check least_squares_reproduction() {
  const spline::KnotVector knots(spline::SplineSpec{});
  std::vector<double> x(200);
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = -1.0 + 2.0 * static_cast<double>(j) / (x.size() - 1);
  double worst = 0.0;
  for (int power = 0; power <= 2; ++power) {
    std::vector<double> y(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) y[j] = std::pow(x[j], power);
    const auto c = spline::fit_coef_least_squares(knots, x, y);
    for (std::size_t j = 0; j < x.size(); ++j) worst = std::max(worst, std::fabs(spline::spline_value(knots, c, x[j]) - y[j]));
  }
  return {"least-squares reproduction", worst < 1e-10, fmt::format("max residual {:.2e}", worst)};
}

Check edge_slopes(std::mt19937_64& rng) {
  const spline::SplineSpec spec{};
  const spline::KnotVector knots(spec);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int e = 0; e < 50; ++e) {
    spline::EdgeFunction edge(spec);
    for (auto& p : edge.trainable()) p = n(rng);
    const double x = u(rng);
    ad::Tape tape;
    const ad::Var xv = tape.variable(x);
    std::vector<ad::Var> params(edge.trainable().begin(), edge.trainable().end());
    tape.backward(spline::edge_eval(knots, params, xv));
    const double fd = (spline::edge_value(knots, edge.trainable(), x + kH) -
                       spline::edge_value(knots, edge.trainable(), x - kH)) / (2 * kH);
    if (!close_to_fd(tape.adjoint(xv), fd)) {
      return {"edge derivative", false, fmt::format("edge {} at x = {}: {} vs {}", e, x, tape.adjoint(xv), fd)};
    }
  }
  return {"edge derivative", true, "50 random edges"};
}

Check network_gradients() {
  std::vector<std::unique_ptr<nn::Network>> nets;
  nets.push_back(nn::build_kan({1, 3, 2, 1}, {}, 7));
  nets.push_back(nn::build_mlp({1, 6, 4, 1}, nn::Activation::silu, 7));
  for (auto& net : nets) {
    auto p = net->params();
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (double v : p) vars.push_back(tape.variable(v));
    const ad::Var x{0.3};
    ad::Var out;
    net->record(tape, vars, std::span(&x, 1), std::span(&out, 1));
    tape.backward(out);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + kH;
      const double up = net->predict(0.3);
      p[i] = keep - kH;
      const double down = net->predict(0.3);
      p[i] = keep;
      const double fd = (up - down) / (2 * kH);
      if (!close_to_fd(tape.adjoint(vars[i]), fd)) {
        return {"network gradients", false,
                fmt::format("{} param {}: {} vs {}", nn::to_string(net->kind()), i, tape.adjoint(vars[i]), fd)};
      }
    }
  }
  return {"network gradients", true, "KAN [1,3,2,1] and MLP [1,6,4,1] at x = 0.3"};
}

Check fused_matches_reference() {
  const auto data = corpus::make_dataset("f3", 600, 0.1, 11);
  double worst = 0.0;
  for (int which = 0; which < 2; ++which) {
    std::unique_ptr<nn::Network> net;
    if (which == 0) net = nn::build_kan({1, 4, 1}, {}, 3);
    else net = nn::build_mlp({1, 9, 1}, nn::Activation::silu, 3);
    kernels::MseObjective obj(*net, data.train_x, data.train_y);
    std::vector<double> w(net->params().begin(), net->params().end());
    std::vector<double> g1(w.size());
    std::vector<double> g2(w.size());
    const double l1 = obj.value_and_gradient(w, g1);
    const double l2 = obj.reference_value_and_gradient(w, g2);
    worst = std::max(worst, std::fabs(l1 - l2) / std::max(1.0, std::fabs(l2)));
    for (std::size_t i = 0; i < w.size(); ++i) {
      worst = std::max(worst, std::fabs(g1[i] - g2[i]) / std::max(1.0, std::fabs(g2[i])));
    }
  }
  return {"parallel kernel matches serial reference", worst < 1e-12, fmt::format("max deviation {:.2e}", worst)};
}

Check lbfgs_quadratic(std::mt19937_64& rng) {
  constexpr int n = 10;
  // A = Q diag(1..100) Q' with Q from Gram-Schmidt on random vectors.
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> q(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    for (auto& v : q[i]) v = nd(rng);
    for (int j = 0; j < i; ++j) {
      double d = 0.0;
      for (int k = 0; k < n; ++k) d += q[i][k] * q[j][k];
      for (int k = 0; k < n; ++k) q[i][k] -= d * q[j][k];
    }
    double norm = 0.0;
    for (double v : q[i]) norm += v * v;
    for (auto& v : q[i]) v /= std::sqrt(norm);
  }
  std::vector<double> a(n * n, 0.0);
  for (int k = 0; k < n; ++k) {
    const double lambda = 1.0 + 99.0 * k / (n - 1);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) a[i * n + j] += lambda * q[k][i] * q[k][j];
    }
  }
  const optim::Objective f = [&](std::span<const double> w, std::span<double> g) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      g[i] = 0.0;
      for (int j = 0; j < n; ++j) g[i] += a[i * n + j] * w[j];
      v += 0.5 * w[i] * g[i];
    }
    return v;
  };
  std::vector<double> w(n);
  for (auto& v : w) v = nd(rng);
  optim::LbfgsState state(n, {});
  std::vector<double> g(n);
  for (int it = 1; it <= 50; ++it) {
    const auto step = optim::lbfgs_step(state, w, f);
    if (!step.wolfe && step.step > 0.0) {
      return {"L-BFGS on SPD quadratic", false, fmt::format("iteration {} accepted a non-Wolfe step", it)};
    }
    f(w, g);
    double norm = 0.0;
    for (double v : g) norm += v * v;
    if (std::sqrt(norm) < 1e-8) return {"L-BFGS on SPD quadratic", true, fmt::format("converged in {} iterations", it)};
  }
  return {"L-BFGS on SPD quadratic", false, "gradient norm above 1e-8 after 50 iterations"};
}

Check adam_square() {
  optim::AdamState state(1, {});
  std::vector<double> w{1.0};
  std::vector<double> g(1);
  for (int i = 0; i < 2000; ++i) {
    g[0] = 2.0 * w[0];
    optim::adam_step(state, w, g);
  }
  return {"Adam on w^2", std::fabs(w[0]) < 1e-3, fmt::format("|w| = {:.2e} after 2000 steps", std::fabs(w[0]))};
}

Check dataset_noise() {
  constexpr int n = 5000;
  constexpr double sigma = 0.5;
  const auto d = corpus::make_dataset("f1", n, sigma, 42);
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += d.train_y[i] - d.train_y_clean[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) var += std::pow(d.train_y[i] - d.train_y_clean[i] - mean, 2);
  const double sd = std::sqrt(var / (n - 1));
  const bool ok = std::fabs(mean) < 3 * sigma / std::sqrt(double{n}) && std::fabs(sd - sigma) < 0.05 * sigma;
  return {"noise model", ok, fmt::format("mean {:.4f}, std {:.4f}", mean, sd)};
}

Check param_round_trip(std::mt19937_64& rng) {
  auto net = nn::build_kan({1, 5, 1}, {}, 1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> v(net->params().size());
  for (auto& x : v) x = u(rng);
  std::copy(v.begin(), v.end(), net->params().begin());
  const bool ok = std::equal(v.begin(), v.end(), net->params().begin());
  return {"parameter view round trip", ok, fmt::format("{} values", v.size())};
}

Check plan_determinism() {
  bench::ExperimentPlan plan;
  plan.name = "verify";
  plan.kind = bench::PlanKind::sample_sweep;
  plan.functions = {"f1", "f3"};
  plan.pairs = {bench::table2_pair(1)};
  plan.optimizers = {optim::OptimizerConfig{}};
  plan.epochs = {5};
  plan.samples = {50};
  plan.seeds = {0, 1};
  const auto render = [&](int jobs) {
    std::ostringstream out;
    bench::write_runs_csv(bench::run_plan(plan, {jobs, {}}).runs, out);
    return out.str();
  };
  const std::string a = render(1);
  const std::string b = render(2);
  return {"plan determinism", a == b && !a.empty(), fmt::format("{} bytes of runs.csv", a.size())};
}

Check summary_recomputation() {
  bench::ExperimentPlan plan;
  plan.name = "verify";
  plan.kind = bench::PlanKind::epoch_sweep;
  plan.functions = {"f2"};
  plan.pairs = {bench::table2_pair(1)};
  plan.optimizers = {optim::OptimizerConfig{}};
  plan.epochs = {3, 6};
  plan.samples = {40};
  plan.seeds = {0};
  const auto result = bench::run_plan(plan);
  const auto dir = std::filesystem::temp_directory_path() / fmt::format("kanbench-verify-{}", ::getpid());
  bench::write_outputs(result, dir);
  const auto loaded = bench::load_runs(dir);
  std::ostringstream a;
  std::ostringstream b;
  bench::write_summary_csv(result.summary, a);
  bench::write_summary_csv(bench::summarize(loaded, plan.threshold), b);
  std::filesystem::remove_all(dir);
  return {"summary recomputation", a.str() == b.str(), fmt::format("{} comparisons", result.summary.size())};
}

}  // namespace

std::vector<Check> run_all(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Check> out;
  const auto guarded = [&](const char* name, auto&& fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, fmt::format("threw: {}", e.what())});
    }
  };
  guarded("parameter counts", param_counts);
  guarded("autodiff vs finite differences", [&] { return random_gradients(rng); });
  guarded("fan-out accumulation", fan_out);
  guarded("spline basis", spline_properties);
  guarded("least-squares reproduction", least_squares_reproduction);
  guarded("edge derivative", [&] { return edge_slopes(rng); });
  guarded("network gradients", network_gradients);
  guarded("parallel kernel matches serial reference", fused_matches_reference);
  guarded("L-BFGS on SPD quadratic", [&] { return lbfgs_quadratic(rng); });
  guarded("Adam on w^2", adam_square);
  guarded("noise model", dataset_noise);
  guarded("parameter view round trip", [&] { return param_round_trip(rng); });
  guarded("plan determinism", plan_determinism);
  guarded("summary recomputation", summary_recomputation);
  return out;
}

}  // namespace kanbench::verify
