// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "kanbench/corpus.hpp"
#include "kanbench/optim.hpp"

using namespace kanbench;
using namespace kanbench::optim;

namespace {

using Matrix = std::vector<std::vector<double>>;

// f(x) = 0.5 x'Ax - b'x with a random SPD A.
struct Quadratic {
  Matrix a;
  std::vector<double> b;

  double operator()(std::span<const double> x, std::span<double> g) const {
    double f = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      double ax = 0;
      for (std::size_t j = 0; j < b.size(); ++j) ax += a[i][j] * x[j];
      g[i] = ax - b[i];
      f += 0.5 * x[i] * ax - b[i] * x[i];
    }
    return f;
  }
};

Quadratic random_quadratic(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Matrix m(n, std::vector<double>(n));
  for (auto& row : m) {
    for (auto& v : row) v = d(rng);
  }
  Quadratic q{Matrix(n, std::vector<double>(n, 0.0)), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) q.a[i][j] += m[k][i] * m[k][j];
    }
    q.a[i][i] += 1.0;
    q.b[i] = d(rng);
  }
  return q;
}

// Gaussian elimination, the oracle for the quadratic's minimizer.
std::vector<double> solve(Matrix a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[p][c])) p = r;
    }
    std::swap(a[c], a[p]);
    std::swap(b[c], b[p]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("Adam: first step moves each coordinate by lr against the gradient sign") {
  AdamState st(3, AdamConfig{});
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{3.0, -0.001, 40.0};
  adam_step(st, p, g);
  CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-9));
  CHECK(st.step == 1);
}

TEST_CASE("Adam: two steps match the bias-corrected update written out by hand") {
  const AdamConfig c{0.05, 0.8, 0.95, 1e-8};
  AdamState st(1, c);
  std::vector<double> p{0.3};
  double m = 0;
  double v = 0;
  double x = 0.3;
  for (int t = 1; t <= 2; ++t) {
    const double g = 2 * x + 1;
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mh = m / (1 - std::pow(c.beta1, t));
    const double vh = v / (1 - std::pow(c.beta2, t));
    x -= c.lr * mh / (std::sqrt(vh) + c.eps);
    const std::vector<double> grad{2 * p[0] + 1};
    adam_step(st, p, grad);
    CHECK(p[0] == doctest::Approx(x).epsilon(1e-14));
  }
}

TEST_CASE("Adam drives w^2 to its minimum") {
  AdamState st(1, AdamConfig{0.05});
  std::vector<double> w{1.0};
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> g{2 * w[0]};
    adam_step(st, w, g);
  }
  CHECK(std::fabs(w[0]) < 1e-2);
}

TEST_CASE("Adam rejects non-finite gradients") {
  AdamState st(2, AdamConfig{});
  std::vector<double> p{0, 0};
  const std::vector<double> g{1.0, std::nan("")};
  CHECK_THROWS_AS(adam_step(st, p, g), NumericError);
}

TEST_CASE("L-BFGS direction: steepest descent with no history, BFGS inverse with one pair") {
  LbfgsState st(3, LbfgsConfig{});
  const std::vector<double> g{1.0, -2.0, 0.5};
  const auto d0 = lbfgs_direction(st, g);
  for (int i = 0; i < 3; ++i) CHECK(d0[i] == -g[i]);

  const std::vector<double> s{0.3, -0.1, 0.2};
  const std::vector<double> y{0.5, 0.1, 0.4};
  st.s.push_back(s);
  st.y.push_back(y);
  st.rho.push_back(1.0 / dot(s, y));
  const double rho = 1.0 / dot(s, y);
  const double gamma = dot(s, y) / dot(y, y);
  // H = (I - rho s y') gamma I (I - rho y s') + rho s s'
  Matrix h(3, std::vector<double>(3));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double v = 0;
      for (int k = 0; k < 3; ++k) {
        const double left = (i == k ? 1.0 : 0.0) - rho * s[i] * y[k];
        const double right = (k == j ? 1.0 : 0.0) - rho * y[k] * s[j];
        v += left * gamma * right;
      }
      h[i][j] = v + rho * s[i] * s[j];
    }
  }
  const auto d1 = lbfgs_direction(st, g);
  for (int i = 0; i < 3; ++i) {
    double want = 0;
    for (int j = 0; j < 3; ++j) want -= h[i][j] * g[j];
    CHECK(d1[i] == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("L-BFGS minimizes a quadratic and every accepted step satisfies strong Wolfe") {
  const std::size_t n = 8;
  const Quadratic q = random_quadratic(n, 99);
  const auto xstar = solve(q.a, q.b);
  LbfgsState st(n, LbfgsConfig{});
  std::vector<double> x(n, 0.0);
  const Objective f = [&](std::span<const double> p, std::span<double> g) { return q(p, g); };
  int iterations = 0;
  for (; iterations < 200; ++iterations) {
    const auto step = lbfgs_step(st, x, f);
    CHECK_FALSE(step.stalled);
    if (step.wolfe) {
      CHECK(step.loss <= step.loss_before + st.config.c1 * step.step * step.slope_before + 1e-12);
      CHECK(std::fabs(step.slope_after) <= st.config.c2 * std::fabs(step.slope_before) + 1e-12);
    }
    double err = 0;
    for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::fabs(x[i] - xstar[i]));
    if (err < 1e-8) break;
  }
  CHECK(iterations < 100);
  for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(xstar[i]).epsilon(1e-7).scale(1.0));
}

TEST_CASE("L-BFGS solves Rosenbrock") {
  LbfgsState st(2, LbfgsConfig{});
  std::vector<double> x{-1.2, 1.0};
  const Objective f = [](std::span<const double> p, std::span<double> g) {
    const double a = 1 - p[0];
    const double b = p[1] - p[0] * p[0];
    g[0] = -2 * a - 400 * p[0] * b;
    g[1] = 200 * b;
    return a * a + 100 * b * b;
  };
  for (int i = 0; i < 200; ++i) lbfgs_step(st, x, f);
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("L-BFGS reports a stall and leaves parameters alone when nothing decreases") {
  LbfgsState st(1, LbfgsConfig{});
  std::vector<double> x{0.5};
  // A gradient that never agrees with the value: no step can decrease f.
  const Objective f = [](std::span<const double>, std::span<double> g) {
    g[0] = 1.0;
    return 1.0;
  };
  const auto step = lbfgs_step(st, x, f);
  CHECK(step.stalled);
  CHECK(x[0] == 0.5);
}

TEST_CASE("train: KAN [1,5,1] fits x^2 with L-BFGS in 100 epochs") {
  const auto data = corpus::make_dataset("f1", 200, 0.0, 3);
  auto kan = nn::build_kan({1, 5, 1}, spline::SplineSpec{}, 4);
  OptimizerConfig opt;
  TrainOptions o;
  o.epochs = 100;
  const auto rec = train(*kan, data, opt, o);
  CHECK_FALSE(rec.failed);
  CHECK(rec.epochs_run() == 100);
  CHECK(rec.train_loss.size() == 100);
  CHECK(rec.final_rmse == rec.test_rmse.back());
  CHECK(rec.final_rmse < 1e-2);
  CHECK(rec.final_rmse < rec.initial_rmse);
}

TEST_CASE("train: identical inputs give identical traces") {
  const auto data = corpus::make_dataset("f3", 100, 0.1, 5);
  OptimizerConfig adam;
  adam.kind = OptimizerKind::adam;
  TrainOptions o;
  o.epochs = 30;
  auto a = nn::build_mlp({1, 7, 1}, nn::Activation::silu, 6);
  auto b = nn::build_mlp({1, 7, 1}, nn::Activation::silu, 6);
  const auto ra = train(*a, data, adam, o);
  const auto rb = train(*b, data, adam, o);
  CHECK(ra.test_rmse == rb.test_rmse);
  CHECK(ra.train_loss == rb.train_loss);
  CHECK(ra.fingerprint == rb.fingerprint);
  CHECK(ra.config == rb.config);
}

TEST_CASE("train: options and argument checks") {
  const auto data = corpus::make_dataset("f1", 50, 0.0, 1);
  auto net = nn::build_kan({1, 1, 1}, spline::SplineSpec{}, 1);
  OptimizerConfig opt;
  TrainOptions o;
  o.epochs = 0;
  CHECK_THROWS_AS(train(*net, data, opt, o), std::invalid_argument);

  o.epochs = 50;
  o.max_wall_seconds = 0.0;
  CHECK(train(*net, data, opt, o).epochs_run() == 1);

  o.max_wall_seconds = std::numeric_limits<double>::infinity();
  o.stop_below_rmse = 0.5;
  const auto early = train(*net, data, opt, o);
  CHECK(early.test_rmse.back() < 0.5);
  for (std::size_t i = 0; i + 1 < early.test_rmse.size(); ++i) CHECK(early.test_rmse[i] >= 0.5);

  corpus::Dataset empty = data;
  empty.train_x.clear();
  empty.train_y.clear();
  empty.train_y_clean.clear();
  o.stop_below_rmse = 0.0;
  CHECK_THROWS_AS(train(*net, empty, opt, o), std::invalid_argument);
}

TEST_CASE("train: a diverging run is recorded as failed instead of throwing") {
  const auto data = corpus::make_dataset("f7", 100, 0.0, 2);
  auto mlp = nn::build_mlp({1, 3, 1}, nn::Activation::relu, 2);
  for (auto& p : mlp->params()) p = 1e200;
  OptimizerConfig adam;
  adam.kind = OptimizerKind::adam;
  TrainOptions o;
  o.epochs = 5;
  const auto rec = train(*mlp, data, adam, o);
  CHECK(rec.failed);
  CHECK_FALSE(rec.failure.empty());
  CHECK(rec.epochs_run() == 0);
}

TEST_CASE("optimizer names") {
  CHECK(parse_optimizer("adam") == OptimizerKind::adam);
  CHECK(parse_optimizer("lbfgs") == OptimizerKind::lbfgs);
  CHECK(to_string(OptimizerKind::lbfgs) == "lbfgs");
  CHECK_THROWS_AS(parse_optimizer("sgd"), std::invalid_argument);
}
