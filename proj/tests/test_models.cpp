// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include <doctest.h>
#include <unistd.h>

#include "kanbench/models.hpp"

using namespace kanbench;
using namespace kanbench::nn;

namespace {

double silu(double x) { return x / (1 + std::exp(-x)); }

// Network output as a function of one parameter, for finite differences.
double output_at(Network& net, std::size_t p, double value, double x) {
  const double saved = net.params()[p];
  net.params()[p] = value;
  const double y = net.predict(x);
  net.params()[p] = saved;
  return y;
}

std::vector<double> tape_gradient(const Network& net, double x0, bool reference) {
  ad::Tape t;
  std::vector<ad::Var> p;
  for (double v : net.params()) p.push_back(t.variable(v));
  const std::vector<ad::Var> x{ad::Var{x0}};
  std::vector<ad::Var> out(1);
  if (reference) {
    net.record_reference(t, p, x, out);
  } else {
    net.record(t, p, x, out);
  }
  CHECK(out[0].value() == doctest::Approx(net.predict(x0)).epsilon(1e-12).scale(1.0));
  t.backward(out[0]);
  std::vector<double> g;
  for (const auto& v : p) g.push_back(t.adjoint(v));
  return g;
}

}  // namespace

TEST_CASE("golden parameter counts") {
  const spline::SplineSpec spec{};
  CHECK(count_mlp_params({1, 7, 1}) == 22);
  CHECK(count_mlp_params({1, 39, 1}) == 118);
  CHECK(count_mlp_params({1, 79, 1}) == 238);
  CHECK(count_kan_params({1, 1, 1}, spec, Convention::table2) == 24);
  CHECK(count_kan_params({1, 5, 1}, spec, Convention::table2) == 120);
  CHECK(count_kan_params({1, 10, 1}, spec, Convention::table2) == 240);
  CHECK(count_kan_params({1, 1, 1}, spec, Convention::trainable) == 16);
  CHECK(count_kan_params({1, 5, 1}, spec, Convention::trainable) == 80);

  // Built networks agree with the closed forms and expose exactly the
  // trainable reals.
  const auto kan = build_kan({2, 3, 1}, spline::SplineSpec{5, 2, -1, 1}, 1);
  CHECK(kan->count_params(Convention::table2) == 9 * (5 + 2 + 6));
  CHECK(kan->count_params(Convention::trainable) == 9 * (5 + 2 + 2));
  CHECK(kan->params().size() == kan->count_params(Convention::trainable));
  const auto mlp = build_mlp({2, 4, 3, 1}, Activation::silu, 1);
  CHECK(mlp->params().size() == 2 * 4 + 4 + 4 * 3 + 3 + 3 + 1);
  CHECK(mlp->count_params(Convention::table2) == mlp->params().size());
}

TEST_CASE("width parsing and validation") {
  CHECK(parse_widths("1,5,1") == LayerWidths{1, 5, 1});
  CHECK(parse_widths("[1, 39, 1]") == LayerWidths{1, 39, 1});
  CHECK(to_string(LayerWidths{1, 5, 1}) == "[1,5,1]");
  CHECK_THROWS_AS(validate_widths({1}), std::invalid_argument);
  CHECK_THROWS_AS(validate_widths({1, 0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(parse_widths("1,x,1"), std::invalid_argument);
}

TEST_CASE("KAN [1,1,1] with zero coefficients is silu(silu(x))") {
  auto kan = build_kan({1, 1, 1}, spline::SplineSpec{}, 3);
  for (auto& p : kan->params()) p = 0.0;
  for (std::size_t l = 0; l < 2; ++l) {
    const std::size_t off = kan->edge_offset(l, 0, 0);
    kan->params()[off + 6] = 1.0;  // w_b
    kan->params()[off + 7] = 0.7;  // w_s, irrelevant here
  }
  for (double x : {-1.0, -0.4, 0.0, 0.25, 1.0}) CHECK(kan->predict(x) == doctest::Approx(silu(silu(x))).epsilon(1e-14));
}

TEST_CASE("KAN initialization: w_b = w_s = 1, small coefficients, frozen zero affine slot") {
  const auto kan = build_kan({1, 5, 1}, spline::SplineSpec{}, 9);
  double sq = 0;
  int n = 0;
  for (std::size_t l = 0; l < 2; ++l) {
    const int in = kan->widths()[l];
    const int out = kan->widths()[l + 1];
    for (int i = 0; i < in; ++i) {
      for (int j = 0; j < out; ++j) {
        const auto off = kan->edge_offset(l, i, j);
        CHECK(kan->params()[off + 6] == 1.0);
        CHECK(kan->params()[off + 7] == 1.0);
        for (int c = 0; c < 6; ++c, ++n) sq += kan->params()[off + c] * kan->params()[off + c];
      }
    }
  }
  CHECK(std::sqrt(sq / n) < 0.2);
  for (std::size_t e = 0; e < kan->edge_count(); ++e) {
    for (double a : kan->affine_slot(e)) CHECK(a == 0.0);
  }
}

TEST_CASE("MLP initialization is uniform within 1/sqrt(fan_in) with zero biases") {
  const auto mlp = build_mlp({1, 39, 1}, Activation::silu, 4);
  for (std::size_t l = 0; l < 2; ++l) {
    const int in = mlp->widths()[l];
    const int out = mlp->widths()[l + 1];
    const double bound = 1.0 / std::sqrt(in);
    for (int k = 0; k < in * out; ++k) CHECK(std::fabs(mlp->params()[mlp->weight_offset(l) + k]) <= bound);
    for (int k = 0; k < out; ++k) CHECK(mlp->params()[mlp->bias_offset(l) + k] == 0.0);
  }
}

TEST_CASE("MLP forward matches a hand computation") {
  auto mlp = build_mlp({1, 2, 1}, Activation::silu, 0);
  // layer 0: w = [0.5, -1], b = [0.1, 0.2]; layer 1: w = [2, 3], b = [-0.5]
  const std::vector<double> p{0.5, -1.0, 0.1, 0.2, 2.0, 3.0, -0.5};
  std::copy(p.begin(), p.end(), mlp->params().begin());
  const double x = 0.3;
  const double want = 2 * silu(0.5 * x + 0.1) + 3 * silu(-x + 0.2) - 0.5;
  CHECK(mlp->predict(x) == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("network gradients agree with finite differences at x = 0.3") {
  std::vector<std::unique_ptr<Network>> nets;
  nets.push_back(build_kan({1, 5, 1}, spline::SplineSpec{}, 11));
  nets.push_back(build_kan({1, 3, 2, 1}, spline::SplineSpec{4, 2, -1, 1}, 12));
  nets.push_back(build_mlp({1, 7, 1}, Activation::silu, 13));
  nets.push_back(build_mlp({1, 4, 4, 1}, Activation::tanh, 14));
  for (auto& net : nets) {
    CAPTURE(to_string(net->kind()));
    const auto fused = tape_gradient(*net, 0.3, false);
    const auto ref = tape_gradient(*net, 0.3, true);
    for (std::size_t p = 0; p < fused.size(); ++p) {
      CAPTURE(p);
      const double v = net->params()[p];
      const double h = 1e-6;
      const double fd = (output_at(*net, p, v + h, 0.3) - output_at(*net, p, v - h, 0.3)) / (2 * h);
      CHECK(fused[p] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
      CHECK(fused[p] == doctest::Approx(ref[p]).epsilon(1e-10).scale(1.0));
    }
  }
}

TEST_CASE("same seed gives identical networks; different seeds differ") {
  const auto a = build_kan({1, 5, 1}, spline::SplineSpec{}, 42);
  const auto b = build_kan({1, 5, 1}, spline::SplineSpec{}, 42);
  const auto c = build_kan({1, 5, 1}, spline::SplineSpec{}, 43);
  CHECK(std::equal(a->params().begin(), a->params().end(), b->params().begin()));
  CHECK_FALSE(std::equal(a->params().begin(), a->params().end(), c->params().begin()));
}

TEST_CASE("mirror_output negates the output") {
  std::vector<std::unique_ptr<Network>> nets;
  nets.push_back(build_kan({1, 5, 1}, spline::SplineSpec{}, 5));
  nets.push_back(build_mlp({1, 7, 1}, Activation::silu, 5));
  for (auto& net : nets) {
    const auto copy = net->clone();
    net->mirror_output();
    for (double x : {-0.8, 0.0, 0.33, 0.9}) CHECK(net->predict(x) == -copy->predict(x));
  }
}

TEST_CASE("describe rebuilds the initialization") {
  const auto kan = build_kan({1, 5, 1}, spline::SplineSpec{5, 3, 0, 1}, 77);
  const auto again = build_from_description(kan->describe());
  CHECK(again->kind() == NetKind::kan);
  CHECK(std::equal(kan->params().begin(), kan->params().end(), again->params().begin(), again->params().end()));
  const auto mlp = build_mlp({1, 7, 1}, Activation::relu, 78);
  const auto mlp2 = build_from_description(mlp->describe());
  CHECK(std::equal(mlp->params().begin(), mlp->params().end(), mlp2->params().begin(), mlp2->params().end()));
}

TEST_CASE("checkpoint round trip restores parameters bit for bit") {
  const auto dir = std::filesystem::temp_directory_path() / ("kanbench_ckpt_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  auto kan = build_kan({1, 5, 1}, spline::SplineSpec{}, 8);
  kan->params()[3] = 0.1 + 0.2;
  save_checkpoint(*kan, dir / "kan.ckpt", nlohmann::json{{"fingerprint", "abc"}});
  const auto loaded = load_checkpoint(dir / "kan.ckpt");
  CHECK(loaded.header["fingerprint"]["fingerprint"] == "abc");
  CHECK(std::equal(kan->params().begin(), kan->params().end(), loaded.network->params().begin(),
                   loaded.network->params().end()));
  CHECK(loaded.network->predict(0.4) == kan->predict(0.4));
  CHECK_THROWS(load_checkpoint(dir / "missing.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite intermediate values raise NumericError") {
  auto mlp = build_mlp({1, 2, 1}, Activation::relu, 0);
  for (auto& p : mlp->params()) p = 1e300;
  CHECK_THROWS_AS((void)mlp->predict(1e10), NumericError);
}
