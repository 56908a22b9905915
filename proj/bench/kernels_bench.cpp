// SPDX-License-Identifier: Apache-2.0
//
// Fused chunked loss/gradient kernel against the single-tape serial
// reference, plus parallel vs serial prediction.

#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "kanbench/corpus.hpp"
#include "kanbench/kernels.hpp"

using namespace kanbench;

namespace {

std::unique_ptr<nn::Network> make_net(int which) {
  switch (which) {
    case 0: return nn::build_kan({1, 5, 1}, spline::SplineSpec{}, 1);
    case 1: return nn::build_mlp({1, 39, 1}, nn::Activation::silu, 1);
    case 2: return nn::build_kan({1, 10, 1}, spline::SplineSpec{}, 1);
    default: return nn::build_mlp({1, 79, 1}, nn::Activation::silu, 1);
  }
}

const char* name_of(int which) {
  static const char* names[] = {"kan_1-5-1", "mlp_1-39-1", "kan_1-10-1", "mlp_1-79-1"};
  return names[which];
}

template <bool Reference>
void BM_loss_gradient(benchmark::State& state) {
  const int which = static_cast<int>(state.range(0));
  const auto n = static_cast<int>(state.range(1));
  auto net = make_net(which);
  const auto data = corpus::make_dataset("f3", n, 0.0, 0);
  kernels::MseObjective obj(*net, data.train_x, data.train_y);
  const std::vector<double> w(net->params().begin(), net->params().end());
  std::vector<double> g(w.size());
  for (auto _ : state) {
    const double f = Reference ? obj.reference_value_and_gradient(w, g) : obj.value_and_gradient(w, g);
    benchmark::DoNotOptimize(f);
  }
  state.SetItemsProcessed(state.iterations() * n);
  state.SetLabel(name_of(which));
}

template <bool Serial>
void BM_predict(benchmark::State& state) {
  const int which = static_cast<int>(state.range(0));
  auto net = make_net(which);
  const auto data = corpus::make_dataset("f3", 10, 0.0, 0);
  std::vector<double> out(data.test_x.size());
  for (auto _ : state) {
    if (Serial) {
      kernels::predict_serial(*net, data.test_x, out);
    } else {
      kernels::predict(*net, data.test_x, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(out.size()));
  state.SetLabel(name_of(which));
}

void sizes(benchmark::internal::Benchmark* b) {
  for (int which = 0; which < 4; ++which) {
    for (int n : {50, 5000}) b->Args({which, n});
  }
}

}  // namespace

BENCHMARK(BM_loss_gradient<false>)->Name("loss_gradient/fused")->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_loss_gradient<true>)->Name("loss_gradient/reference")->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_predict<false>)->Name("predict/parallel")->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_predict<true>)->Name("predict/serial")->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
