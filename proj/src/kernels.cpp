// SPDX-License-Identifier: Apache-2.0

#include "kanbench/kernels.hpp"

#include <cmath>
#include <exception>

#include <fmt/format.h>
#include <omp.h>

namespace kanbench::kernels {

namespace {

// Runs body(i) for i in [0, count) on the OpenMP team and rethrows the first
// exception on the calling thread.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(kanbench_kernel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

MseObjective::MseObjective(nn::Network& net, std::span<const double> x, std::span<const double> y)
    : net_(&net), x_(x), y_(y) {
  const auto in = static_cast<std::size_t>(net.input_dim());
  const auto out = static_cast<std::size_t>(net.output_dim());
  if (x.size() % in != 0 || y.size() % out != 0 || x.size() / in != y.size() / out) {
    throw std::invalid_argument("MseObjective: inputs and targets disagree on the sample count");
  }
  n_ = x.size() / in;
  if (n_ == 0) throw std::invalid_argument("MseObjective: no samples");
  chunks_ = (n_ + kChunkSize - 1) / kChunkSize;
  tapes_.resize(chunks_);
  chunk_grad_.assign(chunks_, std::vector<double>(dimension(), 0.0));
  chunk_loss_.assign(chunks_, 0.0);
}

void MseObjective::load(std::span<const double> params) {
  auto dst = net_->params();
  if (params.size() != dst.size()) throw std::invalid_argument("parameter vector has the wrong length");
  if (params.data() != dst.data()) std::copy(params.begin(), params.end(), dst.begin());
}

double MseObjective::value_and_gradient(std::span<const double> params, std::span<double> grad) {
  load(params);
  ++evaluations_;
  const std::size_t p = dimension();
  const auto in = static_cast<std::size_t>(net_->input_dim());
  const auto out = static_cast<std::size_t>(net_->output_dim());
  const double scale = 1.0 / static_cast<double>(n_ * out);
  const nn::Network& net = *net_;

  parallel_for(chunks_, [&](std::size_t c) {
    ad::Tape& tape = tapes_[c];
    tape.clear();
    std::vector<ad::Var> leaves(p);
    for (std::size_t k = 0; k < p; ++k) leaves[k] = tape.variable(net.params()[k]);

    const std::size_t begin = c * kChunkSize;
    const std::size_t end = std::min(n_, begin + kChunkSize);
    std::vector<ad::Var> xs(in);
    std::vector<ad::Var> pred(out);
    std::vector<ad::Var> squares;
    squares.reserve((end - begin) * out);
    for (std::size_t s = begin; s < end; ++s) {
      for (std::size_t d = 0; d < in; ++d) xs[d] = ad::Var{x_[s * in + d]};
      net.record(tape, leaves, xs, pred);
      for (std::size_t d = 0; d < out; ++d) {
        const double r = pred[d].value() - y_[s * out + d];
        const ad::Partial dr{pred[d].index(), 2.0 * r};
        squares.push_back(pred[d].is_constant() ? ad::Var{r * r} : tape.push(r * r, std::span(&dr, 1)));
      }
    }
    const ad::Var loss = tape.weighted_sum(squares, scale);
    const auto& adj = tape.backward(loss);
    std::copy(adj.begin(), adj.begin() + static_cast<std::ptrdiff_t>(p), chunk_grad_[c].begin());
    chunk_loss_[c] = loss.value();
  });

  double loss = 0.0;
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t c = 0; c < chunks_; ++c) {
    loss += chunk_loss_[c];
    for (std::size_t k = 0; k < p; ++k) grad[k] += chunk_grad_[c][k];
  }
  if (!std::isfinite(loss)) throw NumericError(fmt::format("training loss is not finite ({})", loss));
  return loss;
}

double MseObjective::reference_value_and_gradient(std::span<const double> params, std::span<double> grad) {
  load(params);
  ++evaluations_;
  const std::size_t p = dimension();
  const auto in = static_cast<std::size_t>(net_->input_dim());
  const auto out = static_cast<std::size_t>(net_->output_dim());

  ad::Tape tape;
  std::vector<ad::Var> leaves(p);
  for (std::size_t k = 0; k < p; ++k) leaves[k] = tape.variable(net_->params()[k]);
  std::vector<ad::Var> xs(in);
  std::vector<ad::Var> pred(out);
  ad::Var total{0.0};
  for (std::size_t s = 0; s < n_; ++s) {
    for (std::size_t d = 0; d < in; ++d) xs[d] = ad::Var{x_[s * in + d]};
    net_->record_reference(tape, leaves, xs, pred);
    for (std::size_t d = 0; d < out; ++d) total = total + ad::square(pred[d] - y_[s * out + d]);
  }
  const ad::Var loss = total / static_cast<double>(n_ * out);
  if (loss.is_constant()) {
    std::fill(grad.begin(), grad.end(), 0.0);
    return loss.value();
  }
  const auto& adj = tape.backward(loss);
  std::copy(adj.begin(), adj.begin() + static_cast<std::ptrdiff_t>(p), grad.begin());
  return loss.value();
}

double MseObjective::value() const {
  const auto out = static_cast<std::size_t>(net_->output_dim());
  std::vector<double> pred(n_ * out);
  predict(*net_, x_, pred);
  std::vector<double> partial(chunks_, 0.0);
  for (std::size_t c = 0; c < chunks_; ++c) {
    const std::size_t begin = c * kChunkSize * out;
    const std::size_t end = std::min(n_, (c + 1) * kChunkSize) * out;
    for (std::size_t i = begin; i < end; ++i) {
      const double r = pred[i] - y_[i];
      partial[c] += r * r;
    }
  }
  double total = 0.0;
  for (double v : partial) total += v;
  return total / static_cast<double>(n_ * out);
}

void predict(const nn::Network& net, std::span<const double> x, std::span<double> out) {
  const auto in = static_cast<std::size_t>(net.input_dim());
  const auto od = static_cast<std::size_t>(net.output_dim());
  const std::size_t n = x.size() / in;
  if (out.size() != n * od) throw std::invalid_argument("predict: output buffer has the wrong size");
  parallel_for(n, [&](std::size_t s) { net.forward(x.subspan(s * in, in), out.subspan(s * od, od)); });
}

void predict_serial(const nn::Network& net, std::span<const double> x, std::span<double> out) {
  const auto in = static_cast<std::size_t>(net.input_dim());
  const auto od = static_cast<std::size_t>(net.output_dim());
  const std::size_t n = x.size() / in;
  if (out.size() != n * od) throw std::invalid_argument("predict: output buffer has the wrong size");
  for (std::size_t s = 0; s < n; ++s) net.forward(x.subspan(s * in, in), out.subspan(s * od, od));
}

double rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty()) {
    throw std::invalid_argument("rmse: size mismatch or empty input");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(predictions.size()));
}

}  // namespace kanbench::kernels
