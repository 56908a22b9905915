// SPDX-License-Identifier: Apache-2.0
//
// Full-batch loss/gradient and prediction kernels.
//
// The parallel kernels split the samples into fixed-size chunks. Each chunk
// records onto its own tape, and chunk results are reduced in chunk order,
// so the result is bit-identical for any OpenMP thread count. The serial
// reference builds one tape from primitive operations only and is kept to
// cross-check the fused parallel path.

#pragma once

#include <span>
#include <vector>

#include "kanbench/autodiff.hpp"
#include "kanbench/models.hpp"

namespace kanbench::kernels {

inline constexpr std::size_t kChunkSize = 256;

/// Mean squared error of a network over a fixed sample set.
/// x is row-major (n x input_dim), y is row-major (n x output_dim).
class MseObjective {
 public:
  MseObjective(nn::Network& net, std::span<const double> x, std::span<const double> y);

  [[nodiscard]] std::size_t samples() const { return n_; }
  [[nodiscard]] std::size_t dimension() const { return net_->params().size(); }
  [[nodiscard]] nn::Network& network() { return *net_; }

  /// Loads `params` into the network and returns the loss, writing its
  /// gradient into `grad`. Throws NumericError on a non-finite loss.
  double value_and_gradient(std::span<const double> params, std::span<double> grad);

  /// Serial single-tape version built from primitive operations.
  double reference_value_and_gradient(std::span<const double> params, std::span<double> grad);

  /// Loss only, at the network's current parameters.
  [[nodiscard]] double value() const;

  /// Number of value_and_gradient calls so far.
  [[nodiscard]] std::size_t evaluations() const { return evaluations_; }

 private:
  void load(std::span<const double> params);

  nn::Network* net_;
  std::span<const double> x_;
  std::span<const double> y_;
  std::size_t n_;
  std::size_t chunks_;
  std::vector<ad::Tape> tapes_;
  std::vector<std::vector<double>> chunk_grad_;
  std::vector<double> chunk_loss_;
  std::size_t evaluations_ = 0;
};

/// Network outputs for every row of x (parallel over samples).
void predict(const nn::Network& net, std::span<const double> x, std::span<double> out);

/// Same, one sample at a time on the calling thread.
void predict_serial(const nn::Network& net, std::span<const double> x, std::span<double> out);

/// Root-mean-square error of predictions against targets.
double rmse(std::span<const double> predictions, std::span<const double> targets);

}  // namespace kanbench::kernels
