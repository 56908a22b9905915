// SPDX-License-Identifier: Apache-2.0
//
// Full-batch Adam and L-BFGS over a flat parameter vector, and the training
// loop that produces per-epoch traces. One epoch is one parameter update:
// one Adam step or one L-BFGS outer iteration (which may spend several loss
// evaluations inside its line search).

#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kanbench/corpus.hpp"
#include "kanbench/models.hpp"

namespace kanbench::optim {

/// Returns f(params) and writes the gradient into `grad`.
using Objective = std::function<double(std::span<const double> params, std::span<double> grad)>;

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState(std::size_t n, AdamConfig config);

  AdamConfig config;
  long step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update in place. Throws NumericError naming the
/// first non-finite gradient entry.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

struct LbfgsConfig {
  int memory = 10;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 25;
  /// Curvature pairs with s'y at or below this are discarded.
  double min_curvature = 1e-10;
  /// The step is skipped (zero direction) when max |g| is at or below this.
  double tolerance_grad = 1e-14;
  /// Halvings tried by the steepest-descent fallback.
  int max_backtracks = 40;
};

struct LbfgsState {
  LbfgsState(std::size_t n, LbfgsConfig config);

  LbfgsConfig config;
  std::deque<std::vector<double>> s;
  std::deque<std::vector<double>> y;
  std::deque<double> rho;
  bool initialized = false;  // loss/grad below hold the current point
  bool stalled = false;      // last step made no progress at all
  double loss = 0.0;
  std::vector<double> grad;
  long iteration = 0;
};

struct LbfgsStep {
  double loss_before = 0.0;
  double loss = 0.0;
  double step = 0.0;          // accepted step length along the direction
  int evaluations = 0;        // loss/gradient evaluations spent this step
  bool wolfe = false;         // line search returned a strong-Wolfe point
  bool fallback = false;      // steepest-descent backtracking was used
  bool stalled = false;       // no decrease found; parameters unchanged
  double slope_before = 0.0;  // g0'd
  double slope_after = 0.0;   // g(x + step d)'d
  std::vector<double> direction;
};

/// Two-loop recursion: -H g with H built from the stored pairs and the
/// initial scaling s'y/y'y (identity when the history is empty).
std::vector<double> lbfgs_direction(const LbfgsState& state, std::span<const double> grad);

/// One outer iteration: direction, strong-Wolfe line search, history update.
/// If the search finds no Wolfe point within max_line_search evaluations it
/// falls back to a backtracking step along -g; if that also fails the
/// parameters stay put and the step is reported as stalled.
LbfgsStep lbfgs_step(LbfgsState& state, std::span<double> params, const Objective& objective);

enum class OptimizerKind { adam, lbfgs };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::lbfgs;
  AdamConfig adam;
  LbfgsConfig lbfgs;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct TrainOptions {
  int epochs = 100;
  /// Stop once the training loop has used this much wall-clock time; at
  /// least one epoch always runs.
  double max_wall_seconds = std::numeric_limits<double>::infinity();
  /// Evaluate the test RMSE against noisy targets instead of the clean function.
  bool noisy_test_targets = false;
  /// Stop after the first epoch whose test RMSE is below this (0 disables).
  double stop_below_rmse = 0.0;
};

struct RunRecord {
  nlohmann::json config;     // full configuration this run was produced from
  std::string fingerprint;   // hash of `config`, set by the bench runner
  std::vector<double> train_loss;  // per epoch, MSE
  std::vector<double> test_rmse;   // per epoch, after the update
  double initial_rmse = 0.0;
  double final_rmse = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
  long loss_evaluations = 0;
  long line_search_evaluations = 0;
  int fallback_steps = 0;
  int stalled_steps = 0;
  bool failed = false;
  std::string failure;

  [[nodiscard]] int epochs_run() const { return static_cast<int>(test_rmse.size()); }
};

/// Trains `net` full-batch on the dataset's training split with MSE loss and
/// records train loss and test RMSE every epoch. Throws std::invalid_argument
/// for epochs < 1 or an empty dataset. A non-finite loss ends the run early
/// with `failed` set.
RunRecord train(nn::Network& net, const corpus::Dataset& data, const OptimizerConfig& optimizer,
                const TrainOptions& options);

}  // namespace kanbench::optim
