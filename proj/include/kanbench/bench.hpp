// SPDX-License-Identifier: Apache-2.0
//
// Experiment plans: expansion into (KAN, MLP) comparison cells, parallel
// execution, summaries and CSV output.
//
// Every cell is fully determined by its config JSON; the fingerprint is a
// hash of that JSON and keys every output row.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kanbench/models.hpp"
#include "kanbench/optim.hpp"
#include "kanbench/spline.hpp"

namespace kanbench::bench {

inline constexpr std::string_view kCodeVersion = "kanbench-0.1.0";

enum class PlanKind { sample_sweep, epoch_sweep, optimizer_duel, slope_study, noise_sweep, matched_time };

std::string to_string(PlanKind k);
PlanKind parse_plan_kind(std::string_view s);

/// A parameter-matched KAN/MLP pair. `row` is the Table II row (1-3) or 0
/// for a custom pair.
struct NetworkPair {
  int row = 0;
  nn::LayerWidths kan;
  nn::LayerWidths mlp;
  spline::SplineSpec spline;
};

/// The three rows: [1,1,1]/[1,7,1], [1,5,1]/[1,39,1], [1,10,1]/[1,79,1].
NetworkPair table2_pair(int row);

/// Throws std::invalid_argument unless the KAN's table2 count and the MLP's
/// count differ by at most 2.
void validate_pair(const NetworkPair& pair);

struct ExperimentPlan {
  PlanKind kind = PlanKind::sample_sweep;
  std::string name;
  std::vector<std::string> functions;
  std::vector<NetworkPair> pairs;
  std::vector<optim::OptimizerConfig> optimizers;
  std::vector<int> epochs;
  std::vector<int> samples;
  std::vector<double> sigma{0.0};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  nn::Activation activation = nn::Activation::silu;
  bool noisy_test_targets = false;
  /// RMSE threshold for epochs-to-threshold in summaries and the slope study.
  double threshold = 1.0;
  /// slope_study: the k values; each run fits k x on [0, 1].
  std::vector<double> slopes;
  /// slope_study: also run -k with mirrored output initialization.
  bool mirror = false;
  /// slope_study: stop a run once the threshold is reached.
  bool stop_at_threshold = true;
  /// matched_time: cap on MLP epochs while it chases the KAN's wall-clock.
  int max_matched_epochs = 1'000'000;

  /// Throws std::invalid_argument naming the first problem.
  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Parses a TOML plan. Keys: plan, name, functions, pairs, optimizer,
/// epochs, samples, sigma, seeds, activation, test_targets, threshold,
/// slopes, mirror, stop_at_threshold, max_matched_epochs. The plan is
/// validated before it is returned.
ExperimentPlan parse_plan(std::string_view toml_text, std::string_view source = "plan");
ExperimentPlan load_plan(const std::filesystem::path& path);

/// Seeds 0 .. n-1.
std::vector<std::uint64_t> seed_range(int n);

/// splitmix64 of seed + stream; used to derive data and init seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Lower-case hex FNV-1a 64 of the canonical dump of `config`.
std::string fingerprint(const nlohmann::json& config);

/// Identifies one training run within a plan.
struct CellInfo {
  std::string function;
  int row = 0;
  nn::NetKind kind = nn::NetKind::kan;
  nn::LayerWidths widths;
  std::string optimizer;  // label, see optimizer_label
  int epochs = 0;         // epochs of the comparison; a matched-time MLP may run more
  int samples = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  bool mirrored = false;
};

std::string optimizer_label(const optim::OptimizerConfig& c);

struct RunResult {
  CellInfo cell;
  optim::RunRecord record;
};

/// Smallest 1-based epoch whose RMSE is strictly below `threshold`.
std::optional<int> epochs_to_threshold(std::span<const double> trace, double threshold);

/// Smallest 1-based epoch whose RMSE is at most twice the final RMSE.
std::optional<int> epochs_to_double_final(std::span<const double> trace);

/// Spearman rank correlation, ties given their average rank. NaN when either
/// side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

enum class Winner { kan, mlp, tie, none };
std::string to_string(Winner w);

struct ComparisonRow {
  std::string function;
  int row = 0;
  std::string optimizer;
  int epochs = 0;
  int samples = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  bool mirrored = false;
  std::string kan_fingerprint;
  std::string mlp_fingerprint;
  int kan_epochs_run = 0;
  int mlp_epochs_run = 0;
  double kan_final_rmse = 0.0;
  double mlp_final_rmse = 0.0;
  double rmse_ratio = 0.0;  // kan / mlp
  Winner winner_rmse = Winner::none;
  std::optional<int> kan_epochs_to_threshold;
  std::optional<int> mlp_epochs_to_threshold;
  Winner winner_threshold = Winner::none;
  std::optional<int> kan_epochs_to_double_final;
  std::optional<int> mlp_epochs_to_double_final;
  Winner winner_convergence = Winner::none;

  friend bool operator==(const ComparisonRow&, const ComparisonRow&) = default;
};

/// Pairs KAN and MLP runs that share every other cell field and derives the
/// comparison. Runs without a partner are skipped. Rows are ordered by the
/// KAN fingerprint.
std::vector<ComparisonRow> summarize(std::span<const RunResult> runs, double threshold);

struct SlopeRow {
  std::string fingerprint;
  nn::NetKind kind = nn::NetKind::kan;
  double k = 0.0;
  std::uint64_t seed = 0;
  bool mirrored = false;
  int epochs = 0;     // epochs to threshold, or the budget when censored
  bool censored = false;
};

std::vector<SlopeRow> slope_table(std::span<const RunResult> runs, double threshold);

struct PlanResult {
  ExperimentPlan plan;
  std::vector<RunResult> runs;  // sorted by fingerprint
  std::vector<ComparisonRow> summary;
  std::vector<SlopeRow> slopes;  // slope_study only
};

struct RunOptions {
  int jobs = 1;
  /// Called after each finished comparison with (done, total); serialized.
  std::function<void(std::size_t, std::size_t)> progress;
};

/// Runs every cell of the plan. A cell that throws is recorded as failed
/// and the plan continues.
PlanResult run_plan(const ExperimentPlan& plan, const RunOptions& options = {});

/// Trains the KAN for `kan_epochs`, then the MLP until its training-loop
/// wall-clock reaches `budget_seconds` (or the KAN's own wall-clock when
/// unset). At least one MLP epoch always runs.
struct MatchedTime {
  RunResult kan;
  RunResult mlp;
};
MatchedTime matched_time_run(const NetworkPair& pair, const std::string& function, int kan_epochs,
                             const optim::OptimizerConfig& optimizer, int samples, std::uint64_t seed,
                             std::optional<double> budget_seconds = std::nullopt, int max_mlp_epochs = 1'000'000);

// CSV writers. All floats use 17 significant digits; rows end in LF.
void write_runs_csv(std::span<const RunResult> runs, std::ostream& out);
void write_records_csv(std::span<const RunResult> runs, std::ostream& out);
void write_summary_csv(std::span<const ComparisonRow> rows, std::ostream& out);
void write_timing_csv(std::span<const RunResult> runs, std::ostream& out);
void write_slope_csv(std::span<const SlopeRow> rows, std::ostream& out);

/// Writes runs.csv, records.csv, summary.csv, timing.csv, config.json and,
/// for slope studies, slope.csv into `dir` (created if missing).
void write_outputs(const PlanResult& result, const std::filesystem::path& dir);

/// Rebuilds runs (without timing) from records.csv and runs.csv.
std::vector<RunResult> load_runs(const std::filesystem::path& dir);

}  // namespace kanbench::bench
