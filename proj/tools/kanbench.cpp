// SPDX-License-Identifier: Apache-2.0
//
// kanbench command line: run plans, list the corpus, count parameters and
// run the self-check suite.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "kanbench/bench.hpp"
#include "kanbench/corpus.hpp"
#include "kanbench/models.hpp"
#include "kanbench/verify.hpp"

namespace {

using namespace kanbench;

int cmd_run(const std::string& plan_path, const std::string& out_dir, int seeds, int jobs, bool quiet) {
  bench::ExperimentPlan plan = bench::load_plan(plan_path);
  if (seeds > 0) plan.seeds = bench::seed_range(seeds);
  bench::RunOptions options;
  options.jobs = jobs;
  if (!quiet) {
    options.progress = [](std::size_t done, std::size_t total) {
      std::fprintf(stderr, "\r[%zu/%zu] comparisons", done, total);
      if (done == total) std::fputc('\n', stderr);
    };
  }
  const auto result = bench::run_plan(plan, options);
  bench::write_outputs(result, out_dir);

  int failed = 0;
  for (const auto& r : result.runs) failed += r.record.failed ? 1 : 0;
  fmt::print("{}: {} runs, {} comparisons, {} failed -> {}\n", plan.name, result.runs.size(), result.summary.size(),
             failed, out_dir);
  int kan = 0;
  int mlp = 0;
  for (const auto& row : result.summary) {
    kan += row.winner_rmse == bench::Winner::kan ? 1 : 0;
    mlp += row.winner_rmse == bench::Winner::mlp ? 1 : 0;
  }
  fmt::print("final RMSE winner: KAN {}, MLP {}, other {}\n", kan, mlp, result.summary.size() - kan - mlp);
  return 0;
}

int cmd_list() {
  fmt::print("{:<4} {:<30} {:<18} {}\n", "id", "formula", "domain", "category");
  for (const auto& f : corpus::table()) {
    fmt::print("{:<4} {:<30} {:<18} {}\n", f.id, f.formula, fmt::format("[{}, {}]", f.lo, f.hi),
               corpus::to_string(f.category));
  }
  fmt::print("slope:<k> is k x on [0, 1] (category linear-slope)\n");
  return 0;
}

int cmd_count(const std::string& widths_text, int grid, int k) {
  const nn::LayerWidths widths = nn::parse_widths(widths_text);
  spline::SplineSpec spec;
  spec.grid = grid;
  spec.degree = k;
  spec.validate();
  const auto w = nn::to_string(widths);
  fmt::print("KAN {} grid={} k={}: {} (table2), {} (trainable)\n", w, grid, k,
             nn::count_kan_params(widths, spec, nn::Convention::table2),
             nn::count_kan_params(widths, spec, nn::Convention::trainable));
  fmt::print("MLP {}: {}\n", w, nn::count_mlp_params(widths));
  return 0;
}

int cmd_verify(std::uint64_t seed) {
  int failed = 0;
  for (const auto& c : verify::run_all(seed)) {
    fmt::print("{} {}: {}\n", c.passed ? "ok  " : "FAIL", c.name, c.detail);
    failed += c.passed ? 0 : 1;
  }
  if (failed > 0) fmt::print("{} check(s) failed\n", failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KAN vs MLP function-fitting benchmark"};
  app.require_subcommand(1);

  std::string plan_path;
  std::string out_dir;
  int seeds = 0;
  int jobs = 1;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "run an experiment plan and write CSV output");
  run->add_option("plan", plan_path, "plan file (TOML)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--seeds", seeds, "use seeds 0..N-1 instead of the plan's list")->check(CLI::PositiveNumber);
  run->add_option("--jobs", jobs, "comparisons to run concurrently")->check(CLI::PositiveNumber);
  run->add_flag("--quiet", quiet, "no progress output");

  auto* list = app.add_subcommand("list-functions", "print the function corpus");

  std::string widths = "1,5,1";
  int grid = 3;
  int k = 3;
  auto* count = app.add_subcommand("count-params", "parameter counts for a width vector");
  count->add_option("--widths", widths, "comma-separated layer widths")->capture_default_str();
  count->add_option("--grid", grid, "spline grid intervals")->capture_default_str();
  count->add_option("--k", k, "spline degree")->capture_default_str();

  std::uint64_t verify_seed = 0;
  auto* ver = app.add_subcommand("verify", "run the invariant self-checks");
  ver->add_option("--seed", verify_seed, "seed for the randomized checks")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(plan_path, out_dir, seeds, jobs, quiet);
    if (*list) return cmd_list();
    if (*count) return cmd_count(widths, grid, k);
    if (*ver) return cmd_verify(verify_seed);
  } catch (const std::exception& e) {
    std::cerr << "kanbench: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
