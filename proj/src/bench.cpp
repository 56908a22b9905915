// SPDX-License-Identifier: Apache-2.0

#include "kanbench/bench.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include <fmt/format.h>
#include <omp.h>

#include "kanbench/corpus.hpp"

namespace kanbench::bench {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + stream * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string fingerprint(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string optimizer_label(const optim::OptimizerConfig& c) {
  if (c.kind == optim::OptimizerKind::adam) return fmt::format("adam:lr={}", c.adam.lr);
  return "lbfgs";
}

std::optional<int> epochs_to_threshold(std::span<const double> trace, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be > 0");
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i] < threshold) return static_cast<int>(i + 1);
  }
  return std::nullopt;
}

std::optional<int> epochs_to_double_final(std::span<const double> trace) {
  if (trace.empty() || !std::isfinite(trace.back())) return std::nullopt;
  const double target = 2.0 * trace.back();
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i] <= target) return static_cast<int>(i + 1);
  }
  return std::nullopt;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) return std::nan("");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nan("");
  return sab / std::sqrt(saa * sbb);
}

std::string to_string(Winner w) {
  switch (w) {
    case Winner::kan: return "kan";
    case Winner::mlp: return "mlp";
    case Winner::tie: return "tie";
    case Winner::none: return "none";
  }
  return "?";
}

namespace {

Winner smaller(std::optional<double> kan, std::optional<double> mlp) {
  if (kan && mlp) {
    if (*kan < *mlp) return Winner::kan;
    if (*mlp < *kan) return Winner::mlp;
    return Winner::tie;
  }
  if (kan) return Winner::kan;
  if (mlp) return Winner::mlp;
  return Winner::none;
}

std::optional<double> to_real(std::optional<int> v) {
  if (v) return static_cast<double>(*v);
  return std::nullopt;
}

std::optional<double> usable_rmse(const optim::RunRecord& r) {
  if (r.failed || !std::isfinite(r.final_rmse)) return std::nullopt;
  return r.final_rmse;
}

using GroupKey = std::tuple<std::string, int, std::string, int, int, double, std::uint64_t, bool>;

GroupKey key_of(const CellInfo& c) {
  return {c.function, c.row, c.optimizer, c.epochs, c.samples, c.sigma, c.seed, c.mirrored};
}

}  // namespace

std::vector<ComparisonRow> summarize(std::span<const RunResult> runs, double threshold) {
  std::map<GroupKey, std::pair<const RunResult*, const RunResult*>> groups;
  for (const auto& r : runs) {
    auto& slot = groups[key_of(r.cell)];
    (r.cell.kind == nn::NetKind::kan ? slot.first : slot.second) = &r;
  }
  std::vector<ComparisonRow> rows;
  for (const auto& [key, pair] : groups) {
    const auto* kan = pair.first;
    const auto* mlp = pair.second;
    if (kan == nullptr || mlp == nullptr) continue;
    ComparisonRow row;
    const CellInfo& c = kan->cell;
    row.function = c.function;
    row.row = c.row;
    row.optimizer = c.optimizer;
    row.epochs = c.epochs;
    row.samples = c.samples;
    row.sigma = c.sigma;
    row.seed = c.seed;
    row.mirrored = c.mirrored;
    row.kan_fingerprint = kan->record.fingerprint;
    row.mlp_fingerprint = mlp->record.fingerprint;
    row.kan_epochs_run = kan->record.epochs_run();
    row.mlp_epochs_run = mlp->record.epochs_run();
    row.kan_final_rmse = kan->record.final_rmse;
    row.mlp_final_rmse = mlp->record.final_rmse;
    row.rmse_ratio = row.kan_final_rmse / row.mlp_final_rmse;
    row.winner_rmse = smaller(usable_rmse(kan->record), usable_rmse(mlp->record));
    row.kan_epochs_to_threshold = epochs_to_threshold(kan->record.test_rmse, threshold);
    row.mlp_epochs_to_threshold = epochs_to_threshold(mlp->record.test_rmse, threshold);
    row.winner_threshold = smaller(to_real(row.kan_epochs_to_threshold), to_real(row.mlp_epochs_to_threshold));
    row.kan_epochs_to_double_final = epochs_to_double_final(kan->record.test_rmse);
    row.mlp_epochs_to_double_final = epochs_to_double_final(mlp->record.test_rmse);
    row.winner_convergence =
        smaller(to_real(row.kan_epochs_to_double_final), to_real(row.mlp_epochs_to_double_final));
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.kan_fingerprint < b.kan_fingerprint; });
  return rows;
}

std::vector<SlopeRow> slope_table(std::span<const RunResult> runs, double threshold) {
  constexpr std::string_view prefix = "slope:";
  std::vector<SlopeRow> rows;
  for (const auto& r : runs) {
    if (!r.cell.function.starts_with(prefix)) continue;
    SlopeRow row;
    row.fingerprint = r.record.fingerprint;
    row.kind = r.cell.kind;
    row.k = std::stod(r.cell.function.substr(prefix.size()));
    row.seed = r.cell.seed;
    row.mirrored = r.cell.mirrored;
    const auto e = epochs_to_threshold(r.record.test_rmse, threshold);
    row.censored = !e.has_value();
    row.epochs = e.value_or(r.cell.epochs);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

struct Task {
  std::string function;
  std::size_t pair = 0;
  std::size_t optimizer = 0;
  int epochs = 0;
  int samples = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  bool mirrored = false;
};

std::vector<Task> expand(const ExperimentPlan& plan) {
  std::vector<std::string> functions = plan.functions;
  std::vector<std::pair<std::string, bool>> targets;
  if (plan.kind == PlanKind::slope_study) {
    for (double k : plan.slopes) {
      targets.emplace_back(corpus::linear_slope_function(k).id, false);
      if (plan.mirror && k != 0.0) targets.emplace_back(corpus::linear_slope_function(-k).id, true);
    }
  } else {
    for (const auto& f : functions) targets.emplace_back(f, false);
  }
  std::vector<Task> tasks;
  for (const auto& [fn, mirrored] : targets) {
    for (std::size_t p = 0; p < plan.pairs.size(); ++p) {
      for (std::size_t o = 0; o < plan.optimizers.size(); ++o) {
        for (int e : plan.epochs) {
          for (int n : plan.samples) {
            for (double s : plan.sigma) {
              for (auto seed : plan.seeds) tasks.push_back({fn, p, o, e, n, s, seed, mirrored});
            }
          }
        }
      }
    }
  }
  return tasks;
}

CellInfo cell_of(const Task& t, const NetworkPair& pair, nn::NetKind kind, const optim::OptimizerConfig& opt) {
  CellInfo c;
  c.function = t.function;
  c.row = pair.row;
  c.kind = kind;
  c.widths = kind == nn::NetKind::kan ? pair.kan : pair.mlp;
  c.optimizer = optimizer_label(opt);
  c.epochs = t.epochs;
  c.samples = t.samples;
  c.sigma = t.sigma;
  c.seed = t.seed;
  c.mirrored = t.mirrored;
  return c;
}

nlohmann::json extras(const CellInfo& c) {
  return {{"code_version", kCodeVersion}, {"seed", c.seed}, {"pair_row", c.row}, {"mirrored", c.mirrored}};
}

std::unique_ptr<nn::Network> build(const CellInfo& c, const NetworkPair& pair, nn::Activation act) {
  const std::uint64_t init = derive_seed(c.seed, 2);
  std::unique_ptr<nn::Network> net;
  if (c.kind == nn::NetKind::kan) {
    net = nn::build_kan(pair.kan, pair.spline, init);
  } else {
    net = nn::build_mlp(pair.mlp, act, init);
  }
  if (c.mirrored) net->mirror_output();
  return net;
}

// A run that never produced a record, keyed by what the cell would have been.
RunResult failed_run(const CellInfo& c, const optim::OptimizerConfig& opt, const std::string& why) {
  RunResult r;
  r.cell = c;
  r.record.config = extras(c);
  r.record.config.update({{"function", c.function},
                          {"network", {{"kind", nn::to_string(c.kind)}, {"widths", c.widths}}},
                          {"optimizer", opt.to_json()},
                          {"epochs", c.epochs},
                          {"samples", c.samples},
                          {"sigma", c.sigma}});
  r.record.fingerprint = fingerprint(r.record.config);
  r.record.failed = true;
  r.record.failure = why;
  return r;
}

RunResult train_cell(const CellInfo& c, const NetworkPair& pair, nn::Activation act,
                     const optim::OptimizerConfig& opt, const corpus::Dataset& data,
                     const optim::TrainOptions& options) {
  auto net = build(c, pair, act);
  RunResult r;
  r.cell = c;
  r.record = optim::train(*net, data, opt, options);
  r.record.config.update(extras(c));
  return r;
}

std::pair<RunResult, RunResult> run_task(const ExperimentPlan& plan, const Task& t) {
  const NetworkPair& pair = plan.pairs[t.pair];
  const optim::OptimizerConfig& opt = plan.optimizers[t.optimizer];
  const CellInfo kc = cell_of(t, pair, nn::NetKind::kan, opt);
  const CellInfo mc = cell_of(t, pair, nn::NetKind::mlp, opt);
  corpus::Dataset data;
  try {
    data = corpus::make_dataset(corpus::resolve(t.function), t.samples, t.sigma, derive_seed(t.seed, 1));
  } catch (const std::exception& e) {
    return {failed_run(kc, opt, e.what()), failed_run(mc, opt, e.what())};
  }

  optim::TrainOptions options;
  options.epochs = t.epochs;
  options.noisy_test_targets = plan.noisy_test_targets;
  if (plan.kind == PlanKind::slope_study && plan.stop_at_threshold) options.stop_below_rmse = plan.threshold;

  RunResult kan;
  try {
    kan = train_cell(kc, pair, plan.activation, opt, data, options);
    kan.record.fingerprint = fingerprint(kan.record.config);
  } catch (const std::exception& e) {
    kan = failed_run(kc, opt, e.what());
  }

  RunResult mlp;
  try {
    if (plan.kind == PlanKind::matched_time) {
      options.epochs = plan.max_matched_epochs;
      options.max_wall_seconds = kan.record.wall_seconds;
    }
    mlp = train_cell(mc, pair, plan.activation, opt, data, options);
    if (plan.kind == PlanKind::matched_time) {
      mlp.record.config["epochs"] = "matched_time";
      mlp.record.config["max_epochs"] = plan.max_matched_epochs;
      mlp.record.config["budget_from"] = kan.record.fingerprint;
    }
    mlp.record.fingerprint = fingerprint(mlp.record.config);
  } catch (const std::exception& e) {
    mlp = failed_run(mc, opt, e.what());
  }
  return {std::move(kan), std::move(mlp)};
}

}  // namespace

PlanResult run_plan(const ExperimentPlan& plan, const RunOptions& options) {
  plan.validate();
  if (options.jobs < 1) throw std::invalid_argument(fmt::format("jobs must be >= 1, got {}", options.jobs));
  const std::vector<Task> tasks = expand(plan);
  std::vector<std::pair<RunResult, RunResult>> done(tasks.size());
  std::size_t finished = 0;

  // Cells own everything they touch; the inner kernels stay serial inside a
  // cell while more than one job runs.
  const int jobs = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(options.jobs), tasks.size()));
  const auto n = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs) if (jobs > 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    done[i] = run_task(plan, tasks[i]);
#pragma omp critical(kanbench_progress)
    {
      ++finished;
      if (options.progress) options.progress(finished, tasks.size());
    }
  }

  PlanResult result;
  result.plan = plan;
  for (auto& [k, m] : done) {
    result.runs.push_back(std::move(k));
    result.runs.push_back(std::move(m));
  }
  std::stable_sort(result.runs.begin(), result.runs.end(),
                   [](const auto& a, const auto& b) { return a.record.fingerprint < b.record.fingerprint; });
  result.summary = summarize(result.runs, plan.threshold);
  if (plan.kind == PlanKind::slope_study) result.slopes = slope_table(result.runs, plan.threshold);
  return result;
}

MatchedTime matched_time_run(const NetworkPair& pair, const std::string& function, int kan_epochs,
                             const optim::OptimizerConfig& optimizer, int samples, std::uint64_t seed,
                             std::optional<double> budget_seconds, int max_mlp_epochs) {
  validate_pair(pair);
  if (kan_epochs < 1) throw std::invalid_argument("kan_epochs must be >= 1");
  if (max_mlp_epochs < 1) throw std::invalid_argument("max_mlp_epochs must be >= 1");
  if (budget_seconds && !(*budget_seconds >= 0.0)) throw std::invalid_argument("budget must be >= 0");
  const Task t{function, 0, 0, kan_epochs, samples, 0.0, seed, false};
  const auto data = corpus::make_dataset(corpus::resolve(function), samples, 0.0, derive_seed(seed, 1));

  MatchedTime out;
  optim::TrainOptions options;
  options.epochs = kan_epochs;
  out.kan = train_cell(cell_of(t, pair, nn::NetKind::kan, optimizer), pair, nn::Activation::silu, optimizer, data,
                       options);
  out.kan.record.fingerprint = fingerprint(out.kan.record.config);

  options.epochs = max_mlp_epochs;
  options.max_wall_seconds = budget_seconds.value_or(out.kan.record.wall_seconds);
  out.mlp = train_cell(cell_of(t, pair, nn::NetKind::mlp, optimizer), pair, nn::Activation::silu, optimizer, data,
                       options);
  out.mlp.record.config["epochs"] = "matched_time";
  out.mlp.record.config["max_epochs"] = max_mlp_epochs;
  out.mlp.record.config["budget_seconds"] = options.max_wall_seconds;
  out.mlp.record.fingerprint = fingerprint(out.mlp.record.config);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string real(double v) { return fmt::format("{:.17g}", v); }

std::string opt_int(std::optional<int> v) { return v ? std::to_string(*v) : std::string(); }

// Free text in a CSV cell: no separators, no line breaks.
std::string clean_text(std::string s) {
  for (char& c : s) {
    if (c == ',') c = ';';
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

std::string widths_cell(const nn::LayerWidths& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "-" : "") + std::to_string(w[i]);
  return s;
}

}  // namespace

void write_runs_csv(std::span<const RunResult> runs, std::ostream& out) {
  out << "fingerprint,epoch,rmse,train_loss\n";
  for (const auto& r : runs) {
    for (std::size_t e = 0; e < r.record.test_rmse.size(); ++e) {
      out << r.record.fingerprint << ',' << e + 1 << ',' << real(r.record.test_rmse[e]) << ','
          << real(r.record.train_loss[e]) << '\n';
    }
  }
}

void write_records_csv(std::span<const RunResult> runs, std::ostream& out) {
  out << "fingerprint,kind,function,row,widths,optimizer,epochs,samples,sigma,seed,mirrored,epochs_run,"
         "initial_rmse,final_rmse,loss_evaluations,line_search_evaluations,fallback_steps,stalled_steps,failed,"
         "failure\n";
  for (const auto& r : runs) {
    const auto& c = r.cell;
    const auto& rec = r.record;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", rec.fingerprint,
                       nn::to_string(c.kind), c.function, c.row, widths_cell(c.widths), c.optimizer, c.epochs,
                       c.samples, real(c.sigma), c.seed, c.mirrored ? 1 : 0, rec.epochs_run(),
                       real(rec.initial_rmse), real(rec.final_rmse), rec.loss_evaluations,
                       rec.line_search_evaluations, rec.fallback_steps, rec.stalled_steps, rec.failed ? 1 : 0,
                       clean_text(rec.failure));
  }
}

void write_summary_csv(std::span<const ComparisonRow> rows, std::ostream& out) {
  out << "function,row,optimizer,epochs,samples,sigma,seed,mirrored,kan_fingerprint,mlp_fingerprint,"
         "kan_epochs_run,mlp_epochs_run,kan_final_rmse,mlp_final_rmse,rmse_ratio,winner_rmse,"
         "kan_epochs_to_threshold,mlp_epochs_to_threshold,winner_threshold,kan_epochs_to_double_final,"
         "mlp_epochs_to_double_final,winner_convergence\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.function, r.row,
                       r.optimizer, r.epochs, r.samples, real(r.sigma), r.seed, r.mirrored ? 1 : 0,
                       r.kan_fingerprint, r.mlp_fingerprint, r.kan_epochs_run, r.mlp_epochs_run,
                       real(r.kan_final_rmse), real(r.mlp_final_rmse), real(r.rmse_ratio), to_string(r.winner_rmse),
                       opt_int(r.kan_epochs_to_threshold), opt_int(r.mlp_epochs_to_threshold),
                       to_string(r.winner_threshold), opt_int(r.kan_epochs_to_double_final),
                       opt_int(r.mlp_epochs_to_double_final), to_string(r.winner_convergence));
  }
}

void write_timing_csv(std::span<const RunResult> runs, std::ostream& out) {
  out << "fingerprint,kind,epochs_run,wall_seconds,seconds_per_epoch,loss_evaluations\n";
  for (const auto& r : runs) {
    const int e = r.record.epochs_run();
    out << fmt::format("{},{},{},{},{},{}\n", r.record.fingerprint, nn::to_string(r.cell.kind), e,
                       real(r.record.wall_seconds), real(e > 0 ? r.record.wall_seconds / e : 0.0),
                       r.record.loss_evaluations);
  }
}

void write_slope_csv(std::span<const SlopeRow> rows, std::ostream& out) {
  out << "fingerprint,kind,k,seed,mirrored,epochs_to_threshold,censored\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{}\n", r.fingerprint, nn::to_string(r.kind), real(r.k), r.seed,
                       r.mirrored ? 1 : 0, r.epochs, r.censored ? 1 : 0);
  }
}

void write_outputs(const PlanResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto emit = [&](const char* name, auto&& writer) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", (dir / name).string()));
    writer(out);
    if (!out) throw std::runtime_error(fmt::format("write to {} failed", (dir / name).string()));
  };
  emit("runs.csv", [&](std::ostream& o) { write_runs_csv(result.runs, o); });
  emit("records.csv", [&](std::ostream& o) { write_records_csv(result.runs, o); });
  emit("summary.csv", [&](std::ostream& o) { write_summary_csv(result.summary, o); });
  emit("timing.csv", [&](std::ostream& o) { write_timing_csv(result.runs, o); });
  if (result.plan.kind == PlanKind::slope_study) {
    emit("slope.csv", [&](std::ostream& o) { write_slope_csv(result.slopes, o); });
  }
  emit("config.json", [&](std::ostream& o) {
    nlohmann::json runs = nlohmann::json::object();
    for (const auto& r : result.runs) runs[r.record.fingerprint] = r.record.config;
    const nlohmann::json j = {{"code_version", kCodeVersion}, {"plan", result.plan.to_json()}, {"runs", runs}};
    o << j.dump(2) << '\n';
  });
}

// ---------------------------------------------------------------------------
// Loading

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ifstream open_csv(const std::filesystem::path& p, std::string_view header) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", p.string()));
  std::string first;
  std::getline(in, first);
  if (first != header) throw std::runtime_error(fmt::format("{}: unexpected header '{}'", p.string(), first));
  return in;
}

nn::LayerWidths parse_widths_cell(const std::string& s) {
  nn::LayerWidths w;
  std::istringstream ss(s);
  std::string part;
  while (std::getline(ss, part, '-')) w.push_back(std::stoi(part));
  return w;
}

}  // namespace

std::vector<RunResult> load_runs(const std::filesystem::path& dir) {
  std::vector<RunResult> runs;
  std::map<std::string, std::size_t> index;
  {
    std::ostringstream header;
    write_records_csv({}, header);
    std::string h = header.str();
    h.pop_back();
    auto in = open_csv(dir / "records.csv", h);
    std::string line;
    while (std::getline(in, line)) {
      const auto f = split(line);
      if (f.size() != 20) throw std::runtime_error(fmt::format("records.csv: malformed row '{}'", line));
      RunResult r;
      r.record.fingerprint = f[0];
      r.cell.kind = nn::parse_net_kind(f[1]);
      r.cell.function = f[2];
      r.cell.row = std::stoi(f[3]);
      r.cell.widths = parse_widths_cell(f[4]);
      r.cell.optimizer = f[5];
      r.cell.epochs = std::stoi(f[6]);
      r.cell.samples = std::stoi(f[7]);
      r.cell.sigma = std::stod(f[8]);
      r.cell.seed = std::stoull(f[9]);
      r.cell.mirrored = f[10] == "1";
      r.record.initial_rmse = std::stod(f[12]);
      r.record.final_rmse = std::stod(f[13]);
      r.record.loss_evaluations = std::stol(f[14]);
      r.record.line_search_evaluations = std::stol(f[15]);
      r.record.fallback_steps = std::stoi(f[16]);
      r.record.stalled_steps = std::stoi(f[17]);
      r.record.failed = f[18] == "1";
      r.record.failure = f[19];
      index[r.record.fingerprint] = runs.size();
      runs.push_back(std::move(r));
    }
  }
  auto in = open_csv(dir / "runs.csv", "fingerprint,epoch,rmse,train_loss");
  std::string line;
  while (std::getline(in, line)) {
    const auto f = split(line);
    if (f.size() != 4) throw std::runtime_error(fmt::format("runs.csv: malformed row '{}'", line));
    const auto it = index.find(f[0]);
    if (it == index.end()) throw std::runtime_error(fmt::format("runs.csv: orphan fingerprint {}", f[0]));
    auto& rec = runs[it->second].record;
    if (std::stoul(f[1]) != rec.test_rmse.size() + 1) {
      throw std::runtime_error(fmt::format("runs.csv: epochs out of order for {}", f[0]));
    }
    rec.test_rmse.push_back(std::stod(f[2]));
    rec.train_loss.push_back(std::stod(f[3]));
  }
  return runs;
}

}  // namespace kanbench::bench
