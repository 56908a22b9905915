// SPDX-License-Identifier: Apache-2.0
//
// Plan validation and TOML parsing.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <toml.hpp>

#include "kanbench/bench.hpp"
#include "kanbench/corpus.hpp"

namespace kanbench::bench {

std::string to_string(PlanKind k) {
  switch (k) {
    case PlanKind::sample_sweep: return "sample_sweep";
    case PlanKind::epoch_sweep: return "epoch_sweep";
    case PlanKind::optimizer_duel: return "optimizer_duel";
    case PlanKind::slope_study: return "slope_study";
    case PlanKind::noise_sweep: return "noise_sweep";
    case PlanKind::matched_time: return "matched_time";
  }
  return "?";
}

PlanKind parse_plan_kind(std::string_view s) {
  for (auto k : {PlanKind::sample_sweep, PlanKind::epoch_sweep, PlanKind::optimizer_duel, PlanKind::slope_study,
                 PlanKind::noise_sweep, PlanKind::matched_time}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument(fmt::format("unknown plan kind '{}'", s));
}

NetworkPair table2_pair(int row) {
  switch (row) {
    case 1: return {1, {1, 1, 1}, {1, 7, 1}, {}};
    case 2: return {2, {1, 5, 1}, {1, 39, 1}, {}};
    case 3: return {3, {1, 10, 1}, {1, 79, 1}, {}};
    default: throw std::invalid_argument(fmt::format("parameter table has rows 1-3, got {}", row));
  }
}

void validate_pair(const NetworkPair& pair) {
  const auto kan = static_cast<long>(nn::count_kan_params(pair.kan, pair.spline, nn::Convention::table2));
  const auto mlp = static_cast<long>(nn::count_mlp_params(pair.mlp));
  if (std::abs(kan - mlp) > 2) {
    throw std::invalid_argument(fmt::format("pair KAN {} ({} params) / MLP {} ({} params) is not parameter-matched",
                                            nn::to_string(pair.kan), kan, nn::to_string(pair.mlp), mlp));
  }
}

void ExperimentPlan::validate() const {
  const auto fail = [&](const std::string& what) {
    throw std::invalid_argument(fmt::format("plan '{}': {}", name, what));
  };
  if (kind == PlanKind::slope_study) {
    if (slopes.empty()) fail("slope_study needs at least one slope");
    for (double k : slopes) {
      if (!std::isfinite(k)) fail("slopes must be finite");
    }
  } else {
    if (functions.empty()) fail("no functions");
    for (const auto& f : functions) (void)corpus::resolve(f);
  }
  if (pairs.empty()) fail("no network pairs");
  for (const auto& p : pairs) validate_pair(p);
  if (optimizers.empty()) fail("no optimizers");
  if (epochs.empty()) fail("no epoch counts");
  for (int e : epochs) {
    if (e < 1) fail(fmt::format("epochs must be >= 1, got {}", e));
  }
  if (samples.empty()) fail("no sample counts");
  for (int n : samples) {
    if (n < 1) fail(fmt::format("samples must be >= 1, got {}", n));
  }
  if (sigma.empty()) fail("no noise levels");
  for (double s : sigma) {
    if (!(s >= 0.0) || !std::isfinite(s)) fail(fmt::format("sigma must be finite and >= 0, got {}", s));
  }
  if (seeds.empty()) fail("no seeds");
  if (!(threshold > 0.0)) fail("threshold must be > 0");
  if (max_matched_epochs < 1) fail("max_matched_epochs must be >= 1");
}

nlohmann::json ExperimentPlan::to_json() const {
  nlohmann::json pj = nlohmann::json::array();
  for (const auto& p : pairs) {
    pj.push_back({{"row", p.row},
                  {"kan", p.kan},
                  {"mlp", p.mlp},
                  {"grid", p.spline.grid},
                  {"k", p.spline.degree},
                  {"kan_params_table2", nn::count_kan_params(p.kan, p.spline, nn::Convention::table2)},
                  {"kan_params_trainable", nn::count_kan_params(p.kan, p.spline, nn::Convention::trainable)},
                  {"mlp_params", nn::count_mlp_params(p.mlp)}});
  }
  nlohmann::json oj = nlohmann::json::array();
  for (const auto& o : optimizers) oj.push_back(o.to_json());
  nlohmann::json j = {{"plan", to_string(kind)},
                      {"name", name},
                      {"functions", functions},
                      {"pairs", pj},
                      {"optimizers", oj},
                      {"epochs", epochs},
                      {"samples", samples},
                      {"sigma", sigma},
                      {"seeds", seeds},
                      {"activation", nn::to_string(activation)},
                      {"test_targets", noisy_test_targets ? "noisy" : "clean"},
                      {"threshold", threshold}};
  if (kind == PlanKind::slope_study) {
    j["slopes"] = slopes;
    j["mirror"] = mirror;
    j["stop_at_threshold"] = stop_at_threshold;
  }
  if (kind == PlanKind::matched_time) j["max_matched_epochs"] = max_matched_epochs;
  return j;
}

namespace {

[[noreturn]] void bad(std::string_view source, std::string_view key, std::string_view what) {
  throw std::invalid_argument(fmt::format("{}: key '{}': {}", source, key, what));
}

double as_double(const toml::node& n, std::string_view source, std::string_view key) {
  if (auto v = n.value<double>()) return *v;  // also accepts integers
  bad(source, key, "expected a number");
}

std::int64_t as_int(const toml::node& n, std::string_view source, std::string_view key) {
  if (const auto* i = n.as_integer()) return i->get();
  bad(source, key, "expected an integer");
}

// A scalar or an array of scalars, collected through `get`.
template <typename T, typename Get>
std::vector<T> list_of(const toml::table& t, std::string_view key, std::string_view source, Get get) {
  const toml::node* n = t.get(key);
  std::vector<T> out;
  if (n == nullptr) return out;
  if (const auto* arr = n->as_array()) {
    for (const auto& e : *arr) out.push_back(get(e));
  } else {
    out.push_back(get(*n));
  }
  if (out.empty()) bad(source, key, "empty list");
  return out;
}

nn::LayerWidths widths_of(const toml::node& n, std::string_view source, std::string_view key) {
  const auto* arr = n.as_array();
  if (arr == nullptr) bad(source, key, "widths must be an array of integers");
  nn::LayerWidths w;
  for (const auto& e : *arr) w.push_back(static_cast<int>(as_int(e, source, key)));
  nn::validate_widths(w);
  return w;
}

NetworkPair pair_of(const toml::node& n, std::string_view source) {
  if (n.is_integer()) return table2_pair(static_cast<int>(as_int(n, source, "pairs")));
  const auto* t = n.as_table();
  if (t == nullptr) bad(source, "pairs", "each pair is a row number or a table {kan, mlp, grid, k}");
  NetworkPair p;
  const toml::node* kan = t->get("kan");
  const toml::node* mlp = t->get("mlp");
  if (kan == nullptr || mlp == nullptr) bad(source, "pairs", "custom pair needs both 'kan' and 'mlp'");
  p.kan = widths_of(*kan, source, "pairs.kan");
  p.mlp = widths_of(*mlp, source, "pairs.mlp");
  if (const auto* g = t->get("grid")) p.spline.grid = static_cast<int>(as_int(*g, source, "pairs.grid"));
  if (const auto* k = t->get("k")) p.spline.degree = static_cast<int>(as_int(*k, source, "pairs.k"));
  p.spline.validate();
  return p;
}

optim::OptimizerConfig optimizer_of(const toml::node& n, std::string_view source) {
  optim::OptimizerConfig c;
  if (auto s = n.value<std::string>()) {
    c.kind = optim::parse_optimizer(*s);
    return c;
  }
  const auto* t = n.as_table();
  if (t == nullptr) bad(source, "optimizer", "expected a name or a table with 'kind'");
  const auto kind = (*t)["kind"].value<std::string>();
  if (!kind) bad(source, "optimizer", "table needs a string 'kind'");
  c.kind = optim::parse_optimizer(*kind);
  for (const auto& [k, v] : *t) {
    const std::string key(k.str());
    if (key == "kind") continue;
    if (c.kind == optim::OptimizerKind::adam) {
      if (key == "lr") c.adam.lr = as_double(v, source, key);
      else if (key == "beta1") c.adam.beta1 = as_double(v, source, key);
      else if (key == "beta2") c.adam.beta2 = as_double(v, source, key);
      else if (key == "eps") c.adam.eps = as_double(v, source, key);
      else bad(source, "optimizer." + key, "unknown Adam setting");
    } else {
      if (key == "memory") c.lbfgs.memory = static_cast<int>(as_int(v, source, key));
      else if (key == "c1") c.lbfgs.c1 = as_double(v, source, key);
      else if (key == "c2") c.lbfgs.c2 = as_double(v, source, key);
      else if (key == "max_line_search") c.lbfgs.max_line_search = static_cast<int>(as_int(v, source, key));
      else bad(source, "optimizer." + key, "unknown L-BFGS setting");
    }
  }
  return c;
}

}  // namespace

ExperimentPlan parse_plan(std::string_view toml_text, std::string_view source) {
  toml::table t;
  try {
    t = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    throw std::invalid_argument(fmt::format("{}: {} (line {})", source, e.description(), e.source().begin.line));
  }

  static const std::vector<std::string> known = {
      "plan",      "name",       "functions", "pairs",  "optimizer",         "epochs",
      "samples",   "sigma",      "seeds",     "activation", "test_targets",  "threshold",
      "slopes",    "mirror",     "stop_at_threshold", "max_matched_epochs",
      "grid_update_every"};
  for (const auto& [k, v] : t) {
    if (std::find(known.begin(), known.end(), k.str()) == known.end()) {
      bad(source, k.str(), "unknown key");
    }
  }

  ExperimentPlan p;
  const auto kind = t["plan"].value<std::string>();
  if (!kind) bad(source, "plan", "missing or not a string");
  p.kind = parse_plan_kind(*kind);
  p.name = t["name"].value_or(std::string(*kind));

  const auto str = [&](std::string_view key) {
    return [&, key](const toml::node& n) {
      auto s = n.value<std::string>();
      if (!s) bad(source, key, "expected strings");
      return *s;
    };
  };
  const auto integer = [&](std::string_view key) {
    return [&, key](const toml::node& n) { return static_cast<int>(as_int(n, source, key)); };
  };
  const auto real = [&](std::string_view key) {
    return [&, key](const toml::node& n) { return as_double(n, source, key); };
  };

  p.functions = list_of<std::string>(t, "functions", source, str("functions"));
  p.pairs = list_of<NetworkPair>(t, "pairs", source, [&](const toml::node& n) { return pair_of(n, source); });
  p.optimizers = list_of<optim::OptimizerConfig>(t, "optimizer", source,
                                                  [&](const toml::node& n) { return optimizer_of(n, source); });
  p.epochs = list_of<int>(t, "epochs", source, integer("epochs"));
  p.samples = list_of<int>(t, "samples", source, integer("samples"));
  if (t.contains("sigma")) p.sigma = list_of<double>(t, "sigma", source, real("sigma"));
  if (const toml::node* s = t.get("seeds")) {
    // Either a count or an explicit list.
    if (s->is_integer()) {
      p.seeds = seed_range(static_cast<int>(as_int(*s, source, "seeds")));
    } else {
      p.seeds.clear();
      for (int v : list_of<int>(t, "seeds", source, integer("seeds"))) {
        if (v < 0) bad(source, "seeds", "seeds must be >= 0");
        p.seeds.push_back(static_cast<std::uint64_t>(v));
      }
    }
  }
  if (auto a = t["activation"].value<std::string>()) p.activation = nn::parse_activation(*a);
  if (auto tt = t["test_targets"].value<std::string>()) {
    if (*tt != "clean" && *tt != "noisy") bad(source, "test_targets", "expected 'clean' or 'noisy'");
    p.noisy_test_targets = *tt == "noisy";
  }
  if (const toml::node* th = t.get("threshold")) p.threshold = as_double(*th, source, "threshold");
  if (t.contains("slopes")) p.slopes = list_of<double>(t, "slopes", source, real("slopes"));
  if (const toml::node* m = t.get("mirror")) {
    if (!m->is_boolean()) bad(source, "mirror", "expected true or false");
    p.mirror = *m->value<bool>();
  }
  if (const toml::node* m = t.get("stop_at_threshold")) {
    if (!m->is_boolean()) bad(source, "stop_at_threshold", "expected true or false");
    p.stop_at_threshold = *m->value<bool>();
  }
  if (const toml::node* m = t.get("max_matched_epochs")) {
    p.max_matched_epochs = static_cast<int>(as_int(*m, source, "max_matched_epochs"));
  }
  if (const toml::node* g = t.get("grid_update_every")) {
    // Reserved: the grid stays fixed for the whole run.
    if (as_int(*g, source, "grid_update_every") != 0) {
      bad(source, "grid_update_every", "adaptive grid updates are not implemented; only 0 (disabled) is accepted");
    }
  }
  p.validate();
  return p;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open plan file {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str(), path.string());
}

std::vector<std::uint64_t> seed_range(int n) {
  if (n < 1) throw std::invalid_argument(fmt::format("seed count must be >= 1, got {}", n));
  std::vector<std::uint64_t> s(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) s[i] = static_cast<std::uint64_t>(i);
  return s;
}

}  // namespace kanbench::bench
