// SPDX-License-Identifier: Apache-2.0

#include "kanbench/corpus.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include <fmt/format.h>

namespace kanbench::corpus {

namespace {

void require_in(const char* id, double x, double lo, double hi) {
  if (!(x >= lo && x <= hi)) {
    throw DomainError(fmt::format("{}: x = {} lies outside [{}, {}]", id, x, lo, hi));
  }
}

std::vector<CorpusFunction> build_table() {
  using std::numbers::pi;
  std::vector<CorpusFunction> t;
  t.push_back({"f1", "x^2", Category::regular, -1.0, 1.0, [](double x) {
                 require_in("f1", x, -1.0, 1.0);
                 return x * x;
               }});
  t.push_back({"f2", "exp(x)", Category::regular, -1.0, 1.0, [](double x) {
                 require_in("f2", x, -1.0, 1.0);
                 return std::exp(x);
               }});
  t.push_back({"f3", "|x|", Category::nondiff, -1.0, 1.0, [](double x) {
                 require_in("f3", x, -1.0, 1.0);
                 return std::fabs(x);
               }});
  t.push_back({"f4", "1 - sqrt(|x|)", Category::nondiff, -1.0, 1.0, [](double x) {
                 require_in("f4", x, -1.0, 1.0);
                 return 1.0 - std::sqrt(std::fabs(x));
               }});
  t.push_back({"f5", "1 if |x| < 0.5 else 0", Category::jump, -1.0, 1.0, [](double x) {
                 require_in("f5", x, -1.0, 1.0);
                 return std::fabs(x) < 0.5 ? 1.0 : 0.0;
               }});
  t.push_back({"f6", "1 - 4x^2 if |x| < 0.5 else 1", Category::jump, -1.0, 1.0, [](double x) {
                 require_in("f6", x, -1.0, 1.0);
                 return std::fabs(x) < 0.5 ? 1.0 - 4.0 * x * x : 1.0;
               }});
  t.push_back({"f7", "1/x", Category::singular, 0.001, 1.0, [](double x) {
                 if (x == 0.0) throw DomainError("f7: singular at x = 0");
                 require_in("f7", x, 0.001, 1.0);
                 return 1.0 / x;
               }});
  t.push_back({"f8", "1/(1 - x^2) - 1", Category::singular, -0.999, 0.999, [](double x) {
                 if (std::fabs(x) == 1.0) throw DomainError("f8: singular at |x| = 1");
                 require_in("f8", x, -0.999, 0.999);
                 return 1.0 / (1.0 - x * x) - 1.0;
               }});
  t.push_back({"f9", "cos(1/x)", Category::oscillatory, -0.999, 0.999, [](double x) {
                 if (x == 0.0) throw DomainError("f9: undefined at x = 0");
                 require_in("f9", x, -0.999, 0.999);
                 return std::cos(1.0 / x);
               }});
  t.push_back({"f10", "cos(2 pi/(1 - x^2))", Category::oscillatory, -0.999, 0.999, [](double x) {
                 if (std::fabs(x) == 1.0) throw DomainError("f10: undefined at |x| = 1");
                 require_in("f10", x, -0.999, 0.999);
                 return std::cos(2.0 * pi / (1.0 - x * x));
               }});
  return t;
}

// Samples uniform inputs until the function is defined there. Only f9 can
// hit an undefined interior point (x == 0), and only with probability ~0.
double draw_input(const CorpusFunction& fn, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(fn.lo, fn.hi);
  for (;;) {
    const double x = u(rng);
    try {
      (void)fn.eval(x);
      return x;
    } catch (const DomainError&) {
    }
  }
}

}  // namespace

std::string to_string(Category c) {
  switch (c) {
    case Category::regular: return "regular";
    case Category::nondiff: return "nondiff";
    case Category::jump: return "jump";
    case Category::singular: return "singular";
    case Category::oscillatory: return "oscillatory";
    case Category::linear_slope: return "linear-slope";
  }
  return "?";
}

const std::vector<CorpusFunction>& table() {
  static const std::vector<CorpusFunction> t = build_table();
  return t;
}

CorpusFunction linear_slope_function(double k) {
  if (!std::isfinite(k)) throw std::invalid_argument("slope must be finite");
  return {fmt::format("slope:{}", k), fmt::format("{} x", k), Category::linear_slope, 0.0, 1.0, [k](double x) {
            require_in("slope", x, 0.0, 1.0);
            return k * x;
          }};
}

CorpusFunction resolve(std::string_view id) {
  for (const auto& fn : table()) {
    if (fn.id == id) return fn;
  }
  constexpr std::string_view prefix = "slope:";
  if (id.starts_with(prefix)) {
    const std::string rest(id.substr(prefix.size()));
    std::size_t used = 0;
    double k = 0.0;
    try {
      k = std::stod(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != rest.size() || rest.empty()) throw std::invalid_argument(fmt::format("bad slope id '{}'", id));
    return linear_slope_function(k);
  }
  throw std::invalid_argument(fmt::format("unknown function '{}'", id));
}

double eval_function(std::string_view id, double x) { return resolve(id).eval(x); }

Dataset make_dataset(const CorpusFunction& fn, int n_train, double sigma, std::uint64_t seed, int n_test) {
  if (n_train < 1) throw std::invalid_argument("n_train must be >= 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  if (n_test < 2) throw std::invalid_argument("n_test must be >= 2");

  Dataset d;
  d.function_id = fn.id;
  d.sigma = sigma;
  d.seed = seed;

  // Separate streams: inputs do not change when only sigma changes.
  std::seed_seq input_seq{seed, std::uint64_t{1}};
  std::seed_seq noise_seq{seed, std::uint64_t{2}};
  std::seed_seq test_noise_seq{seed, std::uint64_t{3}};
  std::mt19937_64 input_rng(input_seq);
  std::mt19937_64 noise_rng(noise_seq);
  std::mt19937_64 test_noise_rng(test_noise_seq);
  std::normal_distribution<double> noise(0.0, 1.0);

  d.train_x.resize(n_train);
  d.train_y.resize(n_train);
  d.train_y_clean.resize(n_train);
  for (int i = 0; i < n_train; ++i) {
    const double x = draw_input(fn, input_rng);
    const double y = fn.eval(x);
    d.train_x[i] = x;
    d.train_y_clean[i] = y;
    d.train_y[i] = sigma > 0.0 ? y + sigma * noise(noise_rng) : y;
  }

  d.test_x.resize(n_test);
  d.test_y_clean.resize(n_test);
  d.test_y_noisy.resize(n_test);
  const double step = (fn.hi - fn.lo) / (n_test - 1);
  for (int i = 0; i < n_test; ++i) {
    const double x = i == n_test - 1 ? fn.hi : fn.lo + i * step;
    d.test_x[i] = x;
    d.test_y_clean[i] = fn.eval(x);
    d.test_y_noisy[i] = sigma > 0.0 ? d.test_y_clean[i] + sigma * noise(test_noise_rng) : d.test_y_clean[i];
  }
  return d;
}

Dataset make_dataset(std::string_view id, int n_train, double sigma, std::uint64_t seed) {
  return make_dataset(resolve(id), n_train, sigma, seed);
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << "x,y_clean,y_noisy\n";
  for (std::size_t i = 0; i < data.train_x.size(); ++i) {
    out << fmt::format("{:.17g},{:.17g},{:.17g}\n", data.train_x[i], data.train_y_clean[i], data.train_y[i]);
  }
}

}  // namespace kanbench::corpus
