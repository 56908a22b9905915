// SPDX-License-Identifier: Apache-2.0
//
// Benchmark functions, additive noise, and seeded datasets.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kanbench::corpus {

enum class Category { regular, nondiff, jump, singular, oscillatory, linear_slope };

std::string to_string(Category c);

/// Raised for an argument outside a function's domain or at a singularity.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct CorpusFunction {
  std::string id;       // "f1".."f10" or "slope:<k>"
  std::string formula;  // human-readable
  Category category;
  double lo;
  double hi;
  /// Throws DomainError when x is outside [lo, hi] or at a singularity.
  std::function<double(double)> eval;
};

/// f1 .. f10 in order.
const std::vector<CorpusFunction>& table();

/// f(x) = k x on [0, 1].
CorpusFunction linear_slope_function(double k);

/// "f1".."f10", or "slope:<k>" for the linear family.
CorpusFunction resolve(std::string_view id);

double eval_function(std::string_view id, double x);

inline constexpr double kLowNoise = 0.1;
inline constexpr double kHighNoise = 0.5;

/// Zero-mean additive Gaussian noise.
struct NoiseModel {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr int kTestPoints = 1000;

struct Dataset {
  std::string function_id;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  std::vector<double> train_x;
  std::vector<double> train_y;        // noisy targets used for training
  std::vector<double> train_y_clean;
  std::vector<double> test_x;         // equispaced over the domain
  std::vector<double> test_y_clean;
  std::vector<double> test_y_noisy;   // same noise model, independent draws

  [[nodiscard]] std::size_t train_size() const { return train_x.size(); }
};

/// Train inputs are i.i.d. uniform over the domain; test inputs are
/// kTestPoints equispaced points including both endpoints.
Dataset make_dataset(const CorpusFunction& fn, int n_train, double sigma, std::uint64_t seed,
                     int n_test = kTestPoints);
Dataset make_dataset(std::string_view id, int n_train, double sigma, std::uint64_t seed);

/// Training split as CSV: header `x,y_clean,y_noisy`, 17 significant digits, LF.
void write_csv(const Dataset& data, std::ostream& out);

}  // namespace kanbench::corpus
