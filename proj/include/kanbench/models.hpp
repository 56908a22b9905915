// SPDX-License-Identifier: Apache-2.0
//
// KAN and MLP networks over a flat parameter vector.
//
// Every trainable real of a network lives in one contiguous std::vector, so
// the parameter view handed to optimizers is simply a span over it. Layout:
//
//   MLP: per layer, weights (out x in, row-major) then biases (out).
//   KAN: per layer, per edge (input i, output j) in order i*out + j, the
//        edge block [c_0 .. c_{G+k-1}, w_b, w_s].
//
// KAN nodes sum their incoming edges and carry no bias. Each KAN edge also
// owns a frozen 4-real affine slot that is counted under the Table-II
// convention but never trained.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kanbench/autodiff.hpp"
#include "kanbench/spline.hpp"

namespace kanbench::nn {

enum class NetKind { kan, mlp };
enum class Activation { silu, relu, tanh };
enum class Convention { trainable, table2 };

std::string to_string(NetKind kind);
std::string to_string(Activation act);
NetKind parse_net_kind(std::string_view s);
Activation parse_activation(std::string_view s);

using LayerWidths = std::vector<int>;

/// Throws std::invalid_argument unless there are >= 2 layers, all positive.
void validate_widths(const LayerWidths& widths);
std::string to_string(const LayerWidths& widths);
/// Parses "1,5,1" (brackets and spaces tolerated).
LayerWidths parse_widths(std::string_view s);

inline constexpr double kCoefInitSigma = 0.1;

class Network {
 public:
  virtual ~Network() = default;

  [[nodiscard]] NetKind kind() const { return kind_; }
  [[nodiscard]] const LayerWidths& widths() const { return widths_; }
  [[nodiscard]] int input_dim() const { return widths_.front(); }
  [[nodiscard]] int output_dim() const { return widths_.back(); }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  /// The parameter view: every trainable real, in a fixed order.
  std::span<double> params() { return params_; }
  [[nodiscard]] std::span<const double> params() const { return params_; }

  [[nodiscard]] virtual std::size_t count_params(Convention convention) const = 0;

  /// Evaluates the network on one input vector. Throws NumericError naming
  /// the layer if an intermediate value is not finite.
  virtual void forward(std::span<const double> x, std::span<double> out) const = 0;
  /// Scalar convenience for 1 -> 1 networks.
  [[nodiscard]] double predict(double x) const;

  /// Records one forward pass on `tape`. `params` are the tape variables that
  /// stand for params() (same order); inputs may be constants. Uses one fused
  /// node per KAN edge or MLP neuron.
  virtual void record(ad::Tape& tape, std::span<const ad::Var> params, std::span<const ad::Var> x,
                      std::span<ad::Var> out) const = 0;

  /// The same graph composed from primitive tape operations only.
  virtual void record_reference(ad::Tape& tape, std::span<const ad::Var> params, std::span<const ad::Var> x,
                                std::span<ad::Var> out) const = 0;

  /// Negates the network output by flipping the sign of the output layer's
  /// contribution. Used to build mirrored initializations.
  virtual void mirror_output() = 0;

  /// Architecture and initialization settings (no parameter values).
  [[nodiscard]] virtual nlohmann::json describe() const = 0;

  [[nodiscard]] virtual std::unique_ptr<Network> clone() const = 0;

 protected:
  Network(NetKind kind, LayerWidths widths, std::uint64_t seed);

  NetKind kind_;
  LayerWidths widths_;
  std::uint64_t seed_;
  std::vector<double> params_;
};

class MlpNetwork final : public Network {
 public:
  MlpNetwork(LayerWidths widths, Activation activation, std::uint64_t seed);

  [[nodiscard]] Activation activation() const { return activation_; }
  [[nodiscard]] std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  [[nodiscard]] std::size_t bias_offset(std::size_t layer) const;

  [[nodiscard]] std::size_t count_params(Convention convention) const override;
  void forward(std::span<const double> x, std::span<double> out) const override;
  void record(ad::Tape& tape, std::span<const ad::Var> params, std::span<const ad::Var> x,
              std::span<ad::Var> out) const override;
  void record_reference(ad::Tape& tape, std::span<const ad::Var> params, std::span<const ad::Var> x,
                        std::span<ad::Var> out) const override;
  void mirror_output() override;
  [[nodiscard]] nlohmann::json describe() const override;
  [[nodiscard]] std::unique_ptr<Network> clone() const override;

 private:
  Activation activation_;
  std::vector<std::size_t> offsets_;  // start of each layer's weight block
};

class KanNetwork final : public Network {
 public:
  KanNetwork(LayerWidths widths, const spline::SplineSpec& spec, std::uint64_t seed);

  [[nodiscard]] const spline::SplineSpec& spline_spec() const { return knots_.spec(); }
  [[nodiscard]] const spline::KnotVector& knots() const { return knots_; }
  [[nodiscard]] std::size_t edge_count() const;
  /// Offset of the trainable block of edge (i -> j) in `layer`.
  [[nodiscard]] std::size_t edge_offset(std::size_t layer, int i, int j) const;
  [[nodiscard]] const std::array<double, spline::kAffineSlot>& affine_slot(std::size_t edge) const {
    return affine_[edge];
  }

  [[nodiscard]] std::size_t count_params(Convention convention) const override;
  void forward(std::span<const double> x, std::span<double> out) const override;
  void record(ad::Tape& tape, std::span<const ad::Var> params, std::span<const ad::Var> x,
              std::span<ad::Var> out) const override;
  void record_reference(ad::Tape& tape, std::span<const ad::Var> params, std::span<const ad::Var> x,
                        std::span<ad::Var> out) const override;
  void mirror_output() override;
  [[nodiscard]] nlohmann::json describe() const override;
  [[nodiscard]] std::unique_ptr<Network> clone() const override;

 private:
  spline::KnotVector knots_;
  std::vector<std::size_t> offsets_;  // start of each layer's edge blocks
  std::vector<std::array<double, spline::kAffineSlot>> affine_;
};

std::unique_ptr<MlpNetwork> build_mlp(const LayerWidths& widths, Activation activation, std::uint64_t seed);
std::unique_ptr<KanNetwork> build_kan(const LayerWidths& widths, const spline::SplineSpec& spec,
                                      std::uint64_t seed);

/// Rebuilds a freshly initialized network from describe() output.
std::unique_ptr<Network> build_from_description(const nlohmann::json& description);

/// Parameter count for the given architecture without building it.
std::size_t count_mlp_params(const LayerWidths& widths);
std::size_t count_kan_params(const LayerWidths& widths, const spline::SplineSpec& spec, Convention convention);

// Checkpoint file: one JSON header line, then the parameter vector as
// little-endian IEEE-754 doubles.
void save_checkpoint(const Network& net, const std::filesystem::path& path,
                     const nlohmann::json& fingerprint = nlohmann::json::object());
struct Checkpoint {
  std::unique_ptr<Network> network;
  nlohmann::json header;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kanbench::nn
