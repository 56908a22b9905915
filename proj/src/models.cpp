// SPDX-License-Identifier: Apache-2.0

#include "kanbench/models.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace kanbench::nn {

namespace {

double act_value(Activation a, double z) {
  switch (a) {
    case Activation::silu: return ad::silu_value(z);
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
  }
  return z;
}

struct ValueSlope {
  double value;
  double slope;
};

// Activation and its derivative from a single transcendental call.
ValueSlope act_value_slope(Activation a, double z) {
  switch (a) {
    case Activation::silu: {
      const double sig = ad::sigmoid(z);
      return {z * sig, sig * (1.0 + z * (1.0 - sig))};
    }
    case Activation::relu: return z > 0.0 ? ValueSlope{z, 1.0} : ValueSlope{0.0, 0.0};
    case Activation::tanh: {
      const double t = std::tanh(z);
      return {t, 1.0 - t * t};
    }
  }
  return {z, 1.0};
}

ad::Var act_var(Activation a, ad::Var z) {
  switch (a) {
    case Activation::silu: return ad::silu(z);
    case Activation::relu: return ad::relu(z);
    case Activation::tanh: return ad::tanh(z);
  }
  return z;
}

void check_layer(std::span<const double> values, std::size_t layer) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(fmt::format("non-finite activation in layer {}", layer));
  }
}

void check_layer(std::span<const ad::Var> values, std::size_t layer) {
  for (const ad::Var& v : values) {
    if (!std::isfinite(v.value())) throw NumericError(fmt::format("non-finite activation in layer {}", layer));
  }
}


}  // namespace

std::string to_string(NetKind kind) { return kind == NetKind::kan ? "kan" : "mlp"; }

std::string to_string(Activation act) {
  switch (act) {
    case Activation::silu: return "silu";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

NetKind parse_net_kind(std::string_view s) {
  if (s == "kan") return NetKind::kan;
  if (s == "mlp") return NetKind::mlp;
  throw std::invalid_argument(fmt::format("unknown network kind '{}'", s));
}

Activation parse_activation(std::string_view s) {
  if (s == "silu") return Activation::silu;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument(fmt::format("unknown activation '{}'", s));
}

void validate_widths(const LayerWidths& widths) {
  if (widths.size() < 2) throw std::invalid_argument("a network needs at least an input and an output layer");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument(fmt::format("layer widths must be positive: {}", to_string(widths)));
  }
}

std::string to_string(const LayerWidths& widths) { return fmt::format("[{}]", fmt::join(widths, ",")); }

LayerWidths parse_widths(std::string_view s) {
  std::string cleaned;
  for (char c : s) {
    if (c == '[' || c == ']' || c == ' ') continue;
    cleaned.push_back(c == ',' ? ' ' : c);
  }
  std::istringstream in(cleaned);
  LayerWidths out;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(fmt::format("bad width '{}'", tok));
    out.push_back(v);
  }
  validate_widths(out);
  return out;
}

Network::Network(NetKind kind, LayerWidths widths, std::uint64_t seed)
    : kind_(kind), widths_(std::move(widths)), seed_(seed) {
  validate_widths(widths_);
}

double Network::predict(double x) const {
  if (input_dim() != 1 || output_dim() != 1) throw std::logic_error("predict() needs a 1 -> 1 network");
  double out = 0.0;
  forward(std::span<const double>(&x, 1), std::span<double>(&out, 1));
  return out;
}

// ---------------------------------------------------------------------------
// MLP

std::size_t count_mlp_params(const LayerWidths& widths) {
  validate_widths(widths);
  std::size_t n = 0;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    n += static_cast<std::size_t>(widths[l - 1]) * widths[l] + widths[l];
  }
  return n;
}

MlpNetwork::MlpNetwork(LayerWidths widths, Activation activation, std::uint64_t seed)
    : Network(NetKind::mlp, std::move(widths), seed), activation_(activation) {
  params_.assign(count_mlp_params(widths_), 0.0);
  std::mt19937_64 rng(seed);
  std::size_t off = 0;
  for (std::size_t l = 1; l < widths_.size(); ++l) {
    offsets_.push_back(off);
    const int in = widths_[l - 1];
    const int out = widths_[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int k = 0; k < in * out; ++k) params_[off + k] = dist(rng);
    off += static_cast<std::size_t>(in) * out + out;  // biases stay zero
  }
}

std::size_t MlpNetwork::bias_offset(std::size_t layer) const {
  return offsets_[layer] + static_cast<std::size_t>(widths_[layer]) * widths_[layer + 1];
}

std::size_t MlpNetwork::count_params(Convention) const { return params_.size(); }

void MlpNetwork::forward(std::span<const double> x, std::span<double> out) const {
  if (static_cast<int>(x.size()) != input_dim() || static_cast<int>(out.size()) != output_dim()) {
    throw std::invalid_argument("MLP forward: input/output dimension mismatch");
  }
  thread_local std::vector<double> cur;
  thread_local std::vector<double> next;
  cur.assign(x.begin(), x.end());
  const std::size_t layers = widths_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = widths_[l];
    const int n_out = widths_[l + 1];
    const double* w = params_.data() + offsets_[l];
    const double* b = params_.data() + bias_offset(l);
    next.assign(static_cast<std::size_t>(n_out), 0.0);
    for (int j = 0; j < n_out; ++j) {
      double z = b[j];
      for (int i = 0; i < in; ++i) z += w[j * in + i] * cur[i];
      next[j] = l + 1 < layers ? act_value(activation_, z) : z;
    }
    check_layer(next, l);
    std::swap(cur, next);
  }
  std::copy(cur.begin(), cur.end(), out.begin());
}

void MlpNetwork::record(ad::Tape& tape, std::span<const ad::Var> params, std::span<const ad::Var> x,
                        std::span<ad::Var> out) const {
  thread_local std::vector<ad::Var> cur;
  thread_local std::vector<ad::Var> next;
  cur.assign(x.begin(), x.end());
  const std::size_t layers = widths_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = widths_[l];
    const int n_out = widths_[l + 1];
    const ad::Var* w = params.data() + offsets_[l];
    const ad::Var* b = params.data() + bias_offset(l);
    const bool hidden = l + 1 < layers;
    next.resize(static_cast<std::size_t>(n_out));
    for (int j = 0; j < n_out; ++j) {
      const ad::Var* wj = w + static_cast<std::ptrdiff_t>(j) * in;
      double z = b[j].value();
      for (int i = 0; i < in; ++i) z += wj[i].value() * cur[i].value();
      const ValueSlope a = hidden ? act_value_slope(activation_, z) : ValueSlope{z, 1.0};
      for (int i = 0; i < in; ++i) {
        tape.add_partial(wj[i], a.slope * cur[i].value());
        tape.add_partial(cur[i], a.slope * wj[i].value());
      }
      tape.add_partial(b[j], a.slope);
      next[j] = tape.open_partials() == 0 ? ad::Var{a.value} : tape.close_node(a.value);
    }
    check_layer(next, l);
    std::swap(cur, next);
  }
  std::copy(cur.begin(), cur.end(), out.begin());
}

void MlpNetwork::record_reference(ad::Tape&, std::span<const ad::Var> params, std::span<const ad::Var> x,
                                  std::span<ad::Var> out) const {
  std::vector<ad::Var> cur(x.begin(), x.end());
  const std::size_t layers = widths_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = widths_[l];
    const int n_out = widths_[l + 1];
    std::vector<ad::Var> next(static_cast<std::size_t>(n_out));
    for (int j = 0; j < n_out; ++j) {
      ad::Var z = params[bias_offset(l) + j];
      for (int i = 0; i < in; ++i) z = z + params[offsets_[l] + j * in + i] * cur[i];
      next[j] = l + 1 < layers ? act_var(activation_, z) : z;
    }
    check_layer(next, l);
    cur = std::move(next);
  }
  std::copy(cur.begin(), cur.end(), out.begin());
}

void MlpNetwork::mirror_output() {
  const std::size_t last = widths_.size() - 2;
  const std::size_t end = bias_offset(last) + widths_.back();
  for (std::size_t p = offsets_[last]; p < end; ++p) params_[p] = -params_[p];
}

nlohmann::json MlpNetwork::describe() const {
  return {{"kind", "mlp"},
          {"widths", widths_},
          {"activation", to_string(activation_)},
          {"init", "uniform(+-1/sqrt(fan_in)), zero bias"},
          {"seed", seed_}};
}

std::unique_ptr<Network> MlpNetwork::clone() const { return std::make_unique<MlpNetwork>(*this); }

std::unique_ptr<MlpNetwork> build_mlp(const LayerWidths& widths, Activation activation, std::uint64_t seed) {
  return std::make_unique<MlpNetwork>(widths, activation, seed);
}

// ---------------------------------------------------------------------------
// KAN

std::size_t count_kan_params(const LayerWidths& widths, const spline::SplineSpec& spec, Convention convention) {
  validate_widths(widths);
  spec.validate();
  const std::size_t per_edge =
      spec.basis_count() + 2 + (convention == Convention::table2 ? spline::kAffineSlot : 0);
  std::size_t edges = 0;
  for (std::size_t l = 1; l < widths.size(); ++l) edges += static_cast<std::size_t>(widths[l - 1]) * widths[l];
  return edges * per_edge;
}

KanNetwork::KanNetwork(LayerWidths widths, const spline::SplineSpec& spec, std::uint64_t seed)
    : Network(NetKind::kan, std::move(widths), seed), knots_(spec) {
  const spline::EdgeLayout layout{spec.basis_count()};
  params_.assign(count_kan_params(widths_, spec, Convention::trainable), 0.0);
  affine_.assign(edge_count(), {});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, kCoefInitSigma);
  std::size_t off = 0;
  for (std::size_t l = 1; l < widths_.size(); ++l) {
    offsets_.push_back(off);
    const int edges = widths_[l - 1] * widths_[l];
    for (int e = 0; e < edges; ++e) {
      double* block = params_.data() + off;
      for (int c = 0; c < layout.basis_count; ++c) block[c] = noise(rng);
      block[layout.base_scale()] = 1.0;
      block[layout.spline_scale()] = 1.0;
      off += layout.trainable();
    }
  }
}

std::size_t KanNetwork::edge_count() const {
  std::size_t edges = 0;
  for (std::size_t l = 1; l < widths_.size(); ++l) edges += static_cast<std::size_t>(widths_[l - 1]) * widths_[l];
  return edges;
}

std::size_t KanNetwork::edge_offset(std::size_t layer, int i, int j) const {
  const spline::EdgeLayout layout{knots_.spec().basis_count()};
  return offsets_[layer] + static_cast<std::size_t>(i * widths_[layer + 1] + j) * layout.trainable();
}

std::size_t KanNetwork::count_params(Convention convention) const {
  return count_kan_params(widths_, knots_.spec(), convention);
}

void KanNetwork::forward(std::span<const double> x, std::span<double> out) const {
  if (static_cast<int>(x.size()) != input_dim() || static_cast<int>(out.size()) != output_dim()) {
    throw std::invalid_argument("KAN forward: input/output dimension mismatch");
  }
  const std::size_t block = knots_.spec().basis_count() + 2;
  thread_local std::vector<double> cur;
  thread_local std::vector<double> next;
  cur.assign(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int in = widths_[l];
    const int n_out = widths_[l + 1];
    next.assign(static_cast<std::size_t>(n_out), 0.0);
    for (int i = 0; i < in; ++i) {
      const spline::EdgeInput input = spline::prepare_edge_input(knots_, cur[i]);
      for (int j = 0; j < n_out; ++j) {
        next[j] += spline::edge_value(input, std::span<const double>(params_).subspan(edge_offset(l, i, j), block));
      }
    }
    check_layer(next, l);
    std::swap(cur, next);
  }
  std::copy(cur.begin(), cur.end(), out.begin());
}

void KanNetwork::record(ad::Tape& tape, std::span<const ad::Var> params, std::span<const ad::Var> x,
                        std::span<ad::Var> out) const {
  const std::size_t block = knots_.spec().basis_count() + 2;
  thread_local std::vector<ad::Var> cur;
  thread_local std::vector<ad::Var> next;
  thread_local std::vector<ad::Var> terms;  // edge outputs, [j * in + i]
  cur.assign(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int in = widths_[l];
    const int n_out = widths_[l + 1];
    terms.resize(static_cast<std::size_t>(in) * n_out);
    for (int i = 0; i < in; ++i) {
      const spline::EdgeInput input = spline::prepare_edge_input(knots_, cur[i].value());
      for (int j = 0; j < n_out; ++j) {
        terms[static_cast<std::size_t>(j) * in + i] =
            spline::edge_eval(input, params.subspan(edge_offset(l, i, j), block), cur[i]);
      }
    }
    next.resize(static_cast<std::size_t>(n_out));
    for (int j = 0; j < n_out; ++j) {
      const auto row = std::span<const ad::Var>(terms).subspan(static_cast<std::size_t>(j) * in, in);
      next[j] = in == 1 ? row.front() : tape.sum(row);
    }
    check_layer(next, l);
    std::swap(cur, next);
  }
  std::copy(cur.begin(), cur.end(), out.begin());
}

void KanNetwork::record_reference(ad::Tape&, std::span<const ad::Var> params, std::span<const ad::Var> x,
                                  std::span<ad::Var> out) const {
  const std::size_t block = knots_.spec().basis_count() + 2;
  std::vector<ad::Var> cur(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int in = widths_[l];
    const int n_out = widths_[l + 1];
    std::vector<ad::Var> next(static_cast<std::size_t>(n_out));
    for (int j = 0; j < n_out; ++j) {
      ad::Var acc = spline::edge_eval_reference(knots_, params.subspan(edge_offset(l, 0, j), block), cur[0]);
      for (int i = 1; i < in; ++i) {
        acc = acc + spline::edge_eval_reference(knots_, params.subspan(edge_offset(l, i, j), block), cur[i]);
      }
      next[j] = acc;
    }
    check_layer(next, l);
    cur = std::move(next);
  }
  std::copy(cur.begin(), cur.end(), out.begin());
}

void KanNetwork::mirror_output() {
  const spline::EdgeLayout layout{knots_.spec().basis_count()};
  const std::size_t last = widths_.size() - 2;
  for (int i = 0; i < widths_[last]; ++i) {
    for (int j = 0; j < widths_.back(); ++j) {
      double* block = params_.data() + edge_offset(last, i, j);
      for (int c = 0; c < layout.basis_count; ++c) block[c] = -block[c];
      block[layout.base_scale()] = -block[layout.base_scale()];
    }
  }
}

nlohmann::json KanNetwork::describe() const {
  const auto& s = knots_.spec();
  return {{"kind", "kan"},
          {"widths", widths_},
          {"grid", s.grid},
          {"k", s.degree},
          {"domain", {s.lo, s.hi}},
          {"init", fmt::format("coef normal(0,{}), w_b=1, w_s=1", kCoefInitSigma)},
          {"seed", seed_}};
}

std::unique_ptr<Network> KanNetwork::clone() const { return std::make_unique<KanNetwork>(*this); }

std::unique_ptr<KanNetwork> build_kan(const LayerWidths& widths, const spline::SplineSpec& spec,
                                      std::uint64_t seed) {
  return std::make_unique<KanNetwork>(widths, spec, seed);
}

std::unique_ptr<Network> build_from_description(const nlohmann::json& d) {
  const auto widths = d.at("widths").get<LayerWidths>();
  const auto seed = d.at("seed").get<std::uint64_t>();
  if (parse_net_kind(d.at("kind").get<std::string>()) == NetKind::mlp) {
    return build_mlp(widths, parse_activation(d.at("activation").get<std::string>()), seed);
  }
  spline::SplineSpec spec;
  spec.grid = d.at("grid").get<int>();
  spec.degree = d.at("k").get<int>();
  spec.lo = d.at("domain").at(0).get<double>();
  spec.hi = d.at("domain").at(1).get<double>();
  return build_kan(widths, spec, seed);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const Network& net, const std::filesystem::path& path, const nlohmann::json& fingerprint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path.string()));
  const nlohmann::json header = {{"format", "kanbench-checkpoint"},
                                 {"version", 1},
                                 {"network", net.describe()},
                                 {"fingerprint", fingerprint},
                                 {"count", net.params().size()}};
  out << header.dump() << '\n';
  for (double v : net.params()) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    std::array<char, 8> bytes{};
    for (auto& b : bytes) {
      b = static_cast<char>(bits & 0xffU);
      bits >>= 8U;
    }
    out.write(bytes.data(), bytes.size());
  }
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  std::getline(in, line);
  Checkpoint ck;
  ck.header = nlohmann::json::parse(line);
  if (ck.header.value("format", "") != "kanbench-checkpoint") {
    throw std::runtime_error(fmt::format("'{}' is not a kanbench checkpoint", path.string()));
  }
  ck.network = build_from_description(ck.header.at("network"));
  const auto count = ck.header.at("count").get<std::size_t>();
  auto params = ck.network->params();
  if (count != params.size()) {
    throw std::runtime_error(fmt::format("checkpoint holds {} parameters, network expects {}", count, params.size()));
  }
  for (double& v : params) {
    std::array<unsigned char, 8> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) throw std::runtime_error(fmt::format("checkpoint '{}' is truncated", path.string()));
    std::uint64_t bits = 0;
    for (std::size_t b = bytes.size(); b-- > 0;) bits = (bits << 8U) | bytes[b];
    v = std::bit_cast<double>(bits);
  }
  return ck;
}

}  // namespace kanbench::nn
