#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cdt/error.hpp"
#include "cdt/framing.hpp"
#include "cdt/matrix.hpp"

namespace cdt {

// Three-layer dense network d_in -> d_hidden -> d_out with logistic units everywhere.
// Hidden units carry a trainable bias; the output layer has none (its bias is zero
// and there is no way to change it).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t d_in, std::size_t d_hidden, std::size_t d_out)
      : hidden_w_(d_hidden, d_in), hidden_b_(d_hidden, 0.0), output_w_(d_out, d_hidden), output_b_(d_out, 0.0) {
    if (d_in == 0 || d_hidden == 0 || d_out == 0) throw Error(Errc::invalid_argument, "layer sizes must be positive");
  }

  std::size_t input_dim() const noexcept { return hidden_w_.cols(); }
  std::size_t hidden_dim() const noexcept { return hidden_w_.rows(); }
  std::size_t output_dim() const noexcept { return output_w_.rows(); }
  std::array<std::size_t, 3> layer_sizes() const noexcept { return {input_dim(), hidden_dim(), output_dim()}; }

  Matrix& hidden_weights() noexcept { return hidden_w_; }
  const Matrix& hidden_weights() const noexcept { return hidden_w_; }
  std::span<double> hidden_bias() noexcept { return hidden_b_; }
  std::span<const double> hidden_bias() const noexcept { return hidden_b_; }
  Matrix& output_weights() noexcept { return output_w_; }
  const Matrix& output_weights() const noexcept { return output_w_; }
  std::span<const double> output_bias() const noexcept { return output_b_; }

  bool all_finite() const noexcept {
    auto finite = [](std::span<const double> v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return finite(hidden_w_.data()) && finite(hidden_b_) && finite(output_w_.data());
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  Matrix hidden_w_;  // d_hidden x d_in
  std::vector<double> hidden_b_;
  Matrix output_w_;  // d_out x d_hidden
  std::vector<double> output_b_;
};

struct TrainConfig {
  std::size_t epochs = 300;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

struct ForwardResult {
  std::vector<double> hidden;
  std::vector<double> output;
};

struct Gradients {
  Matrix hidden_weights;
  std::vector<double> hidden_bias;
  Matrix output_weights;
  std::vector<double> output_bias;  // always zero
};

struct BackpropResult {
  Gradients gradients;
  double loss = 0.0;
};

struct TrainResult {
  Mlp model;
  std::vector<double> loss_history;  // mean per-example loss of each epoch
};

inline double sigmoid(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

// Glorot-uniform weights, zero hidden bias.
inline Mlp init_mlp(std::span<const std::size_t> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() != 3) throw Error(Errc::invalid_argument, "expected exactly three layer sizes");
  Mlp net(layer_sizes[0], layer_sizes[1], layer_sizes[2]);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Matrix& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : w.data()) v = dist(rng);
  };
  fill(net.hidden_weights());
  fill(net.output_weights());
  return net;
}

inline Mlp init_mlp(std::initializer_list<std::size_t> layer_sizes, std::uint64_t seed) {
  return init_mlp(std::span<const std::size_t>(layer_sizes.begin(), layer_sizes.size()), seed);
}

namespace detail {

// out[i] = sigmoid(dot(w.row(i), x) + bias[i]); bias may be empty.
inline void dense_sigmoid(const Matrix& w, std::span<const double> bias, const double* x, double* out) {
  const std::size_t fan_in = w.cols();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double z = dot(w.row(i).data(), x, fan_in);
    if (!bias.empty()) z += bias[i];
    out[i] = sigmoid(z);
  }
}

inline void check_input(const Mlp& net, std::size_t n) {
  if (n != net.input_dim())
    throw Error(Errc::dimension,
                "input has " + std::to_string(n) + " values, network expects " + std::to_string(net.input_dim()));
}

// Per-example SGD step; returns the example's loss evaluated before the update.
// Every parameter moves by exactly -lr * (its backprop gradient).
inline double sgd_step(Mlp& net, std::span<const double> x, std::span<const double> target, double lr,
                       std::vector<double>& hidden, std::vector<double>& output, std::vector<double>& delta_out,
                       std::vector<double>& back) {
  const std::size_t nh = net.hidden_dim();
  const std::size_t no = net.output_dim();
  const std::size_t ni = net.input_dim();
  dense_sigmoid(net.hidden_weights(), net.hidden_bias(), x.data(), hidden.data());
  dense_sigmoid(net.output_weights(), {}, hidden.data(), output.data());

  double loss = 0.0;
  for (std::size_t k = 0; k < no; ++k) {
    const double err = output[k] - target[k];
    loss += err * err;
    delta_out[k] = err * output[k] * (1.0 - output[k]);
  }

  std::fill(back.begin(), back.end(), 0.0);
  Matrix& w2 = net.output_weights();
  for (std::size_t k = 0; k < no; ++k) {
    const double d = delta_out[k];
    double* row = w2.row(k).data();
    for (std::size_t j = 0; j < nh; ++j) {
      back[j] += d * row[j];
      row[j] -= lr * (d * hidden[j]);
    }
  }

  Matrix& w1 = net.hidden_weights();
  auto b1 = net.hidden_bias();
  for (std::size_t j = 0; j < nh; ++j) {
    const double d = back[j] * hidden[j] * (1.0 - hidden[j]);
    double* row = w1.row(j).data();
    for (std::size_t i = 0; i < ni; ++i) row[i] -= lr * (d * x[i]);
    b1[j] -= lr * d;
  }
  return 0.5 * loss;
}

}  // namespace detail

inline ForwardResult forward(const Mlp& net, std::span<const double> input) {
  detail::check_input(net, input.size());
  ForwardResult r{std::vector<double>(net.hidden_dim()), std::vector<double>(net.output_dim())};
  detail::dense_sigmoid(net.hidden_weights(), net.hidden_bias(), input.data(), r.hidden.data());
  detail::dense_sigmoid(net.output_weights(), {}, r.hidden.data(), r.output.data());
  return r;
}

// Forward pass of every row of `inputs`. Each row's output is bit-identical to forward()
// on that row alone; the row loop is innermost so each weight row is reused from cache.
inline Matrix forward_batch(const Mlp& net, const Matrix& inputs) {
  detail::check_input(net, inputs.cols());
  const std::size_t batch = inputs.rows();
  Matrix hidden(batch, net.hidden_dim());
  Matrix output(batch, net.output_dim());
  const auto b1 = net.hidden_bias();
  for (std::size_t j = 0; j < net.hidden_dim(); ++j) {
    const double* w = net.hidden_weights().row(j).data();
    for (std::size_t p = 0; p < batch; ++p) {
      hidden(p, j) = sigmoid(detail::dot(w, inputs.row(p).data(), net.input_dim()) + b1[j]);
    }
  }
  for (std::size_t k = 0; k < net.output_dim(); ++k) {
    const double* w = net.output_weights().row(k).data();
    for (std::size_t p = 0; p < batch; ++p) {
      output(p, k) = sigmoid(detail::dot(w, hidden.row(p).data(), net.hidden_dim()));
    }
  }
  return output;
}

// Squared-error loss 0.5 * sum (output - target)^2 and its exact gradient.
inline BackpropResult backprop(const Mlp& net, std::span<const double> input, std::span<const double> target) {
  detail::check_input(net, input.size());
  if (target.size() != net.output_dim())
    throw Error(Errc::dimension,
                "target has " + std::to_string(target.size()) + " values, network outputs " + std::to_string(net.output_dim()));
  const ForwardResult fwd = forward(net, input);
  const std::size_t nh = net.hidden_dim(), no = net.output_dim(), ni = net.input_dim();

  BackpropResult r{{Matrix(nh, ni), std::vector<double>(nh, 0.0), Matrix(no, nh), std::vector<double>(no, 0.0)}, 0.0};
  std::vector<double> back(nh, 0.0);
  for (std::size_t k = 0; k < no; ++k) {
    const double err = fwd.output[k] - target[k];
    r.loss += err * err;
    const double d = err * fwd.output[k] * (1.0 - fwd.output[k]);
    const auto w = net.output_weights().row(k);
    auto g = r.gradients.output_weights.row(k);
    for (std::size_t j = 0; j < nh; ++j) {
      back[j] += d * w[j];
      g[j] = d * fwd.hidden[j];
    }
  }
  r.loss *= 0.5;
  for (std::size_t j = 0; j < nh; ++j) {
    const double d = back[j] * fwd.hidden[j] * (1.0 - fwd.hidden[j]);
    auto g = r.gradients.hidden_weights.row(j);
    for (std::size_t i = 0; i < ni; ++i) g[i] = d * input[i];
    r.gradients.hidden_bias[j] = d;
  }
  return r;
}

// theta <- theta - lr * gradient. The output bias is not a parameter and stays zero.
inline void apply_gradients(Mlp& net, const Gradients& g, double lr) {
  auto step = [lr](std::span<double> p, std::span<const double> d) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * d[i];
  };
  step(net.hidden_weights().data(), g.hidden_weights.data());
  step(net.hidden_bias(), g.hidden_bias);
  step(net.output_weights().data(), g.output_weights.data());
}

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Plain per-example SGD, one full sweep of the data per epoch.
inline TrainResult train_sgd(Mlp net, const TrainingSet& data, const TrainConfig& config,
                             const EpochCallback& on_epoch = {}) {
  if (config.epochs == 0) throw Error(Errc::invalid_argument, "epochs must be at least 1");
  if (!std::isfinite(config.learning_rate)) throw Error(Errc::invalid_argument, "learning rate must be finite");
  if (data.size() == 0) throw Error(Errc::invalid_argument, "training set is empty");
  detail::check_input(net, data.inputs.cols());
  if (data.targets.cols() != net.output_dim() || data.targets.rows() != data.inputs.rows())
    throw Error(Errc::dimension, "training targets do not match the network output");

  std::vector<double> hidden(net.hidden_dim()), output(net.output_dim()), delta(net.output_dim()), back(net.hidden_dim());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainResult result{std::move(net), {}};
  result.loss_history.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      total += detail::sgd_step(result.model, data.inputs.row(idx), data.targets.row(idx), config.learning_rate, hidden,
                                output, delta, back);
    }
    const double mean_loss = total / static_cast<double>(data.size());
    if (!std::isfinite(mean_loss) || !result.model.all_finite())
      throw Error(Errc::training_diverged, "non-finite parameters in epoch " + std::to_string(epoch + 1));
    result.loss_history.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch + 1, mean_loss);
  }
  return result;
}

// Model file: "CDT1", then little-endian u32 layer count, u32 sizes, f64 weights
// (row-major, layer by layer), f64 hidden biases, and a trailing u32 CRC-32 of
// everything between the magic and the CRC.
inline void save_model(const Mlp& net, const std::filesystem::path& path) {
  std::vector<unsigned char> payload;
  auto put32 = [&payload](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) payload.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  };
  auto put64 = [&payload](double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) payload.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  };
  put32(3);
  for (std::size_t s : net.layer_sizes()) put32(static_cast<std::uint32_t>(s));
  for (double v : net.hidden_weights().data()) put64(v);
  for (double v : net.output_weights().data()) put64(v);
  for (double v : net.hidden_bias()) put64(v);
  const auto crc = static_cast<std::uint32_t>(crc32(0L, payload.data(), static_cast<uInt>(payload.size())));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out.write("CDT1", 4);
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  const unsigned char tail[4] = {static_cast<unsigned char>(crc & 0xff), static_cast<unsigned char>((crc >> 8) & 0xff),
                                 static_cast<unsigned char>((crc >> 16) & 0xff), static_cast<unsigned char>(crc >> 24)};
  out.write(reinterpret_cast<const char*>(tail), 4);
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

inline Mlp load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 4 + 4 + 4 || std::memcmp(bytes.data(), "CDT1", 4) != 0)
    throw Error(Errc::format, "missing CDT1 magic" + where);

  const unsigned char* payload = bytes.data() + 4;
  const std::size_t payload_size = bytes.size() - 8;
  auto u32 = [](const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  };
  const std::uint32_t stored_crc = u32(bytes.data() + bytes.size() - 4);
  if (static_cast<std::uint32_t>(crc32(0L, payload, static_cast<uInt>(payload_size))) != stored_crc)
    throw Error(Errc::format, "checksum mismatch" + where);

  if (u32(payload) != 3) throw Error(Errc::unsupported, "only three-layer models are supported" + where);
  if (payload_size < 16) throw Error(Errc::format, "truncated header" + where);
  const std::size_t ni = u32(payload + 4), nh = u32(payload + 8), no = u32(payload + 12);
  const std::size_t count = nh * ni + no * nh + nh;
  if (payload_size != 16 + 8 * count) throw Error(Errc::format, "payload size does not match layer sizes" + where);

  Mlp net(ni, nh, no);
  const unsigned char* p = payload + 16;
  auto f64 = [&p]() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    return std::bit_cast<double>(v);
  };
  for (double& v : net.hidden_weights().data()) v = f64();
  for (double& v : net.output_weights().data()) v = f64();
  for (double& v : net.hidden_bias()) v = f64();
  if (!net.all_finite()) throw Error(Errc::format, "non-finite parameter" + where);
  return net;
}

}  // namespace cdt
