#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cdt/audio_io.hpp"
#include "cdt/error.hpp"
#include "cdt/framing.hpp"
#include "cdt/matrix.hpp"
#include "cdt/mlp.hpp"

namespace cdt {

struct ResynthesisConfig {
  std::size_t n_passes = 100;
  double perturb_fraction = 0.5;
  // Statistics of the replacement values; separate_signal() fills unset values from the mixture.
  std::optional<double> perturb_mean;
  std::optional<double> perturb_std;
  std::uint64_t seed = 0;
};

// Per-voice frame estimates after probabilistic re-synthesis (hop 1 in the test protocol).
struct SeparatedFrames {
  FrameSet voice_a;
  FrameSet voice_b;
};

struct Separation {
  AudioBuffer voice_a;
  AudioBuffer voice_b;
  std::size_t frames_processed = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline void validate(const ResynthesisConfig& c) {
  if (c.n_passes == 0) throw Error(Errc::invalid_argument, "number of passes must be at least 1");
  if (!(c.perturb_fraction >= 0.0 && c.perturb_fraction <= 1.0))
    throw Error(Errc::invalid_argument, "perturbation fraction must lie in [0, 1]");
  if (c.perturb_std && !(*c.perturb_std >= 0.0)) throw Error(Errc::invalid_argument, "perturbation std must be >= 0");
}

}  // namespace detail

// Random stream of pass `pass` on frame `frame_index`. Streams depend only on these
// counters, so frames and passes can be evaluated in any order or on any thread.
inline std::mt19937_64 pass_stream(std::uint64_t seed, std::uint64_t frame_index, std::uint64_t pass) {
  using detail::splitmix64;
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ frame_index) ^ pass));
}

inline std::size_t perturbed_count(double fraction, std::size_t dim) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(dim)));
}

// Replaces floor(fraction * dim) distinct, uniformly chosen positions with
// Normal(mean, std) draws clipped to [0, 1].
inline std::vector<double> perturb_frame(std::span<const double> frame, const ResynthesisConfig& config,
                                         std::mt19937_64& rng) {
  std::vector<double> out(frame.begin(), frame.end());
  const std::size_t k = perturbed_count(config.perturb_fraction, out.size());
  if (k == 0) return out;

  std::vector<std::size_t> positions(out.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, positions.size() - 1);
    std::swap(positions[i], positions[pick(rng)]);
  }
  const double mean = config.perturb_mean.value_or(0.5);
  const double std_dev = config.perturb_std.value_or(0.0);
  std::normal_distribution<double> value(mean, std_dev > 0.0 ? std_dev : 1.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double v = std_dev > 0.0 ? value(rng) : mean;
    out[positions[i]] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

namespace detail {

// Writes the N perturbed copies of `frame` into rows [row0, row0 + N) of `batch`.
inline void fill_passes(Matrix& batch, std::size_t row0, std::span<const double> frame, const ResynthesisConfig& config,
                        std::size_t frame_index) {
  for (std::size_t p = 0; p < config.n_passes; ++p) {
    std::mt19937_64 rng = pass_stream(config.seed, frame_index, p);
    const std::vector<double> x = perturb_frame(frame, config, rng);
    std::copy(x.begin(), x.end(), batch.row(row0 + p).begin());
  }
}

// Averages output rows [row0, row0 + N) in pass order and splits them into the two voices.
inline void average_passes(const Matrix& out, std::size_t row0, std::size_t n, std::span<double> a,
                           std::span<double> b) {
  const std::size_t w = a.size();
  std::fill(a.begin(), a.end(), 0.0);
  std::fill(b.begin(), b.end(), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    const auto y = out.row(row0 + p);
    for (std::size_t k = 0; k < w; ++k) {
      a[k] += y[k];
      b[k] += y[w + k];
    }
  }
  for (std::size_t k = 0; k < w; ++k) {
    a[k] /= static_cast<double>(n);
    b[k] /= static_cast<double>(n);
  }
}

// Re-synthesizes frames [first, last) of `inputs` into the matching rows of `sep`.
// Several frames share one forward batch; per-row results do not depend on batching.
inline void resynthesize_range(const Mlp& net, const Matrix& inputs, const ResynthesisConfig& config,
                               std::size_t first, std::size_t last, SeparatedFrames& sep) {
  const std::size_t n = config.n_passes;
  const std::size_t block = std::max<std::size_t>(1, 128 / n);
  for (std::size_t start = first; start < last; start += block) {
    const std::size_t stop = std::min(last, start + block);
    Matrix batch((stop - start) * n, net.input_dim());
    for (std::size_t f = start; f < stop; ++f) fill_passes(batch, (f - start) * n, inputs.row(f), config, f);
    const Matrix out = forward_batch(net, batch);
    for (std::size_t f = start; f < stop; ++f)
      average_passes(out, (f - start) * n, n, sep.voice_a.frames.row(f), sep.voice_b.frames.row(f));
  }
}

inline void check_network(const Mlp& net, std::size_t input_dim) {
  check_input(net, input_dim);
  if (net.output_dim() % 2 != 0) throw Error(Errc::dimension, "network output must hold two equal-length voices");
}

}  // namespace detail

// Probabilistic estimate of one frame: the mean over N perturbed forward passes,
// split into [0, W) for voice a and [W, 2W) for voice b.
inline std::pair<std::vector<double>, std::vector<double>> cdt_frame(const Mlp& net, std::span<const double> frame,
                                                                     const ResynthesisConfig& config,
                                                                     std::size_t frame_index) {
  detail::validate(config);
  detail::check_network(net, frame.size());
  const std::size_t w = net.output_dim() / 2;
  Matrix batch(config.n_passes, frame.size());
  detail::fill_passes(batch, 0, frame, config, frame_index);
  const Matrix out = forward_batch(net, batch);
  std::vector<double> a(w), b(w);
  detail::average_passes(out, 0, config.n_passes, a, b);
  return {std::move(a), std::move(b)};
}

// Subtracts the across-set mean frame from every frame.
inline FrameSet invariant_correction(const FrameSet& frames) {
  if (frames.num_frames() == 0) throw Error(Errc::invalid_argument, "cannot correct an empty frame set");
  const std::size_t w = frames.frames.cols();
  std::vector<double> mean(w, 0.0);
  for (std::size_t i = 0; i < frames.num_frames(); ++i) {
    const auto row = frames.frames.row(i);
    for (std::size_t k = 0; k < w; ++k) mean[k] += row[k];
  }
  for (double& m : mean) m /= static_cast<double>(frames.num_frames());
  FrameSet out = frames;
  for (std::size_t i = 0; i < out.num_frames(); ++i) {
    auto row = out.frames.row(i);
    for (std::size_t k = 0; k < w; ++k) row[k] -= mean[k];
  }
  return out;
}

// Mean and population standard deviation over every sample of every channel.
inline std::pair<double, double> signal_statistics(const AudioBuffer& buffer) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& ch : buffer.channels()) {
    for (double v : ch) sum += v;
    count += ch.size();
  }
  const double mean = count ? sum / static_cast<double>(count) : 0.0;
  double ss = 0.0;
  for (const auto& ch : buffer.channels()) {
    for (double v : ch) ss += (v - mean) * (v - mean);
  }
  return {mean, count ? std::sqrt(ss / static_cast<double>(count)) : 0.0};
}

// Frames the mixture with hop 1 (stereo frames are [left | right]) and re-synthesizes
// every frame. Frames are distributed over `threads` workers; results do not depend
// on the thread count.
inline SeparatedFrames resynthesize_frames(const Mlp& net, const AudioBuffer& mixture, std::size_t window_len,
                                           const ResynthesisConfig& config, std::size_t threads = 1) {
  detail::validate(config);
  if (mixture.num_channels() > 2) throw Error(Errc::unsupported, "mixture must be mono or stereo");
  if (mixture.length() < window_len)
    throw Error(Errc::invalid_argument, "mixture of " + std::to_string(mixture.length()) +
                                            " samples is shorter than the window");
  detail::check_network(net, mixture.num_channels() * window_len);
  if (net.output_dim() != 2 * window_len) throw Error(Errc::dimension, "network output must be twice the window");

  std::vector<FrameSet> channel_frames;
  for (std::size_t c = 0; c < mixture.num_channels(); ++c)
    channel_frames.push_back(extract_frames(mixture.channel(c), window_len, 1));
  const std::size_t n = channel_frames.front().num_frames();
  Matrix inputs(n, net.input_dim());
  for (std::size_t i = 0; i < n; ++i) {
    auto row = inputs.row(i);
    for (std::size_t c = 0; c < channel_frames.size(); ++c) {
      const auto src = channel_frames[c].frames.row(i);
      std::copy(src.begin(), src.end(), row.begin() + static_cast<std::ptrdiff_t>(c * window_len));
    }
  }

  SeparatedFrames sep{{Matrix(n, window_len), window_len, 1, mixture.length()},
                      {Matrix(n, window_len), window_len, 1, mixture.length()}};
  threads = std::clamp<std::size_t>(threads, 1, n);
  if (threads == 1) {
    detail::resynthesize_range(net, inputs, config, 0, n, sep);
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t first = t * chunk, last = std::min(n, first + chunk);
      if (first >= last) break;
      workers.emplace_back([&, first, last] { detail::resynthesize_range(net, inputs, config, first, last, sep); });
    }
  }
  return sep;
}

// Full separation: re-synthesis, invariant correction, averaged overlap-add and DC
// removal for each voice. The mixture must already be normalized to [0, 1].
inline Separation separate_signal(const Mlp& net, const AudioBuffer& mixture, std::size_t window_len,
                                  ResynthesisConfig config, std::size_t threads = 1) {
  if (!config.perturb_mean || !config.perturb_std) {
    const auto [mean, std_dev] = signal_statistics(mixture);
    if (!config.perturb_mean) config.perturb_mean = mean;
    if (!config.perturb_std) config.perturb_std = std_dev;
  }
  const SeparatedFrames sep = resynthesize_frames(net, mixture, window_len, config, threads);
  auto finish = [&](const FrameSet& frames) {
    return AudioBuffer::mono(remove_dc(overlap_add_average(invariant_correction(frames))), mixture.sample_rate());
  };
  return {finish(sep.voice_a), finish(sep.voice_b), sep.voice_a.num_frames()};
}

}  // namespace cdt
