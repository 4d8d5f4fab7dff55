#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cdt/error.hpp"
#include "cdt/matrix.hpp"

namespace cdt {

// Overlapping rectangular windows cut from one signal; frame i starts at i * hop.
struct FrameSet {
  Matrix frames;  // num_frames x window_len
  std::size_t window_len = 0;
  std::size_t hop = 1;
  std::size_t source_len = 0;

  std::size_t num_frames() const noexcept { return frames.rows(); }
  // Number of leading source samples touched by at least one frame.
  std::size_t covered_len() const noexcept { return frames.rows() == 0 ? 0 : (frames.rows() - 1) * hop + window_len; }

  friend bool operator==(const FrameSet&, const FrameSet&) = default;
};

// Network inputs (mixture windows) paired row-by-row with targets [voice_a | voice_b].
struct TrainingSet {
  Matrix inputs;
  Matrix targets;

  std::size_t size() const noexcept { return inputs.rows(); }
};

inline std::size_t frame_count(std::size_t source_len, std::size_t window_len, std::size_t hop) {
  if (window_len == 0 || hop == 0 || source_len < window_len) return 0;
  return (source_len - window_len) / hop + 1;
}

inline FrameSet extract_frames(std::span<const double> signal, std::size_t window_len, std::size_t hop) {
  if (window_len == 0) throw Error(Errc::invalid_argument, "window length must be at least 1");
  if (hop == 0) throw Error(Errc::invalid_argument, "hop must be at least 1");
  if (signal.size() < window_len)
    throw Error(Errc::invalid_argument, "signal of " + std::to_string(signal.size()) + " samples is shorter than the " +
                                            std::to_string(window_len) + "-sample window");
  const std::size_t n = frame_count(signal.size(), window_len, hop);
  FrameSet fs{Matrix(n, window_len), window_len, hop, signal.size()};
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = signal.subspan(i * hop, window_len);
    auto dst = fs.frames.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return fs;
}

// Places each frame at its offset and averages all contributions per sample.
// The output covers positions reached by at least one frame.
inline std::vector<double> overlap_add_average(const FrameSet& fs) {
  if (fs.num_frames() == 0) throw Error(Errc::invalid_argument, "cannot reconstruct from an empty frame set");
  if (fs.frames.cols() != fs.window_len || fs.hop == 0) throw Error(Errc::dimension, "inconsistent frame set");
  const std::size_t len = fs.covered_len();
  std::vector<double> sum(len, 0.0);
  std::vector<std::size_t> count(len, 0);
  for (std::size_t i = 0; i < fs.num_frames(); ++i) {
    const auto row = fs.frames.row(i);
    double* out = sum.data() + i * fs.hop;
    std::size_t* cnt = count.data() + i * fs.hop;
    for (std::size_t k = 0; k < fs.window_len; ++k) {
      out[k] += row[k];
      ++cnt[k];
    }
  }
  for (std::size_t t = 0; t < len; ++t) sum[t] /= static_cast<double>(count[t]);
  return sum;
}

inline std::vector<double> remove_dc(std::span<const double> signal) {
  if (signal.empty()) throw Error(Errc::invalid_argument, "cannot remove DC from an empty signal");
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= static_cast<double>(signal.size());
  std::vector<double> out(signal.begin(), signal.end());
  for (double& v : out) v -= mean;
  return out;
}

// One mixture frame set for monaural input, two (left, right) for binaural input.
inline TrainingSet build_training_set(std::span<const FrameSet> mixture, const FrameSet& voice_a,
                                      const FrameSet& voice_b) {
  if (mixture.empty() || mixture.size() > 2) throw Error(Errc::invalid_argument, "mixture must have 1 or 2 channels");
  const std::size_t n = voice_a.num_frames();
  const std::size_t w = voice_a.window_len;
  auto aligned = [&](const FrameSet& f) {
    return f.num_frames() == n && f.window_len == w && f.hop == voice_a.hop;
  };
  if (!aligned(voice_b)) throw Error(Errc::alignment, "voice frame sets do not line up");
  for (const FrameSet& m : mixture) {
    if (!aligned(m))
      throw Error(Errc::alignment, "mixture has " + std::to_string(m.num_frames()) + " frames, voices have " +
                                       std::to_string(n));
  }

  TrainingSet ts{Matrix(n, mixture.size() * w), Matrix(n, 2 * w)};
  for (std::size_t i = 0; i < n; ++i) {
    auto in = ts.inputs.row(i);
    for (std::size_t c = 0; c < mixture.size(); ++c) {
      const auto src = mixture[c].frames.row(i);
      std::copy(src.begin(), src.end(), in.begin() + static_cast<std::ptrdiff_t>(c * w));
    }
    auto out = ts.targets.row(i);
    const auto a = voice_a.frames.row(i);
    const auto b = voice_b.frames.row(i);
    std::copy(a.begin(), a.end(), out.begin());
    std::copy(b.begin(), b.end(), out.begin() + static_cast<std::ptrdiff_t>(w));
  }
  return ts;
}

inline TrainingSet build_training_set(const FrameSet& mixture, const FrameSet& voice_a, const FrameSet& voice_b) {
  return build_training_set(std::span<const FrameSet>(&mixture, 1), voice_a, voice_b);
}

}  // namespace cdt
