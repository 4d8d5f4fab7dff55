#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdt/error.hpp"

namespace cdt {

// Multichannel sampled signal. All channels share one length and every sample is finite.
class AudioBuffer {
 public:
  AudioBuffer() = default;

  AudioBuffer(std::vector<std::vector<double>> channels, std::uint32_t sample_rate)
      : channels_(std::move(channels)), sample_rate_(sample_rate) {
    validate();
  }

  static AudioBuffer mono(std::vector<double> samples, std::uint32_t sample_rate) {
    std::vector<std::vector<double>> ch;
    ch.push_back(std::move(samples));
    return AudioBuffer(std::move(ch), sample_rate);
  }

  std::size_t num_channels() const noexcept { return channels_.size(); }
  std::size_t length() const noexcept { return channels_.empty() ? 0 : channels_.front().size(); }
  std::uint32_t sample_rate() const noexcept { return sample_rate_; }

  std::span<const double> channel(std::size_t c) const { return channels_.at(c); }
  std::span<double> channel(std::size_t c) { return channels_.at(c); }

  const std::vector<std::vector<double>>& channels() const noexcept { return channels_; }

  // Re-checks the invariants after samples were modified through channel().
  void validate() const {
    if (channels_.empty()) throw Error(Errc::invalid_argument, "audio buffer needs at least one channel");
    if (sample_rate_ == 0) throw Error(Errc::invalid_argument, "sample rate must be positive");
    const std::size_t n = channels_.front().size();
    for (const auto& ch : channels_) {
      if (ch.size() != n) throw Error(Errc::dimension, "audio channels differ in length");
      for (double v : ch) {
        if (!std::isfinite(v)) throw Error(Errc::invalid_argument, "audio sample is not finite");
      }
    }
  }

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;

 private:
  std::vector<std::vector<double>> channels_;
  std::uint32_t sample_rate_ = 0;
};

// y = (x - offset) / scale + 0.5
struct NormalizationParams {
  double offset = 0.0;
  double scale = 1.0;
};

enum class WavEncoding { pcm16, float32 };

namespace detail {

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline double rms(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

constexpr std::uint16_t kWavePcm = 1;
constexpr std::uint16_t kWaveFloat = 3;
constexpr std::uint16_t kWaveExtensible = 0xFFFE;

}  // namespace detail

inline AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::string where = " in " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(Errc::format, "not a RIFF/WAVE file" + where);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw Error(Errc::format, "truncated fmt chunk" + where);
      format = detail::get_u16(bytes.data() + body);
      channels = detail::get_u16(bytes.data() + body + 2);
      rate = detail::get_u32(bytes.data() + body + 4);
      bits = detail::get_u16(bytes.data() + body + 14);
      if (format == detail::kWaveExtensible) {
        if (size < 40) throw Error(Errc::format, "truncated extensible fmt chunk" + where);
        format = detail::get_u16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || data == nullptr) throw Error(Errc::format, "missing fmt or data chunk" + where);
  if (channels == 0 || rate == 0) throw Error(Errc::format, "zero channels or sample rate" + where);

  const bool pcm16 = format == detail::kWavePcm && bits == 16;
  const bool f32 = format == detail::kWaveFloat && bits == 32;
  if (!pcm16 && !f32)
    throw Error(Errc::unsupported, "encoding " + std::to_string(format) + "/" + std::to_string(bits) + " bit" + where);
  if (channels > 2) throw Error(Errc::unsupported, std::to_string(channels) + " channels" + where);

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frames = data_size / (bytes_per_sample * channels);
  std::vector<std::vector<double>> out(channels, std::vector<double>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * channels + c) * bytes_per_sample;
      if (pcm16) {
        out[c][i] = static_cast<std::int16_t>(detail::get_u16(p)) / 32768.0;
      } else {
        out[c][i] = std::bit_cast<float>(detail::get_u32(p));
      }
    }
  }
  return AudioBuffer(std::move(out), rate);
}

// Writes the buffer and returns the number of samples that had to be clipped (pcm16 only).
inline std::size_t write_wav(const AudioBuffer& buffer, const std::filesystem::path& path,
                             WavEncoding encoding = WavEncoding::float32) {
  buffer.validate();
  const std::uint16_t channels = static_cast<std::uint16_t>(buffer.num_channels());
  const std::uint16_t bytes_per_sample = encoding == WavEncoding::pcm16 ? 2 : 4;
  const std::size_t frames = buffer.length();
  const std::uint32_t data_size = static_cast<std::uint32_t>(frames * channels * bytes_per_sample);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(out, 16);
  detail::put_u16(out, encoding == WavEncoding::pcm16 ? detail::kWavePcm : detail::kWaveFloat);
  detail::put_u16(out, channels);
  detail::put_u32(out, buffer.sample_rate());
  detail::put_u32(out, buffer.sample_rate() * channels * bytes_per_sample);
  detail::put_u16(out, static_cast<std::uint16_t>(channels * bytes_per_sample));
  detail::put_u16(out, static_cast<std::uint16_t>(8 * bytes_per_sample));
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(out, data_size);

  std::size_t clipped = 0;
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = buffer.channel(c)[i];
      if (encoding == WavEncoding::pcm16) {
        if (v > 1.0 || v < -1.0) ++clipped;
        const double scaled = std::round(std::clamp(v, -1.0, 1.0) * 32768.0);
        const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        detail::put_u16(out, static_cast<std::uint16_t>(q));
      } else {
        detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(Errc::io, "write failed for " + path.string());
  return clipped;
}

// Taps of the linear-phase anti-alias lowpass used by decimate(): Hann-windowed sinc,
// 160*factor+1 taps, cutoff at 0.975 of the output Nyquist frequency, unit DC gain.
inline std::vector<double> decimation_filter(std::size_t factor) {
  const std::size_t taps = 160 * factor + 1;
  const double cutoff = 0.975 * 0.5 / static_cast<double>(factor);  // cycles per input sample
  const double center = static_cast<double>(taps - 1) / 2.0;
  std::vector<double> h(taps);
  double sum = 0.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i) - center;
    const double ideal = t == 0.0 ? 2.0 * cutoff : std::sin(2.0 * std::numbers::pi * cutoff * t) / (std::numbers::pi * t);
    const double window = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(taps + 1));
    h[i] = ideal * window;
    sum += h[i];
  }
  for (double& v : h) v /= sum;
  return h;
}

inline AudioBuffer decimate(const AudioBuffer& buffer, std::uint32_t target_rate) {
  if (target_rate == 0 || buffer.sample_rate() % target_rate != 0)
    throw Error(Errc::unsupported,
                "cannot decimate " + std::to_string(buffer.sample_rate()) + " Hz to " + std::to_string(target_rate) + " Hz");
  const std::size_t factor = buffer.sample_rate() / target_rate;
  if (factor == 1) return buffer;

  const std::vector<double> h = decimation_filter(factor);
  const auto delay = static_cast<std::ptrdiff_t>((h.size() - 1) / 2);
  const std::size_t n = buffer.length();
  const std::size_t out_len = (n + factor - 1) / factor;

  std::vector<std::vector<double>> out(buffer.num_channels(), std::vector<double>(out_len));
  for (std::size_t c = 0; c < buffer.num_channels(); ++c) {
    const auto x = buffer.channel(c);
    for (std::size_t k = 0; k < out_len; ++k) {
      // y[k] = sum_j h[j] x[k*M + delay - j]
      const auto centre = static_cast<std::ptrdiff_t>(k * factor) + delay;
      double acc = 0.0;
      for (std::size_t j = 0; j < h.size(); ++j) {
        const std::ptrdiff_t idx = centre - static_cast<std::ptrdiff_t>(j);
        if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(n)) acc += h[j] * x[static_cast<std::size_t>(idx)];
      }
      out[c][k] = acc;
    }
  }
  return AudioBuffer(std::move(out), target_rate);
}

// Maps a mono signal into [0, 1] with mean 0.5: y = (x - mean) / (2 * peak deviation) + 0.5.
inline std::pair<AudioBuffer, NormalizationParams> normalize_unit(const AudioBuffer& buffer) {
  if (buffer.num_channels() != 1)
    throw Error(Errc::dimension, "normalize_unit expects a mono buffer; use normalize_channels");
  const auto x = buffer.channel(0);
  // Second pass on the residuals recovers digits lost when |mean| >> spread.
  double offset = detail::mean(x);
  double residual = 0.0;
  for (double v : x) residual += v - offset;
  offset += residual / static_cast<double>(x.size());
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v - offset));
  if (!(peak > 0.0)) throw Error(Errc::degenerate_signal, "cannot normalize a constant signal");

  const NormalizationParams params{offset, 2.0 * peak};
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::clamp((x[i] - offset) / params.scale + 0.5, 0.0, 1.0);
  return {AudioBuffer::mono(std::move(y), buffer.sample_rate()), params};
}

// Per-channel normalize_unit.
inline std::pair<AudioBuffer, std::vector<NormalizationParams>> normalize_channels(const AudioBuffer& buffer) {
  std::vector<std::vector<double>> out;
  std::vector<NormalizationParams> params;
  for (std::size_t c = 0; c < buffer.num_channels(); ++c) {
    const auto ch = buffer.channel(c);
    auto [norm, p] = normalize_unit(AudioBuffer::mono({ch.begin(), ch.end()}, buffer.sample_rate()));
    out.emplace_back(norm.channel(0).begin(), norm.channel(0).end());
    params.push_back(p);
  }
  return {AudioBuffer(std::move(out), buffer.sample_rate()), std::move(params)};
}

inline AudioBuffer denormalize(const AudioBuffer& buffer, const NormalizationParams& params) {
  if (!(params.scale > 0.0) || !std::isfinite(params.scale) || !std::isfinite(params.offset))
    throw Error(Errc::invalid_argument, "normalization scale must be positive and finite");
  std::vector<std::vector<double>> out;
  for (std::size_t c = 0; c < buffer.num_channels(); ++c) {
    const auto y = buffer.channel(c);
    std::vector<double> x(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) x[i] = (y[i] - 0.5) * params.scale + params.offset;
    out.push_back(std::move(x));
  }
  return AudioBuffer(std::move(out), buffer.sample_rate());
}

}  // namespace cdt
