#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdt/audio_io.hpp"
#include "cdt/error.hpp"

namespace cdt {

// Per-ear impulse responses for one direction of incidence.
struct HrirPair {
  std::vector<double> left;
  std::vector<double> right;
  std::uint32_t sample_rate = 0;
  double azimuth_deg = 0.0;
};

enum class SceneMode { monaural, binaural };

// A two-talker mixture with its ground-truth mono stems. References are zero-padded
// to the mixture length so that frames cut at the same offsets line up.
struct MixtureScene {
  SceneMode mode = SceneMode::monaural;
  AudioBuffer mixture;
  AudioBuffer reference_a;
  AudioBuffer reference_b;
};

struct HrirModel {
  double head_radius_m = 0.0875;
  double ild_db = 6.0;
};

inline constexpr double kSpeedOfSound = 343.0;
inline constexpr std::size_t kFractionalDelayTaps = 33;
inline constexpr double kHeadShadowCutoffHz = 1200.0;

// Full linear convolution; output length x.size() + h.size() - 1.
inline std::vector<double> convolve(std::span<const double> x, std::span<const double> h) {
  if (x.empty() || h.empty()) return {};
  std::vector<double> y(x.size() + h.size() - 1, 0.0);
  for (std::size_t j = 0; j < h.size(); ++j) {
    const double hj = h[j];
    double* out = y.data() + j;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] += hj * x[i];
  }
  return y;
}

namespace detail {

inline void require_mono(const AudioBuffer& b, const char* what) {
  if (b.num_channels() != 1) throw Error(Errc::dimension, std::string(what) + " must be mono");
}

inline std::vector<double> padded(std::span<const double> x, std::size_t n) {
  std::vector<double> out(x.begin(), x.end());
  out.resize(std::max(n, out.size()), 0.0);
  return out;
}

// Hann-windowed sinc interpolator whose peak sits at `delay` samples.
inline std::vector<double> fractional_delay(double delay, std::size_t taps) {
  std::vector<double> h(taps);
  const double half_width = static_cast<double>(taps - 1) / 2.0 + 1.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i) - delay;
    const double sinc = std::abs(t) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * t) / (std::numbers::pi * t);
    const double window = std::abs(t) < half_width ? 0.5 + 0.5 * std::cos(std::numbers::pi * t / half_width) : 0.0;
    h[i] = sinc * window;
  }
  return h;
}

}  // namespace detail

// Scales b so that its RMS matches a's.
inline std::pair<AudioBuffer, AudioBuffer> equalize_rms(const AudioBuffer& a, const AudioBuffer& b) {
  detail::require_mono(a, "equalize_rms input a");
  detail::require_mono(b, "equalize_rms input b");
  if (a.sample_rate() != b.sample_rate()) throw Error(Errc::invalid_argument, "sample rates differ");
  const double ra = detail::rms(a.channel(0));
  const double rb = detail::rms(b.channel(0));
  if (!(ra > 0.0) || !(rb > 0.0)) throw Error(Errc::degenerate_signal, "cannot equalize a silent signal");
  const double gain = ra / rb;
  std::vector<double> scaled(b.channel(0).begin(), b.channel(0).end());
  for (double& v : scaled) v *= gain;
  return {a, AudioBuffer::mono(std::move(scaled), b.sample_rate())};
}

inline AudioBuffer mix_monaural(const AudioBuffer& a, const AudioBuffer& b) {
  detail::require_mono(a, "mix_monaural input a");
  detail::require_mono(b, "mix_monaural input b");
  if (a.sample_rate() != b.sample_rate()) throw Error(Errc::invalid_argument, "sample rates differ");
  const std::size_t n = std::max(a.length(), b.length());
  std::vector<double> y = detail::padded(a.channel(0), n);
  const auto xb = b.channel(0);
  for (std::size_t i = 0; i < xb.size(); ++i) y[i] += xb[i];
  return AudioBuffer::mono(std::move(y), a.sample_rate());
}

inline MixtureScene make_monaural_scene(const AudioBuffer& a, const AudioBuffer& b) {
  AudioBuffer mixture = mix_monaural(a, b);
  const std::size_t n = mixture.length();
  return {SceneMode::monaural, mixture, AudioBuffer::mono(detail::padded(a.channel(0), n), a.sample_rate()),
          AudioBuffer::mono(detail::padded(b.channel(0), n), b.sample_rate())};
}

// Spherical-head HRIR: Woodworth ITD split between the ears, broadband ILD, and a
// one-pole head-shadow lowpass on the far ear. Positive azimuth places the source on
// the right, so the right ear is the near ear.
inline HrirPair synth_hrir(double azimuth_deg, std::uint32_t sample_rate, const HrirModel& model = {}) {
  if (!(std::abs(azimuth_deg) <= 90.0)) throw Error(Errc::invalid_argument, "azimuth must lie in [-90, 90] degrees");
  if (sample_rate == 0) throw Error(Errc::invalid_argument, "sample rate must be positive");

  const double theta = std::abs(azimuth_deg) * std::numbers::pi / 180.0;
  const double itd_samples = model.head_radius_m / kSpeedOfSound * (std::sin(theta) + theta) * sample_rate;
  const double centre = static_cast<double>(kFractionalDelayTaps - 1) / 2.0;
  const double ild = model.ild_db * std::sin(theta) / 2.0;

  std::vector<double> near = detail::fractional_delay(centre - itd_samples / 2.0, kFractionalDelayTaps);
  std::vector<double> far = detail::fractional_delay(centre + itd_samples / 2.0, kFractionalDelayTaps);
  const double near_gain = std::pow(10.0, ild / 20.0);
  const double far_gain = std::pow(10.0, -ild / 20.0);
  for (double& v : near) v *= near_gain;
  for (double& v : far) v *= far_gain;

  if (theta > 0.0) {
    // One-pole lowpass y[n] = (1-p) x[n] + p y[n-1], tail kept until it decays below 1e-9.
    const double pole = std::exp(-2.0 * std::numbers::pi * kHeadShadowCutoffHz / sample_rate);
    std::size_t tail = 0;
    for (double g = 1.0; g > 1e-9 && tail < 4 * kFractionalDelayTaps; g *= pole) ++tail;
    far.resize(far.size() + tail, 0.0);
    double state = 0.0;
    for (double& v : far) {
      state = (1.0 - pole) * v + pole * state;
      v = state;
    }
    near.resize(far.size(), 0.0);
  }

  HrirPair pair{{}, {}, sample_rate, azimuth_deg};
  if (azimuth_deg >= 0.0) {
    pair.right = std::move(near);
    pair.left = std::move(far);
  } else {
    pair.left = std::move(near);
    pair.right = std::move(far);
  }
  return pair;
}

inline HrirPair load_hrir_pair(const std::filesystem::path& path_left, const std::filesystem::path& path_right,
                               std::uint32_t target_rate) {
  auto load = [target_rate](const std::filesystem::path& p) {
    AudioBuffer b = read_wav(p);
    if (b.num_channels() != 1) throw Error(Errc::unsupported, "HRIR file must be mono: " + p.string());
    if (b.sample_rate() != target_rate) b = decimate(b, target_rate);
    return std::vector<double>(b.channel(0).begin(), b.channel(0).end());
  };
  HrirPair pair{load(path_left), load(path_right), target_rate, 0.0};
  if (pair.left.empty() || pair.right.empty()) throw Error(Errc::format, "empty HRIR file");
  return pair;
}

inline MixtureScene spatialize_and_mix(const AudioBuffer& a, const AudioBuffer& b, const HrirPair& hrir_a,
                                       const HrirPair& hrir_b) {
  detail::require_mono(a, "spatialize_and_mix input a");
  detail::require_mono(b, "spatialize_and_mix input b");
  const std::uint32_t rate = a.sample_rate();
  if (b.sample_rate() != rate || hrir_a.sample_rate != rate || hrir_b.sample_rate != rate)
    throw Error(Errc::invalid_argument, "sample rates of voices and HRIRs differ");
  for (const HrirPair* h : {&hrir_a, &hrir_b}) {
    if (h->left.empty() || h->right.empty()) throw Error(Errc::invalid_argument, "empty HRIR");
  }

  const auto ears = [](std::span<const double> x, const HrirPair& h) {
    return std::pair{convolve(x, h.left), convolve(x, h.right)};
  };
  auto [al, ar] = ears(a.channel(0), hrir_a);
  auto [bl, br] = ears(b.channel(0), hrir_b);
  const std::size_t n = std::max({al.size(), ar.size(), bl.size(), br.size()});

  std::vector<double> left(n, 0.0), right(n, 0.0);
  for (std::size_t i = 0; i < al.size(); ++i) left[i] += al[i];
  for (std::size_t i = 0; i < bl.size(); ++i) left[i] += bl[i];
  for (std::size_t i = 0; i < ar.size(); ++i) right[i] += ar[i];
  for (std::size_t i = 0; i < br.size(); ++i) right[i] += br[i];

  return {SceneMode::binaural, AudioBuffer({std::move(left), std::move(right)}, rate),
          AudioBuffer::mono(detail::padded(a.channel(0), n), rate),
          AudioBuffer::mono(detail::padded(b.channel(0), n), rate)};
}

}  // namespace cdt
