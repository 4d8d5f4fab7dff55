#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "cdt/audio_io.hpp"

namespace cdt {

// Harmonic test "voice": a fixed-phase harmonic series under a slow random amplitude
// envelope. With odd_harmonics_only the series holds only odd multiples of f0.
struct VoiceSpec {
  double f0_hz = 110.0;
  bool odd_harmonics_only = false;
  double spectral_tilt = 1.0;       // partial k has amplitude k^-tilt
  double max_partial_hz = 1800.0;   // partials at or above this are omitted
  double envelope_min_hz = 0.5;     // envelope components are drawn from [min, max] Hz
  double envelope_max_hz = 4.0;
  std::uint64_t seed = 0;
};

inline AudioBuffer synth_voice(const VoiceSpec& spec, double seconds, std::uint32_t sample_rate) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> env_freq(spec.envelope_min_hz, spec.envelope_max_hz);

  struct Partial {
    double freq, amp, phase;
  };
  std::vector<Partial> partials;
  for (int k = 1; k * spec.f0_hz < spec.max_partial_hz; ++k) {
    if (spec.odd_harmonics_only && k % 2 == 0) continue;
    partials.push_back({k * spec.f0_hz, std::pow(static_cast<double>(k), -spec.spectral_tilt), phase(rng)});
  }
  constexpr int kEnvelopeTerms = 3;
  double env_f[kEnvelopeTerms], env_p[kEnvelopeTerms];
  for (int i = 0; i < kEnvelopeTerms; ++i) {
    env_f[i] = env_freq(rng);
    env_p[i] = phase(rng);
  }

  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double e = 0.0;
    for (int j = 0; j < kEnvelopeTerms; ++j) e += std::sin(2.0 * std::numbers::pi * env_f[j] * t + env_p[j]);
    // Map e in [-3, 3] onto a syllable-like envelope in [0, 1] that regularly dips near silence.
    const double u = 0.5 + e / 6.0;
    const double envelope = u * u;
    double s = 0.0;
    for (const Partial& p : partials) s += p.amp * std::sin(2.0 * std::numbers::pi * p.freq * t + p.phase);
    x[i] = envelope * s;
  }
  return AudioBuffer::mono(std::move(x), sample_rate);
}

}  // namespace cdt
