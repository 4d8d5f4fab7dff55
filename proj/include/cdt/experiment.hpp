#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cdt/audio_io.hpp"
#include "cdt/error.hpp"
#include "cdt/framing.hpp"
#include "cdt/metrics.hpp"
#include "cdt/mlp.hpp"
#include "cdt/resynth.hpp"
#include "cdt/scene.hpp"
#include "cdt/synthetic.hpp"

namespace cdt {

struct ExperimentConfig {
  SceneMode mode = SceneMode::monaural;
  std::uint32_t sample_rate = 4000;
  std::size_t window_len = 1000;
  std::size_t hop_train = 10;
  std::size_t hop_test = 1;
  std::size_t hidden_size = 2500;
  std::size_t epochs = 300;
  double learning_rate = 0.05;
  std::vector<std::size_t> n_list = {1, 2, 5, 10, 20, 50, 100};
  double perturb_fraction = 0.5;
  std::uint64_t seed = 0;
  std::size_t filter_len = kDefaultFilterLen;
  double train_seconds = 120.0;
  double test_seconds = 10.0;
  double azimuth_a_deg = 45.0;
  double azimuth_b_deg = -45.0;
  std::size_t threads = 1;

  void validate() const {
    if (window_len == 0 || hop_train == 0 || hop_test == 0 || hidden_size == 0 || epochs == 0)
      throw Error(Errc::invalid_argument, "window, hops, hidden size and epochs must be positive");
    if (hop_test != 1) throw Error(Errc::unsupported, "separation runs at hop 1 only");
    if (hop_train > window_len) throw Error(Errc::invalid_argument, "training hop exceeds the window length");
    if (n_list.empty()) throw Error(Errc::invalid_argument, "N list is empty");
    for (std::size_t i = 0; i < n_list.size(); ++i) {
      if (n_list[i] == 0 || (i > 0 && n_list[i] <= n_list[i - 1]))
        throw Error(Errc::invalid_argument, "N list must be positive and strictly increasing");
    }
  }
};

// Reduced sizes for minutes-scale runs on one core.
inline ExperimentConfig desk_preset(ExperimentConfig c = {}) {
  c.window_len = 128;
  c.hidden_size = 256;
  c.epochs = 50;
  c.train_seconds = 10.0;
  c.test_seconds = 5.0;
  return c;
}

// One contiguous stretch of a scene: normalized network-domain signals plus the raw
// mono stems used as evaluation references.
struct SceneSegment {
  AudioBuffer mixture;      // per-channel normalize_unit
  AudioBuffer target_a;     // normalize_unit of the stem
  AudioBuffer target_b;
  AudioBuffer reference_a;  // raw stem
  AudioBuffer reference_b;
  std::vector<NormalizationParams> mixture_params;
  AudioBuffer raw_mixture;
};

struct SceneSplit {
  SceneSegment train;
  SceneSegment test;
};

namespace detail {

inline AudioBuffer slice(const AudioBuffer& b, std::size_t first, std::size_t count) {
  std::vector<std::vector<double>> out;
  for (const auto& ch : b.channels()) out.emplace_back(ch.begin() + static_cast<std::ptrdiff_t>(first),
                                                       ch.begin() + static_cast<std::ptrdiff_t>(first + count));
  return AudioBuffer(std::move(out), b.sample_rate());
}

inline SceneSegment make_segment(const MixtureScene& scene, std::size_t first, std::size_t count) {
  SceneSegment seg;
  seg.raw_mixture = slice(scene.mixture, first, count);
  auto [mix, params] = normalize_channels(seg.raw_mixture);
  seg.mixture = std::move(mix);
  seg.mixture_params = std::move(params);
  seg.reference_a = slice(scene.reference_a, first, count);
  seg.reference_b = slice(scene.reference_b, first, count);
  seg.target_a = normalize_unit(seg.reference_a).first;
  seg.target_b = normalize_unit(seg.reference_b).first;
  return seg;
}

}  // namespace detail

// The first train_seconds form the training segment, the following test_seconds the
// held-out test segment. Each segment is normalized on its own.
inline SceneSplit split_scene(const MixtureScene& scene, double train_seconds, double test_seconds) {
  const std::uint32_t rate = scene.mixture.sample_rate();
  const auto n_train = static_cast<std::size_t>(std::llround(train_seconds * rate));
  const auto n_test = static_cast<std::size_t>(std::llround(test_seconds * rate));
  if (n_train == 0 || n_test == 0) throw Error(Errc::invalid_argument, "train and test durations must be positive");
  if (n_train + n_test > scene.mixture.length())
    throw Error(Errc::invalid_argument, "scene of " + std::to_string(scene.mixture.length()) +
                                            " samples is shorter than train + test (" +
                                            std::to_string(n_train + n_test) + ")");
  return {detail::make_segment(scene, 0, n_train), detail::make_segment(scene, n_train, n_test)};
}

inline TrainingSet make_training_set(const SceneSegment& seg, std::size_t window_len, std::size_t hop) {
  std::vector<FrameSet> mix;
  for (std::size_t c = 0; c < seg.mixture.num_channels(); ++c)
    mix.push_back(extract_frames(seg.mixture.channel(c), window_len, hop));
  return build_training_set(mix, extract_frames(seg.target_a.channel(0), window_len, hop),
                            extract_frames(seg.target_b.channel(0), window_len, hop));
}

// RMS-equalizes the voices and builds the monaural or binaural (synthetic HRIR) scene.
inline MixtureScene build_scene(const AudioBuffer& voice_a, const AudioBuffer& voice_b, const ExperimentConfig& cfg,
                                const HrirPair* hrir_a = nullptr, const HrirPair* hrir_b = nullptr) {
  auto [a, b] = equalize_rms(voice_a, voice_b);
  if (cfg.mode == SceneMode::monaural) return make_monaural_scene(a, b);
  const HrirPair ha = hrir_a ? *hrir_a : synth_hrir(cfg.azimuth_a_deg, a.sample_rate());
  const HrirPair hb = hrir_b ? *hrir_b : synth_hrir(cfg.azimuth_b_deg, a.sample_rate());
  return spatialize_and_mix(a, b, ha, hb);
}

// The standard synthetic talker pair: full harmonic series at 110 Hz (a) and 220 Hz (b),
// each under its own slow random envelope. Every partial of b coincides with an even
// partial of a, so the voices overlap in frequency.
inline std::pair<AudioBuffer, AudioBuffer> synthetic_voices(double seconds, std::uint32_t rate, std::uint64_t seed) {
  VoiceSpec a{110.0, false, 1.0, 1800.0, 0.5, 4.0, seed * 2 + 1};
  VoiceSpec b{220.0, false, 1.0, 1800.0, 0.5, 4.0, seed * 2 + 2};
  return {synth_voice(a, seconds, rate), synth_voice(b, seconds, rate)};
}

inline Mlp train_on_segment(const SceneSegment& seg, const ExperimentConfig& cfg, std::uint64_t seed,
                            std::vector<double>* loss_history = nullptr, const EpochCallback& on_epoch = {}) {
  const TrainingSet data = make_training_set(seg, cfg.window_len, cfg.hop_train);
  const std::size_t d_in = seg.mixture.num_channels() * cfg.window_len;
  Mlp net = init_mlp({d_in, cfg.hidden_size, 2 * cfg.window_len}, seed);
  TrainResult r = train_sgd(std::move(net), data, {cfg.epochs, cfg.learning_rate, seed, true}, on_epoch);
  if (loss_history) *loss_history = std::move(r.loss_history);
  return std::move(r.model);
}

struct EvaluatedSeparation {
  Separation separation;
  SeparationMetrics metrics;
};

inline EvaluatedSeparation separate_and_score(const Mlp& net, const SceneSegment& test, const ExperimentConfig& cfg,
                                              std::size_t n_passes, std::uint64_t seed) {
  ResynthesisConfig rc;
  rc.n_passes = n_passes;
  rc.perturb_fraction = cfg.perturb_fraction;
  rc.seed = seed;
  EvaluatedSeparation out{separate_signal(net, test.mixture, cfg.window_len, rc, cfg.threads), {}};
  const auto& a = out.separation.voice_a.channel(0);
  const auto& b = out.separation.voice_b.channel(0);
  out.metrics = bss_eval({{a.begin(), a.end()}, {b.begin(), b.end()}},
                         {{test.reference_a.channel(0).begin(), test.reference_a.channel(0).end()},
                          {test.reference_b.channel(0).begin(), test.reference_b.channel(0).end()}},
                         cfg.filter_len, n_passes);
  return out;
}

// Scores the raw mixture (first channel) as the estimate of both voices.
inline SeparationMetrics mixture_baseline(const SceneSegment& test, std::size_t filter_len) {
  const auto m = test.raw_mixture.channel(0);
  const std::vector<double> mix(m.begin(), m.end());
  return bss_eval({mix, mix},
                  {{test.reference_a.channel(0).begin(), test.reference_a.channel(0).end()},
                   {test.reference_b.channel(0).begin(), test.reference_b.channel(0).end()}},
                  filter_len, 0);
}

}  // namespace cdt
