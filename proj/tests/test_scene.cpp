#include "cdt/scene.hpp"

#include <numbers>

#include "support.hpp"

namespace cdt {
namespace {

using test::TempDir;

AudioBuffer noise(std::uint64_t seed, std::size_t n, std::uint32_t rate = 4000) {
  std::mt19937_64 rng(seed);
  return AudioBuffer::mono(test::uniform_vec(rng, n), rate);
}

double rms(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

HrirPair impulse_pair(std::size_t left_lag = 0, std::size_t right_lag = 0, std::uint32_t rate = 4000) {
  HrirPair h{std::vector<double>(left_lag + 1, 0.0), std::vector<double>(right_lag + 1, 0.0), rate, 0.0};
  h.left.back() = 1.0;
  h.right.back() = 1.0;
  return h;
}

// Lag (right relative to left, in samples) maximizing the interaural cross-correlation.
int xcorr_peak_lag(std::span<const double> left, std::span<const double> right, int max_lag) {
  int best = 0;
  double best_v = -1e300;
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double s = 0.0;
    for (std::size_t i = 0; i < left.size(); ++i) {
      const auto j = static_cast<std::ptrdiff_t>(i) + lag;
      if (j >= 0 && j < static_cast<std::ptrdiff_t>(right.size())) s += left[i] * right[static_cast<std::size_t>(j)];
    }
    if (s > best_v) best_v = s, best = lag;
  }
  return best;
}

TEST(EqualizeRms, Examples) {
  auto [a, b] = equalize_rms(AudioBuffer::mono({1.0, -1.0, 1.0, -1.0}, 4000), AudioBuffer::mono({2.0, -2.0, 2.0, -2.0}, 4000));
  EXPECT_EQ(b.channel(0)[0], 1.0);
  EXPECT_EQ(a.channel(0)[0], 1.0);

  const AudioBuffer x = noise(1, 100);
  auto [x1, x2] = equalize_rms(x, x);
  EXPECT_EQ(x1, x);
  EXPECT_EQ(x2, x);
}

TEST(EqualizeRms, MatchesRms) {
  // Square waves of RMS 0.3 and 0.1.
  std::vector<double> a(200), b(200);
  for (std::size_t i = 0; i < 200; ++i) {
    a[i] = i % 2 ? 0.3 : -0.3;
    b[i] = i % 4 < 2 ? 0.1 : -0.1;
  }
  auto [ea, eb] = equalize_rms(AudioBuffer::mono(a, 4000), AudioBuffer::mono(b, 4000));
  for (std::size_t i = 0; i < 200; ++i) EXPECT_NEAR(eb.channel(0)[i], 3.0 * b[i], 1e-15);
  EXPECT_NEAR(rms(eb.channel(0)), rms(ea.channel(0)), 1e-12);

  std::mt19937_64 rng(9);
  const AudioBuffer x = noise(10, 500), y = AudioBuffer::mono(test::uniform_vec(rng, 500, -0.01, 0.01), 4000);
  auto [ex, ey] = equalize_rms(x, y);
  EXPECT_NEAR(rms(ey.channel(0)), rms(ex.channel(0)), 1e-12);
}

TEST(EqualizeRms, SilentInput) {
  try {
    equalize_rms(noise(1, 10), AudioBuffer::mono(std::vector<double>(10, 0.0), 4000));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_signal);
  }
}

TEST(MixMonaural, Examples) {
  EXPECT_EQ(vec(mix_monaural(AudioBuffer::mono({1, 0}, 4000), AudioBuffer::mono({0, 1}, 4000)).channel(0)),
            (std::vector<double>{1, 1}));
  const AudioBuffer x = noise(2, 50);
  EXPECT_EQ(mix_monaural(x, AudioBuffer::mono(std::vector<double>(50, 0.0), 4000)), x);
  std::vector<double> neg = vec(x.channel(0));
  for (double& v : neg) v = -v;
  const AudioBuffer cancelled = mix_monaural(x, AudioBuffer::mono(neg, 4000));
  for (double v : cancelled.channel(0)) EXPECT_EQ(v, 0.0);
}

TEST(MixMonaural, RateMismatch) {
  EXPECT_THROW(mix_monaural(AudioBuffer::mono({1}, 4000), AudioBuffer::mono({1}, 8000)), Error);
}

TEST(SynthHrir, FrontalIsSymmetric) {
  const HrirPair h = synth_hrir(0.0, 4000);
  EXPECT_EQ(h.left, h.right);
}

TEST(SynthHrir, MirrorImage) {
  const HrirPair p = synth_hrir(45.0, 4000), m = synth_hrir(-45.0, 4000);
  EXPECT_EQ(p.left, m.right);
  EXPECT_EQ(p.right, m.left);
}

TEST(SynthHrir, OutOfRange) { EXPECT_THROW(synth_hrir(120.0, 4000), Error); }

TEST(SynthHrir, ItdFromCrossCorrelation) {
  const double theta = std::numbers::pi / 4.0;
  const double tau = 0.0875 / 343.0 * (std::sin(theta) + theta);
  EXPECT_NEAR(tau, 3.807e-4, 1e-6);
  EXPECT_NEAR(tau * 4000.0, 1.523, 1e-3);

  for (double az : {20.0, 45.0, 70.0, 90.0}) {
    for (std::uint32_t rate : {4000u, 16000u}) {
      const double th = az * std::numbers::pi / 180.0;
      const double expected = 0.0875 / 343.0 * (std::sin(th) + th) * rate;
      const HrirPair h = synth_hrir(az, rate);
      const AudioBuffer burst = noise(3, 4000, rate);
      const MixtureScene s = spatialize_and_mix(burst, AudioBuffer::mono(std::vector<double>(4000, 0.0), rate), h,
                                                impulse_pair(0, 0, rate));
      // Source on the right: the left (far) ear lags, so left[i] matches right[i - itd].
      const int lag = -xcorr_peak_lag(s.mixture.channel(0), s.mixture.channel(1), 20);
      EXPECT_LE(std::abs(lag - std::lround(expected)), 1) << az << " deg at " << rate;
    }
  }
}

TEST(SynthHrir, NearEarIsLouder) {
  const HrirPair h = synth_hrir(45.0, 4000);
  EXPECT_GT(test::sum_sq(h.right), test::sum_sq(h.left));
}

TEST(LoadHrirPair, ImpulsesAndDelays) {
  TempDir dir("hrir");
  write_wav(AudioBuffer::mono({0, 0, 0, 1}, 4000), dir / "l.wav");
  write_wav(AudioBuffer::mono({1}, 4000), dir / "r.wav");
  const HrirPair h = load_hrir_pair(dir / "l.wav", dir / "r.wav", 4000);
  const AudioBuffer x = noise(4, 64);
  const MixtureScene s = spatialize_and_mix(x, AudioBuffer::mono(std::vector<double>(64, 0.0), 4000), h, impulse_pair());
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(s.mixture.channel(1)[i], x.channel(0)[i]);
    EXPECT_EQ(s.mixture.channel(0)[i + 3], x.channel(0)[i]);
  }
}

TEST(LoadHrirPair, DecimatesToTarget) {
  TempDir dir("hrir");
  std::vector<double> imp(256, 0.0);
  imp[0] = 1.0;
  write_wav(AudioBuffer::mono(imp, 16000), dir / "l.wav");
  write_wav(AudioBuffer::mono(imp, 16000), dir / "r.wav");
  const HrirPair h = load_hrir_pair(dir / "l.wav", dir / "r.wav", 4000);
  EXPECT_EQ(h.left.size(), 64u);
  EXPECT_EQ(h.sample_rate, 4000u);
  EXPECT_THROW(load_hrir_pair(dir / "l.wav", dir / "r.wav", 6000), Error);
}

TEST(Spatialize, UnitImpulsesReduceToMonaural) {
  const AudioBuffer a = noise(5, 300), b = noise(6, 300);
  const MixtureScene bin = spatialize_and_mix(a, b, impulse_pair(), impulse_pair());
  const AudioBuffer mono = mix_monaural(a, b);
  EXPECT_EQ(vec(bin.mixture.channel(0)), vec(mono.channel(0)));
  EXPECT_EQ(vec(bin.mixture.channel(1)), vec(mono.channel(0)));
  EXPECT_EQ(bin.mode, SceneMode::binaural);
}

TEST(Spatialize, DelayedImpulseExample) {
  const AudioBuffer a = noise(7, 40);
  const MixtureScene s = spatialize_and_mix(a, AudioBuffer::mono(std::vector<double>(40, 0.0), 4000), impulse_pair(0, 2),
                                            impulse_pair());
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_EQ(s.mixture.channel(0)[i], a.channel(0)[i]);
    EXPECT_EQ(s.mixture.channel(1)[i + 2], a.channel(0)[i]);
  }
}

TEST(Spatialize, RateMismatch) {
  HrirPair h = impulse_pair();
  h.sample_rate = 8000;
  EXPECT_THROW(spatialize_and_mix(noise(1, 10), noise(2, 10), h, impulse_pair()), Error);
}

TEST(SpatializeProperty, Linearity) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = test::uniform_size(rng, 1, 300);
    const double az = std::uniform_real_distribution<double>(-90.0, 90.0)(rng);
    const HrirPair h = synth_hrir(az, 4000);
    const AudioBuffer a = AudioBuffer::mono(test::uniform_vec(rng, n), 4000);
    const AudioBuffer b = AudioBuffer::mono(test::uniform_vec(rng, n), 4000);
    const AudioBuffer zero = AudioBuffer::mono(std::vector<double>(n, 0.0), 4000);
    const MixtureScene sum = spatialize_and_mix(mix_monaural(a, b), zero, h, h);
    const MixtureScene sa = spatialize_and_mix(a, zero, h, h);
    const MixtureScene sb = spatialize_and_mix(b, zero, h, h);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < sum.mixture.length(); ++i)
        EXPECT_NEAR(sum.mixture.channel(c)[i], sa.mixture.channel(c)[i] + sb.mixture.channel(c)[i], 1e-12);
    }
  }
}

TEST(Scene, ReferencesPaddedToMixtureLength) {
  const MixtureScene s = spatialize_and_mix(noise(1, 100), noise(2, 80), synth_hrir(45, 4000), synth_hrir(-45, 4000));
  EXPECT_EQ(s.reference_a.length(), s.mixture.length());
  EXPECT_EQ(s.reference_b.length(), s.mixture.length());
  EXPECT_EQ(s.reference_b.channel(0)[90], 0.0);
}

}  // namespace
}  // namespace cdt
