#include "cdt/resynth.hpp"

#include "support.hpp"

namespace cdt {
namespace {

// Small fixed network with a 2W-wide output, so frames of any content pass through.
Mlp small_net(std::size_t w, std::uint64_t seed, std::size_t channels = 1) {
  return init_mlp({channels * w, 12, 2 * w}, seed);
}

AudioBuffer unit_signal(std::uint64_t seed, std::size_t n, std::size_t channels = 1) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> ch;
  for (std::size_t c = 0; c < channels; ++c) ch.push_back(test::uniform_vec(rng, n, 0.0, 1.0));
  return AudioBuffer(std::move(ch), 4000);
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

TEST(PerturbFrame, ZeroFractionIsIdentity) {
  std::mt19937_64 rng(1);
  const std::vector<double> frame = test::uniform_vec(rng, 50, 0.0, 1.0);
  ResynthesisConfig c;
  c.perturb_fraction = 0.0;
  EXPECT_EQ(perturb_frame(frame, c, rng), frame);
}

TEST(PerturbFrame, ExactlyHalfReplaced) {
  const std::vector<double> frame(1000, 2.0);  // outside [0, 1], so replaced entries are recognizable
  ResynthesisConfig c;
  c.perturb_mean = 0.4;
  c.perturb_std = 0.2;
  std::mt19937_64 rng = pass_stream(0, 0, 0);
  const std::vector<double> out = perturb_frame(frame, c, rng);
  const auto replaced = std::count_if(out.begin(), out.end(), [](double v) { return v != 2.0; });
  EXPECT_EQ(replaced, 500);
  for (double v : out) {
    if (v != 2.0) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(PerturbFrame, ZeroStdReplacesWithClippedMean) {
  const std::vector<double> frame(40, 0.25);
  ResynthesisConfig c;
  c.perturb_fraction = 0.75;
  c.perturb_mean = 1.7;
  c.perturb_std = 0.0;
  std::mt19937_64 rng(5);
  const std::vector<double> out = perturb_frame(frame, c, rng);
  EXPECT_EQ(std::count(out.begin(), out.end(), 1.0), 30);
  EXPECT_EQ(std::count(out.begin(), out.end(), 0.25), 10);
}

TEST(PerturbFrameProperty, ReplacedCountIsFloorFraction) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = test::uniform_size(rng, 1, 300);
    ResynthesisConfig c;
    c.perturb_fraction = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    c.perturb_mean = 0.5;
    c.perturb_std = 0.3;
    const std::vector<double> frame(dim, -1.0);
    const std::vector<double> out = perturb_frame(frame, c, rng);
    const auto replaced = static_cast<std::size_t>(std::count_if(out.begin(), out.end(), [](double v) { return v != -1.0; }));
    EXPECT_EQ(replaced, static_cast<std::size_t>(std::floor(c.perturb_fraction * static_cast<double>(dim))));
  }
}

TEST(CdtFrame, SinglePassWithoutPerturbationIsForward) {
  const Mlp net = small_net(6, 1);
  std::mt19937_64 rng(3);
  const std::vector<double> frame = test::uniform_vec(rng, 6, 0.0, 1.0);
  ResynthesisConfig c;
  c.n_passes = 1;
  c.perturb_fraction = 0.0;
  const auto [a, b] = cdt_frame(net, frame, c, 0);
  const std::vector<double> out = forward(net, frame).output;
  EXPECT_EQ(a, std::vector<double>(out.begin(), out.begin() + 6));
  EXPECT_EQ(b, std::vector<double>(out.begin() + 6, out.end()));
}

TEST(CdtFrame, ZeroNetworkGivesHalf) {
  const Mlp net(8, 3, 16);
  for (std::size_t n : {1u, 7u}) {
    ResynthesisConfig c;
    c.n_passes = n;
    const auto [a, b] = cdt_frame(net, std::vector<double>(8, 0.3), c, 4);
    for (double v : a) EXPECT_EQ(v, 0.5);
    for (double v : b) EXPECT_EQ(v, 0.5);
  }
}

TEST(CdtFrame, MeanOfIndependentlyRecomputedPasses) {
  const Mlp net = small_net(10, 2);
  std::mt19937_64 rng(4);
  const std::vector<double> frame = test::uniform_vec(rng, 10, 0.0, 1.0);
  ResynthesisConfig c;
  c.n_passes = 4;
  c.perturb_mean = 0.5;
  c.perturb_std = 0.25;
  c.seed = 99;
  const std::size_t frame_index = 17;
  const auto [a, b] = cdt_frame(net, frame, c, frame_index);

  std::vector<double> sum(20, 0.0);
  for (std::size_t p = 0; p < 4; ++p) {
    std::mt19937_64 stream = pass_stream(99, frame_index, p);
    const std::vector<double> out = forward(net, perturb_frame(frame, c, stream)).output;
    for (std::size_t k = 0; k < 20; ++k) sum[k] += out[k];
  }
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_NEAR(a[k], sum[k] / 4.0, 1e-15);
    EXPECT_NEAR(b[k], sum[10 + k] / 4.0, 1e-15);
  }
}

TEST(CdtFrame, NoPerturbationIsIndependentOfN) {
  const Mlp net = small_net(5, 3);
  const std::vector<double> frame{0.1, 0.4, 0.9, 0.2, 0.6};
  ResynthesisConfig c;
  c.perturb_fraction = 0.0;
  c.n_passes = 1;
  const auto one = cdt_frame(net, frame, c, 0);
  for (std::size_t n : {2u, 3u, 8u}) {
    c.n_passes = n;
    const auto many = cdt_frame(net, frame, c, 0);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_NEAR(many.first[k], one.first[k], 1e-15);
      EXPECT_NEAR(many.second[k], one.second[k], 1e-15);
    }
  }
}

TEST(CdtFrame, DimensionMismatch) {
  ResynthesisConfig c;
  c.n_passes = 1;
  EXPECT_THROW(cdt_frame(small_net(4, 1), std::vector<double>(5, 0.5), c, 0), Error);
}

TEST(InvariantCorrection, Examples) {
  FrameSet same{Matrix(3, 2), 2, 1, 4};
  for (double& v : same.frames.data()) v = 0.75;
  const FrameSet zeroed = invariant_correction(same);
  for (double v : zeroed.frames.data()) EXPECT_EQ(v, 0.0);

  FrameSet two{Matrix(2, 2), 2, 1, 3};
  two.frames(1, 0) = two.frames(1, 1) = 2.0;
  const FrameSet c = invariant_correction(two);
  EXPECT_EQ(c.frames(0, 0), -1.0);
  EXPECT_EQ(c.frames(0, 1), -1.0);
  EXPECT_EQ(c.frames(1, 0), 1.0);
  EXPECT_EQ(c.frames(1, 1), 1.0);
  EXPECT_EQ(invariant_correction(c), c);
}

TEST(SeparateSignal, ZeroNetworkGivesSilence) {
  const Mlp net(16, 4, 32);
  ResynthesisConfig c;
  c.n_passes = 3;
  const Separation s = separate_signal(net, unit_signal(1, 200), 16, c);
  for (double v : s.voice_a.channel(0)) EXPECT_EQ(v, 0.0);
  for (double v : s.voice_b.channel(0)) EXPECT_EQ(v, 0.0);
}

TEST(SeparateSignal, IdentityNetworkReproducesMixture) {
  // Hidden unit j sees sigmoid(g (x_j - 0.5)); hidden unit W is pinned at 1 and acts as
  // an output offset. Every output then sits on the linear stretch of the sigmoid:
  // o = 0.5 + s (x - 0.5) / 4 up to a cubic term, for both voices.
  const std::size_t w = 8;
  const double g = 0.01, s = 0.01, a = 4.0 * s / g;
  Mlp net(w, w + 1, 2 * w);
  for (std::size_t j = 0; j < w; ++j) {
    net.hidden_weights()(j, j) = g;
    net.hidden_bias()[j] = -0.5 * g;
    for (std::size_t k : {j, w + j}) {
      net.output_weights()(k, j) = a;
      net.output_weights()(k, w) = -0.5 * a;
    }
  }
  net.hidden_bias()[w] = 40.0;

  const AudioBuffer mix = unit_signal(2, 2000);
  ResynthesisConfig c;
  c.n_passes = 1;
  c.perturb_fraction = 0.0;
  const Separation sep = separate_signal(net, mix, w, c);
  const std::vector<double> want = remove_dc(mix.channel(0));
  double err = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) err = std::max(err, std::abs(sep.voice_a.channel(0)[i] * 4.0 / s - want[i]));
  EXPECT_LT(err, 0.01);
  EXPECT_EQ(vec(sep.voice_a.channel(0)), vec(sep.voice_b.channel(0)));
}

TEST(SeparateSignal, FrameCountAndLength) {
  const Mlp net(50, 2, 100);
  ResynthesisConfig c;
  c.n_passes = 1;
  const Separation s = separate_signal(net, unit_signal(3, 400), 50, c);
  EXPECT_EQ(s.frames_processed, 351u);
  EXPECT_EQ(s.voice_a.length(), 400u);
  EXPECT_THROW(separate_signal(net, unit_signal(3, 40), 50, c), Error);
}

TEST(SeparateSignal, OutputsAreZeroMean) {
  ResynthesisConfig c;
  c.n_passes = 5;
  const Separation s = separate_signal(small_net(12, 4, 2), unit_signal(4, 300, 2), 12, c);
  for (const AudioBuffer* b : {&s.voice_a, &s.voice_b}) {
    double m = 0.0;
    for (double v : b->channel(0)) m += v;
    EXPECT_NEAR(m / static_cast<double>(b->length()), 0.0, 1e-12);
  }
}

TEST(SeparateSignal, ThreadCountDoesNotChangeResult) {
  const Mlp net = small_net(10, 5, 2);
  const AudioBuffer mix = unit_signal(5, 260, 2);
  ResynthesisConfig c;
  c.n_passes = 6;
  c.seed = 3;
  const Separation one = separate_signal(net, mix, 10, c, 1);
  for (std::size_t t : {2u, 3u, 8u}) {
    const Separation many = separate_signal(net, mix, 10, c, t);
    EXPECT_EQ(many.voice_a, one.voice_a);
    EXPECT_EQ(many.voice_b, one.voice_b);
  }
}

TEST(SeparateSignal, SeedChangesResult) {
  const Mlp net = small_net(10, 6);
  const AudioBuffer mix = unit_signal(6, 100);
  ResynthesisConfig c;
  c.n_passes = 2;
  c.seed = 1;
  const Separation a = separate_signal(net, mix, 10, c);
  c.seed = 2;
  EXPECT_NE(separate_signal(net, mix, 10, c).voice_a, a.voice_a);
  c.seed = 1;
  EXPECT_EQ(separate_signal(net, mix, 10, c).voice_a, a.voice_a);
}

TEST(ResynthProperty, MonteCarloSpreadShrinksWithN) {
  // Per-sample estimates across 10 seeds: the spread at N=64 must be well below N=16.
  const Mlp net = small_net(16, 7);
  const AudioBuffer mix = unit_signal(7, 80);
  auto spread = [&](std::size_t n) {
    std::vector<std::vector<double>> runs;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ResynthesisConfig c;
      c.n_passes = n;
      c.seed = seed;
      runs.push_back(vec(separate_signal(net, mix, 16, c).voice_a.channel(0)));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < runs[0].size(); ++i) {
      double m = 0.0, ss = 0.0;
      for (const auto& r : runs) m += r[i];
      m /= 10.0;
      for (const auto& r : runs) ss += (r[i] - m) * (r[i] - m);
      total += std::sqrt(ss / 9.0);
    }
    return total / static_cast<double>(runs[0].size());
  };
  EXPECT_LT(spread(64), 0.6 * spread(16));
}

}  // namespace
}  // namespace cdt
