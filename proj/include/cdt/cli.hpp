#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cdt/audio_io.hpp"
#include "cdt/error.hpp"
#include "cdt/experiment.hpp"
#include "cdt/framing.hpp"
#include "cdt/metrics.hpp"
#include "cdt/mlp.hpp"
#include "cdt/resynth.hpp"
#include "cdt/scene.hpp"

namespace cdt {

namespace fs = std::filesystem;

namespace cli_detail {

// Thrown to report a failure in a named pipeline stage.
struct StageError {
  std::string stage;
  std::string message;
};

template <typename F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw StageError{name, e.what()};
  }
}

// `synth:+45` or `file:left.wav,right.wav`
inline HrirPair parse_hrir(const std::string& spec, std::uint32_t rate) {
  if (spec.rfind("synth:", 0) == 0) {
    std::size_t used = 0;
    const std::string angle = spec.substr(6);
    double az = 0.0;
    try {
      az = std::stod(angle, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != angle.size()) throw Error(Errc::invalid_argument, "bad HRIR azimuth in '" + spec + "'");
    return synth_hrir(az, rate);
  }
  if (spec.rfind("file:", 0) == 0) {
    const std::string rest = spec.substr(5);
    const auto comma = rest.find(',');
    if (comma == std::string::npos) throw Error(Errc::invalid_argument, "expected file:left.wav,right.wav");
    return load_hrir_pair(rest.substr(0, comma), rest.substr(comma + 1), rate);
  }
  throw Error(Errc::invalid_argument, "HRIR must be 'synth:<deg>' or 'file:<left>,<right>', got '" + spec + "'");
}

inline AudioBuffer load_mono_at(const fs::path& path, std::uint32_t rate) {
  AudioBuffer b = read_wav(path);
  if (b.num_channels() != 1) throw Error(Errc::unsupported, path.string() + " must be mono");
  return b.sample_rate() == rate ? b : decimate(b, rate);
}

inline std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

inline std::string loss_csv(const std::vector<double>& history) {
  std::ostringstream out;
  out << "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g\n", i + 1, history[i]);
    out << buf;
  }
  return out.str();
}

// Scales a zero-mean network-domain estimate back to the mixture's signal level.
inline AudioBuffer to_signal_level(const AudioBuffer& estimate, const std::vector<NormalizationParams>& params) {
  double scale = 0.0;
  for (const auto& p : params) scale += p.scale;
  scale /= static_cast<double>(params.size());
  std::vector<double> y = to_vector(estimate.channel(0));
  for (double& v : y) v *= scale;
  return AudioBuffer::mono(std::move(y), estimate.sample_rate());
}

struct Logger {
  std::ostream& err;
  void operator()(const std::string& stage, const std::string& msg) const { err << "[" << stage << "] " << msg << '\n'; }
};

// Fills options the user left unset with the reduced desk-scale sizes.
inline void apply_desk(const CLI::App& app, std::size_t& window, std::size_t& hidden, std::size_t& epochs) {
  const ExperimentConfig desk = desk_preset();
  if (app.count("--window") == 0) window = desk.window_len;
  if (app.count("--hidden") == 0) hidden = desk.hidden_size;
  if (app.count("--epochs") == 0) epochs = desk.epochs;
}

// Expands `--config FILE` into `--key=value` arguments placed right after the subcommand,
// skipping keys that are also given on the command line so flags win over the file.
inline std::vector<std::string> expand_config(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.size() < 2) return args;
  std::ifstream in(path);
  if (!in) return args;  // reported by the parser's own file check
  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(args.begin() + 2, args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  auto trim = [](std::string t) {
    const auto b = t.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    return t.substr(b, t.find_last_not_of(" \t\r") - b + 1);
  };
  std::vector<std::string> extra;
  for (std::string line; std::getline(in, line);) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key.empty() || key == "config" || given(key)) continue;
    extra.push_back("--" + key + (eq == std::string::npos ? "" : "=" + trim(line.substr(eq + 1))));
  }
  args.insert(args.begin() + 2, extra.begin(), extra.end());
  return args;
}

}  // namespace cli_detail

// Entry point of the `cdt` tool. Returns the process exit status; 0 iff every output was written.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  const Logger log{err};

  CLI::App app{"Time-domain two-talker separation with a convolutive deep transform", "cdt"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  std::string config_path;

  // mix -----------------------------------------------------------------------
  struct {
    std::string a, b, hrir_a, hrir_b, out_mixture, out_a, out_b, encoding = "float32";
    std::uint32_t rate = 4000;
  } mix;
  CLI::App* mix_cmd = app.add_subcommand("mix", "Build a monaural or binaural two-talker mixture and its reference stems");
  mix_cmd->add_option("--config", config_path, "Plain-text key = value file; flags override it")->check(CLI::ExistingFile);
  mix_cmd->add_option("--a", mix.a, "Voice a (mono WAV)")->required()->check(CLI::ExistingFile);
  mix_cmd->add_option("--b", mix.b, "Voice b (mono WAV)")->required()->check(CLI::ExistingFile);
  mix_cmd->add_option("--rate", mix.rate, "Output sample rate (integer divisor of the input rate)")->capture_default_str();
  mix_cmd->add_option("--hrir-a", mix.hrir_a, "HRIR for voice a: synth:<deg> or file:<left.wav>,<right.wav>");
  mix_cmd->add_option("--hrir-b", mix.hrir_b, "HRIR for voice b");
  mix_cmd->add_option("--out-mixture", mix.out_mixture, "Mixture WAV")->required();
  mix_cmd->add_option("--out-a", mix.out_a, "Reference stem a WAV")->required();
  mix_cmd->add_option("--out-b", mix.out_b, "Reference stem b WAV")->required();
  mix_cmd->add_option("--encoding", mix.encoding, "WAV encoding")->check(CLI::IsMember({"float32", "pcm16"}))->capture_default_str();

  // train ---------------------------------------------------------------------
  struct {
    std::string mixture, ref_a, ref_b, model, loss_csv;
    std::size_t window = 1000, hop = 10, hidden = 2500, epochs = 300;
    double lr = 0.05;
    std::uint64_t seed = 0;
    bool desk = false;
  } train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the separating autoencoder on windowed mixture/stem pairs");
  train_cmd->add_option("--config", config_path, "Plain-text key = value file; flags override it")->check(CLI::ExistingFile);
  train_cmd->add_option("--mixture", train.mixture, "Mixture WAV (mono or stereo)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--ref-a", train.ref_a, "Stem a WAV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--ref-b", train.ref_b, "Stem b WAV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--window", train.window, "Window length in samples")->capture_default_str();
  train_cmd->add_option("--hop", train.hop, "Hop between training windows")->capture_default_str();
  train_cmd->add_option("--hidden", train.hidden, "Hidden units")->capture_default_str();
  train_cmd->add_option("--epochs", train.epochs, "Full SGD sweeps")->capture_default_str();
  train_cmd->add_option("--lr", train.lr, "SGD learning rate")->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "Seed for initialization and shuffling")->capture_default_str();
  train_cmd->add_option("--model", train.model, "Output model file")->required();
  train_cmd->add_option("--loss-csv", train.loss_csv, "Per-epoch loss CSV");
  train_cmd->add_flag("--desk", train.desk, "Desk-scale sizes (window 128, hidden 256, 50 epochs) unless given");

  // separate ------------------------------------------------------------------
  struct {
    std::string model, mixture, out_a, out_b;
    std::size_t n = 100, threads = 1;
    double perturb = 0.5;
    std::uint64_t seed = 0;
  } sep;
  CLI::App* sep_cmd = app.add_subcommand("separate", "Separate a mixture by probabilistic re-synthesis");
  sep_cmd->add_option("--config", config_path, "Plain-text key = value file; flags override it")->check(CLI::ExistingFile);
  sep_cmd->add_option("--model", sep.model, "Model file")->required()->check(CLI::ExistingFile);
  sep_cmd->add_option("--mixture", sep.mixture, "Mixture WAV")->required()->check(CLI::ExistingFile);
  sep_cmd->add_option("--n", sep.n, "Perturbed passes per frame")->capture_default_str()->check(CLI::PositiveNumber);
  sep_cmd->add_option("--perturb", sep.perturb, "Fraction of samples replaced per pass")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  sep_cmd->add_option("--seed", sep.seed, "Perturbation seed")->capture_default_str();
  sep_cmd->add_option("--threads", sep.threads, "Worker threads (results do not depend on it)")->capture_default_str();
  sep_cmd->add_option("--out-a", sep.out_a, "Estimate a WAV")->required();
  sep_cmd->add_option("--out-b", sep.out_b, "Estimate b WAV")->required();

  // evaluate ------------------------------------------------------------------
  struct {
    std::string est_a, est_b, ref_a, ref_b, out;
    std::size_t filter_len = kDefaultFilterLen, n = 0;
  } eval;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Score estimates with SDR/SIR/SAR");
  eval_cmd->add_option("--config", config_path, "Plain-text key = value file; flags override it")->check(CLI::ExistingFile);
  eval_cmd->add_option("--est-a", eval.est_a, "Estimate a WAV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--est-b", eval.est_b, "Estimate b WAV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--ref-a", eval.ref_a, "Reference a WAV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--ref-b", eval.ref_b, "Reference b WAV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--filter-len", eval.filter_len, "Distortion filter taps")->capture_default_str()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--n", eval.n, "Value for the n_passes column")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Metrics CSV")->required();

  // spectrogram ---------------------------------------------------------------
  struct {
    std::string input, out, format;
    std::size_t channel = 0, fft_size = 256, hop = 64;
    double floor = -80.0, ceiling = 0.0;
  } spec;
  CLI::App* spec_cmd = app.add_subcommand("spectrogram", "Write a magnitude spectrogram as CSV or PGM");
  spec_cmd->add_option("--config", config_path, "Plain-text key = value file; flags override it")->check(CLI::ExistingFile);
  spec_cmd->add_option("--input", spec.input, "Input WAV")->required()->check(CLI::ExistingFile);
  spec_cmd->add_option("--channel", spec.channel, "Channel index")->capture_default_str();
  spec_cmd->add_option("--fft-size", spec.fft_size, "FFT size (power of two)")->capture_default_str();
  spec_cmd->add_option("--hop", spec.hop, "Hop between frames")->capture_default_str();
  spec_cmd->add_option("--format", spec.format, "csv or pgm (default: from the output extension)")->check(CLI::IsMember({"csv", "pgm"}));
  spec_cmd->add_option("--floor", spec.floor, "PGM floor in dB below the peak")->capture_default_str();
  spec_cmd->add_option("--ceiling", spec.ceiling, "PGM ceiling in dB relative to the peak")->capture_default_str();
  spec_cmd->add_option("--out", spec.out, "Output file")->required();

  // experiment ----------------------------------------------------------------
  ExperimentConfig exp;
  struct {
    std::string a, b, hrir_a, hrir_b, mode = "monaural", out_dir;
    bool desk = false;
    std::string n_list = "1,2,5,10,20,50,100";
  } expo;
  CLI::App* exp_cmd = app.add_subcommand("experiment", "mix -> train -> separate and evaluate for every N");
  exp_cmd->add_option("--config", config_path, "Plain-text key = value file; flags override it")->check(CLI::ExistingFile);
  exp_cmd->add_option("--a", expo.a, "Voice a (mono WAV); synthetic voices when omitted")->check(CLI::ExistingFile);
  exp_cmd->add_option("--b", expo.b, "Voice b (mono WAV)")->check(CLI::ExistingFile);
  exp_cmd->add_option("--mode", expo.mode, "monaural or binaural")->check(CLI::IsMember({"monaural", "binaural"}))->capture_default_str();
  exp_cmd->add_option("--hrir-a", expo.hrir_a, "HRIR for voice a (default synth:+45)");
  exp_cmd->add_option("--hrir-b", expo.hrir_b, "HRIR for voice b (default synth:-45)");
  exp_cmd->add_option("--rate", exp.sample_rate, "Working sample rate")->capture_default_str();
  exp_cmd->add_option("--train-seconds", exp.train_seconds, "Training audio length")->capture_default_str();
  exp_cmd->add_option("--test-seconds", exp.test_seconds, "Held-out test audio length")->capture_default_str();
  exp_cmd->add_option("--window", exp.window_len, "Window length in samples")->capture_default_str();
  exp_cmd->add_option("--hop", exp.hop_train, "Hop between training windows")->capture_default_str();
  exp_cmd->add_option("--hidden", exp.hidden_size, "Hidden units")->capture_default_str();
  exp_cmd->add_option("--epochs", exp.epochs, "Full SGD sweeps")->capture_default_str();
  exp_cmd->add_option("--lr", exp.learning_rate, "SGD learning rate")->capture_default_str();
  exp_cmd->add_option("--n-list", expo.n_list, "Comma-separated, strictly increasing N values")->capture_default_str();
  exp_cmd->add_option("--perturb", exp.perturb_fraction, "Fraction of samples replaced per pass")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  exp_cmd->add_option("--seed", exp.seed, "Seed for every randomized stage")->capture_default_str();
  exp_cmd->add_option("--filter-len", exp.filter_len, "BSS-EVAL filter taps")->capture_default_str();
  exp_cmd->add_option("--threads", exp.threads, "Worker threads for separation")->capture_default_str();
  exp_cmd->add_option("--out-dir", expo.out_dir, "Output directory")->required();
  exp_cmd->add_flag("--desk", expo.desk, "Desk-scale sizes (window 128, hidden 256, 50 epochs, 10 s training audio) unless given");

  std::vector<std::string> args = expand_config(argc, argv);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*mix_cmd) {
      const AudioBuffer a = stage("mix", [&] { return load_mono_at(mix.a, mix.rate); });
      const AudioBuffer b = stage("mix", [&] { return load_mono_at(mix.b, mix.rate); });
      const MixtureScene scene = stage("mix", [&] {
        auto [ea, eb] = equalize_rms(a, b);
        if (mix.hrir_a.empty() && mix.hrir_b.empty()) return make_monaural_scene(ea, eb);
        if (mix.hrir_a.empty() || mix.hrir_b.empty()) throw Error(Errc::invalid_argument, "binaural mixing needs both --hrir-a and --hrir-b");
        return spatialize_and_mix(ea, eb, parse_hrir(mix.hrir_a, mix.rate), parse_hrir(mix.hrir_b, mix.rate));
      });
      const WavEncoding enc = mix.encoding == "pcm16" ? WavEncoding::pcm16 : WavEncoding::float32;
      stage("mix", [&] {
        std::size_t clipped = write_wav(scene.mixture, mix.out_mixture, enc);
        clipped += write_wav(scene.reference_a, mix.out_a, enc);
        clipped += write_wav(scene.reference_b, mix.out_b, enc);
        if (clipped) log("mix", "clipped " + std::to_string(clipped) + " samples");
        return 0;
      });
      log("mix", std::string(scene.mode == SceneMode::binaural ? "binaural" : "monaural") + " mixture of " +
                     std::to_string(scene.mixture.length()) + " samples at " + std::to_string(mix.rate) + " Hz");
    } else if (*train_cmd) {
      if (train.desk) apply_desk(*train_cmd, train.window, train.hidden, train.epochs);
      const TrainingSet data = stage("train", [&] {
        const AudioBuffer mixture = read_wav(train.mixture);
        const AudioBuffer ra = read_wav(train.ref_a);
        const AudioBuffer rb = read_wav(train.ref_b);
        if (ra.num_channels() != 1 || rb.num_channels() != 1) throw Error(Errc::unsupported, "references must be mono");
        const auto [norm_mix, params] = normalize_channels(mixture);
        std::vector<FrameSet> mix_frames;
        for (std::size_t c = 0; c < norm_mix.num_channels(); ++c)
          mix_frames.push_back(extract_frames(norm_mix.channel(c), train.window, train.hop));
        return build_training_set(mix_frames, extract_frames(normalize_unit(ra).first.channel(0), train.window, train.hop),
                                  extract_frames(normalize_unit(rb).first.channel(0), train.window, train.hop));
      });
      log("train", "training frames: " + std::to_string(data.size()));
      std::vector<double> history;
      const Mlp model = stage("train", [&] {
        Mlp net = init_mlp({data.inputs.cols(), train.hidden, data.targets.cols()}, train.seed);
        TrainResult r = train_sgd(std::move(net), data, {train.epochs, train.lr, train.seed, true},
                                  [&](std::size_t e, double l) {
                                    char buf[80];
                                    std::snprintf(buf, sizeof buf, "epoch %zu loss %.6g", e, l);
                                    log("train", buf);
                                  });
        history = std::move(r.loss_history);
        return std::move(r.model);
      });
      stage("train", [&] {
        save_model(model, train.model);
        if (!train.loss_csv.empty()) write_text(train.loss_csv, loss_csv(history));
        return 0;
      });
    } else if (*sep_cmd) {
      const Mlp model = stage("separate", [&] { return load_model(sep.model); });
      const AudioBuffer mixture = stage("separate", [&] { return read_wav(sep.mixture); });
      const auto [norm_mix, params] = stage("separate", [&] { return normalize_channels(mixture); });
      const std::size_t window = model.output_dim() / 2;
      ResynthesisConfig rc;
      rc.n_passes = sep.n;
      rc.perturb_fraction = sep.perturb;
      rc.seed = sep.seed;
      const Separation result = stage("separate", [&] { return separate_signal(model, norm_mix, window, rc, sep.threads); });
      stage("separate", [&] {
        write_wav(to_signal_level(result.voice_a, params), sep.out_a);
        write_wav(to_signal_level(result.voice_b, params), sep.out_b);
        return 0;
      });
      log("separate", "processed " + std::to_string(result.frames_processed) + " frames with N=" + std::to_string(sep.n));
    } else if (*eval_cmd) {
      const SeparationMetrics m = stage("evaluate", [&] {
        std::vector<AudioBuffer> bufs;
        for (const auto* p : {&eval.est_a, &eval.est_b, &eval.ref_a, &eval.ref_b}) {
          bufs.push_back(read_wav(*p));
          if (bufs.back().num_channels() != 1) throw Error(Errc::unsupported, *p + " must be mono");
        }
        std::size_t n = bufs.front().length();
        for (const auto& b : bufs) n = std::min(n, b.length());
        auto first_n = [n](const AudioBuffer& b) { return to_vector(b.channel(0).first(n)); };
        return bss_eval({first_n(bufs[0]), first_n(bufs[1])}, {first_n(bufs[2]), first_n(bufs[3])}, eval.filter_len, eval.n);
      });
      stage("evaluate", [&] {
        std::ostringstream csv;
        write_metrics_csv(csv, m);
        write_text(eval.out, csv.str());
        return 0;
      });
    } else if (*spec_cmd) {
      stage("spectrogram", [&] {
        const AudioBuffer in = read_wav(spec.input);
        if (spec.channel >= in.num_channels()) throw Error(Errc::invalid_argument, "no channel " + std::to_string(spec.channel));
        const Matrix s = spectrogram(in.channel(spec.channel), spec.fft_size, spec.hop);
        std::string format = spec.format;
        if (format.empty()) format = fs::path(spec.out).extension() == ".pgm" ? "pgm" : "csv";
        if (format == "pgm") {
          double peak = -std::numeric_limits<double>::infinity();
          for (double v : s.data()) peak = std::max(peak, v);
          write_spectrogram_pgm(spec.out, s, peak + spec.floor, peak + spec.ceiling);
        } else {
          std::ostringstream csv;
          write_spectrogram_csv(csv, s);
          write_text(spec.out, csv.str());
        }
        return 0;
      });
    } else if (*exp_cmd) {
      if (expo.desk) {
        const ExperimentConfig desk = desk_preset();
        if (exp_cmd->count("--window") == 0) exp.window_len = desk.window_len;
        if (exp_cmd->count("--hidden") == 0) exp.hidden_size = desk.hidden_size;
        if (exp_cmd->count("--epochs") == 0) exp.epochs = desk.epochs;
        if (exp_cmd->count("--train-seconds") == 0) exp.train_seconds = desk.train_seconds;
        if (exp_cmd->count("--test-seconds") == 0) exp.test_seconds = desk.test_seconds;
      }
      exp.mode = expo.mode == "binaural" ? SceneMode::binaural : SceneMode::monaural;
      stage("experiment", [&] {
        exp.n_list.clear();
        std::stringstream ss(expo.n_list);
        for (std::string item; std::getline(ss, item, ',');) {
          std::size_t used = 0;
          const unsigned long long v = std::stoull(item, &used);
          if (used != item.size()) throw Error(Errc::invalid_argument, "bad --n-list entry '" + item + "'");
          exp.n_list.push_back(static_cast<std::size_t>(v));
        }
        exp.validate();
        return 0;
      });
      if (expo.a.empty() != expo.b.empty()) throw StageError{"experiment", "give both --a and --b, or neither"};

      const MixtureScene scene = stage("mix", [&] {
        AudioBuffer a, b;
        if (expo.a.empty()) {
          std::tie(a, b) = synthetic_voices(exp.train_seconds + exp.test_seconds + 1.0, exp.sample_rate, exp.seed);
        } else {
          a = load_mono_at(expo.a, exp.sample_rate);
          b = load_mono_at(expo.b, exp.sample_rate);
        }
        if (exp.mode == SceneMode::binaural) {
          const HrirPair ha = parse_hrir(expo.hrir_a.empty() ? "synth:" + std::to_string(exp.azimuth_a_deg) : expo.hrir_a, exp.sample_rate);
          const HrirPair hb = parse_hrir(expo.hrir_b.empty() ? "synth:" + std::to_string(exp.azimuth_b_deg) : expo.hrir_b, exp.sample_rate);
          return build_scene(a, b, exp, &ha, &hb);
        }
        return build_scene(a, b, exp);
      });
      const SceneSplit split = stage("mix", [&] { return split_scene(scene, exp.train_seconds, exp.test_seconds); });
      const fs::path dir = expo.out_dir;
      stage("experiment", [&] {
        fs::create_directories(dir);
        return 0;
      });
      log("train", "training frames: " +
                       std::to_string(frame_count(split.train.mixture.length(), exp.window_len, exp.hop_train)));
      std::vector<double> history;
      const Mlp model = stage("train", [&] {
        return train_on_segment(split.train, exp, exp.seed, &history, [&](std::size_t e, double l) {
          char buf[80];
          std::snprintf(buf, sizeof buf, "epoch %zu loss %.6g", e, l);
          log("train", buf);
        });
      });
      stage("train", [&] {
        save_model(model, dir / "model.cdt");
        write_text(dir / "loss.csv", loss_csv(history));
        return 0;
      });

      std::ostringstream csv;
      csv << "n,source,sdr_db,sir_db,sar_db\n";
      for (std::size_t n : exp.n_list) {
        const EvaluatedSeparation ev = stage("separate", [&] { return separate_and_score(model, split.test, exp, n, exp.seed); });
        for (std::size_t s = 0; s < ev.metrics.sources.size(); ++s) {
          const SourceMetrics& m = ev.metrics.sources[s];
          csv << n << ',' << static_cast<char>('a' + s) << ',' << format_db(m.sdr_db) << ',' << format_db(m.sir_db) << ','
              << format_db(m.sar_db) << '\n';
        }
        stage("separate", [&] {
          write_wav(to_signal_level(ev.separation.voice_a, split.test.mixture_params), dir / ("estimate_a_n" + std::to_string(n) + ".wav"));
          write_wav(to_signal_level(ev.separation.voice_b, split.test.mixture_params), dir / ("estimate_b_n" + std::to_string(n) + ".wav"));
          return 0;
        });
        log("evaluate", "N=" + std::to_string(n) + " SDR a " + format_db(ev.metrics.sources[0].sdr_db) + " b " +
                            format_db(ev.metrics.sources[1].sdr_db));
      }
      stage("evaluate", [&] {
        write_text(dir / "metrics.csv", csv.str());
        write_wav(split.test.raw_mixture, dir / "test_mixture.wav");
        write_wav(split.test.reference_a, dir / "test_reference_a.wav");
        write_wav(split.test.reference_b, dir / "test_reference_b.wav");
        return 0;
      });
    }
  } catch (const StageError& e) {
    err << "cdt: " << e.stage << " failed: " << e.message << '\n';
    return 1;
  }
  return 0;
}

}  // namespace cdt
