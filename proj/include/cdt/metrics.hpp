#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cdt/error.hpp"
#include "cdt/matrix.hpp"

namespace cdt {

// estimate (zero-padded to n + L - 1) = s_target + e_interf + e_artif
struct BssDecomposition {
  std::vector<double> s_target;
  std::vector<double> e_interf;
  std::vector<double> e_artif;
  std::size_t filter_len = 0;
};

struct SourceMetrics {
  double sdr_db = 0.0;
  double sir_db = 0.0;
  double sar_db = 0.0;
};

struct SeparationMetrics {
  std::vector<SourceMetrics> sources;
  std::size_t n_passes = 0;
};

// Written in place of +/-infinity in CSV output.
inline constexpr double kInfinityDbSentinel = 1e9;

// Energy ratios beyond 240 dB are below double rounding noise and are reported as infinite.
inline constexpr double kNumericalZeroRatio = 1e-24;

inline constexpr std::size_t kDefaultFilterLen = 512;

namespace detail {

// r[tau] = sum_u x[u] * y[u + tau] for tau in [0, max_lag].
inline std::vector<double> correlate(std::span<const double> x, std::span<const double> y, std::size_t max_lag) {
  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t tau = 0; tau <= max_lag && tau < y.size(); ++tau) {
    const std::size_t len = std::min(x.size(), y.size() - tau);
    r[tau] = dot(x.data(), y.data() + tau, len);
  }
  return r;
}

// Cholesky factor (lower triangle, row-major) of a symmetric positive-definite matrix.
// Returns false if a pivot is not positive.
inline bool cholesky(std::vector<double>& a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double* rj = a.data() + j * n;
    double d = rj[j] - dot(rj, rj, j);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    d = std::sqrt(d);
    rj[j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double* ri = a.data() + i * n;
      ri[j] = (ri[j] - dot(ri, rj, j)) / d;
    }
  }
  return true;
}

inline void cholesky_solve(const std::vector<double>& l, std::size_t n, std::vector<double>& x) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ri = l.data() + i * n;
    x[i] = (x[i] - dot(ri, x.data(), i)) / ri[i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l[k * n + i] * x[k];
    x[i] = s / l[i * n + i];
  }
}

// Symmetric positive-definite system with a ridge of 1e-10 * trace / dim on the
// diagonal, followed by two rounds of refinement against the unregularized matrix so
// that well-conditioned directions are solved to rounding precision.
class SpdSolver {
 public:
  SpdSolver() = default;
  explicit SpdSolver(std::vector<double> gram, std::size_t n) : gram_(std::move(gram)), n_(n) {
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += gram_[i * n + i];
    const double ridge = 1e-10 * trace / static_cast<double>(n);
    factor_ = gram_;
    for (std::size_t i = 0; i < n; ++i) factor_[i * n + i] += ridge;
    if (!(trace > 0.0) || !cholesky(factor_, n))
      throw Error(Errc::degenerate_references, "Gram matrix of the shifted references is singular");
  }

  std::vector<double> solve(const std::vector<double>& b) const {
    std::vector<double> x = b;
    cholesky_solve(factor_, n_, x);
    std::vector<double> r(n_);
    for (int iter = 0; iter < 2; ++iter) {
      for (std::size_t i = 0; i < n_; ++i) r[i] = b[i] - dot(gram_.data() + i * n_, x.data(), n_);
      cholesky_solve(factor_, n_, r);
      for (std::size_t i = 0; i < n_; ++i) x[i] += r[i];
    }
    return x;
  }

 private:
  std::vector<double> gram_;
  std::vector<double> factor_;
  std::size_t n_ = 0;
};

inline double energy(std::span<const double> x) { return dot(x.data(), x.data(), x.size()); }

inline double ratio_db(double signal, double distortion) {
  if (distortion <= kNumericalZeroRatio * signal) return signal > 0.0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
  if (signal <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / distortion);
}

}  // namespace detail

// Least-squares projections onto spans of delayed references (lags 0..L-1). The Gram
// matrices depend only on the references, so they are factored once and reused for
// every estimate.
class BssProjector {
 public:
  BssProjector(std::vector<std::vector<double>> references, std::size_t filter_len)
      : refs_(std::move(references)), filter_len_(filter_len) {
    if (refs_.empty()) throw Error(Errc::invalid_argument, "need at least one reference");
    if (filter_len_ == 0) throw Error(Errc::invalid_argument, "filter length must be at least 1");
    n_ = refs_.front().size();
    for (const auto& r : refs_) {
      if (r.size() != n_) throw Error(Errc::dimension, "references differ in length");
    }
    if (n_ <= filter_len_)
      throw Error(Errc::invalid_argument, "signals of " + std::to_string(n_) + " samples are not longer than the " +
                                              std::to_string(filter_len_) + "-tap filter");

    const std::size_t nr = refs_.size(), L = filter_len_;
    // corr[j][k][tau] = sum_u s_j[u] s_k[u + tau], tau in [0, L)
    std::vector<std::vector<std::vector<double>>> corr(nr, std::vector<std::vector<double>>(nr));
    for (std::size_t j = 0; j < nr; ++j)
      for (std::size_t k = 0; k < nr; ++k) corr[j][k] = detail::correlate(refs_[j], refs_[k], L - 1);

    // G[(j,a),(k,b)] = <s_j delayed by a, s_k delayed by b> = c_jk(a - b), c_jk(-t) = c_kj(t)
    const std::size_t dim = nr * L;
    std::vector<double> gram(dim * dim);
    for (std::size_t j = 0; j < nr; ++j) {
      for (std::size_t k = 0; k < nr; ++k) {
        for (std::size_t a = 0; a < L; ++a) {
          for (std::size_t b = 0; b < L; ++b) {
            gram[(j * L + a) * dim + (k * L + b)] = a >= b ? corr[j][k][a - b] : corr[k][j][b - a];
          }
        }
      }
    }
    all_ = detail::SpdSolver(gram, dim);
    for (std::size_t j = 0; j < nr; ++j) {
      std::vector<double> g(L * L);
      for (std::size_t a = 0; a < L; ++a)
        for (std::size_t b = 0; b < L; ++b) g[a * L + b] = gram[(j * L + a) * dim + (j * L + b)];
      single_.emplace_back(std::move(g), L);
    }
  }

  std::size_t num_references() const noexcept { return refs_.size(); }
  std::size_t length() const noexcept { return n_; }
  std::size_t filter_len() const noexcept { return filter_len_; }

  BssDecomposition decompose(std::span<const double> estimate, std::size_t target_index) const {
    if (target_index >= refs_.size()) throw Error(Errc::invalid_argument, "target index out of range");
    if (estimate.size() != n_) throw Error(Errc::dimension, "estimate and references differ in length");
    const std::size_t L = filter_len_, nr = refs_.size();
    const std::size_t out_len = n_ + L - 1;

    std::vector<std::vector<double>> rhs(nr);
    for (std::size_t j = 0; j < nr; ++j) rhs[j] = detail::correlate(refs_[j], estimate, L - 1);

    BssDecomposition d;
    d.filter_len = L;
    d.s_target = project({rhs[target_index]}, {target_index}, single_[target_index]);
    std::vector<std::size_t> all(nr);
    for (std::size_t j = 0; j < nr; ++j) all[j] = j;
    const std::vector<double> p_all = project(rhs, all, all_);

    d.e_interf.resize(out_len);
    d.e_artif.resize(out_len);
    for (std::size_t t = 0; t < out_len; ++t) {
      const double est = t < n_ ? estimate[t] : 0.0;
      d.e_interf[t] = p_all[t] - d.s_target[t];
      d.e_artif[t] = est - p_all[t];
    }
    return d;
  }

 private:
  std::vector<double> project(const std::vector<std::vector<double>>& rhs, const std::vector<std::size_t>& which,
                              const detail::SpdSolver& solver) const {
    const std::size_t L = filter_len_;
    std::vector<double> b;
    b.reserve(which.size() * L);
    for (const auto& r : rhs) b.insert(b.end(), r.begin(), r.end());
    const std::vector<double> coef = solver.solve(b);
    std::vector<double> out(n_ + L - 1, 0.0);
    for (std::size_t w = 0; w < which.size(); ++w) {
      const auto& s = refs_[which[w]];
      for (std::size_t a = 0; a < L; ++a) detail::axpy(coef[w * L + a], s.data(), out.data() + a, n_);
    }
    return out;
  }

  std::vector<std::vector<double>> refs_;
  std::size_t filter_len_;
  std::size_t n_ = 0;
  detail::SpdSolver all_;
  std::vector<detail::SpdSolver> single_;
};

inline BssDecomposition decompose_projection(std::span<const double> estimate,
                                             const std::vector<std::vector<double>>& references,
                                             std::size_t target_index, std::size_t filter_len) {
  return BssProjector(references, filter_len).decompose(estimate, target_index);
}

inline SourceMetrics metrics_from(const BssDecomposition& d) {
  const std::size_t n = d.s_target.size();
  std::vector<double> distortion(n), wanted(n);
  for (std::size_t t = 0; t < n; ++t) {
    distortion[t] = d.e_interf[t] + d.e_artif[t];
    wanted[t] = d.s_target[t] + d.e_interf[t];
  }
  const double target = detail::energy(d.s_target);
  return {detail::ratio_db(target, detail::energy(distortion)), detail::ratio_db(target, detail::energy(d.e_interf)),
          detail::ratio_db(detail::energy(wanted), detail::energy(d.e_artif))};
}

// Estimate i is scored against reference i.
inline SeparationMetrics bss_eval(const std::vector<std::vector<double>>& estimates,
                                  const std::vector<std::vector<double>>& references,
                                  std::size_t filter_len = kDefaultFilterLen, std::size_t n_passes = 0) {
  if (estimates.size() != references.size())
    throw Error(Errc::dimension, "number of estimates and references differ");
  const BssProjector projector(references, filter_len);
  SeparationMetrics m{{}, n_passes};
  for (std::size_t i = 0; i < estimates.size(); ++i) m.sources.push_back(metrics_from(projector.decompose(estimates[i], i)));
  return m;
}

inline double csv_db(double v) {
  if (std::isinf(v)) return v > 0 ? kInfinityDbSentinel : -kInfinityDbSentinel;
  return v;
}

inline std::string format_db(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", csv_db(v));
  return buf;
}

// Header `source,n_passes,sdr_db,sir_db,sar_db`; sources are named a, b, ...
inline void write_metrics_csv(std::ostream& out, const SeparationMetrics& m) {
  out << "source,n_passes,sdr_db,sir_db,sar_db\n";
  for (std::size_t i = 0; i < m.sources.size(); ++i) {
    const auto& s = m.sources[i];
    out << static_cast<char>('a' + i) << ',' << m.n_passes << ',' << format_db(s.sdr_db) << ',' << format_db(s.sir_db)
        << ',' << format_db(s.sar_db) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Spectrogram

inline bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 decimation-in-time FFT.
inline void fft(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) throw Error(Errc::invalid_argument, "FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
      }
    }
  }
}

// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

// Rows are frames, columns the fft_size/2 + 1 non-negative frequency bins, values
// 20 log10(|X| + 1e-12).
inline Matrix spectrogram(std::span<const double> signal, std::size_t fft_size, std::size_t hop) {
  if (!is_power_of_two(fft_size)) throw Error(Errc::invalid_argument, "FFT size must be a power of two");
  if (hop == 0) throw Error(Errc::invalid_argument, "hop must be at least 1");
  if (signal.size() < fft_size) throw Error(Errc::invalid_argument, "signal is shorter than one FFT frame");
  const std::size_t frames = (signal.size() - fft_size) / hop + 1;
  const std::size_t bins = fft_size / 2 + 1;
  const std::vector<double> window = hann_window(fft_size);
  Matrix out(frames, bins);
  std::vector<std::complex<double>> buf(fft_size);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < fft_size; ++i) buf[i] = signal[f * hop + i] * window[i];
    fft(buf);
    for (std::size_t k = 0; k < bins; ++k) out(f, k) = 20.0 * std::log10(std::abs(buf[k]) + 1e-12);
  }
  return out;
}

inline void write_spectrogram_csv(std::ostream& out, const Matrix& spec) {
  char buf[32];
  for (std::size_t r = 0; r < spec.rows(); ++r) {
    for (std::size_t c = 0; c < spec.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.4f", spec(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

// 8-bit binary PGM: time runs left to right, frequency bottom to top; [floor, ceiling]
// dB maps linearly onto 0..255.
inline void write_spectrogram_pgm(const std::filesystem::path& path, const Matrix& spec, double floor_db = -80.0,
                                  double ceiling_db = 0.0) {
  if (!(ceiling_db > floor_db)) throw Error(Errc::invalid_argument, "PGM ceiling must exceed floor");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out << "P5\n" << spec.rows() << ' ' << spec.cols() << "\n255\n";
  for (std::size_t k = spec.cols(); k-- > 0;) {
    for (std::size_t f = 0; f < spec.rows(); ++f) {
      const double u = (spec(f, k) - floor_db) / (ceiling_db - floor_db);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(u, 0.0, 1.0)))));
    }
  }
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

}  // namespace cdt
