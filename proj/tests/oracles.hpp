#pragma once

// Seeded generators and independent reference computations shared by the unit tests
// and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cdt/mlp.hpp"

namespace cdt::test {

inline std::vector<double> uniform_vec(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

inline std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sum_sq(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline double inner(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

// Independent loss oracle in extended precision over a flat parameter list
// [W1 row-major | b1 | W2 row-major], so central differences are not limited by
// double round-off.
inline long double oracle_loss(const std::vector<long double>& theta, std::size_t ni, std::size_t nh, std::size_t no,
                        const std::vector<double>& x, const std::vector<double>& t) {
  const long double* w1 = theta.data();
  const long double* b1 = w1 + nh * ni;
  const long double* w2 = b1 + nh;
  std::vector<long double> h(nh);
  for (std::size_t j = 0; j < nh; ++j) {
    long double z = b1[j];
    for (std::size_t i = 0; i < ni; ++i) z += w1[j * ni + i] * x[i];
    h[j] = 1.0L / (1.0L + std::exp(-z));
  }
  long double loss = 0.0L;
  for (std::size_t k = 0; k < no; ++k) {
    long double z = 0.0L;
    for (std::size_t j = 0; j < nh; ++j) z += w2[k * nh + j] * h[j];
    const long double e = 1.0L / (1.0L + std::exp(-z)) - t[k];
    loss += e * e;
  }
  return 0.5L * loss;
}

inline std::vector<long double> flatten(const Mlp& net) {
  std::vector<long double> theta;
  for (double v : net.hidden_weights().data()) theta.push_back(v);
  for (double v : net.hidden_bias()) theta.push_back(v);
  for (double v : net.output_weights().data()) theta.push_back(v);
  return theta;
}

inline std::vector<double> flatten(const Gradients& g) {
  std::vector<double> out(g.hidden_weights.data().begin(), g.hidden_weights.data().end());
  out.insert(out.end(), g.hidden_bias.begin(), g.hidden_bias.end());
  out.insert(out.end(), g.output_weights.data().begin(), g.output_weights.data().end());
  return out;
}

// Largest relative error between backprop and central differences (step 1e-6).
inline double gradient_check(const Mlp& net, const std::vector<double>& x, const std::vector<double>& t) {
  const std::vector<double> analytic = flatten(backprop(net, x, t).gradients);
  std::vector<long double> theta = flatten(net);
  const long double h = 1e-6L;
  double worst = 0.0;
  for (std::size_t p = 0; p < theta.size(); ++p) {
    const long double saved = theta[p];
    theta[p] = saved + h;
    const long double up = oracle_loss(theta, net.input_dim(), net.hidden_dim(), net.output_dim(), x, t);
    theta[p] = saved - h;
    const long double down = oracle_loss(theta, net.input_dim(), net.hidden_dim(), net.output_dim(), x, t);
    theta[p] = saved;
    const double fd = static_cast<double>((up - down) / (2.0L * h));
    worst = std::max(worst, std::abs(analytic[p] - fd) / (std::abs(analytic[p]) + std::abs(fd) + 1e-12));
  }
  return worst;
}

inline Mlp random_net(std::mt19937_64& rng, std::size_t max_size = 8) {
  const std::size_t ni = uniform_size(rng, 1, max_size), nh = uniform_size(rng, 1, max_size),
                    no = uniform_size(rng, 1, max_size);
  Mlp net = init_mlp({ni, nh, no}, rng());
  for (double& b : net.hidden_bias()) b = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  return net;
}

// Gram-Schmidt: returns `count` mutually orthogonal pseudo-random sequences with the given norms.
inline std::vector<std::vector<double>> orthogonal_set(std::mt19937_64& rng, std::size_t n, const std::vector<double>& norms) {
  std::vector<std::vector<double>> out;
  for (double norm : norms) {
    std::vector<double> v = uniform_vec(rng, n);
    for (const auto& u : out) {
      const double c = inner(v, u) / inner(u, u);
      for (std::size_t i = 0; i < n; ++i) v[i] -= c * u[i];
    }
    const double scale = norm / std::sqrt(sum_sq(v));
    for (double& x : v) x *= scale;
    out.push_back(std::move(v));
  }
  return out;
}

inline std::vector<double> combo(const std::vector<std::vector<double>>& basis, const std::vector<double>& coef) {
  std::vector<double> y(basis[0].size(), 0.0);
  for (std::size_t b = 0; b < basis.size(); ++b)
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += coef[b] * basis[b][i];
  return y;
}

}  // namespace cdt::test
