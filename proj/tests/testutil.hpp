#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace testutil {

// Central-difference gradient of a scalar function, one coordinate at a time.
// Step is scaled to the coordinate magnitude so large and small parameters
// are probed at comparable relative precision.
inline std::vector<double> fd_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double base_step = 1e-5) {
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = base_step * std::max(1.0, std::abs(x[i]));
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Max over coordinates of |a-b| / max(1, |a|, |b|).
inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

// KL( N(mu, e^lambda) || N(0,1) ) by Simpson quadrature — an oracle fully
// independent of the closed form it checks.
inline double kl_quadrature(double mu, double lambda) {
  const double s = std::exp(0.5 * lambda);
  const double lo = mu - 20.0 * s, hi = mu + 20.0 * s;
  const int n = 40000;  // even
  const double h = (hi - lo) / n;
  const double log_norm = std::log(s) + 0.5 * std::log(2.0 * 3.14159265358979323846);
  auto integrand = [&](double x) {
    const double t = (x - mu) / s;
    const double logq = -0.5 * t * t - log_norm;
    const double logp = -0.5 * x * x - 0.5 * std::log(2.0 * 3.14159265358979323846);
    return std::exp(logq) * (logq - logp);
  };
  double acc = integrand(lo) + integrand(hi);
  for (int i = 1; i < n; ++i) acc += integrand(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace testutil
