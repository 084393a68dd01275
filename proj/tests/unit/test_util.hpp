#pragma once

// Test-only helpers: finite-difference oracles and comparison metrics. These
// never call into the code paths they are used to check, apart from plain
// forward evaluation through the supplied callbacks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace atbptt::testing {

inline double norm2(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double rel_err(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  const double denom = std::max(norm2(a), norm2(b));
  return denom == 0.0 ? std::sqrt(d) : std::sqrt(d) / denom;
}

// rel_err with a lower bound on the denominator, for comparisons against
// finite differences whose round-off floor is set by the function scale.
inline double rel_err_floor(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) return INFINITY;
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d) / std::max({norm2(a), norm2(b), floor});
}

inline double rel_err(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences with a fixed absolute step.
inline std::vector<double> fd_gradient(const ScalarFn& f, std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f(x);
    x[i] = saved - h;
    const double fm = f(x);
    x[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Dense Hessian from second-order central differences of function values.
inline std::vector<double> fd_hessian(const ScalarFn& f, std::vector<double> x, double h) {
  const std::size_t n = x.size();
  std::vector<double> hess(n * n);
  auto at = [&](std::size_t i, double di, std::size_t j, double dj) {
    auto y = x;
    y[i] += di;
    y[j] += dj;
    return f(y);
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      hess[i * n + j] =
          (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h);
    }
  }
  return hess;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

inline std::vector<double> random_uniform(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<double> matvec(std::span<const double> m, std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<double> out(m.size() / n, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += m[i * n + j] * v[j];
  return out;
}

}  // namespace atbptt::testing
