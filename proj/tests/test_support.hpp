#pragma once

// Shared helpers for the test suites: deterministic random draws and
// central-difference oracles used to check analytic gradients.  These stay
// independent of the library's backward implementations on purpose.

#include <Eigen/Core>

#include <cmath>
#include <random>

namespace vartok::testing {

using Vec = Eigen::VectorXd;

// Relative error with an absolute floor so negligible magnitudes do not
// blow up the ratio.
inline double rel_err(double a, double b, double floor_mag = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor_mag});
}

// Central finite difference of a scalar function along coordinate i.
template <typename F>
double central_diff(const F& f, Vec x, int i, double h) {
  x[i] += h;
  const double fp = f(x);
  x[i] -= 2.0 * h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

// Full finite-difference gradient of a scalar function.
template <typename F>
Vec fd_gradient(const F& f, const Vec& x, double h) {
  Vec g(x.size());
  for (int i = 0; i < x.size(); ++i) g[i] = central_diff(f, x, i, h);
  return g;
}

// Standard normal vector.
inline Vec randn(int dim, std::mt19937& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = nd(rng);
  return v;
}

// Uniform random point with Euclidean norm at most max_norm (uniform radius,
// uniform direction; good enough coverage for property tests).
inline Vec random_in_ball(int dim, double max_norm, std::mt19937& rng) {
  std::uniform_real_distribution<double> ud(0.0, max_norm);
  Vec dir = randn(dim, rng);
  const double n = dir.norm();
  if (n < 1e-12) return Vec::Zero(dim);
  return ud(rng) / n * dir;
}

}  // namespace vartok::testing
