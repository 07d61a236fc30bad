#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "rsmc/rng.hpp"

namespace testing {

using Vec = Eigen::VectorXd;

inline Vec random_vec(rsmc::Rng& rng, int d, double scale = 1.0) { return scale * rng.normal_vector(d); }

inline double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

// Central differences written out independently of the library helper.
inline Vec central_diff(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vec p = x, m = x;
    p[i] += h;
    m[i] -= h;
    g[i] = (f(p) - f(m)) / (2 * h);
  }
  return g;
}

inline double log_normal_iso(const Vec& x, const Vec& mean, double var) {
  return -0.5 * (x - mean).squaredNorm() / var - 0.5 * x.size() * std::log(2 * std::numbers::pi * var);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Asymptotic one-sample KS critical value at level 1%.
inline double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(double(n)); }

}  // namespace testing
