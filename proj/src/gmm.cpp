#include "rsmc/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "rsmc/errors.hpp"

namespace rsmc {

namespace {

constexpr double kMinAlpha = 1e-12;

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("time " + std::to_string(t) + " outside [0, 1]");
}

void require_alpha(const GmmEval& e) {
  if (e.coef.alpha < kMinAlpha)
    throw SingularityError("Tweedie estimate is singular at t = " + std::to_string(e.t) + " (alpha = 0)");
}

double normal_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

}  // namespace

GmmModel::GmmModel(std::vector<double> weights, std::vector<Vec> means, std::vector<double> variances,
                   Interpolant interpolant)
    : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)),
      interpolant_(interpolant) {
  if (weights_.empty()) throw ConfigError("mixture needs at least one component");
  if (means_.size() != weights_.size() || variances_.size() != weights_.size())
    throw ConfigError("mixture weights, means and variances differ in length");
  dim_ = static_cast<int>(means_[0].size());
  if (dim_ < 1) throw ConfigError("mixture dimension must be positive");
  double total = 0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (!(weights_[i] > 0)) throw ConfigError("mixture weights must be positive");
    if (!(variances_[i] > 0)) throw ConfigError("mixture variances must be positive");
    if (means_[i].size() != dim_) throw ConfigError("mixture means differ in dimension");
    total += weights_[i];
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
  log_weights_.resize(weights_.size());
  std::transform(weights_.begin(), weights_.end(), log_weights_.begin(), [](double w) { return std::log(w); });
}

GmmModel GmmModel::ring(int dim, int components, double radius, double tau) {
  if (dim < 2) throw ConfigError("ring mixture needs dim >= 2");
  if (components < 1) throw ConfigError("ring mixture needs at least one component");
  std::vector<Vec> means;
  for (int i = 0; i < components; ++i) {
    const double a = 2 * std::numbers::pi * i / components;
    Vec mu = Vec::Zero(dim);
    mu[0] = radius * std::cos(a);
    mu[1] = radius * std::sin(a);
    means.push_back(mu);
  }
  return GmmModel(std::vector<double>(components, 1.0 / components), std::move(means),
                  std::vector<double>(components, tau * tau));
}

GmmModel GmmModel::isotropic(const Vec& mean, double variance) { return GmmModel({1.0}, {mean}, {variance}); }

GmmEval GmmModel::evaluate(const Vec& x, double t) const {
  check_time(t);
  if (x.size() != dim_) throw DomainError("point dimension does not match the model");
  GmmEval e;
  e.t = t;
  e.coef = interpolant_.coefficients(t);
  const double a = e.coef.alpha, s2 = e.coef.sigma * e.coef.sigma;
  const int k = size();
  e.responsibility.resize(k);
  e.variance.resize(k);
  e.m.resize(k);
  std::vector<double> logp(k);
  for (int i = 0; i < k; ++i) {
    const double v = a * a * variances_[i] + s2;
    e.variance[i] = v;
    Vec diff = a * means_[i] - x;
    logp[i] = log_weights_[i] - 0.5 * dim_ * std::log(2 * std::numbers::pi * v) - 0.5 * diff.squaredNorm() / v;
    e.m[i] = diff / v;
  }
  const double mx = *std::max_element(logp.begin(), logp.end());
  double acc = 0;
  for (int i = 0; i < k; ++i) acc += std::exp(logp[i] - mx);
  e.log_density = mx + std::log(acc);
  e.score = Vec::Zero(dim_);
  for (int i = 0; i < k; ++i) {
    e.responsibility[i] = std::exp(logp[i] - e.log_density);
    e.score += e.responsibility[i] * e.m[i];
  }
  return e;
}

double GmmModel::log_density_t(const Vec& x, double t) const { return evaluate(x, t).log_density; }

Vec GmmModel::score_t(const Vec& x, double t) const { return evaluate(x, t).score; }

Mat GmmModel::hessian_log_density_t(const Vec& x, double t) const {
  const GmmEval e = evaluate(x, t);
  Mat h = -e.score * e.score.transpose();
  for (int i = 0; i < size(); ++i) {
    h.diagonal().array() -= e.responsibility[i] / e.variance[i];
    h.noalias() += e.responsibility[i] * e.m[i] * e.m[i].transpose();
  }
  return h;
}

Vec GmmModel::hessian_vector_product(const GmmEval& e, const Vec& v) {
  Vec out = -e.score.dot(v) * e.score;
  for (std::size_t i = 0; i < e.m.size(); ++i)
    out += e.responsibility[i] * (e.m[i].dot(v) * e.m[i] - v / e.variance[i]);
  return out;
}

Vec GmmModel::hessian_vector_product(const Vec& x, double t, const Vec& v) const {
  return hessian_vector_product(evaluate(x, t), v);
}

Vec GmmModel::tweedie(const GmmEval& e, const Vec& x) {
  require_alpha(e);
  return (x + e.coef.sigma * e.coef.sigma * e.score) / e.coef.alpha;
}

Vec GmmModel::tweedie(const Vec& x, double t) const { return tweedie(evaluate(x, t), x); }

Vec GmmModel::tweedie_vjp(const GmmEval& e, const Vec& v) {
  require_alpha(e);
  return (v + e.coef.sigma * e.coef.sigma * hessian_vector_product(e, v)) / e.coef.alpha;
}

Vec GmmModel::tweedie_vjp(const Vec& x, double t, const Vec& v) const { return tweedie_vjp(evaluate(x, t), v); }

std::vector<Vec> GmmModel::sample_data(int n, Rng& rng) const {
  std::vector<double> cdf(weights_.size());
  std::partial_sum(weights_.begin(), weights_.end(), cdf.begin());
  std::vector<Vec> out;
  out.reserve(std::max(n, 0));
  for (int j = 0; j < n; ++j) {
    const double u = rng.uniform() * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const int i = std::min<int>(static_cast<int>(it - cdf.begin()), size() - 1);
    out.push_back(means_[i] + std::sqrt(variances_[i]) * rng.normal_vector(dim_));
  }
  return out;
}

std::vector<Vec> GmmModel::sample_prior(int n, Rng& rng) const {
  std::vector<Vec> out;
  out.reserve(std::max(n, 0));
  for (int j = 0; j < n; ++j) out.push_back(rng.normal_vector(dim_));
  return out;
}

double GmmModel::outside_mass_bound(double lo, double hi) const {
  double total = 0;
  for (int i = 0; i < size(); ++i) {
    const double sd = std::sqrt(variances_[i]);
    double comp = 0;
    for (int a = 0; a < dim_; ++a) comp += normal_tail((means_[i][a] - lo) / sd) + normal_tail((hi - means_[i][a]) / sd);
    total += weights_[i] * std::min(comp, 1.0);
  }
  return total;
}

}  // namespace rsmc
