#pragma once

#include <vector>

#include <Eigen/Core>

#include "rsmc/rng.hpp"
#include "rsmc/schedule.hpp"

namespace rsmc {

using Mat = Eigen::MatrixXd;

// Everything derived from p_t at one (x, t), shared by score / Hessian / Tweedie.
struct GmmEval {
  double t = 0;
  Coefficients coef{};
  double log_density = 0;
  std::vector<double> responsibility;
  std::vector<double> variance;  // alpha^2 tau_i^2 + sigma^2
  std::vector<Vec> m;            // (alpha mu_i - x) / variance_i
  Vec score;
};

// Isotropic Gaussian mixture p_0 = sum_i w_i N(mu_i, tau_i^2 I), pushed through the interpolant.
class GmmModel {
 public:
  GmmModel(std::vector<double> weights, std::vector<Vec> means, std::vector<double> variances,
           Interpolant interpolant = {});

  // Equal-weight components on a circle in the first two coordinates.
  static GmmModel ring(int dim, int components, double radius, double tau);
  static GmmModel isotropic(const Vec& mean, double variance);

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(weights_.size()); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Vec>& means() const { return means_; }
  const std::vector<double>& variances() const { return variances_; }
  const Interpolant& interpolant() const { return interpolant_; }

  GmmEval evaluate(const Vec& x, double t) const;

  double log_density_t(const Vec& x, double t) const;
  Vec score_t(const Vec& x, double t) const;
  Mat hessian_log_density_t(const Vec& x, double t) const;
  Vec hessian_vector_product(const Vec& x, double t, const Vec& v) const;
  static Vec hessian_vector_product(const GmmEval& e, const Vec& v);

  // x_{0|t} = (x + sigma^2 score) / alpha; throws SingularityError when alpha(t) is ~0.
  Vec tweedie(const Vec& x, double t) const;
  static Vec tweedie(const GmmEval& e, const Vec& x);
  // J^T v with J = (I + sigma^2 H) / alpha.
  Vec tweedie_vjp(const Vec& x, double t, const Vec& v) const;
  static Vec tweedie_vjp(const GmmEval& e, const Vec& v);

  std::vector<Vec> sample_data(int n, Rng& rng) const;
  std::vector<Vec> sample_prior(int n, Rng& rng) const;

  // Upper bound on p_0 mass outside the box [lo, hi]^d, via a per-axis union bound.
  double outside_mass_bound(double lo, double hi) const;

 private:
  int dim_;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<Vec> means_;
  std::vector<double> variances_;
  Interpolant interpolant_;
};

}  // namespace rsmc
