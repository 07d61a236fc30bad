#pragma once

#include <vector>

#include <Eigen/Core>

namespace rsmc {

using Vec = Eigen::VectorXd;

struct Coefficients {
  double alpha;
  double sigma;
  double alpha_dot;
  double sigma_dot;
};

enum class InterpolantKind { TrigVp };

// x_t = alpha(t) x_0 + sigma(t) eps with alpha = cos(pi t / 2), sigma = sin(pi t / 2).
struct Interpolant {
  InterpolantKind kind = InterpolantKind::TrigVp;

  Coefficients coefficients(double t) const;  // throws DomainError outside [0,1]
};

enum class DiffusionKind { Constant, SigmaScaled };

struct DiffusionCoefficient {
  DiffusionKind kind = DiffusionKind::SigmaScaled;
  double scale = 0.3;

  double at(double t, const Interpolant& interp) const;
};

struct Schedule {
  Interpolant interpolant;
  DiffusionCoefficient diffusion;
  // Tweedie and reward evaluations requested at exactly t = 1 are made at 1 - tweedie_delta.
  double tweedie_delta = 0.3;
  // Score and drift evaluations at t = 1 are made at 1 - drift_delta.
  double drift_delta = 1e-3;

  Coefficients coefficients(double t) const { return interpolant.coefficients(t); }
  double g(double t) const { return diffusion.at(t, interpolant); }
  double tweedie_time(double t) const;
  double drift_time(double t) const;

  // n + 1 points, 1 = t_0 > t_1 > ... > t_n = 0.
  static std::vector<double> time_grid(int n_steps);

  void validate() const;
};

// u(x,t) = (alpha'/alpha) x + sigma ((alpha'/alpha) sigma - sigma') score.
Vec pf_ode_velocity(const Schedule& schedule, const Vec& x, const Vec& score, double t);

// f(x,t) = u(x,t) - g(t)^2 / 2 * score.
Vec reverse_drift(const Schedule& schedule, const Vec& x, double t, const Vec& score);

}  // namespace rsmc
