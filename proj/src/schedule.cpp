#include "rsmc/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rsmc/errors.hpp"

namespace rsmc {

namespace {
constexpr double kHalfPi = std::numbers::pi / 2;
constexpr double kEndpointTol = 1e-12;
}  // namespace

Coefficients Interpolant::coefficients(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("time " + std::to_string(t) + " outside [0, 1]");
  if (t == 1.0) return {0.0, 1.0, -kHalfPi, 0.0};
  const double c = std::cos(kHalfPi * t), s = std::sin(kHalfPi * t);
  return {c, s, -kHalfPi * s, kHalfPi * c};
}

double DiffusionCoefficient::at(double t, const Interpolant& interp) const {
  if (kind == DiffusionKind::Constant) return scale;
  return scale * interp.coefficients(t).sigma;
}

double Schedule::tweedie_time(double t) const { return t >= 1.0 - kEndpointTol ? 1.0 - tweedie_delta : t; }

double Schedule::drift_time(double t) const { return t >= 1.0 - kEndpointTol ? 1.0 - drift_delta : t; }

std::vector<double> Schedule::time_grid(int n_steps) {
  if (n_steps < 1) throw DomainError("time grid needs at least one step");
  std::vector<double> ts(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k) ts[k] = 1.0 - double(k) / n_steps;
  ts.back() = 0.0;
  return ts;
}

void Schedule::validate() const {
  if (!(tweedie_delta > 0.0 && tweedie_delta < 1.0)) throw ConfigError("schedule.tweedie_delta must lie in (0, 1)");
  if (!(drift_delta > 0.0 && drift_delta < 1.0)) throw ConfigError("schedule.drift_delta must lie in (0, 1)");
  if (!(diffusion.scale >= 0.0)) throw ConfigError("schedule.diffusion.scale must be non-negative");
}

Vec pf_ode_velocity(const Schedule& schedule, const Vec& x, const Vec& score, double t) {
  const Coefficients c = schedule.coefficients(t);
  if (c.alpha <= 0.0) throw SingularityError("velocity is singular at alpha(t) = 0; use a clamped time");
  const double ratio = c.alpha_dot / c.alpha;
  return ratio * x + (c.sigma * (ratio * c.sigma - c.sigma_dot)) * score;
}

Vec reverse_drift(const Schedule& schedule, const Vec& x, double t, const Vec& score) {
  const double g = schedule.g(t);
  return pf_ode_velocity(schedule, x, score, t) - (0.5 * g * g) * score;
}

}  // namespace rsmc
