#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "rsmc/errors.hpp"
#include "rsmc/gmm.hpp"
#include "rsmc/oracle.hpp"
#include "rsmc/schedule.hpp"

using namespace rsmc;
using testing::Vec;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("trig schedule endpoints and midpoint") {
  Interpolant in;
  auto c0 = in.coefficients(0.0);
  CHECK(c0.alpha == 1.0);
  CHECK(c0.sigma == 0.0);
  CHECK(c0.alpha_dot == doctest::Approx(0.0));
  CHECK(c0.sigma_dot == doctest::Approx(kPi / 2));
  auto c1 = in.coefficients(1.0);
  CHECK(c1.alpha == 0.0);
  CHECK(c1.sigma == 1.0);
  CHECK(c1.alpha_dot == doctest::Approx(-kPi / 2));
  CHECK(c1.sigma_dot == 0.0);
  auto h = in.coefficients(0.5);
  CHECK(h.alpha == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-14));
  CHECK(h.sigma == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-14));
  CHECK(h.alpha_dot == doctest::Approx(-kPi * std::sqrt(2.0) / 4).epsilon(1e-14));
  CHECK(h.sigma_dot == doctest::Approx(kPi * std::sqrt(2.0) / 4).epsilon(1e-14));
}

TEST_CASE("out-of-range time is a domain error") {
  Interpolant in;
  CHECK_THROWS_AS(in.coefficients(-1e-9), DomainError);
  CHECK_THROWS_AS(in.coefficients(1.0 + 1e-9), DomainError);
  CHECK_THROWS_AS(in.coefficients(NAN), DomainError);
}

TEST_CASE("VP identity, monotonicity and derivatives at random times") {
  Interpolant in;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform();
    const auto c = in.coefficients(t);
    CHECK(std::abs(c.alpha * c.alpha + c.sigma * c.sigma - 1) < 1e-12);
    CHECK(c.alpha_dot < 0);
    CHECK(c.sigma_dot >= 0);
    if (t > 1e-3 && t < 1 - 1e-3) {
      const double h = 1e-6;
      const auto p = in.coefficients(t + h), m = in.coefficients(t - h);
      CHECK(std::abs((p.alpha - m.alpha) / (2 * h) - c.alpha_dot) < 1e-7);
      CHECK(std::abs((p.sigma - m.sigma) / (2 * h) - c.sigma_dot) < 1e-7);
    }
  }
}

TEST_CASE("diffusion coefficient") {
  Schedule s;
  s.diffusion = {DiffusionKind::SigmaScaled, 1.0};
  CHECK(s.g(0.0) == 0.0);
  CHECK(s.g(1.0) == doctest::Approx(1.0));
  s.diffusion = {DiffusionKind::Constant, 0.7};
  CHECK(s.g(0.0) == 0.7);
  CHECK(s.g(0.3) == 0.7);
}

TEST_CASE("clamped times only move the t = 1 endpoint") {
  Schedule s;
  s.tweedie_delta = 0.3;
  s.drift_delta = 1e-3;
  CHECK(s.tweedie_time(1.0) == doctest::Approx(0.7));
  CHECK(s.drift_time(1.0) == doctest::Approx(0.999));
  CHECK(s.tweedie_time(0.96) == 0.96);
  CHECK(s.drift_time(0.5) == 0.5);
  const auto grid = Schedule::time_grid(25);
  CHECK(grid.size() == 26);
  CHECK(grid.front() == 1.0);
  CHECK(grid.back() == 0.0);
  CHECK(grid[1] == doctest::Approx(0.96));
}

TEST_CASE("velocity and drift basic cases") {
  Schedule s;
  const Vec zero = Vec::Zero(3);
  CHECK(pf_ode_velocity(s, zero, zero, 0.4).norm() == 0.0);
  CHECK(reverse_drift(s, zero, 0.4, zero).norm() == 0.0);
  CHECK_THROWS_AS(pf_ode_velocity(s, zero, zero, 1.0), SingularityError);
  Rng rng(3);
  const Vec x = rng.normal_vector(3), sc = rng.normal_vector(3);
  s.diffusion.scale = 0.0;
  CHECK((reverse_drift(s, x, 0.4, sc) - pf_ode_velocity(s, x, sc, 0.4)).norm() == 0.0);
  s.diffusion.scale = 1.0;
  const double g = s.g(0.4);
  CHECK((reverse_drift(s, x, 0.4, sc) - pf_ode_velocity(s, x, sc, 0.4) + 0.5 * g * g * sc).norm() < 1e-14);
}

TEST_CASE("velocity leaves N(0, I) invariant") {
  // p_t = N(0, I) for every t, score = -x, and u vanishes identically.
  Schedule s;
  Rng rng(5);
  for (double t : {0.1, 0.5, 0.9}) {
    const Vec x = rng.normal_vector(4);
    CHECK(pf_ode_velocity(s, x, -x, t).norm() < 1e-12);
  }
  // One Euler step of the reverse SDE on standard-normal points keeps them standard normal.
  s.diffusion.scale = 1.0;
  const double t = 0.5, dt = 0.01;
  std::vector<double> ax, ay;
  for (int i = 0; i < 10000; ++i) {
    const Vec x = rng.normal_vector(2);
    const Vec f = reverse_drift(s, x, t, -x);
    const Vec y = x - f * dt + s.g(t) * std::sqrt(dt) * rng.normal_vector(2);
    ax.push_back(y[0]);
    ay.push_back(y[1]);
  }
  CHECK(ks_statistic(ax, testing::normal_cdf) < testing::ks_critical_1pct(ax.size()));
  CHECK(ks_statistic(ay, testing::normal_cdf) < testing::ks_critical_1pct(ay.size()));
}

TEST_CASE("velocity satisfies the continuity equation for the toy mixture") {
  // d/dt p_t + div(p_t u) = 0, both sides by finite differences of the analytic density.
  const GmmModel m = GmmModel::ring(2, 6, 4.0, 0.3);
  Schedule s;
  const double t = 0.3, ht = 1e-5, hx = 1e-4;
  auto p = [&](const Vec& x, double tt) { return std::exp(m.log_density_t(x, tt)); };
  auto flux = [&](const Vec& x, int axis) { return p(x, t) * pf_ode_velocity(s, x, m.score_t(x, t), t)[axis]; };
  Rng rng(11);
  double worst = 0;
  for (int k = 0; k < 200; ++k) {
    Vec x = m.means()[k % 6] + 0.4 * rng.normal_vector(2);
    const double dpdt = (p(x, t + ht) - p(x, t - ht)) / (2 * ht);
    double div = 0;
    for (int a = 0; a < 2; ++a) {
      Vec xp = x, xm = x;
      xp[a] += hx;
      xm[a] -= hx;
      div += (flux(xp, a) - flux(xm, a)) / (2 * hx);
    }
    const double scale = std::abs(dpdt) + std::abs(div) + 1e-3 * p(x, t) + 1e-12;
    worst = std::max(worst, std::abs(dpdt + div) / scale);
  }
  CHECK(worst < 1e-4);
}

namespace {

// Euler-Maruyama of the unguided reverse process from N(0, I) with the exact score.
std::vector<std::vector<Vec>> simulate_reverse(const GmmModel& m, const Schedule& s, int n, int steps,
                                               const std::vector<double>& stops, bool stochastic) {
  Rng rng(99);
  std::vector<Vec> xs = m.sample_prior(n, rng);
  std::vector<std::vector<Vec>> snaps(stops.size());
  const auto grid = Schedule::time_grid(steps);
  for (int k = 0; k < steps; ++k) {
    const double t = s.drift_time(grid[k]), dt = grid[k] - grid[k + 1];
    for (Vec& x : xs) {
      const Vec sc = m.score_t(x, t);
      const Vec f = stochastic ? reverse_drift(s, x, t, sc) : pf_ode_velocity(s, x, sc, t);
      x = x - f * dt;
      if (stochastic) x += s.g(t) * std::sqrt(dt) * rng.normal_vector(2);
    }
    for (std::size_t j = 0; j < stops.size(); ++j)
      if (std::abs(grid[k + 1] - stops[j]) < 1e-12) snaps[j] = xs;
  }
  return snaps;
}

}  // namespace

TEST_CASE("reverse SDE and probability-flow ODE reproduce the analytic marginals") {
  const GmmModel m = GmmModel::ring(2, 6, 4.0, 0.3);
  const std::vector<double> stops{0.5, 0.25, 0.0};
  for (double c : {0.3, 1.0}) {
    Schedule s;
    s.diffusion.scale = c;
    const auto snaps = simulate_reverse(m, s, 10000, 100, stops, true);
    for (std::size_t j = 0; j < stops.size(); ++j) {
      const GridOracle o = marginal_oracle(m, stops[j]).coarsen(25);
      const double tv = tv_distance(snaps[j], o);
      INFO("c = " << c << " t = " << stops[j] << " tv = " << tv);
      CHECK(tv <= 0.08);
    }
  }
  Schedule s;
  const auto ode = simulate_reverse(m, s, 10000, 100, {0.0}, false);
  CHECK(tv_distance(ode[0], marginal_oracle(m, 0.0).coarsen(25)) <= 0.08);
}
