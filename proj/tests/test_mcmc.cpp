#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "rsmc/errors.hpp"
#include "rsmc/mcmc.hpp"
#include "rsmc/oracle.hpp"

using namespace rsmc;
using testing::Vec;

namespace {

Schedule sched() {
  Schedule s;
  s.tweedie_delta = 0.3;
  return s;
}

TiltedTarget toy_target(double alpha = 1.0) {
  const GmmModel m = GmmModel::ring(2, 6, 4.0, 0.3);
  return TiltedTarget(m, sched(), RewardModel::mode_subset(m, {0, 1, 2}, 2.0, alpha));
}

TiltedTarget quad_target(int d, double alpha) {
  Rng rng(77);
  const GmmModel m = GmmModel::ring(d, 4, 2.0, 0.5);
  return TiltedTarget(m, sched(), RewardModel::quadratic(rng.normal_vector(d), alpha));
}

PointCache cache_at(const TiltedTarget& t, const Vec& x) {
  const Evaluation e = t.evaluate(x, 1.0);
  return {e.reward, e.value_grad};
}

// log min(1, p(x') q(x | x') / (p(x) q(x' | x))) with raw Gaussian proposal densities.
double brute_mala(const TiltedTarget& t, const Vec& x, const Vec& xp, double eps) {
  auto mean = [&](const Vec& y) -> Vec { return y + (eps / 2) * t.posterior_grad_1(y); };
  const double v = t.posterior_log_density_1(xp) + testing::log_normal_iso(x, mean(xp), eps) -
                   t.posterior_log_density_1(x) - testing::log_normal_iso(xp, mean(x), eps);
  return std::min(0.0, v);
}

double brute_pcnl(const TiltedTarget& t, const Vec& x, const Vec& xp, double eps) {
  const double r = (1 - eps / 4) / (1 + eps / 4), s = std::sqrt(1 - r * r);
  auto mean = [&](const Vec& y) -> Vec { return r * y + s * (std::sqrt(eps) / 2) * t.value_grad(y, 1.0); };
  const double v = t.posterior_log_density_1(xp) + testing::log_normal_iso(x, mean(xp), s * s) -
                   t.posterior_log_density_1(x) - testing::log_normal_iso(xp, mean(x), s * s);
  return std::min(0.0, v);
}

}  // namespace

TEST_CASE("rho") {
  CHECK(rho(0.0) == 1.0);
  CHECK(rho(4.0) == 0.0);
  CHECK(rho(0.5) == doctest::Approx(7.0 / 9.0).epsilon(1e-15));
  CHECK_THROWS_AS(rho(8.0), DomainError);
  CHECK_THROWS_AS(rho(-0.1), DomainError);
}

TEST_CASE("chain config validation") {
  ChainConfig c;
  c.kernel = Kernel::Pcnl;
  c.step_size = 8.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.kernel = Kernel::Mala;
  CHECK_NOTHROW(c.validate());
  c.thinning = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("proposals: limits and Monte-Carlo moments") {
  const TiltedTarget t = toy_target();
  Rng rng(1);
  ChainState s = make_state(t, rng.normal_vector(2));
  CHECK(s.nfe == 0);
  {
    Rng r(5);
    CHECK((propose(Kernel::Pcn, s, 1e-12, r) - s.x).norm() < 1e-5);
  }
  const int n = 100000;
  for (Kernel k : {Kernel::Mala, Kernel::Pcn, Kernel::Pcnl}) {
    const double eps = k == Kernel::Mala ? 0.05 : 0.5;
    Vec mean_ref, var_ref;
    const double r = rho(eps);
    if (k == Kernel::Mala) {
      mean_ref = s.x + (eps / 2) * (s.cache.grad - s.x);
      var_ref = Vec::Constant(2, eps);
    } else {
      mean_ref = r * s.x + (k == Kernel::Pcnl ? Vec(std::sqrt(1 - r * r) * std::sqrt(eps) / 2 * s.cache.grad) : Vec(Vec::Zero(2)));
      var_ref = Vec::Constant(2, 1 - r * r);
    }
    Vec m = Vec::Zero(2), m2 = Vec::Zero(2);
    for (int i = 0; i < n; ++i) {
      const Vec y = propose(k, s, eps, rng);
      m += y;
      m2 += y.cwiseProduct(y);
    }
    m /= n;
    const Vec var = m2 / n - m.cwiseProduct(m);
    for (int a = 0; a < 2; ++a) {
      CHECK(std::abs(m[a] - mean_ref[a]) < 5 * std::sqrt(var_ref[a] / n));
      CHECK(std::abs(var[a] / var_ref[a] - 1) < 0.02);
    }
  }
}

TEST_CASE("acceptance ratios match brute-force MH ratios") {
  for (int d : {2, 16}) {
    const TiltedTarget targets[] = {quad_target(d, 0.7), [&] {
                                      const GmmModel m = GmmModel::ring(d, 6, 4.0, 0.3);
                                      return TiltedTarget(m, sched(), RewardModel::mode_subset(m, {0, 1, 2}, 2.0, 0.5));
                                    }()};
    for (const TiltedTarget& t : targets) {
      Rng rng(d);
      for (int k = 0; k < 200; ++k) {
        const double eps = k % 2 ? 0.05 : 0.5;
        const Vec x = rng.normal_vector(d);
        ChainState s = make_state(t, x);
        const Vec xm = propose(Kernel::Mala, s, eps, rng);
        const Vec xp = propose(Kernel::Pcnl, s, eps, rng);
        CHECK(std::abs(log_accept_mala(x, xm, s.cache, cache_at(t, xm), eps, t.temperature()) -
                       brute_mala(t, x, xm, eps)) < 1e-8);
        CHECK(std::abs(log_accept_pcnl(x, xp, s.cache, cache_at(t, xp), eps, t.temperature()) -
                       brute_pcnl(t, x, xp, eps)) < 1e-8);
      }
    }
  }
}

TEST_CASE("detailed balance in the log domain") {
  const TiltedTarget t = quad_target(4, 0.5);
  Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    const double eps = 0.3;
    const Vec x = rng.normal_vector(4);
    ChainState s = make_state(t, x);
    for (Kernel kern : {Kernel::Mala, Kernel::Pcnl}) {
      const Vec xp = propose(kern, s, eps, rng);
      const PointCache cx = s.cache, cp = cache_at(t, xp);
      double lq_fwd, lq_bwd, la_fwd, la_bwd;
      if (kern == Kernel::Mala) {
        lq_fwd = testing::log_normal_iso(xp, x + eps / 2 * (cx.grad - x), eps);
        lq_bwd = testing::log_normal_iso(x, xp + eps / 2 * (cp.grad - xp), eps);
        la_fwd = log_accept_mala(x, xp, cx, cp, eps, t.temperature());
        la_bwd = log_accept_mala(xp, x, cp, cx, eps, t.temperature());
      } else {
        const double r = rho(eps), sd = std::sqrt(1 - r * r);
        lq_fwd = testing::log_normal_iso(xp, r * x + sd * std::sqrt(eps) / 2 * cx.grad, sd * sd);
        lq_bwd = testing::log_normal_iso(x, r * xp + sd * std::sqrt(eps) / 2 * cp.grad, sd * sd);
        la_fwd = log_accept_pcnl(x, xp, cx, cp, eps, t.temperature());
        la_bwd = log_accept_pcnl(xp, x, cp, cx, eps, t.temperature());
      }
      const double lhs = t.posterior_log_density_1(x) + lq_fwd + la_fwd;
      const double rhs = t.posterior_log_density_1(xp) + lq_bwd + la_bwd;
      CHECK(std::abs(lhs - rhs) < 1e-8);
    }
  }
}

TEST_CASE("acceptance ratio special cases") {
  const TiltedTarget t = toy_target();
  const TiltedTarget zero(GmmModel::ring(2, 6, 4.0, 0.3), sched(), RewardModel::zero(2));
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    const Vec x = rng.normal_vector(2), xp = rng.normal_vector(2);
    const PointCache c = cache_at(t, x);
    CHECK(log_accept_mala(x, x, c, c, 0.3, 1.0) == 0.0);
    CHECK(log_accept_pcnl(x, x, c, c, 0.3, 1.0) == 0.0);
    CHECK(log_accept_pcnl(x, xp, cache_at(zero, x), cache_at(zero, xp), 0.5, 1.0) == 0.0);
  }
  // Under the prior alone, small-step MALA accepts nearly everything.
  ChainConfig cfg{Kernel::Mala, 0.01, 0, 1, 1, 1000};
  Rng r(6);
  const ChainResult res = run_chain(zero, cfg, r.normal_vector(2), r);
  CHECK(res.diagnostics.acceptance_rate >= 0.95);
}

TEST_CASE("pCNL with zero reward follows the pCN trajectory exactly") {
  const TiltedTarget zero(GmmModel::ring(2, 6, 4.0, 0.3), sched(), RewardModel::zero(2));
  ChainConfig a{Kernel::Pcn, 0.5, 0, 1, 1, 500}, b{Kernel::Pcnl, 0.5, 0, 1, 1, 500};
  Rng ra(8), rb(8);
  const Vec x0 = Vec::Constant(2, 0.3);
  const ChainResult pa = run_chain(zero, a, x0, ra), pb = run_chain(zero, b, x0, rb);
  REQUIRE(pa.particles.size() == pb.particles.size());
  for (std::size_t i = 0; i < pa.particles.size(); ++i) CHECK(pa.particles[i] == pb.particles[i]);
  CHECK(pa.diagnostics.acceptance_rate == 1.0);
}

TEST_CASE("run_chain protocol arithmetic and budget") {
  const TiltedTarget t = toy_target();
  ChainConfig cfg{Kernel::Pcnl, 0.5, 50, 5, 1, 10};
  Rng rng(9);
  const ChainResult r = run_chain(t, cfg, rng.normal_vector(2), rng, 100);
  CHECK(r.particles.size() == 10);
  CHECK(r.diagnostics.nfe == 100);
  CHECK(r.diagnostics.proposed == 100);
  CHECK(r.diagnostics.reward_trace.size() == 100);
  // 100 post-burn-in steps at K = 10 means thinning 10, for 150 NFE in total.
  ChainConfig wide = cfg;
  wide.thinning = 10;
  const ChainResult w = run_chain(t, wide, rng.normal_vector(2), rng, 150);
  CHECK(w.particles.size() == 10);
  CHECK(w.diagnostics.nfe == 150);
  const auto before = rng.engine().position();
  CHECK_THROWS_AS(run_chain(t, wide, Vec::Zero(2), rng, 149), BudgetError);
  CHECK(rng.engine().position() == before);

  // ULA never rejects.
  ChainConfig u{Kernel::Ula, 0.5, 0, 1, 1, 200};
  CHECK(run_chain(t, u, Vec::Zero(2), rng).diagnostics.acceptance_rate == 1.0);
}

TEST_CASE("chain plans spend the budget exactly") {
  for (long budget : {50L, 97L, 500L, 750L}) {
    for (int k : {1, 2, 3, 10, 20, 30}) {
      long total = 0;
      int parts = 0;
      for (const ChainSpec& c : plan_chains(budget, k, 4, 0.2)) {
        CHECK(c.thinning >= 1);
        CHECK(c.burn_in >= 0);
        total += c.budget();
        parts += c.particles;
      }
      CHECK(total == budget);
      CHECK(parts == k);
    }
  }
  const auto p = plan_chains(50, 2, 4, 0.2);
  REQUIRE(p.size() == 2);
  CHECK(p[0].burn_in == 5);
  CHECK(p[0].thinning == 20);
  CHECK_THROWS_AS(plan_chains(3, 10, 4, 0.2), ConfigError);
}

TEST_CASE("multi-chain runs are deterministic and merge in chain order") {
  const TiltedTarget t = toy_target();
  const auto plan = plan_chains(200, 6, 4, 0.2);
  const MultiChainResult a = run_chains(t, Kernel::Pcnl, 0.5, plan, 1234);
  const MultiChainResult b = run_chains(t, Kernel::Pcnl, 0.5, plan, 1234);
  CHECK(a.nfe == 200);
  CHECK(a.particles.size() == 6);
  CHECK(a.particles == b.particles);
  CHECK(a.chains.size() == 4);
}

TEST_CASE("top-K-of-N") {
  const TiltedTarget t = quad_target(3, 1.0);
  Rng rng(10);
  {
    Rng a(3), b(3);
    const TopKResult all = top_k_of_n(t, 20, 20, a);
    const auto prior = t.model().sample_prior(20, b);
    CHECK(all.nfe == 20);
    auto key = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    std::vector<std::vector<double>> s1, s2;
    for (const Vec& v : all.particles) s1.push_back(key(v));
    for (const Vec& v : prior) s2.push_back(key(v));
    std::sort(s1.begin(), s1.end());
    std::sort(s2.begin(), s2.end());
    CHECK(s1 == s2);
  }
  {
    Rng a(4), b(4);
    const TopKResult r = top_k_of_n(t, 100, 10, a);
    const auto prior = t.model().sample_prior(100, b);
    std::vector<double> rewards;
    for (const Vec& x : prior) rewards.push_back(t.value_estimate(x, 1.0));
    const double kept_min = *std::min_element(r.rewards.begin(), r.rewards.end());
    for (int i = 0; i < 100; ++i)
      if (std::find(r.indices.begin(), r.indices.end(), i) == r.indices.end()) CHECK(rewards[i] <= kept_min);
  }
  CHECK_THROWS_AS(top_k_of_n(t, 5, 6, rng), DomainError);

  // Order-statistics oracle: mean of the top 10 of 100 i.i.d. rewards, from a large reward pool.
  std::vector<double> pool;
  for (const Vec& x : t.model().sample_prior(100000, rng)) pool.push_back(t.value_estimate(x, 1.0));
  double oracle = 0, prior_mean = std::accumulate(pool.begin(), pool.end(), 0.0) / pool.size();
  const int trials = 2000;
  for (int k = 0; k < trials; ++k) {
    std::vector<double> batch(100);
    for (double& v : batch) v = pool[static_cast<std::size_t>(rng.uniform() * pool.size())];
    std::partial_sort(batch.begin(), batch.begin() + 10, batch.end(), std::greater<>());
    oracle += std::accumulate(batch.begin(), batch.begin() + 10, 0.0) / 10 / trials;
  }
  double kept = 0, kept2 = 0;
  const int runs = 300;
  for (int k = 0; k < runs; ++k) {
    const TopKResult r = top_k_of_n(t, 100, 10, rng);
    const double m = std::accumulate(r.rewards.begin(), r.rewards.end(), 0.0) / 10;
    kept += m / runs;
    kept2 += m * m / runs;
  }
  const double se = std::sqrt((kept2 - kept * kept) / runs);
  CHECK(kept > prior_mean);
  CHECK(std::abs(kept - oracle) < 4 * se + 0.01);
}
