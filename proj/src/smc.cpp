#include "rsmc/smc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "rsmc/errors.hpp"

namespace rsmc {

void SmcConfig::validate() const {
  if (particles < 1) throw ConfigError("SMC needs at least one particle");
  if (n_steps < 1) throw ConfigError("SMC needs at least one step");
  if (!(ess_threshold > 0 && ess_threshold <= 1)) throw ConfigError("ESS threshold must lie in (0, 1]");
}

ParticleCache model_call(const TiltedTarget& target, const Vec& x, double t) {
  const Schedule& sch = target.schedule();
  const GmmModel& model = target.model();
  const double tt = sch.tweedie_time(t), td = sch.drift_time(t);
  const GmmEval e = model.evaluate(x, tt);
  ParticleCache c;
  c.x0 = GmmModel::tweedie(e, x);
  c.reward = target.reward().value(c.x0);
  c.value_grad = GmmModel::tweedie_vjp(e, target.reward().grad(c.x0)) / target.temperature();
  c.score = td == tt ? e.score : model.score_t(x, td);
  return c;
}

ParticleSystem make_system(const TiltedTarget& target, std::vector<Vec> positions, std::uint64_t key,
                           std::optional<std::vector<double>> log_weights) {
  ParticleSystem s;
  const int k = static_cast<int>(positions.size());
  if (k < 1) throw ConfigError("SMC needs at least one particle");
  s.positions = std::move(positions);
  s.log_weights = log_weights ? std::move(*log_weights) : std::vector<double>(k, 0.0);
  if (static_cast<int>(s.log_weights.size()) != k) throw ConfigError("initial weight count does not match particles");
  s.t = 1.0;
  s.cache.reserve(k);
  s.streams.reserve(k);
  for (int i = 0; i < k; ++i) {
    s.cache.push_back(model_call(target, s.positions[i], 1.0));
    s.streams.emplace_back(derive_key(key, {fnv1a("particle"), static_cast<std::uint64_t>(i)}));
  }
  s.nfe_used = k;
  return s;
}

double ess(std::span<const double> log_weights) {
  double mx = -INFINITY;
  for (double w : log_weights) mx = std::max(mx, w);
  if (!std::isfinite(mx)) throw DegeneracyError("all particle weights are zero");
  double s1 = 0, s2 = 0;
  for (double w : log_weights) {
    const double e = std::exp(w - mx);
    s1 += e;
    s2 += e * e;
  }
  return s1 * s1 / s2;
}

std::vector<double> normalized_weights(std::span<const double> log_weights) {
  double mx = -INFINITY;
  for (double w : log_weights) mx = std::max(mx, w);
  if (!std::isfinite(mx)) throw DegeneracyError("all particle weights are zero");
  std::vector<double> w(log_weights.size());
  double total = 0;
  for (std::size_t i = 0; i < w.size(); ++i) total += (w[i] = std::exp(log_weights[i] - mx));
  for (double& v : w) v /= total;
  return w;
}

std::vector<int> resample_multinomial(ParticleSystem& system, Rng& rng) {
  const std::vector<double> w = normalized_weights(system.log_weights);
  std::vector<double> cdf(w.size());
  std::partial_sum(w.begin(), w.end(), cdf.begin());
  const int k = system.size();
  std::vector<int> anc(k);
  for (int i = 0; i < k; ++i) {
    const double u = rng.uniform() * cdf.back();
    anc[i] = std::min<int>(static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), k - 1);
  }
  std::vector<Vec> pos(k);
  std::vector<ParticleCache> cache(k);
  for (int i = 0; i < k; ++i) {
    pos[i] = system.positions[anc[i]];
    cache[i] = system.cache[anc[i]];
  }
  system.positions = std::move(pos);
  system.cache = std::move(cache);
  std::fill(system.log_weights.begin(), system.log_weights.end(), 0.0);
  system.ancestry.push_back(anc);
  return anc;
}

double gaussian_log_density(const Vec& x, const Vec& mean, double variance) {
  return -0.5 * (x - mean).squaredNorm() / variance - 0.5 * x.size() * std::log(2 * std::numbers::pi * variance);
}

Proposal propose_step(const TiltedTarget& target, ParticleSystem& system, double dt) {
  const double t = system.t;
  if (!(dt > 0) || t - dt < -1e-12) throw DomainError("SMC step would move past t = 0");
  const double t_next = std::max(0.0, t - dt) < 1e-12 ? 0.0 : t - dt;
  const Schedule& sch = target.schedule();
  const double td = sch.drift_time(t);
  const double g = sch.g(td);
  const int k = system.size();
  Proposal p;
  p.variance = g * g * dt;
  p.t_next = t_next;
  p.candidates.resize(k);
  p.pretrained_mean.resize(k);
  p.proposal_mean.resize(k);
  p.cache.resize(k);
  for (int i = 0; i < k; ++i) {
    const Vec& x = system.positions[i];
    const ParticleCache& c = system.cache[i];
    p.pretrained_mean[i] = x - reverse_drift(sch, x, td, c.score) * dt;
    p.proposal_mean[i] = p.pretrained_mean[i] + (g * g * dt) * c.value_grad;
    p.candidates[i] = p.proposal_mean[i] + std::sqrt(p.variance) * system.streams[i].normal_vector(target.dim());
    p.cache[i] = model_call(target, p.candidates[i], t_next);
  }
  p.nfe = t_next > 0 ? k : 0;
  return p;
}

std::vector<double> update_log_weights(const TiltedTarget& target, const ParticleSystem& system,
                                       const Proposal& proposal) {
  const double a = target.temperature();
  std::vector<double> lw(system.log_weights);
  for (int i = 0; i < system.size(); ++i) {
    double inc = (proposal.cache[i].reward - system.cache[i].reward) / a;
    if (proposal.variance > 0) {
      const Vec& x = proposal.candidates[i];
      inc += ((x - proposal.proposal_mean[i]).squaredNorm() - (x - proposal.pretrained_mean[i]).squaredNorm()) /
             (2 * proposal.variance);
    }
    lw[i] += inc;
  }
  return lw;
}

double mean_pairwise_distance(const std::vector<Vec>& points) {
  const std::size_t n = points.size();
  if (n < 2) return 0.0;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) total += (points[i] - points[j]).norm();
  return total / (double(n) * (n - 1) / 2);
}

SmcResult run_smc(const TiltedTarget& target, std::vector<Vec> initial, const SmcConfig& config, std::uint64_t key,
                  std::optional<std::vector<double>> initial_log_weights, std::optional<long> nfe_budget) {
  config.validate();
  if (static_cast<int>(initial.size()) != config.particles)
    throw ConfigError("SMC received " + std::to_string(initial.size()) + " particles, expected " +
                      std::to_string(config.particles));
  const long planned = long(config.particles) * config.n_steps;
  if (nfe_budget && planned > *nfe_budget)
    throw BudgetError("SMC needs " + std::to_string(planned) + " NFE but the budget is " +
                      std::to_string(*nfe_budget));
  SmcResult out;
  out.system = make_system(target, std::move(initial), key, std::move(initial_log_weights));
  ParticleSystem& sys = out.system;
  Rng resampler(derive_key(key, {fnv1a("resample")}));
  const std::vector<double> grid = Schedule::time_grid(config.n_steps);
  for (int k = 0; k < config.n_steps; ++k) {
    Proposal p = propose_step(target, sys, grid[k] - grid[k + 1]);
    sys.log_weights = update_log_weights(target, sys, p);
    sys.positions = std::move(p.candidates);
    sys.cache = std::move(p.cache);
    sys.t = grid[k + 1];
    sys.nfe_used += p.nfe;
    StepDiagnostics d;
    d.t = sys.t;
    d.ess = ess(sys.log_weights);
    double mr = 0;
    for (const ParticleCache& c : sys.cache) mr += c.reward;
    d.mean_reward = mr / sys.size();
    if (d.ess < config.ess_threshold * sys.size()) {
      resample_multinomial(sys, resampler);
      d.resampled = true;
      ++out.resample_count;
    }
    d.nfe = sys.nfe_used;
    out.steps.push_back(d);
  }
  out.weights = normalized_weights(sys.log_weights);
  std::vector<Vec> x0s;
  for (int i = 0; i < sys.size(); ++i) {
    out.mean_reward += out.weights[i] * sys.cache[i].reward;
    x0s.push_back(sys.cache[i].x0);
  }
  out.diversity = mean_pairwise_distance(x0s);
  return out;
}

SingleParticleResult run_single_particle(const TiltedTarget& target, const GuidanceConfig& config, Rng& rng) {
  if (config.n_steps < 1) throw ConfigError("single-particle guidance needs at least one step");
  const Schedule& sch = target.schedule();
  const std::vector<double> grid = Schedule::time_grid(config.n_steps);
  SingleParticleResult out;
  Vec x = rng.normal_vector(target.dim());
  for (int k = 0; k < config.n_steps; ++k) {
    const double t = grid[k], dt = grid[k] - grid[k + 1];
    const ParticleCache c = model_call(target, x, t);
    ++out.nfe;
    const double td = sch.drift_time(t);
    const double g = sch.g(td);
    const double scale = config.schedule == GuidanceSchedule::Constant ? config.scale : config.scale * t;
    x = x - reverse_drift(sch, x, td, c.score) * dt + (scale * g * g * dt) * c.value_grad +
        (g * std::sqrt(dt)) * rng.normal_vector(target.dim());
  }
  out.x = x;
  out.reward = target.reward().value(x);
  return out;
}

}  // namespace rsmc
