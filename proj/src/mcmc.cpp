#include "rsmc/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsmc/errors.hpp"

namespace rsmc {

std::string to_string(Kernel k) {
  switch (k) {
    case Kernel::Ula: return "ula";
    case Kernel::Mala: return "mala";
    case Kernel::Pcn: return "pcn";
    case Kernel::Pcnl: return "pcnl";
  }
  return "?";
}

Kernel kernel_from_string(const std::string& s) {
  if (s == "ula") return Kernel::Ula;
  if (s == "mala") return Kernel::Mala;
  if (s == "pcn") return Kernel::Pcn;
  if (s == "pcnl") return Kernel::Pcnl;
  throw ConfigError("unknown MCMC kernel '" + s + "'");
}

void ChainConfig::validate() const {
  if (!(step_size > 0)) throw ConfigError("MCMC step size must be positive");
  if ((kernel == Kernel::Pcn || kernel == Kernel::Pcnl) && step_size >= 8)
    throw ConfigError("pCN step size must be below 8 (rho > -1)");
  if (burn_in < 0) throw ConfigError("burn-in must be non-negative");
  if (thinning < 1) throw ConfigError("thinning must be at least 1");
  if (particles < 1) throw ConfigError("chain needs at least one particle");
  if (n_chains < 1) throw ConfigError("need at least one chain");
}

double rho(double step_size) {
  if (!(step_size >= 0 && step_size < 8)) throw DomainError("rho needs step size in [0, 8)");
  return (1 - step_size / 4) / (1 + step_size / 4);
}

ChainState make_state(const TiltedTarget& target, const Vec& x) {
  const Evaluation e = target.evaluate(x, 1.0);
  ChainState s;
  s.x = x;
  s.cache = {e.reward, e.value_grad};
  return s;
}

Vec propose(Kernel kernel, const ChainState& state, double eps, Rng& rng) {
  const Vec z = rng.normal_vector(static_cast<int>(state.x.size()));
  switch (kernel) {
    case Kernel::Ula:
    case Kernel::Mala:
      return state.x + (eps / 2) * (state.cache.grad - state.x) + std::sqrt(eps) * z;
    case Kernel::Pcn: {
      const double r = rho(eps);
      return r * state.x + std::sqrt(1 - r * r) * z;
    }
    case Kernel::Pcnl: {
      const double r = rho(eps);
      return r * state.x + std::sqrt(1 - r * r) * (z + (std::sqrt(eps) / 2) * state.cache.grad);
    }
  }
  return state.x;
}

namespace {

double log_phi_mala(const Vec& x, const Vec& xp, const PointCache& c, double eps, double temperature) {
  return c.reward / temperature - (eps / 8) * c.grad.squaredNorm() - (eps / 8) * x.squaredNorm() +
         0.5 * c.grad.dot(xp - (1 - eps / 2) * x);
}

double log_phi_pcnl(const Vec& x, const Vec& xp, const PointCache& c, double eps, double temperature) {
  const double r = rho(eps);
  return c.reward / temperature - (eps / 8) * c.grad.squaredNorm() +
         (std::sqrt(eps) / 2) * c.grad.dot((xp - r * x) / std::sqrt(1 - r * r));
}

}  // namespace

double log_accept_mala(const Vec& x, const Vec& xp, const PointCache& cx, const PointCache& cxp, double eps,
                       double temperature) {
  const double v = log_phi_mala(xp, x, cxp, eps, temperature) - log_phi_mala(x, xp, cx, eps, temperature);
  return std::min(0.0, v);
}

double log_accept_pcnl(const Vec& x, const Vec& xp, const PointCache& cx, const PointCache& cxp, double eps,
                       double temperature) {
  const double v = log_phi_pcnl(xp, x, cxp, eps, temperature) - log_phi_pcnl(x, xp, cx, eps, temperature);
  return std::min(0.0, v);
}

double log_accept_pcn(const PointCache& cx, const PointCache& cxp, double temperature) {
  return std::min(0.0, (cxp.reward - cx.reward) / temperature);
}

bool chain_step(const TiltedTarget& target, Kernel kernel, double eps, ChainState& state, Rng& rng) {
  const Vec xp = propose(kernel, state, eps, rng);
  const Evaluation e = target.evaluate(xp, 1.0);
  const PointCache cp{e.reward, e.value_grad};
  ++state.nfe;
  ++state.proposed;
  bool accept = true;
  if (kernel != Kernel::Ula) {
    double la = 0;
    if (kernel == Kernel::Mala) la = log_accept_mala(state.x, xp, state.cache, cp, eps, target.temperature());
    else if (kernel == Kernel::Pcnl) la = log_accept_pcnl(state.x, xp, state.cache, cp, eps, target.temperature());
    else la = log_accept_pcn(state.cache, cp, target.temperature());
    accept = std::log(rng.uniform()) < la;
  }
  if (accept) {
    state.x = xp;
    state.cache = cp;
    ++state.accepted;
  }
  return accept;
}

ChainResult run_chain(const TiltedTarget& target, const ChainConfig& config, const Vec& x_init, Rng& rng,
                      std::optional<long> nfe_budget) {
  config.validate();
  const long steps = config.steps_per_chain();
  if (nfe_budget && steps > *nfe_budget)
    throw BudgetError("chain needs " + std::to_string(steps) + " NFE but the budget is " +
                      std::to_string(*nfe_budget));
  ChainState state = make_state(target, x_init);
  ChainResult out;
  out.particles.reserve(config.particles);
  out.diagnostics.reward_trace.reserve(steps);
  for (long s = 1; s <= steps; ++s) {
    chain_step(target, config.kernel, config.step_size, state, rng);
    out.diagnostics.reward_trace.push_back(state.cache.reward);
    if (s > config.burn_in && (s - config.burn_in) % config.thinning == 0) out.particles.push_back(state.x);
  }
  out.diagnostics.accepted = state.accepted;
  out.diagnostics.proposed = state.proposed;
  out.diagnostics.nfe = state.nfe;
  out.diagnostics.acceptance_rate = steps > 0 ? double(state.accepted) / steps : 0.0;
  return out;
}

std::vector<ChainSpec> plan_chains(long nfe_budget, int particles, int n_chains, double burn_in_fraction) {
  if (particles < 1) throw ConfigError("chain plan needs at least one particle");
  if (n_chains < 1) throw ConfigError("chain plan needs at least one chain");
  if (!(burn_in_fraction >= 0 && burn_in_fraction < 1)) throw ConfigError("burn-in fraction must lie in [0, 1)");
  const int c = std::min(n_chains, particles);
  std::vector<ChainSpec> plan;
  for (int i = 0; i < c; ++i) {
    const int k = particles / c + (i < particles % c ? 1 : 0);
    const long b = nfe_budget / c + (i < nfe_budget % c ? 1 : 0);
    const long thin = (b - static_cast<long>(std::floor(burn_in_fraction * b))) / k;
    if (thin < 1)
      throw ConfigError("MCMC budget of " + std::to_string(b) + " NFE is too short for " + std::to_string(k) +
                        " particles after burn-in");
    plan.push_back({k, static_cast<int>(b - k * thin), static_cast<int>(thin)});
  }
  return plan;
}

MultiChainResult run_chains(const TiltedTarget& target, Kernel kernel, double eps, const std::vector<ChainSpec>& plan,
                            std::uint64_t key) {
  MultiChainResult out;
  long accepted = 0, proposed = 0;
  for (std::size_t c = 0; c < plan.size(); ++c) {
    Rng rng(derive_key(key, {c}));
    const Vec x0 = rng.normal_vector(target.dim());
    ChainConfig cfg{kernel, eps, plan[c].burn_in, plan[c].thinning, 1, plan[c].particles};
    ChainResult r = run_chain(target, cfg, x0, rng, plan[c].budget());
    out.particles.insert(out.particles.end(), r.particles.begin(), r.particles.end());
    out.nfe += r.diagnostics.nfe;
    accepted += r.diagnostics.accepted;
    proposed += r.diagnostics.proposed;
    out.chains.push_back(std::move(r.diagnostics));
  }
  out.acceptance_rate = proposed > 0 ? double(accepted) / proposed : 0.0;
  return out;
}

TopKResult top_k_of_n(const TiltedTarget& target, int n, int k, Rng& rng) {
  if (k < 1 || n < k) throw DomainError("top-K-of-N needs N >= K >= 1");
  std::vector<Vec> xs;
  std::vector<double> rs;
  xs.reserve(n);
  rs.reserve(n);
  for (int i = 0; i < n; ++i) {
    xs.push_back(rng.normal_vector(target.dim()));
    rs.push_back(target.value_estimate(xs.back(), 1.0));
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rs[a] > rs[b]; });
  TopKResult out;
  out.nfe = n;
  for (int j = 0; j < k; ++j) {
    out.indices.push_back(order[j]);
    out.particles.push_back(xs[order[j]]);
    out.rewards.push_back(rs[order[j]]);
  }
  return out;
}

}  // namespace rsmc
