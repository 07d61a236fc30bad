#include "rsmc/budget.hpp"

#include <cmath>

#include "rsmc/errors.hpp"

namespace rsmc {

Plan allocate_budget(Method method, const NfeBudget& budget, int n_steps, const McmcSpec& mcmc,
                     int single_particle_steps) {
  if (budget.total < 1) throw ConfigError("NFE budget must be positive");
  if (n_steps < 1) throw ConfigError("SMC needs at least one step");
  if (!(budget.init_fraction >= 0 && budget.init_fraction <= 1)) throw ConfigError("init fraction must lie in [0, 1]");
  Plan p;
  p.method = method;
  p.total = budget.total;
  if (method == Method::SingleParticle) {
    p.n_steps = single_particle_steps;
    p.particles = static_cast<int>(budget.total / single_particle_steps);
    if (p.particles < 1)
      throw ConfigError("budget of " + std::to_string(budget.total) + " NFE is below one " +
                        std::to_string(single_particle_steps) + "-step trajectory");
    p.smc_nfe = long(p.particles) * single_particle_steps;
    return p;
  }
  p.n_steps = n_steps;
  if (uses_init_budget(method)) p.init_nfe = static_cast<long>(std::floor(budget.total * budget.init_fraction));
  const long k = (budget.total - p.init_nfe) / n_steps;
  if (k < 1)
    throw ConfigError("budget leaves " + std::to_string(budget.total - p.init_nfe) + " NFE for SMC, below one particle over " +
                      std::to_string(n_steps) + " steps");
  p.particles = static_cast<int>(k);
  p.smc_nfe = k * n_steps;
  if (method == Method::TopkSmc) {
    p.topk_n = static_cast<int>(p.init_nfe);
    if (p.topk_n < p.particles)
      throw ConfigError("top-K-of-N needs N = " + std::to_string(p.topk_n) + " >= K = " + std::to_string(p.particles));
  } else if (uses_mcmc(method)) {
    if (p.init_nfe < 1) throw ConfigError("MCMC initialization needs a positive init budget");
    p.chains = plan_chains(p.init_nfe, p.particles, mcmc.n_chains, mcmc.burn_in_fraction);
  }
  return p;
}

Plan allocate_budget(const ExperimentConfig& config, Method method) {
  return allocate_budget(method, {config.budget.total, config.budget.init_fraction}, config.schedule.smc_steps,
                         config.mcmc, config.schedule.single_particle_steps);
}

}  // namespace rsmc
