#pragma once

#include <vector>

#include "rsmc/config.hpp"
#include "rsmc/mcmc.hpp"

namespace rsmc {

struct NfeBudget {
  long total = 0;
  double init_fraction = 0.5;
};

struct Plan {
  Method method = Method::PriorSmc;
  long total = 0;
  long init_nfe = 0;   // MCMC proposals or top-K candidates
  long smc_nfe = 0;    // K * n_steps, or samples * steps for single-particle runs
  int particles = 0;   // K; number of independent trajectories for single_particle
  int n_steps = 0;
  int topk_n = 0;
  std::vector<ChainSpec> chains;

  long planned_nfe() const { return init_nfe + smc_nfe; }
};

// prior_smc spends everything on SMC; posterior-initialized methods spend floor(total * f) on
// initialization and K = floor((total - init) / n_steps) particles in SMC.
Plan allocate_budget(Method method, const NfeBudget& budget, int n_steps, const McmcSpec& mcmc = {},
                     int single_particle_steps = 50);

Plan allocate_budget(const ExperimentConfig& config, Method method);

}  // namespace rsmc
