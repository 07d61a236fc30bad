#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rsmc/reward.hpp"
#include "rsmc/rng.hpp"

namespace rsmc {

enum class Kernel { Ula, Mala, Pcn, Pcnl };

std::string to_string(Kernel k);
Kernel kernel_from_string(const std::string& s);

struct ChainConfig {
  Kernel kernel = Kernel::Pcnl;
  double step_size = 0.5;
  int burn_in = 0;
  int thinning = 1;
  int n_chains = 1;
  int particles = 1;

  long steps_per_chain() const { return burn_in + long(particles) * thinning; }
  void validate() const;
};

// Reward and pulled-back gradient of r / alpha at x_{0|1}(x).
struct PointCache {
  double reward = 0;
  Vec grad;
};

struct ChainState {
  Vec x;
  PointCache cache;
  long accepted = 0;
  long proposed = 0;
  long nfe = 0;
};

double rho(double step_size);

// Fresh state at x. This evaluation is not charged to the budget.
ChainState make_state(const TiltedTarget& target, const Vec& x);

// Every kernel draws d normals here; the accept step then draws exactly one uniform.
Vec propose(Kernel kernel, const ChainState& state, double step_size, Rng& rng);

double log_accept_mala(const Vec& x, const Vec& xp, const PointCache& cx, const PointCache& cxp, double step_size,
                       double temperature);
double log_accept_pcnl(const Vec& x, const Vec& xp, const PointCache& cx, const PointCache& cxp, double step_size,
                       double temperature);
double log_accept_pcn(const PointCache& cx, const PointCache& cxp, double temperature);

// One proposal + MH step; returns whether the move was accepted.
bool chain_step(const TiltedTarget& target, Kernel kernel, double step_size, ChainState& state, Rng& rng);

struct ChainDiagnostics {
  double acceptance_rate = 0;
  long accepted = 0;
  long proposed = 0;
  long nfe = 0;
  std::vector<double> reward_trace;
};

struct ChainResult {
  std::vector<Vec> particles;
  ChainDiagnostics diagnostics;
};

// Single chain from x_init; `config.n_chains` is ignored. Throws BudgetError before any work
// when burn_in + particles * thinning exceeds nfe_budget.
ChainResult run_chain(const TiltedTarget& target, const ChainConfig& config, const Vec& x_init, Rng& rng,
                      std::optional<long> nfe_budget = std::nullopt);

struct ChainSpec {
  int particles;
  int burn_in;
  int thinning;
  long budget() const { return burn_in + long(particles) * thinning; }
};

// Splits K particles and an NFE budget over min(n_chains, K) chains. Each chain spends its share exactly:
// thinning = floor((B - floor(f B)) / K_c), burn_in = B - K_c thinning.
std::vector<ChainSpec> plan_chains(long nfe_budget, int particles, int n_chains, double burn_in_fraction);

struct MultiChainResult {
  std::vector<Vec> particles;  // merged in chain order
  std::vector<ChainDiagnostics> chains;
  long nfe = 0;
  double acceptance_rate = 0;
};

// Chain c starts from a prior draw of the stream derive_key(key, {c}) and keeps using that stream.
MultiChainResult run_chains(const TiltedTarget& target, Kernel kernel, double step_size,
                            const std::vector<ChainSpec>& plan, std::uint64_t key);

struct TopKResult {
  std::vector<Vec> particles;
  std::vector<double> rewards;
  std::vector<int> indices;
  long nfe = 0;
};

TopKResult top_k_of_n(const TiltedTarget& target, int n, int k, Rng& rng);

}  // namespace rsmc
