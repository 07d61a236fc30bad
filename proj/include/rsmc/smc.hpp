#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rsmc/reward.hpp"
#include "rsmc/rng.hpp"

namespace rsmc {

enum class Resampling { Multinomial };

struct SmcConfig {
  int particles = 1;
  int n_steps = 25;
  double ess_threshold = 0.5;  // resample when ESS < ess_threshold * K
  Resampling resampling = Resampling::Multinomial;

  void validate() const;
};

// Model output at a particle's current (x, t). x0, reward and value_grad come from the Tweedie
// estimate at tweedie_time(t); score is the p_t score at drift_time(t).
struct ParticleCache {
  Vec x0;
  double reward = 0;
  Vec value_grad;
  Vec score;
};

struct ParticleSystem {
  std::vector<Vec> positions;
  std::vector<double> log_weights;
  double t = 1.0;
  std::vector<std::vector<int>> ancestry;  // one 0-based ancestor vector per resampling event
  long nfe_used = 0;
  std::vector<ParticleCache> cache;
  std::vector<Rng> streams;

  int size() const { return static_cast<int>(positions.size()); }
};

// Evaluates the model at (x, t). Costs one NFE unless t == 0.
ParticleCache model_call(const TiltedTarget& target, const Vec& x, double t);

// Builds a system at t = 1 from initial particles and charges K NFE for their caches.
ParticleSystem make_system(const TiltedTarget& target, std::vector<Vec> positions, std::uint64_t key,
                           std::optional<std::vector<double>> log_weights = std::nullopt);

double ess(std::span<const double> log_weights);
std::vector<double> normalized_weights(std::span<const double> log_weights);

// Gathers positions, caches and nothing else; streams stay with their slots. Returns the ancestors.
std::vector<int> resample_multinomial(ParticleSystem& system, Rng& rng);

struct Proposal {
  std::vector<Vec> candidates;
  std::vector<Vec> pretrained_mean;
  std::vector<Vec> proposal_mean;
  double variance = 0;  // g(t)^2 dt
  double t_next = 0;
  std::vector<ParticleCache> cache;  // at the candidates, time t_next
  long nfe = 0;
};

Proposal propose_step(const TiltedTarget& target, ParticleSystem& system, double dt);

std::vector<double> update_log_weights(const TiltedTarget& target, const ParticleSystem& system,
                                       const Proposal& proposal);

// Log of the isotropic Gaussian N(x; mean, variance I).
double gaussian_log_density(const Vec& x, const Vec& mean, double variance);

struct StepDiagnostics {
  double t = 0;
  double ess = 0;
  bool resampled = false;
  double mean_reward = 0;
  long nfe = 0;
};

struct SmcResult {
  ParticleSystem system;
  std::vector<StepDiagnostics> steps;
  std::vector<double> weights;  // normalized final weights
  double mean_reward = 0;       // weighted mean of r(x_0)
  double diversity = 0;         // mean pairwise distance of the final Tweedie estimates
  long resample_count = 0;
};

SmcResult run_smc(const TiltedTarget& target, std::vector<Vec> initial, const SmcConfig& config, std::uint64_t key,
                  std::optional<std::vector<double>> initial_log_weights = std::nullopt,
                  std::optional<long> nfe_budget = std::nullopt);

enum class GuidanceSchedule { Constant, Decaying };

struct GuidanceConfig {
  int n_steps = 50;
  double scale = 1.0;
  GuidanceSchedule schedule = GuidanceSchedule::Constant;  // Decaying multiplies the scale by t
};

struct SingleParticleResult {
  Vec x;
  double reward = 0;
  long nfe = 0;
};

SingleParticleResult run_single_particle(const TiltedTarget& target, const GuidanceConfig& config, Rng& rng);

double mean_pairwise_distance(const std::vector<Vec>& points);

}  // namespace rsmc
