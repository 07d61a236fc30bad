#pragma once

#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rsmc/budget.hpp"
#include "rsmc/config.hpp"
#include "rsmc/oracle.hpp"

namespace rsmc {

// One (method, swept value) combination of an experiment.
struct Cell {
  int index = 0;
  Method method = Method::PriorSmc;
  std::string parameter;         // empty when not swept
  std::optional<double> value;
  ExperimentConfig config;       // with the swept value applied
  Plan plan;
  std::string label;
};

std::vector<Cell> expand_cells(const ExperimentConfig& config);

struct ReplicateOutput {
  std::vector<Vec> samples;      // final x_0
  std::vector<double> weights;   // normalized
  double mean_reward = 0;
  double diversity = 0;
  std::optional<double> acceptance;
  double init_mean_reward = 0;   // mean r(x_{0|1}) of the initial particles
  long init_nfe = 0;
  long smc_nfe = 0;
  std::vector<double> ess_trace;
  long resamples = 0;
};

// One full pipeline (initializer + SMC, or single-particle trajectories) under stream key.
ReplicateOutput run_pipeline(const TiltedTarget& target, const Cell& cell, std::uint64_t key);

std::uint64_t replicate_key(std::uint64_t master, const Cell& cell, int seed_index, int replicate);

struct SeedRecord {
  int cell = 0;
  std::string method;
  std::string parameter;
  std::optional<double> value;
  int seed_index = 0;
  int replicates = 0;
  int particles = 0;
  long init_nfe_planned = 0;
  long smc_nfe_planned = 0;
  long init_nfe_measured = 0;
  long smc_nfe_measured = 0;
  std::optional<double> tv_p0_star;
  std::optional<double> w1_x;
  std::optional<double> w1_y;
  double mean_reward = 0;
  double diversity = 0;
  std::optional<double> acceptance;
  double init_mean_reward = 0;
  double resample_count = 0;
  std::vector<double> ess_trace;  // replicate-averaged ESS after each step

  bool operator==(const SeedRecord&) const = default;
};

struct Statistic {
  double mean = 0;
  double se = 0;
  int n = 0;
};

struct AggregateRecord {
  int cell = 0;
  std::string method;
  std::string parameter;
  std::optional<double> value;
  int n_seeds = 0;
  std::map<std::string, Statistic> metrics;
};

struct ExperimentResult {
  std::string name;
  std::vector<SeedRecord> seeds;  // ordered by (cell, seed index)
  std::vector<AggregateRecord> aggregates;
  std::vector<double> wall_seconds;  // per seed record, same order
  std::exception_ptr error;          // first failure; records before it are still present
};

struct RunOptions {
  int threads = 1;
  std::optional<int> seed_count;  // overrides config.seeds.count
  std::optional<int> first_seed;
  std::optional<std::uint64_t> master_seed;
  std::string oracle_cache_dir;  // empty disables caching
};

// Builds (or loads) the p_0* grid oracle used for TV; none when d != 2.
std::optional<GridOracle> evaluation_oracle(const ExperimentConfig& config, const std::string& cache_dir = "");

SeedRecord evaluate_seed(const TiltedTarget& target, const Cell& cell, int seed_index, std::uint64_t master,
                         int replicates, const GridOracle* oracle);

std::vector<AggregateRecord> aggregate(const std::vector<SeedRecord>& seeds);

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace rsmc
