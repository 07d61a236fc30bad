#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsmc/gmm.hpp"
#include "rsmc/oracle.hpp"
#include "rsmc/reward.hpp"
#include "rsmc/schedule.hpp"

namespace rsmc {

inline constexpr int kSchemaVersion = 1;

enum class Method { PriorSmc, TopkSmc, UlaSmc, MalaSmc, PcnSmc, PcnlSmc, SingleParticle };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
bool uses_mcmc(Method m);
bool uses_init_budget(Method m);

struct ModelSpec {
  std::string kind = "ring";  // ring | isotropic (N(0, tau^2 I)) | explicit
  int dim = 2;
  int components = 6;
  double radius = 4.0;
  double tau = 0.3;
  std::vector<double> weights;
  std::vector<std::vector<double>> means;
  std::vector<double> variances;

  GmmModel build() const;
};

struct RewardSpec {
  std::string kind = "mode-subset";  // mode-subset | quadratic | linear | zero
  std::vector<int> modes{0, 1, 2};
  double sharpness = 2.0;
  std::vector<double> center;     // quadratic; zero-padded to the model dimension
  std::vector<double> direction;  // linear; zero-padded
  double temperature = 1.0;

  RewardModel build(const GmmModel& model) const;
};

struct ScheduleSpec {
  double diffusion_scale = 0.3;
  std::string diffusion = "sigma-scaled";  // sigma-scaled | constant
  double tweedie_delta = 0.3;
  double drift_delta = 1e-3;
  int smc_steps = 25;
  int single_particle_steps = 50;

  Schedule build() const;
};

struct SmcSpec {
  double ess_threshold = 0.5;
  // Weight prior-initialized particles by exp(r(x_{0|1}) / alpha) instead of uniformly.
  bool twisted_prior_init = false;
};

struct McmcSpec {
  int n_chains = 4;
  double burn_in_fraction = 0.2;
  std::map<std::string, double> step_size{{"ula", 0.05}, {"mala", 0.05}, {"pcn", 0.5}, {"pcnl", 0.5}};
};

struct BudgetSpec {
  long total = 100;
  double init_fraction = 0.5;
};

struct GuidanceSpec {
  double scale = 1.0;
  std::string schedule = "constant";  // constant | decaying
};

struct EvalSpec {
  GridSpec grid{};
  int coarsen = 25;      // TV is computed on (resolution / coarsen)^2 cells
  int replicates = 200;  // independent pipelines pooled per seed
};

struct SeedSpec {
  std::uint64_t master = 20240917;
  int first = 0;
  int count = 20;
};

struct SweepSpec {
  std::string parameter;  // step_size | init_fraction | particles | total_nfe | guidance_scale
  std::vector<double> values;
};

struct ExperimentConfig {
  std::string name = "custom";
  ModelSpec model;
  RewardSpec reward;
  ScheduleSpec schedule;
  SmcSpec smc;
  McmcSpec mcmc;
  BudgetSpec budget;
  GuidanceSpec guidance;
  EvalSpec evaluation;
  SeedSpec seeds;
  std::vector<Method> methods{Method::PriorSmc, Method::MalaSmc, Method::PcnlSmc};
  std::optional<SweepSpec> sweep;
  std::string output = "out";

  TiltedTarget build_target() const;
  double step_size(Method m) const;
  void validate() const;
};

// Parses JSON with // and /* */ comments. Unknown keys are errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace rsmc
