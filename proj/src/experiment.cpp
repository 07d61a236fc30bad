#include "rsmc/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include "rsmc/errors.hpp"
#include "rsmc/mcmc.hpp"
#include "rsmc/smc.hpp"

namespace rsmc {

namespace {

std::string format_value(double v) {
  std::ostringstream s;
  s.precision(12);
  s << v;
  return s.str();
}

bool swept(Method m, const std::string& parameter) {
  if (parameter == "step_size") return uses_mcmc(m);
  if (parameter == "init_fraction") return uses_init_budget(m);
  if (parameter == "guidance_scale") return m == Method::SingleParticle;
  return true;
}

void apply(ExperimentConfig& c, Method m, const std::string& parameter, double v) {
  if (parameter == "step_size") {
    const std::string name = to_string(m);
    c.mcmc.step_size[name.substr(0, name.find('_'))] = v;
  } else if (parameter == "init_fraction") {
    c.budget.init_fraction = v;
  } else if (parameter == "total_nfe") {
    c.budget.total = std::lround(v);
  } else if (parameter == "guidance_scale") {
    c.guidance.scale = v;
  } else if (parameter == "particles") {
    const long k = std::lround(v);
    if (m == Method::SingleParticle) {
      c.budget.total = k * c.schedule.single_particle_steps;
    } else {
      const double f = uses_init_budget(m) ? c.budget.init_fraction : 0.0;
      if (f >= 1) throw ConfigError("particles sweep needs init_fraction < 1");
      c.budget.total = static_cast<long>(std::ceil(k * c.schedule.smc_steps / (1 - f) - 1e-9));
    }
  }
}

ReplicateOutput run_single(const TiltedTarget& target, const Cell& cell, std::uint64_t key) {
  const ExperimentConfig& c = cell.config;
  GuidanceConfig g{cell.plan.n_steps, c.guidance.scale,
                   c.guidance.schedule == "decaying" ? GuidanceSchedule::Decaying : GuidanceSchedule::Constant};
  ReplicateOutput out;
  double reward = 0;
  for (int i = 0; i < cell.plan.particles; ++i) {
    Rng rng(derive_key(key, {fnv1a("single"), static_cast<std::uint64_t>(i)}));
    SingleParticleResult r = run_single_particle(target, g, rng);
    out.smc_nfe += r.nfe;
    reward += r.reward;
    out.samples.push_back(r.x);
  }
  out.weights.assign(out.samples.size(), 1.0 / out.samples.size());
  out.mean_reward = reward / out.samples.size();
  out.diversity = mean_pairwise_distance(out.samples);
  return out;
}

}  // namespace

std::vector<Cell> expand_cells(const ExperimentConfig& config) {
  std::vector<Cell> cells;
  auto add = [&](Method m, const std::string& parameter, std::optional<double> v) {
    Cell cell;
    cell.index = static_cast<int>(cells.size());
    cell.method = m;
    cell.parameter = parameter;
    cell.value = v;
    cell.config = config;
    if (v) apply(cell.config, m, parameter, *v);
    cell.config.validate();
    cell.plan = allocate_budget(cell.config, m);
    cell.label = to_string(m) + (v ? "/" + parameter + "=" + format_value(*v) : "");
    cells.push_back(std::move(cell));
  };
  for (Method m : config.methods) {
    if (config.sweep && swept(m, config.sweep->parameter)) {
      for (double v : config.sweep->values) add(m, config.sweep->parameter, v);
    } else {
      add(m, "", std::nullopt);
    }
  }
  return cells;
}

std::uint64_t replicate_key(std::uint64_t master, const Cell& cell, int seed_index, int replicate) {
  return derive_key(master, {fnv1a(cell.label), static_cast<std::uint64_t>(seed_index),
                             static_cast<std::uint64_t>(replicate)});
}

ReplicateOutput run_pipeline(const TiltedTarget& target, const Cell& cell, std::uint64_t key) {
  const Plan& plan = cell.plan;
  if (cell.method == Method::SingleParticle) {
    ReplicateOutput out = run_single(target, cell, key);
    if (out.smc_nfe != plan.smc_nfe) throw BudgetError("NFE ledger mismatch in " + cell.label);
    return out;
  }
  ReplicateOutput out;
  Rng init_rng(derive_key(key, {fnv1a("init")}));
  std::vector<Vec> initial;
  std::optional<std::vector<double>> log_w;
  switch (cell.method) {
    case Method::PriorSmc:
      initial = target.model().sample_prior(plan.particles, init_rng);
      if (cell.config.smc.twisted_prior_init) {
        log_w.emplace();
        for (const Vec& x : initial) log_w->push_back(target.value_estimate(x, 1.0) / target.temperature());
      }
      break;
    case Method::TopkSmc: {
      TopKResult r = top_k_of_n(target, plan.topk_n, plan.particles, init_rng);
      out.init_nfe = r.nfe;
      initial = std::move(r.particles);
      break;
    }
    default: {
      const std::string name = to_string(cell.method);
      const Kernel kernel = kernel_from_string(name.substr(0, name.find('_')));
      MultiChainResult r = run_chains(target, kernel, cell.config.step_size(cell.method), plan.chains,
                                      derive_key(key, {fnv1a("chains")}));
      out.init_nfe = r.nfe;
      out.acceptance = r.acceptance_rate;
      initial = std::move(r.particles);
    }
  }
  if (out.init_nfe != plan.init_nfe)
    throw BudgetError("NFE ledger mismatch in " + cell.label + ": initializer used " + std::to_string(out.init_nfe) +
                      ", planned " + std::to_string(plan.init_nfe));
  double init_reward = 0;
  for (const Vec& x : initial) init_reward += target.value_estimate(x, 1.0);
  out.init_mean_reward = init_reward / initial.size();

  SmcConfig sc{plan.particles, plan.n_steps, cell.config.smc.ess_threshold, Resampling::Multinomial};
  SmcResult s = run_smc(target, std::move(initial), sc, derive_key(key, {fnv1a("smc")}), std::move(log_w),
                        plan.total - out.init_nfe);
  out.smc_nfe = s.system.nfe_used;
  if (out.smc_nfe != plan.smc_nfe)
    throw BudgetError("NFE ledger mismatch in " + cell.label + ": SMC used " + std::to_string(out.smc_nfe) +
                      ", planned " + std::to_string(plan.smc_nfe));
  out.samples = std::move(s.system.positions);
  out.weights = std::move(s.weights);
  out.mean_reward = s.mean_reward;
  out.diversity = s.diversity;
  out.resamples = s.resample_count;
  for (const StepDiagnostics& d : s.steps) out.ess_trace.push_back(d.ess);
  return out;
}

SeedRecord evaluate_seed(const TiltedTarget& target, const Cell& cell, int seed_index, std::uint64_t master,
                         int replicates, const GridOracle* oracle) {
  SeedRecord rec;
  rec.cell = cell.index;
  rec.method = to_string(cell.method);
  rec.parameter = cell.parameter;
  rec.value = cell.value;
  rec.seed_index = seed_index;
  rec.replicates = replicates;
  rec.particles = cell.plan.particles;
  rec.init_nfe_planned = cell.plan.init_nfe;
  rec.smc_nfe_planned = cell.plan.smc_nfe;
  std::vector<Vec> pooled;
  std::vector<double> pooled_w;
  double acc = 0;
  int acc_n = 0;
  for (int r = 0; r < replicates; ++r) {
    ReplicateOutput o = run_pipeline(target, cell, replicate_key(master, cell, seed_index, r));
    rec.init_nfe_measured += o.init_nfe;
    rec.smc_nfe_measured += o.smc_nfe;
    rec.mean_reward += o.mean_reward / replicates;
    rec.diversity += o.diversity / replicates;
    rec.init_mean_reward += o.init_mean_reward / replicates;
    rec.resample_count += double(o.resamples) / replicates;
    if (o.acceptance) {
      acc += *o.acceptance;
      ++acc_n;
    }
    if (rec.ess_trace.empty()) rec.ess_trace.assign(o.ess_trace.size(), 0.0);
    for (std::size_t k = 0; k < o.ess_trace.size(); ++k) rec.ess_trace[k] += o.ess_trace[k] / replicates;
    for (std::size_t i = 0; i < o.samples.size(); ++i) {
      pooled.push_back(std::move(o.samples[i]));
      pooled_w.push_back(o.weights[i] / replicates);
    }
  }
  // The ledger holds per-replicate counts.
  rec.init_nfe_measured /= replicates;
  rec.smc_nfe_measured /= replicates;
  if (acc_n) rec.acceptance = acc / acc_n;
  if (oracle) {
    rec.tv_p0_star = tv_distance(pooled, *oracle, &pooled_w);
    const auto w1 = w1_per_axis(pooled, *oracle, &pooled_w);
    rec.w1_x = w1[0];
    rec.w1_y = w1[1];
  }
  return rec;
}

std::vector<AggregateRecord> aggregate(const std::vector<SeedRecord>& seeds) {
  std::vector<AggregateRecord> out;
  std::map<int, std::map<std::string, std::vector<double>>> values;
  std::map<int, std::size_t> slot;
  for (const SeedRecord& s : seeds) {
    if (!slot.count(s.cell)) {
      slot[s.cell] = out.size();
      out.push_back({s.cell, s.method, s.parameter, s.value, 0, {}});
    }
    ++out[slot[s.cell]].n_seeds;
    auto& v = values[s.cell];
    v["mean_reward"].push_back(s.mean_reward);
    v["diversity"].push_back(s.diversity);
    v["init_mean_reward"].push_back(s.init_mean_reward);
    v["resample_count"].push_back(s.resample_count);
    if (s.tv_p0_star) v["tv_p0_star"].push_back(*s.tv_p0_star);
    if (s.w1_x) v["w1_x"].push_back(*s.w1_x);
    if (s.w1_y) v["w1_y"].push_back(*s.w1_y);
    if (s.acceptance) v["acceptance"].push_back(*s.acceptance);
  }
  for (AggregateRecord& a : out) {
    for (const auto& [name, xs] : values[a.cell]) {
      Statistic st;
      st.n = static_cast<int>(xs.size());
      for (double x : xs) st.mean += x / st.n;
      if (st.n > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - st.mean) * (x - st.mean);
        st.se = std::sqrt(ss / (st.n - 1) / st.n);
      }
      a.metrics[name] = st;
    }
  }
  return out;
}

std::optional<GridOracle> evaluation_oracle(const ExperimentConfig& config, const std::string& cache_dir) {
  if (config.model.dim != 2) return std::nullopt;
  const TiltedTarget target = config.build_target();
  const GridSpec& spec = config.evaluation.grid;
  if (!target.reward().upper_bound()) return std::nullopt;
  std::optional<GridOracle> fine;
  std::string path;
  const std::uint64_t key = oracle_cache_key(target, TargetKind::P0Star, spec);
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    std::ostringstream name;
    name << cache_dir << "/p0_star_" << std::hex << key << ".grid";
    path = name.str();
    fine = GridOracle::load(path, key);
  }
  if (!fine) {
    fine = build_oracle(target, TargetKind::P0Star, spec);
    if (!path.empty()) fine->save(path, key);
  }
  return fine->coarsen(config.evaluation.coarsen);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  ExperimentResult result;
  result.name = config.name;
  const std::vector<Cell> cells = expand_cells(config);
  const TiltedTarget target = config.build_target();
  const std::optional<GridOracle> oracle = evaluation_oracle(config, options.oracle_cache_dir);
  const int n_seeds = options.seed_count.value_or(config.seeds.count);
  const int first = options.first_seed.value_or(config.seeds.first);
  const std::uint64_t master = options.master_seed.value_or(config.seeds.master);
  if (n_seeds < 1) throw ConfigError("need at least one seed");

  const std::size_t jobs = cells.size() * n_seeds;
  std::vector<std::optional<SeedRecord>> records(jobs);
  std::vector<double> seconds(jobs, 0.0);
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&]() {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs;) {
      if (failed) break;
      const Cell& cell = cells[j / n_seeds];
      const int seed = first + static_cast<int>(j % n_seeds);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        records[j] = evaluate_seed(target, cell, seed, master, cell.config.evaluation.replicates,
                                   oracle ? &*oracle : nullptr);
      } catch (...) {
        errors[j] = std::current_exception();
        failed = true;
      }
      seconds[j] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(jobs)));
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (std::size_t j = 0; j < jobs; ++j) {
    if (errors[j] && !result.error) result.error = errors[j];
    if (records[j]) {
      result.seeds.push_back(std::move(*records[j]));
      result.wall_seconds.push_back(seconds[j]);
    }
  }
  result.aggregates = aggregate(result.seeds);
  return result;
}

}  // namespace rsmc
