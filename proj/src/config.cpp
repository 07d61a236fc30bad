#include "rsmc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "rsmc/errors.hpp"
#include "rsmc/mcmc.hpp"

namespace rsmc {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::PriorSmc: return "prior_smc";
    case Method::TopkSmc: return "topk_smc";
    case Method::UlaSmc: return "ula_smc";
    case Method::MalaSmc: return "mala_smc";
    case Method::PcnSmc: return "pcn_smc";
    case Method::PcnlSmc: return "pcnl_smc";
    case Method::SingleParticle: return "single_particle";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::PriorSmc, Method::TopkSmc, Method::UlaSmc, Method::MalaSmc, Method::PcnSmc, Method::PcnlSmc,
                   Method::SingleParticle})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown method '" + s + "'");
}

bool uses_mcmc(Method m) {
  return m == Method::UlaSmc || m == Method::MalaSmc || m == Method::PcnSmc || m == Method::PcnlSmc;
}

bool uses_init_budget(Method m) { return uses_mcmc(m) || m == Method::TopkSmc; }

GmmModel ModelSpec::build() const {
  if (kind == "ring") return GmmModel::ring(dim, components, radius, tau);
  if (kind == "isotropic") {
    if (dim < 1) throw ConfigError("model.dim must be positive");
    return GmmModel::isotropic(Vec::Zero(dim), tau * tau);
  }
  if (kind == "explicit") {
    std::vector<Vec> mus;
    for (const auto& m : means) mus.push_back(Eigen::Map<const Vec>(m.data(), static_cast<Eigen::Index>(m.size())));
    return GmmModel(weights, mus, variances);
  }
  throw ConfigError("unknown model kind '" + kind + "'");
}

namespace {

Vec padded(const std::vector<double>& v, int dim, const char* what) {
  if (static_cast<int>(v.size()) > dim) throw ConfigError(std::string("reward ") + what + " longer than the model dimension");
  Vec out = Vec::Zero(dim);
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

}  // namespace

RewardModel RewardSpec::build(const GmmModel& model) const {
  if (kind == "mode-subset") return RewardModel::mode_subset(model, modes, sharpness, temperature);
  if (kind == "quadratic") return RewardModel::quadratic(padded(center, model.dim(), "center"), temperature);
  if (kind == "linear") return RewardModel::linear(padded(direction, model.dim(), "direction"), temperature);
  if (kind == "zero") return RewardModel::zero(model.dim(), temperature);
  throw ConfigError("unknown reward kind '" + kind + "'");
}

Schedule ScheduleSpec::build() const {
  Schedule s;
  if (diffusion == "sigma-scaled") s.diffusion.kind = DiffusionKind::SigmaScaled;
  else if (diffusion == "constant") s.diffusion.kind = DiffusionKind::Constant;
  else throw ConfigError("unknown diffusion kind '" + diffusion + "'");
  s.diffusion.scale = diffusion_scale;
  s.tweedie_delta = tweedie_delta;
  s.drift_delta = drift_delta;
  s.validate();
  return s;
}

TiltedTarget ExperimentConfig::build_target() const {
  GmmModel m = model.build();
  RewardModel r = reward.build(m);
  return TiltedTarget(std::move(m), schedule.build(), std::move(r));
}

double ExperimentConfig::step_size(Method m) const {
  std::string key;
  switch (m) {
    case Method::UlaSmc: key = "ula"; break;
    case Method::MalaSmc: key = "mala"; break;
    case Method::PcnSmc: key = "pcn"; break;
    case Method::PcnlSmc: key = "pcnl"; break;
    default: return 0.0;
  }
  auto it = mcmc.step_size.find(key);
  if (it == mcmc.step_size.end()) throw ConfigError("mcmc.step_size." + key + " is required for " + to_string(m));
  return it->second;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (schedule.smc_steps < 1 || schedule.single_particle_steps < 1) throw ConfigError("step counts must be positive");
  if (budget.total < 1) throw ConfigError("budget.total must be positive");
  if (!(budget.init_fraction >= 0 && budget.init_fraction <= 1)) throw ConfigError("budget.init_fraction must lie in [0, 1]");
  if (!(smc.ess_threshold > 0 && smc.ess_threshold <= 1)) throw ConfigError("smc.ess_threshold must lie in (0, 1]");
  if (mcmc.n_chains < 1) throw ConfigError("mcmc.n_chains must be positive");
  if (evaluation.replicates < 1) throw ConfigError("evaluation.replicates must be positive");
  if (evaluation.coarsen < 1 || evaluation.grid.resolution % evaluation.coarsen != 0)
    throw ConfigError("evaluation.coarsen must divide evaluation.resolution");
  if (seeds.count < 1) throw ConfigError("seeds.count must be positive");
  if (guidance.schedule != "constant" && guidance.schedule != "decaying")
    throw ConfigError("guidance.schedule must be 'constant' or 'decaying'");
  for (Method m : methods)
    if (uses_mcmc(m)) {
      ChainConfig c;
      c.kernel = kernel_from_string(to_string(m).substr(0, to_string(m).find('_')));
      c.step_size = step_size(m);
      c.validate();
    }
  if (sweep) {
    static const std::set<std::string> known{"step_size", "init_fraction", "particles", "total_nfe", "guidance_scale"};
    if (!known.count(sweep->parameter)) throw ConfigError("unknown sweep parameter '" + sweep->parameter + "'");
    if (sweep->values.empty()) throw ConfigError("sweep.values must not be empty");
  }
  build_target();
}

namespace {

// Reads known keys from an object and rejects anything else.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + path_ + "." + it.key());
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + path_ + "." + key + ": " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  {
    Reader r(j, "config");
    int schema = kSchemaVersion;
    r.get("schema_version", schema);
    if (schema != kSchemaVersion) throw ConfigError("unsupported schema_version " + std::to_string(schema));
    r.get("name", c.name);
    r.get("output", c.output);
    if (const json* m = r.child("model")) {
      Reader s(*m, "model");
      s.get("kind", c.model.kind);
      s.get("dim", c.model.dim);
      s.get("components", c.model.components);
      s.get("radius", c.model.radius);
      s.get("tau", c.model.tau);
      s.get("weights", c.model.weights);
      s.get("means", c.model.means);
      s.get("variances", c.model.variances);
    }
    if (const json* m = r.child("reward")) {
      Reader s(*m, "reward");
      s.get("kind", c.reward.kind);
      s.get("modes", c.reward.modes);
      s.get("sharpness", c.reward.sharpness);
      s.get("center", c.reward.center);
      s.get("direction", c.reward.direction);
      s.get("temperature", c.reward.temperature);
    }
    if (const json* m = r.child("schedule")) {
      Reader s(*m, "schedule");
      s.get("diffusion", c.schedule.diffusion);
      s.get("diffusion_scale", c.schedule.diffusion_scale);
      s.get("tweedie_delta", c.schedule.tweedie_delta);
      s.get("drift_delta", c.schedule.drift_delta);
      s.get("smc_steps", c.schedule.smc_steps);
      s.get("single_particle_steps", c.schedule.single_particle_steps);
    }
    if (const json* m = r.child("smc")) {
      Reader s(*m, "smc");
      s.get("ess_threshold", c.smc.ess_threshold);
      s.get("twisted_prior_init", c.smc.twisted_prior_init);
    }
    if (const json* m = r.child("mcmc")) {
      Reader s(*m, "mcmc");
      s.get("n_chains", c.mcmc.n_chains);
      s.get("burn_in_fraction", c.mcmc.burn_in_fraction);
      std::map<std::string, double> eps;
      s.get("step_size", eps);
      for (auto& [k, v] : eps) {
        kernel_from_string(k);
        c.mcmc.step_size[k] = v;
      }
    }
    if (const json* m = r.child("budget")) {
      Reader s(*m, "budget");
      s.get("total", c.budget.total);
      s.get("init_fraction", c.budget.init_fraction);
    }
    if (const json* m = r.child("guidance")) {
      Reader s(*m, "guidance");
      s.get("scale", c.guidance.scale);
      s.get("schedule", c.guidance.schedule);
    }
    if (const json* m = r.child("evaluation")) {
      Reader s(*m, "evaluation");
      std::vector<double> bounds{c.evaluation.grid.lo, c.evaluation.grid.hi};
      s.get("bounds", bounds);
      if (bounds.size() != 2) throw ConfigError("evaluation.bounds must be [lo, hi]");
      c.evaluation.grid.lo = bounds[0];
      c.evaluation.grid.hi = bounds[1];
      s.get("resolution", c.evaluation.grid.resolution);
      s.get("coarsen", c.evaluation.coarsen);
      s.get("replicates", c.evaluation.replicates);
    }
    if (const json* m = r.child("seeds")) {
      Reader s(*m, "seeds");
      s.get("master", c.seeds.master);
      s.get("first", c.seeds.first);
      s.get("count", c.seeds.count);
    }
    std::vector<std::string> methods;
    r.get("methods", methods);
    if (!methods.empty()) {
      c.methods.clear();
      for (const auto& m : methods) c.methods.push_back(method_from_string(m));
    }
    if (const json* m = r.child("sweep")) {
      Reader s(*m, "sweep");
      SweepSpec sw;
      s.get("parameter", sw.parameter);
      s.get("values", sw.values);
      c.sweep = sw;
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["name"] = c.name;
  j["output"] = c.output;
  j["model"] = {{"kind", c.model.kind}, {"dim", c.model.dim}, {"components", c.model.components},
                {"radius", c.model.radius}, {"tau", c.model.tau}};
  if (c.model.kind == "explicit") {
    j["model"]["weights"] = c.model.weights;
    j["model"]["means"] = c.model.means;
    j["model"]["variances"] = c.model.variances;
  }
  j["reward"] = {{"kind", c.reward.kind}, {"modes", c.reward.modes}, {"sharpness", c.reward.sharpness},
                 {"center", c.reward.center}, {"direction", c.reward.direction},
                 {"temperature", c.reward.temperature}};
  j["schedule"] = {{"diffusion", c.schedule.diffusion}, {"diffusion_scale", c.schedule.diffusion_scale},
                   {"tweedie_delta", c.schedule.tweedie_delta}, {"drift_delta", c.schedule.drift_delta},
                   {"smc_steps", c.schedule.smc_steps}, {"single_particle_steps", c.schedule.single_particle_steps}};
  j["smc"] = {{"ess_threshold", c.smc.ess_threshold}, {"twisted_prior_init", c.smc.twisted_prior_init}};
  j["mcmc"] = {{"n_chains", c.mcmc.n_chains}, {"burn_in_fraction", c.mcmc.burn_in_fraction},
               {"step_size", c.mcmc.step_size}};
  j["budget"] = {{"total", c.budget.total}, {"init_fraction", c.budget.init_fraction}};
  j["guidance"] = {{"scale", c.guidance.scale}, {"schedule", c.guidance.schedule}};
  j["evaluation"] = {{"bounds", {c.evaluation.grid.lo, c.evaluation.grid.hi}},
                     {"resolution", c.evaluation.grid.resolution},
                     {"coarsen", c.evaluation.coarsen},
                     {"replicates", c.evaluation.replicates}};
  j["seeds"] = {{"master", c.seeds.master}, {"first", c.seeds.first}, {"count", c.seeds.count}};
  json ms = json::array();
  for (Method m : c.methods) ms.push_back(to_string(m));
  j["methods"] = ms;
  if (c.sweep) j["sweep"] = {{"parameter", c.sweep->parameter}, {"values", c.sweep->values}};
  return j;
}

}  // namespace rsmc
