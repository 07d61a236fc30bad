#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rsmc/config.hpp"
#include "rsmc/emit.hpp"
#include "rsmc/errors.hpp"
#include "rsmc/experiment.hpp"
#include "rsmc/oracle.hpp"
#include "rsmc/presets.hpp"

using namespace rsmc;

namespace {

struct Common {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> seeds;
  std::string out;
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* cfg = cmd->add_option("config", c.config_path, "experiment config (JSON, comments allowed)");
  auto* pre = cmd->add_option("--preset", c.preset, "built-in preset name instead of a config file");
  if (config_required) {
    cfg->excludes(pre);
    pre->excludes(cfg);
  }
  cmd->add_option("--seed", c.seed, "master seed override");
  cmd->add_option("--seeds", c.seeds, "number of seeds override");
  cmd->add_option("--out", c.out, "output directory (default: the config's output field)");
  cmd->add_option("--threads", c.threads, "worker threads over seeds")->check(CLI::PositiveNumber);
}

ExperimentConfig resolve(const Common& c) {
  if (!c.preset.empty()) return load_preset(c.preset);
  if (c.config_path.empty()) throw ConfigError("a config file or --preset is required");
  return load_config(c.config_path);
}

void print_summary(const ExperimentResult& r) {
  std::printf("%-36s %7s %10s %10s %10s %10s\n", "cell", "seeds", "tv", "tv_se", "reward", "accept");
  for (const AggregateRecord& a : r.aggregates) {
    std::string label = a.method;
    if (a.value) label += " " + a.parameter + "=" + std::to_string(*a.value);
    auto get = [&](const char* k) { return a.metrics.count(k) ? a.metrics.at(k).mean : NAN; };
    auto se = [&](const char* k) { return a.metrics.count(k) ? a.metrics.at(k).se : NAN; };
    std::printf("%-36s %7d %10.4f %10.4f %10.4f %10.4f\n", label.c_str(), a.n_seeds, get("tv_p0_star"),
                se("tv_p0_star"), get("mean_reward"), get("acceptance"));
  }
}

int run(const Common& c, bool sweep) {
  ExperimentConfig cfg = resolve(c);
  if (sweep && !cfg.sweep) throw ConfigError("config '" + cfg.name + "' has no sweep block; use `run`");
  RunOptions opt;
  opt.threads = c.threads;
  opt.seed_count = c.seeds;
  opt.master_seed = c.seed;
  const std::string out = c.out.empty() ? cfg.output : c.out;
  opt.oracle_cache_dir = out + "/oracle_cache";
  ExperimentResult r = run_experiment(cfg, opt);
  emit(r, out);
  print_summary(r);
  std::printf("wrote %s/{seeds.csv,aggregate.csv,records.jsonl,timing.json}\n", out.c_str());
  if (r.error) std::rethrow_exception(r.error);
  return 0;
}

int oracle(const Common& c, int resolution) {
  ExperimentConfig cfg = resolve(c);
  if (resolution > 0) cfg.evaluation.grid.resolution = resolution;
  const TiltedTarget target = cfg.build_target();
  const std::string out = c.out.empty() ? cfg.output + "/oracles" : c.out;
  std::filesystem::create_directories(out);
  for (TargetKind kind : {TargetKind::P0, TargetKind::P0Star, TargetKind::P1Posterior}) {
    const GridOracle o = build_oracle(target, kind, cfg.evaluation.grid);
    const std::string path = out + "/" + to_string(kind) + ".grid";
    o.save(path, oracle_cache_key(target, kind, cfg.evaluation.grid));
    std::printf("%-14s log_Z = %.10f  -> %s\n", to_string(kind).c_str(), o.log_z(), path.c_str());
  }
  return 0;
}

int eval(const std::string& samples_path, const std::string& oracle_path, int coarsen) {
  std::optional<GridOracle> o = GridOracle::load(oracle_path, 0);
  if (!o) throw OracleRefusal("'" + oracle_path + "' is not a grid oracle file");
  if (coarsen > 1) o = o->coarsen(coarsen);
  std::vector<double> w;
  const std::vector<Vec> pts = read_points(samples_path, &w);
  if (pts.empty()) throw ConfigError("no samples in '" + samples_path + "'");
  const std::vector<double>* wp = w.size() == pts.size() ? &w : nullptr;
  const auto w1 = w1_per_axis(pts, *o, wp);
  std::printf("samples %zu  cells %dx%d  tv %.6f  w1_x %.6f  w1_y %.6f\n", pts.size(), o->resolution(),
              o->resolution(), tv_distance(pts, *o, wp), w1[0], w1[1]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-aligned sampling lab: MCMC-initialized twisted SMC on analytic Gaussian mixtures"};
  app.require_subcommand(1);

  Common run_opts, sweep_opts, oracle_opts;
  auto* run_cmd = app.add_subcommand("run", "run an experiment and write metrics");
  add_common(run_cmd, run_opts, true);
  auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment that has a sweep block");
  add_common(sweep_cmd, sweep_opts, true);
  auto* oracle_cmd = app.add_subcommand("oracle", "build and save the grid oracles of a config");
  add_common(oracle_cmd, oracle_opts, true);
  int resolution = 0;
  oracle_cmd->add_option("--resolution", resolution, "grid cells per axis override");

  std::string samples, oracle_file;
  int coarsen = 1;
  auto* eval_cmd = app.add_subcommand("eval", "TV and per-axis W1 of a sample file against a saved oracle");
  eval_cmd->add_option("samples", samples, "CSV (x,y[,weight]) or binary point file")->required();
  eval_cmd->add_option("oracle", oracle_file, "oracle file written by `oracle`")->required();
  eval_cmd->add_option("--coarsen", coarsen, "merge factor x factor cells before comparing");

  std::string preset_name;
  auto* presets_cmd = app.add_subcommand("presets", "list built-in presets, or print one");
  presets_cmd->add_option("name", preset_name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) return run(run_opts, false);
    if (*sweep_cmd) return run(sweep_opts, true);
    if (*oracle_cmd) return oracle(oracle_opts, resolution);
    if (*eval_cmd) return eval(samples, oracle_file, coarsen);
    if (*presets_cmd) {
      if (preset_name.empty())
        for (const auto& n : preset_names()) std::printf("%s\n", n.c_str());
      else
        std::printf("%s", preset_text(preset_name).c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const BudgetError& e) {
    std::fprintf(stderr, "budget error: %s\n", e.what());
    return 3;
  } catch (const OracleRefusal& e) {
    std::fprintf(stderr, "oracle refused: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
