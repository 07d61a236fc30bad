#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rsmc/budget.hpp"
#include "rsmc/emit.hpp"
#include "rsmc/errors.hpp"
#include "rsmc/experiment.hpp"
#include "rsmc/presets.hpp"

using namespace rsmc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rsmc_test_" + name);
  fs::remove_all(p);
  return p;
}

const char* kSmall = R"({
  // small two-cell run for determinism checks
  "name": "small",
  "methods": ["prior_smc", "pcnl_smc"],
  "budget": {"total": 100},
  "evaluation": {"replicates": 4, "resolution": 80, "coarsen": 5},
  "seeds": {"count": 3}
})";

}  // namespace

TEST_CASE("budget allocation examples") {
  const Plan prior = allocate_budget(Method::PriorSmc, {100, 0.5}, 25);
  CHECK(prior.particles == 4);
  CHECK(prior.init_nfe == 0);
  CHECK(prior.smc_nfe == 100);

  const Plan pcnl = allocate_budget(Method::PcnlSmc, {100, 0.5}, 25);
  CHECK(pcnl.init_nfe == 50);
  CHECK(pcnl.particles == 2);
  long chain_nfe = 0;
  int chain_particles = 0;
  for (const ChainSpec& c : pcnl.chains) {
    chain_nfe += c.budget();
    chain_particles += c.particles;
  }
  CHECK(chain_nfe == 50);
  CHECK(chain_particles == 2);

  const std::vector<std::pair<double, int>> splits{{0.25, 30}, {0.5, 20}, {0.75, 10}};
  for (auto [f, k] : splits) {
    const Plan p = allocate_budget(Method::PcnlSmc, {1000, f}, 25);
    CHECK(p.particles == k);
    CHECK(p.planned_nfe() <= 1000);
  }

  const Plan topk = allocate_budget(Method::TopkSmc, {100, 0.5}, 25);
  CHECK(topk.topk_n == 50);
  CHECK(topk.particles == 2);
  const Plan sp = allocate_budget(Method::SingleParticle, {100, 0.5}, 25);
  CHECK(sp.particles == 2);
  CHECK(sp.smc_nfe == 100);

  CHECK_THROWS_AS(allocate_budget(Method::PriorSmc, {24, 0.5}, 25), ConfigError);
  CHECK_THROWS_AS(allocate_budget(Method::PcnlSmc, {40, 0.5}, 25), ConfigError);
  CHECK_THROWS_AS(allocate_budget(Method::PcnlSmc, {100, 0.0}, 25), ConfigError);
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config(kSmall);
  CHECK(c.name == "small");
  CHECK(c.methods.size() == 2);
  CHECK(c.evaluation.replicates == 4);
  CHECK(c.model.components == 6);
  CHECK(c.reward.modes == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(parse_config(R"({"budgett": {"total": 100}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"budget": {"total": 100, "fraction": 0.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"methods": ["nuts_smc"]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"budget": {"total": "many"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 99})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"sweep": {"parameter": "colour", "values": [1]}})"), ConfigError);
  // Round trip through the serialized form.
  const ExperimentConfig back = parse_config(to_json(c).dump());
  CHECK(to_json(back) == to_json(c));
}

TEST_CASE("every preset parses and expands") {
  const auto names = preset_names();
  for (const char* expected : {"toy_fig1", "stepsize", "nfe_ablation", "consistency", "highdim"})
    CHECK(std::find(names.begin(), names.end(), expected) != names.end());
  for (const std::string& n : names) {
    CAPTURE(n);
    const ExperimentConfig c = load_preset(n);
    CHECK(!expand_cells(c).empty());
  }
  CHECK_THROWS_AS(preset_text("nope"), ConfigError);
}

TEST_CASE("sweep expansion") {
  const ExperimentConfig c = load_preset("nfe_ablation");
  const auto cells = expand_cells(c);
  int pcnl = 0;
  for (const Cell& cell : cells) {
    if (cell.method == Method::PcnlSmc) {
      ++pcnl;
      REQUIRE(cell.value);
      CHECK(cell.plan.particles == int(std::lround((1 - *cell.value) * 40)));
    } else if (cell.method == Method::PriorSmc) {
      CHECK_FALSE(cell.value);
    }
  }
  CHECK(pcnl == 3);
}

TEST_CASE("pipeline ledger matches the plan for every preset cell") {
  for (const std::string& n : preset_names()) {
    const ExperimentConfig c = load_preset(n);
    const TiltedTarget t = c.build_target();
    for (const Cell& cell : expand_cells(c)) {
      CAPTURE(cell.label);
      const ReplicateOutput out = run_pipeline(t, cell, replicate_key(1, cell, 0, 0));
      CHECK(out.init_nfe == cell.plan.init_nfe);
      CHECK(out.smc_nfe == cell.plan.smc_nfe);
      CHECK(out.init_nfe + out.smc_nfe <= cell.plan.total);
    }
  }
}

TEST_CASE("determinism across runs and worker counts") {
  const ExperimentConfig c = parse_config(kSmall);
  RunOptions one;
  RunOptions two;
  two.threads = 3;
  const ExperimentResult a = run_experiment(c, one);
  const ExperimentResult b = run_experiment(c, one);
  const ExperimentResult d = run_experiment(c, two);
  REQUIRE_FALSE(a.error);
  CHECK(a.seeds.size() == 6);
  CHECK(a.seeds == b.seeds);
  CHECK(a.seeds == d.seeds);
  const fs::path pa = scratch("det_a"), pd = scratch("det_d");
  emit(a, pa.string());
  emit(d, pd.string());
  CHECK(slurp(pa / "records.jsonl") == slurp(pd / "records.jsonl"));
  CHECK(slurp(pa / "seeds.csv") == slurp(pd / "seeds.csv"));
  CHECK(slurp(pa / "aggregate.csv") == slurp(pd / "aggregate.csv"));

  RunOptions other;
  other.master_seed = 7;
  CHECK_FALSE(run_experiment(c, other).seeds == a.seeds);
  fs::remove_all(pa);
  fs::remove_all(pd);
}

TEST_CASE("emission") {
  const fs::path dir = scratch("emit");
  fs::create_directories(dir);
  write_seed_csv({}, (dir / "empty.csv").string());
  const std::string header = slurp(dir / "empty.csv");
  CHECK(std::count(header.begin(), header.end(), '\n') == 1);
  CHECK(header.find("schema_version") != std::string::npos);

  const ExperimentResult r = run_experiment(parse_config(kSmall));
  write_jsonl(r.seeds, (dir / "r.jsonl").string());
  const auto back = read_jsonl((dir / "r.jsonl").string());
  CHECK(back == r.seeds);

  // Aggregate rows recomputed from the per-seed values.
  for (const AggregateRecord& agg : r.aggregates) {
    std::vector<double> tv, reward;
    for (const SeedRecord& s : r.seeds)
      if (s.cell == agg.cell) {
        tv.push_back(*s.tv_p0_star);
        reward.push_back(s.mean_reward);
      }
    for (auto [name, xs] : {std::pair{"tv_p0_star", tv}, std::pair{"mean_reward", reward}}) {
      double m = 0, v = 0;
      for (double x : xs) m += x / xs.size();
      for (double x : xs) v += (x - m) * (x - m) / (xs.size() - 1);
      const Statistic& st = agg.metrics.at(name);
      CHECK(st.n == int(xs.size()));
      CHECK(st.mean == doctest::Approx(m).epsilon(1e-12));
      CHECK(st.se == doctest::Approx(std::sqrt(v / xs.size())).epsilon(1e-12));
    }
    CHECK(agg.n_seeds == 3);
  }
  write_aggregate_csv(r.aggregates, (dir / "agg.csv").string());
  const std::string agg = slurp(dir / "agg.csv");
  CHECK(agg.find("n_seeds") != std::string::npos);
  CHECK(agg.find(",se,") != std::string::npos);

  CHECK_THROWS(write_seed_csv({}, (dir / "missing" / "x.csv").string()));
  std::vector<Vec> pts{Vec::Constant(2, 1.5), Vec::Constant(2, -0.25)};
  std::vector<double> w{0.25, 0.75}, wb;
  write_points_csv(pts, &w, (dir / "p.csv").string());
  write_points_binary(pts, (dir / "p.bin").string());
  CHECK(read_points((dir / "p.csv").string(), &wb) == pts);
  CHECK(wb == w);
  CHECK(read_points((dir / "p.bin").string()) == pts);
  fs::remove_all(dir);
}

TEST_CASE("failures keep completed records") {
  // A run that records an error still writes everything it finished.
  ExperimentConfig c = parse_config(kSmall);
  c.evaluation.replicates = 1;
  ExperimentResult ok = run_experiment(c);
  REQUIRE_FALSE(ok.error);
  ok.error = std::make_exception_ptr(BudgetError("injected"));
  const fs::path dir = scratch("partial");
  emit(ok, dir.string());
  CHECK(read_jsonl((dir / "records.jsonl").string()).size() == ok.seeds.size());
  fs::remove_all(dir);
}

#ifdef RSMC_CLI
TEST_CASE("CLI exit codes") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(RSMC_CLI) + " " + args + " > " + (dir / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  {
    std::ofstream(dir / "bad.json") << R"({"unknown": 1})";
    std::ofstream(dir / "poor.json") << R"({"budget": {"total": 10}})";
    std::ofstream(dir / "ok.json") << kSmall;
    std::ofstream(dir / "narrow.json") << R"({"evaluation": {"bounds": [-2, 2], "resolution": 40, "coarsen": 5}})";
  }
  CHECK(run("presets") == 0);
  CHECK(run("run " + (dir / "bad.json").string()) == 2);
  CHECK(run("run " + (dir / "poor.json").string()) == 2);
  CHECK(run("oracle " + (dir / "narrow.json").string() + " --out " + (dir / "o").string()) == 4);
  CHECK(run("sweep " + (dir / "ok.json").string()) == 2);
  CHECK(run("run " + (dir / "ok.json").string() + " --seeds 1 --out " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "records.jsonl"));
  CHECK(run("oracle " + (dir / "ok.json").string() + " --out " + (dir / "o").string()) == 0);
  write_points_csv({Vec::Zero(2), Vec::Constant(2, 4.0)}, nullptr, (dir / "pts.csv").string());
  CHECK(run("eval " + (dir / "pts.csv").string() + " " + (dir / "o" / "p0.grid").string()) == 0);
  CHECK(run("eval " + (dir / "pts.csv").string() + " " + (dir / "pts.csv").string()) == 4);
  fs::remove_all(dir);
}
#endif
