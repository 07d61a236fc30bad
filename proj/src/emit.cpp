#include "rsmc/emit.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rsmc/errors.hpp"

namespace rsmc {

using nlohmann::json;

namespace {

constexpr char kPointsMagic[8] = {'R', 'S', 'M', 'C', 'P', 'T', 'S', '1'};

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.precision(17);
  return f;
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

std::string csv_opt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s.precision(17);
  s << *v;
  return s.str();
}

void check(const std::ofstream& f, const std::string& path) {
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace

json to_json(const SeedRecord& r) {
  return {{"schema_version", kSchemaVersion},
          {"cell", r.cell},
          {"method", r.method},
          {"parameter", r.parameter},
          {"value", opt(r.value)},
          {"seed_index", r.seed_index},
          {"replicates", r.replicates},
          {"particles", r.particles},
          {"nfe", {{"init_planned", r.init_nfe_planned},
                   {"smc_planned", r.smc_nfe_planned},
                   {"init_measured", r.init_nfe_measured},
                   {"smc_measured", r.smc_nfe_measured}}},
          {"tv_p0_star", opt(r.tv_p0_star)},
          {"w1", {{"x", opt(r.w1_x)}, {"y", opt(r.w1_y)}}},
          {"mean_reward", r.mean_reward},
          {"diversity", r.diversity},
          {"acceptance", opt(r.acceptance)},
          {"init_mean_reward", r.init_mean_reward},
          {"resample_count", r.resample_count},
          {"ess_trace", r.ess_trace}};
}

SeedRecord seed_record_from_json(const json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw ConfigError("record has an unsupported schema_version");
  SeedRecord r;
  r.cell = j.at("cell");
  r.method = j.at("method");
  r.parameter = j.at("parameter");
  r.value = opt_from<double>(j, "value");
  r.seed_index = j.at("seed_index");
  r.replicates = j.at("replicates");
  r.particles = j.at("particles");
  const json& n = j.at("nfe");
  r.init_nfe_planned = n.at("init_planned");
  r.smc_nfe_planned = n.at("smc_planned");
  r.init_nfe_measured = n.at("init_measured");
  r.smc_nfe_measured = n.at("smc_measured");
  r.tv_p0_star = opt_from<double>(j, "tv_p0_star");
  r.w1_x = opt_from<double>(j.at("w1"), "x");
  r.w1_y = opt_from<double>(j.at("w1"), "y");
  r.mean_reward = j.at("mean_reward");
  r.diversity = j.at("diversity");
  r.acceptance = opt_from<double>(j, "acceptance");
  r.init_mean_reward = j.at("init_mean_reward");
  r.resample_count = j.at("resample_count");
  r.ess_trace = j.at("ess_trace").get<std::vector<double>>();
  return r;
}

void write_seed_csv(const std::vector<SeedRecord>& records, const std::string& path) {
  std::ofstream f = open_out(path);
  f << "schema_version,cell,method,parameter,value,seed_index,replicates,particles,init_nfe_planned,"
       "smc_nfe_planned,init_nfe_measured,smc_nfe_measured,tv_p0_star,w1_x,w1_y,mean_reward,diversity,"
       "acceptance,init_mean_reward,resample_count\n";
  for (const SeedRecord& r : records) {
    f << kSchemaVersion << ',' << r.cell << ',' << r.method << ',' << r.parameter << ',' << csv_opt(r.value) << ','
      << r.seed_index << ',' << r.replicates << ',' << r.particles << ',' << r.init_nfe_planned << ','
      << r.smc_nfe_planned << ',' << r.init_nfe_measured << ',' << r.smc_nfe_measured << ','
      << csv_opt(r.tv_p0_star) << ',' << csv_opt(r.w1_x) << ',' << csv_opt(r.w1_y) << ',' << r.mean_reward << ','
      << r.diversity << ',' << csv_opt(r.acceptance) << ',' << r.init_mean_reward << ',' << r.resample_count
      << '\n';
  }
  check(f, path);
}

void write_aggregate_csv(const std::vector<AggregateRecord>& records, const std::string& path) {
  std::ofstream f = open_out(path);
  f << "schema_version,cell,method,parameter,value,metric,mean,se,n_seeds\n";
  for (const AggregateRecord& a : records)
    for (const auto& [name, st] : a.metrics)
      f << kSchemaVersion << ',' << a.cell << ',' << a.method << ',' << a.parameter << ',' << csv_opt(a.value) << ','
        << name << ',' << st.mean << ',' << st.se << ',' << st.n << '\n';
  check(f, path);
}

void write_jsonl(const std::vector<SeedRecord>& records, const std::string& path) {
  std::ofstream f = open_out(path);
  for (const SeedRecord& r : records) f << to_json(r).dump() << '\n';
  check(f, path);
}

std::vector<SeedRecord> read_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read '" + path + "'");
  std::vector<SeedRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(seed_record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void emit(const ExperimentResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_seed_csv(result.seeds, dir + "/seeds.csv");
  write_aggregate_csv(result.aggregates, dir + "/aggregate.csv");
  write_jsonl(result.seeds, dir + "/records.jsonl");
  json t = {{"schema_version", kSchemaVersion}, {"experiment", result.name}};
  json rows = json::array();
  double total = 0;
  for (std::size_t i = 0; i < result.seeds.size(); ++i) {
    rows.push_back({{"cell", result.seeds[i].cell},
                    {"seed_index", result.seeds[i].seed_index},
                    {"seconds", result.wall_seconds[i]}});
    total += result.wall_seconds[i];
  }
  t["records"] = rows;
  t["total_seconds"] = total;
  std::ofstream f = open_out(dir + "/timing.json");
  f << t.dump(2) << '\n';
  check(f, dir + "/timing.json");
}

void write_points_csv(const std::vector<Vec>& points, const std::vector<double>* weights, const std::string& path) {
  std::ofstream f = open_out(path);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int a = 0; a < points[i].size(); ++a) f << (a ? "," : "") << points[i][a];
    if (weights) f << ',' << (*weights)[i];
    f << '\n';
  }
  check(f, path);
}

void write_points_binary(const std::vector<Vec>& points, const std::string& path) {
  std::ofstream f = open_out(path, std::ios::binary);
  const std::uint64_t n = points.size();
  const std::uint32_t d = points.empty() ? 0 : static_cast<std::uint32_t>(points[0].size());
  f.write(kPointsMagic, sizeof kPointsMagic);
  f.write(reinterpret_cast<const char*>(&n), sizeof n);
  f.write(reinterpret_cast<const char*>(&d), sizeof d);
  for (const Vec& p : points) f.write(reinterpret_cast<const char*>(p.data()), std::streamsize(d * sizeof(double)));
  check(f, path);
}

std::vector<Vec> read_points(const std::string& path, std::vector<double>* weights) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read '" + path + "'");
  char magic[8] = {};
  f.read(magic, sizeof magic);
  std::vector<Vec> out;
  if (f && std::memcmp(magic, kPointsMagic, sizeof magic) == 0) {
    std::uint64_t n = 0;
    std::uint32_t d = 0;
    f.read(reinterpret_cast<char*>(&n), sizeof n);
    f.read(reinterpret_cast<char*>(&d), sizeof d);
    for (std::uint64_t i = 0; i < n; ++i) {
      Vec p(d);
      f.read(reinterpret_cast<char*>(p.data()), std::streamsize(d * sizeof(double)));
      if (!f) throw std::runtime_error("truncated point file '" + path + "'");
      out.push_back(std::move(p));
    }
    return out;
  }
  f.clear();
  f.seekg(0);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() < 2) throw std::runtime_error("point file '" + path + "' needs at least two columns");
    Vec p(2);
    p << vals[0], vals[1];
    out.push_back(p);
    if (weights) weights->push_back(vals.size() > 2 ? vals[2] : 1.0);
  }
  return out;
}

}  // namespace rsmc
