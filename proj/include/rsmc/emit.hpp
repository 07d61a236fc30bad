#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "rsmc/experiment.hpp"

namespace rsmc {

nlohmann::json to_json(const SeedRecord& r);
SeedRecord seed_record_from_json(const nlohmann::json& j);

// Flat per-seed metrics, one row per record.
void write_seed_csv(const std::vector<SeedRecord>& records, const std::string& path);
// Long format: one row per (cell, metric) with mean, standard error and seed count.
void write_aggregate_csv(const std::vector<AggregateRecord>& records, const std::string& path);
void write_jsonl(const std::vector<SeedRecord>& records, const std::string& path);
std::vector<SeedRecord> read_jsonl(const std::string& path);
// seeds.csv, aggregate.csv, records.jsonl and timing.json under dir.
void emit(const ExperimentResult& result, const std::string& dir);

void write_points_csv(const std::vector<Vec>& points, const std::vector<double>* weights, const std::string& path);
void write_points_binary(const std::vector<Vec>& points, const std::string& path);
// Reads either format; a third CSV column is taken as weights.
std::vector<Vec> read_points(const std::string& path, std::vector<double>* weights = nullptr);

}  // namespace rsmc
