#pragma once

#include <map>

#include "vpblab/config.hpp"

namespace vpblab {

inline constexpr const char* kVersion = "0.1.0";

struct RunRecord {
  ExperimentConfig config;
  std::string summary_json;  // deterministic for a fixed config + seed
  std::vector<std::string> csv_files;  // paths relative to out_dir
  double wall_seconds = 0;
  bool passed = false;
};

/// Dispatches a config to the owning module; CSV bodies are produced in
/// memory so persist() is the only filesystem writer.
RunRecord run_experiment(const ExperimentConfig& config,
                         std::map<std::string, std::string>* csv_bodies = nullptr);

/// Writes summary.json, record.json and the CSV files under out_dir.
void persist(const RunRecord& record, const std::map<std::string, std::string>& csv_bodies);

struct DiffEntry {
  std::string field;
  double a = 0, b = 0, delta = 0, tolerance = 0;
  bool pass = true;
};

/// Field-wise diff of two summary JSON documents of the same kind; throws on
/// kind mismatch. Tolerances are keyed by dotted field path (default 0).
std::vector<DiffEntry> compare_summaries(const std::string& summary_a,
                                         const std::string& summary_b,
                                         const std::map<std::string, double>& tolerances);

}  // namespace vpblab
