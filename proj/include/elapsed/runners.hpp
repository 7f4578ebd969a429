#pragma once

#include "elapsed/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace elapsed {

inline constexpr const char* kVersion = "0.1.0";

struct RunOptions {
  std::filesystem::path out = "out";
  int workers = 1;
  std::optional<std::uint64_t> seed; // overrides the config seed
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string version = kVersion;
  std::vector<std::string> files; // relative to the output directory
  double wall_clock_s = 0;
  nlohmann::json checks = nlohmann::json::object();
  bool ok = true;
  int exit_code = 0;
};

nlohmann::json to_json(const RunManifest& m);

RunManifest run_steady_sweep(const ExperimentConfig& c, const RunOptions& opt);
RunManifest run_relaxation(const ExperimentConfig& c, const RunOptions& opt);
RunManifest run_spectrum_sweep(const ExperimentConfig& c, const RunOptions& opt);
RunManifest run_basin(const ExperimentConfig& c, const RunOptions& opt);
RunManifest run_checks(const ExperimentConfig& c, const RunOptions& opt);

// Runs fn(0..count-1) on at most `workers` threads. Exceptions are rethrown
// in index order so failures are deterministic.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

} // namespace elapsed
