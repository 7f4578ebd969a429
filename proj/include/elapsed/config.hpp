#pragma once

#include "elapsed/grid.hpp"
#include "elapsed/model.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace elapsed {

struct InitialSpec {
  enum class Kind { Steady, Perturbed, Uniform };
  Kind kind = Kind::Perturbed;
  double amplitude = 0.1;
  std::string shape = "sine"; // sine | bump | shift
  double width = 2.0;         // support of the uniform datum [0, width]
};

struct ExperimentConfig {
  RateModel rate = RateModel::soft_sigmoid(1, 2, 1, 1);
  DelayKernel delay = DelayKernel::dirac();
  std::vector<double> eps{0.0};
  Grid grid{40.0, 800};
  InitialSpec initial;
  double t_final = 30;
  int record_every = 1;
  int snapshot_every = 0;
  std::array<double, 2> fit_window{5, 25};
  int n_scan = 4096;
  double m_max = -1;
  std::optional<double> cut;       // default a* (no delay) or max(a*, -delta)
  bool compare_spectrum = true;    // relax: also report the generator gap
  std::vector<double> basin_amplitudes{0.0, 0.25, 0.5, 0.75, 1.0};
  int basin_bisections = 4;
  std::string output = "out";
  std::uint64_t seed = 1;
};

// Parsing validates ranges and throws ConfigError with a diagnostic.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);
// Stable FNV-1a hash of the canonical JSON dump, hex encoded.
std::string config_hash(const nlohmann::json& j);

// Initial density of a relaxation run, normalized to mass 1.
Vec initial_density(const InitialSpec& spec, const Vec& F, const Grid& grid);

double default_cut(const RateModel& m, const DelayKernel& b);

} // namespace elapsed
