// SPDX-License-Identifier: Apache-2.0
// Experiment configuration, scheme dispatch, metrics and persistence.
#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ntn/baselines.hpp"
#include "ntn/drl.hpp"
#include "ntn/environment.hpp"

namespace ntn::harness {

enum class Scheme {
  proposed,
  single_estimation,
  independent,
  bfs_greedy,
  bfs_fixed,
  bfs_mab,
  pbu_greedy,
  pbu_fixed,
  pbu_mab,
};

std::string scheme_name(Scheme s);
Scheme parse_scheme(const std::string& s);
std::vector<Scheme> all_schemes();
bool is_learning(Scheme s);

struct ExperimentConfig {
  Scheme scheme = Scheme::proposed;
  std::uint64_t seed = 1;
  long slots = 10000;
  env::EnvConfig env;
  drl::DrlConfig drl;
  baselines::BaselineConfig baseline;
  std::string output_dir;  // empty: output_root()
  std::string tag;  // optional suffix of the cell name

  std::string cell_name() const;
  void validate() const;
};

// Flat sectioned key-value text (INI). Missing keys keep their defaults.
ExperimentConfig load_config(const std::string& path);
void apply_config_text(ExperimentConfig& cfg, const std::string& ini_text);
std::string config_to_ini(const ExperimentConfig& cfg);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

struct MetricRecord {
  long slot = 0;
  long episode = 0;
  long episode_slot = 0;
  double reward_high = 0.0;
  double reward_low = 0.0;
  double throughput = 0.0;
  double demand = 0.0;
  double capacity = 0.0;
  int rb_groups = 0;
  double satisfactory_error = 0.0;
  double elevation = 0.0;
};

class MetricSeries {
 public:
  void append(const MetricRecord& r) { rows_.push_back(r); }
  size_t size() const { return rows_.size(); }
  const MetricRecord& operator[](size_t i) const { return rows_[i]; }
  const std::vector<MetricRecord>& rows() const { return rows_; }
  std::vector<double> column(double MetricRecord::*field) const;

 private:
  std::vector<MetricRecord> rows_;
};

inline constexpr int kCsvVersion = 1;
std::string csv_header();
std::string csv_row(const MetricRecord& r);
void write_csv(const std::filesystem::path& path, const MetricSeries& s);
MetricSeries read_csv(const std::filesystem::path& path);

// Value at n is the mean over slots max(0, n - window + 1) .. n.
std::vector<double> moving_average(const std::vector<double>& x, long window);
// Population standard deviation of the trailing window.
double convergence_sd(const std::vector<double>& x, long window);

struct UtilityAttributes {
  double satisfactory_error = 0.0;
  double rb_groups = 0.0;
  double complexity = 0.0;
};

// Min-max normalizes each attribute over the compared schemes (lower is
// better, constant attributes map to 0) and returns the weighted sums.
std::vector<double> utility_scores(const std::vector<UtilityAttributes>& schemes, const std::vector<double>& weights);
double utility_score(const UtilityAttributes& a, const std::vector<double>& weights,
                     const std::vector<UtilityAttributes>& context);

// Per-slot decision evaluations.
double complexity(Scheme s, int T, int n_bar, int grid_points = 18, double max_angle_deg = 180.0);

struct ExperimentResult {
  MetricSeries series;
  nlohmann::json summary;
  double wall_seconds = 0.0;
};

inline constexpr long kRewardWindow = 10000;
inline constexpr long kThroughputWindow = 10;
inline constexpr long kSdWindow = 7000;

nlohmann::json summarize(const ExperimentConfig& cfg, const MetricSeries& s);

// Runs one (scheme, seed) cell; when `write` is set, writes <cell>.csv,
// <cell>.json and <cell>.time.json under cfg.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write = true);

struct SweepSpec {
  ExperimentConfig base;
  std::vector<Scheme> schemes;
  std::vector<std::uint64_t> seeds;
  std::vector<int> n_bars;  // empty: base value only
};

// Runs every cell and writes sweep.json with per-scheme seed means.
nlohmann::json run_sweep(const SweepSpec& spec);

std::filesystem::path output_root();  // NTN_OUTPUT_ROOT, else "out"

}  // namespace ntn::harness
