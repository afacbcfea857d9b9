// SPDX-License-Identifier: Apache-2.0
// Non-learning beam optimizers (grid sweep, geometric pointing) composed with
// greedy, fixed and bandit RB-group allocation.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ntn/channel.hpp"
#include "ntn/environment.hpp"

namespace ntn::baselines {

// Uniform grid over [0, pi], endpoints included.
struct BeamGrid {
  int points = 18;
  std::vector<double> values() const;
  double granularity() const;
};

struct BeamChoice {
  env::BeamAngles tx;
  env::BeamAngles rx;
  double gain = 0.0;  // mean over RBs of |w_r^H H_m w_t|^2
};

double beam_gain(const channel::RbResponse& resp, const channel::UpaConfig& tx, const channel::UpaConfig& rx,
                 const env::BeamAngles& t, const env::BeamAngles& r);

// Exhaustive search, ties to the lexicographically smallest (tx az, tx el, rx az, rx el).
BeamChoice bfs_beams(const channel::RbResponse& resp, const channel::UpaConfig& tx, const channel::UpaConfig& rx,
                     const BeamGrid& grid = {});

// LOS pointing from the geometry.
BeamChoice pbu_beams(const geometry::GeometrySnapshot& s);

// Sum of per-RB rates in each group.
std::vector<double> group_rates(const std::vector<double>& rb_rates, int groups);

env::GroupMask greedy_rb(const std::vector<double>& rates, double demand);
env::GroupMask fixed_rb(int count, int groups, std::uint64_t seed, long slot);

struct BanditState {
  std::vector<long> counts;
  std::vector<double> means;  // mean observed group rate
  double exploration = 1.0;
  double usage_cost = 0.05;   // fraction of the mean rate charged per pulled group
  double scale = 0.0;         // largest rate seen, normalizes rewards to [0, 1]
  long total = 0;

  BanditState() = default;
  BanditState(int arms, double exploration, double usage_cost = 0.05);
  std::vector<double> scores() const;
};

// Picks groups by descending UCB score until the estimated rate covers the
// demand, then updates the pulled arms with their observed rates.
env::GroupMask mab_step(BanditState& st, const std::vector<double>& observed_rates, double demand);

enum class BeamScheme { bfs, pbu };
enum class RbScheme { greedy, fixed, mab };

struct BaselineConfig {
  BeamScheme beam = BeamScheme::bfs;
  RbScheme rb = RbScheme::greedy;
  BeamGrid grid;
  int fixed_count = 3;
  double mab_exploration = 1.0;
  double mab_usage_cost = 0.05;
};

std::string scheme_name(const BaselineConfig& c);

using SlotCallback = std::function<void(const env::SlotRecord&, double reward_high)>;

class BaselineRunner {
 public:
  BaselineRunner(const env::EnvConfig& env_cfg, const BaselineConfig& cfg, std::uint64_t seed);
  // Returns the number of simulated slots.
  long run(long slot_budget, const SlotCallback& cb = {});

 private:
  env::EnvConfig env_cfg_;
  BaselineConfig cfg_;
  std::uint64_t seed_;
  env::Environment env_;
  BanditState bandit_;
};

}  // namespace ntn::baselines
