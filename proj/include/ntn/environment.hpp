// SPDX-License-Identifier: Apache-2.0
// Two-time-scale environment: the satellite configures beams and an RB-group
// pool every T slots, the UE steers its beam and picks groups every slot.
#pragma once

#include <boost/circular_buffer.hpp>
#include <cstdint>
#include <vector>

#include "ntn/channel.hpp"
#include "ntn/geometry.hpp"

namespace ntn::env {

using GroupMask = std::uint32_t;

inline int popcount(GroupMask m) { return __builtin_popcount(m); }
inline bool is_subset(GroupMask a, GroupMask b) { return (a & ~b) == 0; }
inline GroupMask full_mask(int groups) { return groups >= 32 ? ~GroupMask{0} : ((GroupMask{1} << groups) - 1); }

struct DemandProcess {
  double mean = 2.0;
  double unit = 10e6;  // bits per slot
  std::uint64_t seed = 0;
};

// unit * Poisson(mean), a pure function of (seed, slot).
double draw_demand(const DemandProcess& p, long slot);

struct BeamAngles {
  double azimuth = geometry::kPi / 2;
  double elevation = geometry::kPi / 2;
};

struct HighTierState {
  geometry::Vec3 sat_position = geometry::Vec3::Zero();
  std::vector<double> avg_snr_history;
};

// Beam steps are unit multiples of Delta: {-1,0,1} for the satellite,
// {-3..3} for the UE.
struct HighTierAction {
  int d_azimuth = 0;
  int d_elevation = 0;
  GroupMask mask = 1;
};

struct LowTierState {
  std::vector<double> per_rb_snr;
  std::vector<double> rx_signal_strengths;
};

struct LowTierAction {
  int d_azimuth = 0;
  int d_elevation = 0;
  GroupMask mask = 0;
};

struct EnvConfig {
  geometry::OrbitConfig orbit;
  double ue_latitude = 2.0 * geometry::kPi / 180.0;
  double ue_longitude = 0.0;
  double min_elevation = geometry::kPi / 6.0;
  double carrier = 4e9;
  double tx_power_dbw = 30.0;
  double tx_gain_dbi = 30.0;
  double rx_gain_dbi = 30.0;
  channel::NoiseModel noise;
  int tx_nx = 4, tx_ny = 4;
  int rx_nx = 2, rx_ny = 2;
  channel::ScatterConfig scatter;
  double symbol_duration = 1.0 / 180e3;
  int total_rbs = 20;
  int groups = 5;
  int cycle = 10;  // T
  double delta = 5.0 * geometry::kPi / 180.0;
  int high_step_max = 1;
  int low_step_max = 3;
  double eta = 0.1;
  int fifo_length = 10;
  double demand_mean = 2.0;
  double demand_unit = 10e6;

  int group_size() const { return total_rbs / groups; }
  double wavelength() const { return geometry::kSpeedOfLight / carrier; }
  channel::UpaConfig tx_upa() const { return channel::UpaConfig::half_wavelength(tx_nx, tx_ny, wavelength()); }
  channel::UpaConfig rx_upa() const { return channel::UpaConfig::half_wavelength(rx_nx, rx_ny, wavelength()); }
  int rx_antennas() const { return rx_nx * rx_ny; }
  geometry::Vec3 ue_position() const;
  void validate() const;
};

// Everything the environment knows about one slot.
struct SlotRecord {
  long slot = 0;          // global slot counter across episodes
  long episode = 0;
  long episode_slot = 0;
  double demand = 0.0;
  double capacity = 0.0;  // sum of rates over jointly selected RBs
  double throughput = 0.0;  // min(capacity, demand)
  double avg_rate = 0.0;
  double omega = 0.0;     // min(capacity - demand, 0)
  double reward_instant = 0.0;
  double reward_low = 0.0;  // FIFO mean
  int rb_groups = 0;
  GroupMask high_mask = 0;
  GroupMask low_mask = 0;
  double elevation = 0.0;
  bool demand_met = false;
  BeamAngles tx_beam;
  BeamAngles rx_beam;
  std::vector<double> rb_rates;
  std::vector<double> rb_snr;
};

struct CycleResult {
  HighTierState next_state;
  double reward_high = 0.0;
  int slots = 0;
};

// Precomputed pass window shared by all episodes (no Earth rotation).
struct PassWindow {
  long start_slot = 0;  // orbit slot of the first visible slot
  long length = 0;
};

PassWindow find_pass(const EnvConfig& cfg);

class Environment {
 public:
  Environment(EnvConfig cfg, std::uint64_t seed);

  const EnvConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  const PassWindow& pass() const { return pass_; }

  // Starts episode `episode`; beams at boresight, histories zeroed.
  std::pair<HighTierState, LowTierState> reset_episode(long episode);

  // Applies the satellite decision for the next T slots.
  void step_high(const HighTierAction& a);
  // One UE slot; the record carries the smoothed reward.
  std::pair<LowTierState, SlotRecord> step_low(const LowTierAction& a);
  // Closes the cycle after T slots (or at episode end) and yields R_H.
  CycleResult close_cycle(bool allow_partial = false);

  bool episode_done() const { return episode_slot_ >= pass_.length; }
  bool cycle_open() const { return cycle_open_; }
  int cycle_slot() const { return cycle_slot_; }
  long episode() const { return episode_; }
  long episode_slot() const { return episode_slot_; }
  long global_slot() const { return global_slot_; }
  long episode_start_global_slot() const { return episode_start_global_; }
  std::uint64_t scatter_seed() const { return scatter_seed_; }

  const BeamAngles& tx_beam() const { return tx_beam_; }
  const BeamAngles& rx_beam() const { return rx_beam_; }
  GroupMask high_mask() const { return high_mask_; }
  const HighTierState& high_state() const { return high_state_; }
  const LowTierState& low_state() const { return low_state_; }
  double demand_at(long global_slot) const;

  // Geometry and channel of an episode slot (model access for rollout and baselines).
  geometry::GeometrySnapshot geometry_at(long episode_slot) const;
  channel::MultipathChannel channel_at(long episode_slot) const;
  double link_gain(double distance) const;
  // Per-RB SNR is snr_scale(distance) * |w_r^H H_m w_t|^2.
  double snr_scale(double distance) const;
  channel::RbResponse response_at(long episode_slot) const;

  // Overrides the beams directly (used by the non-learning baselines).
  void set_beams(const BeamAngles& tx, const BeamAngles& rx);

  static BeamAngles clamp_beam(BeamAngles b);

 private:
  EnvConfig cfg_;
  std::uint64_t seed_;
  PassWindow pass_;
  channel::UpaConfig tx_upa_, rx_upa_;
  geometry::Vec3 ue_;
  DemandProcess demand_;

  long episode_ = -1;
  long episode_slot_ = 0;
  long global_slot_ = 0;
  long episode_start_global_ = 0;
  std::uint64_t scatter_seed_ = 0;
  BeamAngles tx_beam_, rx_beam_;
  GroupMask high_mask_ = 0;
  bool cycle_open_ = false;
  int cycle_slot_ = 0;
  double cycle_reward_sum_ = 0.0;
  std::vector<double> cycle_history_;
  boost::circular_buffer<double> fifo_;
  HighTierState high_state_;
  LowTierState low_state_;
};

// Average RB-group count and per-slot |Omega| from a slot log.
struct ObjectiveMetrics {
  double avg_rb_groups = 0.0;
  std::vector<double> satisfactory_error;
};
ObjectiveMetrics objective_metrics(const std::vector<SlotRecord>& log);

// R_H recomputed from logged per-RB rates and masks (one cycle).
double cycle_reward_from_log(const std::vector<SlotRecord>& cycle, const EnvConfig& cfg);

// Mask over RBs implied by a group mask.
std::vector<int> rbs_of(GroupMask m, int groups, int group_size);

}  // namespace ntn::env
