// SPDX-License-Identifier: Apache-2.0
#include "ntn/environment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ntn/rng.hpp"

namespace ntn::env {

using geometry::kPi;

double draw_demand(const DemandProcess& p, long slot) {
  if (p.mean <= 0.0) return 0.0;
  Rng rng(derive_seed(p.seed, streams::kDemand, static_cast<std::uint64_t>(slot)));
  std::poisson_distribution<int> pois(p.mean);
  return p.unit * static_cast<double>(pois(rng));
}

geometry::Vec3 EnvConfig::ue_position() const {
  return geometry::ground_point(ue_latitude, ue_longitude, orbit.earth_radius);
}

void EnvConfig::validate() const {
  orbit.validate();
  if (groups < 1 || groups > 31) throw std::invalid_argument("groups must be in [1, 31]");
  if (total_rbs < groups || total_rbs % groups != 0) throw std::invalid_argument("total_rbs must be a multiple of groups");
  if (cycle < 1) throw std::invalid_argument("cycle length T must be >= 1");
  if (fifo_length < 1) throw std::invalid_argument("FIFO length must be >= 1");
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (tx_nx < 1 || tx_ny < 1 || rx_nx < 1 || rx_ny < 1) throw std::invalid_argument("antenna counts must be >= 1");
  if (scatter.paths < 1) throw std::invalid_argument("path count must be >= 1");
}

std::vector<int> rbs_of(GroupMask m, int groups, int group_size) {
  std::vector<int> out;
  for (int g = 0; g < groups; ++g) {
    if (m & (GroupMask{1} << g)) {
      for (int r = 0; r < group_size; ++r) out.push_back(g * group_size + r);
    }
  }
  return out;
}

PassWindow find_pass(const EnvConfig& cfg) {
  const geometry::Vec3 ue = cfg.ue_position();
  const double dt = cfg.orbit.slot_duration;
  const long period_slots = static_cast<long>(std::ceil(cfg.orbit.period() / dt));
  auto visible = [&](long s) {
    return geometry::snapshot_at(cfg.orbit, ue, static_cast<double>(s) * dt).elevation >= cfg.min_elevation;
  };
  for (long s = 0; s < period_slots; ++s) {
    if (visible(s) && !visible(s - 1)) {
      PassWindow w;
      w.start_slot = s;
      long len = 0;
      while (len < period_slots && visible(s + len)) ++len;
      w.length = len;
      return w;
    }
  }
  throw std::runtime_error("UE never sees the satellite above the minimum elevation");
}

Environment::Environment(EnvConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed), fifo_(1) {
  cfg_.validate();
  pass_ = find_pass(cfg_);
  tx_upa_ = cfg_.tx_upa();
  rx_upa_ = cfg_.rx_upa();
  ue_ = cfg_.ue_position();
  demand_ = DemandProcess{cfg_.demand_mean, cfg_.demand_unit, seed_};
  fifo_.set_capacity(static_cast<size_t>(cfg_.fifo_length));
}

double Environment::demand_at(long global_slot) const { return draw_demand(demand_, global_slot); }

geometry::GeometrySnapshot Environment::geometry_at(long episode_slot) const {
  const double t = static_cast<double>(pass_.start_slot + episode_slot) * cfg_.orbit.slot_duration;
  return geometry::snapshot_at(cfg_.orbit, ue_, t);
}

channel::MultipathChannel Environment::channel_at(long episode_slot) const {
  const auto g = geometry_at(episode_slot);
  return channel::synthesize_channel(channel::link_state(g, cfg_.carrier), cfg_.scatter, scatter_seed_);
}

double Environment::link_gain(double distance) const {
  return geometry::pathloss(distance, cfg_.carrier) * geometry::db_to_linear(cfg_.tx_gain_dbi + cfg_.rx_gain_dbi);
}

double Environment::snr_scale(double distance) const {
  return geometry::db_to_linear(cfg_.tx_power_dbw) * link_gain(distance) /
         (static_cast<double>(cfg_.rx_antennas()) * cfg_.noise.variance());
}

channel::RbResponse Environment::response_at(long episode_slot) const {
  return channel::RbResponse(channel_at(episode_slot), tx_upa_, rx_upa_, episode_slot, cfg_.total_rbs, cfg_.symbol_duration);
}

BeamAngles Environment::clamp_beam(BeamAngles b) {
  b.azimuth = std::clamp(b.azimuth, 0.0, kPi);
  b.elevation = std::clamp(b.elevation, 0.0, kPi);
  return b;
}

void Environment::set_beams(const BeamAngles& tx, const BeamAngles& rx) {
  tx_beam_ = clamp_beam(tx);
  rx_beam_ = clamp_beam(rx);
}

std::pair<HighTierState, LowTierState> Environment::reset_episode(long episode) {
  if (episode < 0) throw std::invalid_argument("episode index must be non-negative");
  global_slot_ = episode * pass_.length;
  episode_ = episode;
  episode_slot_ = 0;
  episode_start_global_ = global_slot_;
  scatter_seed_ = derive_seed(seed_, streams::kScatter, static_cast<std::uint64_t>(episode));
  tx_beam_ = BeamAngles{};
  rx_beam_ = BeamAngles{};
  high_mask_ = 0;
  cycle_open_ = false;
  cycle_slot_ = 0;
  cycle_reward_sum_ = 0.0;
  cycle_history_.assign(cfg_.cycle, 0.0);
  fifo_.clear();
  high_state_.sat_position = geometry_at(0).sat_position;
  high_state_.avg_snr_history.assign(cfg_.cycle, 0.0);
  low_state_.per_rb_snr.assign(cfg_.total_rbs, 0.0);
  low_state_.rx_signal_strengths.assign(cfg_.rx_antennas(), 0.0);
  return {high_state_, low_state_};
}

void Environment::step_high(const HighTierAction& a) {
  if (episode_ < 0) throw std::logic_error("step_high before reset_episode");
  if (cycle_open_) throw std::logic_error("step_high called mid-cycle");
  if (episode_done()) throw std::logic_error("step_high after episode end");
  if (a.mask == 0 || !is_subset(a.mask, full_mask(cfg_.groups))) throw std::invalid_argument("high mask must be a nonempty subset of the pool");
  if (std::abs(a.d_azimuth) > cfg_.high_step_max || std::abs(a.d_elevation) > cfg_.high_step_max)
    throw std::invalid_argument("high beam step out of range");
  tx_beam_ = clamp_beam(BeamAngles{tx_beam_.azimuth + a.d_azimuth * cfg_.delta, tx_beam_.elevation + a.d_elevation * cfg_.delta});
  high_mask_ = a.mask;
  cycle_open_ = true;
  cycle_slot_ = 0;
  cycle_reward_sum_ = 0.0;
  std::fill(cycle_history_.begin(), cycle_history_.end(), 0.0);
}

std::pair<LowTierState, SlotRecord> Environment::step_low(const LowTierAction& a) {
  if (!cycle_open_) throw std::logic_error("step_low without an active satellite configuration");
  if (cycle_slot_ >= cfg_.cycle) throw std::logic_error("cycle must be closed before the next slot");
  if (episode_done()) throw std::logic_error("step_low after episode end");
  if (!is_subset(a.mask, high_mask_)) throw std::invalid_argument("UE mask outside the satellite RB pool");
  if (std::abs(a.d_azimuth) > cfg_.low_step_max || std::abs(a.d_elevation) > cfg_.low_step_max)
    throw std::invalid_argument("low beam step out of range");

  rx_beam_ = clamp_beam(BeamAngles{rx_beam_.azimuth + a.d_azimuth * cfg_.delta, rx_beam_.elevation + a.d_elevation * cfg_.delta});

  const auto geo = geometry_at(episode_slot_);
  const auto ch = channel::synthesize_channel(channel::link_state(geo, cfg_.carrier), cfg_.scatter, scatter_seed_);
  const channel::RbResponse resp(ch, tx_upa_, rx_upa_, episode_slot_, cfg_.total_rbs, cfg_.symbol_duration);
  const channel::BeamVector w_t = channel::steering_vector(tx_upa_, tx_beam_.azimuth, tx_beam_.elevation);
  const channel::BeamVector w_r = channel::steering_vector(rx_upa_, rx_beam_.azimuth, rx_beam_.elevation);
  const Eigen::VectorXcd g = resp.responses(w_t, w_r);

  const double scale = snr_scale(geo.distance);
  SlotRecord rec;
  rec.slot = global_slot_;
  rec.episode = episode_;
  rec.episode_slot = episode_slot_;
  rec.elevation = geo.elevation;
  rec.high_mask = high_mask_;
  rec.low_mask = a.mask;
  rec.rb_groups = popcount(a.mask);
  rec.tx_beam = tx_beam_;
  rec.rx_beam = rx_beam_;
  rec.rb_snr.resize(cfg_.total_rbs);
  rec.rb_rates.resize(cfg_.total_rbs);
  for (int m = 0; m < cfg_.total_rbs; ++m) {
    rec.rb_snr[m] = scale * std::norm(g(m));
    rec.rb_rates[m] = channel::rate(rec.rb_snr[m], cfg_.noise.rb_bandwidth);
  }

  const auto joint = rbs_of(a.mask, cfg_.groups, cfg_.group_size());
  const auto pool = rbs_of(high_mask_, cfg_.groups, cfg_.group_size());
  rec.demand = demand_at(global_slot_);
  for (int m : joint) rec.capacity += rec.rb_rates[m];
  rec.avg_rate = joint.empty() ? 0.0 : rec.capacity / static_cast<double>(joint.size());
  rec.omega = std::min(rec.capacity - rec.demand, 0.0);
  rec.throughput = std::min(rec.capacity, rec.demand);
  rec.demand_met = rec.capacity >= rec.demand;
  rec.reward_instant = rec.avg_rate + cfg_.eta * rec.omega;
  fifo_.push_back(rec.reward_instant);
  double s = 0.0;
  for (double v : fifo_) s += v;
  rec.reward_low = s / static_cast<double>(fifo_.size());

  if (rec.demand_met) cycle_reward_sum_ += rec.avg_rate;
  double pool_snr = 0.0;
  for (int m : pool) pool_snr += rec.rb_snr[m];
  cycle_history_[cycle_slot_] = pool.empty() ? 0.0 : pool_snr / static_cast<double>(pool.size());

  LowTierState next;
  next.per_rb_snr.assign(cfg_.total_rbs, 0.0);
  next.rx_signal_strengths.assign(cfg_.rx_antennas(), 0.0);
  if (!joint.empty()) {
    const Eigen::MatrixXcd hw = resp.received_vectors(w_t);
    for (int m : joint) {
      next.per_rb_snr[m] = rec.rb_snr[m];
      for (int r = 0; r < cfg_.rx_antennas(); ++r) next.rx_signal_strengths[r] += std::abs(hw(r, m));
    }
    for (double& v : next.rx_signal_strengths) v /= static_cast<double>(joint.size());
  }
  low_state_ = next;

  ++cycle_slot_;
  ++episode_slot_;
  ++global_slot_;
  return {low_state_, std::move(rec)};
}

CycleResult Environment::close_cycle(bool allow_partial) {
  if (!cycle_open_) throw std::logic_error("close_cycle without an open cycle");
  if (cycle_slot_ == 0 || (cycle_slot_ < cfg_.cycle && !episode_done() && !allow_partial))
    throw std::logic_error("close_cycle called before T slots elapsed");
  CycleResult r;
  r.slots = cycle_slot_;
  r.reward_high = cycle_reward_sum_ / static_cast<double>(cycle_slot_);
  high_state_.sat_position = geometry_at(episode_slot_).sat_position;
  high_state_.avg_snr_history = cycle_history_;
  r.next_state = high_state_;
  cycle_open_ = false;
  cycle_slot_ = 0;
  return r;
}

ObjectiveMetrics objective_metrics(const std::vector<SlotRecord>& log) {
  ObjectiveMetrics m;
  double groups = 0.0;
  m.satisfactory_error.reserve(log.size());
  for (const auto& r : log) {
    groups += r.rb_groups;
    m.satisfactory_error.push_back(std::abs(r.omega));
  }
  m.avg_rb_groups = log.empty() ? 0.0 : groups / static_cast<double>(log.size());
  return m;
}

double cycle_reward_from_log(const std::vector<SlotRecord>& cycle, const EnvConfig& cfg) {
  if (cycle.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& r : cycle) {
    const auto joint = rbs_of(r.low_mask & r.high_mask, cfg.groups, cfg.group_size());
    double sum = 0.0;
    for (int m : joint) sum += r.rb_rates[m];
    if (sum >= r.demand && !joint.empty()) acc += sum / static_cast<double>(joint.size());
  }
  return acc / static_cast<double>(cycle.size());
}

}  // namespace ntn::env
