// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "ntn/drl.hpp"

namespace ntn::drl {

RolloutModel::RolloutModel(const env::Environment& e, long start_episode_slot, int horizon_slots)
    : cfg_(&e.config()),
      tx_now_(e.tx_beam()),
      horizon_(horizon_slots),
      cycle_(e.config().cycle),
      demand_(e.config().demand_mean * e.config().demand_unit),
      tx_upa_(e.config().tx_upa()),
      rx_upa_(e.config().rx_upa()) {
  const auto& cfg = e.config();
  const double base = geometry::db_to_linear(cfg.tx_power_dbw) /
                      (static_cast<double>(cfg.rx_antennas()) * cfg.noise.variance());
  slots_.resize(std::max(horizon_slots, 0));
  for (int j = 0; j < horizon_slots; ++j) {
    const long es = start_episode_slot + j;
    if (es >= e.pass().length) continue;
    SlotModel& s = slots_[j];
    s.valid = true;
    const auto geo = e.geometry_at(es);
    const auto ch = e.channel_at(es);
    const channel::RbResponse resp(ch, tx_upa_, rx_upa_, es, cfg.total_rbs, cfg.symbol_duration);
    s.coef = resp.coefficients();
    const int L = resp.paths();
    s.a_t.resize(tx_upa_.size(), L);
    s.a_r.resize(rx_upa_.size(), L);
    for (int l = 0; l < L; ++l) {
      s.a_t.col(l) = resp.tx_steering()[l];
      s.a_r.col(l) = resp.rx_steering()[l];
    }
    s.scale = base * e.link_gain(geo.distance);
  }
  const int cycles = cycle_ > 0 ? horizon_slots / cycle_ : 0;
  for (int c = 0; c <= cycles; ++c) boundary_positions_.push_back(e.geometry_at(start_episode_slot + static_cast<long>(c) * cycle_).sat_position);
}

std::vector<RolloutModel::Outcome> RolloutModel::simulate_all(const HighActionSpace& space, const ReferenceTrajectory& ref,
                                                              int n_bar) const {
  const int n_slots = n_bar * cycle_;
  if (n_slots > horizon_) throw std::invalid_argument("rollout horizon exceeds the model");
  if (static_cast<int>(ref.steps.size()) < n_slots) throw std::invalid_argument("reference trajectory too short");
  const auto& cfg = *cfg_;
  const int G = cfg.groups, gs = cfg.group_size(), M = cfg.total_rbs;
  const int n_masks = space.mask_choices();
  const int side = 2 * space.step_max + 1;
  std::vector<Outcome> out(space.size());
  for (auto& o : out) {
    o.cycle_rewards.assign(n_bar, 0.0);
    o.tail_state.avg_snr_history.assign(cycle_, 0.0);
    if (n_bar < static_cast<int>(boundary_positions_.size())) o.tail_state.sat_position = boundary_positions_[n_bar];
    // The tail state is usable only if the pass continues past the horizon.
    o.tail_valid = n_slots < static_cast<int>(slots_.size()) && slots_[n_slots].valid;
  }
  Eigen::VectorXd group_rate(G), group_snr(G);
  for (int beam = 0; beam < space.beam_choices(); ++beam) {
    const int d_az = beam / side - space.step_max;
    const int d_el = beam % side - space.step_max;
    const env::BeamAngles tx = env::Environment::clamp_beam(
        env::BeamAngles{tx_now_.azimuth + d_az * cfg.delta, tx_now_.elevation + d_el * cfg.delta});
    const channel::BeamVector w_t = channel::steering_vector(tx_upa_, tx.azimuth, tx.elevation);
    for (int j = 0; j < n_slots; ++j) {
      if (!slots_[j].valid) continue;
      const SlotModel& s = slots_[j];
      const RefStep& step = ref.steps[j];
      const channel::BeamVector w_r = channel::steering_vector(rx_upa_, step.rx.azimuth, step.rx.elevation);
      const Eigen::VectorXcd u = s.a_t.adjoint() * w_t;
      const Eigen::VectorXcd v = (s.a_r.adjoint() * w_r).conjugate();
      const Eigen::VectorXcd g = s.coef.transpose() * u.cwiseProduct(v);
      group_rate.setZero();
      group_snr.setZero();
      for (int m = 0; m < M; ++m) {
        const double snr = s.scale * std::norm(g(m));
        group_snr(m / gs) += snr;
        group_rate(m / gs) += channel::rate(snr, cfg.noise.rb_bandwidth);
      }
      const int c = j / cycle_, p = j % cycle_;
      for (int mi = 0; mi < n_masks; ++mi) {
        const env::GroupMask cand = static_cast<env::GroupMask>(mi + 1);
        const env::GroupMask joint = cand & step.mask;
        double sum = 0.0, pool = 0.0;
        int n_joint = 0, n_pool = 0;
        for (int gi = 0; gi < G; ++gi) {
          const env::GroupMask bit = env::GroupMask{1} << gi;
          if (joint & bit) {
            sum += group_rate(gi);
            n_joint += gs;
          }
          if (cand & bit) {
            pool += group_snr(gi);
            n_pool += gs;
          }
        }
        Outcome& o = out[beam * n_masks + mi];
        if (n_joint > 0 && sum >= demand_) o.cycle_rewards[c] += reward_scale * sum / n_joint / cycle_;
        if (c == n_bar - 1) o.tail_state.avg_snr_history[p] = pool / n_pool;
      }
    }
  }
  return out;
}

RolloutModel::Outcome RolloutModel::simulate(const env::HighTierAction& a, const ReferenceTrajectory& ref, int n_bar) const {
  HighActionSpace space{cfg_->groups, cfg_->high_step_max};
  return simulate_all(space, ref, n_bar)[space.encode(a)];
}

double rollout_score(const RolloutModel::Outcome& o, const nn::Network& value_high, double orbit_radius, double gamma) {
  double score = 0.0, w = 1.0;
  for (double r : o.cycle_rewards) {
    score += w * r;
    w *= gamma;
  }
  if (o.tail_valid) score += w * value_high.forward_one(high_features(o.tail_state, orbit_radius))(0);
  return score;
}

RolloutResult rollout_select(const RolloutModel& model, const nn::Network& value_high, const HighActionSpace& space,
                             const ReferenceTrajectory& ref, int n_bar, double gamma, double orbit_radius) {
  const auto outcomes = model.simulate_all(space, ref, n_bar);
  const int n = static_cast<int>(outcomes.size());
  const int d = value_high.spec().inputs;
  Mat X(d, n);
  for (int i = 0; i < n; ++i) X.col(i) = high_features(outcomes[i].tail_state, orbit_radius);
  const Mat v = value_high.forward(X);
  RolloutResult res;
  res.scores.resize(n);
  const double tail_w = std::pow(gamma, n_bar);
  for (int i = 0; i < n; ++i) {
    double s = 0.0, w = 1.0;
    for (double r : outcomes[i].cycle_rewards) {
      s += w * r;
      w *= gamma;
    }
    if (outcomes[i].tail_valid) s += tail_w * v(0, i);
    res.scores[i] = s;
    if (s > res.scores[res.index]) res.index = i;
  }
  res.action = space.decode(res.index);
  return res;
}

}  // namespace ntn::drl
