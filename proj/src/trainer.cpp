// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ntn/drl.hpp"

namespace ntn::drl {

namespace {

nn::Network make_net(int inputs, const std::vector<int>& trunk, std::vector<nn::HeadSpec> heads, double out_scale,
                     std::uint64_t seed, std::uint64_t index) {
  nn::NetworkSpec spec;
  spec.inputs = inputs;
  spec.trunk = trunk;
  spec.heads = std::move(heads);
  spec.output_init_scale = out_scale;
  nn::Network net(spec);
  Rng rng = make_rng(seed, streams::kInit, index);
  net.initialize(rng);
  return net;
}

int sample_categorical(const Vec& logits, Rng& rng) {
  const Vec p = nn::softmax(logits);
  double u = uniform01(rng), acc = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    acc += p(i);
    if (u < acc) return i;
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace

Trainer::Trainer(const env::EnvConfig& env_cfg, const DrlConfig& cfg, std::uint64_t seed)
    : env_cfg_(env_cfg),
      cfg_(cfg),
      seed_(seed),
      env_(env_cfg, seed),
      codec_{env_cfg.groups, env_cfg.low_step_max},
      layout_(codec_.layout()),
      space_{env_cfg.groups, env_cfg.high_step_max},
      low_mem_(static_cast<size_t>(cfg.low_memory)),
      high_mem_(static_cast<size_t>(cfg.high_memory)),
      rng_(derive_seed(seed, streams::kPolicy)),
      orbit_radius_(env_cfg.orbit.radius()) {
  cfg_.validate();
  const int low_in = env_cfg.total_rbs + env_cfg.rx_antennas();
  const int high_in = 3 + env_cfg.cycle;
  policy_ = make_net(low_in, cfg.actor_trunk,
                     {nn::HeadSpec{cfg.actor_head, 2 * codec_.beam_choices()}, nn::HeadSpec{cfg.actor_head, env_cfg.groups}},
                     0.01, seed, 1);
  value_low_ = make_net(low_in, cfg.value_low, {nn::HeadSpec{{}, 1}}, 1.0, seed, 2);
  value_high_ = make_net(high_in, cfg.value_high, {nn::HeadSpec{{}, 1}}, 1.0, seed, 3);
  adam_low_.reset(value_low_.parameter_count());
  adam_high_.reset(value_high_.parameter_count());
  if (!cfg.message_log.empty()) {
    msg_log_ = std::make_unique<std::ofstream>(cfg.message_log);
    if (!*msg_log_) throw std::runtime_error("cannot open message log: " + cfg.message_log);
  }
}

void Trainer::log_message(const nlohmann::json& j) {
  if (msg_log_) *msg_log_ << j.dump() << "\n";
}

void Trainer::save(const std::string& prefix) const {
  nn::save_checkpoint(prefix + "_policy.ckpt", policy_);
  nn::save_checkpoint(prefix + "_value_low.ckpt", value_low_, &adam_low_);
  nn::save_checkpoint(prefix + "_value_high.ckpt", value_high_, &adam_high_);
}

void Trainer::low_updates(TrainingStats& st, double& cycle_norm) {
  const long B = cfg_.batch_size;
  if (static_cast<long>(low_mem_.size()) < B) return;
  const int d = policy_.spec().inputs;
  const int n_cat = static_cast<int>(layout_.categorical.size());
  PolicyBatch batch;
  batch.states.resize(d, B);
  batch.actions.resize(n_cat + layout_.bernoulli, B);
  batch.mask.resize(layout_.bernoulli, B);
  batch.adv_high.resize(B);
  Vec targets(B), high_targets(B), has_high(B);
  Mat high_states(value_high_.spec().inputs, B);
  std::uniform_int_distribution<size_t> pick(0, low_mem_.size() - 1);
  for (long b = 0; b < B; ++b) {
    const auto& r = low_mem_[pick(rng_)];
    batch.states.col(b) = r.state;
    batch.actions.col(b) = r.action;
    batch.mask.col(b) = r.mask;
    targets(b) = r.target;
    has_high(b) = r.high_state.size() > 0 ? 1.0 : 0.0;
    high_targets(b) = r.high_target;
    high_states.col(b) = has_high(b) > 0.0 ? r.high_state : Vec::Zero(high_states.rows());
  }
  batch.adv_low = targets - value_low_.forward(batch.states).row(0).transpose();
  batch.adv_high = (high_targets - value_high_.forward(high_states).row(0).transpose()).cwiseProduct(has_high);

  const bool use_high = cfg_.mode == Mode::proposed;
  const Vec before = policy_.params();
  const Mat logits_old = policy_.forward(batch.states);
  const TrpoReport rep = trpo_update(policy_, layout_, batch, use_high, cfg_.trpo);
  if (rep.accepted) {
    ++st.trpo_accepted;
    const Mat logits_new = policy_.forward(batch.states);
    const double kl = nn::kl_divergence(layout_, logits_old, logits_new, batch.mask);
    const Vec lp_old = nn::log_prob(layout_, logits_old, batch.actions, batch.mask);
    const double surr = surrogate(policy_, layout_, batch, lp_old, use_high);
    const double surr_old = (use_high ? Vec(batch.adv_low + batch.adv_high) : batch.adv_low).mean();
    if (!(kl <= cfg_.trpo.kl_limit)) ++st.kl_violations;
    if (!(surr > surr_old)) ++st.surrogate_violations;
    st.max_accepted_kl = std::max(st.max_accepted_kl, kl);
    cycle_norm = std::max(cycle_norm, rep.step_inf_norm);
  } else {
    rep.aborted ? ++st.trpo_aborted : ++st.trpo_rejected;
    if (std::memcmp(before.data(), policy_.params().data(), sizeof(double) * before.size()) != 0) ++st.rejected_modified;
  }
  const CriticReport cr = critic_update(value_low_, adam_low_, batch.states, targets, cfg_.adam, cfg_.critic_steps);
  cycle_norm = std::max(cycle_norm, cr.step_inf_norm);
}

void Trainer::high_update(double& cycle_norm) {
  if (high_mem_.empty()) return;
  const long B = std::min<long>(cfg_.high_batch_size, static_cast<long>(high_mem_.size()));
  Mat X(value_high_.spec().inputs, B);
  Vec y(B);
  std::uniform_int_distribution<size_t> pick(0, high_mem_.size() - 1);
  for (long b = 0; b < B; ++b) {
    const auto& r = high_mem_[pick(rng_)];
    X.col(b) = r.state;
    y(b) = r.target;
  }
  const CriticReport cr = critic_update(value_high_, adam_high_, X, y, cfg_.adam, cfg_.critic_steps);
  cycle_norm = std::max(cycle_norm, cr.step_inf_norm);
}

void Trainer::finalize_episode() {
  if (!pending_high_.empty()) {
    std::vector<double> rh;
    for (const auto& r : pending_high_) rh.push_back(r.reward);
    const Vec g = discounted_returns(rh, cfg_.discount_high);
    Mat X(value_high_.spec().inputs, static_cast<long>(pending_high_.size()));
    for (size_t k = 0; k < pending_high_.size(); ++k) X.col(k) = pending_high_[k].state;
    const Mat v = value_high_.forward(X);
    for (size_t k = 0; k < pending_high_.size(); ++k) {
      pending_high_[k].target = g(k);
      pending_high_[k].high_advantage = g(k) - v(0, k);
    }
  }
  if (!pending_low_.empty()) {
    std::vector<double> rl;
    for (const auto& r : pending_low_) rl.push_back(r.reward);
    const Vec g = windowed_returns(rl, cfg_.trpo.discount, env_cfg_.cycle);
    for (size_t i = 0; i < pending_low_.size(); ++i) {
      auto& r = pending_low_[i];
      r.target = g(i);
      const long k = pending_low_cycle_[i];
      if (k < static_cast<long>(pending_high_.size())) {
        r.high_advantage = pending_high_[k].high_advantage;
        r.high_target = pending_high_[k].target;
        r.high_state = pending_high_[k].state;
      }
      low_mem_.push(r);
    }
  }
  for (auto& r : pending_high_) high_mem_.push(r);
  pending_low_.clear();
  pending_low_cycle_.clear();
  pending_high_.clear();
}

TrainingStats Trainer::run(long slot_budget, const SlotCallback& cb) {
  TrainingStats st;
  const auto& ec = env_cfg_;
  const int T = ec.cycle, M = ec.total_rbs, G = ec.groups;
  const int k = codec_.beam_choices();
  const bool messaging = cfg_.mode != Mode::independent;
  long episode = 0;
  int quiet_cycles = 0;
  constexpr int kQuietWindow = 100;

  while (st.slots < slot_budget && !st.terminated_early) {
    auto [s_high, s_low] = env_.reset_episode(episode);
    ++st.episodes;
    last_actions_.assign(T, RefStep{env_.rx_beam(), env::full_mask(G)});
    double prev_reward_high = 0.0;
    std::uniform_int_distribution<int> pick(0, space_.size() - 1);
    env::HighTierAction a_high = space_.decode(pick(rng_));
    long cycle_index = 0;

    while (!env_.episode_done() && st.slots < slot_budget) {
      long cycle_elements = 0;
      if (messaging) {
        // Downlink: state, action (absolute tx angles + per-RB pool bits), last reward.
        std::vector<double> msg;
        for (int i = 0; i < 3; ++i) msg.push_back(s_high.sat_position(i));
        for (double v : s_high.avg_snr_history) msg.push_back(v);
        const env::BeamAngles tx_next = env::Environment::clamp_beam(
            {env_.tx_beam().azimuth + a_high.d_azimuth * ec.delta, env_.tx_beam().elevation + a_high.d_elevation * ec.delta});
        msg.push_back(tx_next.azimuth);
        msg.push_back(tx_next.elevation);
        for (int m = 0; m < M; ++m) msg.push_back((a_high.mask >> (m / ec.group_size())) & 1u);
        msg.push_back(prev_reward_high);
        cycle_elements += static_cast<long>(msg.size());
        ++st.downlink_messages;
        log_message({{"dir", "down"}, {"cycle", st.cycles}, {"elements", msg.size()}});
      }
      env_.step_high(a_high);
      ExperienceRecord hrec;
      hrec.tier = Tier::high;
      hrec.state = high_features(s_high, orbit_radius_);
      hrec.action = Eigen::VectorXi::Constant(1, space_.encode(a_high));
      hrec.slot = env_.global_slot();
      pending_high_.push_back(hrec);

      std::vector<env::SlotRecord> cycle_log;
      double cycle_norm = 0.0;
      for (int p = 0; p < T && !env_.episode_done() && st.slots < slot_budget; ++p) {
        const Vec x = low_features(s_low);
        Vec mask = Vec::Ones(G);
        if (messaging)
          for (int g = 0; g < G; ++g) mask(g) = (env_.high_mask() >> g) & 1u ? 1.0 : 0.0;
        const Vec logits = policy_.forward_one(x);
        Eigen::VectorXi act(2 + G);
        act(0) = sample_categorical(logits.segment(0, k), rng_);
        act(1) = sample_categorical(logits.segment(k, k), rng_);
        env::GroupMask requested = 0;
        for (int g = 0; g < G; ++g) {
          act(2 + g) = mask(g) > 0.0 && uniform01(rng_) < nn::sigmoid(logits(2 * k + g)) ? 1 : 0;
          if (act(2 + g)) requested |= env::GroupMask{1} << g;
        }
        env::LowTierAction la;
        la.d_azimuth = act(0) - codec_.step_max;
        la.d_elevation = act(1) - codec_.step_max;
        la.mask = requested & env_.high_mask();
        auto [next_low, rec] = env_.step_low(la);

        ExperienceRecord lrec;
        lrec.tier = Tier::low;
        lrec.state = x;
        lrec.action = act;
        lrec.mask = mask;
        lrec.reward = rec.reward_low * cfg_.reward_scale;
        lrec.slot = rec.slot;
        pending_low_.push_back(std::move(lrec));
        pending_low_cycle_.push_back(cycle_index);
        last_actions_[p] = RefStep{env_.rx_beam(), la.mask};
        cycle_log.push_back(std::move(rec));
        s_low = next_low;
        ++st.slots;
        low_updates(st, cycle_norm);
      }

      const env::CycleResult cr = env_.close_cycle(st.slots >= slot_budget);
      pending_high_.back().reward = cr.reward_high * cfg_.reward_scale;
      prev_reward_high = cr.reward_high;
      if (cb)
        for (const auto& r : cycle_log) cb(r, cr.reward_high);
      ++st.cycles;
      s_high = cr.next_state;

      ReferenceTrajectory ref;
      if (messaging) {
        ref = generate_reference_trajectory(policy_, codec_, s_low, env_.rx_beam(), ec.delta, cfg_.n_bar, T, env_.global_slot());
        const long up = static_cast<long>(ref.steps.size()) * (2 + M);
        cycle_elements += up;
        ++st.uplink_messages;
        log_message({{"dir", "up"}, {"cycle", st.cycles - 1}, {"elements", up}});
        if (cycle_elements != comm_elements(T, M, cfg_.n_bar)) ++st.element_mismatches;
        st.exchanged_elements += cycle_elements;
      } else {
        for (int j = 0; j < cfg_.n_bar * T; ++j) ref.steps.push_back(last_actions_[j % T]);
      }
      ++cycle_index;
      if (env_.episode_done() || st.slots >= slot_budget) break;

      high_update(cycle_norm);
      RolloutModel model(env_, env_.episode_slot(), cfg_.n_bar * T + 1);
      model.reward_scale = cfg_.reward_scale;
      a_high = rollout_select(model, value_high_, space_, ref, cfg_.n_bar, cfg_.discount_high, orbit_radius_).action;

      const bool updating = !low_mem_.empty() || !high_mem_.empty();
      quiet_cycles = updating && cycle_norm < cfg_.termination_eps ? quiet_cycles + 1 : 0;
      if (quiet_cycles >= kQuietWindow) {
        st.terminated_early = true;
        break;
      }
    }
    finalize_episode();
    ++episode;
  }
  return st;
}

}  // namespace ntn::drl
