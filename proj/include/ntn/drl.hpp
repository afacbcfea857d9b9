// SPDX-License-Identifier: Apache-2.0
// Two-time-scale collaborative learning: UE-side trust-region policy updates
// over summed advantages, satellite-side rollout with a learned tail value.
#pragma once

#include <boost/circular_buffer.hpp>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ntn/environment.hpp"
#include "ntn/neural.hpp"

namespace ntn::drl {

using nn::Mat;
using nn::Vec;

enum class Mode { proposed, single_estimation, independent };
std::string mode_name(Mode m);
Mode parse_mode(const std::string& s);

template <class T>
class ReplayMemory {
 public:
  explicit ReplayMemory(size_t capacity) : buf_(capacity) {}
  void push(T rec) { buf_.push_back(std::move(rec)); }
  size_t size() const { return buf_.size(); }
  size_t capacity() const { return buf_.capacity(); }
  bool empty() const { return buf_.empty(); }
  const T& operator[](size_t i) const { return buf_[i]; }
  const T& oldest() const { return buf_.front(); }
  const T& newest() const { return buf_.back(); }

 private:
  boost::circular_buffer<T> buf_;
};

enum class Tier { high, low };

struct ExperienceRecord {
  Tier tier = Tier::low;
  Vec state;
  Eigen::VectorXi action;  // low: az index, el index, G bits; high: action index
  Vec mask;                // free Bernoulli factors (low tier)
  double reward = 0.0;
  double target = 0.0;     // discounted return
  double high_advantage = 0.0;
  // Low records: state and return of the enclosing cycle, so the high
  // advantage can be re-baselined against the current high critic.
  Vec high_state;
  double high_target = 0.0;
  long slot = 0;
};

struct TrpoConfig {
  double kl_limit = 0.01;
  int cg_iters = 10;
  double backtrack_coeff = 0.8;
  int backtrack_steps = 10;
  double cg_damping = 1e-2;
  double discount = 0.99;
  void validate() const;
};

// Discounted return from every position to the end of the slice.
Vec discounted_returns(const std::vector<double>& rewards, double discount);
// Return minus baseline, per position.
Vec estimate_advantages(const std::vector<double>& rewards, const std::vector<double>& values, double discount);
// Truncated h-step returns, stopping at the slice end.
Vec windowed_returns(const std::vector<double>& rewards, double discount, int horizon);

struct PolicyBatch {
  Mat states;               // features x B
  Eigen::MatrixXi actions;  // (categorical + bernoulli) x B
  Mat mask;                 // bernoulli x B
  Vec adv_low;
  Vec adv_high;
};

struct TrpoReport {
  bool accepted = false;
  bool aborted = false;
  int backtracks = 0;
  double kl = 0.0;
  double surrogate_old = 0.0;
  double surrogate_new = 0.0;
  double step_inf_norm = 0.0;
};

double surrogate(const nn::Network& policy, const nn::PolicyLayout& lay, const PolicyBatch& b, const Vec& logp_old,
                 bool use_high);
TrpoReport trpo_update(nn::Network& policy, const nn::PolicyLayout& lay, const PolicyBatch& b, bool use_high,
                       const TrpoConfig& cfg);

struct CriticReport {
  double loss_before = 0.0;
  double loss_after = 0.0;
  bool accepted = false;
  double step_inf_norm = 0.0;
};

CriticReport critic_update(nn::Network& value, nn::AdamState& adam, const Mat& X, const Vec& targets,
                           const nn::AdamConfig& cfg, int steps = 1);

// UE action encoding.
struct LowActionCodec {
  int groups = 5;
  int step_max = 3;
  int beam_choices() const { return 2 * step_max + 1; }
  nn::PolicyLayout layout() const;
};

// Feature scaling shared by training and rollout.
Vec low_features(const env::LowTierState& s);
Vec high_features(const env::HighTierState& s, double orbit_radius);
double snr_feature(double snr);

struct RefStep {
  env::BeamAngles rx;
  env::GroupMask mask = 0;
};

struct ReferenceTrajectory {
  long origin_slot = 0;
  std::vector<RefStep> steps;
};

// Mode actions of the policy on frozen features, n_bar * T steps.
ReferenceTrajectory generate_reference_trajectory(const nn::Network& policy, const LowActionCodec& codec,
                                                  const env::LowTierState& frozen, const env::BeamAngles& rx_now,
                                                  double delta, int n_bar, int T, long origin_slot);

// Enumerated satellite actions: beam step index major, nonempty mask minor.
struct HighActionSpace {
  int groups = 5;
  int step_max = 1;
  int beam_choices() const { return (2 * step_max + 1) * (2 * step_max + 1); }
  int mask_choices() const { return (1 << groups) - 1; }
  int size() const { return beam_choices() * mask_choices(); }
  env::HighTierAction decode(int index) const;
  int encode(const env::HighTierAction& a) const;
};

// Satellite-side model of the next n_bar cycles: ephemeris-driven geometry,
// the episode's scatter model, and expected demand.
class RolloutModel {
 public:
  RolloutModel(const env::Environment& e, long start_episode_slot, int horizon_slots);

  int horizon() const { return horizon_; }
  bool valid(int j) const { return j < static_cast<int>(slots_.size()) && slots_[j].valid; }
  double expected_demand() const { return demand_; }
  double reward_scale = 1.0;

  struct Outcome {
    std::vector<double> cycle_rewards;
    env::HighTierState tail_state;
    bool tail_valid = false;
  };

  // Simulates n_bar cycles with the satellite holding `a` (zero steps afterwards).
  Outcome simulate(const env::HighTierAction& a, const ReferenceTrajectory& ref, int n_bar) const;
  // All actions at once; used by rollout_select.
  std::vector<Outcome> simulate_all(const HighActionSpace& space, const ReferenceTrajectory& ref, int n_bar) const;

 private:
  struct SlotModel {
    bool valid = false;
    Eigen::MatrixXcd coef;  // L x M
    Eigen::MatrixXcd a_t;   // N_t x L
    Eigen::MatrixXcd a_r;   // N_r x L
    double scale = 0.0;
  };
  const env::EnvConfig* cfg_;
  env::BeamAngles tx_now_;
  int horizon_;
  int cycle_;
  double demand_;
  std::vector<SlotModel> slots_;
  std::vector<geometry::Vec3> boundary_positions_;  // sat position at each cycle boundary
  channel::UpaConfig tx_upa_, rx_upa_;
};

struct RolloutResult {
  int index = 0;
  env::HighTierAction action;
  std::vector<double> scores;
};

double rollout_score(const RolloutModel::Outcome& o, const nn::Network& value_high, double orbit_radius, double gamma);
RolloutResult rollout_select(const RolloutModel& model, const nn::Network& value_high, const HighActionSpace& space,
                             const ReferenceTrajectory& ref, int n_bar, double gamma, double orbit_radius);

// Bytes exchanged per cycle.
long comm_elements(int T, int M, int n_bar);
long comm_overhead(int T, int M, int n_bar, int element_bytes);

struct DrlConfig {
  Mode mode = Mode::proposed;
  int n_bar = 8;
  TrpoConfig trpo;
  nn::AdamConfig adam;
  double discount_high = 0.99;
  double reward_scale = 1e-6;
  std::vector<int> actor_trunk{64, 64};
  std::vector<int> actor_head{32};
  std::vector<int> value_low{64, 32};
  std::vector<int> value_high{64, 32};
  int batch_size = 32;
  int high_batch_size = 32;
  int critic_steps = 1;
  int low_memory = 9600;
  int high_memory = 1200;
  double termination_eps = 1e-4;
  int element_bytes = 4;
  std::string message_log;  // JSON lines, empty to disable
  void validate() const;
};

struct TrainingStats {
  long slots = 0;
  long cycles = 0;
  long episodes = 0;
  long trpo_accepted = 0;
  long trpo_rejected = 0;
  long trpo_aborted = 0;
  long kl_violations = 0;
  long surrogate_violations = 0;
  long rejected_modified = 0;
  double max_accepted_kl = 0.0;
  long downlink_messages = 0;
  long uplink_messages = 0;
  long exchanged_elements = 0;
  long element_mismatches = 0;
  bool terminated_early = false;
};

// Called once per slot after its cycle closes, with the cycle's R_H.
using SlotCallback = std::function<void(const env::SlotRecord&, double reward_high)>;

class Trainer {
 public:
  Trainer(const env::EnvConfig& env_cfg, const DrlConfig& cfg, std::uint64_t seed);
  TrainingStats run(long slot_budget, const SlotCallback& cb = {});

  const nn::Network& policy() const { return policy_; }
  const nn::Network& value_low() const { return value_low_; }
  const nn::Network& value_high() const { return value_high_; }
  void save(const std::string& prefix) const;

 private:
  void finalize_episode();
  void low_updates(TrainingStats& st, double& cycle_norm);
  void high_update(double& cycle_norm);
  void log_message(const nlohmann::json& j);

  env::EnvConfig env_cfg_;
  DrlConfig cfg_;
  std::uint64_t seed_;
  env::Environment env_;
  LowActionCodec codec_;
  nn::PolicyLayout layout_;
  HighActionSpace space_;
  nn::Network policy_, value_low_, value_high_;
  nn::AdamState adam_low_, adam_high_;
  ReplayMemory<ExperienceRecord> low_mem_, high_mem_;
  Rng rng_;
  std::vector<ExperienceRecord> pending_low_, pending_high_;
  std::vector<long> pending_low_cycle_;
  std::vector<RefStep> last_actions_;
  std::unique_ptr<std::ofstream> msg_log_;
  double orbit_radius_;
};

}  // namespace ntn::drl
