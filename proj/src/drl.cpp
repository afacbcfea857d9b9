// SPDX-License-Identifier: Apache-2.0
#include "ntn/drl.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ntn::drl {

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::proposed: return "proposed";
    case Mode::single_estimation: return "single_estimation";
    case Mode::independent: return "independent";
  }
  return "proposed";
}

Mode parse_mode(const std::string& s) {
  if (s == "proposed") return Mode::proposed;
  if (s == "single_estimation") return Mode::single_estimation;
  if (s == "independent") return Mode::independent;
  throw std::invalid_argument("unknown DRL mode: " + s);
}

void TrpoConfig::validate() const {
  if (!(kl_limit > 0.0)) throw std::invalid_argument("kl_limit must be positive");
  if (cg_iters < 1 || backtrack_steps < 1) throw std::invalid_argument("cg_iters and backtrack_steps must be >= 1");
  if (!(backtrack_coeff > 0.0 && backtrack_coeff < 1.0)) throw std::invalid_argument("backtrack_coeff must be in (0,1)");
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("discount must be in (0,1)");
}

Vec discounted_returns(const std::vector<double>& rewards, double discount) {
  Vec g(rewards.size());
  double acc = 0.0;
  for (long t = static_cast<long>(rewards.size()) - 1; t >= 0; --t) {
    acc = rewards[t] + discount * acc;
    g(t) = acc;
  }
  return g;
}

Vec estimate_advantages(const std::vector<double>& rewards, const std::vector<double>& values, double discount) {
  if (rewards.empty()) throw std::invalid_argument("estimate_advantages: empty slice");
  if (values.size() != rewards.size()) throw std::invalid_argument("estimate_advantages: size mismatch");
  Vec a = discounted_returns(rewards, discount);
  for (size_t t = 0; t < values.size(); ++t) a(t) -= values[t];
  return a;
}

Vec windowed_returns(const std::vector<double>& rewards, double discount, int horizon) {
  const long n = static_cast<long>(rewards.size());
  Vec g = Vec::Zero(n);
  for (long t = 0; t < n; ++t) {
    double acc = 0.0, w = 1.0;
    for (long l = t; l < std::min(n, t + horizon); ++l) {
      acc += w * rewards[l];
      w *= discount;
    }
    g(t) = acc;
  }
  return g;
}

namespace {

Vec total_advantage(const PolicyBatch& b, bool use_high) {
  return use_high ? Vec(b.adv_low + b.adv_high) : b.adv_low;
}

// d/dlogits of sum_b A_b log pi(a_b | s_b).
Mat logp_weighted_grad(const nn::PolicyLayout& lay, const Mat& logits, const Eigen::MatrixXi& actions, const Mat& mask,
                       const Vec& w) {
  Mat d = Mat::Zero(logits.rows(), logits.cols());
  const int n_cat = static_cast<int>(lay.categorical.size());
  for (long b = 0; b < logits.cols(); ++b) {
    int row = 0;
    for (int c = 0; c < n_cat; ++c) {
      const int k = lay.categorical[c];
      const Vec p = nn::softmax(logits.col(b).segment(row, k));
      d.col(b).segment(row, k) = -w(b) * p;
      d(row + actions(c, b), b) += w(b);
      row += k;
    }
    for (int i = 0; i < lay.bernoulli; ++i) {
      if (mask(i, b) == 0.0) continue;
      d(row + i, b) = w(b) * (static_cast<double>(actions(n_cat + i, b)) - nn::sigmoid(logits(row + i, b)));
    }
  }
  return d;
}

}  // namespace

double surrogate(const nn::Network& policy, const nn::PolicyLayout& lay, const PolicyBatch& b, const Vec& logp_old,
                 bool use_high) {
  const Mat logits = policy.forward(b.states);
  const Vec lp = nn::log_prob(lay, logits, b.actions, b.mask);
  const Vec adv = total_advantage(b, use_high);
  return ((lp - logp_old).array().exp() * adv.array()).mean();
}

TrpoReport trpo_update(nn::Network& policy, const nn::PolicyLayout& lay, const PolicyBatch& b, bool use_high,
                       const TrpoConfig& cfg) {
  TrpoReport rep;
  const long B = b.states.cols();
  const Vec adv = total_advantage(b, use_high);
  nn::Network::Cache cache;
  const Mat logits_old = policy.forward(b.states, &cache);
  const Vec logp_old = nn::log_prob(lay, logits_old, b.actions, b.mask);
  rep.surrogate_old = adv.mean();
  rep.surrogate_new = rep.surrogate_old;
  if (!adv.allFinite() || !logits_old.allFinite()) {
    rep.aborted = true;
    return rep;
  }
  const Vec g = policy.backward(cache, logp_weighted_grad(lay, logits_old, b.actions, b.mask, adv)) / static_cast<double>(B);
  if (!g.allFinite()) {
    rep.aborted = true;
    return rep;
  }
  if (g.squaredNorm() == 0.0) return rep;

  auto fvp = [&](const Vec& v) {
    const Mat jv = policy.jvp(cache, v);
    const Mat mjv = nn::output_fisher_product(lay, logits_old, b.mask, jv);
    return Vec(policy.backward(cache, mjv) / static_cast<double>(B) + cfg.cg_damping * v);
  };

  // Conjugate gradient on F x = g.
  Vec x = Vec::Zero(g.size());
  Vec r = g, p = g;
  double rr = r.squaredNorm();
  for (int i = 0; i < cfg.cg_iters; ++i) {
    const Vec Ap = fvp(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) break;
    const double alpha = rr / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    const double rr_new = r.squaredNorm();
    if (rr_new < 1e-12) break;
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  const double xFx = x.dot(fvp(x));
  if (!(xFx > 0.0) || !std::isfinite(xFx)) {
    rep.aborted = true;
    return rep;
  }
  const Vec full = std::sqrt(2.0 * cfg.kl_limit / xFx) * x;

  const Vec old = policy.params();
  double frac = 1.0;
  for (int j = 0; j < cfg.backtrack_steps; ++j, frac *= cfg.backtrack_coeff) {
    policy.params() = old + frac * full;
    const Mat logits_new = policy.forward(b.states);
    const double kl = nn::kl_divergence(lay, logits_old, logits_new, b.mask);
    const Vec lp = nn::log_prob(lay, logits_new, b.actions, b.mask);
    const double surr = ((lp - logp_old).array().exp() * adv.array()).mean();
    rep.backtracks = j + 1;
    if (std::isfinite(kl) && std::isfinite(surr) && kl <= cfg.kl_limit && surr > rep.surrogate_old) {
      rep.accepted = true;
      rep.kl = kl;
      rep.surrogate_new = surr;
      rep.step_inf_norm = (frac * full).cwiseAbs().maxCoeff();
      return rep;
    }
  }
  policy.params() = old;
  return rep;
}

CriticReport critic_update(nn::Network& value, nn::AdamState& adam, const Mat& X, const Vec& targets,
                           const nn::AdamConfig& cfg, int steps) {
  CriticReport rep;
  const Vec start = value.params();
  const nn::AdamState adam_start = adam;
  auto lg = nn::mse_loss(value, X, targets);
  rep.loss_before = lg.loss;
  for (int s = 0; s < steps; ++s) {
    if (s > 0) lg = nn::mse_loss(value, X, targets);
    if (lg.grad.squaredNorm() == 0.0) break;
    nn::adam_step(value.params(), lg.grad, adam, cfg);
  }
  rep.loss_after = nn::mse_loss(value, X, targets).loss;
  if (rep.loss_after > rep.loss_before || !std::isfinite(rep.loss_after)) {
    value.params() = start;
    adam = adam_start;
    rep.loss_after = rep.loss_before;
    return rep;
  }
  rep.accepted = true;
  rep.step_inf_norm = (value.params() - start).cwiseAbs().maxCoeff();
  return rep;
}

nn::PolicyLayout LowActionCodec::layout() const {
  nn::PolicyLayout l;
  l.categorical = {beam_choices(), beam_choices()};
  l.bernoulli = groups;
  return l;
}

double snr_feature(double snr) { return std::log10(1.0 + snr) / 10.0; }

Vec low_features(const env::LowTierState& s) {
  Vec f(s.per_rb_snr.size() + s.rx_signal_strengths.size());
  long i = 0;
  for (double v : s.per_rb_snr) f(i++) = snr_feature(v);
  for (double v : s.rx_signal_strengths) f(i++) = v;
  return f;
}

Vec high_features(const env::HighTierState& s, double orbit_radius) {
  Vec f(3 + s.avg_snr_history.size());
  f.head<3>() = s.sat_position / orbit_radius;
  for (size_t i = 0; i < s.avg_snr_history.size(); ++i) f(3 + i) = snr_feature(s.avg_snr_history[i]);
  return f;
}

ReferenceTrajectory generate_reference_trajectory(const nn::Network& policy, const LowActionCodec& codec,
                                                  const env::LowTierState& frozen, const env::BeamAngles& rx_now,
                                                  double delta, int n_bar, int T, long origin_slot) {
  ReferenceTrajectory ref;
  ref.origin_slot = origin_slot;
  const long n = static_cast<long>(n_bar) * T;
  if (n <= 0) return ref;
  const Vec logits = policy.forward_one(low_features(frozen));
  const int k = codec.beam_choices();
  Eigen::Index az = 0, el = 0;
  logits.segment(0, k).maxCoeff(&az);
  logits.segment(k, k).maxCoeff(&el);
  env::GroupMask mask = 0;
  for (int g = 0; g < codec.groups; ++g)
    if (logits(2 * k + g) > 0.0) mask |= env::GroupMask{1} << g;
  const double d_az = (static_cast<int>(az) - codec.step_max) * delta;
  const double d_el = (static_cast<int>(el) - codec.step_max) * delta;
  env::BeamAngles rx = rx_now;
  ref.steps.reserve(n);
  for (long j = 0; j < n; ++j) {
    rx = env::Environment::clamp_beam(env::BeamAngles{rx.azimuth + d_az, rx.elevation + d_el});
    ref.steps.push_back(RefStep{rx, mask});
  }
  return ref;
}

env::HighTierAction HighActionSpace::decode(int index) const {
  if (index < 0 || index >= size()) throw std::out_of_range("high action index out of range");
  const int side = 2 * step_max + 1;
  const int beam = index / mask_choices();
  env::HighTierAction a;
  a.d_azimuth = beam / side - step_max;
  a.d_elevation = beam % side - step_max;
  a.mask = static_cast<env::GroupMask>(index % mask_choices() + 1);
  return a;
}

int HighActionSpace::encode(const env::HighTierAction& a) const {
  const int side = 2 * step_max + 1;
  const int beam = (a.d_azimuth + step_max) * side + (a.d_elevation + step_max);
  return beam * mask_choices() + static_cast<int>(a.mask) - 1;
}

long comm_elements(int T, int M, int n_bar) {
  return 6L + T + M + static_cast<long>(2 + M) * n_bar * T;
}

long comm_overhead(int T, int M, int n_bar, int element_bytes) {
  if (T < 1 || M < 1 || n_bar < 0 || element_bytes <= 0) throw std::invalid_argument("comm_overhead: invalid arguments");
  return comm_elements(T, M, n_bar) * element_bytes;
}

void DrlConfig::validate() const {
  trpo.validate();
  if (n_bar < 0) throw std::invalid_argument("n_bar must be >= 0");
  if (batch_size < 1 || high_batch_size < 1) throw std::invalid_argument("batch sizes must be >= 1");
  if (low_memory < 1 || high_memory < 1) throw std::invalid_argument("memory sizes must be >= 1");
  if (!(discount_high > 0.0 && discount_high < 1.0)) throw std::invalid_argument("discount_high must be in (0,1)");
  if (element_bytes <= 0) throw std::invalid_argument("element_bytes must be positive");
}

}  // namespace ntn::drl
