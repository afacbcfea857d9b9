// SPDX-License-Identifier: Apache-2.0
#include "ntn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ntn/rng.hpp"

namespace ntn::baselines {

using geometry::kPi;

std::vector<double> BeamGrid::values() const {
  if (points < 2) throw std::invalid_argument("beam grid needs at least two points");
  std::vector<double> v(points);
  for (int i = 0; i < points; ++i) v[i] = kPi * i / (points - 1);
  v.back() = kPi;
  return v;
}

double BeamGrid::granularity() const { return kPi / (points - 1); }

double beam_gain(const channel::RbResponse& resp, const channel::UpaConfig& tx, const channel::UpaConfig& rx,
                 const env::BeamAngles& t, const env::BeamAngles& r) {
  const auto g = resp.responses(channel::steering_vector(tx, t.azimuth, t.elevation),
                                channel::steering_vector(rx, r.azimuth, r.elevation));
  return g.squaredNorm() / static_cast<double>(g.size());
}

BeamChoice bfs_beams(const channel::RbResponse& resp, const channel::UpaConfig& tx, const channel::UpaConfig& rx,
                     const BeamGrid& grid) {
  const auto v = grid.values();
  const int n = static_cast<int>(v.size());
  const int L = resp.paths();
  // mean_m |c_m^T z|^2 = z^H Q z with z_l = (a_t,l^H w_t)(w_r^H a_r,l).
  const Eigen::MatrixXcd& C = resp.coefficients();
  const Eigen::MatrixXcd Q = C.conjugate() * C.transpose() / static_cast<double>(resp.rbs());
  Eigen::MatrixXcd U(n * n, L), V(n * n, L);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      U.row(i * n + j) = resp.tx_projection(channel::steering_vector(tx, v[i], v[j])).transpose();
      V.row(i * n + j) = resp.rx_projection(channel::steering_vector(rx, v[i], v[j])).transpose();
    }
  // gain(a, b) = Re sum_lk Q_lk conj(u_l) u_k conj(v_l) v_k, evaluated as one real matrix product.
  const int F = L * L;
  Eigen::MatrixXd PA(n * n, 2 * F), PB(2 * F, n * n);
  for (int a = 0; a < n * n; ++a)
    for (int l = 0; l < L; ++l)
      for (int k = 0; k < L; ++k) {
        const std::complex<double> A = Q(l, k) * std::conj(U(a, l)) * U(a, k);
        const std::complex<double> B = std::conj(V(a, l)) * V(a, k);
        PA(a, l * L + k) = A.real();
        PA(a, F + l * L + k) = -A.imag();
        PB(l * L + k, a) = B.real();
        PB(F + l * L + k, a) = B.imag();
      }
  const Eigen::MatrixXd G = PA * PB;
  BeamChoice best;
  best.gain = -std::numeric_limits<double>::infinity();
  int bt = 0, br = 0;
  for (int a = 0; a < n * n; ++a)
    for (int b = 0; b < n * n; ++b)
      if (G(a, b) > best.gain) {
        best.gain = G(a, b);
        bt = a;
        br = b;
      }
  best.tx = {v[bt / n], v[bt % n]};
  best.rx = {v[br / n], v[br % n]};
  return best;
}

BeamChoice pbu_beams(const geometry::GeometrySnapshot& s) {
  const auto a = geometry::compute_angles(s);
  BeamChoice c;
  c.tx = env::Environment::clamp_beam({a.aod.azimuth, a.aod.elevation});
  c.rx = env::Environment::clamp_beam({a.aoa.azimuth, a.aoa.elevation});
  return c;
}

std::vector<double> group_rates(const std::vector<double>& rb_rates, int groups) {
  if (groups <= 0 || rb_rates.size() % groups != 0) throw std::invalid_argument("RBs must split evenly into groups");
  const size_t gs = rb_rates.size() / groups;
  std::vector<double> out(groups, 0.0);
  for (size_t m = 0; m < rb_rates.size(); ++m) out[m / gs] += rb_rates[m];
  return out;
}

namespace {

std::vector<int> order_desc(const std::vector<double>& score) {
  std::vector<int> idx(score.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return score[a] > score[b]; });
  return idx;
}

}  // namespace

env::GroupMask greedy_rb(const std::vector<double>& rates, double demand) {
  if (rates.empty()) throw std::invalid_argument("no groups");
  env::GroupMask mask = 0;
  double acc = 0.0;
  for (int g : order_desc(rates)) {
    mask |= env::GroupMask{1} << g;
    acc += rates[g];
    if (acc >= demand) break;
  }
  return mask;
}

env::GroupMask fixed_rb(int count, int groups, std::uint64_t seed, long slot) {
  if (count < 1 || count > groups) throw std::invalid_argument("fixed RB count out of range");
  Rng rng = make_rng(seed, streams::kFixedRb, static_cast<std::uint64_t>(slot));
  std::vector<int> idx(groups);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates with explicit draws so results do not depend on the library's shuffle.
  env::GroupMask mask = 0;
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(groups - i));
    std::swap(idx[i], idx[j]);
    mask |= env::GroupMask{1} << idx[i];
  }
  return mask;
}

BanditState::BanditState(int arms, double c, double cost)
    : counts(arms, 0), means(arms, 0.0), exploration(c), usage_cost(cost) {}

std::vector<double> BanditState::scores() const {
  const int n = static_cast<int>(counts.size());
  double avg = 0.0;
  int seen = 0;
  for (int i = 0; i < n; ++i)
    if (counts[i] > 0) {
      avg += means[i];
      ++seen;
    }
  avg = seen ? avg / seen : 0.0;
  const double norm = scale > 0.0 ? scale : 1.0;
  std::vector<double> s(n);
  for (int i = 0; i < n; ++i) {
    if (counts[i] == 0) {
      s[i] = std::numeric_limits<double>::infinity();
      continue;
    }
    s[i] = (means[i] - usage_cost * avg) / norm;
    if (exploration > 0.0 && total > 0)
      s[i] += exploration * std::sqrt(2.0 * std::log(static_cast<double>(total)) / counts[i]);
  }
  return s;
}

env::GroupMask mab_step(BanditState& st, const std::vector<double>& observed_rates, double demand) {
  if (observed_rates.size() != st.counts.size()) throw std::invalid_argument("rate vector size mismatch");
  env::GroupMask mask = 0;
  double acc = 0.0;
  for (int g : order_desc(st.scores())) {
    mask |= env::GroupMask{1} << g;
    acc += st.counts[g] > 0 ? st.means[g] : 0.0;
    if (st.counts[g] > 0 && acc >= demand) break;
  }
  for (size_t g = 0; g < st.counts.size(); ++g) {
    if (!((mask >> g) & 1u)) continue;
    const double r = observed_rates[g];
    st.scale = std::max(st.scale, r);
    ++st.counts[g];
    st.means[g] += (r - st.means[g]) / static_cast<double>(st.counts[g]);
    ++st.total;
  }
  return mask;
}

std::string scheme_name(const BaselineConfig& c) {
  const std::string b = c.beam == BeamScheme::bfs ? "bfs" : "pbu";
  const std::string r = c.rb == RbScheme::greedy ? "greedy" : c.rb == RbScheme::fixed ? "fixed" : "mab";
  return b + "_" + r;
}

BaselineRunner::BaselineRunner(const env::EnvConfig& env_cfg, const BaselineConfig& cfg, std::uint64_t seed)
    : env_cfg_(env_cfg),
      cfg_(cfg),
      seed_(seed),
      env_(env_cfg, seed),
      bandit_(env_cfg.groups, cfg.mab_exploration, cfg.mab_usage_cost) {
  if (cfg.fixed_count < 1 || cfg.fixed_count > env_cfg.groups) throw std::invalid_argument("fixed RB count out of range");
}

long BaselineRunner::run(long slot_budget, const SlotCallback& cb) {
  const auto& ec = env_cfg_;
  const auto tx = ec.tx_upa(), rx = ec.rx_upa();
  const env::GroupMask full = env::full_mask(ec.groups);
  long slots = 0;
  std::vector<env::SlotRecord> cycle_log;
  for (long episode = 0; slots < slot_budget; ++episode) {
    env_.reset_episode(episode);
    while (!env_.episode_done() && slots < slot_budget) {
      if (!env_.cycle_open()) env_.step_high({0, 0, full});
      const long es = env_.episode_slot();
      const auto geo = env_.geometry_at(es);
      const auto resp = env_.response_at(es);
      const BeamChoice bc = cfg_.beam == BeamScheme::bfs ? bfs_beams(resp, tx, rx, cfg_.grid) : pbu_beams(geo);
      env_.set_beams(bc.tx, bc.rx);

      const double scale = env_.snr_scale(geo.distance);
      const auto g = resp.responses(channel::steering_vector(tx, bc.tx.azimuth, bc.tx.elevation),
                                    channel::steering_vector(rx, bc.rx.azimuth, bc.rx.elevation));
      std::vector<double> rb(ec.total_rbs);
      for (int m = 0; m < ec.total_rbs; ++m) rb[m] = channel::rate(scale * std::norm(g(m)), ec.noise.rb_bandwidth);
      const auto gr = group_rates(rb, ec.groups);
      const double demand = env_.demand_at(env_.global_slot());

      env::GroupMask mask = full;
      switch (cfg_.rb) {
        case RbScheme::greedy: mask = greedy_rb(gr, demand); break;
        case RbScheme::fixed: mask = fixed_rb(cfg_.fixed_count, ec.groups, seed_, env_.global_slot()); break;
        case RbScheme::mab: mask = mab_step(bandit_, gr, demand); break;
      }
      auto [state, rec] = env_.step_low({0, 0, mask});
      (void)state;
      cycle_log.push_back(std::move(rec));
      ++slots;
      if (env_.cycle_slot() == ec.cycle || env_.episode_done() || slots >= slot_budget) {
        const auto cr = env_.close_cycle(true);
        if (cb)
          for (const auto& r : cycle_log) cb(r, cr.reward_high);
        cycle_log.clear();
      }
    }
  }
  return slots;
}

}  // namespace ntn::baselines
