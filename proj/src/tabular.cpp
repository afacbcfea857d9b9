// SPDX-License-Identifier: Apache-2.0
#include "ntn/tabular.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <chrono>
#include <stdexcept>

#include "ntn/rng.hpp"

namespace ntn::tabular {

Policy deterministic_policy(const std::vector<int>& actions, int n_actions) {
  Policy p(actions.size(), std::vector<double>(n_actions, 0.0));
  for (size_t s = 0; s < actions.size(); ++s) p[s][actions[s]] = 1.0;
  return p;
}

Policy uniform_policy(int n_states, int n_actions) {
  return Policy(n_states, std::vector<double>(n_actions, 1.0 / n_actions));
}

Policy mix(const Policy& base, const Policy& other, double alpha) {
  if (base.size() != other.size()) throw std::invalid_argument("policy shapes differ");
  Policy out = base;
  for (size_t s = 0; s < base.size(); ++s)
    for (size_t a = 0; a < base[s].size(); ++a) out[s][a] = (1.0 - alpha) * base[s][a] + alpha * other[s][a];
  return out;
}

std::vector<int> decode_policy(long code, int n_states, int n_actions) {
  std::vector<int> a(n_states);
  for (int s = 0; s < n_states; ++s) {
    a[s] = static_cast<int>(code % n_actions);
    code /= n_actions;
  }
  return a;
}

long encode_policy(const std::vector<int>& actions, int n_actions) {
  long code = 0;
  for (int s = static_cast<int>(actions.size()) - 1; s >= 0; --s) code = code * n_actions + actions[s];
  return code;
}

void MdpTable::validate() const {
  if (n <= 0 || m <= 0) throw std::invalid_argument("empty MDP");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("discount must lie in [0, 1)");
  if (R.size() != static_cast<size_t>(n) * m || P.size() != static_cast<size_t>(n) * m * n)
    throw std::invalid_argument("MDP table sizes");
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < m; ++a) {
      double sum = 0.0;
      for (int t = 0; t < n; ++t) sum += p(s, a, t);
      if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("transition rows must sum to one");
    }
}

Vec q_row(const MdpTable& mdp, const Vec& v, int s) {
  Vec q(mdp.m);
  for (int a = 0; a < mdp.m; ++a) {
    double acc = 0.0;
    for (int t = 0; t < mdp.n; ++t) acc += mdp.p(s, a, t) * v(t);
    q(a) = mdp.r(s, a) + mdp.gamma * acc;
  }
  return q;
}

Vec bellman_optimal(const MdpTable& mdp, const Vec& v) {
  Vec out(mdp.n);
  for (int s = 0; s < mdp.n; ++s) out(s) = q_row(mdp, v, s).maxCoeff();
  return out;
}

std::vector<int> greedy(const MdpTable& mdp, const Vec& v) {
  std::vector<int> pi(mdp.n);
  for (int s = 0; s < mdp.n; ++s) {
    const Vec q = q_row(mdp, v, s);
    int best = 0;
    for (int a = 1; a < mdp.m; ++a)
      if (q(a) > q(best)) best = a;
    pi[s] = best;
  }
  return pi;
}

Vec evaluate(const MdpTable& mdp, const Policy& pi) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(mdp.n, mdp.n);
  Vec r = Vec::Zero(mdp.n);
  for (int s = 0; s < mdp.n; ++s)
    for (int a = 0; a < mdp.m; ++a) {
      const double w = pi[s][a];
      if (w == 0.0) continue;
      r(s) += w * mdp.r(s, a);
      for (int t = 0; t < mdp.n; ++t) A(s, t) -= mdp.gamma * w * mdp.p(s, a, t);
    }
  return A.partialPivLu().solve(r);
}

Vec evaluate(const MdpTable& mdp, const std::vector<int>& pi) { return evaluate(mdp, deterministic_policy(pi, mdp.m)); }

ViResult value_iteration(const MdpTable& mdp, double tol) {
  mdp.validate();
  ViResult res;
  res.v = Vec::Zero(mdp.n);
  for (res.iterations = 1; res.iterations < 1000000; ++res.iterations) {
    const Vec next = bellman_optimal(mdp, res.v);
    const double diff = (next - res.v).lpNorm<Eigen::Infinity>();
    res.v = next;
    if (diff <= tol * (1.0 - mdp.gamma)) break;
  }
  res.policy = greedy(mdp, res.v);
  // Exact values of the greedy policy remove the residual iteration error.
  const Vec exact = evaluate(mdp, res.policy);
  if ((exact - res.v).lpNorm<Eigen::Infinity>() < 1e-9) res.v = exact;
  return res;
}

void TabularTTMDP::validate() const {
  if (nH <= 0 || mH <= 0 || nL <= 0 || mL <= 0 || T <= 0) throw std::invalid_argument("empty tabular instance");
  if (static_cast<long>(nH) * mH + static_cast<long>(nL) * mL > 10000) throw std::invalid_argument("instance too large");
  if (!(gamma_H >= 0 && gamma_H < 1 && gamma_L >= 0 && gamma_L < 1)) throw std::invalid_argument("discounts in [0, 1)");
  if (!(slip >= 0 && slip <= 1)) throw std::invalid_argument("slip probability in [0, 1]");
  const size_t LA = static_cast<size_t>(nL) * mL;
  if (rH.size() != static_cast<size_t>(nH) * mH || q.size() != LA || rL.size() != LA * mH || g.size() != LA * mH ||
      h.size() != static_cast<size_t>(nH) * mH * nL || psi.size() != static_cast<size_t>(nH) ||
      phi.size() != static_cast<size_t>(nL))
    throw std::invalid_argument("tabular table sizes");
  for (int v : g)
    if (v < 0 || v >= nL) throw std::invalid_argument("low transition out of range");
  for (int v : h)
    if (v < 0 || v >= nH) throw std::invalid_argument("high transition out of range");
  for (int v : psi)
    if (v < 0 || v >= nL) throw std::invalid_argument("psi out of range");
  for (int v : phi)
    if (v < 0 || v >= nH) throw std::invalid_argument("phi out of range");
}

double TabularTTMDP::reward_H_max() const {
  double r = 0.0;
  for (int s = 0; s < nH; ++s)
    for (int a = 0; a < mH; ++a) r = std::max(r, std::abs(rH[s * mH + a]));
  double qm = 0.0;
  for (double v : q) qm = std::max(qm, std::abs(v));
  return r + qm;
}

double TabularTTMDP::reward_L_max() const {
  double r = 0.0;
  for (double v : rL) r = std::max(r, std::abs(v));
  return r;
}

TabularTTMDP random_instance(const InstanceShape& sh, std::uint64_t seed) {
  TabularTTMDP m;
  m.nH = sh.nH;
  m.mH = sh.mH;
  m.nL = sh.nL;
  m.mL = sh.mL;
  m.T = sh.T;
  m.gamma_H = sh.gamma_H;
  m.gamma_L = sh.gamma_L;
  Rng rng = make_rng(seed, streams::kTabular);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> sL(0, sh.nL - 1), sH(0, sh.nH - 1);
  const size_t LA = static_cast<size_t>(sh.nL) * sh.mL;
  m.rH.resize(static_cast<size_t>(sh.nH) * sh.mH);
  for (double& v : m.rH) v = 0.5 * u(rng);
  m.q.resize(LA);
  for (double& v : m.q) v = 0.5 * u(rng);
  m.rL.resize(LA * sh.mH);
  m.g.resize(LA * sh.mH);
  for (size_t i = 0; i < LA; ++i) {
    const double base = u(rng);
    const int next = sL(rng);
    for (int aH = 0; aH < sh.mH; ++aH) {
      m.rL[i * sh.mH + aH] = sh.decoupled ? base : u(rng);
      m.g[i * sh.mH + aH] = sh.decoupled ? next : sL(rng);
    }
  }
  m.h.resize(static_cast<size_t>(sh.nH) * sh.mH * sh.nL);
  for (int& v : m.h) v = sH(rng);
  m.psi.resize(sh.nH);
  for (int& v : m.psi) v = sL(rng);
  m.phi.resize(sh.nL);
  for (int& v : m.phi) v = sH(rng);
  m.validate();
  return m;
}

MdpTable high_mdp(const TabularTTMDP& m, const Policy& pi_L) {
  MdpTable t;
  t.n = m.nH;
  t.m = m.mH;
  t.gamma = m.gamma_H;
  t.R.assign(static_cast<size_t>(m.nH) * m.mH, 0.0);
  t.P.assign(static_cast<size_t>(m.nH) * m.mH * m.nH, 0.0);
  std::vector<double> dist(m.nL), next(m.nL);
  for (int s = 0; s < m.nH; ++s)
    for (int a = 0; a < m.mH; ++a) {
      std::fill(dist.begin(), dist.end(), 0.0);
      dist[m.psi[s]] = 1.0;
      double qsum = 0.0;
      for (int k = 0; k < m.T; ++k) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int l = 0; l < m.nL; ++l) {
          if (dist[l] == 0.0) continue;
          for (int b = 0; b < m.mL; ++b) {
            const double w = dist[l] * pi_L[l][b];
            if (w == 0.0) continue;
            qsum += w * m.q[l * m.mL + b];
            next[m.low_next(l, b, a)] += (1.0 - m.slip) * w;
            for (double& v : next) v += m.slip * w / m.nL;
          }
        }
        dist.swap(next);
      }
      t.R[s * m.mH + a] = m.rH[s * m.mH + a] + qsum / m.T;
      for (int l = 0; l < m.nL; ++l) {
        if (dist[l] == 0.0) continue;
        for (int sp = 0; sp < m.nH; ++sp) t.P[(static_cast<size_t>(s) * m.mH + a) * m.nH + sp] += dist[l] * m.slip / m.nH;
        t.P[(static_cast<size_t>(s) * m.mH + a) * m.nH + m.high_next(s, a, l)] += dist[l] * (1.0 - m.slip);
      }
    }
  return t;
}

MdpTable low_mdp(const TabularTTMDP& m, const Policy& pi_H) {
  MdpTable t;
  t.n = m.nL;
  t.m = m.mL;
  t.gamma = m.gamma_L;
  t.R.assign(static_cast<size_t>(m.nL) * m.mL, 0.0);
  t.P.assign(static_cast<size_t>(m.nL) * m.mL * m.nL, 0.0);
  for (int s = 0; s < m.nL; ++s)
    for (int a = 0; a < m.mL; ++a)
      for (int aH = 0; aH < m.mH; ++aH) {
        const double w = pi_H[m.phi[s]][aH];
        if (w == 0.0) continue;
        t.R[s * m.mL + a] += w * m.low_reward(s, a, aH);
        const size_t row = (static_cast<size_t>(s) * m.mL + a) * m.nL;
        for (int sp = 0; sp < m.nL; ++sp) t.P[row + sp] += w * m.slip / m.nL;
        t.P[row + m.low_next(s, a, aH)] += w * (1.0 - m.slip);
      }
  return t;
}

ViResult value_iteration_oracle(const TabularTTMDP& mdp, Tier tier, const Policy& counterpart) {
  return value_iteration(tier == Tier::high ? high_mdp(mdp, counterpart) : low_mdp(mdp, counterpart));
}

std::vector<int> best_response_H(const TabularTTMDP& m, const std::vector<int>& pi_L) {
  return value_iteration(high_mdp(m, deterministic_policy(pi_L, m.mL))).policy;
}

std::vector<int> best_response_L(const TabularTTMDP& m, const std::vector<int>& pi_H) {
  return value_iteration(low_mdp(m, deterministic_policy(pi_H, m.mH))).policy;
}

std::vector<Equilibrium> enumerate_equilibria(const TabularTTMDP& m) {
  std::vector<Equilibrium> out;
  long nLpol = 1;
  for (int s = 0; s < m.nL; ++s) nLpol *= m.mL;
  for (long c = 0; c < nLpol; ++c) {
    const auto pl = decode_policy(c, m.nL, m.mL);
    const auto br_h = value_iteration(high_mdp(m, deterministic_policy(pl, m.mL)));
    const auto br_l = value_iteration(low_mdp(m, deterministic_policy(br_h.policy, m.mH)));
    // pl must itself be optimal against br_h (value equality, not index equality).
    const Vec vl = evaluate(low_mdp(m, deterministic_policy(br_h.policy, m.mH)), pl);
    if ((vl - br_l.v).lpNorm<Eigen::Infinity>() > 1e-10) continue;
    // Other optimal high responses would give further equilibria; only the canonical one is kept.
    out.push_back({br_h.policy, pl, br_h.v, br_l.v});
  }
  return out;
}

bool best_response_converges(const TabularTTMDP& m, const Equilibrium& eq) {
  long nLpol = 1;
  for (int s = 0; s < m.nL; ++s) nLpol *= m.mL;
  for (long c = 0; c < nLpol; ++c) {
    auto pl = decode_policy(c, m.nL, m.mL);
    bool reached = false;
    for (int it = 0; it < 50 && !reached; ++it) {
      const auto ph = best_response_H(m, pl);
      const auto next = best_response_L(m, ph);
      reached = next == eq.pi_L && ph == eq.pi_H;
      pl = next;
    }
    if (!reached) return false;
  }
  return true;
}

namespace {

// Smallest gap between the best and second-best action values at any state.
double action_gap(const MdpTable& t, const Vec& v) {
  double gap = std::numeric_limits<double>::infinity();
  for (int s = 0; s < t.n; ++s) {
    Vec q = q_row(t, v, s);
    std::sort(q.data(), q.data() + q.size(), std::greater<double>());
    if (q.size() > 1) gap = std::min(gap, q(0) - q(1));
  }
  return gap;
}

}  // namespace

TabularTTMDP default_instance() {
  // First generator seed whose instance has a unique pure equilibrium that
  // best-response iteration reaches from every start, with clear action gaps.
  InstanceShape sh;
  for (std::uint64_t seed = 1; seed < 10000; ++seed) {
    TabularTTMDP m = random_instance(sh, seed);
    const auto eqs = enumerate_equilibria(m);
    if (eqs.size() != 1) continue;
    const auto& e = eqs.front();
    const double gH = action_gap(high_mdp(m, deterministic_policy(e.pi_L, m.mL)), e.x);
    const double gL = action_gap(low_mdp(m, deterministic_policy(e.pi_H, m.mH)), e.y);
    if (gH < 0.05 || gL < 0.05) continue;
    if (!best_response_converges(m, e)) continue;
    return m;
  }
  throw std::runtime_error("no suitable default tabular instance");
}

Equilibrium default_equilibrium(const TabularTTMDP& m) {
  const auto eqs = enumerate_equilibria(m);
  if (eqs.empty()) throw std::runtime_error("instance has no pure equilibrium");
  return eqs.front();
}

double step_a(long n) {
  if (n <= 1) return 1.0;
  const double x = static_cast<double>(n);
  return 1.0 / (1.0 + x * std::log(x));
}

double step_b(long n) { return 1.0 / (static_cast<double>(n) + 1.0); }

IterateTrace two_timescale_iterate(const TabularTTMDP& m, const IterateConfig& cfg, const Equilibrium* ref) {
  m.validate();
  if (cfg.steps < 1) throw std::invalid_argument("iterate needs at least one step");
  IterateTrace tr;
  tr.steps = cfg.steps;
  const double sig_H = cfg.noise * m.reward_H_max();
  const double sig_L = cfg.noise * m.reward_L_max();
  tr.reward_H_bound = m.reward_H_max() + sig_H;
  tr.reward_L_bound = m.reward_L_max() + sig_L;

  std::map<long, MdpTable> high_cache, low_cache;
  std::map<long, std::vector<int>> br_cache;
  std::map<std::pair<long, long>, Vec> low_value_cache;
  auto high_of = [&](long code) -> const MdpTable& {
    auto it = high_cache.find(code);
    if (it == high_cache.end())
      it = high_cache.emplace(code, high_mdp(m, deterministic_policy(decode_policy(code, m.nL, m.mL), m.mL))).first;
    return it->second;
  };
  auto low_of = [&](long code) -> const MdpTable& {
    auto it = low_cache.find(code);
    if (it == low_cache.end())
      it = low_cache.emplace(code, low_mdp(m, deterministic_policy(decode_policy(code, m.nH, m.mH), m.mH))).first;
    return it->second;
  };
  auto low_value = [&](long codeL, long codeH) -> const Vec& {
    auto key = std::make_pair(codeL, codeH);
    auto it = low_value_cache.find(key);
    if (it == low_value_cache.end())
      it = low_value_cache.emplace(key, evaluate(low_of(codeH), decode_policy(codeL, m.nL, m.mL))).first;
    return it->second;
  };
  auto br_of = [&](long codeL) -> long {
    auto it = br_cache.find(codeL);
    if (it == br_cache.end()) it = br_cache.emplace(codeL, value_iteration(high_of(codeL)).policy).first;
    return encode_policy(it->second, m.mH);
  };

  Rng rng = make_rng(cfg.seed, streams::kTabular, 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec x = Vec::Zero(m.nH), y = Vec::Zero(m.nL);
  std::vector<int> pi_H(m.nH, 0), pi_L(m.nL, 0);
  const long ref_H = ref ? encode_policy(ref->pi_H, m.mH) : -1;
  const long ref_L = ref ? encode_policy(ref->pi_L, m.mL) : -1;

  for (long n = 0; n < cfg.steps; ++n) {
    const double an = cfg.a(n), bn = cfg.b(n);
    const long codeH_old = encode_policy(pi_H, m.mH);
    pi_L = greedy(low_of(codeH_old), y);
    const long codeL = encode_policy(pi_L, m.mL);
    const MdpTable& hm = high_of(codeL);
    pi_H = greedy(hm, x);
    const long codeH = encode_policy(pi_H, m.mH);
    const MdpTable& lm = low_of(codeH);

    const Vec tx = bellman_optimal(hm, x);
    Vec look = x;
    for (int k = 0; k < cfg.n_bar; ++k) look = bellman_optimal(hm, look);
    Vec beta_H = look - tx;
    for (int s = 0; s < m.nH; ++s) beta_H(s) += sig_H * u(rng);

    Vec ty(m.nL);
    for (int s = 0; s < m.nL; ++s) {
      double acc = 0.0;
      for (int t = 0; t < m.nL; ++t) acc += lm.p(s, pi_L[s], t) * y(t);
      ty(s) = lm.r(s, pi_L[s]) + lm.gamma * acc;
    }
    Vec beta_L = low_value(codeL, br_of(codeL)) - low_value(codeL, codeH);
    for (int s = 0; s < m.nL; ++s) beta_L(s) += sig_L * u(rng);

    x += an * (tx - x + beta_H);
    y += bn * (ty - y + beta_L);

    if (ref && (codeH != ref_H || codeL != ref_L)) tr.last_mismatch = n;
    if (cfg.record_residuals) {
      tr.beta_H.push_back(beta_H);
      tr.beta_L.push_back(beta_L);
      tr.a.push_back(an);
      tr.b.push_back(bn);
    }
    if (cfg.record_every > 0 && (n + 1) % cfg.record_every == 0) {
      tr.checkpoints.push_back(n + 1);
      tr.x_hist.push_back(x);
      tr.y_hist.push_back(y);
    }
  }
  tr.x = x;
  tr.y = y;
  tr.pi_H = pi_H;
  tr.pi_L = pi_L;
  return tr;
}

double theorem2_bound(double r_max, double gamma, int sa, double delta, double n) {
  if (n <= 0) throw std::invalid_argument("bound needs n > 0");
  return 4.0 * r_max / (1.0 - gamma) * (1.0 / (n * (1.0 - gamma)) + 2.0 * std::sqrt(2.0 / n * std::log(2.0 * sa / delta)));
}

Theorem2Report check_theorem2(const IterateTrace& tr, const TabularTTMDP& m, const Equilibrium& eq, double delta) {
  Theorem2Report r;
  const double n = static_cast<double>(tr.steps);
  r.bound_H = theorem2_bound(tr.reward_H_bound, m.gamma_H, m.nH * m.mH, delta, n);
  r.bound_L = theorem2_bound(tr.reward_L_bound, m.gamma_L, m.nL * m.mL, delta, n);
  r.error_H = (eq.x - tr.x).lpNorm<Eigen::Infinity>();
  r.error_L = (eq.y - tr.y).lpNorm<Eigen::Infinity>();
  r.pass_H = r.error_H <= r.bound_H;
  r.pass_L = r.error_L <= r.bound_L;
  return r;
}

double corollary1_time(double eps, double delta, double r_H, double r_L, double gamma_H, double gamma_L, int sa_H,
                       int sa_L) {
  if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
  auto tier = [&](double r, double g, int sa) {
    return 128.0 * r * r * std::log(2.0 * sa / delta) / (eps * eps * (1.0 - g) * (1.0 - g));
  };
  return std::max(tier(r_H, gamma_H, sa_H), tier(r_L, gamma_L, sa_L));
}

MartingaleReport check_martingale(const IterateTrace& tr, long window) {
  MartingaleReport rep;
  const long N = static_cast<long>(tr.beta_H.size());
  if (N == 0 || static_cast<long>(tr.beta_L.size()) != N) throw std::invalid_argument("trace has no residuals");
  window = std::min(window, N);
  auto scan = [&](const std::vector<Vec>& beta, const std::vector<double>& step, double& mean_out, double& sd_out,
                  double& tail_out) {
    const int S = static_cast<int>(beta.front().size());
    bool ok = true;
    mean_out = 0.0;
    sd_out = 0.0;
    for (int s = 0; s < S; ++s) {
      double mean = 0.0;
      for (long i = N - window; i < N; ++i) mean += beta[i](s);
      mean /= static_cast<double>(window);
      double var = 0.0;
      for (long i = N - window; i < N; ++i) var += (beta[i](s) - mean) * (beta[i](s) - mean);
      const double sd = std::sqrt(var / static_cast<double>(window));
      if (std::abs(mean) > std::abs(mean_out)) mean_out = mean;
      sd_out = std::max(sd_out, sd);
      // A zero-noise trace has sd 0; then the mean itself must vanish.
      if (!(std::abs(mean) <= 0.05 * sd || std::abs(mean) < 1e-12)) ok = false;
    }
    // Largest partial-sum increment over the last 10% of steps.
    tail_out = 0.0;
    const long start = N - std::max(1L, N / 10);
    for (int s = 0; s < S; ++s) {
      double acc = 0.0, lo = 0.0, hi = 0.0;
      for (long i = start; i < N; ++i) {
        acc += step[i] * beta[i](s);
        lo = std::min(lo, acc);
        hi = std::max(hi, acc);
      }
      tail_out = std::max(tail_out, hi - lo);
    }
    return ok;
  };
  const bool mh = scan(tr.beta_H, tr.a, rep.mean_H, rep.sd_H, rep.tail_H);
  const bool ml = scan(tr.beta_L, tr.b, rep.mean_L, rep.sd_L, rep.tail_L);
  rep.zero_mean = mh && ml;
  rep.summable = rep.tail_H < 1e-3 && rep.tail_L < 1e-3;
  return rep;
}

namespace {

// One-step rollout (policy improvement) of the satellite policy against pi_L;
// the current action is kept unless another is strictly better.
std::vector<int> rollout_improve(const TabularTTMDP& m, const std::vector<int>& pi_H, const std::vector<int>& pi_L) {
  const MdpTable hm = high_mdp(m, deterministic_policy(pi_L, m.mL));
  const Vec v = evaluate(hm, pi_H);
  std::vector<int> out = pi_H;
  for (int s = 0; s < m.nH; ++s) {
    const Vec q = q_row(hm, v, s);
    for (int a = 0; a < m.mH; ++a)
      if (q(a) > q(out[s]) + 1e-12) out[s] = a;
  }
  return out;
}

Vec value_H(const TabularTTMDP& m, const std::vector<int>& pi_H, const std::vector<int>& pi_L) {
  return evaluate(high_mdp(m, deterministic_policy(pi_L, m.mL)), pi_H);
}

Vec value_L(const TabularTTMDP& m, const std::vector<int>& pi_H, const std::vector<int>& pi_L) {
  return evaluate(low_mdp(m, deterministic_policy(pi_H, m.mH)), pi_L);
}

}  // namespace

Prop1Report check_proposition1(const TabularTTMDP& m, const std::vector<int>& pi_H0, const std::vector<int>& pi_L0,
                               int stages, double tol) {
  m.validate();
  Prop1Report rep;
  std::vector<int> pH = pi_H0, pL = pi_L0;
  Vec vH = value_H(m, pH, pL), vL = value_L(m, pH, pL);
  rep.v_H.push_back(vH);
  rep.v_L.push_back(vL);
  long nLpol = 1;
  for (int s = 0; s < m.nL; ++s) nLpol *= m.mL;

  for (int k = 0; k < stages; ++k) {
    // Low phase: exact maximization of the summed improvement, with the
    // satellite's next policy anticipated as its rollout update. Candidates
    // must not lower either tier's value at any state.
    std::vector<int> best_L = pL;
    double best_J = -std::numeric_limits<double>::infinity();
    for (long c = 0; c < nLpol; ++c) {
      const auto cand = decode_policy(c, m.nL, m.mL);
      const auto next_H = rollout_improve(m, pH, cand);
      const Vec b1 = value_L(m, next_H, cand) - vL;
      const Vec b2 = value_H(m, pH, cand) - vH;
      if (b1.minCoeff() < -tol || b2.minCoeff() < -tol) continue;
      const double J = b1.mean() + b2.mean();
      const bool keep_current = cand == pL;
      if (J > best_J + 1e-12 || (keep_current && J >= best_J - 1e-12)) {
        if (!(keep_current && J < best_J - 1e-12)) {
          best_J = J;
          best_L = cand;
        }
      }
    }
    const bool feasible = best_J > -std::numeric_limits<double>::infinity();
    if (feasible) {
      pH = rollout_improve(m, pH, best_L);
      pL = best_L;
    }
    const Vec nH = value_H(m, pH, pL), nL = value_L(m, pH, pL);
    rep.worst_drop_H = std::max(rep.worst_drop_H, (vH - nH).maxCoeff());
    rep.worst_drop_L = std::max(rep.worst_drop_L, (vL - nL).maxCoeff());
    if ((vH - nH).maxCoeff() > tol) rep.monotone_H = false;
    if ((vL - nL).maxCoeff() > tol) rep.monotone_L = false;
    vH = nH;
    vL = nL;
    rep.v_H.push_back(vH);
    rep.v_L.push_back(vL);
    ++rep.stages;
  }
  rep.pi_H = pH;
  rep.pi_L = pL;
  const auto oH = value_iteration_oracle(m, Tier::high, deterministic_policy(pL, m.mL));
  const auto oL = value_iteration_oracle(m, Tier::low, deterministic_policy(pH, m.mH));
  rep.oracle_gap_H = (oH.v - vH).lpNorm<Eigen::Infinity>();
  rep.oracle_gap_L = (oL.v - vL).lpNorm<Eigen::Infinity>();
  rep.converged = rep.oracle_gap_H <= 1e-6 && rep.oracle_gap_L <= 1e-6;
  return rep;
}

namespace {

Vec discounted_visitation(const MdpTable& t, const Policy& pi) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(t.n, t.n);
  for (int s = 0; s < t.n; ++s)
    for (int a = 0; a < t.m; ++a)
      for (int sp = 0; sp < t.n; ++sp) A(s, sp) -= t.gamma * pi[s][a] * t.p(s, a, sp);
  const Vec mu0 = Vec::Constant(t.n, 1.0 / t.n);
  return A.transpose().partialPivLu().solve(mu0);
}

struct TrajectoryOutcome {
  double prob_old = 0.0, prob_new = 0.0;
  double reward = 0.0;  // r_H + mean q
  int final_state = 0;
};

// Every T-step UE trajectory from s_L0 with satellite action aH held fixed.
void enumerate_trajectories(const TabularTTMDP& m, int s0, int aH, const Policy& old_L, const Policy& new_L,
                            std::vector<TrajectoryOutcome>& out) {
  out.clear();
  struct Partial {
    int s;
    double po, pn, qsum;
  };
  std::vector<Partial> cur{{s0, 1.0, 1.0, 0.0}}, nxt;
  for (int k = 0; k < m.T; ++k) {
    nxt.clear();
    for (const auto& p : cur)
      for (int b = 0; b < m.mL; ++b) {
        const double po = p.po * old_L[p.s][b], pn = p.pn * new_L[p.s][b];
        if (po == 0.0 && pn == 0.0) continue;
        const double qs = p.qsum + m.q[p.s * m.mL + b];
        const int det = m.low_next(p.s, b, aH);
        for (int sp = 0; sp < m.nL; ++sp) {
          const double w = (sp == det ? 1.0 - m.slip : 0.0) + m.slip / m.nL;
          if (w == 0.0) continue;
          nxt.push_back({sp, po * w, pn * w, qs});
        }
      }
    cur.swap(nxt);
  }
  for (const auto& p : cur) out.push_back({p.po, p.pn, p.qsum / m.T, p.s});
}

}  // namespace

Lemma1Report check_lemma1(const TabularTTMDP& m, const Policy& pi_L_old, const Policy& pi_L_new, const Policy& pi_H,
                          double alpha_L, double alpha_H, double tol) {
  m.validate();
  Lemma1Report rep;
  const Policy pL = mix(pi_L_old, pi_L_new, alpha_L);

  // Satellite side.
  {
    const MdpTable old_m = high_mdp(m, pi_L_old), new_m = high_mdp(m, pL);
    const Vec v_old = evaluate(old_m, pi_H), v_new = evaluate(new_m, pi_H);
    rep.lhs_H = (v_new - v_old).mean();
    const Vec d = discounted_visitation(old_m, pi_H);
    const double g = m.gamma_H;
    std::vector<TrajectoryOutcome> traj;
    double L = 0.0, eps = 0.0;
    for (int s = 0; s < m.nH; ++s)
      for (int a = 0; a < m.mH; ++a) {
        if (pi_H[s][a] == 0.0) continue;
        enumerate_trajectories(m, m.psi[s], a, pi_L_old, pL, traj);
        for (const auto& t : traj) {
          double next = 0.0;
          for (int sp = 0; sp < m.nH; ++sp)
            next += ((sp == m.high_next(s, a, t.final_state) ? 1.0 - m.slip : 0.0) + m.slip / m.nH) * v_old(sp);
          const double A = m.rH[s * m.mH + a] + t.reward + g * next - v_old(s);
          eps = std::max(eps, std::abs(A));
          L += d(s) * pi_H[s][a] * t.prob_new * A;
        }
      }
    const double keep = std::pow(1.0 - alpha_L, m.T);
    rep.surrogate_H = L;
    rep.eps_H = eps;
    rep.rhs_H = L - 4.0 * eps * (1.0 - keep) * (1.0 - keep) * g / ((1.0 - g) * (1.0 - keep * g));
    rep.holds_H = rep.lhs_H >= rep.rhs_H - tol;
  }

  // UE side.
  {
    const auto br = value_iteration(high_mdp(m, pL)).policy;
    const Policy pH_new = mix(pi_H, deterministic_policy(br, m.mH), alpha_H);
    const MdpTable old_m = low_mdp(m, pi_H), new_m = low_mdp(m, pH_new);
    const Vec v_old = evaluate(old_m, pi_L_old), v_new = evaluate(new_m, pL);
    rep.lhs_L = (v_new - v_old).mean();
    const Vec d = discounted_visitation(old_m, pi_L_old);
    const double g = m.gamma_L;
    double L = 0.0, eps = 0.0;
    for (int s = 0; s < m.nL; ++s)
      for (int a = 0; a < m.mL; ++a)
        for (int aH = 0; aH < m.mH; ++aH) {
          const double w_old = pi_L_old[s][a] * pi_H[m.phi[s]][aH];
          const double w_new = pL[s][a] * pH_new[m.phi[s]][aH];
          if (w_old == 0.0 && w_new == 0.0) continue;
          double next = 0.0;
          for (int sp = 0; sp < m.nL; ++sp)
            next += ((sp == m.low_next(s, a, aH) ? 1.0 - m.slip : 0.0) + m.slip / m.nL) * v_old(sp);
          const double A = m.low_reward(s, a, aH) + g * next - v_old(s);
          eps = std::max(eps, std::abs(A));
          L += d(s) * w_new * A;
        }
    const int T = m.T;
    const double kL = 1.0 - alpha_L;
    const double gT = std::pow(g, T) * std::pow(kL, T);
    const double bracket = 1.0 / (1.0 - g) - (1.0 - gT) / ((1.0 - g * kL) * (1.0 - gT * (1.0 - alpha_H)));
    const double coef = 1.0 - kL * std::pow(1.0 - alpha_H, 1.0 / T);
    rep.surrogate_L = L;
    rep.eps_L = eps;
    rep.rhs_L = L - 4.0 * coef * eps * bracket;
    rep.holds_L = rep.lhs_L >= rep.rhs_L - tol;
  }
  return rep;
}

SuiteReport run_theory_suite(const SuiteConfig& cfg) {
  SuiteReport rep;
  const TabularTTMDP def = default_instance();
  const Equilibrium eq = default_equilibrium(def);
  const auto t0 = std::chrono::steady_clock::now();
  for (int seed = 0; seed < cfg.iterate_seeds; ++seed) {
    IterateConfig ic;
    ic.steps = cfg.iterate_steps;
    ic.seed = static_cast<std::uint64_t>(seed);
    ic.record_residuals = seed == 0;
    const auto tr = two_timescale_iterate(def, ic, &eq);
    const auto t2 = check_theorem2(tr, def, eq, cfg.delta);
    ++rep.seeds;
    rep.worst_error_H = std::max(rep.worst_error_H, t2.error_H);
    rep.worst_error_L = std::max(rep.worst_error_L, t2.error_L);
    rep.bound_H = t2.bound_H;
    rep.bound_L = t2.bound_L;
    if (t2.pass_H && t2.pass_L) {
      ++rep.within_bounds;
      // Settled: the greedy pair equals the oracle over the second half of the run.
      if (tr.last_mismatch < ic.steps / 2) ++rep.policies_settled;
      rep.worst_n0 = std::max(rep.worst_n0, tr.last_mismatch + 1);
    }
    if (seed == 0) rep.martingale_ok = check_martingale(tr).pass();
  }
  rep.iterate_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  InstanceShape shape;
  rep.lemma_min_slack_H = rep.lemma_min_slack_L = std::numeric_limits<double>::infinity();
  for (int inst = 0; inst < cfg.lemma_instances; ++inst) {
    const auto m = random_instance(shape, 200 + static_cast<std::uint64_t>(inst));
    Rng rng = make_rng(static_cast<std::uint64_t>(inst), streams::kSuite, 1);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    auto random_policy = [&](int n, int k) {
      Policy p(n, std::vector<double>(k));
      for (auto& row : p) {
        double s = 0.0;
        for (auto& v : row) s += (v = u(rng));
        for (auto& v : row) v /= s;
      }
      return p;
    };
    for (int k = 0; k < cfg.lemma_pairs; ++k) {
      const auto old_L = random_policy(m.nL, m.mL);
      const auto new_L = random_policy(m.nL, m.mL);
      const auto pi_H = random_policy(m.nH, m.mH);
      const double aL = u(rng), aH = u(rng);
      const auto r = check_lemma1(m, old_L, new_L, pi_H, aL, aH, cfg.tol);
      ++rep.lemma_checks;
      rep.lemma_violations += !r.holds_H + !r.holds_L;
      rep.lemma_min_slack_H = std::min(rep.lemma_min_slack_H, r.lhs_H - r.rhs_H);
      rep.lemma_min_slack_L = std::min(rep.lemma_min_slack_L, r.lhs_L - r.rhs_L);
    }
  }

  for (int inst = 0; inst < cfg.prop_instances; ++inst) {
    const auto m = random_instance(shape, 100 + static_cast<std::uint64_t>(inst));
    Rng rng = make_rng(static_cast<std::uint64_t>(inst), streams::kSuite, 2);
    std::vector<int> pH(m.nH), pL(m.nL);
    for (auto& a : pH) a = static_cast<int>(rng() % static_cast<std::uint64_t>(m.mH));
    for (auto& a : pL) a = static_cast<int>(rng() % static_cast<std::uint64_t>(m.mL));
    const auto p = check_proposition1(m, pH, pL, cfg.prop_stages, cfg.tol);
    ++rep.prop_runs;
    rep.prop_monotone += p.monotone_H && p.monotone_L;
    const double gap = std::max(p.oracle_gap_H, p.oracle_gap_L);
    rep.prop_converged += gap <= cfg.oracle_tol;
    rep.prop_worst_drop = std::max({rep.prop_worst_drop, p.worst_drop_H, p.worst_drop_L});
    rep.prop_worst_gap = std::max(rep.prop_worst_gap, gap);
  }
  return rep;
}

}  // namespace ntn::tabular
