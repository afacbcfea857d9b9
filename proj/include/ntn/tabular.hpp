// SPDX-License-Identifier: Apache-2.0
// Small enumerable two-time-scale MDPs with exact oracles, used to check the
// convergence and improvement statements of the collaborative scheme.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

namespace ntn::tabular {

using Vec = Eigen::VectorXd;
using Policy = std::vector<std::vector<double>>;  // [state][action] probabilities

Policy deterministic_policy(const std::vector<int>& actions, int n_actions);
Policy uniform_policy(int n_states, int n_actions);
// (1 - alpha) * base + alpha * other, state by state.
Policy mix(const Policy& base, const Policy& other, double alpha);
std::vector<int> decode_policy(long code, int n_states, int n_actions);
long encode_policy(const std::vector<int>& actions, int n_actions);

// Single-agent finite MDP with expected rewards.
struct MdpTable {
  int n = 0, m = 0;
  double gamma = 0.9;
  std::vector<double> R;  // n*m
  std::vector<double> P;  // n*m*n
  double r(int s, int a) const { return R[static_cast<size_t>(s) * m + a]; }
  double p(int s, int a, int t) const { return P[(static_cast<size_t>(s) * m + a) * n + t]; }
  void validate() const;
};

Vec bellman_optimal(const MdpTable& mdp, const Vec& v);
Vec q_row(const MdpTable& mdp, const Vec& v, int s);
std::vector<int> greedy(const MdpTable& mdp, const Vec& v);  // ties to the lowest action
Vec evaluate(const MdpTable& mdp, const Policy& pi);
Vec evaluate(const MdpTable& mdp, const std::vector<int>& pi);

struct ViResult {
  Vec v;
  std::vector<int> policy;
  int iterations = 0;
};
ViResult value_iteration(const MdpTable& mdp, double tol = 1e-12);

// Coupled pair. The UE runs T steps per satellite decision, starting from
// psi(s_H); the satellite sees the UE trajectory through its reward
// r_H + mean q along the trajectory and through h(s_H, a_H, final s_L).
// The UE sees the satellite action of state phi(s_L) in r_L and g.
struct TabularTTMDP {
  int nH = 4, mH = 3, nL = 4, mL = 3, T = 2;
  double gamma_H = 0.5, gamma_L = 0.5;
  double slip = 0.0;  // probability that a transition lands on a uniform state
  std::vector<double> rH;  // nH*mH
  std::vector<double> q;   // nL*mL
  std::vector<double> rL;  // (nL*mL)*mH
  std::vector<int> g;      // (nL*mL)*mH -> s_L'
  std::vector<int> h;      // (nH*mH)*nL -> s_H'
  std::vector<int> psi;    // nH -> s_L
  std::vector<int> phi;    // nL -> s_H

  void validate() const;
  double reward_H_max() const;
  double reward_L_max() const;
  int low_next(int s, int a, int aH) const { return g[(static_cast<size_t>(s) * mL + a) * mH + aH]; }
  int high_next(int s, int a, int sL) const { return h[(static_cast<size_t>(s) * mH + a) * nL + sL]; }
  double low_reward(int s, int a, int aH) const { return rL[(static_cast<size_t>(s) * mL + a) * mH + aH]; }
};

struct InstanceShape {
  int nH = 4, mH = 3, nL = 4, mL = 3, T = 2;
  double gamma_H = 0.5, gamma_L = 0.5;
  bool decoupled = false;  // low rewards and transitions ignore the satellite action
};

TabularTTMDP random_instance(const InstanceShape& shape, std::uint64_t seed);

// Induced single-agent MDPs.
MdpTable high_mdp(const TabularTTMDP& mdp, const Policy& pi_L);
MdpTable low_mdp(const TabularTTMDP& mdp, const Policy& pi_H);

enum class Tier { high, low };
// Optimal values of one tier with the other tier's policy held fixed.
ViResult value_iteration_oracle(const TabularTTMDP& mdp, Tier tier, const Policy& counterpart);

std::vector<int> best_response_H(const TabularTTMDP& mdp, const std::vector<int>& pi_L);
std::vector<int> best_response_L(const TabularTTMDP& mdp, const std::vector<int>& pi_H);

struct Equilibrium {
  std::vector<int> pi_H, pi_L;
  Vec x, y;  // optimal values given the counterpart
};

// All deterministic pairs that are mutual best responses (brute force).
std::vector<Equilibrium> enumerate_equilibria(const TabularTTMDP& mdp);
// True if best-response iteration converges to `eq` from every low policy.
bool best_response_converges(const TabularTTMDP& mdp, const Equilibrium& eq);
// Fixed coupled instance used by the theory suite; see tabular.cpp.
TabularTTMDP default_instance();
Equilibrium default_equilibrium(const TabularTTMDP& mdp);

double step_a(long n);  // 1 / (1 + n ln n)
double step_b(long n);  // 1 / (n + 1)

struct IterateConfig {
  long steps = 100000;
  int n_bar = 8;
  double noise = 0.1;  // reward noise amplitude as a fraction of the reward bound
  std::uint64_t seed = 0;
  std::function<double(long)> a = step_a;
  std::function<double(long)> b = step_b;
  bool record_residuals = false;
  long record_every = 0;  // 0: keep only the final tables
};

struct IterateTrace {
  long steps = 0;
  Vec x, y;
  std::vector<long> checkpoints;
  std::vector<Vec> x_hist, y_hist;
  std::vector<Vec> beta_H, beta_L;  // per step when recorded
  std::vector<double> a, b;         // per step when recorded
  std::vector<int> pi_H, pi_L;      // greedy policies after the last step
  long last_mismatch = -1;          // last step whose greedy pair differed from the reference
  double reward_H_bound = 0.0, reward_L_bound = 0.0;
};

IterateTrace two_timescale_iterate(const TabularTTMDP& mdp, const IterateConfig& cfg, const Equilibrium* reference = nullptr);

double theorem2_bound(double r_max, double gamma, int states_actions, double delta, double n);

struct Theorem2Report {
  double bound_H = 0.0, bound_L = 0.0;
  double error_H = 0.0, error_L = 0.0;
  bool pass_H = false, pass_L = false;
};
Theorem2Report check_theorem2(const IterateTrace& trace, const TabularTTMDP& mdp, const Equilibrium& eq, double delta);

// Steps after which both tiers' bounds fall to eps: the sqrt term inverted,
// n = 128 R^2 ln(2|S||A|/delta) / (eps^2 (1 - gamma)^2), max over tiers.
double corollary1_time(double eps, double delta, double r_H, double r_L, double gamma_H, double gamma_L, int sa_H,
                       int sa_L);

struct MartingaleReport {
  double mean_H = 0.0, mean_L = 0.0;  // worst trailing-window mean over states
  double sd_H = 0.0, sd_L = 0.0;
  double tail_H = 0.0, tail_L = 0.0;  // largest partial-sum increment over the tail
  bool zero_mean = false;
  bool summable = false;
  bool pass() const { return zero_mean && summable; }
};
MartingaleReport check_martingale(const IterateTrace& trace, long window = 10000);

struct Prop1Report {
  int stages = 0;
  bool monotone_H = true, monotone_L = true;
  double worst_drop_H = 0.0, worst_drop_L = 0.0;
  std::vector<Vec> v_H, v_L;  // values after each stage, entry 0 is the start
  std::vector<int> pi_H, pi_L;
  double oracle_gap_H = 0.0, oracle_gap_L = 0.0;  // distance to the best response values
  bool converged = false;
};
Prop1Report check_proposition1(const TabularTTMDP& mdp, const std::vector<int>& pi_H0, const std::vector<int>& pi_L0,
                               int stages = 20, double tol = 1e-9);

struct Lemma1Report {
  double lhs_H = 0.0, rhs_H = 0.0, surrogate_H = 0.0, eps_H = 0.0;
  double lhs_L = 0.0, rhs_L = 0.0, surrogate_L = 0.0, eps_L = 0.0;
  bool holds_H = false, holds_L = false;
};
// pi_L_new is mixed into pi_L_old with weight alpha_L; the satellite moves
// from pi_H toward the best response to the coupled low policy with weight alpha_H.
Lemma1Report check_lemma1(const TabularTTMDP& mdp, const Policy& pi_L_old, const Policy& pi_L_new, const Policy& pi_H,
                          double alpha_L, double alpha_H, double tol = 1e-9);

// The theory checks bundled for the CLI and the acceptance run.
struct SuiteConfig {
  int iterate_seeds = 100;
  long iterate_steps = 100000;
  double delta = 0.05;
  int lemma_instances = 5;
  int lemma_pairs = 100;
  int prop_instances = 5;
  int prop_stages = 20;
  double tol = 1e-9;
  double oracle_tol = 1e-6;
};

struct SuiteReport {
  // Iterate vs bounds on the default instance.
  int seeds = 0, within_bounds = 0, policies_settled = 0;
  double worst_error_H = 0.0, worst_error_L = 0.0, bound_H = 0.0, bound_L = 0.0;
  long worst_n0 = 0;  // latest step after which greedy pairs matched, over passing seeds
  bool martingale_ok = true;
  double iterate_seconds = 0.0;
  // Performance-difference inequalities.
  int lemma_checks = 0, lemma_violations = 0;
  double lemma_min_slack_H = 0.0, lemma_min_slack_L = 0.0;
  // Exact sequential updating.
  int prop_runs = 0, prop_monotone = 0, prop_converged = 0;
  double prop_worst_drop = 0.0, prop_worst_gap = 0.0;
};
SuiteReport run_theory_suite(const SuiteConfig& cfg);

}  // namespace ntn::tabular
