#include <doctest.h>

#include <cstring>

#include "ntn/drl.hpp"

using namespace ntn;
using namespace ntn::drl;

namespace {

nn::Network policy_net(int inputs, const LowActionCodec& codec, std::uint64_t seed) {
  nn::NetworkSpec s;
  s.inputs = inputs;
  s.trunk = {8};
  s.heads = {nn::HeadSpec{{}, 2 * codec.beam_choices()}, nn::HeadSpec{{}, codec.groups}};
  nn::Network n(s);
  Rng rng(seed);
  n.initialize(rng);
  return n;
}

nn::Network constant_value(int inputs, double v) {
  nn::NetworkSpec s;
  s.inputs = inputs;
  s.heads = {nn::HeadSpec{{}, 1}};
  nn::Network n(s);
  n.params().setZero();
  n.params()(n.parameter_count() - 1) = v;
  return n;
}

}  // namespace

TEST_CASE("advantage estimation") {
  const std::vector<double> r{1.0, 2.0, 4.0};
  const Vec g = discounted_returns(r, 0.5);
  CHECK(g(0) == 3.0);
  CHECK(g(1) == 4.0);
  CHECK(g(2) == 4.0);
  CHECK(estimate_advantages(r, {0.0, 0.0, 0.0}, 0.5)(0) == 3.0);
  const Vec a = estimate_advantages(r, {3.0, 4.0, 4.0}, 0.5);
  CHECK(a.cwiseAbs().maxCoeff() == 0.0);
  CHECK(estimate_advantages({2.5}, {0.0}, 0.9)(0) == 2.5);
  CHECK_THROWS(estimate_advantages({}, {}, 0.9));
  CHECK_THROWS(estimate_advantages({1.0}, {1.0, 2.0}, 0.9));
  const Vec w = windowed_returns(r, 0.5, 2);
  CHECK(w(0) == 2.0);
  CHECK(w(1) == 4.0);
  CHECK(w(2) == 4.0);
}

TEST_CASE("trpo: zero advantages leave parameters unchanged") {
  LowActionCodec codec;
  auto net = policy_net(4, codec, 1);
  const Vec before = net.params();
  PolicyBatch b;
  b.states = Mat::Random(4, 6);
  b.actions = Eigen::MatrixXi::Zero(2 + codec.groups, 6);
  b.mask = Mat::Ones(codec.groups, 6);
  b.adv_low = Vec::Zero(6);
  b.adv_high = Vec::Zero(6);
  const auto rep = trpo_update(net, codec.layout(), b, true, TrpoConfig{});
  CHECK_FALSE(rep.accepted);
  CHECK(net.params() == before);
}

TEST_CASE("trpo: two-action bandit moves toward the advantaged action") {
  nn::NetworkSpec s;
  s.inputs = 1;
  s.heads = {nn::HeadSpec{{}, 2}};
  nn::Network net(s);
  net.params() << 0.1, -0.3, 0.2, 0.0;
  nn::PolicyLayout lay{{2}, 0};
  PolicyBatch b;
  b.states = Mat::Ones(1, 8);
  b.actions = Eigen::MatrixXi::Zero(1, 8);
  for (int i = 4; i < 8; ++i) b.actions(0, i) = 1;
  b.mask = Mat::Zero(0, 8);
  b.adv_low = (Vec(8) << 1, 1, 1, 1, -0.5, -0.5, -0.5, -0.5).finished();
  b.adv_high = Vec::Zero(8);
  auto p0 = [&](const nn::Network& n) { return nn::softmax(n.forward_one(Vec::Ones(1)))(0); };
  const double before = p0(net);
  TrpoConfig cfg;
  const auto rep = trpo_update(net, lay, b, false, cfg);
  REQUIRE(rep.accepted);
  CHECK(p0(net) > before);
  CHECK(rep.kl <= cfg.kl_limit);
  CHECK(rep.surrogate_new > rep.surrogate_old);
}

TEST_CASE("trpo: accepted steps respect the trust region, rejected steps keep parameters") {
  LowActionCodec codec;
  const auto lay = codec.layout();
  int accepted = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto net = policy_net(6, codec, seed);
    Rng rng(seed + 100);
    std::normal_distribution<double> g(0.0, 1.0);
    PolicyBatch b;
    const int B = 16;
    b.states = Mat(6, B);
    for (long i = 0; i < b.states.size(); ++i) b.states.data()[i] = g(rng);
    b.actions = Eigen::MatrixXi(2 + codec.groups, B);
    b.mask = Mat::Ones(codec.groups, B);
    for (int i = 0; i < B; ++i) {
      b.actions(0, i) = static_cast<int>(rng() % 7);
      b.actions(1, i) = static_cast<int>(rng() % 7);
      for (int k = 0; k < codec.groups; ++k) b.actions(2 + k, i) = static_cast<int>(rng() % 2);
      b.mask(rng() % codec.groups, i) = 0.0;
      for (int k = 0; k < codec.groups; ++k)
        if (b.mask(k, i) == 0.0) b.actions(2 + k, i) = 0;
    }
    b.adv_low = Vec(B);
    b.adv_high = Vec(B);
    for (int i = 0; i < B; ++i) {
      b.adv_low(i) = g(rng);
      b.adv_high(i) = g(rng);
    }
    TrpoConfig cfg;
    if (seed % 4 == 3) cfg.backtrack_steps = 0;  // forces some rejections
    const Vec before = net.params();
    const Mat logits_old = net.forward(b.states);
    const Vec logp_old = nn::log_prob(lay, logits_old, b.actions, b.mask);
    const auto rep = trpo_update(net, lay, b, true, cfg);
    if (rep.accepted) {
      ++accepted;
      const double kl = nn::kl_divergence(lay, logits_old, net.forward(b.states), b.mask);
      CHECK(kl <= cfg.kl_limit);
      CHECK(surrogate(net, lay, b, logp_old, true) > (b.adv_low + b.adv_high).mean());
    } else {
      CHECK(std::memcmp(before.data(), net.params().data(), sizeof(double) * before.size()) == 0);
    }
  }
  CHECK(accepted > 0);
}

TEST_CASE("proposed and single-estimation coincide when the high advantage is zero") {
  LowActionCodec codec;
  auto a = policy_net(5, codec, 3);
  auto b = a;
  PolicyBatch batch;
  batch.states = Mat::Random(5, 10);
  batch.actions = Eigen::MatrixXi::Zero(2 + codec.groups, 10);
  for (int i = 0; i < 10; ++i) batch.actions(0, i) = i % 7;
  batch.mask = Mat::Ones(codec.groups, 10);
  batch.adv_low = Vec::LinSpaced(10, -1.0, 2.0);
  batch.adv_high = Vec::Zero(10);
  trpo_update(a, codec.layout(), batch, true, TrpoConfig{});
  trpo_update(b, codec.layout(), batch, false, TrpoConfig{});
  CHECK(a.params() == b.params());
}

TEST_CASE("critic update") {
  nn::NetworkSpec s;
  s.inputs = 3;
  s.trunk = {16};
  s.heads = {nn::HeadSpec{{}, 1}};
  nn::Network v(s);
  Rng rng(2);
  v.initialize(rng);
  const Mat X = Mat::Random(3, 10);
  nn::AdamState st;
  nn::AdamConfig cfg;

  const Vec fitted = v.forward(X).row(0).transpose();
  const Vec p0 = v.params();
  const auto r0 = critic_update(v, st, X, fitted, cfg, 5);
  CHECK(r0.loss_after == 0.0);
  CHECK((v.params() - p0).cwiseAbs().maxCoeff() <= 1e-9);

  cfg.lr = 1e-2;
  const auto r = critic_update(v, st, X, Vec::Constant(10, 0.7), cfg, 500);
  CHECK(r.accepted);
  CHECK(r.loss_after < 1e-4);
  CHECK(r.loss_after < r.loss_before);
}

TEST_CASE("reference trajectory") {
  LowActionCodec codec;
  const auto net = policy_net(24, codec, 4);
  env::LowTierState frozen;
  frozen.per_rb_snr.assign(20, 3.0);
  frozen.rx_signal_strengths.assign(4, 0.2);
  const env::BeamAngles rx0{1.0, 1.2};
  const double delta = 0.01;
  const auto ref = generate_reference_trajectory(net, codec, frozen, rx0, delta, 3, 4, 77);
  REQUIRE(ref.steps.size() == 12);
  CHECK(ref.origin_slot == 77);
  for (size_t j = 1; j < ref.steps.size(); ++j) {
    CHECK(ref.steps[j].mask == ref.steps[0].mask);
    CHECK(ref.steps[j].rx.azimuth - ref.steps[j - 1].rx.azimuth ==
          doctest::Approx(ref.steps[1].rx.azimuth - ref.steps[0].rx.azimuth).epsilon(1e-12));
  }

  const auto one = generate_reference_trajectory(net, codec, frozen, rx0, delta, 1, 1, 0);
  REQUIRE(one.steps.size() == 1);
  const Vec logits = net.forward_one(low_features(frozen));
  Eigen::Index az, el;
  logits.segment(0, 7).maxCoeff(&az);
  logits.segment(7, 7).maxCoeff(&el);
  env::GroupMask mode = 0;
  for (int g = 0; g < codec.groups; ++g)
    if (logits(14 + g) > 0) mode |= env::GroupMask{1} << g;
  CHECK(one.steps[0].mask == mode);
  CHECK(one.steps[0].rx.azimuth == doctest::Approx(rx0.azimuth + (az - 3) * delta).epsilon(1e-14));
  CHECK(one.steps[0].rx.elevation == doctest::Approx(rx0.elevation + (el - 3) * delta).epsilon(1e-14));
  CHECK(generate_reference_trajectory(net, codec, frozen, rx0, delta, 0, 4, 0).steps.empty());
}

TEST_CASE("high action space encoding") {
  HighActionSpace sp;
  CHECK(sp.size() == 279);
  for (int i = 0; i < sp.size(); ++i) CHECK(sp.encode(sp.decode(i)) == i);
  CHECK_THROWS(sp.decode(279));
}

TEST_CASE("rollout: single action and brute-force evaluation") {
  env::EnvConfig c;
  c.cycle = 2;
  c.demand_mean = 0.0;  // every slot with a nonempty selection meets demand
  env::Environment e(c, 6);
  e.reset_episode(0);
  e.set_beams({1.4, 1.5}, {1.7, 1.6});
  const long start = 10;
  const int n_bar = 2;
  const double gamma = 0.5, tail = 3.25;
  const RolloutModel model(e, start, n_bar * c.cycle + 1);

  ReferenceTrajectory ref;
  for (int j = 0; j < n_bar * c.cycle; ++j)
    ref.steps.push_back(RefStep{{1.7 + 0.02 * j, 1.6 - 0.01 * j}, static_cast<env::GroupMask>(j % 2 ? 0b00011 : 0b00110)});
  const auto value = constant_value(3 + c.cycle, tail);
  const double radius = c.orbit.radius();

  const HighActionSpace single{1, 0};
  CHECK(rollout_select(model, value, single, ref, n_bar, gamma, radius).index == 0);

  // Replay each candidate through the environment itself.
  const HighActionSpace small{2, 1};
  const auto res = rollout_select(model, value, small, ref, n_bar, gamma, radius);
  double best = -1e300;
  int best_i = -1;
  for (int i = 0; i < small.size(); ++i) {
    const auto a = small.decode(i);
    env::Environment sim(c, 6);
    sim.reset_episode(0);
    sim.set_beams({1.4, 1.5}, {1.7, 1.6});
    // Advance to the start slot with the beams untouched.
    while (sim.episode_slot() < start) {
      sim.step_high(env::HighTierAction{0, 0, 1});
      while (sim.cycle_slot() < c.cycle && sim.episode_slot() < start) sim.step_low(env::LowTierAction{0, 0, 0});
      sim.close_cycle(true);
    }
    sim.set_beams({1.4, 1.5}, {1.7, 1.6});
    double score = 0.0, w = 1.0;
    for (int k = 0; k < n_bar; ++k) {
      sim.step_high(k == 0 ? a : env::HighTierAction{0, 0, a.mask});
      for (int p = 0; p < c.cycle; ++p) {
        const auto& st = ref.steps[k * c.cycle + p];
        sim.set_beams(sim.tx_beam(), st.rx);
        sim.step_low(env::LowTierAction{0, 0, st.mask & a.mask});
      }
      score += w * sim.close_cycle().reward_high;
      w *= gamma;
    }
    score += w * tail;
    CHECK(res.scores[i] == doctest::Approx(score).epsilon(1e-9));
    if (score > best) {
      best = score;
      best_i = i;
    }
  }
  CHECK(res.index == best_i);
}

TEST_CASE("communication overhead") {
  CHECK(comm_overhead(10, 100, 8, 4) == 33104);
  CHECK(comm_overhead(10, 20, 0, 4) == (6 + 10 + 20) * 4);
  CHECK(comm_elements(10, 20, 8) == 6 + 10 + 20 + 22 * 80);
  CHECK_THROWS(comm_overhead(0, 20, 8, 4));
}

TEST_CASE("training loop structure") {
  env::EnvConfig c;
  c.cycle = 1;
  DrlConfig d;
  d.n_bar = 1;
  d.actor_trunk = {8};
  d.actor_head = {};
  d.value_low = {8};
  d.value_high = {8};
  d.batch_size = 4;
  d.high_batch_size = 4;
  Trainer t(c, d, 3);
  long slots = 0;
  const auto st = t.run(40, [&](const env::SlotRecord&, double) { ++slots; });
  CHECK(slots == 40);
  CHECK(st.slots == 40);
  CHECK(st.cycles == 40);
  CHECK(st.downlink_messages == st.cycles);
  CHECK(st.uplink_messages == st.cycles);
  CHECK(st.element_mismatches == 0);
  CHECK(st.exchanged_elements == st.cycles * comm_elements(1, c.total_rbs, 1));
  CHECK(st.kl_violations == 0);
  CHECK(st.surrogate_violations == 0);
  CHECK(st.rejected_modified == 0);

  d.mode = Mode::independent;
  Trainer ind(c, d, 3);
  const auto si = ind.run(20);
  CHECK(si.exchanged_elements == 0);
  CHECK(si.uplink_messages == 0);
}
