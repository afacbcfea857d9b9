#include <doctest.h>

#include <map>
#include <random>

#include "ntn/baselines.hpp"

using namespace ntn;
using namespace ntn::baselines;

namespace {

BaselineConfig make_cfg(BeamScheme beam, RbScheme rb) {
  BaselineConfig b;
  b.beam = beam;
  b.rb = rb;
  return b;
}

channel::UpaConfig upa(int nx, int ny) { return channel::UpaConfig::half_wavelength(nx, ny, 0.075); }

channel::MultipathChannel los_channel(geometry::Angles aod, geometry::Angles aoa) {
  channel::MultipathChannel ch;
  channel::PathDescriptor p;
  p.aod = aod;
  p.aoa = aoa;
  ch.paths.push_back(p);
  return ch;
}

channel::MultipathChannel random_channel(std::uint64_t seed, int L) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ang(0.0, geometry::kPi), u(0.0, 1.0);
  channel::MultipathChannel ch;
  for (int l = 0; l < L; ++l) {
    channel::PathDescriptor p;
    p.alpha = std::polar(l == 0 ? 1.0 : 0.3, 2 * geometry::kPi * u(rng));
    p.aod = {ang(rng), ang(rng)};
    p.aoa = {ang(rng), ang(rng)};
    p.delay = 1e-6 * u(rng);
    p.doppler = 1e4 * u(rng);
    ch.paths.push_back(p);
  }
  return ch;
}

}  // namespace

TEST_CASE("beam grid") {
  BeamGrid g;
  const auto v = g.values();
  REQUIRE(v.size() == 18);
  CHECK(v.front() == 0.0);
  CHECK(v.back() == geometry::kPi);
  CHECK(g.granularity() == doctest::Approx(geometry::kPi / 17));
  CHECK_THROWS(BeamGrid{1}.values());
}

TEST_CASE("bfs: LOS channel on grid points returns those points") {
  const auto tx = upa(4, 4), rx = upa(2, 2);
  const auto v = BeamGrid{}.values();
  for (auto [i, j, k, l] : {std::tuple{3, 5, 12, 7}, {10, 2, 4, 14}, {6, 11, 9, 3}}) {
    const auto ch = los_channel({v[i], v[j]}, {v[k], v[l]});
    const channel::RbResponse resp(ch, tx, rx, 0, 4, 1.0 / 180e3);
    const auto b = bfs_beams(resp, tx, rx);
    CHECK(b.tx.azimuth == v[i]);
    CHECK(b.tx.elevation == v[j]);
    CHECK(b.rx.azimuth == v[k]);
    CHECK(b.rx.elevation == v[l]);
    CHECK(b.gain == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("bfs: dominates random grid tuples") {
  const auto tx = upa(4, 4), rx = upa(2, 2);
  const auto v = BeamGrid{}.values();
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto ch = random_channel(s, 4);
    const channel::RbResponse resp(ch, tx, rx, 17, 20, 1.0 / 180e3);
    const auto b = bfs_beams(resp, tx, rx);
    CHECK(b.gain == doctest::Approx(beam_gain(resp, tx, rx, b.tx, b.rx)).epsilon(1e-9));
    std::mt19937_64 rng(s);
    for (int k = 0; k < 1000; ++k) {
      const env::BeamAngles t{v[rng() % 18], v[rng() % 18]}, r{v[rng() % 18], v[rng() % 18]};
      CHECK(beam_gain(resp, tx, rx, t, r) <= b.gain * (1 + 1e-12));
    }
  }
}

TEST_CASE("bfs: two-point grid matches enumeration") {
  const auto tx = upa(2, 2), rx = upa(2, 1);
  const BeamGrid grid{2};
  const auto v = grid.values();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto ch = random_channel(10 + s, 3);
    const channel::RbResponse resp(ch, tx, rx, 2, 6, 1.0 / 180e3);
    double best = -1.0;
    env::BeamAngles bt, br;
    for (double a : v)
      for (double b : v)
        for (double c : v)
          for (double d : v) {
            const double gval = beam_gain(resp, tx, rx, {a, b}, {c, d});
            if (gval > best * (1 + 1e-12)) {
              best = gval;
              bt = {a, b};
              br = {c, d};
            }
          }
    const auto r = bfs_beams(resp, tx, rx, grid);
    CHECK(r.gain == doctest::Approx(best).epsilon(1e-10));
    CHECK(beam_gain(resp, tx, rx, r.tx, r.rx) == doctest::Approx(best).epsilon(1e-10));
  }
}

TEST_CASE("pbu: zenith gives boresight") {
  geometry::OrbitConfig oc;
  const auto ue = geometry::ground_point(0.0, 0.0);
  const auto s = geometry::propagate(oc, ue, 0);
  const auto b = pbu_beams(s);
  CHECK(b.tx.elevation == doctest::Approx(geometry::kPi / 2).epsilon(1e-9));
  CHECK(b.rx.elevation == doctest::Approx(geometry::kPi / 2).epsilon(1e-9));
  CHECK(b.tx.azimuth == doctest::Approx(geometry::kPi / 2).epsilon(1e-9));
  CHECK(b.rx.azimuth == doctest::Approx(geometry::kPi / 2).epsilon(1e-9));
}

TEST_CASE("group rates") {
  const auto g = group_rates({1, 2, 3, 4, 5, 6}, 3);
  CHECK(g == std::vector<double>{3, 7, 11});
  CHECK_THROWS(group_rates({1, 2, 3}, 2));
}

TEST_CASE("greedy allocation") {
  CHECK(greedy_rb({5, 3, 1}, 0.0) == 0b001);
  CHECK(greedy_rb({1, 3, 5}, 0.0) == 0b100);
  CHECK(greedy_rb({5, 3, 1}, 7.0) == 0b011);
  CHECK(greedy_rb({5, 3, 1}, 100.0) == 0b111);
  CHECK(greedy_rb({2, 2, 2}, 3.0) == 0b011);
}

TEST_CASE("fixed allocation") {
  CHECK(fixed_rb(5, 5, 1, 0) == 0b11111);
  CHECK(fixed_rb(3, 5, 9, 42) == fixed_rb(3, 5, 9, 42));
  CHECK(env::popcount(fixed_rb(3, 5, 9, 43)) == 3);
  CHECK_THROWS(fixed_rb(0, 5, 1, 0));
  CHECK_THROWS(fixed_rb(6, 5, 1, 0));
  std::vector<long> hits(5, 0);
  const long n = 100000;
  for (long s = 0; s < n; ++s) {
    const auto m = fixed_rb(1, 5, 3, s);
    REQUIRE(env::popcount(m) == 1);
    ++hits[__builtin_ctz(m)];
  }
  double chi2 = 0.0;
  for (long h : hits) chi2 += (h - n / 5.0) * (h - n / 5.0) / (n / 5.0);
  CHECK(chi2 < 13.277);  // chi-square, 4 dof, p = 0.01
}

TEST_CASE("bandit") {
  BanditState st(3, 1.0);
  auto m = mab_step(st, {1.0, 2.0, 3.0}, 0.5);
  CHECK(m == 0b111);  // every arm is unpulled at first
  for (long c : st.counts) CHECK(c == 1);

  // Unpulled arm is chosen first.
  BanditState st2(3, 1.0);
  st2.counts = {5, 0, 5};
  st2.means = {9.0, 0.0, 9.0};
  st2.total = 10;
  st2.scale = 9.0;
  CHECK((mab_step(st2, {1, 1, 1}, 0.0) & 0b010) != 0);

  // Zero exploration ranks by mean.
  BanditState st3(4, 0.0);
  st3.counts = {3, 3, 3, 3};
  st3.means = {2.0, 7.0, 1.0, 5.0};
  st3.total = 12;
  st3.scale = 7.0;
  const auto sc = st3.scores();
  CHECK(sc[1] > sc[3]);
  CHECK(sc[3] > sc[0]);
  CHECK(sc[0] > sc[2]);
  CHECK(mab_step(st3, {2, 7, 1, 5}, 6.0) == 0b0010);
  CHECK_THROWS(mab_step(st3, {1, 2}, 0.0));

  // Stationary 3-arm instance: the best arm dominates the pulls.
  BanditState s4(3, 1.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.1);
  const double mean[3] = {0.3, 1.0, 0.6};
  for (int t = 0; t < 100000; ++t) mab_step(s4, {mean[0] + noise(rng), mean[1] + noise(rng), mean[2] + noise(rng)}, 0.5);
  const double total = static_cast<double>(s4.counts[0] + s4.counts[1] + s4.counts[2]);
  CHECK(s4.counts[1] / total > 0.95);
}

TEST_CASE("scheme names") {
  CHECK(scheme_name(make_cfg(BeamScheme::bfs, RbScheme::greedy)) == "bfs_greedy");
  CHECK(scheme_name(make_cfg(BeamScheme::pbu, RbScheme::mab)) == "pbu_mab");
}

TEST_CASE("runners: masks, cadence and determinism") {
  env::EnvConfig c;
  for (auto beam : {BeamScheme::bfs, BeamScheme::pbu})
    for (auto rb : {RbScheme::greedy, RbScheme::fixed, RbScheme::mab}) {
      BaselineConfig b = make_cfg(beam, rb);
      BaselineRunner r(c, b, 4);
      std::vector<env::SlotRecord> log;
      std::vector<double> rh;
      const long n = r.run(35, [&](const env::SlotRecord& s, double h) {
        log.push_back(s);
        rh.push_back(h);
      });
      CHECK(n == 35);
      REQUIRE(log.size() == 35);
      for (const auto& s : log) {
        CHECK(s.low_mask != 0);
        CHECK(env::is_subset(s.low_mask, env::full_mask(c.groups)));
        CHECK(s.high_mask == env::full_mask(c.groups));
      }
      // R_H is constant within each cycle of T slots.
      for (size_t i = 0; i < rh.size(); ++i) CHECK(rh[i] == rh[i - i % c.cycle]);
      BaselineRunner again(c, b, 4);
      std::vector<double> tp;
      again.run(35, [&](const env::SlotRecord& s, double) { tp.push_back(s.capacity); });
      for (size_t i = 0; i < tp.size(); ++i) CHECK(tp[i] == log[i].capacity);
    }
}

TEST_CASE("bfs-greedy serves at least as much as every other baseline") {
  env::EnvConfig c;
  c.scatter.k_factor_db = 20.0;  // LOS-dominant
  long slots = 0, dominated = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::map<std::string, std::vector<double>> served;
    for (auto beam : {BeamScheme::bfs, BeamScheme::pbu})
      for (auto rb : {RbScheme::greedy, RbScheme::fixed, RbScheme::mab}) {
        BaselineConfig b = make_cfg(beam, rb);
        BaselineRunner r(c, b, seed);
        auto& v = served[scheme_name(b)];
        r.run(120, [&](const env::SlotRecord& s, double) { v.push_back(s.throughput); });
      }
    const auto& best = served["bfs_greedy"];
    for (size_t i = 0; i < best.size(); ++i) {
      bool ok = true;
      for (const auto& [name, v] : served) ok = ok && best[i] >= v[i];
      dominated += ok;
      ++slots;
    }
  }
  CHECK(static_cast<double>(dominated) / slots >= 0.95);
}
