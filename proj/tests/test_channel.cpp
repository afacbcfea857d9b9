#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "ntn/channel.hpp"

using namespace ntn::channel;
using ntn::geometry::kPi;

namespace {

UpaConfig upa(int nx, int ny) { return UpaConfig::half_wavelength(nx, ny, 0.075); }

MultipathChannel one_path(cplx alpha, double az_t, double el_t, double az_r, double el_r) {
  MultipathChannel ch;
  PathDescriptor p;
  p.alpha = alpha;
  p.aod = {az_t, el_t};
  p.aoa = {az_r, el_r};
  ch.paths.push_back(p);
  return ch;
}

}  // namespace

TEST_CASE("steering vector: single antenna and unit norm") {
  const auto v = steering_vector(upa(1, 1), 0.7, 1.2);
  REQUIRE(v.size() == 1);
  CHECK(std::abs(v(0) - cplx(1.0, 0.0)) < 1e-15);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2 * kPi);
  for (auto [nx, ny] : {std::pair{1, 1}, {2, 2}, {4, 4}, {3, 5}, {8, 1}, {1, 7}, {16, 16}})
    for (int k = 0; k < 20; ++k) CHECK(std::abs(steering_vector(upa(nx, ny), u(rng), u(rng) / 2).norm() - 1.0) < 1e-12);
}

TEST_CASE("steering vector: 2x2 hand evaluation") {
  // sin(phi) cos(theta) = 1, cos(phi) = 0: x-phases {1, -1}, y-phases {1, 1}.
  const auto v = steering_vector(upa(2, 2), 0.0, kPi / 2);
  const cplx x[2] = {1.0, -1.0}, y[2] = {1.0, 1.0};
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q) CHECK(std::abs(v(p * 2 + q) - 0.5 * x[p] * y[q]) < 1e-12);
}

TEST_CASE("synthesize_channel: single path, determinism and K-factor limit") {
  LinkState link;
  link.los.aod = {0.3, 1.0};
  link.los.aoa = {0.5, 1.4};
  link.distance = 7e5;
  link.closing_speed = 3000.0;
  ScatterConfig sc;
  sc.paths = 1;
  auto ch = synthesize_channel(link, sc, 9);
  REQUIRE(ch.paths.size() == 1);
  CHECK(std::abs(std::abs(ch.paths[0].alpha) - 1.0) < 1e-15);

  sc.paths = 4;
  const auto a = synthesize_channel(link, sc, 9);
  const auto b = synthesize_channel(link, sc, 9);
  for (size_t l = 0; l < a.paths.size(); ++l) {
    CHECK(a.paths[l].alpha == b.paths[l].alpha);
    CHECK(a.paths[l].aod.azimuth == b.paths[l].aod.azimuth);
    CHECK(a.paths[l].delay == b.paths[l].delay);
  }
  double total = 0.0;
  for (const auto& p : a.paths) total += std::norm(p.alpha);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  sc.k_factor_db = 200.0;
  const auto c = synthesize_channel(link, sc, 9);
  CHECK(std::abs(std::norm(c.paths[0].alpha) - 1.0) < 1e-9);
  sc.paths = 0;
  CHECK_THROWS(synthesize_channel(link, sc, 9));
}

TEST_CASE("channel_matrix: single path outer product") {
  const auto tx = upa(4, 4), rx = upa(2, 2);
  const auto ch = one_path(1.0, 0.4, 1.1, 2.0, 0.9);
  const auto H = channel_matrix(ch, tx, rx, 5, 3, 1.0 / 180e3);
  const Eigen::MatrixXcd expect = steering_vector(rx, 2.0, 0.9) * steering_vector(tx, 0.4, 1.1).adjoint();
  CHECK((H - expect).norm() < 1e-13);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(H);
  CHECK(svd.singularValues()(1) < 1e-12);
}

TEST_CASE("channel_matrix: cancelling paths give zero") {
  auto ch = one_path(cplx(0.6, 0.2), 0.4, 1.1, 2.0, 0.9);
  ch.paths.push_back(ch.paths[0]);
  ch.paths[1].alpha = -ch.paths[0].alpha;
  CHECK(channel_matrix(ch, upa(4, 4), upa(2, 2), 0, 0, 1e-5).norm() < 1e-12);
}

TEST_CASE("channel_matrix: rank bounded by path count") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int L = 1; L <= 5; ++L) {
    MultipathChannel ch;
    for (int l = 0; l < L; ++l) {
      PathDescriptor p;
      p.alpha = cplx(u(rng), u(rng));
      p.aod = {u(rng), u(rng)};
      p.aoa = {u(rng), u(rng)};
      p.delay = 1e-7 * u(rng);
      p.doppler = 1e3 * u(rng);
      ch.paths.push_back(p);
    }
    const auto H = channel_matrix(ch, upa(4, 4), upa(2, 2), 3, 2, 1.0 / 180e3);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(H);
    svd.setThreshold(1e-10);
    CHECK(svd.rank() <= std::min({L, 16, 4}));
  }
}

TEST_CASE("RbResponse agrees with explicit matrices") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  MultipathChannel ch;
  for (int l = 0; l < 3; ++l) {
    PathDescriptor p;
    p.alpha = cplx(u(rng), -u(rng));
    p.aod = {u(rng), u(rng)};
    p.aoa = {u(rng), u(rng)};
    p.delay = 2e-3 + 1e-7 * u(rng);
    p.doppler = 9e4 * u(rng);
    ch.paths.push_back(p);
  }
  const auto tx = upa(4, 4), rx = upa(2, 2);
  const double ts = 1.0 / 180e3;
  const RbResponse resp(ch, tx, rx, 1234, 20, ts);
  const auto wt = steering_vector(tx, 0.3, 1.0), wr = steering_vector(rx, 1.2, 0.8);
  const auto r = resp.responses(wt, wr);
  const auto recv = resp.received_vectors(wt);
  for (int m = 0; m < 20; ++m) {
    const auto H = channel_matrix(ch, tx, rx, 1234, m, ts);
    CHECK(std::abs(r(m) - wr.dot(H * wt)) < 1e-10);
    CHECK((recv.col(m) - H * wt).norm() < 1e-10);
  }
}

TEST_CASE("snr: zero power, LOS alignment and dimension check") {
  const auto tx = upa(4, 4), rx = upa(2, 2);
  const auto at = steering_vector(tx, 0.4, 1.1), ar = steering_vector(rx, 2.0, 0.9);
  const Eigen::MatrixXcd H = ar * at.adjoint();
  NoiseModel nm;
  CHECK(snr(ar, at, H, 0.0, 1e-16, nm) == 0.0);
  const double pt = 1000.0, lg = 3e-17;
  const double expect = pt * lg / (4.0 * nm.variance());
  CHECK(std::abs(snr(ar, at, H, pt, lg, nm) - expect) <= 1e-10 * expect);
  CHECK_THROWS(snr(at, at, H, pt, lg, nm));
}

TEST_CASE("noise variance and rate") {
  NoiseModel nm;
  CHECK(std::abs(nm.variance() - 7.2069e-16) < 1e-19);
  CHECK(rate(0.0, 180e3) == 0.0);
  CHECK(rate(1.0, 180e3) == doctest::Approx(180e3).epsilon(1e-15));
  CHECK(rate(3.0, 180e3) == doctest::Approx(360e3).epsilon(1e-15));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1e7);
  for (int i = 0; i < 100; ++i) {
    const double s = u(rng);
    CHECK(std::abs(rate(s, 180e3) - 180e3 * std::log(1.0 + s) / std::log(2.0)) < 1e-10 * rate(s, 180e3));
  }
}
