#include <doctest.h>

#include <random>

#include "ntn/geometry.hpp"

using namespace ntn::geometry;

namespace {

// Two-body RK4, independent of the closed-form propagator.
OrbitState integrate(const OrbitConfig& cfg, double t, int steps) {
  OrbitState s = orbit_state(cfg, 0.0);
  const double h = t / steps;
  auto acc = [&](const Vec3& r) -> Vec3 { return -cfg.mu / std::pow(r.norm(), 3) * r; };
  for (int i = 0; i < steps; ++i) {
    const Vec3 k1r = s.velocity, k1v = acc(s.position);
    const Vec3 k2r = s.velocity + 0.5 * h * k1v, k2v = acc(s.position + 0.5 * h * k1r);
    const Vec3 k3r = s.velocity + 0.5 * h * k2v, k3v = acc(s.position + 0.5 * h * k2r);
    const Vec3 k4r = s.velocity + h * k3v, k4v = acc(s.position + h * k3r);
    s.position += h / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r);
    s.velocity += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
  return s;
}

double db(double g) { return 10.0 * std::log10(g); }

}  // namespace

TEST_CASE("propagate: initial phase point at slot 0") {
  OrbitConfig cfg;
  cfg.initial_phase = 0.3;
  const Vec3 ue = ground_point(0.1, 0.2);
  const auto s = propagate(cfg, ue, 0);
  const double r = cfg.radius();
  CHECK(s.sat_position.x() == doctest::Approx(r * std::cos(0.3)).epsilon(1e-14));
  CHECK(s.sat_position.y() == doctest::Approx(r * std::sin(0.3) * std::cos(cfg.inclination)).epsilon(1e-14));
  CHECK(s.sat_position.z() == doctest::Approx(r * std::sin(0.3) * std::sin(cfg.inclination)).epsilon(1e-14));
}

TEST_CASE("propagate: one full period returns to the start") {
  OrbitConfig cfg;
  cfg.slot_duration = cfg.period() / 1000.0;
  const Vec3 ue = ground_point(0.0, 0.0);
  const auto a = propagate(cfg, ue, 0);
  const auto b = propagate(cfg, ue, 1000);
  CHECK((a.sat_position - b.sat_position).norm() < 1e-6 * cfg.radius());
}

TEST_CASE("propagate: closed form agrees with a numeric integrator") {
  OrbitConfig cfg;
  cfg.initial_phase = 1.1;
  for (double t : {60.0, 600.0, 2400.0}) {
    const auto num = integrate(cfg, t, static_cast<int>(t));
    const auto closed = orbit_state(cfg, t);
    CHECK((num.position - closed.position).norm() < 1e-6 * cfg.radius());
  }
}

TEST_CASE("orbital speed at 600 km") {
  OrbitConfig cfg;
  // 7557.8 m/s holds for the equatorial radius; the mean radius gives 7561.7.
  cfg.earth_radius = 6378.137e3;
  CHECK(std::abs(cfg.speed() - 7557.8) < 0.5);
  cfg.earth_radius = 6371e3;
  cfg.mu = 3.986e14;
  CHECK(cfg.speed() == doctest::Approx(std::sqrt(3.986e14 / 6.971e6)).epsilon(1e-14));
  CHECK(orbit_state(cfg, 123.0).velocity.norm() == doctest::Approx(cfg.speed()).epsilon(1e-12));
}

TEST_CASE("propagate is deterministic and rejects negative slots") {
  OrbitConfig cfg;
  const Vec3 ue = ground_point(0.03, 0.0);
  const auto a = propagate(cfg, ue, 777);
  const auto b = propagate(cfg, ue, 777);
  CHECK(a.sat_position == b.sat_position);
  CHECK(a.elevation == b.elevation);
  CHECK_THROWS(propagate(cfg, ue, -1));
  cfg.altitude = 0.0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("elevation angle: zenith, horizon and random oracle") {
  const Vec3 ue = ground_point(0.4, -1.0);
  CHECK(elevation_angle(ue * 1.1, ue) == doctest::Approx(kPi / 2).epsilon(1e-12));
  // A point along a local horizontal direction.
  const Vec3 up = ue.normalized();
  const Vec3 east = Vec3::UnitZ().cross(up).normalized();
  CHECK(std::abs(elevation_angle(ue + 5e5 * east, ue)) < 1e-12);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 g = ground_point(u(rng) * 1.5, u(rng) * 3.0);
    const Vec3 sat = Vec3(u(rng), u(rng), u(rng)).normalized() * 7e6;
    const Vec3 rel = sat - g;
    // Complement of the zenith angle.
    const double oracle = kPi / 2 - std::acos(rel.normalized().dot(g.normalized()));
    CHECK(std::abs(elevation_angle(sat, g) - oracle) < 1e-12);
  }
  CHECK_THROWS(elevation_angle(ue, ue));
}

TEST_CASE("pathloss values") {
  CHECK(std::abs(db(pathloss(1000.0, 4e9)) - (-104.49)) < 0.01);
  CHECK(std::abs(db(pathloss(600e3, 4e9)) - (-160.05)) < 0.01);
  CHECK(pathloss(2000.0, 4e9) / pathloss(1000.0, 4e9) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("doppler values") {
  CHECK(doppler(0.0, 4e9) == 0.0);
  CHECK(std::abs(doppler(7500.0, 4e9) - 100.07e3) < 1.0);
}

TEST_CASE("compute_angles: zenith with aligned panels") {
  OrbitConfig cfg;
  const Vec3 ue = ground_point(0.0, 0.0);
  const auto s = propagate(cfg, ue, 0);  // sub-satellite point at t = 0
  CHECK(s.elevation == doctest::Approx(kPi / 2).epsilon(1e-12));
  const auto la = compute_angles(s);
  CHECK(la.aod.elevation == doctest::Approx(kPi / 2).epsilon(1e-9));
  CHECK(la.aoa.elevation == doctest::Approx(kPi / 2).epsilon(1e-9));
}

TEST_CASE("compute_angles: UE mirrored across the orbital plane") {
  OrbitConfig cfg;
  const Vec3 ue = ground_point(0.05, 0.08);
  const auto s = propagate(cfg, ue, 40);
  const Vec3 h = s.sat_position.cross(s.sat_velocity).normalized();
  const Vec3 mirrored = ue - 2.0 * ue.dot(h) * h;
  const auto s2 = propagate(cfg, mirrored, 40);
  const auto a = compute_angles(s, satellite_panel(s), ue_panel(s));
  const auto b = compute_angles(s2, satellite_panel(s2), ue_panel(s2));
  CHECK(b.aod.elevation == doctest::Approx(a.aod.elevation).epsilon(1e-10));
  double reflected = kPi - a.aod.azimuth;
  if (reflected < 0) reflected += 2 * kPi;
  CHECK(b.aod.azimuth == doctest::Approx(reflected).epsilon(1e-10));
}

TEST_CASE("compute_angles: rotation-matrix oracle") {
  OrbitConfig cfg;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int i = 0; i < 100; ++i) {
    const Vec3 ue = ground_point(u(rng), u(rng));
    const auto s = propagate(cfg, ue, static_cast<long>(rng() % 500));
    const PanelFrame sat = satellite_panel(s);
    const PanelFrame gnd = ue_panel(s);
    const auto la = compute_angles(s, sat, gnd);
    for (const auto& [frame, ang, dir] :
         {std::tuple{sat, la.aod, Vec3(s.ue_position - s.sat_position)},
          std::tuple{gnd, la.aoa, Vec3(s.sat_position - s.ue_position)}}) {
      Eigen::Matrix3d R;
      R.row(0) = frame.x.transpose();
      R.row(1) = frame.y.transpose();
      R.row(2) = frame.z.transpose();
      CHECK((R * R.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
      const Vec3 local = R * dir.normalized();
      const Vec3 expect(std::sin(ang.elevation) * std::cos(ang.azimuth), std::cos(ang.elevation),
                        std::sin(ang.elevation) * std::sin(ang.azimuth));
      CHECK((local - expect).norm() < 1e-10);
      CHECK((direction_from_angles(frame, ang) - dir.normalized()).norm() < 1e-10);
    }
  }
}
