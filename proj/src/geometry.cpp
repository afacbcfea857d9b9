// SPDX-License-Identifier: Apache-2.0
#include "ntn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ntn::geometry {

double OrbitConfig::speed() const { return std::sqrt(mu / radius()); }
double OrbitConfig::mean_motion() const { return std::sqrt(mu / (radius() * radius() * radius())); }
double OrbitConfig::period() const { return 2.0 * kPi / mean_motion(); }

void OrbitConfig::validate() const {
  if (!(altitude > 0.0)) throw std::invalid_argument("orbit altitude must be positive");
  if (!(slot_duration > 0.0)) throw std::invalid_argument("slot duration must be positive");
  if (!(earth_radius > 0.0) || !(mu > 0.0)) throw std::invalid_argument("earth parameters must be positive");
}

OrbitState orbit_state(const OrbitConfig& cfg, double t) {
  const double r = cfg.radius();
  const double n = cfg.mean_motion();
  const double u = cfg.initial_phase + n * t;
  const double ci = std::cos(cfg.inclination), si = std::sin(cfg.inclination);
  const double cu = std::cos(u), su = std::sin(u);
  OrbitState st;
  st.position = Vec3(r * cu, r * su * ci, r * su * si);
  st.velocity = Vec3(-r * n * su, r * n * cu * ci, r * n * cu * si);
  return st;
}

Vec3 ground_point(double latitude, double longitude, double earth_radius) {
  return earth_radius * Vec3(std::cos(latitude) * std::cos(longitude),
                             std::cos(latitude) * std::sin(longitude), std::sin(latitude));
}

GeometrySnapshot snapshot_at(const OrbitConfig& cfg, const Vec3& ue, double t) {
  const OrbitState st = orbit_state(cfg, t);
  GeometrySnapshot s;
  s.sat_position = st.position;
  s.sat_velocity = st.velocity;
  s.ue_position = ue;
  const Vec3 rel = st.position - ue;
  s.distance = rel.norm();
  s.elevation = elevation_angle(st.position, ue);
  s.relative_speed = rel.dot(st.velocity) / s.distance;
  return s;
}

GeometrySnapshot propagate(const OrbitConfig& cfg, const Vec3& ue, long slot) {
  if (slot < 0) throw std::invalid_argument("slot must be non-negative");
  return snapshot_at(cfg, ue, static_cast<double>(slot) * cfg.slot_duration);
}

double elevation_angle(const Vec3& sat, const Vec3& ue) {
  const Vec3 rel = sat - ue;
  const double d = rel.norm();
  if (d == 0.0) throw std::invalid_argument("satellite and UE coincide");
  const double s = std::clamp(rel.dot(ue.normalized()) / d, -1.0, 1.0);
  return std::asin(s);
}

double pathloss(double distance, double carrier_freq) {
  const double a = kSpeedOfLight / (4.0 * kPi * distance * carrier_freq);
  return a * a;
}

double doppler(double relative_speed, double carrier_freq) {
  return relative_speed * carrier_freq / kSpeedOfLight;
}

PanelFrame satellite_panel(const GeometrySnapshot& s) {
  PanelFrame f;
  f.z = -s.sat_position.normalized();
  f.y = s.sat_velocity.normalized();
  f.x = f.y.cross(f.z).normalized();
  f.y = f.z.cross(f.x);
  return f;
}

PanelFrame ue_panel(const GeometrySnapshot& s) {
  PanelFrame f;
  f.z = s.ue_position.normalized();
  Vec3 h = s.sat_position.cross(s.sat_velocity).normalized();
  Vec3 x = h - h.dot(f.z) * f.z;
  if (x.norm() < 1e-9) x = Vec3::UnitZ().cross(f.z);
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  f.x = x.normalized();
  f.y = f.z.cross(f.x);
  return f;
}

Angles direction_angles(const PanelFrame& f, const Vec3& direction) {
  const Vec3 d = direction.normalized();
  const double dx = d.dot(f.x), dy = d.dot(f.y), dz = d.dot(f.z);
  Angles a;
  a.elevation = std::acos(std::clamp(dy, -1.0, 1.0));
  double az = std::atan2(dz, dx);
  if (az < 0.0) az += 2.0 * kPi;
  if (az >= 2.0 * kPi) az -= 2.0 * kPi;
  a.azimuth = az;
  return a;
}

Vec3 local_direction(const Angles& a) {
  const double sp = std::sin(a.elevation);
  return Vec3(sp * std::cos(a.azimuth), std::cos(a.elevation), sp * std::sin(a.azimuth));
}

Vec3 direction_from_angles(const PanelFrame& f, const Angles& a) {
  const Vec3 l = local_direction(a);
  return l.x() * f.x + l.y() * f.y + l.z() * f.z;
}

LinkAngles compute_angles(const GeometrySnapshot& s, const PanelFrame& sat, const PanelFrame& ue) {
  const Vec3 los = s.ue_position - s.sat_position;
  LinkAngles la;
  la.aod = direction_angles(sat, los);
  la.aoa = direction_angles(ue, -los);
  return la;
}

LinkAngles compute_angles(const GeometrySnapshot& s) {
  return compute_angles(s, satellite_panel(s), ue_panel(s));
}

}  // namespace ntn::geometry
