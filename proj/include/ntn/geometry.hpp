// SPDX-License-Identifier: Apache-2.0
// Circular-orbit propagation and LEO-UE link geometry.
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

namespace ntn::geometry {

using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kEarthRadius = 6371e3;
inline constexpr double kEarthMu = 3.986004418e14;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }

struct OrbitConfig {
  double altitude = 600e3;
  double inclination = 53.0 * kPi / 180.0;
  double initial_phase = 0.0;
  double earth_radius = kEarthRadius;
  double mu = kEarthMu;
  double slot_duration = 1.0;

  double radius() const { return earth_radius + altitude; }
  double speed() const;
  double mean_motion() const;
  double period() const;
  void validate() const;
};

// Satellite state in an Earth-centred inertial frame (no Earth rotation).
struct OrbitState {
  Vec3 position;
  Vec3 velocity;
};

OrbitState orbit_state(const OrbitConfig& cfg, double t);

struct GeometrySnapshot {
  Vec3 sat_position;
  Vec3 sat_velocity;
  Vec3 ue_position;
  double distance = 0.0;
  double elevation = 0.0;
  double relative_speed = 0.0;  // range-rate, positive when receding
};

Vec3 ground_point(double latitude, double longitude, double earth_radius = kEarthRadius);

GeometrySnapshot propagate(const OrbitConfig& cfg, const Vec3& ue, long slot);
GeometrySnapshot snapshot_at(const OrbitConfig& cfg, const Vec3& ue, double t);

double elevation_angle(const Vec3& sat, const Vec3& ue);

// Free-space gain (c / (4 pi d f))^2.
double pathloss(double distance, double carrier_freq);
double doppler(double relative_speed, double carrier_freq);

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

// Orthonormal panel frame; z is the boresight.
struct PanelFrame {
  Vec3 x, y, z;
};

struct Angles {
  double azimuth = 0.0;    // theta in [0, 2pi)
  double elevation = 0.0;  // phi in [0, pi]
};

struct LinkAngles {
  Angles aod;
  Angles aoa;
};

// Nadir boresight, x across the orbital plane, y along track.
PanelFrame satellite_panel(const GeometrySnapshot& s);
// Zenith boresight, x along the projected orbit normal.
PanelFrame ue_panel(const GeometrySnapshot& s);

Angles direction_angles(const PanelFrame& f, const Vec3& direction);
Vec3 direction_from_angles(const PanelFrame& f, const Angles& a);
// Unit direction expressed in panel coordinates.
Vec3 local_direction(const Angles& a);

LinkAngles compute_angles(const GeometrySnapshot& s, const PanelFrame& sat, const PanelFrame& ue);
LinkAngles compute_angles(const GeometrySnapshot& s);

}  // namespace ntn::geometry
