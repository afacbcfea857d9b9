// SPDX-License-Identifier: Apache-2.0
// UPA steering vectors, multipath channel synthesis, SNR and per-RB rates.
#pragma once

#include <Eigen/Core>
#include <complex>
#include <cstdint>
#include <vector>

#include "ntn/geometry.hpp"

namespace ntn::channel {

using cplx = std::complex<double>;
using BeamVector = Eigen::VectorXcd;
using ChannelMatrix = Eigen::MatrixXcd;

struct UpaConfig {
  int n_x = 1;
  int n_y = 1;
  double spacing = 0.5;
  double wavelength = 1.0;

  int size() const { return n_x * n_y; }
  void validate() const;
  static UpaConfig half_wavelength(int n_x, int n_y, double wavelength);
};

// Entry (p, q) sits at index p * n_y + q (x-vector Kronecker y-vector).
BeamVector steering_vector(const UpaConfig& upa, double azimuth, double elevation);
inline BeamVector steering_vector(const UpaConfig& upa, const geometry::Angles& a) {
  return steering_vector(upa, a.azimuth, a.elevation);
}

struct PathDescriptor {
  cplx alpha{1.0, 0.0};
  double doppler = 0.0;
  double delay = 0.0;
  geometry::Angles aod;
  geometry::Angles aoa;
};

struct MultipathChannel {
  std::vector<PathDescriptor> paths;
};

struct ScatterConfig {
  int paths = 4;
  double k_factor_db = 10.0;
  double angle_jitter = 5.0 * geometry::kPi / 180.0;
  double max_excess_delay = 1e-6;
};

// Inputs the synthesizer needs from the geometry of one slot.
struct LinkState {
  geometry::LinkAngles los;
  double distance = 1.0;
  double closing_speed = 0.0;  // positive when approaching
  double carrier = 4e9;
};

LinkState link_state(const geometry::GeometrySnapshot& s, double carrier);

// Scatterer offsets, phases and excess delays depend only on the seed, so one
// seed reused across slots yields a channel that follows the LOS geometry.
MultipathChannel synthesize_channel(const LinkState& link, const ScatterConfig& cfg, std::uint64_t seed);

ChannelMatrix channel_matrix(const MultipathChannel& ch, const UpaConfig& tx, const UpaConfig& rx, long slot,
                             int rb, double symbol_duration);

struct NoiseModel {
  double boltzmann = 1.380649e-23;
  double noise_temperature = 290.0;
  double rb_bandwidth = 180e3;
  double variance() const { return boltzmann * noise_temperature * rb_bandwidth; }
};

double snr(const BeamVector& w_r, const BeamVector& w_t, const ChannelMatrix& H, double tx_power, double link_gain,
           const NoiseModel& noise);
double rate(double snr, double bandwidth);

// Per-RB evaluation of w_r^H H_{n,m} w_t without forming H.
class RbResponse {
 public:
  RbResponse(const MultipathChannel& ch, const UpaConfig& tx, const UpaConfig& rx, long slot, int rbs,
             double symbol_duration);

  int rbs() const { return rbs_; }
  int paths() const { return static_cast<int>(coef_.rows()); }
  // coef(l, m) = alpha_l exp(j 2 pi (n Ts v_l - m tau_l / Ts))
  const Eigen::MatrixXcd& coefficients() const { return coef_; }
  const std::vector<BeamVector>& tx_steering() const { return a_t_; }
  const std::vector<BeamVector>& rx_steering() const { return a_r_; }

  // Per-path projections a_t(aod_l)^H w_t and w_r^H a_r(aoa_l).
  Eigen::VectorXcd tx_projection(const BeamVector& w_t) const;
  Eigen::VectorXcd rx_projection(const BeamVector& w_r) const;

  Eigen::VectorXcd responses(const BeamVector& w_t, const BeamVector& w_r) const;
  // H_{n,m} w_t, one column per RB.
  Eigen::MatrixXcd received_vectors(const BeamVector& w_t) const;

 private:
  int rbs_;
  Eigen::MatrixXcd coef_;
  std::vector<BeamVector> a_t_;
  std::vector<BeamVector> a_r_;
};

}  // namespace ntn::channel
