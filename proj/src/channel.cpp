// SPDX-License-Identifier: Apache-2.0
#include "ntn/channel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ntn/rng.hpp"

namespace ntn::channel {

using geometry::kPi;

void UpaConfig::validate() const {
  if (n_x < 1 || n_y < 1) throw std::invalid_argument("UPA needs at least one element per axis");
  if (!(spacing > 0.0) || !(wavelength > 0.0)) throw std::invalid_argument("UPA spacing and wavelength must be positive");
}

UpaConfig UpaConfig::half_wavelength(int n_x, int n_y, double wavelength) {
  return UpaConfig{n_x, n_y, 0.5 * wavelength, wavelength};
}

BeamVector steering_vector(const UpaConfig& upa, double azimuth, double elevation) {
  const int n = upa.size();
  const double k = 2.0 * kPi / upa.wavelength * upa.spacing;
  const double ux = std::sin(elevation) * std::cos(azimuth);
  const double uy = std::cos(elevation);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  BeamVector v(n);
  for (int p = 0; p < upa.n_x; ++p) {
    for (int q = 0; q < upa.n_y; ++q) {
      v(p * upa.n_y + q) = std::polar(scale, k * (p * ux + q * uy));
    }
  }
  return v;
}

LinkState link_state(const geometry::GeometrySnapshot& s, double carrier) {
  LinkState l;
  l.los = geometry::compute_angles(s);
  l.distance = s.distance;
  l.closing_speed = -s.relative_speed;
  l.carrier = carrier;
  return l;
}

namespace {

geometry::Angles jitter(const geometry::Angles& a, double d_az, double d_el) {
  geometry::Angles out;
  out.elevation = std::clamp(a.elevation + d_el, 0.0, kPi);
  double az = std::fmod(a.azimuth + d_az, 2.0 * kPi);
  if (az < 0.0) az += 2.0 * kPi;
  out.azimuth = az;
  return out;
}

}  // namespace

MultipathChannel synthesize_channel(const LinkState& link, const ScatterConfig& cfg, std::uint64_t seed) {
  if (cfg.paths < 1) throw std::invalid_argument("channel needs at least one path");
  Rng rng(derive_seed(seed, streams::kScatter));
  std::normal_distribution<double> gauss(0.0, cfg.angle_jitter);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int L = cfg.paths;
  const double k = geometry::db_to_linear(cfg.k_factor_db);
  const double los_power = L == 1 ? 1.0 : k / (k + 1.0);
  const double nlos_power = L == 1 ? 0.0 : 1.0 / ((k + 1.0) * (L - 1));
  const double los_delay = link.distance / geometry::kSpeedOfLight;
  const double los_doppler = geometry::doppler(link.closing_speed, link.carrier);

  MultipathChannel ch;
  ch.paths.reserve(L);
  PathDescriptor los;
  los.alpha = cplx(std::sqrt(los_power), 0.0);
  los.doppler = los_doppler;
  los.delay = los_delay;
  los.aod = link.los.aod;
  los.aoa = link.los.aoa;
  ch.paths.push_back(los);

  const geometry::Vec3 los_dir = geometry::local_direction(link.los.aod);
  for (int l = 1; l < L; ++l) {
    PathDescriptor p;
    const double d_az_t = gauss(rng), d_el_t = gauss(rng);
    const double d_az_r = gauss(rng), d_el_r = gauss(rng);
    const double phase = 2.0 * kPi * unit(rng);
    const double excess = cfg.max_excess_delay * unit(rng);
    p.aod = jitter(link.los.aod, d_az_t, d_el_t);
    p.aoa = jitter(link.los.aoa, d_az_r, d_el_r);
    p.alpha = std::polar(std::sqrt(nlos_power), phase);
    const double c = std::clamp(los_dir.dot(geometry::local_direction(p.aod)), -1.0, 1.0);
    p.doppler = los_doppler * c;
    p.delay = los_delay + excess;
    ch.paths.push_back(p);
  }
  return ch;
}

namespace {

cplx path_phase(const PathDescriptor& p, long slot, int rb, double ts) {
  // Reduce each term to a fraction of a cycle before forming the exponential.
  // Extended precision: slot * ts * doppler reaches ~1e5 cycles.
  using ld = long double;
  const ld a = std::fmod(static_cast<ld>(slot) * static_cast<ld>(ts) * static_cast<ld>(p.doppler), 1.0L);
  const ld b = std::fmod(static_cast<ld>(rb) / static_cast<ld>(ts) * static_cast<ld>(p.delay), 1.0L);
  return std::polar(1.0, static_cast<double>(2.0L * static_cast<ld>(kPi) * (a - b)));
}

}  // namespace

ChannelMatrix channel_matrix(const MultipathChannel& ch, const UpaConfig& tx, const UpaConfig& rx, long slot,
                             int rb, double symbol_duration) {
  ChannelMatrix H = ChannelMatrix::Zero(rx.size(), tx.size());
  for (const auto& p : ch.paths) {
    const BeamVector at = steering_vector(tx, p.aod);
    const BeamVector ar = steering_vector(rx, p.aoa);
    H += (p.alpha * path_phase(p, slot, rb, symbol_duration)) * ar * at.adjoint();
  }
  return H;
}

double snr(const BeamVector& w_r, const BeamVector& w_t, const ChannelMatrix& H, double tx_power, double link_gain,
           const NoiseModel& noise) {
  if (H.rows() != w_r.size() || H.cols() != w_t.size()) throw std::invalid_argument("snr: dimension mismatch");
  const cplx g = w_r.dot(H * w_t);  // dot conjugates the first argument
  return tx_power * link_gain * std::norm(g) / (static_cast<double>(w_r.size()) * noise.variance());
}

double rate(double snr, double bandwidth) { return bandwidth * std::log2(1.0 + snr); }

RbResponse::RbResponse(const MultipathChannel& ch, const UpaConfig& tx, const UpaConfig& rx, long slot, int rbs,
                       double symbol_duration)
    : rbs_(rbs) {
  const int L = static_cast<int>(ch.paths.size());
  coef_.resize(L, rbs);
  a_t_.reserve(L);
  a_r_.reserve(L);
  for (int l = 0; l < L; ++l) {
    const auto& p = ch.paths[l];
    for (int m = 0; m < rbs; ++m) coef_(l, m) = p.alpha * path_phase(p, slot, m, symbol_duration);
    a_t_.push_back(steering_vector(tx, p.aod));
    a_r_.push_back(steering_vector(rx, p.aoa));
  }
}

Eigen::VectorXcd RbResponse::tx_projection(const BeamVector& w_t) const {
  Eigen::VectorXcd u(a_t_.size());
  for (size_t l = 0; l < a_t_.size(); ++l) u(l) = a_t_[l].dot(w_t);
  return u;
}

Eigen::VectorXcd RbResponse::rx_projection(const BeamVector& w_r) const {
  Eigen::VectorXcd v(a_r_.size());
  for (size_t l = 0; l < a_r_.size(); ++l) v(l) = w_r.dot(a_r_[l]);
  return v;
}

Eigen::VectorXcd RbResponse::responses(const BeamVector& w_t, const BeamVector& w_r) const {
  const Eigen::VectorXcd uv = tx_projection(w_t).cwiseProduct(rx_projection(w_r));
  return coef_.transpose() * uv;
}

Eigen::MatrixXcd RbResponse::received_vectors(const BeamVector& w_t) const {
  const Eigen::VectorXcd u = tx_projection(w_t);
  const int nr = a_r_.empty() ? 0 : static_cast<int>(a_r_[0].size());
  Eigen::MatrixXcd A(nr, a_r_.size());
  for (size_t l = 0; l < a_r_.size(); ++l) A.col(l) = a_r_[l] * u(l);
  return A * coef_;
}

}  // namespace ntn::channel
