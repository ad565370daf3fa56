#include "qlink/optical_network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qlink/constants.hpp"

namespace qlink::network {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw NetworkError(what);
}

bool finite(double x) { return std::isfinite(x); }

CoherentAmplitude from_field(const Jones& v, const Jones& fallback_pol) {
  const double n = v.norm();
  if (n == 0.0) return {Complex(0.0, 0.0), fallback_pol};
  // Put the global phase of the field into alpha, relative to the larger component.
  const int k = std::abs(v(0)) >= std::abs(v(1)) ? 0 : 1;
  const Complex ph = v(k) / std::abs(v(k));
  return {n * ph, v / (n * ph)};
}

}  // namespace

void CoherentAmplitude::validate() const {
  require(finite(alpha.real()) && finite(alpha.imag()), "CoherentAmplitude: non-finite alpha");
  require(pol.allFinite() && std::abs(pol.norm() - 1.0) <= 1e-12,
          "CoherentAmplitude: polarization must be unit norm");
}

FiberLink FiberLink::from_attenuation(double length_km, double db_per_km) {
  FiberLink l;
  l.length_km = length_km;
  l.loss_db = length_km * db_per_km;
  return l;
}

double FiberLink::amplitude_transmission() const { return std::pow(10.0, -loss_db / 20.0); }
double FiberLink::power_transmission() const { return std::pow(10.0, -loss_db / 10.0); }
double FiberLink::delay_s() const {
  return length_km * 1e3 * group_index / PhysicalConstants::c;
}

void FiberLink::validate() const {
  require(finite(length_km) && length_km >= 0.0, "FiberLink: length must be >= 0");
  require(finite(loss_db) && loss_db >= 0.0, "FiberLink: loss must be >= 0 dB");
  require(finite(group_index) && group_index >= 1.0, "FiberLink: group index must be >= 1");
  phase_noise.validate();
  pol_drift.validate();
}

FiberChannel::FiberChannel(FiberLink link) : link_(std::move(link)) { link_.validate(); }

void FiberChannel::advance_to(double t_now, Rng& rng) {
  require(finite(t_now), "FiberChannel: non-finite time");
  if (!started_) {
    // Start from the stationary distribution.
    phi_ = link_.phase_noise.sigma_rad * rng.normal();
    t_ = t_now;
    started_ = true;
    return;
  }
  require(t_now >= t_, "FiberChannel: time went backwards");
  const double dt = t_now - t_;
  if (dt == 0.0) return;
  phi_ = ou_advance(link_.phase_noise, phi_, dt, rng.normal());
  drift_ = pol::random_drift_rotation(dt, link_.pol_drift, rng) * drift_;
  t_ = t_now;
}

CoherentAmplitude FiberChannel::transmit(const CoherentAmplitude& in, double t_now, Rng& rng) {
  in.validate();
  advance_to(t_now, rng);
  CoherentAmplitude out;
  out.alpha = link_.amplitude_transmission() * std::polar(1.0, phi_) * in.alpha;
  out.pol = drift_ * in.pol;
  out.pol /= out.pol.norm();
  return out;
}

std::pair<CoherentAmplitude, CoherentAmplitude> split_coherent(const CoherentAmplitude& in) {
  in.validate();
  CoherentAmplitude h{in.alpha / std::sqrt(2.0), in.pol};
  return {h, h};
}

double polarization_overlap(const Jones& p, const Jones& q) {
  return std::min(1.0, std::abs(p.dot(q)) / (p.norm() * q.norm()));
}

BeamsplitterOutput combine_beamsplitter(const CoherentAmplitude& a, const CoherentAmplitude& b,
                                        double mode_overlap) {
  a.validate();
  b.validate();
  require(mode_overlap >= 0.0 && mode_overlap <= 1.0,
          "combine_beamsplitter: mode_overlap must be in [0, 1]");
  const Jones va = a.alpha * a.pol;
  const Jones vb = b.alpha * b.pol;
  const double r = 1.0 / std::sqrt(2.0);
  BeamsplitterOutput out;
  out.E = from_field(r * (va + vb), a.pol);
  out.F = from_field(r * (va - vb), a.pol);
  const double base = 0.5 * (va.squaredNorm() + vb.squaredNorm());
  const double cross = mode_overlap * va.dot(vb).real();
  out.intensity_E = base + cross;
  out.intensity_F = base - cross;
  return out;
}

double mz_visibility(double t_ac, double t_bd, double overlap) {
  require(t_ac > 0.0 && t_bd > 0.0, "mz_visibility: transmissions must be > 0");
  require(overlap >= 0.0 && overlap <= 1.0, "mz_visibility: overlap must be in [0, 1]");
  const double r = t_ac / t_bd;
  return 2.0 / (r + 1.0 / r) * overlap;
}

PortRates mz_rates(double alpha2, double T_ac, double T_bd, double V, double phi) {
  require(alpha2 >= 0.0, "mz_rates: alpha^2 must be >= 0");
  require(T_ac >= 0.0 && T_ac <= 1.0 && T_bd >= 0.0 && T_bd <= 1.0,
          "mz_rates: transmissions must be in [0, 1]");
  require(V >= 0.0 && V <= 1.0, "mz_rates: V must be in [0, 1]");
  const double mean = 0.5 * alpha2 * 0.5 * (T_ac + T_bd);
  const double c = V * std::cos(phi);
  return {mean * (1.0 + c), mean * (1.0 - c)};
}

double g2_mz_analytic(double V, double delta_t, double tau_phi) {
  require(V >= 0.0 && V <= 1.0, "g2_mz_analytic: V must be in [0, 1]");
  require(tau_phi > 0.0, "g2_mz_analytic: tau_phi must be > 0");
  return 1.0 - V * V * 0.5 * std::exp(-std::abs(delta_t) / tau_phi);
}

double hom_g2_analytic(double n_a, double n_b, double overlap) {
  require(n_a > 0.0 && n_b > 0.0, "hom_g2_analytic: photon numbers must be > 0");
  require(overlap >= 0.0 && overlap <= 1.0, "hom_g2_analytic: overlap must be in [0, 1]");
  const double s = n_a + n_b;
  return 1.0 - 2.0 * overlap * overlap * n_a * n_b / (s * s);
}

double hom_g2_at(double n_a, double n_b, double overlap, double delta_t, double tau_c) {
  require(tau_c > 0.0, "hom_g2_at: tau_c must be > 0");
  const double depth = 1.0 - hom_g2_analytic(n_a, n_b, overlap);
  return 1.0 - depth * std::exp(-2.0 * std::abs(delta_t) / tau_c);
}

Eigen::Vector4cd heralded_memory_state(double theta) {
  const double r = 1.0 / std::sqrt(2.0);
  Eigen::Vector4cd v = Eigen::Vector4cd::Zero();
  v(1) = r;
  v(2) = std::polar(r, theta);
  return v;
}

}  // namespace qlink::network
