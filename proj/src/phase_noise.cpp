#include "qlink/phase_noise.hpp"

#include <cmath>

#include "qlink/rng.hpp"

namespace qlink::network {

void PhaseNoiseProcess::validate() const {
  if (!(tau_phi_s > 0.0) || !std::isfinite(tau_phi_s))
    throw NetworkError("PhaseNoiseProcess: tau_phi must be > 0");
  if (!(sigma_rad >= 0.0) || !std::isfinite(sigma_rad))
    throw NetworkError("PhaseNoiseProcess: sigma must be >= 0");
}

double PhaseNoiseProcess::cos_correlator(double dt) const {
  const double s2 = sigma_rad * sigma_rad;
  if (s2 == 0.0) return 1.0;
  const double rho = std::exp(-std::abs(dt) / reversion_time_s());
  // phi(t) +- phi(t + dt) are Gaussian with variances 2 s2 (1 -+ rho).
  return 0.5 * (std::exp(-s2 * (1.0 - rho)) + std::exp(-s2 * (1.0 + rho)));
}

double ou_advance(const PhaseNoiseProcess& p, double phi, double dt, double normal_draw) {
  if (p.sigma_rad == 0.0) return 0.0;
  const double rho = std::exp(-dt / p.reversion_time_s());
  return rho * phi + p.sigma_rad * std::sqrt(-std::expm1(-2.0 * dt / p.reversion_time_s())) *
                         normal_draw;
}

PhasePath::PhasePath(const PhaseNoiseProcess& process, std::uint64_t key, double duration_s,
                     double step_s)
    : step_(step_s) {
  process.validate();
  if (!(duration_s >= 0.0) || !(step_s > 0.0))
    throw NetworkError("PhasePath: duration must be >= 0 and step > 0");
  const auto n = static_cast<std::size_t>(std::ceil(duration_s / step_s)) + 2;
  phi_.resize(n);
  phi_[0] = process.sigma_rad * counter_normal(key, 0);
  for (std::size_t k = 1; k < n; ++k)
    phi_[k] = ou_advance(process, phi_[k - 1], step_s, counter_normal(key, k));
}

double PhasePath::at(double t) const {
  if (t <= 0.0) return phi_.front();
  const double x = t / step_;
  const auto k = static_cast<std::size_t>(x);
  if (k + 1 >= phi_.size()) return phi_.back();
  const double f = x - static_cast<double>(k);
  return phi_[k] + f * (phi_[k + 1] - phi_[k]);
}

PhaseCursor::PhaseCursor(const PhaseNoiseProcess& process, std::uint64_t key, double step_s)
    : process_(process), key_(key), step_(step_s) {
  process.validate();
  if (!(step_s > 0.0)) throw NetworkError("PhaseCursor: step must be > 0");
  left_ = process.sigma_rad * counter_normal(key, 0);
  right_ = ou_advance(process, left_, step_s, counter_normal(key, 1));
}

double PhaseCursor::at(double t) {
  if (t < static_cast<double>(k_) * step_) throw NetworkError("PhaseCursor: time went backwards");
  const double x = t / step_;
  while (static_cast<double>(k_ + 1) <= x) {
    ++k_;
    left_ = right_;
    right_ = ou_advance(process_, left_, step_, counter_normal(key_, k_ + 1));
  }
  const double f = x - static_cast<double>(k_);
  return left_ + f * (right_ - left_);
}

double relative_tau(double tau_a, double tau_b) {
  if (!(tau_a > 0.0) || !(tau_b > 0.0)) throw NetworkError("relative_tau: taus must be > 0");
  return 1.0 / (1.0 / tau_a + 1.0 / tau_b);
}

}  // namespace qlink::network
