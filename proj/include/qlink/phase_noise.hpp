#pragma once

// Fiber phase noise as an Ornstein-Uhlenbeck process on the unwrapped phase.
//
// The stationary spread sigma is much larger than 2 pi, so only the phase
// diffusion matters: the mean-reversion time is sigma^2 tau, which gives
// <e^{i(phi(t) - phi(t + dt))}> = exp(-dt / tau) up to O(dt^2 / (sigma tau)^2).

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace qlink::network {

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PhaseNoiseProcess {
  double tau_phi_s = 1e-3;   // coherence time of e^{i phi}
  double sigma_rad = 100.0;  // stationary standard deviation

  void validate() const;
  /// OU mean-reversion time.
  double reversion_time_s() const { return sigma_rad * sigma_rad * tau_phi_s; }
  /// Exact <cos phi(t) cos phi(t + dt)> for the stationary process.
  double cos_correlator(double dt) const;
};

/// Exact OU transition: phi(t + dt) given phi(t) and a standard normal draw.
double ou_advance(const PhaseNoiseProcess& p, double phi, double dt, double normal_draw);

/// A phase path sampled on a uniform grid from a counter-based normal
/// stream, so any reader holding the key regenerates the same path.
/// Between grid points the phase is interpolated linearly.
class PhasePath {
 public:
  PhasePath(const PhaseNoiseProcess& process, std::uint64_t key, double duration_s,
            double step_s);

  double at(double t) const;
  double step_s() const { return step_; }
  std::size_t size() const { return phi_.size(); }

 private:
  double step_;
  std::vector<double> phi_;
};

/// Forward-only reader of the same grid path as PhasePath (identical values
/// for the same key and step) that keeps O(1) state; queries must not go
/// back in time.
class PhaseCursor {
 public:
  PhaseCursor(const PhaseNoiseProcess& process, std::uint64_t key, double step_s);

  double at(double t);

 private:
  PhaseNoiseProcess process_;
  std::uint64_t key_;
  double step_;
  std::uint64_t k_ = 0;  // left grid index
  double left_ = 0.0;
  double right_ = 0.0;
};

/// Correlation time of the phase difference of two independent paths.
double relative_tau(double tau_a, double tau_b);

}  // namespace qlink::network
