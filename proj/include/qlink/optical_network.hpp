#pragma once

// Coherent-state amplitudes through splitters and long fibers, with the
// closed-form Mach-Zehnder and HOM observables.

#include <complex>
#include <utility>

#include <Eigen/Dense>

#include "qlink/phase_noise.hpp"
#include "qlink/polarization.hpp"
#include "qlink/rng.hpp"

namespace qlink::network {

using Complex = std::complex<double>;
using pol::Jones;

struct CoherentAmplitude {
  Complex alpha{0.0, 0.0};
  Jones pol = Jones(1.0, 0.0);

  double mean_photons() const { return std::norm(alpha); }
  void validate() const;  // unit polarization within 1e-12, finite alpha
};

struct FiberLink {
  double length_km = 0.0;
  double loss_db = 0.0;        // total
  double group_index = 1.468;
  PhaseNoiseProcess phase_noise{};
  pol::DriftProcess pol_drift{};

  static FiberLink from_attenuation(double length_km, double db_per_km);

  double amplitude_transmission() const;  // 10^(-loss/20)
  double power_transmission() const;      // t^2
  double delay_s() const;                 // length n_g / c
  void validate() const;
};

/// Stateful view of one link: the current fiber-noise phase and the drift
/// unitary accumulated since t = 0. The caller owns it and its RNG.
class FiberChannel {
 public:
  explicit FiberChannel(FiberLink link);

  /// alpha -> t e^{i phi(t_now)} alpha, polarization rotated by the drift
  /// unitary at t_now. Times must not decrease between calls.
  CoherentAmplitude transmit(const CoherentAmplitude& in, double t_now, Rng& rng);

  const FiberLink& link() const { return link_; }
  double phase() const { return phi_; }
  const pol::Matrix2c& drift_unitary() const { return drift_; }

 private:
  void advance_to(double t_now, Rng& rng);

  FiberLink link_;
  double t_ = 0.0;
  double phi_ = 0.0;
  bool started_ = false;
  pol::Matrix2c drift_ = pol::Matrix2c::Identity();
};

/// Symmetric 50:50 split; each output carries alpha / sqrt(2).
std::pair<CoherentAmplitude, CoherentAmplitude> split_coherent(const CoherentAmplitude& in);

struct BeamsplitterOutput {
  CoherentAmplitude E;  // (a + b) / sqrt(2)
  CoherentAmplitude F;  // (a - b) / sqrt(2)
  double intensity_E = 0.0;
  double intensity_F = 0.0;
};

/// Final 50:50 beamsplitter. `mode_overlap` in [0, 1] scales the cross term
/// for temporal-mode mismatch on top of the polarization overlap; at 1 the
/// intensities are |E|^2 and |F|^2 of the output amplitudes.
BeamsplitterOutput combine_beamsplitter(const CoherentAmplitude& a, const CoherentAmplitude& b,
                                        double mode_overlap = 1.0);

double polarization_overlap(const Jones& p, const Jones& q);  // |<p|q>|

double mz_visibility(double t_ac, double t_bd, double overlap);

struct PortRates {
  double E = 0.0;
  double F = 0.0;
};

/// Mean detection rates at the two outputs for a macroscopic beam.
PortRates mz_rates(double alpha2, double T_ac, double T_bd, double V, double phi);

/// 1 - V^2 <cos phi(t) cos phi(t+dt)> with the correlator 1/2 exp(-|dt|/tau).
double g2_mz_analytic(double V, double delta_t, double tau_phi);

/// G2(0) for two phase-randomized coherent inputs of mean photon numbers
/// n_a, n_b and mode overlap o: 1 - 2 o^2 n_a n_b / (n_a + n_b)^2.
double hom_g2_analytic(double n_a, double n_b, double overlap);

/// As above at delay dt, for inputs of coherence time tau_c
/// (first-order coherence exp(-|dt|/tau_c) per source).
double hom_g2_at(double n_a, double n_b, double overlap, double delta_t, double tau_c);

/// (|12> + e^{i theta}|21>) / sqrt(2) over {|11>, |12>, |21>, |22>}.
Eigen::Vector4cd heralded_memory_state(double theta);

}  // namespace qlink::network
