#pragma once

// Maxwell-Bloch propagation of the signal (795 nm) and telecom (1324 nm)
// envelopes through the vapor cell.
//
// Envelopes obey (d/dt + c d/dz) psi = i kappa rho, with rho = rho_21 for the
// signal and rho_42 for the telecom field; kappa = g N where g is the
// single-photon Rabi frequency and N the number of atoms in the mode volume.
// The atoms see H(2,1) = -g_s psi_s and H(4,2) = -g_t psi_t.

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qlink/atomic_core.hpp"

namespace qlink::field {

using atomic::Complex;
using atomic::Matrix4c;

class FieldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CellParams {
  double length_m = 0.07;
  double beam_diameter_m = 0.29e-3;
  double atomic_density_m3 = 4e17;
  double temperature_c = 100.0;  // documentation only

  static CellParams reference() { return {}; }

  double beam_area_m2() const;
  double mode_volume_m3() const;
  double atom_number() const { return atomic_density_m3 * mode_volume_m3(); }
  void validate() const;
};

struct DipoleMoments {
  double d12 = 2.5e-29;  // C m
  double d13 = 2.5e-29;
  double d24 = 8e-30;
  double d34 = 8e-30;
};

struct Couplings {
  double g_signal = 0.0;   // single-photon Rabi frequency, rad/s
  double g_telecom = 0.0;
  double kappa_signal = 0.0;   // 1/s, g_signal * N
  double kappa_telecom = 0.0;

  static Couplings from_cell(const CellParams& cell, const DipoleMoments& dipoles,
                             double signal_wavelength_m = 794.979e-9,
                             double telecom_wavelength_m = 1323.88e-9);
};

enum class PulseShape { gaussian, square, cw };

struct PulseSpec {
  PulseShape shape = PulseShape::gaussian;
  double peak_rabi = 0.0;   // rad/s, g_s * |psi_s| at the peak
  double center_s = 0.0;
  double fwhm_s = 0.0;      // intensity FWHM

  /// Real Rabi amplitude g_s * psi_s(t) at the cell input.
  double rabi_at(double t) const;
  /// Fraction of the pulse energy outside [t0, t1]; 0 for cw.
  double energy_outside(double t0, double t1) const;
  void validate() const;
};

struct PumpConfig {
  double omega_I = 0.0;
  double omega_II = 0.0;
  atomic::DetuningSet detunings;
};

enum class Frame { retarded, lab };

struct FieldEnvelopePair {
  std::vector<double> z_grid;
  Eigen::VectorXcd psi_s;
  Eigen::VectorXcd psi_t;

  static FieldEnvelopePair zeros(std::vector<double> z_grid);
  std::size_t size() const { return z_grid.size(); }
  void validate() const;
};

/// Advance the envelopes by one step given per-grid-point density matrices.
///
/// lab: first-order upwind with Courant number c dt / dz <= 1, the source
///   averaged along the characteristic; exact transport at Courant number 1.
/// retarded: in tau = t - z/c the envelopes are a z-quadrature (trapezoid)
///   of the coherences at the current tau; dt is unused.
/// `signal_in` is the input boundary value of psi_s; the telecom input is 0.
FieldEnvelopePair propagation_step(const FieldEnvelopePair& fields,
                                   std::span<const Matrix4c> rho_grid, double dt, double dz,
                                   const Couplings& couplings, Frame frame, Complex signal_in);

struct NumericsConfig {
  std::size_t n_z = 200;
  double dt_s = 1e-10;
  double window_s = 0.0;   // 0 means choose from the pulse: center + 3 fwhm + 2 L/c ...
  Frame frame = Frame::retarded;
  DipoleMoments dipoles;
  /// Lab frame only: Courant number for the z/t grid (dt = courant dz / c).
  double courant = 1.0;

  void validate() const;
};

struct ConversionResult {
  std::vector<double> times;                 // retarded time at the exit (lab: t - L/c)
  std::vector<Complex> input_signal;         // psi_s at z = 0
  std::vector<Complex> output_signal;        // psi_s at z = L
  std::vector<Complex> output_telecom;       // psi_t at z = L
  double input_flux = 0.0;                   // integral |psi_s(0)|^2 dt
  double output_signal_flux = 0.0;
  double output_telecom_flux = 0.0;
  double efficiency = 0.0;                   // telecom out / signal in
  double peak_delay_s = 0.0;                 // telecom peak - input signal peak, lab time
  std::vector<std::string> warnings;
};

/// Pump-dressed stationary state with the weak fields off. Coherences that
/// are identically zero by the coupling structure (everything touching a
/// level the pumps cannot reach, and all coherences of |2>) are set exactly
/// to zero.
atomic::DensityMatrix4 pump_steady_state(const PumpConfig& pumps, const atomic::DecaySet& decays);

ConversionResult simulate_conversion(const CellParams& cell, const PumpConfig& pumps,
                                     const PulseSpec& signal, const atomic::DecaySet& decays,
                                     const NumericsConfig& numerics);

/// Efficiency for every (delta_I, delta_II) pair, rows indexed by grid_I.
/// Points are independent and may run on `threads` workers; results are
/// placed by grid index so the output does not depend on scheduling.
Eigen::MatrixXd efficiency_map(std::span<const double> grid_I, std::span<const double> grid_II,
                               const CellParams& cell, const PumpConfig& pumps,
                               const PulseSpec& signal, const atomic::DecaySet& decays,
                               const NumericsConfig& numerics, unsigned threads = 1);

/// Efficiency against the signal detuning with the pump detunings fixed.
std::vector<double> signal_detuning_scan(std::span<const double> grid_s, const CellParams& cell,
                                         const PumpConfig& pumps, const PulseSpec& signal,
                                         const atomic::DecaySet& decays,
                                         const NumericsConfig& numerics, unsigned threads = 1);

struct OodrPoint {
  double delta_II = 0.0;
  double absorption = 0.0;  // Im rho_43 in the stationary state
};

/// Stationary 1367 nm absorption against delta_II with pump I fixed.
std::vector<OodrPoint> oodr_spectrum(std::span<const double> delta_II_scan, double omega_I,
                                     double omega_II, double delta_I,
                                     const atomic::DecaySet& decays);

/// Full width at half maximum of a sampled peak (linear interpolation
/// between samples); 0 when the curve has no interior half-maximum crossings.
double peak_fwhm(std::span<const double> x, std::span<const double> y);

}  // namespace qlink::field
