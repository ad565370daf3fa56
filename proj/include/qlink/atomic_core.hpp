#pragma once

// Four-level diamond atom in the laser rotating frame.
//
// Level indices follow the diamond scheme: |1> ground, |2> intermediate
// (signal-coupled), |3> pumped (pump I coupled), |4> upper. Couplings are
// 1<->2 signal, 1<->3 pump I, 2<->4 telecom, 3<->4 pump II. All frequencies
// are angular (rad/s) with hbar = 1.

#include <array>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qlink::atomic {

using Complex = std::complex<double>;
using Matrix4c = Eigen::Matrix<Complex, 4, 4>;

enum class Level : int { ground = 0, intermediate = 1, pumped = 2, upper = 3 };

constexpr int index(Level l) { return static_cast<int>(l); }
const char* level_name(Level l);

class AtomicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Free-atom level energies, as angular frequencies.
struct LevelScheme {
  std::array<double, 4> omega{};

  /// 85Rb 5S1/2, 5P1/2, 5P3/2, 6S1/2 (fine structure only).
  static LevelScheme rubidium85();
  void validate() const;
};

struct RabiSet {
  double omega_I = 0.0;   // pump I, 1<->3
  double omega_II = 0.0;  // pump II, 3<->4
  double omega_s = 0.0;   // signal, 1<->2
  double omega_t = 0.0;   // telecom, 2<->4

  void validate() const;
};

struct DetuningSet {
  double delta_s = 0.0;
  double delta_I = 0.0;
  double delta_II = 0.0;

  /// Two-photon detuning of |4> through the pump ladder.
  double delta_41() const { return delta_I + delta_II; }
  void validate() const;
};

/// Laser angular frequencies used to derive one-photon detunings.
struct LaserFrequencies {
  double signal = 0.0;
  double pump_I = 0.0;
  double pump_II = 0.0;
};

DetuningSet detunings_from_lasers(const LevelScheme& scheme, const LaserFrequencies& lasers);

/// Spontaneous decay |from> -> |to>, jump operator sqrt(rate) |to><from|.
struct DecayChannel {
  Level from;
  Level to;
  double rate;  // rad/s
};

/// Pure dephasing of one level, jump operator sqrt(rate) |k><k|.
struct DephasingChannel {
  Level level;
  double rate;  // rad/s
};

struct DecaySet {
  std::vector<DecayChannel> decays;
  std::vector<DephasingChannel> dephasing;

  /// 2->1 at 2pi*5.75 MHz, 3->1 at 2pi*6.07 MHz, 4->2 and 4->3 at 2pi*1.75 MHz each.
  static DecaySet rubidium_default();
  static DecaySet none() { return {}; }

  /// Total out-decay rate of a level.
  double total_rate(Level l) const;
  void validate() const;
};

/// Rotating-frame density matrix with invariant diagnostics.
class DensityMatrix4 {
 public:
  DensityMatrix4() : m_(Matrix4c::Zero()) { m_(0, 0) = 1.0; }
  explicit DensityMatrix4(const Matrix4c& m) : m_(m) {}

  static DensityMatrix4 pure(Level l);

  const Matrix4c& matrix() const { return m_; }
  Matrix4c& matrix() { return m_; }

  Complex operator()(Level row, Level col) const { return m_(index(row), index(col)); }
  double population(Level l) const { return m_(index(l), index(l)).real(); }

  Complex trace() const { return m_.trace(); }
  /// max |rho - rho^dagger| element.
  double hermiticity_error() const;
  double min_eigenvalue() const;

  /// Throws AtomicError unless Hermitian (relative 1e-12), unit trace
  /// (trace_tol) and positive (eigenvalues >= -1e-9).
  void check_invariants(double trace_tol = 1e-9) const;

 private:
  Matrix4c m_;
};

/// Rotating-frame Hamiltonian with real Rabi frequencies:
///   diag(0, -delta_s, -delta_I, -delta_41), off-diagonals -Omega on the
///   four diamond couplings.
Matrix4c build_rotating_hamiltonian(const RabiSet& rabi, const DetuningSet& det);

/// Same, with complex local couplings for the weak fields. `signal` is the
/// element <2|H|1> up to sign, i.e. H(2,1) = -signal and H(1,2) = -conj(signal);
/// likewise H(4,2) = -telecom.
Matrix4c build_rotating_hamiltonian(double omega_I, double omega_II, Complex signal,
                                    Complex telecom, const DetuningSet& det);

/// d rho / dt = -i[H, rho] + sum_a (L rho L^dag - 1/2 {L^dag L, rho}).
Matrix4c lindblad_rhs(const Matrix4c& rho, const Matrix4c& H, const DecaySet& decays);

/// Allocation-free variant for inner loops; `out` must not alias `rho`.
void lindblad_rhs_into(Matrix4c& out, const Matrix4c& rho, const Matrix4c& H,
                       const DecaySet& decays);

/// One classical RK4 step of the master equation with constant H.
void rk4_step(Matrix4c& rho, const Matrix4c& H, const DecaySet& decays, double dt);

struct EvolveOptions {
  /// Store every `stride`-th state (the initial and final states are always stored).
  std::size_t stride = 1;
  /// Abort when |tr(rho) - 1| exceeds this.
  double trace_drift_limit = 1e-6;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<DensityMatrix4> states;
  std::vector<std::string> warnings;
  std::size_t steps = 0;
};

/// Fixed-step RK4 integration from 0 to t_final. The final step is
/// shortened when t_final is not a multiple of dt.
Trajectory evolve(const DensityMatrix4& rho0, const Matrix4c& H, const DecaySet& decays,
                  double t_final, double dt, const EvolveOptions& opts = {});

/// Steady state of the master equation for constant H. Throws when the
/// stationary state is not unique.
DensityMatrix4 steady_state(const Matrix4c& H, const DecaySet& decays);

/// Superoperator acting on column-stacked rho (vec index = row + 4 * col).
Eigen::Matrix<Complex, 16, 16> liouvillian(const Matrix4c& H, const DecaySet& decays);

}  // namespace qlink::atomic
