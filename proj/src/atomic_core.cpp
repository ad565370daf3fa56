#include "qlink/atomic_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qlink/constants.hpp"

namespace qlink::atomic {

namespace {

bool finite(double x) { return std::isfinite(x); }

void require(bool ok, const std::string& what) {
  if (!ok) throw AtomicError(what);
}

double max_abs(const Matrix4c& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

const char* level_name(Level l) {
  switch (l) {
    case Level::ground: return "ground";
    case Level::intermediate: return "intermediate";
    case Level::pumped: return "pumped";
    case Level::upper: return "upper";
  }
  return "?";
}

LevelScheme LevelScheme::rubidium85() {
  LevelScheme s;
  s.omega[0] = 0.0;
  s.omega[1] = optical_angular_frequency(794.979e-9);
  s.omega[2] = optical_angular_frequency(780.241e-9);
  s.omega[3] = s.omega[2] + optical_angular_frequency(1366.875e-9);
  return s;
}

void LevelScheme::validate() const {
  for (double w : omega) require(finite(w), "LevelScheme: non-finite level energy");
  require(omega[0] >= 0.0, "LevelScheme: omega_1 must be >= 0");
  require(omega[0] < omega[1] && omega[1] < omega[2] && omega[2] < omega[3],
          "LevelScheme: diamond ordering omega_4 > omega_3 > omega_2 > omega_1 violated");
}

void RabiSet::validate() const {
  const std::array<std::pair<const char*, double>, 4> v{
      {{"omega_I", omega_I}, {"omega_II", omega_II}, {"omega_s", omega_s}, {"omega_t", omega_t}}};
  for (const auto& [name, x] : v) {
    require(finite(x), std::string("RabiSet: non-finite ") + name);
    require(x >= 0.0, std::string("RabiSet: ") + name + " must be >= 0");
  }
}

void DetuningSet::validate() const {
  require(finite(delta_s) && finite(delta_I) && finite(delta_II),
          "DetuningSet: non-finite detuning");
}

DetuningSet detunings_from_lasers(const LevelScheme& scheme, const LaserFrequencies& lasers) {
  scheme.validate();
  const auto& w = scheme.omega;
  return DetuningSet{lasers.signal - (w[1] - w[0]), lasers.pump_I - (w[2] - w[0]),
                     lasers.pump_II - (w[3] - w[2])};
}

DecaySet DecaySet::rubidium_default() {
  const double gamma4 = mhz_to_rad_s(3.5);
  DecaySet d;
  d.decays = {
      {Level::intermediate, Level::ground, mhz_to_rad_s(5.75)},
      {Level::pumped, Level::ground, mhz_to_rad_s(6.07)},
      {Level::upper, Level::intermediate, 0.5 * gamma4},
      {Level::upper, Level::pumped, 0.5 * gamma4},
  };
  return d;
}

double DecaySet::total_rate(Level l) const {
  double r = 0.0;
  for (const auto& ch : decays)
    if (ch.from == l) r += ch.rate;
  return r;
}

void DecaySet::validate() const {
  const auto energy_order = [](Level l) { return index(l); };
  for (const auto& ch : decays) {
    require(finite(ch.rate) && ch.rate >= 0.0, "DecaySet: decay rate must be finite and >= 0");
    // Energies follow the index order of the diamond (omega_1 < ... < omega_4).
    require(energy_order(ch.from) > energy_order(ch.to),
            std::string("DecaySet: decay must go downward in energy (") + level_name(ch.from) +
                " -> " + level_name(ch.to) + ")");
  }
  for (const auto& ch : dephasing)
    require(finite(ch.rate) && ch.rate >= 0.0, "DecaySet: dephasing rate must be finite and >= 0");
}

DensityMatrix4 DensityMatrix4::pure(Level l) {
  Matrix4c m = Matrix4c::Zero();
  m(index(l), index(l)) = 1.0;
  return DensityMatrix4(m);
}

double DensityMatrix4::hermiticity_error() const { return max_abs(m_ - m_.adjoint()); }

double DensityMatrix4::min_eigenvalue() const {
  const Matrix4c h = 0.5 * (m_ + m_.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix4c> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void DensityMatrix4::check_invariants(double trace_tol) const {
  const double scale = std::max(1.0, max_abs(m_));
  if (!m_.allFinite()) throw AtomicError("DensityMatrix4: non-finite entries");
  if (hermiticity_error() > 1e-12 * scale) {
    std::ostringstream os;
    os << "DensityMatrix4: not Hermitian (error " << hermiticity_error() << ")";
    throw AtomicError(os.str());
  }
  if (std::abs(trace() - Complex(1.0)) > trace_tol) {
    std::ostringstream os;
    os << "DensityMatrix4: trace " << trace().real() << " differs from 1";
    throw AtomicError(os.str());
  }
  if (min_eigenvalue() < -1e-9) {
    std::ostringstream os;
    os << "DensityMatrix4: negative eigenvalue " << min_eigenvalue();
    throw AtomicError(os.str());
  }
}

Matrix4c build_rotating_hamiltonian(const RabiSet& rabi, const DetuningSet& det) {
  rabi.validate();
  return build_rotating_hamiltonian(rabi.omega_I, rabi.omega_II, Complex(rabi.omega_s),
                                    Complex(rabi.omega_t), det);
}

Matrix4c build_rotating_hamiltonian(double omega_I, double omega_II, Complex signal,
                                    Complex telecom, const DetuningSet& det) {
  det.validate();
  require(finite(omega_I) && finite(omega_II) && finite(signal.real()) &&
              finite(signal.imag()) && finite(telecom.real()) && finite(telecom.imag()),
          "build_rotating_hamiltonian: non-finite coupling");
  Matrix4c H = Matrix4c::Zero();
  H(1, 1) = -det.delta_s;
  H(2, 2) = -det.delta_I;
  H(3, 3) = -det.delta_41();
  H(1, 0) = -signal;
  H(0, 1) = -std::conj(signal);
  H(2, 0) = -omega_I;
  H(0, 2) = -omega_I;
  H(3, 1) = -telecom;
  H(1, 3) = -std::conj(telecom);
  H(3, 2) = -omega_II;
  H(2, 3) = -omega_II;
  return H;
}

void lindblad_rhs_into(Matrix4c& out, const Matrix4c& rho, const Matrix4c& H,
                       const DecaySet& decays) {
  const Complex minus_i(0.0, -1.0);
  out.noalias() = H * rho;
  out.noalias() -= rho * H;
  out *= minus_i;
  for (const auto& ch : decays.decays) {
    const int f = index(ch.from);
    const int t = index(ch.to);
    const double g = ch.rate;
    out(t, t) += g * rho(f, f);
    // -1/2 {|f><f|, rho}: row f and column f scaled by -g/2 (diagonal by -g).
    for (int k = 0; k < 4; ++k) {
      out(f, k) -= 0.5 * g * rho(f, k);
      out(k, f) -= 0.5 * g * rho(k, f);
    }
  }
  for (const auto& ch : decays.dephasing) {
    const int l = index(ch.level);
    const double g = ch.rate;
    for (int k = 0; k < 4; ++k) {
      if (k == l) continue;
      out(l, k) -= 0.5 * g * rho(l, k);
      out(k, l) -= 0.5 * g * rho(k, l);
    }
  }
}

Matrix4c lindblad_rhs(const Matrix4c& rho, const Matrix4c& H, const DecaySet& decays) {
  Matrix4c out;
  lindblad_rhs_into(out, rho, H, decays);
  return out;
}

void rk4_step(Matrix4c& rho, const Matrix4c& H, const DecaySet& decays, double dt) {
  Matrix4c k1, k2, k3, k4, tmp;
  lindblad_rhs_into(k1, rho, H, decays);
  tmp = rho + (0.5 * dt) * k1;
  lindblad_rhs_into(k2, tmp, H, decays);
  tmp = rho + (0.5 * dt) * k2;
  lindblad_rhs_into(k3, tmp, H, decays);
  tmp = rho + dt * k3;
  lindblad_rhs_into(k4, tmp, H, decays);
  rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  // Project out the anti-Hermitian rounding residue.
  tmp = 0.5 * (rho + rho.adjoint());
  rho = tmp;
}

Trajectory evolve(const DensityMatrix4& rho0, const Matrix4c& H, const DecaySet& decays,
                  double t_final, double dt, const EvolveOptions& opts) {
  require(finite(t_final) && t_final >= 0.0, "evolve: t_final must be finite and >= 0");
  require(finite(dt) && dt > 0.0, "evolve: dt must be > 0");
  require(H.allFinite(), "evolve: non-finite Hamiltonian");
  require(max_abs(H - H.adjoint()) <= 1e-12 * std::max(1.0, max_abs(H)),
          "evolve: Hamiltonian is not Hermitian");
  decays.validate();
  rho0.check_invariants();
  const std::size_t stride = std::max<std::size_t>(1, opts.stride);

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(rho0);
  if (dt * max_abs(H) > 0.1) {
    std::ostringstream os;
    os << "evolve: dt*max|H_ij| = " << dt * max_abs(H) << " exceeds 0.1; RK4 accuracy degraded";
    traj.warnings.push_back(os.str());
  }
  if (t_final == 0.0) return traj;

  const auto n_full = static_cast<std::size_t>(std::floor(t_final / dt));
  const double remainder = t_final - static_cast<double>(n_full) * dt;
  const bool partial = remainder > 1e-12 * dt;
  const std::size_t n_steps = n_full + (partial ? 1 : 0);

  Matrix4c rho = rho0.matrix();
  for (std::size_t s = 1; s <= n_steps; ++s) {
    const double h = (partial && s == n_steps) ? remainder : dt;
    rk4_step(rho, H, decays, h);
    const double drift = std::abs(rho.trace() - Complex(1.0));
    if (!(drift <= opts.trace_drift_limit)) {
      std::ostringstream os;
      os << "evolve: trace drift " << drift << " at step " << s
         << " exceeds limit; step size too large for this Hamiltonian";
      throw AtomicError(os.str());
    }
    if (s % stride == 0 || s == n_steps) {
      traj.times.push_back(s == n_steps ? t_final : static_cast<double>(s) * dt);
      traj.states.emplace_back(rho);
    }
  }
  traj.steps = n_steps;
  return traj;
}

Eigen::Matrix<Complex, 16, 16> liouvillian(const Matrix4c& H, const DecaySet& decays) {
  Eigen::Matrix<Complex, 16, 16> L;
  Matrix4c basis = Matrix4c::Zero();
  Matrix4c out;
  for (int col = 0; col < 4; ++col) {
    for (int row = 0; row < 4; ++row) {
      basis.setZero();
      basis(row, col) = 1.0;
      lindblad_rhs_into(out, basis, H, decays);
      L.col(row + 4 * col) = Eigen::Map<const Eigen::Matrix<Complex, 16, 1>>(out.data());
    }
  }
  return L;
}

DensityMatrix4 steady_state(const Matrix4c& H, const DecaySet& decays) {
  decays.validate();
  Eigen::Matrix<Complex, 16, 16> L = liouvillian(H, decays);
  // Replace the rho_11 equation by the trace condition.
  Eigen::Matrix<Complex, 16, 1> rhs = Eigen::Matrix<Complex, 16, 1>::Zero();
  L.row(0).setZero();
  for (int k = 0; k < 4; ++k) L(0, k + 4 * k) = 1.0;
  rhs(0) = 1.0;
  Eigen::FullPivLU<Eigen::Matrix<Complex, 16, 16>> lu(L);
  if (lu.rank() < 16) throw AtomicError("steady_state: stationary state is not unique");
  Eigen::Matrix<Complex, 16, 1> x = lu.solve(rhs);
  Matrix4c rho = Eigen::Map<const Matrix4c>(x.data());
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return DensityMatrix4(rho);
}

}  // namespace qlink::atomic
