#include "qlink/field_propagation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include "qlink/constants.hpp"

namespace qlink::field {

namespace {

using atomic::DecaySet;
using atomic::Level;
using PC = PhysicalConstants;

void require(bool ok, const std::string& what) {
  if (!ok) throw FieldError(what);
}

double single_photon_rabi(double dipole, double wavelength, double volume) {
  const double omega = optical_angular_frequency(wavelength);
  return dipole / PC::hbar * std::sqrt(PC::hbar * omega / (2.0 * volume * PC::epsilon0));
}

Matrix4c pump_hamiltonian(const PumpConfig& p) {
  return atomic::build_rotating_hamiltonian(p.omega_I, p.omega_II, Complex(0.0), Complex(0.0),
                                            p.detunings);
}

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double integrate_flux(const std::vector<Complex>& series, double dt) {
  double s = 0.0;
  for (const auto& v : series) s += std::norm(v);
  return s * dt;
}

}  // namespace

double CellParams::beam_area_m2() const {
  const double r = 0.5 * beam_diameter_m;
  return std::numbers::pi * r * r;
}

double CellParams::mode_volume_m3() const { return beam_area_m2() * length_m; }

void CellParams::validate() const {
  require(std::isfinite(length_m) && length_m > 0.0, "CellParams: length must be > 0");
  require(std::isfinite(beam_diameter_m) && beam_diameter_m > 0.0,
          "CellParams: beam_diameter must be > 0");
  require(std::isfinite(atomic_density_m3) && atomic_density_m3 >= 0.0,
          "CellParams: atomic_density must be >= 0");
}

Couplings Couplings::from_cell(const CellParams& cell, const DipoleMoments& dipoles,
                               double signal_wavelength_m, double telecom_wavelength_m) {
  cell.validate();
  const double v = cell.mode_volume_m3();
  Couplings c;
  c.g_signal = single_photon_rabi(dipoles.d12, signal_wavelength_m, v);
  c.g_telecom = single_photon_rabi(dipoles.d24, telecom_wavelength_m, v);
  const double n_atoms = cell.atom_number();
  c.kappa_signal = c.g_signal * n_atoms;
  c.kappa_telecom = c.g_telecom * n_atoms;
  return c;
}

double PulseSpec::rabi_at(double t) const {
  switch (shape) {
    case PulseShape::cw: return peak_rabi;
    case PulseShape::square:
      return std::abs(t - center_s) <= 0.5 * fwhm_s ? peak_rabi : 0.0;
    case PulseShape::gaussian: {
      const double x = (t - center_s) / fwhm_s;
      return peak_rabi * std::exp(-2.0 * std::numbers::ln2 * x * x);
    }
  }
  return 0.0;
}

double PulseSpec::energy_outside(double t0, double t1) const {
  switch (shape) {
    case PulseShape::cw: return 0.0;
    case PulseShape::square: {
      const double a = center_s - 0.5 * fwhm_s;
      const double b = center_s + 0.5 * fwhm_s;
      const double inside = std::max(0.0, std::min(b, t1) - std::max(a, t0));
      return 1.0 - inside / fwhm_s;
    }
    case PulseShape::gaussian: {
      // |psi|^2 is Gaussian with sigma = fwhm / (2 sqrt(2 ln 2)).
      const double sigma = fwhm_s / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
      const double s2 = std::sqrt(2.0) * sigma;
      const double lo = 0.5 * std::erfc((center_s - t0) / s2);
      const double hi = 0.5 * std::erfc((t1 - center_s) / s2);
      return lo + hi;
    }
  }
  return 0.0;
}

void PulseSpec::validate() const {
  require(std::isfinite(peak_rabi) && peak_rabi >= 0.0, "PulseSpec: amplitude must be >= 0");
  require(std::isfinite(center_s), "PulseSpec: non-finite center");
  if (shape != PulseShape::cw)
    require(std::isfinite(fwhm_s) && fwhm_s > 0.0, "PulseSpec: width must be > 0 for pulses");
}

FieldEnvelopePair FieldEnvelopePair::zeros(std::vector<double> z_grid) {
  FieldEnvelopePair f;
  const auto n = static_cast<Eigen::Index>(z_grid.size());
  f.z_grid = std::move(z_grid);
  f.psi_s = Eigen::VectorXcd::Zero(n);
  f.psi_t = Eigen::VectorXcd::Zero(n);
  return f;
}

void FieldEnvelopePair::validate() const {
  const auto n = static_cast<Eigen::Index>(z_grid.size());
  require(n >= 2, "FieldEnvelopePair: need at least two grid points");
  require(psi_s.size() == n && psi_t.size() == n,
          "FieldEnvelopePair: envelope length differs from grid");
  require(psi_t(0) == Complex(0.0), "FieldEnvelopePair: telecom input boundary must be zero");
}

void NumericsConfig::validate() const {
  require(n_z >= 2, "NumericsConfig: n_z must be >= 2");
  require(std::isfinite(dt_s) && dt_s > 0.0, "NumericsConfig: dt must be > 0");
  require(std::isfinite(window_s) && window_s >= 0.0, "NumericsConfig: window must be >= 0");
  require(courant > 0.0 && courant <= 1.0, "NumericsConfig: courant must be in (0, 1]");
}

FieldEnvelopePair propagation_step(const FieldEnvelopePair& fields,
                                   std::span<const Matrix4c> rho_grid, double dt, double dz,
                                   const Couplings& couplings, Frame frame, Complex signal_in) {
  fields.validate();
  const std::size_t n = fields.size();
  require(rho_grid.size() == n, "propagation_step: rho grid size differs from field grid");
  require(std::isfinite(dz) && dz > 0.0, "propagation_step: dz must be > 0");
  const Complex i(0.0, 1.0);
  FieldEnvelopePair out = FieldEnvelopePair::zeros(fields.z_grid);
  out.psi_s(0) = signal_in;
  out.psi_t(0) = 0.0;

  if (frame == Frame::retarded) {
    const Complex a_s = i * couplings.kappa_signal * dz / (2.0 * PC::c);
    const Complex a_t = i * couplings.kappa_telecom * dz / (2.0 * PC::c);
    for (std::size_t j = 0; j + 1 < n; ++j) {
      out.psi_s(j + 1) = out.psi_s(j) + a_s * (rho_grid[j](1, 0) + rho_grid[j + 1](1, 0));
      out.psi_t(j + 1) = out.psi_t(j) + a_t * (rho_grid[j](3, 1) + rho_grid[j + 1](3, 1));
    }
    return out;
  }

  require(std::isfinite(dt) && dt > 0.0, "propagation_step: dt must be > 0");
  const double courant = PC::c * dt / dz;
  if (courant > 1.0 + 1e-12) {
    std::ostringstream os;
    os << "propagation_step: CFL violated (c dt / dz = " << courant << " > 1)";
    throw FieldError(os.str());
  }
  const double cn = std::min(courant, 1.0);
  for (std::size_t j = 1; j < n; ++j) {
    const Complex src_s = (1.0 - 0.5 * cn) * rho_grid[j](1, 0) + 0.5 * cn * rho_grid[j - 1](1, 0);
    const Complex src_t = (1.0 - 0.5 * cn) * rho_grid[j](3, 1) + 0.5 * cn * rho_grid[j - 1](3, 1);
    out.psi_s(j) = (1.0 - cn) * fields.psi_s(j) + cn * fields.psi_s(j - 1) +
                   dt * i * couplings.kappa_signal * src_s;
    out.psi_t(j) = (1.0 - cn) * fields.psi_t(j) + cn * fields.psi_t(j - 1) +
                   dt * i * couplings.kappa_telecom * src_t;
  }
  return out;
}

atomic::DensityMatrix4 pump_steady_state(const PumpConfig& pumps, const DecaySet& decays) {
  const Matrix4c H = pump_hamiltonian(pumps);
  Matrix4c rho = atomic::steady_state(H, decays).matrix();

  // Levels populated from |1> through the pumps, then by decay out of those.
  std::array<bool, 4> reach{true, false, false, false};
  for (int pass = 0; pass < 4; ++pass) {
    if (reach[0] && pumps.omega_I != 0.0) reach[2] = true;
    if (reach[2] && pumps.omega_II != 0.0) reach[3] = true;
    for (const auto& ch : decays.decays)
      if (ch.rate > 0.0 && reach[atomic::index(ch.from)]) reach[atomic::index(ch.to)] = true;
  }
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      const bool coherence_of_2 = (a == 1 || b == 1) && a != b;
      if (!reach[a] || !reach[b] || coherence_of_2) rho(a, b) = 0.0;
    }
  }
  rho /= rho.trace().real();
  return atomic::DensityMatrix4(rho);
}

namespace {

struct Grid {
  std::size_t n_points;
  double dz;
  double dt;
  std::size_t n_steps;
  double window;
};

Grid make_grid(const CellParams& cell, const PulseSpec& signal, const NumericsConfig& num) {
  Grid g{};
  g.n_points = num.n_z + 1;
  g.dz = cell.length_m / static_cast<double>(num.n_z);
  g.window = num.window_s;
  if (g.window == 0.0) {
    g.window = signal.shape == PulseShape::cw ? 200.0 * num.dt_s
                                              : signal.center_s + 4.0 * signal.fwhm_s;
  }
  g.dt = num.frame == Frame::lab ? num.courant * g.dz / PC::c : num.dt_s;
  g.n_steps = static_cast<std::size_t>(std::llround(g.window / g.dt));
  require(g.n_steps >= 2, "simulate_conversion: window shorter than two time steps");
  return g;
}

void finish_result(ConversionResult& r, double dt, double length) {
  r.input_flux = integrate_flux(r.input_signal, dt);
  r.output_signal_flux = integrate_flux(r.output_signal, dt);
  r.output_telecom_flux = integrate_flux(r.output_telecom, dt);
  r.efficiency = r.input_flux > 0.0 ? r.output_telecom_flux / r.input_flux : 0.0;

  const auto peak_index = [](const std::vector<Complex>& v) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k)
      if (std::norm(v[k]) > std::norm(v[best])) best = k;
    return best;
  };
  if (r.output_telecom_flux > 0.0) {
    r.peak_delay_s = r.times[peak_index(r.output_telecom)] - r.times[peak_index(r.input_signal)] +
                     length / PC::c;
  }
  // Tail of the telecom output in the last 2% of the window.
  const std::size_t tail = std::max<std::size_t>(1, r.times.size() / 50);
  double tail_flux = 0.0;
  for (std::size_t k = r.times.size() - tail; k < r.times.size(); ++k)
    tail_flux += std::norm(r.output_telecom[k]) * dt;
  if (r.output_telecom_flux > 0.0 && tail_flux > 1e-3 * r.output_telecom_flux) {
    std::ostringstream os;
    os << "simulate_conversion: telecom output still carries " << tail_flux / r.output_telecom_flux
       << " of its energy at the window end; extend the window";
    r.warnings.push_back(os.str());
  }
  if (!(r.efficiency >= 0.0 && r.efficiency <= 1.0) ||
      r.output_telecom_flux > r.input_flux * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "simulate_conversion: flux inequality violated (efficiency " << r.efficiency << ")";
    throw FieldError(os.str());
  }
}

ConversionResult run_retarded(const Grid& g, const Couplings& cpl, const PumpConfig& pumps,
                              const PulseSpec& signal, const DecaySet& decays,
                              const Matrix4c& rho_ss) {
  const std::size_t np = g.n_points;
  std::vector<Matrix4c> rho(np, rho_ss), tmp(np), k1(np), k2(np), k3(np), k4(np);
  std::vector<Complex> ps(np), pt(np);
  const Matrix4c H0 = pump_hamiltonian(pumps);
  const Complex i(0.0, 1.0);
  const Complex a_s = i * cpl.kappa_signal * g.dz / (2.0 * PC::c);
  const Complex a_t = i * cpl.kappa_telecom * g.dz / (2.0 * PC::c);
  const double gs = cpl.g_signal;
  const double gt = cpl.g_telecom;

  const auto sweep = [&](const std::vector<Matrix4c>& r, double t) {
    ps[0] = gs > 0.0 ? Complex(signal.rabi_at(t) / gs) : Complex(0.0);
    pt[0] = 0.0;
    for (std::size_t j = 0; j + 1 < np; ++j) {
      ps[j + 1] = ps[j] + a_s * (r[j](1, 0) + r[j + 1](1, 0));
      pt[j + 1] = pt[j] + a_t * (r[j](3, 1) + r[j + 1](3, 1));
    }
  };
  Matrix4c H = H0;
  const auto deriv = [&](const std::vector<Matrix4c>& r, std::vector<Matrix4c>& out) {
    for (std::size_t j = 0; j < np; ++j) {
      const Complex us = gs * ps[j];
      const Complex ut = gt * pt[j];
      H(1, 0) = -us;
      H(0, 1) = -std::conj(us);
      H(3, 1) = -ut;
      H(1, 3) = -std::conj(ut);
      atomic::lindblad_rhs_into(out[j], r[j], H, decays);
    }
  };

  ConversionResult res;
  res.times.reserve(g.n_steps);
  const double dt = g.dt;
  for (std::size_t n = 0; n < g.n_steps; ++n) {
    const double t = static_cast<double>(n) * dt;
    sweep(rho, t);
    res.times.push_back(t);
    res.input_signal.push_back(ps[0]);
    res.output_signal.push_back(ps[np - 1]);
    res.output_telecom.push_back(pt[np - 1]);
    deriv(rho, k1);
    for (std::size_t j = 0; j < np; ++j) tmp[j] = rho[j] + (0.5 * dt) * k1[j];
    sweep(tmp, t + 0.5 * dt);
    deriv(tmp, k2);
    for (std::size_t j = 0; j < np; ++j) tmp[j] = rho[j] + (0.5 * dt) * k2[j];
    sweep(tmp, t + 0.5 * dt);
    deriv(tmp, k3);
    for (std::size_t j = 0; j < np; ++j) tmp[j] = rho[j] + dt * k3[j];
    sweep(tmp, t + dt);
    deriv(tmp, k4);
    for (std::size_t j = 0; j < np; ++j) {
      rho[j] += (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
      tmp[j] = 0.5 * (rho[j] + rho[j].adjoint());
      rho[j] = tmp[j];
    }
  }
  return res;
}

ConversionResult run_lab(const Grid& g, const CellParams& cell, const Couplings& cpl,
                         const PumpConfig& pumps, const PulseSpec& signal,
                         const DecaySet& decays, const Matrix4c& rho_ss) {
  const std::size_t np = g.n_points;
  std::vector<double> z(np);
  for (std::size_t j = 0; j < np; ++j) z[j] = static_cast<double>(j) * g.dz;
  FieldEnvelopePair fields = FieldEnvelopePair::zeros(z);
  std::vector<Matrix4c> rho(np, rho_ss);
  const Matrix4c H0 = pump_hamiltonian(pumps);
  const double gs = cpl.g_signal;
  const double gt = cpl.g_telecom;
  const double delay = cell.length_m / PC::c;

  ConversionResult res;
  const double in0 = gs > 0.0 ? signal.rabi_at(0.0) / gs : 0.0;
  fields.psi_s(0) = in0;
  Matrix4c H = H0;
  for (std::size_t n = 0; n < g.n_steps; ++n) {
    const double t = static_cast<double>(n) * g.dt;
    res.times.push_back(t - delay);
    res.input_signal.push_back(gs > 0.0 ? Complex(signal.rabi_at(t - delay) / gs) : Complex(0.0));
    res.output_signal.push_back(fields.psi_s(static_cast<Eigen::Index>(np - 1)));
    res.output_telecom.push_back(fields.psi_t(static_cast<Eigen::Index>(np - 1)));

    const double next_in = gs > 0.0 ? signal.rabi_at(t + g.dt) / gs : 0.0;
    FieldEnvelopePair next =
        propagation_step(fields, rho, g.dt, g.dz, cpl, Frame::lab, Complex(next_in));
    for (std::size_t j = 0; j < np; ++j) {
      const auto idx = static_cast<Eigen::Index>(j);
      const Complex us = gs * fields.psi_s(idx);
      const Complex ut = gt * fields.psi_t(idx);
      H(1, 0) = -us;
      H(0, 1) = -std::conj(us);
      H(3, 1) = -ut;
      H(1, 3) = -std::conj(ut);
      atomic::rk4_step(rho[j], H, decays, g.dt);
    }
    fields = std::move(next);
  }
  return res;
}

}  // namespace

ConversionResult simulate_conversion(const CellParams& cell, const PumpConfig& pumps,
                                     const PulseSpec& signal, const DecaySet& decays,
                                     const NumericsConfig& numerics) {
  cell.validate();
  signal.validate();
  decays.validate();
  numerics.validate();
  pumps.detunings.validate();
  require(std::isfinite(pumps.omega_I) && pumps.omega_I >= 0.0 && std::isfinite(pumps.omega_II) &&
              pumps.omega_II >= 0.0,
          "simulate_conversion: pump Rabi frequencies must be finite and >= 0");

  const Grid g = make_grid(cell, signal, numerics);
  const double outside = signal.energy_outside(0.0, g.window);
  if (outside > 1e-3) {
    std::ostringstream os;
    os << "simulate_conversion: simulation window [0, " << g.window << "] s misses " << outside
       << " of the input pulse energy (> 0.1%)";
    throw FieldError(os.str());
  }

  const Couplings cpl = Couplings::from_cell(cell, numerics.dipoles);
  const Matrix4c rho_ss = pump_steady_state(pumps, decays).matrix();

  ConversionResult res = numerics.frame == Frame::retarded
                             ? run_retarded(g, cpl, pumps, signal, decays, rho_ss)
                             : run_lab(g, cell, cpl, pumps, signal, decays, rho_ss);
  finish_result(res, g.dt, cell.length_m);
  return res;
}

Eigen::MatrixXd efficiency_map(std::span<const double> grid_I, std::span<const double> grid_II,
                               const CellParams& cell, const PumpConfig& pumps,
                               const PulseSpec& signal, const DecaySet& decays,
                               const NumericsConfig& numerics, unsigned threads) {
  require(!grid_I.empty() && !grid_II.empty(), "efficiency_map: detuning grids must be non-empty");
  const auto rows = static_cast<Eigen::Index>(grid_I.size());
  const auto cols = static_cast<Eigen::Index>(grid_II.size());
  Eigen::MatrixXd map(rows, cols);
  parallel_for(grid_I.size() * grid_II.size(), threads, [&](std::size_t k) {
    const std::size_t r = k / grid_II.size();
    const std::size_t c = k % grid_II.size();
    PumpConfig p = pumps;
    p.detunings.delta_I = grid_I[r];
    p.detunings.delta_II = grid_II[c];
    map(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
        simulate_conversion(cell, p, signal, decays, numerics).efficiency;
  });
  return map;
}

std::vector<double> signal_detuning_scan(std::span<const double> grid_s, const CellParams& cell,
                                         const PumpConfig& pumps, const PulseSpec& signal,
                                         const DecaySet& decays, const NumericsConfig& numerics,
                                         unsigned threads) {
  require(!grid_s.empty(), "signal_detuning_scan: grid must be non-empty");
  std::vector<double> out(grid_s.size());
  parallel_for(grid_s.size(), threads, [&](std::size_t k) {
    PumpConfig p = pumps;
    p.detunings.delta_s = grid_s[k];
    out[k] = simulate_conversion(cell, p, signal, decays, numerics).efficiency;
  });
  return out;
}

std::vector<OodrPoint> oodr_spectrum(std::span<const double> delta_II_scan, double omega_I,
                                     double omega_II, double delta_I, const DecaySet& decays) {
  require(std::isfinite(omega_I) && omega_I >= 0.0, "oodr_spectrum: pump I Rabi must be >= 0");
  require(std::isfinite(omega_II) && omega_II >= 0.0, "oodr_spectrum: pump II Rabi must be >= 0");
  std::vector<OodrPoint> out;
  out.reserve(delta_II_scan.size());
  for (double d2 : delta_II_scan) {
    PumpConfig p{omega_I, omega_II, atomic::DetuningSet{0.0, delta_I, d2}};
    const auto rho = pump_steady_state(p, decays);
    out.push_back({d2, rho(Level::upper, Level::pumped).imag()});
  }
  return out;
}

double peak_fwhm(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 3, "peak_fwhm: need matching arrays of size >= 3");
  const auto it = std::max_element(y.begin(), y.end());
  const auto ip = static_cast<std::size_t>(it - y.begin());
  const double half = 0.5 * *it;
  if (!(half > 0.0)) return 0.0;
  std::size_t l = ip;
  while (l > 0 && y[l] > half) --l;
  std::size_t r = ip;
  while (r + 1 < y.size() && y[r] > half) ++r;
  if (y[l] > half || y[r] > half) return 0.0;
  const auto cross = [&](std::size_t a, std::size_t b) {
    return x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a]);
  };
  return cross(r - 1, r) - cross(l, l + 1);
}

}  // namespace qlink::field
