#include <doctest.h>

#include <cmath>
#include <vector>

#include "qlink/constants.hpp"
#include "qlink/field_propagation.hpp"

using namespace qlink;
using namespace qlink::field;

namespace {

struct Ref {
  CellParams cell;
  PumpConfig pumps{mhz_to_rad_s(20.0), mhz_to_rad_s(0.5), {}};
  PulseSpec signal{PulseShape::gaussian, mhz_to_rad_s(0.01), 150e-9, 50e-9};
  atomic::DecaySet decays = atomic::DecaySet::rubidium_default();
  NumericsConfig num;
  Ref() {
    num.n_z = 25;
    num.dt_s = 2e-10;
    num.window_s = 400e-9;
  }
  ConversionResult run() const { return simulate_conversion(cell, pumps, signal, decays, num); }
};

}  // namespace

TEST_CASE("no pumps, or no second pump: not a single telecom photon") {
  Ref r;
  r.pumps.omega_I = r.pumps.omega_II = 0.0;
  auto a = r.run();
  CHECK(a.efficiency == 0.0);
  CHECK(a.output_telecom_flux == 0.0);
  r.pumps.omega_I = mhz_to_rad_s(20.0);
  auto b = r.run();
  CHECK(b.efficiency == 0.0);
  for (auto z : b.output_telecom) CHECK(z == Complex(0.0, 0.0));
}

TEST_CASE("with no atoms the signal passes unchanged") {
  Ref r;
  r.cell.atomic_density_m3 = 1e-30;
  const auto res = r.run();
  CHECK(res.output_signal_flux == doctest::Approx(res.input_flux).epsilon(1e-9));
}

TEST_CASE("output never exceeds the input flux") {
  Ref r;
  for (double dI : {0.0, mhz_to_rad_s(40.0)})
    for (double dII : {0.0, mhz_to_rad_s(-40.0)}) {
      r.pumps.detunings.delta_I = dI;
      r.pumps.detunings.delta_II = dII;
      const auto res = r.run();
      CHECK(res.output_signal_flux + res.output_telecom_flux <= res.input_flux);
      CHECK(res.efficiency > 0.0);
    }
}

TEST_CASE("efficiency is converged in the grid") {
  Ref r;
  const double coarse = r.run().efficiency;
  r.num.n_z = 50;
  r.num.dt_s = 1e-10;
  const double fine = r.run().efficiency;
  CHECK(std::abs(coarse / fine - 1.0) < 1e-3);
}

TEST_CASE("weak-signal linearity: efficiency independent of the input amplitude") {
  Ref r;
  const double e1 = r.run().efficiency;
  r.signal.peak_rabi *= 0.5;
  const double e2 = r.run().efficiency;
  CHECK(e1 == doctest::Approx(e2).epsilon(1e-3));
}

TEST_CASE("lab and retarded frames agree") {
  Ref r;
  r.num.n_z = 20;
  const double ret = r.run().efficiency;
  r.num.frame = Frame::lab;
  const double lab = r.run().efficiency;
  CHECK(std::abs(lab / ret - 1.0) < 0.02);
}

TEST_CASE("empty-cell lab-frame step is pure transport at Courant number 1") {
  std::vector<double> z(11);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = 0.01 * static_cast<double>(i);
  auto f = FieldEnvelopePair::zeros(z);
  for (Eigen::Index i = 0; i < f.psi_s.size(); ++i) f.psi_s(i) = Complex(double(i), -double(i));
  std::vector<atomic::Matrix4c> rho(z.size(), atomic::DensityMatrix4{}.matrix());
  const double dz = 0.01, dt = dz / PhysicalConstants::c;
  const auto g = propagation_step(f, rho, dt, dz, Couplings{}, Frame::lab, Complex(7.0, 0.0));
  CHECK(g.psi_s(0) == Complex(7.0, 0.0));
  for (Eigen::Index i = 1; i < g.psi_s.size(); ++i) CHECK(std::abs(g.psi_s(i) - f.psi_s(i - 1)) < 1e-12);
}

TEST_CASE("a 1x1 map is the single run, bit for bit; threads do not change a map") {
  Ref r;
  r.num.n_z = 10;
  const std::vector<double> gI{mhz_to_rad_s(40.0)}, gII{mhz_to_rad_s(-40.0)};
  const auto m = efficiency_map(gI, gII, r.cell, r.pumps, r.signal, r.decays, r.num);
  r.pumps.detunings.delta_I = gI[0];
  r.pumps.detunings.delta_II = gII[0];
  CHECK(m(0, 0) == r.run().efficiency);

  const std::vector<double> g2{0.0, mhz_to_rad_s(60.0)};
  const auto a = efficiency_map(g2, g2, r.cell, r.pumps, r.signal, r.decays, r.num, 1);
  const auto b = efficiency_map(g2, g2, r.cell, r.pumps, r.signal, r.decays, r.num, 3);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("weak-pump double-resonance line sits at two-photon resonance with the two-photon width") {
  const auto decays = atomic::DecaySet::rubidium_default();
  std::vector<double> scan;
  for (int i = -300; i <= 300; ++i) scan.push_back(mhz_to_rad_s(0.1 * i));
  const auto s = oodr_spectrum(scan, mhz_to_rad_s(0.05), mhz_to_rad_s(0.05), 0.0, decays);
  std::vector<double> x, y;
  for (const auto& p : s) {
    x.push_back(p.delta_II);
    y.push_back(p.absorption);
  }
  const auto peak = std::max_element(y.begin(), y.end()) - y.begin();
  CHECK(x[static_cast<std::size_t>(peak)] == doctest::Approx(0.0));
  // Stepwise and two-photon paths add up to a single line with the width of
  // the 1-4 coherence, i.e. the decay rate of |4> (the ground state is stable).
  // Cross-checked against a separate dense Liouvillian solve: 3.504 MHz.
  const double want = decays.total_rate(atomic::Level::upper);
  CHECK(peak_fwhm(x, y) == doctest::Approx(want).epsilon(0.01));
}

TEST_CASE("a strong first pump splits the double-resonance line") {
  const auto decays = atomic::DecaySet::rubidium_default();
  std::vector<double> scan;
  for (int i = -200; i <= 200; ++i) scan.push_back(mhz_to_rad_s(0.25 * i));
  const auto s = oodr_spectrum(scan, mhz_to_rad_s(20.0), mhz_to_rad_s(0.1), 0.0, decays);
  const double center = s[200].absorption;
  double side = 0.0;
  for (const auto& p : s) side = std::max(side, p.absorption);
  CHECK(side > 2.0 * center);
}

TEST_CASE("invalid configurations throw") {
  CellParams c;
  c.length_m = -1.0;
  CHECK_THROWS_AS(c.validate(), FieldError);
  PulseSpec p{PulseShape::gaussian, 1e6, 0.0, 0.0};
  CHECK_THROWS(p.validate());
  NumericsConfig n;
  n.n_z = 1;
  CHECK_THROWS(n.validate());
}
