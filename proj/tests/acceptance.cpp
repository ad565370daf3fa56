// Acceptance checks, one PASS/FAIL line per criterion.
//   acceptance               run all
//   acceptance 3 5           run a subset
//   acceptance --write-golden   regenerate tests/data/map_golden.csv

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qlink/atomic_core.hpp"
#include "qlink/constants.hpp"
#include "qlink/field_propagation.hpp"
#include "qlink/io.hpp"
#include "qlink/optical_network.hpp"
#include "qlink/polarization.hpp"
#include "qlink/runner.hpp"
#include "qlink/scenario.hpp"

using namespace qlink;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = QLINK_SOURCE_DIR;
const fs::path kGolden = kSource / "tests" / "data" / "map_golden.csv";

struct Report {
  std::vector<std::string> lines;
  bool ok = true;
  void check(bool cond, const std::string& what) {
    lines.push_back(std::string(cond ? "    ok   " : "    FAIL ") + what);
    ok = ok && cond;
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Replace the line setting `key`, or append one.
std::string with(std::string text, const std::string& key, const std::string& value) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  bool done = false;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    std::string k = eq == std::string::npos ? "" : line.substr(0, eq);
    while (!k.empty() && k.back() == ' ') k.pop_back();
    if (k == key) {
      out << key << " = " << value << '\n';
      done = true;
    } else {
      out << line << '\n';
    }
  }
  if (!done) out << key << " = " << value << '\n';
  return out.str();
}

cli::Scenario scenario(const std::string& name) {
  const auto p = kSource / "scenarios" / (name + ".conf");
  return cli::parse_scenario_text(slurp(p), p);
}

// 1 ---------------------------------------------------------------------------

void master_equation(Report& r) {
  using namespace atomic;
  const double omega = mhz_to_rad_s(1.0), G = mhz_to_rad_s(6.0);

  RabiSet rabi;
  rabi.omega_s = omega;
  const auto H = build_rotating_hamiltonian(rabi, DetuningSet{});
  const auto rt = evolve(DensityMatrix4{}, H, DecaySet::none(), 3e-6, 1e-10, {50});
  double worst = 0.0;
  for (std::size_t i = 0; i < rt.times.size(); ++i) {
    const double want = std::pow(std::sin(omega * rt.times[i]), 2);
    if (want < 1e-3) continue;
    worst = std::max(worst, std::abs(rt.states[i].population(Level::intermediate) / want - 1.0));
  }
  r.check(worst < 1e-6, fmt("Rabi sin^2(Omega t): max relative error %.2e (< 1e-6)", worst));

  DecaySet d;
  d.decays = {{Level::intermediate, Level::ground, G}};
  const auto dt = evolve(DensityMatrix4::pure(Level::intermediate), Matrix4c::Zero(), d, 500e-9, 1e-11, {100});
  worst = 0.0;
  for (std::size_t i = 0; i < dt.times.size(); ++i)
    worst = std::max(worst, std::abs(dt.states[i].population(Level::intermediate) /
                                         std::exp(-G * dt.times[i]) - 1.0));
  r.check(worst < 1e-6, fmt("decay e^{-G t} over 3 lifetimes: max relative error %.2e (< 1e-6)", worst));

  // Full diamond drive with all decays, 10^6 steps.
  const auto decays = DecaySet::rubidium_default();
  const auto H4 = build_rotating_hamiltonian(mhz_to_rad_s(20.0), mhz_to_rad_s(5.0), {mhz_to_rad_s(0.5), 0.2},
                                             {0.0, mhz_to_rad_s(0.3)}, DetuningSet{1e7, -2e7, 3e7});
  Matrix4c rho = DensityMatrix4{}.matrix();
  double tr = 0.0, herm = 0.0, mineig = 1.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 1; k <= 1000000; ++k) {
    rk4_step(rho, H4, decays, 1e-11);
    if (k % 1000 == 0) {
      const DensityMatrix4 s(rho);
      tr = std::max(tr, std::abs(s.trace() - 1.0));
      herm = std::max(herm, s.hermiticity_error());
      mineig = std::min(mineig, s.min_eigenvalue());
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.check(tr < 1e-9, fmt("10^6 RK4 steps: max |tr - 1| = %.2e (< 1e-9)", tr));
  r.check(herm < 1e-12, fmt("10^6 RK4 steps: max |rho - rho^+| = %.2e (< 1e-12)", herm));
  r.check(mineig > -1e-9, fmt("10^6 RK4 steps: min eigenvalue %.2e (>= -1e-9)", mineig));
  r.check(secs < 10.0, fmt("10^6 steps in %.2f s (< 10 s)", secs));
}

// 2 ---------------------------------------------------------------------------

void mz_dip(Report& r) {
  const auto sc = scenario("mz");
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = cli::simulate_mz(*sc.mz, sc.seed, sc.threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& f = out.fit;
  const double events = double(out.port_E.size() + out.port_F.size());
  r.check(std::abs(out.visibility_config - 0.9) < 1e-12, fmt("configured V = %.4f", out.visibility_config));
  r.check(std::abs(out.relative_tau_s - 1e-3) < 1e-15, fmt("relative tau_phi = %.3f ms", out.relative_tau_s * 1e3));
  r.check(f.converged, "fit converged");
  r.check(std::abs(f.g2_zero - 0.595) <= 0.02,
          fmt("fitted G2(0) = %.4f +- %.4f (0.595 +- 0.02)", f.g2_zero, f.baseline * f.depth_sigma));
  r.check(std::abs(f.baseline - 1.0) <= 0.02, fmt("fitted baseline = %.4f (1.00 +- 0.02)", f.baseline));
  r.check(std::abs(f.width_s / out.relative_tau_s - 1.0) <= 0.2,
          fmt("fitted width = %.3f ms (1 ms +- 20%%)", f.width_s * 1e3));
  r.check(events >= 1e5, fmt("%.0f detection events (>= 1e5)", events));
  r.check(secs < 120.0, fmt("runtime %.2f s (< 120 s)", secs));
}

// 3 ---------------------------------------------------------------------------

void hom(Report& r) {
  const auto base = slurp(kSource / "scenarios" / "hom.conf");
  auto run_at = [&](double overlap) {
    const auto sc = cli::parse_scenario_text(with(base, "overlap", io::format_double(overlap)));
    return cli::simulate_hom(*sc.hom, sc.seed, sc.threads);
  };
  const auto a = run_at(1.0);
  r.check(std::abs(a.mean_photons_a / a.mean_photons_b - 1.0) < 1e-12, "balanced inputs");
  r.check(std::abs(a.fit.visibility - 0.50) <= 0.02,
          fmt("overlap 1: fitted V = %.4f +- %.4f (0.50 +- 0.02)", a.fit.visibility, a.fit.visibility_sigma));
  r.check(std::abs(a.roi_visibility - 0.50) <= 0.02,
          fmt("overlap 1: 100 ns window coincidences give V = %.4f", a.roi_visibility));

  // Overlap for V = 0.38 from V = 2 o^2 na nb / (na + nb)^2 = o^2 / 2.
  const double o38 = std::sqrt(2.0 * 0.38);
  const auto b = run_at(o38);
  r.check(std::abs(b.fit.visibility - 0.38) <= 0.02,
          fmt("overlap %.4f: fitted V = %.4f +- %.4f (0.38 +- 0.02)", o38, b.fit.visibility,
              b.fit.visibility_sigma));

  bool mono = true;
  double prev = -1.0;
  for (int k = 0; k <= 20; ++k) {
    const double v = 1.0 - network::hom_g2_analytic(1.0, 1.0, 0.05 * k);
    mono = mono && v > prev;
    prev = v;
  }
  const auto c = run_at(0.6);
  const bool mc_mono = c.fit.visibility < b.fit.visibility && b.fit.visibility < a.fit.visibility;
  r.check(mono && mc_mono, fmt("overlap -> V monotone; Monte Carlo at 0.6, %.4f, 1: %.3f < %.3f < ...",
                               o38, c.fit.visibility, b.fit.visibility));
}

// 4 ---------------------------------------------------------------------------

void photon_budget(Report& r) {
  for (auto [db, want] : {std::pair{23.0, 0.100}, std::pair{26.0, 0.050}}) {
    network::FiberLink l;
    l.loss_db = db;
    l.length_km = 50.0;
    network::FiberChannel ch(l);
    Rng rng(1);
    const auto out = ch.transmit({std::sqrt(20.0), pol::Jones(1.0, 0.0)}, 0.0, rng);
    r.check(std::abs(out.mean_photons() - want) <= 1e-3,
            fmt("|alpha|^2 = 20 through %.0f dB -> %.5f (%.3f +- 1e-3)", db, out.mean_photons(), want));
  }
}

// 5 ---------------------------------------------------------------------------

struct MapPoint {
  double dI, dII, eff;
};

std::vector<MapPoint> compute_map(Report* r) {
  const auto sc = scenario("map");
  const auto& s = *sc.conversion;
  std::vector<MapPoint> pts;
  bool flux_ok = true;
  double worst = 0.0;
  for (double dI : sc.map->delta_I)
    for (double dII : sc.map->delta_II) {
      auto pumps = s.pumps;
      pumps.detunings.delta_I = dI;
      pumps.detunings.delta_II = dII;
      const auto res = field::simulate_conversion(s.cell, pumps, s.signal, s.decays, s.numerics);
      const double ratio = (res.output_signal_flux + res.output_telecom_flux) / res.input_flux;
      worst = std::max(worst, ratio);
      flux_ok = flux_ok && ratio <= 1.0 && res.efficiency >= 0.0;
      pts.push_back({dI, dII, res.efficiency});
    }
  if (r)
    r->check(flux_ok, fmt("flux inequality on all %.0f map runs: max (out_s + out_t) / in = %.4f",
                          double(pts.size()), worst));
  return pts;
}

void write_golden() {
  const auto pts = compute_map(nullptr);
  fs::create_directories(kGolden.parent_path());
  std::ofstream out(kGolden);
  out << "delta_I_mhz,delta_II_mhz,efficiency\n";
  for (const auto& p : pts)
    out << io::format_double(rad_s_to_mhz(p.dI)) << ',' << io::format_double(rad_s_to_mhz(p.dII)) << ','
        << io::format_double(p.eff) << '\n';
  std::cout << "wrote " << kGolden << " (" << pts.size() << " points)\n";
}

void conversion(Report& r) {
  const auto sc = scenario("conversion");
  const auto& s = *sc.conversion;

  auto pumps = s.pumps;
  pumps.omega_I = pumps.omega_II = 0.0;
  const auto null = field::simulate_conversion(s.cell, pumps, s.signal, s.decays, s.numerics);
  pumps = s.pumps;
  pumps.omega_II = 0.0;
  const auto null2 = field::simulate_conversion(s.cell, pumps, s.signal, s.decays, s.numerics);
  r.check(null.efficiency == 0.0 && null2.efficiency == 0.0,
          fmt("pumps off: efficiency %g; pump II off: %g (exactly 0)", null.efficiency, null2.efficiency));

  // Grid refinement on the 7 cm reference cell.
  std::vector<double> eff;
  for (auto [nz, dt] : {std::pair<std::size_t, double>{25, 2e-10}, {50, 1e-10}, {100, 5e-11}}) {
    auto num = s.numerics;
    num.n_z = nz;
    num.dt_s = dt;
    eff.push_back(field::simulate_conversion(s.cell, s.pumps, s.signal, s.decays, num).efficiency);
  }
  const double c1 = std::abs(eff[0] / eff[2] - 1.0), c2 = std::abs(eff[1] / eff[2] - 1.0);
  r.check(std::abs(s.cell.length_m - 0.07) < 1e-12 && c1 < 0.01 && c2 < 0.01,
          fmt("grid convergence (25, 50 vs 100 cells): %.2e, %.2e (< 1%%); efficiency %.4e", c1, c2, eff[2]));

  const auto pts = compute_map(&r);
  const auto msc = scenario("map");
  const std::size_t nI = msc.map->delta_I.size(), nII = msc.map->delta_II.size();
  auto at = [&](std::size_t i, std::size_t j) { return pts[i * nII + j].eff; };

  // Ridge along delta_II = -delta_I away from delta_I = 0, plus the
  // delta_I = 0 row.
  bool ridge = true, row0 = true;
  double contrast = 1e300;
  std::size_t i0 = nI;
  for (std::size_t i = 0; i < nI; ++i) {
    if (std::abs(msc.map->delta_I[i]) < 1.0) {
      i0 = i;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < nII; ++j)
      if (at(i, j) > at(i, best)) best = j;
    ridge = ridge && std::abs(msc.map->delta_II[best] + msc.map->delta_I[i]) < 1.0;
    std::vector<double> off;
    for (std::size_t j = 0; j < nII; ++j)
      if (j != best) off.push_back(at(i, j));
    std::sort(off.begin(), off.end());
    contrast = std::min(contrast, at(i, best) / off.back());
  }
  double off_ridge_max = 0.0;
  for (std::size_t i = 0; i < nI; ++i)
    for (std::size_t j = 0; j < nII; ++j)
      if (i != i0 && std::abs(msc.map->delta_II[j] + msc.map->delta_I[i]) > 1.0)
        off_ridge_max = std::max(off_ridge_max, at(i, j));
  if (i0 < nI)
    for (std::size_t j = 0; j < nII; ++j) row0 = row0 && at(i0, j) > off_ridge_max;
  else
    row0 = false;
  r.check(ridge && contrast > 10.0,
          fmt("map: every delta_I != 0 row peaks at delta_II = -delta_I, ridge/next >= %.1f (> 10)", contrast));
  r.check(row0, "map: the whole delta_I = 0 row lies above every off-ridge point");
  double asym = 0.0;
  for (std::size_t i = 0; i < nI; ++i)
    for (std::size_t j = 0; j < nII; ++j)
      asym = std::max(asym, std::abs(at(i, j) / at(nI - 1 - i, nII - 1 - j) - 1.0));
  r.check(asym < 1e-9, fmt("map: point symmetry under (dI, dII) -> (-dI, -dII), %.1e", asym));

  // Regression against the stored map.
  std::ifstream g(kGolden);
  std::string line;
  std::getline(g, line);
  std::size_t n = 0;
  double dev = 0.0;
  bool grid_ok = true;
  while (std::getline(g, line)) {
    double a = 0, b = 0, e = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &a, &b, &e) != 3 || n >= pts.size()) {
      grid_ok = false;
      break;
    }
    grid_ok = grid_ok && std::abs(rad_s_to_mhz(pts[n].dI) - a) < 1e-9 && std::abs(rad_s_to_mhz(pts[n].dII) - b) < 1e-9;
    dev = std::max(dev, std::abs(pts[n].eff / e - 1.0));
    ++n;
  }
  r.check(grid_ok && n == pts.size() && dev < 1e-6,
          fmt("map matches golden file (%.0f points), max relative deviation %.1e (< 1e-6)", double(n), dev));
}

// 6 ---------------------------------------------------------------------------

void polarization(Report& r) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sc = scenario("polcomp");
  const auto& s = *sc.polcomp;
  const auto out = cli::simulate_polcomp(s, sc.seed);
  const auto& rep = out.schedule;
  r.check(std::abs(*s.drift_window_s - 180.0) < 1e-9 && std::abs(out.predicted_window_s / 180.0 - 1.0) < 0.05,
          fmt("drift rate fitted to a 180 s window: %.4f rad/sqrt(s), analytic window %.1f s", out.drift_rate,
              out.predicted_window_s));
  std::size_t in_band = 0;
  for (double w : rep.drift_windows_s) in_band += w >= 120.0 && w <= 300.0;
  r.check(rep.mean_drift_window_s >= 120.0 && rep.mean_drift_window_s <= 300.0,
          fmt("mean free-drift window %.1f s (2-5 min); %.0f%% of windows in band", rep.mean_drift_window_s,
              100.0 * double(in_band) / double(std::max<std::size_t>(1, rep.drift_windows_s.size()))));
  const double v = std::sqrt(rep.min_operating_score);
  r.check(std::abs(v - 0.88) <= 0.02,
          fmt("lowest operating score %.4f -> balanced-arm visibility %.4f (0.88 +- 0.02)", rep.min_operating_score, v));
  r.check(rep.failed_cycles == 0, fmt("%.0f cycles, %.0f failed", double(rep.cycles.size()), double(rep.failed_cycles)));

  // Convergence from random misalignment, drift off.
  auto cfg = s.controller;
  cfg.freeze_drift = true;
  int ok = 0;
  double evals = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, "acceptance/convergence"));
    pol::PolarizationChannel ch;
    ch.input = s.target;
    ch.fiber = pol::rotation({3 * rng.normal(), 3 * rng.normal(), 3 * rng.normal()});
    const auto c = pol::run_compensation_cycle(ch, s.target, cfg, rng);
    if (c.final_score >= cfg.target_score && c.iterations <= 200) ++ok;
    evals += double(c.iterations);
  }
  r.check(ok >= 95, fmt("%.0f/100 seeds reach score %.3f within 200 evaluations (mean %.1f)", ok,
                        cfg.target_score, evals / 100.0));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.check(secs < 60.0, fmt("runtime %.2f s (< 60 s)", secs));
}

// 7 ---------------------------------------------------------------------------

void determinism(Report& r) {
  const fs::path root = fs::temp_directory_path() / "qlink_acceptance_det";
  fs::remove_all(root);
  std::vector<std::pair<std::string, std::string>> cases;
  for (const char* n : {"conversion", "oodr", "mz", "hom", "polcomp"})
    cases.emplace_back(n, slurp(kSource / "scenarios" / (std::string(n) + ".conf")));
  auto small_map = slurp(kSource / "scenarios" / "map.conf");
  small_map = with(with(small_map, "map.points_I", "3"), "map.points_II", "3");
  cases.emplace_back("map", small_map);
  for (const auto& [name, text] : cases) {
    const auto sc = cli::parse_scenario_text(text);
    const auto a = cli::run(sc, {root / (name + "_a"), {}, 1u});
    const auto b = cli::run(sc, {root / (name + "_b"), {}, 3u});
    bool same = a.outputs.size() == b.outputs.size() && !a.outputs.empty();
    for (std::size_t i = 0; same && i < a.outputs.size(); ++i)
      same = a.outputs[i].name == b.outputs[i].name && a.outputs[i].sha256 == b.outputs[i].sha256 &&
             a.outputs[i].sha256 == io::sha256_file(root / (name + "_b") / b.outputs[i].name);
    r.check(same, name + ": " + std::to_string(a.outputs.size()) +
                      " output files bit-identical across reruns (1 and 3 threads)");
  }
  fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--write-golden") {
      write_golden();
      return 0;
    }
    only.insert(std::stoi(a));
  }
  const std::vector<std::pair<std::string, std::function<void(Report&)>>> criteria = {
      {"master-equation fidelity", master_equation},
      {"MZ G2 dip", mz_dip},
      {"HOM bound and V = 0.38 point", hom},
      {"photon budget", photon_budget},
      {"conversion physics", conversion},
      {"polarization loop", polarization},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Report rep;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[k].second(rep);
    } catch (const std::exception& e) {
      rep.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (rep.ok ? "PASS" : "FAIL") << " [" << id << "] " << criteria[k].first << " ("
              << fmt("%.1f s", secs) << ")\n";
    for (const auto& l : rep.lines) std::cout << l << '\n';
    std::cout.flush();
    failed += !rep.ok;
  }
  return failed == 0 ? 0 : 1;
}
