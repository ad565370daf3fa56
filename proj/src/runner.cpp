#include "qlink/runner.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <thread>

#include <json.hpp>

#include "qlink/field_propagation.hpp"
#include "qlink/io.hpp"
#include "qlink/optical_network.hpp"
#include "qlink/phase_noise.hpp"
#include "qlink/rng.hpp"

#ifndef QLINK_VERSION
#define QLINK_VERSION "dev"
#endif

namespace qlink::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Header = std::vector<std::pair<std::string, std::string>>;

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const RunError&) {
    throw;
  } catch (const std::exception& e) {
    throw RunError(name, e.what());
  }
}

// All-pairs histogram with `a` cut into contiguous slices, one per worker,
// merged in slice order.
detect::G2Histogram parallel_g2(const detect::DetectionEventStream& a,
                                const detect::DetectionEventStream& b, const G2Setup& g,
                                double duration_s, unsigned threads) {
  threads = std::max(1u, std::min<unsigned>(threads, 64));
  std::vector<detect::G2Accumulator> parts(threads, detect::G2Accumulator(g.bin_width_s, g.max_dt_s));
  const std::size_t n = a.size();
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < threads; ++k) {
    const std::size_t lo = n * k / threads, hi = n * (k + 1) / threads;
    pool.emplace_back([&, k, lo, hi] { parts[k].add_range(a, b, lo, hi); });
  }
  for (auto& t : pool) t.join();
  for (unsigned k = 1; k < threads; ++k) parts[0].merge(parts[k]);
  return parts[0].finish(duration_s, g.baseline_fraction);
}

std::pair<detect::DetectionEventStream, detect::DetectionEventStream> sample_pair(
    const detect::RateFunction& rate_E, const detect::RateFunction& rate_F, double bound,
    const detect::DetectorModel& det, double duration, std::uint64_t seed, const char* tag) {
  detect::DetectionEventStream E, F;
  Rng rE(derive_seed(seed, std::string(tag) + "/detector_E"));
  Rng rF(derive_seed(seed, std::string(tag) + "/detector_F"));
  std::exception_ptr err;
  std::thread tf([&] {
    try {
      F = detect::sample_events(rate_F, bound, det, duration, 1, rF);
    } catch (...) {
      err = std::current_exception();
    }
  });
  std::exception_ptr err_E;
  try {
    E = detect::sample_events(rate_E, bound, det, duration, 0, rE);
  } catch (...) {
    err_E = std::current_exception();
  }
  tf.join();
  if (err_E) std::rethrow_exception(err_E);
  if (err) std::rethrow_exception(err);
  return {std::move(E), std::move(F)};
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json fit_json(const detect::DipFit& f) {
  return {{"visibility", f.visibility},   {"visibility_sigma", f.visibility_sigma},
          {"depth", f.depth},             {"depth_sigma", f.depth_sigma},
          {"width_s", f.width_s},         {"width_sigma_s", f.width_sigma},
          {"baseline", f.baseline},       {"baseline_sigma", f.baseline_sigma},
          {"g2_zero", f.g2_zero},         {"chi2_per_dof", f.chi2_per_dof},
          {"converged", f.converged}};
}

class Outputs {
 public:
  Outputs(fs::path dir, Header header) : dir_(std::move(dir)), header_(std::move(header)) {}

  fs::path path(const std::string& name) {
    for (const auto& n : names_)
      if (n == name) throw RunError("output", "file written twice: " + name);
    names_.push_back(name);
    return dir_ / name;
  }
  const Header& header() const { return header_; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  fs::path dir_;
  Header header_;
  std::vector<std::string> names_;
};

void write_events(Outputs& out, const detect::DetectionEventStream& E,
                  const detect::DetectionEventStream& F) {
  const std::vector<detect::DetectionEventStream> streams{E, F};
  io::write_events_binary(out.path("events.bin"), streams);
  io::write_events_csv(out.path("events.csv"), streams, out.header());
}

json run_conversion(const Scenario& sc, Outputs& out) {
  const auto& s = *sc.conversion;
  const auto r = stage("conversion", [&] {
    return field::simulate_conversion(s.cell, s.pumps, s.signal, s.decays, s.numerics);
  });
  stage("output", [&] {
    io::CsvWriter w(out.path("conversion_trace.csv"), out.header(),
                    {"t_s", "signal_in_abs2", "signal_out_abs2", "telecom_out_abs2", "telecom_out_re",
                     "telecom_out_im"});
    for (std::size_t i = 0; i < r.times.size(); ++i) {
      w << r.times[i] << std::norm(r.input_signal[i]) << std::norm(r.output_signal[i])
        << std::norm(r.output_telecom[i]) << r.output_telecom[i].real() << r.output_telecom[i].imag();
      w.end_row();
    }
    w.close();
    io::CsvWriter e(out.path("efficiency.csv"), out.header(),
                    {"delta_s_rad_s", "delta_I_rad_s", "delta_II_rad_s", "efficiency", "peak_delay_s",
                     "input_flux", "output_signal_flux", "output_telecom_flux"});
    const auto& d = s.pumps.detunings;
    e << d.delta_s << d.delta_I << d.delta_II << r.efficiency << r.peak_delay_s << r.input_flux
      << r.output_signal_flux << r.output_telecom_flux;
    e.end_row();
    e.close();
  });
  return {{"efficiency", r.efficiency},
          {"peak_delay_s", r.peak_delay_s},
          {"input_flux", r.input_flux},
          {"output_signal_flux", r.output_signal_flux},
          {"output_telecom_flux", r.output_telecom_flux},
          {"warnings", r.warnings}};
}

json run_map(const Scenario& sc, Outputs& out) {
  const auto& s = *sc.conversion;
  const auto& g = *sc.map;
  const auto m = stage("conversion_map", [&] {
    return field::efficiency_map(g.delta_I, g.delta_II, s.cell, s.pumps, s.signal, s.decays,
                                 s.numerics, sc.threads);
  });
  stage("output", [&] {
    io::CsvWriter w(out.path("map.csv"), out.header(),
                    {"delta_I_rad_s", "delta_II_rad_s", "efficiency"});
    for (std::size_t i = 0; i < g.delta_I.size(); ++i)
      for (std::size_t j = 0; j < g.delta_II.size(); ++j) {
        w << g.delta_I[i] << g.delta_II[j] << m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        w.end_row();
      }
    w.close();
  });
  Eigen::Index bi = 0, bj = 0;
  const double best = m.maxCoeff(&bi, &bj);
  return {{"max_efficiency", best},
          {"argmax_delta_I_rad_s", g.delta_I[static_cast<std::size_t>(bi)]},
          {"argmax_delta_II_rad_s", g.delta_II[static_cast<std::size_t>(bj)]},
          {"points", m.size()}};
}

json run_oodr(const Scenario& sc, Outputs& out) {
  const auto& o = *sc.oodr;
  const auto spec = stage("oodr", [&] {
    return field::oodr_spectrum(o.delta_II, o.omega_I, o.omega_II, o.delta_I, o.decays);
  });
  std::vector<double> x, y;
  for (const auto& p : spec) {
    x.push_back(p.delta_II);
    y.push_back(p.absorption);
  }
  stage("output", [&] {
    io::CsvWriter w(out.path("oodr.csv"), out.header(), {"delta_II_rad_s", "absorption"});
    for (const auto& p : spec) {
      w << p.delta_II << p.absorption;
      w.end_row();
    }
    w.close();
  });
  const auto peak = std::max_element(y.begin(), y.end()) - y.begin();
  return {{"fwhm_rad_s", field::peak_fwhm(x, y)},
          {"peak_delta_II_rad_s", x[static_cast<std::size_t>(peak)]},
          {"peak_absorption", y[static_cast<std::size_t>(peak)]}};
}

json run_mz(const Scenario& sc, Outputs& out) {
  const auto r = simulate_mz(*sc.mz, sc.seed, sc.threads);
  stage("output", [&] {
    if (sc.mz->write_events) write_events(out, r.port_E, r.port_F);
    io::write_g2_csv(out.path("g2.csv"), r.hist, out.header());
  });
  return {{"visibility_config", r.visibility_config},
          {"relative_tau_s", r.relative_tau_s},
          {"events_E", r.port_E.size()},
          {"events_F", r.port_F.size()},
          {"baseline_mean", r.hist.baseline_mean()},
          {"fit", fit_json(r.fit)}};
}

json run_hom(const Scenario& sc, Outputs& out) {
  const auto r = simulate_hom(*sc.hom, sc.seed, sc.threads);
  stage("output", [&] {
    if (sc.hom->write_events) write_events(out, r.port_E, r.port_F);
    io::write_g2_csv(out.path("g2.csv"), r.hist, out.header());
  });
  return {{"mean_photons_a", r.mean_photons_a},
          {"mean_photons_b", r.mean_photons_b},
          {"g2_zero_analytic", r.g2_zero_analytic},
          {"events_E", r.port_E.size()},
          {"events_F", r.port_F.size()},
          {"roi_coincidences", r.roi_coincidences},
          {"roi_accidentals", r.roi_accidentals},
          {"roi_visibility", r.roi_visibility},
          {"fit", fit_json(r.fit)}};
}

json run_polcomp(const Scenario& sc, Outputs& out) {
  const auto r = simulate_polcomp(*sc.polcomp, sc.seed);
  const auto& rep = r.schedule;
  stage("output", [&] {
    io::CsvWriter w(out.path("trace.csv"), out.header(),
                    {"time_s", "s1", "s2", "s3", "score", "phase"});
    for (const auto& t : rep.trace) {
      w << t.time_s << t.stokes[0] << t.stokes[1] << t.stokes[2] << t.score
        << std::string(t.phase == pol::TracePhase::drift ? "drift" : "calibrating");
      w.end_row();
    }
    w.close();
    io::CsvWriter c(out.path("cycles.csv"), out.header(),
                    {"cycle", "start_s", "termination_s", "stop_s", "iterations", "initial_score",
                     "final_score", "success"});
    std::uint64_t k = 0;
    for (const auto& cy : rep.cycles) {
      double t[3] = {0, 0, 0};
      for (const auto& e : cy.events) t[static_cast<int>(e.kind)] = e.time_s;
      c << k++ << t[0] << t[1] << t[2] << static_cast<std::uint64_t>(cy.iterations)
        << cy.initial_score << cy.final_score << static_cast<std::uint64_t>(cy.success ? 1 : 0);
      c.end_row();
    }
    c.close();
  });
  return {{"drift_rate_rad_per_sqrt_s", r.drift_rate},
          {"predicted_window_s", r.predicted_window_s},
          {"cycles", rep.cycles.size()},
          {"failed_cycles", rep.failed_cycles},
          {"uptime_fraction", rep.uptime_fraction},
          {"mean_drift_window_s", rep.mean_drift_window_s},
          {"min_operating_score", rep.min_operating_score},
          {"min_operating_visibility", std::sqrt(rep.min_operating_score)}};
}

}  // namespace

const char* version() { return QLINK_VERSION; }

MzOutcome simulate_mz(const MzSetup& s, std::uint64_t seed, unsigned threads) {
  MzOutcome r;
  const double Ta = s.link_a.power_transmission(), Tb = s.link_b.power_transmission();
  r.visibility_config = stage("mz/links", [&] {
    return network::mz_visibility(s.link_a.amplitude_transmission(),
                                  s.link_b.amplitude_transmission(), s.overlap);
  });
  r.relative_tau_s = network::relative_tau(s.link_a.phase_noise.tau_phi_s, s.link_b.phase_noise.tau_phi_s);
  const double step = r.relative_tau_s / 50.0;
  const auto key_a = derive_seed(seed, "mz/link_a/phase");
  const auto key_b = derive_seed(seed, "mz/link_b/phase");
  const double V = r.visibility_config;

  auto make_rate = [&](bool port_E) {
    auto ca = std::make_shared<network::PhaseCursor>(s.link_a.phase_noise, key_a, step);
    auto cb = std::make_shared<network::PhaseCursor>(s.link_b.phase_noise, key_b, step);
    return detect::RateFunction([=, &s](double t) {
      const auto p = network::mz_rates(s.photon_rate, Ta, Tb, V, ca->at(t) - cb->at(t));
      return port_E ? p.E : p.F;
    });
  };
  const double bound = 0.5 * s.photon_rate * 0.5 * (Ta + Tb) * (1.0 + V);
  auto ports = stage("mz/detection", [&] {
    return sample_pair(make_rate(true), make_rate(false), bound, s.detector, s.duration_s, seed, "mz");
  });
  r.port_E = std::move(ports.first);
  r.port_F = std::move(ports.second);
  r.hist = stage("mz/g2", [&] { return parallel_g2(r.port_E, r.port_F, s.g2, s.duration_s, threads); });
  r.fit = stage("mz/fit", [&] { return detect::fit_dip(r.hist, s.g2.model, detect::VisibilityMode::mz); });
  return r;
}

HomOutcome simulate_hom(const HomSetup& s, std::uint64_t seed, unsigned threads) {
  HomOutcome r;
  const double Ra = s.rate_a * s.link_a.power_transmission();
  const double Rb = s.rate_b * s.link_b.power_transmission();
  r.mean_photons_a = Ra * s.coherence_time_s;
  r.mean_photons_b = Rb * s.coherence_time_s;
  r.g2_zero_analytic = network::hom_g2_analytic(Ra, Rb, s.overlap);

  // Each source has a diffusing optical phase of coherence time tau_c; the
  // fiber phases add on top. The extra delay of link b only relabels the
  // emission time of a stationary process.
  const network::PhaseNoiseProcess src{s.coherence_time_s, 100.0};
  const double step = s.coherence_time_s / 25.0;
  const auto ks_a = derive_seed(seed, "hom/source_a/phase");
  const auto ks_b = derive_seed(seed, "hom/source_b/phase");
  const auto kf_a = derive_seed(seed, "hom/link_a/phase");
  const auto kf_b = derive_seed(seed, "hom/link_b/phase");
  const double fstep_a = s.link_a.phase_noise.tau_phi_s / 50.0;
  const double fstep_b = s.link_b.phase_noise.tau_phi_s / 50.0;
  const double mean = 0.5 * (Ra + Rb), cross = s.overlap * std::sqrt(Ra * Rb);

  auto make_rate = [&](double sign) {
    struct Cursors {
      network::PhaseCursor sa, sb, fa, fb;
    };
    auto c = std::make_shared<Cursors>(Cursors{{src, ks_a, step},
                                               {src, ks_b, step},
                                               {s.link_a.phase_noise, kf_a, fstep_a},
                                               {s.link_b.phase_noise, kf_b, fstep_b}});
    return detect::RateFunction([=](double t) {
      // Source phases are held between grid points: the correlation of a
      // held path is the chord of the exponential, off by O((step/tau)^2),
      // where linear interpolation is off by O(step/tau) at short lags.
      const double tg = std::floor(t / step) * step;
      const double phi = c->sa.at(tg) + c->fa.at(t) - c->sb.at(tg) - c->fb.at(t);
      return std::max(0.0, mean + sign * cross * std::cos(phi));
    });
  };
  auto ports = stage("hom/detection", [&] {
    return sample_pair(make_rate(1.0), make_rate(-1.0), mean + cross, s.detector, s.duration_s, seed,
                       "hom");
  });
  r.port_E = std::move(ports.first);
  r.port_F = std::move(ports.second);
  r.hist = stage("hom/g2", [&] { return parallel_g2(r.port_E, r.port_F, s.g2, s.duration_s, threads); });
  r.fit = stage("hom/fit", [&] { return detect::fit_dip(r.hist, s.g2.model, detect::VisibilityMode::hom); });

  stage("hom/coincidences", [&] {
    r.roi_coincidences = detect::count_pairs_in(r.port_E, r.port_F, 0.0, s.roi_window_s);
    const double far = 0.9 * s.g2.max_dt_s;
    const double T = s.duration_s;
    // Correct the off-zero windows for their shorter record overlap.
    const double corr = T / (T - far);
    r.roi_accidentals = 0.5 * corr *
                        static_cast<double>(detect::count_pairs_in(r.port_E, r.port_F, far, s.roi_window_s) +
                                            detect::count_pairs_in(r.port_E, r.port_F, -far, s.roi_window_s));
    r.roi_visibility =
        r.roi_accidentals > 0.0 ? 1.0 - static_cast<double>(r.roi_coincidences) / r.roi_accidentals : 0.0;
  });
  return r;
}

PolcompOutcome simulate_polcomp(const PolcompSetup& s, std::uint64_t seed) {
  PolcompOutcome r;
  // Unit-rate Monte Carlo step for the window fit; at the rates of interest
  // this is a few tens of ms of real time.
  constexpr double fit_step = 2.5e-4;
  r.drift_rate = stage("polcomp/drift_fit", [&] {
    if (s.drift_rate) return *s.drift_rate;
    Rng rng(derive_seed(seed, "polcomp/drift_fit"));
    return pol::fit_drift_rate(s.controller.threshold, *s.drift_window_s, s.fit_trials, fit_step, rng);
  });
  r.predicted_window_s = r.drift_rate > 0.0 ? pol::mean_crossing_time(r.drift_rate, s.controller.threshold)
                                             : INFINITY;
  r.schedule = stage("polcomp/schedule", [&] {
    pol::PolarizationChannel ch;
    ch.input = s.target;
    ch.drift.rate = r.drift_rate;
    // Start compensated: the paddles at zero give -I, which leaves the SOP unchanged.
    Rng rng(derive_seed(seed, "polcomp/schedule"));
    return pol::schedule_recalibration(ch, s.target, s.controller, s.cadence_s, s.duration_s,
                                       s.sample_dt_s, rng);
  });
  return r;
}

std::string config_hash(const Scenario& sc) {
  return io::sha256_hex(sc.resolved_text() + "version = " + version() + "\n");
}

RunResult run(Scenario sc, const RunOptions& options) {
  if (options.seed) {
    sc.seed = *options.seed;
    sc.values["seed"].number = static_cast<double>(*options.seed);
    sc.values["seed"].defaulted = false;
  }
  if (options.threads) sc.threads = std::max(1u, *options.threads);

  const auto wall0 = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  RunResult res;
  res.out_dir = options.out_dir;
  res.config_hash = config_hash(sc);
  stage("output", [&] { fs::create_directories(res.out_dir); });

  Outputs out(res.out_dir, {{"qlinksim", version()},
                            {"experiment", experiment_name(sc.experiment)},
                            {"seed", std::to_string(sc.seed)},
                            {"config_sha256", res.config_hash}});
  json results;
  switch (sc.experiment) {
    case Experiment::conversion: results = run_conversion(sc, out); break;
    case Experiment::conversion_map: results = run_map(sc, out); break;
    case Experiment::oodr: results = run_oodr(sc, out); break;
    case Experiment::mz: results = run_mz(sc, out); break;
    case Experiment::hom: results = run_hom(sc, out); break;
    case Experiment::polcomp: results = run_polcomp(sc, out); break;
  }

  json files = json::array();
  for (const auto& name : out.names()) {
    const fs::path p = res.out_dir / name;
    OutputFile f{name, io::sha256_file(p), fs::file_size(p)};
    files.push_back({{"file", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    res.outputs.push_back(std::move(f));
  }
  json config = json::object();
  for (const auto& [name, v] : sc.values) {
    if (name == "threads") continue;
    json entry;
    if (name == "seed")
      entry["value"] = sc.seed;
    else if (v.dim == Dim::text || v.dim == Dim::boolean)
      entry["value"] = v.text;
    else
      entry["value"] = v.number;
    if (*si_unit(v.dim)) entry["unit"] = si_unit(v.dim);
    entry["defaulted"] = v.defaulted;
    config[name] = entry;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  json manifest = {{"software", "qlinksim"},
                   {"version", version()},
                   {"experiment", experiment_name(sc.experiment)},
                   {"seed", sc.seed},
                   {"threads", sc.threads},
                   {"scenario_file", sc.source.string()},
                   {"config_sha256", res.config_hash},
                   {"resolved_config", sc.resolved_text()},
                   {"config", config},
                   {"defaults", sc.defaulted_fields()},
                   {"warnings", sc.warnings},
                   {"started_utc", started},
                   {"finished_utc", utc_now()},
                   {"wall_seconds", wall},
                   {"outputs", files},
                   {"results", results}};
  res.manifest = res.out_dir / "manifest.json";
  stage("output", [&] {
    std::ofstream m(res.manifest, std::ios::binary);
    m << manifest.dump(2) << '\n';
    if (!m) throw std::runtime_error("cannot write " + res.manifest.string());
  });
  return res;
}

}  // namespace qlink::cli
