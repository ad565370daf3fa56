#include "qlink/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "qlink/constants.hpp"
#include "qlink/io.hpp"

namespace qlink::cli {

namespace {

enum : unsigned {
  CONV = 1u << 0,
  MAP = 1u << 1,
  OODR = 1u << 2,
  MZ = 1u << 3,
  HOM = 1u << 4,
  POL = 1u << 5,
  ALL = 63u,
};

unsigned bit(Experiment e) { return 1u << static_cast<unsigned>(e); }

enum class Bound { any, nonneg, positive, unit };
enum class Need { required, optional, defaulted };

struct FieldSpec {
  std::string_view name;
  Dim dim;
  unsigned experiments;
  Need need;
  double def = 0.0;
  std::string_view def_text = {};
  Bound bound = Bound::any;
};

constexpr double MHz = kTwoPi * 1e6;

// clang-format off
const std::vector<FieldSpec>& schema() {
  static const std::vector<FieldSpec> s = {
    {"experiment", Dim::text, ALL, Need::required},
    {"seed", Dim::count, ALL, Need::defaulted, 1.0},
    {"threads", Dim::count, ALL, Need::defaulted, 1.0},

    {"cell.length", Dim::length, CONV | MAP, Need::required, 0, {}, Bound::positive},
    {"cell.beam_diameter", Dim::length, CONV | MAP, Need::required, 0, {}, Bound::positive},
    {"cell.density", Dim::density, CONV | MAP, Need::required, 0, {}, Bound::positive},
    {"cell.temperature", Dim::temperature, CONV | MAP, Need::defaulted, 100.0},
    {"pump.omega_I", Dim::frequency, CONV | MAP | OODR, Need::required, 0, {}, Bound::nonneg},
    {"pump.omega_II", Dim::frequency, CONV | MAP | OODR, Need::required, 0, {}, Bound::nonneg},
    {"detuning.delta_s", Dim::frequency, CONV | MAP, Need::required},
    {"detuning.delta_I", Dim::frequency, CONV | OODR, Need::required},
    {"detuning.delta_II", Dim::frequency, CONV, Need::required},
    {"signal.shape", Dim::text, CONV | MAP, Need::required},
    {"signal.peak_rabi", Dim::frequency, CONV | MAP, Need::required, 0, {}, Bound::nonneg},
    {"signal.center", Dim::time, CONV | MAP, Need::required},
    {"signal.fwhm", Dim::time, CONV | MAP, Need::required, 0, {}, Bound::nonneg},
    {"decay.gamma_2", Dim::frequency, CONV | MAP | OODR, Need::defaulted, 5.75 * MHz, {}, Bound::nonneg},
    {"decay.gamma_3", Dim::frequency, CONV | MAP | OODR, Need::defaulted, 6.07 * MHz, {}, Bound::nonneg},
    {"decay.gamma_4", Dim::frequency, CONV | MAP | OODR, Need::defaulted, 3.5 * MHz, {}, Bound::nonneg},
    {"dipole.d12", Dim::dipole, CONV | MAP, Need::defaulted, 2.5e-29, {}, Bound::positive},
    {"dipole.d13", Dim::dipole, CONV | MAP, Need::defaulted, 2.5e-29, {}, Bound::positive},
    {"dipole.d24", Dim::dipole, CONV | MAP, Need::defaulted, 8e-30, {}, Bound::positive},
    {"dipole.d34", Dim::dipole, CONV | MAP, Need::defaulted, 8e-30, {}, Bound::positive},
    {"numerics.n_z", Dim::count, CONV | MAP, Need::defaulted, 100.0},
    {"numerics.dt", Dim::time, CONV | MAP, Need::defaulted, 1e-10, {}, Bound::positive},
    {"numerics.window", Dim::time, CONV | MAP, Need::defaulted, 0.0, {}, Bound::nonneg},
    {"numerics.frame", Dim::text, CONV | MAP, Need::defaulted, 0, "retarded"},
    {"numerics.courant", Dim::none, CONV | MAP, Need::defaulted, 1.0, {}, Bound::positive},
    {"map.delta_I_min", Dim::frequency, MAP, Need::required},
    {"map.delta_I_max", Dim::frequency, MAP, Need::required},
    {"map.points_I", Dim::count, MAP, Need::required},
    {"map.delta_II_min", Dim::frequency, MAP, Need::required},
    {"map.delta_II_max", Dim::frequency, MAP, Need::required},
    {"map.points_II", Dim::count, MAP, Need::required},
    {"oodr.delta_II_min", Dim::frequency, OODR, Need::required},
    {"oodr.delta_II_max", Dim::frequency, OODR, Need::required},
    {"oodr.points", Dim::count, OODR, Need::required},

    {"link_a.length", Dim::length, MZ | HOM, Need::required, 0, {}, Bound::nonneg},
    {"link_a.loss", Dim::loss, MZ | HOM, Need::required, 0, {}, Bound::nonneg},
    {"link_a.group_index", Dim::none, MZ | HOM, Need::defaulted, 1.468, {}, Bound::positive},
    {"link_a.tau_phi", Dim::time, MZ | HOM, Need::required, 0, {}, Bound::positive},
    {"link_a.sigma_phi", Dim::angle, MZ | HOM, Need::defaulted, 100.0, {}, Bound::nonneg},
    {"link_b.length", Dim::length, MZ | HOM, Need::required, 0, {}, Bound::nonneg},
    {"link_b.loss", Dim::loss, MZ | HOM, Need::required, 0, {}, Bound::nonneg},
    {"link_b.group_index", Dim::none, MZ | HOM, Need::defaulted, 1.468, {}, Bound::positive},
    {"link_b.tau_phi", Dim::time, MZ | HOM, Need::required, 0, {}, Bound::positive},
    {"link_b.sigma_phi", Dim::angle, MZ | HOM, Need::defaulted, 100.0, {}, Bound::nonneg},
    {"link_b.extra_delay", Dim::length, HOM, Need::defaulted, 0.0, {}, Bound::nonneg},
    {"overlap", Dim::none, MZ | HOM, Need::required, 0, {}, Bound::unit},
    {"mz.photon_rate", Dim::rate, MZ, Need::required, 0, {}, Bound::positive},
    {"hom.rate_a", Dim::rate, HOM, Need::required, 0, {}, Bound::positive},
    {"hom.rate_b", Dim::rate, HOM, Need::required, 0, {}, Bound::positive},
    {"hom.coherence_time", Dim::time, HOM, Need::required, 0, {}, Bound::positive},
    {"hom.roi_window", Dim::time, HOM, Need::defaulted, 1e-7, {}, Bound::positive},
    {"detector.efficiency", Dim::none, MZ | HOM, Need::defaulted, 0.8, {}, Bound::unit},
    {"detector.dark_rate", Dim::rate, MZ | HOM, Need::defaulted, 100.0, {}, Bound::nonneg},
    {"detector.jitter", Dim::time, MZ | HOM, Need::defaulted, 50e-12, {}, Bound::nonneg},
    {"detector.dead_time", Dim::time, MZ | HOM, Need::defaulted, 0.0, {}, Bound::nonneg},
    {"run.duration", Dim::time, MZ | HOM | POL, Need::required, 0, {}, Bound::positive},
    {"g2.bin_width", Dim::time, MZ | HOM, Need::required, 0, {}, Bound::positive},
    {"g2.max_dt", Dim::time, MZ | HOM, Need::required, 0, {}, Bound::positive},
    {"g2.baseline_fraction", Dim::none, MZ | HOM, Need::defaulted, 0.2, {}, Bound::unit},
    {"fit.model", Dim::text, MZ | HOM, Need::defaulted, 0, "exponential"},
    {"output.events", Dim::boolean, MZ | HOM, Need::defaulted, 1.0, "true"},

    {"drift.rate", Dim::drift_rate, POL, Need::optional, 0, {}, Bound::nonneg},
    {"drift.window", Dim::time, POL, Need::optional, 0, {}, Bound::positive},
    {"drift.fit_trials", Dim::count, POL, Need::defaulted, 2000.0},
    {"controller.threshold", Dim::none, POL, Need::defaulted, 0.7744, {}, Bound::unit},
    {"controller.target_score", Dim::none, POL, Need::defaulted, 0.999, {}, Bound::unit},
    {"controller.max_evaluations", Dim::count, POL, Need::defaulted, 200.0},
    {"controller.evaluation_time", Dim::time, POL, Need::defaulted, 0.2, {}, Bound::nonneg},
    {"controller.handshake", Dim::time, POL, Need::defaulted, 1.0, {}, Bound::nonneg},
    {"controller.freeze_drift", Dim::boolean, POL, Need::defaulted, 0.0, "false"},
    {"target.sop", Dim::text, POL, Need::defaulted, 0, "H"},
    {"schedule.cadence", Dim::time, POL, Need::required, 0, {}, Bound::positive},
    {"schedule.sample_dt", Dim::time, POL, Need::defaulted, 1.0, {}, Bound::positive},
  };
  return s;
}
// clang-format on

struct Unit {
  std::string_view suffix;
  double factor;
};

const std::vector<Unit>& units(Dim d) {
  static const std::vector<Unit> none;
  static const std::vector<Unit> time{{"s", 1.0},    {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9},
                                      {"ps", 1e-12}, {"min", 60.0}, {"h", 3600.0}};
  static const std::vector<Unit> length{{"m", 1.0},   {"cm", 1e-2}, {"mm", 1e-3},
                                        {"um", 1e-6}, {"nm", 1e-9}, {"km", 1e3}};
  static const std::vector<Unit> frequency{{"hz", kTwoPi},
                                           {"khz", kTwoPi * 1e3},
                                           {"mhz", kTwoPi * 1e6},
                                           {"ghz", kTwoPi * 1e9},
                                           {"rad_per_s", 1.0}};
  static const std::vector<Unit> rate{{"cps", 1.0}, {"kcps", 1e3}, {"mcps", 1e6}};
  static const std::vector<Unit> loss{{"db", 1.0}};
  static const std::vector<Unit> density{{"per_m3", 1.0}, {"per_cm3", 1e6}};
  static const std::vector<Unit> angle{{"rad", 1.0}, {"deg", std::numbers::pi / 180.0}};
  static const std::vector<Unit> drift{{"rad_per_sqrt_s", 1.0},
                                       {"deg_per_sqrt_s", std::numbers::pi / 180.0},
                                       {"rad_per_sqrt_min", 1.0 / std::sqrt(60.0)}};
  static const std::vector<Unit> dipole{{"c_m", 1.0}, {"debye", 3.33564e-30}, {"ea0", 8.4783536255e-30}};
  static const std::vector<Unit> temperature{{"c", 1.0}};
  switch (d) {
    case Dim::time: return time;
    case Dim::length: return length;
    case Dim::frequency: return frequency;
    case Dim::rate: return rate;
    case Dim::loss: return loss;
    case Dim::density: return density;
    case Dim::angle: return angle;
    case Dim::drift_rate: return drift;
    case Dim::dipole: return dipole;
    case Dim::temperature: return temperature;
    default: return none;
  }
}

const char* dim_name(Dim d) {
  switch (d) {
    case Dim::none: return "dimensionless";
    case Dim::count: return "count";
    case Dim::text: return "text";
    case Dim::boolean: return "boolean";
    case Dim::time: return "time";
    case Dim::length: return "length";
    case Dim::frequency: return "frequency";
    case Dim::rate: return "count rate";
    case Dim::loss: return "loss";
    case Dim::density: return "number density";
    case Dim::angle: return "angle";
    case Dim::drift_rate: return "drift rate";
    case Dim::dipole: return "dipole moment";
    case Dim::temperature: return "temperature";
  }
  return "?";
}

bool has_units(Dim d) { return !units(d).empty(); }

const Unit* find_unit(Dim d, std::string_view suffix) {
  for (const auto& u : units(d))
    if (u.suffix == suffix) return &u;
  return nullptr;
}

std::optional<Dim> unit_owner(std::string_view suffix) {
  for (Dim d : {Dim::time, Dim::length, Dim::frequency, Dim::rate, Dim::loss, Dim::density,
                Dim::angle, Dim::drift_rate, Dim::dipole, Dim::temperature})
    if (find_unit(d, suffix)) return d;
  return std::nullopt;
}

std::string unit_list(Dim d) {
  std::string s;
  for (const auto& u : units(d)) s += (s.empty() ? "_" : ", _") + std::string(u.suffix);
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double x = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(x)) return std::nullopt;
  return x;
}

struct Matched {
  const FieldSpec* spec = nullptr;
  const Unit* unit = nullptr;
};

std::string suggestion(std::string_view key) {
  // Strip a recognised unit suffix so "cell.lenght_cm" compares as "cell.lenght".
  std::string base(key), suffix;
  for (std::size_t pos = key.rfind('_'); pos != std::string_view::npos && pos > 0;
       pos = key.rfind('_', pos - 1)) {
    if (unit_owner(key.substr(pos + 1))) {
      base = std::string(key.substr(0, pos));
      suffix = std::string(key.substr(pos));
    }
    if (pos == 0) break;
  }
  const bool dotted = base.find('.') != std::string::npos;
  std::size_t best = 1000;
  std::string best_name;
  for (const auto& f : schema()) {
    std::size_t d = edit_distance(base, f.name);
    if (!dotted) {
      const auto dot = f.name.rfind('.');
      if (dot != std::string_view::npos) d = std::min(d, edit_distance(base, f.name.substr(dot + 1)));
    }
    if (d < best) {
      best = d;
      best_name = std::string(f.name);
      const Unit* u = suffix.empty() ? nullptr : find_unit(f.dim, suffix.substr(1));
      if (u)
        best_name += suffix;
      else if (has_units(f.dim))
        best_name += "_" + std::string(units(f.dim).front().suffix);
    }
  }
  if (best <= std::max<std::size_t>(2, base.size() / 4)) return best_name;
  return {};
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

class Builder {
 public:
  Builder(const std::map<std::string, Value>& v, std::vector<ConfigIssue>& issues)
      : v_(v), issues_(issues) {}

  double num(const std::string& name) const { return v_.at(name).number; }
  bool has(const std::string& name) const { return v_.count(name) != 0; }
  const std::string& text(const std::string& name) const { return v_.at(name).text; }
  std::size_t count(const std::string& name) const {
    return static_cast<std::size_t>(v_.at(name).number);
  }

  void issue(const std::string& name, const std::string& msg) const {
    const auto it = v_.find(name);
    const int line = it == v_.end() ? 0 : it->second.line;
    const std::string key = it == v_.end() || it->second.key.empty() ? name : it->second.key;
    issues_.push_back({line, key, msg});
  }

  // Run a module validator, attributing failures to `name`.
  template <class F>
  void check(const std::string& name, F&& f) const {
    try {
      f();
    } catch (const std::exception& e) {
      issue(name, e.what());
    }
  }

 private:
  const std::map<std::string, Value>& v_;
  std::vector<ConfigIssue>& issues_;
};

atomic::DecaySet decays_from(const Builder& b) {
  atomic::DecaySet d;
  using atomic::Level;
  d.decays = {{Level::intermediate, Level::ground, b.num("decay.gamma_2")},
              {Level::pumped, Level::ground, b.num("decay.gamma_3")},
              {Level::upper, Level::intermediate, 0.5 * b.num("decay.gamma_4")},
              {Level::upper, Level::pumped, 0.5 * b.num("decay.gamma_4")}};
  return d;
}

network::FiberLink link_from(const Builder& b, const std::string& p) {
  network::FiberLink l;
  l.length_km = b.num(p + ".length") / 1e3;
  l.loss_db = b.num(p + ".loss");
  l.group_index = b.num(p + ".group_index");
  l.phase_noise.tau_phi_s = b.num(p + ".tau_phi");
  l.phase_noise.sigma_rad = b.num(p + ".sigma_phi");
  return l;
}

detect::DetectorModel detector_from(const Builder& b) {
  detect::DetectorModel d;
  d.efficiency = b.num("detector.efficiency");
  d.dark_rate = b.num("detector.dark_rate");
  d.jitter_s = b.num("detector.jitter");
  d.dead_time_s = b.num("detector.dead_time");
  return d;
}

G2Setup g2_from(const Builder& b) {
  G2Setup g;
  g.bin_width_s = b.num("g2.bin_width");
  g.max_dt_s = b.num("g2.max_dt");
  g.baseline_fraction = b.num("g2.baseline_fraction");
  const auto& m = b.text("fit.model");
  if (m == "exponential")
    g.model = detect::DipModel::exponential;
  else if (m == "gaussian")
    g.model = detect::DipModel::gaussian;
  else
    b.issue("fit.model", "must be 'exponential' or 'gaussian', got '" + m + "'");
  if (g.max_dt_s < 5.0 * g.bin_width_s)
    b.issue("g2.max_dt", "must span at least 5 bins");
  if (!(g.baseline_fraction > 0.0)) b.issue("g2.baseline_fraction", "must be > 0");
  return g;
}

void build_setups(Scenario& sc, std::vector<ConfigIssue>& issues) {
  const Builder b(sc.values, issues);
  const unsigned e = bit(sc.experiment);

  sc.seed = static_cast<std::uint64_t>(b.num("seed"));
  sc.threads = static_cast<unsigned>(std::max<std::size_t>(1, b.count("threads")));

  if (e & (CONV | MAP)) {
    ConversionSetup s;
    s.cell.length_m = b.num("cell.length");
    s.cell.beam_diameter_m = b.num("cell.beam_diameter");
    s.cell.atomic_density_m3 = b.num("cell.density");
    s.cell.temperature_c = b.num("cell.temperature");
    s.pumps.omega_I = b.num("pump.omega_I");
    s.pumps.omega_II = b.num("pump.omega_II");
    s.pumps.detunings.delta_s = b.num("detuning.delta_s");
    if (e & CONV) {
      s.pumps.detunings.delta_I = b.num("detuning.delta_I");
      s.pumps.detunings.delta_II = b.num("detuning.delta_II");
    }
    const auto& shape = b.text("signal.shape");
    if (shape == "gaussian")
      s.signal.shape = field::PulseShape::gaussian;
    else if (shape == "square")
      s.signal.shape = field::PulseShape::square;
    else if (shape == "cw")
      s.signal.shape = field::PulseShape::cw;
    else
      b.issue("signal.shape", "must be gaussian, square or cw, got '" + shape + "'");
    s.signal.peak_rabi = b.num("signal.peak_rabi");
    s.signal.center_s = b.num("signal.center");
    s.signal.fwhm_s = b.num("signal.fwhm");
    s.decays = decays_from(b);
    s.numerics.n_z = b.count("numerics.n_z");
    s.numerics.dt_s = b.num("numerics.dt");
    s.numerics.window_s = b.num("numerics.window");
    s.numerics.courant = b.num("numerics.courant");
    s.numerics.dipoles = {b.num("dipole.d12"), b.num("dipole.d13"), b.num("dipole.d24"),
                          b.num("dipole.d34")};
    const auto& frame = b.text("numerics.frame");
    if (frame == "retarded")
      s.numerics.frame = field::Frame::retarded;
    else if (frame == "lab")
      s.numerics.frame = field::Frame::lab;
    else
      b.issue("numerics.frame", "must be 'retarded' or 'lab', got '" + frame + "'");
    b.check("cell.length", [&] { s.cell.validate(); });
    b.check("signal.shape", [&] { s.signal.validate(); });
    b.check("numerics.n_z", [&] { s.numerics.validate(); });
    b.check("decay.gamma_2", [&] { s.decays.validate(); });
    sc.conversion = s;
  }
  if (e & MAP) {
    MapGrid g;
    const std::size_t nI = b.count("map.points_I"), nII = b.count("map.points_II");
    if (nI == 0) b.issue("map.points_I", "must be >= 1");
    if (nII == 0) b.issue("map.points_II", "must be >= 1");
    if (b.num("map.delta_I_max") < b.num("map.delta_I_min"))
      b.issue("map.delta_I_max", "must be >= map.delta_I_min");
    if (b.num("map.delta_II_max") < b.num("map.delta_II_min"))
      b.issue("map.delta_II_max", "must be >= map.delta_II_min");
    g.delta_I = linspace(b.num("map.delta_I_min"), b.num("map.delta_I_max"), nI);
    g.delta_II = linspace(b.num("map.delta_II_min"), b.num("map.delta_II_max"), nII);
    sc.map = g;
  }
  if (e & OODR) {
    OodrSetup o;
    o.omega_I = b.num("pump.omega_I");
    o.omega_II = b.num("pump.omega_II");
    o.delta_I = b.num("detuning.delta_I");
    const std::size_t n = b.count("oodr.points");
    if (n == 0) b.issue("oodr.points", "must be >= 1");
    if (b.num("oodr.delta_II_max") < b.num("oodr.delta_II_min"))
      b.issue("oodr.delta_II_max", "must be >= oodr.delta_II_min");
    o.delta_II = linspace(b.num("oodr.delta_II_min"), b.num("oodr.delta_II_max"), n);
    o.decays = decays_from(b);
    b.check("decay.gamma_2", [&] { o.decays.validate(); });
    sc.oodr = o;
  }
  if (e & MZ) {
    MzSetup m;
    m.link_a = link_from(b, "link_a");
    m.link_b = link_from(b, "link_b");
    m.photon_rate = b.num("mz.photon_rate");
    m.overlap = b.num("overlap");
    m.detector = detector_from(b);
    m.duration_s = b.num("run.duration");
    m.g2 = g2_from(b);
    m.write_events = b.num("output.events") != 0.0;
    b.check("link_a.loss", [&] { m.link_a.validate(); });
    b.check("link_b.loss", [&] { m.link_b.validate(); });
    b.check("detector.efficiency", [&] { m.detector.validate(); });
    if (m.duration_s <= 2.0 * m.g2.max_dt_s) b.issue("run.duration", "must exceed 2 * g2.max_dt");
    sc.mz = m;
  }
  if (e & HOM) {
    HomSetup h;
    h.link_a = link_from(b, "link_a");
    h.link_b = link_from(b, "link_b");
    h.extra_delay_s = b.num("link_b.extra_delay") * h.link_b.group_index / PhysicalConstants::c;
    h.rate_a = b.num("hom.rate_a");
    h.rate_b = b.num("hom.rate_b");
    h.coherence_time_s = b.num("hom.coherence_time");
    h.roi_window_s = b.num("hom.roi_window");
    h.overlap = b.num("overlap");
    h.detector = detector_from(b);
    h.duration_s = b.num("run.duration");
    h.g2 = g2_from(b);
    h.write_events = b.num("output.events") != 0.0;
    b.check("link_a.loss", [&] { h.link_a.validate(); });
    b.check("link_b.loss", [&] { h.link_b.validate(); });
    b.check("detector.efficiency", [&] { h.detector.validate(); });
    if (h.duration_s <= 2.0 * h.g2.max_dt_s) b.issue("run.duration", "must exceed 2 * g2.max_dt");
    sc.hom = h;
  }
  if (e & POL) {
    PolcompSetup p;
    if (b.has("drift.rate")) p.drift_rate = b.num("drift.rate");
    if (b.has("drift.window")) p.drift_window_s = b.num("drift.window");
    if (p.drift_rate.has_value() == p.drift_window_s.has_value())
      b.issue("drift.rate", "give exactly one of drift.rate (e.g. drift.rate_rad_per_sqrt_s) or "
                            "drift.window (e.g. drift.window_min)");
    p.fit_trials = b.count("drift.fit_trials");
    if (p.fit_trials == 0) b.issue("drift.fit_trials", "must be >= 1");
    p.controller.threshold = b.num("controller.threshold");
    p.controller.target_score = b.num("controller.target_score");
    p.controller.max_evaluations = b.count("controller.max_evaluations");
    p.controller.evaluation_time_s = b.num("controller.evaluation_time");
    p.controller.handshake_s = b.num("controller.handshake");
    p.controller.freeze_drift = b.num("controller.freeze_drift") != 0.0;
    b.check("controller.threshold", [&] { p.controller.validate(); });
    const auto& sop = b.text("target.sop");
    if (sop == "H") p.target = pol::StokesState::horizontal();
    else if (sop == "V") p.target = pol::StokesState::from_stokes(-1, 0, 0);
    else if (sop == "D") p.target = pol::StokesState::diagonal();
    else if (sop == "A") p.target = pol::StokesState::from_stokes(0, -1, 0);
    else if (sop == "R") p.target = pol::StokesState::right_circular();
    else if (sop == "L") p.target = pol::StokesState::from_stokes(0, 0, -1);
    else b.issue("target.sop", "must be one of H, V, D, A, R, L, got '" + sop + "'");
    p.cadence_s = b.num("schedule.cadence");
    p.duration_s = b.num("run.duration");
    p.sample_dt_s = b.num("schedule.sample_dt");
    sc.polcomp = p;
  }
}

}  // namespace

const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::conversion: return "conversion";
    case Experiment::conversion_map: return "conversion_map";
    case Experiment::oodr: return "oodr";
    case Experiment::mz: return "mz";
    case Experiment::hom: return "hom";
    case Experiment::polcomp: return "polcomp";
  }
  return "?";
}

std::optional<Experiment> parse_experiment(std::string_view s) {
  for (auto e : {Experiment::conversion, Experiment::conversion_map, Experiment::oodr,
                 Experiment::mz, Experiment::hom, Experiment::polcomp})
    if (s == experiment_name(e)) return e;
  return std::nullopt;
}

const char* si_unit(Dim d) {
  switch (d) {
    case Dim::time: return "s";
    case Dim::length: return "m";
    case Dim::frequency: return "rad/s";
    case Dim::rate: return "1/s";
    case Dim::loss: return "dB";
    case Dim::density: return "1/m^3";
    case Dim::angle: return "rad";
    case Dim::drift_rate: return "rad/sqrt(s)";
    case Dim::dipole: return "C m";
    case Dim::temperature: return "degC";
    default: return "";
  }
}

namespace {

std::string render_issues(const std::vector<ConfigIssue>& issues) {
  std::ostringstream os;
  os << issues.size() << " configuration error" << (issues.size() == 1 ? "" : "s") << ":";
  for (const auto& i : issues) {
    os << "\n  ";
    if (i.line > 0) os << "line " << i.line << ": ";
    if (!i.key.empty()) os << i.key << ": ";
    os << i.message;
  }
  return os.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : std::runtime_error(render_issues(issues)), issues_(std::move(issues)) {}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string Scenario::resolved_text() const {
  std::ostringstream os;
  for (const auto& [name, v] : values) {
    if (name == "seed" || name == "threads") continue;
    const Dim d = v.dim;
    os << name << " = ";
    if (d == Dim::text || d == Dim::boolean)
      os << v.text;
    else
      os << io::format_double(v.number);
    if (*si_unit(d)) os << ' ' << si_unit(d);
    os << '\n';
  }
  os << "seed = " << seed << '\n';
  return os.str();
}

std::vector<std::string> Scenario::defaulted_fields() const {
  std::vector<std::string> out;
  for (const auto& [name, v] : values)
    if (v.defaulted) out.push_back(name);
  return out;
}

Scenario parse_scenario_text(std::string_view text, const std::filesystem::path& source) {
  std::vector<ConfigIssue> issues;
  Scenario sc;
  sc.source = source;

  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  std::set<std::string> given;  // recognised fields, even when their value was rejected
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      issues.push_back({line_no, "", "expected 'key = value', got '" + line + "'"});
      continue;
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key.empty()) {
      issues.push_back({line_no, "", "missing key before '='"});
      continue;
    }

    // Longest field name that the key is, or starts with plus "_<unit>".
    Matched m;
    std::string mismatch;
    for (const auto& f : schema()) {
      if (m.spec && m.spec->name.size() >= f.name.size()) continue;
      if (key == f.name) {
        if (has_units(f.dim)) {
          mismatch = "missing unit suffix; use one of " + unit_list(f.dim);
          continue;
        }
        m = {&f, nullptr};
        mismatch.clear();
      } else if (key.size() > f.name.size() + 1 && key.compare(0, f.name.size(), f.name) == 0 &&
                 key[f.name.size()] == '_') {
        const std::string_view suffix = std::string_view(key).substr(f.name.size() + 1);
        if (const Unit* u = find_unit(f.dim, suffix)) {
          m = {&f, u};
          mismatch.clear();
        } else if (auto owner = unit_owner(suffix)) {
          mismatch = "unit mismatch: _" + std::string(suffix) + " is a " + dim_name(*owner) +
                     " unit but " + std::string(f.name) + " is a " + dim_name(f.dim) +
                     (has_units(f.dim) ? "; use one of " + unit_list(f.dim) : " (no unit suffix)");
        }
      }
    }
    if (!m.spec) {
      if (!mismatch.empty()) {
        issues.push_back({line_no, key, mismatch});
      } else {
        const std::string s = suggestion(key);
        issues.push_back({line_no, key,
                          "unknown key" + (s.empty() ? std::string() : " (did you mean '" + s + "'?)")});
      }
      continue;
    }
    const std::string name(m.spec->name);
    const bool seen = !given.insert(name).second;
    if (seen && sc.values.count(name)) {
      issues.push_back({line_no, key,
                        "duplicate setting (first given on line " +
                            std::to_string(sc.values[name].line) + ")"});
      continue;
    }
    Value v;
    v.dim = m.spec->dim;
    v.key = key;
    v.line = line_no;
    v.text = value;
    const Dim d = m.spec->dim;
    if (d == Dim::text) {
      if (value.empty()) {
        issues.push_back({line_no, key, "empty value"});
        continue;
      }
    } else if (d == Dim::boolean) {
      if (value == "true" || value == "yes" || value == "1") {
        v.number = 1.0;
        v.text = "true";
      } else if (value == "false" || value == "no" || value == "0") {
        v.number = 0.0;
        v.text = "false";
      } else {
        issues.push_back({line_no, key, "expected true or false, got '" + value + "'"});
        continue;
      }
    } else {
      const auto x = parse_number(value);
      if (!x) {
        issues.push_back({line_no, key, "expected a number, got '" + value + "'"});
        continue;
      }
      if (d == Dim::count && (*x < 0.0 || std::floor(*x) != *x || *x > 9.0e15)) {
        issues.push_back({line_no, key, "expected a non-negative integer, got '" + value + "'"});
        continue;
      }
      const double si = *x * (m.unit ? m.unit->factor : 1.0);
      bool ok = true;
      switch (m.spec->bound) {
        case Bound::nonneg: ok = si >= 0.0; break;
        case Bound::positive: ok = si > 0.0; break;
        case Bound::unit: ok = si >= 0.0 && si <= 1.0; break;
        case Bound::any: break;
      }
      if (!ok) {
        const char* what = m.spec->bound == Bound::nonneg     ? "must be >= 0"
                           : m.spec->bound == Bound::positive ? "must be > 0"
                                                              : "must be in [0, 1]";
        issues.push_back({line_no, key, std::string(what) + ", got " + value});
        continue;
      }
      v.number = si;
    }
    sc.values[name] = std::move(v);
  }

  // Experiment selection.
  std::optional<Experiment> exp;
  if (auto it = sc.values.find("experiment"); it != sc.values.end()) {
    exp = parse_experiment(it->second.text);
    if (!exp)
      issues.push_back({it->second.line, it->second.key,
                        "unknown experiment '" + it->second.text +
                            "' (conversion, conversion_map, oodr, mz, hom, polcomp)"});
  } else {
    issues.push_back({0, "experiment", "missing required field"});
  }
  if (!exp) throw ConfigError(std::move(issues));
  sc.experiment = *exp;
  const unsigned e = bit(*exp);

  for (const auto& f : schema()) {
    const std::string name(f.name);
    const auto it = sc.values.find(name);
    if (!(f.experiments & e)) {
      if (it != sc.values.end())
        sc.warnings.push_back("line " + std::to_string(it->second.line) + ": " + it->second.key +
                              " is not used by experiment " + experiment_name(*exp));
      continue;
    }
    if (it != sc.values.end() || given.count(name)) continue;
    if (f.need == Need::required) {
      issues.push_back({0, name, std::string("missing required field") +
                                     (has_units(f.dim) ? " (unit suffix one of " + unit_list(f.dim) + ")"
                                                       : "")});
    } else if (f.need == Need::defaulted) {
      Value v;
      v.dim = f.dim;
      v.number = f.def;
      v.text = f.def_text.empty() ? io::format_double(f.def) : std::string(f.def_text);
      v.defaulted = true;
      sc.values[name] = v;
    }
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));

  build_setups(sc, issues);
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return sc;
}

Scenario parse_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({{0, "", "cannot open scenario file " + path.string()}});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str(), path);
}

}  // namespace qlink::cli
