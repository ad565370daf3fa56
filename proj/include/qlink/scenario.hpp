#pragma once

// Scenario files: flat "key = value" lines, '#' starts a comment. Every
// dimensioned key carries its unit as a suffix, e.g. link_a.loss_db = 23,
// link_a.tau_phi_ms = 2, pump.omega_I_mhz = 20. Values are converted to SI
// (angular frequencies for *_hz/khz/mhz/ghz) on parsing.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qlink/atomic_core.hpp"
#include "qlink/detection.hpp"
#include "qlink/field_propagation.hpp"
#include "qlink/optical_network.hpp"
#include "qlink/polarization.hpp"

namespace qlink::cli {

enum class Experiment { conversion, conversion_map, oodr, mz, hom, polcomp };

const char* experiment_name(Experiment e);
std::optional<Experiment> parse_experiment(std::string_view s);

enum class Dim {
  none, count, text, boolean, time, length, frequency, rate, loss, density, angle,
  drift_rate, dipole, temperature
};

struct ConfigIssue {
  int line = 0;  // 0 when not tied to a line
  std::string key;
  std::string message;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

struct Value {
  Dim dim{};
  double number = 0.0;   // SI
  std::string text;      // text / boolean fields, and the literal as written
  std::string key;       // key as written, or "" when defaulted
  int line = 0;
  bool defaulted = false;
};

struct ConversionSetup {
  field::CellParams cell;
  field::PumpConfig pumps;
  field::PulseSpec signal;
  atomic::DecaySet decays;
  field::NumericsConfig numerics;
};

struct MapGrid {
  std::vector<double> delta_I;
  std::vector<double> delta_II;
};

struct OodrSetup {
  double omega_I = 0.0;
  double omega_II = 0.0;
  double delta_I = 0.0;
  std::vector<double> delta_II;
  atomic::DecaySet decays;
};

struct G2Setup {
  double bin_width_s = 0.0;
  double max_dt_s = 0.0;
  double baseline_fraction = 0.2;
  detect::DipModel model = detect::DipModel::exponential;
};

struct MzSetup {
  network::FiberLink link_a, link_b;
  double photon_rate = 0.0;   // photons/s into the first splitter
  double overlap = 1.0;
  detect::DetectorModel detector;
  double duration_s = 0.0;
  G2Setup g2;
  bool write_events = true;
};

struct HomSetup {
  network::FiberLink link_a, link_b;
  double extra_delay_s = 0.0;
  double rate_a = 0.0, rate_b = 0.0;   // photons/s from each source
  double coherence_time_s = 0.0;
  double overlap = 1.0;
  double roi_window_s = 1e-7;
  detect::DetectorModel detector;
  double duration_s = 0.0;
  G2Setup g2;
  bool write_events = true;
};

struct PolcompSetup {
  std::optional<double> drift_rate;    // rad/sqrt(s)
  std::optional<double> drift_window_s;
  std::size_t fit_trials = 2000;
  pol::ControllerConfig controller;
  pol::StokesState target;
  double cadence_s = 0.0;
  double duration_s = 0.0;
  double sample_dt_s = 1.0;
};

struct Scenario {
  Experiment experiment = Experiment::conversion;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::map<std::string, Value> values;   // canonical field name -> value
  std::vector<std::string> warnings;
  std::filesystem::path source;

  std::optional<ConversionSetup> conversion;  // conversion, conversion_map
  std::optional<MapGrid> map;
  std::optional<OodrSetup> oodr;
  std::optional<MzSetup> mz;
  std::optional<HomSetup> hom;
  std::optional<PolcompSetup> polcomp;

  /// Canonical resolved form: one "name = value unit" line per field, sorted,
  /// followed by the seed. Hash input for traceability headers.
  std::string resolved_text() const;
  std::vector<std::string> defaulted_fields() const;
};

/// Parse and validate; throws ConfigError listing every problem found.
Scenario parse_scenario_text(std::string_view text, const std::filesystem::path& source = {});
Scenario parse_scenario(const std::filesystem::path& path);

/// Levenshtein distance, used for key suggestions.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// SI unit label of a dimension as written in the resolved config.
const char* si_unit(Dim d);

}  // namespace qlink::cli
