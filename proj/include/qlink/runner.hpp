#pragma once

// End-to-end experiment pipelines and the run manifest.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qlink/detection.hpp"
#include "qlink/polarization.hpp"
#include "qlink/scenario.hpp"

namespace qlink::cli {

/// A failure inside an experiment, tagged with the stage it happened in.
class RunError : public std::runtime_error {
 public:
  RunError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct MzOutcome {
  double visibility_config = 0.0;   // from link transmissions and overlap
  double relative_tau_s = 0.0;
  detect::DetectionEventStream port_E, port_F;
  detect::G2Histogram hist;
  detect::DipFit fit;
};

/// Source -> splitter -> two noisy links -> beamsplitter -> detectors E, F.
MzOutcome simulate_mz(const MzSetup& s, std::uint64_t seed, unsigned threads = 1);

struct HomOutcome {
  double mean_photons_a = 0.0;   // per coherence time at the beamsplitter
  double mean_photons_b = 0.0;
  double g2_zero_analytic = 0.0;
  detect::DetectionEventStream port_E, port_F;
  detect::G2Histogram hist;
  detect::DipFit fit;
  std::size_t roi_coincidences = 0;     // |dt| <= roi/2
  double roi_accidentals = 0.0;         // same window, far from zero delay (mean)
  double roi_visibility = 0.0;          // 1 - coincidences / accidentals
};

/// Two independent sources of coherence time tau_c through their links
/// onto one beamsplitter.
HomOutcome simulate_hom(const HomSetup& s, std::uint64_t seed, unsigned threads = 1);

struct PolcompOutcome {
  double drift_rate = 0.0;
  double predicted_window_s = 0.0;   // analytic mean crossing time at that rate
  pol::ScheduleReport schedule;
};

PolcompOutcome simulate_polcomp(const PolcompSetup& s, std::uint64_t seed);

struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

struct OutputFile {
  std::string name;   // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunResult {
  std::filesystem::path out_dir;
  std::filesystem::path manifest;
  std::string config_hash;
  std::vector<OutputFile> outputs;
};

/// Hash of the resolved config and the software version; written into every
/// CSV header.
std::string config_hash(const Scenario& sc);

/// Run the experiment, write its outputs and manifest.json into out_dir.
RunResult run(Scenario sc, const RunOptions& options);

const char* version();

}  // namespace qlink::cli
