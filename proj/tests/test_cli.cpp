#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qlink/io.hpp"
#include "qlink/runner.hpp"
#include "qlink/scenario.hpp"

using namespace qlink;
using namespace qlink::cli;

namespace {

const char* kMz = R"(
experiment = mz
link_a.length_km = 50
link_a.loss_db = 23
link_a.tau_phi_ms = 2
link_b.length_km = 50
link_b.loss_db = 23
link_b.tau_phi_ms = 2
overlap = 0.9
mz.photon_rate_mcps = 5
run.duration_s = 1
g2.bin_width_ms = 0.1
g2.max_dt_ms = 5
)";

std::vector<ConfigIssue> issues_of(const std::string& text) {
  try {
    parse_scenario_text(text);
  } catch (const ConfigError& e) {
    return e.issues();
  }
  return {};
}

bool mentions(const std::vector<ConfigIssue>& v, const std::string& key, const std::string& word) {
  for (const auto& i : v)
    if (i.key.find(key) != std::string::npos && i.message.find(word) != std::string::npos) return true;
  return false;
}

std::filesystem::path tmp(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("qlink_cli_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("minimal MZ scenario: units converted, numerical knobs defaulted") {
  const auto sc = parse_scenario_text(kMz);
  REQUIRE(sc.mz);
  CHECK(sc.experiment == Experiment::mz);
  CHECK(sc.mz->link_a.loss_db == 23.0);
  CHECK(sc.mz->link_a.length_km == doctest::Approx(50.0));
  CHECK(sc.mz->link_a.phase_noise.tau_phi_s == doctest::Approx(2e-3));
  CHECK(sc.mz->photon_rate == doctest::Approx(5e6));
  CHECK(sc.mz->g2.bin_width_s == doctest::Approx(1e-4));
  CHECK(sc.mz->detector.efficiency == 0.8);
  CHECK(sc.seed == 1);
  const auto d = sc.defaulted_fields();
  CHECK(std::find(d.begin(), d.end(), "detector.dark_rate") != d.end());
  CHECK(std::find(d.begin(), d.end(), "seed") != d.end());
  CHECK(std::find(d.begin(), d.end(), "overlap") == d.end());
  CHECK(sc.warnings.empty());
  CHECK(sc.resolved_text().find("seed = 1") != std::string::npos);
}

TEST_CASE("frequency suffixes are angular") {
  const auto sc = parse_scenario_text(R"(
experiment = oodr
pump.omega_I_mhz = 1
pump.omega_II_khz = 500
detuning.delta_I_rad_per_s = 3
oodr.delta_II_min_ghz = -0.01
oodr.delta_II_max_ghz = 0.01
oodr.points = 3
)");
  CHECK(sc.oodr->omega_I == doctest::Approx(2 * M_PI * 1e6));
  CHECK(sc.oodr->omega_II == doctest::Approx(2 * M_PI * 5e5));
  CHECK(sc.oodr->delta_I == 3.0);
  CHECK(sc.oodr->delta_II[2] == doctest::Approx(2 * M_PI * 1e7));
}

TEST_CASE("negative loss names the field") {
  std::string t = kMz;
  t.replace(t.find("link_a.loss_db = 23"), 19, "link_a.loss_db = -3");
  const auto v = issues_of(t);
  REQUIRE(v.size() == 1);
  CHECK(v[0].key == "link_a.loss_db");
  CHECK(v[0].line == 4);
}

TEST_CASE("unknown key gets a suggestion") {
  auto v = issues_of("experiment = conversion\ncell.lenght_cm = 7\n");
  CHECK(mentions(v, "cell.lenght_cm", "did you mean 'cell.length_cm'"));
  v = issues_of("experiment = mz\nlenght_m = 3\n");
  CHECK(mentions(v, "lenght_m", "length"));
}

TEST_CASE("unit problems are errors") {
  auto v = issues_of(std::string(kMz) + "");
  CHECK(v.empty());
  std::string t = kMz;
  t.replace(t.find("link_a.tau_phi_ms"), 17, "link_a.tau_phi_db");
  v = issues_of(t);
  CHECK(mentions(v, "link_a.tau_phi_db", "unit mismatch"));
  t = kMz;
  t.replace(t.find("link_a.tau_phi_ms"), 17, "link_a.tau_phi");
  v = issues_of(t);
  CHECK(mentions(v, "link_a.tau_phi", "missing unit suffix"));
  v = issues_of("experiment = mz\noverlap_db = 1\n");
  CHECK(mentions(v, "overlap_db", "no unit suffix"));
}

TEST_CASE("every problem is reported, not just the first") {
  const auto v = issues_of(R"(
experiment = mz
link_a.length_km = 50
link_a.loss_db = -1
link_a.tau_phi_ms = 2
link_a.tau_phi_ms = 3
link_b.length_km = 50
link_b.loss_db = 23
overlap = 1.5
garbage
mz.photon_rate_mcps = fast
run.duration_s = 1
g2.bin_width_ms = 0.1
g2.max_dt_ms = 5
)");
  CHECK(v.size() >= 6);
  CHECK(mentions(v, "link_a.loss_db", ">= 0"));
  CHECK(mentions(v, "link_a.tau_phi_ms", "duplicate"));
  CHECK(mentions(v, "overlap", "[0, 1]"));
  CHECK(mentions(v, "", "expected 'key = value'"));
  CHECK(mentions(v, "mz.photon_rate_mcps", "expected a number"));
  // Parse errors stop before the required-field pass; this one is found
  // once the file parses.
  std::string t = kMz;
  t.replace(t.find("overlap = 0.9"), 13, "");
  CHECK(mentions(issues_of(t), "overlap", "missing required field"));
}

TEST_CASE("physics-critical fields have no defaults") {
  auto v = issues_of("experiment = conversion\n");
  for (const char* k : {"detuning.delta_s", "detuning.delta_I", "detuning.delta_II", "pump.omega_I",
                        "cell.length"})
    CHECK(mentions(v, k, "missing required field"));
  v = issues_of("experiment = hom\n");
  for (const char* k : {"link_a.loss", "link_b.loss", "overlap", "hom.coherence_time"})
    CHECK(mentions(v, k, "missing required field"));
}

TEST_CASE("keys of another experiment give a warning") {
  const auto sc = parse_scenario_text(std::string(kMz) + "hom.coherence_time_us = 2\n");
  REQUIRE(sc.warnings.size() == 1);
  CHECK(sc.warnings[0].find("hom.coherence_time_us") != std::string::npos);
}

TEST_CASE("polcomp needs exactly one of drift rate and drift window") {
  const std::string base = "experiment = polcomp\nschedule.cadence_min = 5\nrun.duration_min = 10\n";
  CHECK(mentions(issues_of(base), "drift.rate", "exactly one"));
  CHECK(mentions(issues_of(base + "drift.rate_rad_per_sqrt_s = 0.1\ndrift.window_min = 3\n"), "drift.rate",
                 "exactly one"));
  const auto sc = parse_scenario_text(base + "drift.window_min = 3\n");
  CHECK(*sc.polcomp->drift_window_s == doctest::Approx(180.0));
}

TEST_CASE("edit distance") {
  CHECK(edit_distance("lenght", "length") == 2);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("kitten", "sitting") == 3);
}

TEST_CASE("conversion with the second pump off writes an efficiency of exactly zero") {
  const auto sc = parse_scenario_text(R"(
experiment = conversion
cell.length_cm = 7
cell.beam_diameter_mm = 0.29
cell.density_per_cm3 = 4e11
pump.omega_I_mhz = 20
pump.omega_II_mhz = 0
detuning.delta_s_mhz = 0
detuning.delta_I_mhz = 0
detuning.delta_II_mhz = 0
signal.shape = gaussian
signal.peak_rabi_mhz = 0.01
signal.center_ns = 150
signal.fwhm_ns = 50
numerics.n_z = 10
numerics.dt_ns = 0.2
numerics.window_ns = 400
)");
  const auto dir = tmp("conv");
  const auto res = run(sc, {dir, {}, {}});
  std::ifstream in(dir / "efficiency.csv");
  std::string line, header;
  while (std::getline(in, line) && line[0] == '#') {
  }
  header = line;
  std::getline(in, line);
  CHECK(header.find("efficiency") != std::string::npos);
  // delta_s, delta_I, delta_II, efficiency
  std::stringstream ss(line);
  std::string cell;
  for (int i = 0; i < 4; ++i) std::getline(ss, cell, ',');
  CHECK(cell == "0");
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest lists every output with its checksum; reruns are bit-identical") {
  const auto sc = parse_scenario_text(std::string(kMz) + "seed = 5\n");
  const auto d1 = tmp("mz1"), d2 = tmp("mz2"), d3 = tmp("mz3");
  const auto r1 = run(sc, {d1, {}, {}});
  const auto r2 = run(sc, {d2, {}, 3u});
  const auto r3 = run(sc, {d3, 6u, {}});
  REQUIRE(r1.outputs.size() == 3);
  for (std::size_t i = 0; i < r1.outputs.size(); ++i) {
    CHECK(r1.outputs[i].sha256 == io::sha256_file(d1 / r1.outputs[i].name));
    CHECK(r1.outputs[i].sha256 == r2.outputs[i].sha256);
    CHECK(r1.outputs[i].sha256 != r3.outputs[i].sha256);
  }
  const auto m = slurp(r1.manifest);
  for (const auto& f : r1.outputs) CHECK(m.find(f.sha256) != std::string::npos);
  CHECK(m.find("\"seed\": 5") != std::string::npos);
  CHECK(m.find("detector.efficiency") != std::string::npos);
  const auto g2 = slurp(d1 / "g2.csv");
  CHECK(g2.find("# config_sha256: " + r1.config_hash) != std::string::npos);
  CHECK(g2.find(r1.config_hash) != std::string::npos);
  CHECK(r1.config_hash != r3.config_hash);
  for (const auto& d : {d1, d2, d3}) std::filesystem::remove_all(d);
}

TEST_CASE("module errors carry the experiment stage") {
  auto sc = parse_scenario_text(kMz);
  sc.mz->photon_rate = -1.0;
  const auto dir = tmp("bad");
  try {
    run(sc, {dir, {}, {}});
    FAIL("expected a RunError");
  } catch (const RunError& e) {
    CHECK(e.stage().rfind("mz/", 0) == 0);
  }
  std::filesystem::remove_all(dir);
}
