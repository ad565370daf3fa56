#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "qlink/runner.hpp"
#include "qlink/scenario.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kRuntime = 3;

void print_warnings(const qlink::cli::Scenario& sc) {
  for (const auto& w : sc.warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qlinksim: quantum network link simulator"};
  app.set_version_flag("--version", qlink::cli::version());
  app.require_subcommand(1);

  std::string file;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "Run a scenario and write its outputs");
  run->add_option("scenario", file, "Scenario file")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_dir, "Output directory (default: $QLINKSIM_OUT, else ./qlinksim-out)");
  run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Check a scenario file without running it");
  validate->add_option("scenario", file, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  qlink::cli::Scenario sc;
  try {
    sc = qlink::cli::parse_scenario(file);
  } catch (const qlink::cli::ConfigError& e) {
    std::cerr << file << ": " << e.what() << '\n';
    return kInvalid;
  }
  print_warnings(sc);

  if (*validate) {
    std::cout << file << ": ok (" << qlink::cli::experiment_name(sc.experiment) << ", "
              << sc.defaulted_fields().size() << " defaulted fields)\n";
    std::cout << sc.resolved_text();
    return kOk;
  }

  qlink::cli::RunOptions opt;
  opt.seed = seed;
  opt.threads = threads;
  if (!out_dir.empty())
    opt.out_dir = out_dir;
  else if (const char* env = std::getenv("QLINKSIM_OUT"); env && *env)
    opt.out_dir = env;
  else
    opt.out_dir = "qlinksim-out";

  try {
    const auto res = qlink::cli::run(std::move(sc), opt);
    for (const auto& f : res.outputs) std::cout << f.sha256 << "  " << (res.out_dir / f.name).string() << '\n';
    std::cout << "manifest: " << res.manifest.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
