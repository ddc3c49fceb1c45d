// Command-line experiment runner. Usage:
//   bisac <experiment> <scenario-file> --out <dir> [--seed N] [--sweep key=a:b:step]
// Experiments: solve, convergence-trace, beampattern, power-sweep,
// detection-roc. On failure an error.json with a machine-readable category
// lands in the output directory and the exit code identifies the class:
// 2 parse, 3 validation, 4 infeasible scenario, 5 solver failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bisac/experiments.hpp"

namespace {

int report_failure(const std::filesystem::path& out, const std::string& kind, int code,
                   const std::string& message, const std::string& constraint = "") {
  nlohmann::json doc{{"error", kind}, {"exit_code", code}, {"message", message}};
  if (!constraint.empty()) doc["constraint"] = constraint;
  try {
    std::filesystem::create_directories(out);
    bisac::detail::atomic_write(out, "error.json", doc.dump(2) + "\n");
  } catch (...) {
    // the message below is the fallback when the directory is unusable
  }
  std::cerr << "bisac: " << kind << ": " << message << '\n';
  return code;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw bisac::scenario_parse_error("cannot read scenario file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint beamforming and tag-detection experiment runner"};
  std::string experiment;
  std::string scenario_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string sweep_text;

  app.add_option("experiment", experiment,
                 "one of: solve, convergence-trace, beampattern, power-sweep, detection-roc")
      ->required();
  app.add_option("scenario", scenario_path, "scenario file (key = value lines)")->required();
  app.add_option("--out", out_dir, "output directory for artifacts")->required();
  auto* seed_opt = app.add_option("--seed", seed, "override the scenario seed");
  app.add_option("--sweep", sweep_text, "sweep range key=start:stop:step (power-sweep only)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::filesystem::path out(out_dir);
  try {
    bisac::Scenario scn = bisac::parse_scenario(read_file(scenario_path));
    if (seed_opt->count() > 0) scn.seed = seed;
    std::optional<bisac::SweepSpec> sweep;
    if (!sweep_text.empty()) sweep = bisac::parse_sweep(sweep_text);

    const auto files = bisac::run_experiment(experiment, scn, out, sweep);
    for (const auto& f : files) std::cout << (out / f).string() << '\n';
    return 0;
  } catch (const bisac::scenario_parse_error& e) {
    return report_failure(out, "parse", 2, e.what());
  } catch (const bisac::infeasible_scenario_error& e) {
    return report_failure(out, "infeasible", 4, e.what(), e.binding_constraint());
  } catch (const std::invalid_argument& e) {
    return report_failure(out, "validation", 3, e.what());
  } catch (const std::exception& e) {
    return report_failure(out, "solver", 5, e.what());
  }
}
