#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace qnm::cli {

enum ExitCode : int { Ok = 0, InputError = 2, Infeasible = 3, NumericalFailure = 4 };

inline constexpr const char* kVersion = "0.1.0";

/// Provenance record written next to every run's outputs.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string version = kVersion;
  std::string timestamp;  // UTC, ISO 8601
  std::uint64_t seed = 0;
  std::vector<std::string> args;
  std::string summary_json = "{}";  // command-specific results

  std::string to_json() const;
};

/// Fixed CSV number format (%.12e) so that identical runs give identical bytes.
std::string format_number(double v);

/// Runs one `qnmopt` invocation; args excludes the program name.
/// Subcommands: spectrum, optimize, certify, simulate, splitting-probe, sweep.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qnm::cli
