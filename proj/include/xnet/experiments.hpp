#pragma once

// The canned experiments behind the command-line tool, and their artifacts:
// results.csv, summary.json, and the optional trace.csv and packets.txt.

#include <string>

#include "json.hpp"
#include "xnet/config.hpp"

namespace xnet::experiments {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitInvariant = 3,
  kExitDeadlock = 4,
  kExitIo = 5,
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Artifacts {
  int exit_code = kExitOk;
  std::string csv;
  nlohmann::ordered_json summary;
  std::string trace;    // empty when tracing is off
  std::string packets;  // empty unless packets are dumped
  std::string message;  // human-readable outcome
};

// Fills experiment-dependent defaults (topology, sizes, senders) so the
// echoed config is complete. Throws ConfigError.
config::ExperimentConfig resolve(config::ExperimentConfig cfg);

// `cfg` must be resolved. Config and invariant failures are returned as exit
// codes, never thrown.
Artifacts run_experiment(const config::ExperimentConfig& cfg);

// Writes into cfg.output.dir, creating it if needed. Throws IoError.
void write_artifacts(const Artifacts& a, const config::ExperimentConfig& cfg);

// Column line of results.csv; a run without records writes only this.
std::string csv_header(const std::string& experiment);

// Six significant digits, as used in every CSV.
std::string fmt(double v);

}  // namespace xnet::experiments
