#pragma once

// Experiment configuration: defaults, strict JSON reading (unknown keys are
// errors naming the key) and a canonical JSON echo.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "xnet/fabric.hpp"
#include "xnet/harness.hpp"

namespace xnet::config {

struct Workload {
  // Empty means the experiment's default list.
  std::vector<std::size_t> sizes;
  std::vector<int> hops{1, 2};
  // 0 means the experiment's default (1 for router sweeps, 2 for link sweeps).
  int senders = 0;
  int iterations = 10;
  std::uint64_t packets_per_sender = 200;
  // Soak: per-node injection probability per cycle, injection window, and
  // payload size range.
  double rate = 0.01;
  std::uint64_t cycles = 100000;
  std::size_t size_min = 16;
  std::size_t size_max = 512;
  int ports = 1;
};

struct Output {
  std::string dir = ".";
  std::string trace_link;  // empty: no trace
  bool dump_packets = false;
};

struct ExperimentConfig {
  std::string experiment = "pingpong";
  // "mesh2x2", "qfdb4", "mesh:NxMxK" or "torus:NxMxK"; empty picks the
  // experiment default.
  std::string topology;
  fabric::SimConfig sim;
  harness::HostModel host;
  Workload workload;
  std::uint64_t seed = 0;
  Output output;
  int jobs = 1;
};

inline const std::vector<std::string>& experiments() {
  static const std::vector<std::string> names{"pingpong", "bandwidth-router", "bandwidth-link",
                                              "soak", "deadlock-demo"};
  return names;
}

// Throws ConfigError.
fabric::Topology parse_topology(const std::string& spec);
std::array<int, 3> parse_dim_order(const std::string& s);
std::string dim_order_name(const std::array<int, 3>& order);
// "a..b:step" or a comma list.
std::vector<std::size_t> parse_sizes(const std::string& s);
std::vector<int> parse_int_list(const std::string& s);

// Applies the members present in `j` on top of `cfg`. A summary document is
// accepted through its "config" member. Throws ConfigError naming the key.
void apply_json(ExperimentConfig& cfg, const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

// Cross-field checks; throws ConfigError.
void validate(const ExperimentConfig& cfg);

}  // namespace xnet::config
