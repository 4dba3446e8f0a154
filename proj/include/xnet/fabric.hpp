#pragma once

// Topology presets and the cycle-driven engine that advances every link
// endpoint and router of a lattice in a fixed phase order.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xnet/link.hpp"
#include "xnet/router.hpp"
#include "xnet/types.hpp"
#include "xnet/wire.hpp"

namespace xnet::fabric {

inline constexpr double kClockHz = 156.25e6;

// A bidirectional cable between port `da` of `a` and port `db` of `b`.
struct LinkSpec {
  Coord a;
  Direction da;
  Coord b;
  Direction db;
};

struct Topology {
  std::string preset;
  std::array<int, 3> extents{1, 1, 1};
  std::array<bool, 3> wrap{false, false, false};
  std::vector<Coord> nodes;
  std::vector<LinkSpec> links;
  // Per node (same order as `nodes`): destinations reached over a direct
  // non-lattice cable.
  std::vector<std::vector<std::pair<Coord, Direction>>> express;

  int node_index(Coord c) const;  // -1 when absent
  bool contains(Coord c) const { return node_index(c) >= 0; }
  std::size_t unidirectional_links() const { return links.size() * 2; }
};

// Presets: "mesh2x2", "qfdb4", "mesh", "torus". `extents` is used by the
// last two. Throws ConfigError.
Topology build_topology(std::string_view preset, std::array<int, 3> extents = {1, 1, 1});
Topology build_lattice(std::array<int, 3> extents, std::array<bool, 3> wrap,
                       std::string preset = "custom");

struct SimConfig {
  // Template for every node; coordinate, extents, wrap and express links are
  // filled in from the topology.
  router::RouterConfig router;
  link::LinkParams link;
  // Recount conservation and credits every this many steps (0 = never).
  std::uint64_t check_interval = 0;
  std::uint64_t watchdog_window = 10000;
};

struct GlobalCounters {
  std::uint64_t cycle = 0;
  std::uint64_t injected = 0;
  std::uint64_t ejected = 0;
  std::uint64_t dropped = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t corrupt = 0;  // part of `dropped`: failed CRC or framing at ejection
  std::uint64_t stall_cycles = 0;
  std::uint64_t flits_moved = 0;
};

struct NodeCounters {
  std::uint64_t injected = 0;
  std::uint64_t ejected = 0;
  std::uint64_t dropped = 0;  // discarded by this node's router or failed at its ejection
};

struct Delivery {
  wire::Packet packet;
  std::uint64_t cycle = 0;
  int port = 0;
};

struct RunResult {
  GlobalCounters counters;
  bool done = false;  // predicate satisfied
  bool possible_deadlock = false;
  std::string report;
};

struct Hooks {
  std::function<void(class Simulator&)> before_step;
  std::function<void(class Simulator&)> after_step;
};

class Simulator {
 public:
  Simulator(Topology topo, SimConfig cfg);
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  const Topology& topology() const { return topo_; }
  const SimConfig& config() const { return cfg_; }
  std::uint64_t cycle() const { return cycle_; }
  double seconds() const { return static_cast<double>(cycle_) / kClockHz; }

  router::Router& router(Coord c);
  const router::Router& router(Coord c) const;
  // nullptr for an unconnected port.
  link::LinkEnd* link(Coord c, Direction d);
  const link::LinkEnd* link(Coord c, Direction d) const;
  std::vector<const link::LinkEnd*> links() const;

  // Whole packet or nothing. Throws ConfigError for an absent node or port.
  bool inject(Coord node, const wire::Packet& p, int port = 0);
  // Whether a packet of `payload_len` bytes would be accepted right now.
  bool can_inject(Coord node, std::size_t payload_len, int port = 0) const;
  bool can_eject(Coord node, int port = 0) const;
  // Pops one complete packet; packets failing the CRC are counted as
  // corrupt drops and skipped.
  std::optional<Delivery> eject(Coord node, int port = 0);

  void step();
  RunResult run_until(const std::function<bool(const Simulator&)>& done,
                      std::uint64_t max_cycles, const Hooks& hooks = {});

  // True iff nothing moved for `window` cycles while packets are in flight.
  bool detect_stall(std::uint64_t window) const;

  GlobalCounters counters() const;
  NodeCounters node_counters(Coord c) const;

  // Node health status, carried to the neighbours inside credit words.
  void set_health(Coord c, std::uint8_t status);
  std::uint8_t health(Coord c) const { return node(c).health; }

  // Footer flits physically present in buffers, queues and wires.
  std::uint64_t in_flight_recount() const;
  // Throws InvariantViolation stamped with the current cycle.
  void check_invariants() const;
  std::string stall_report() const;

  // Trace CSV rows go to `out` for links whose name contains `filter`
  // ("all" or empty selects every link).
  void set_trace(std::ostream* out, const std::string& filter = "all");

 private:
  struct Node {
    Coord coord;
    std::unique_ptr<router::Router> router;
    std::array<std::unique_ptr<link::LinkEnd>, kDirections> links;
    std::uint64_t injected = 0;
    std::uint64_t ejected = 0;
    std::uint64_t corrupt = 0;
    std::uint8_t health = 0;
  };

  Node& node(Coord c);
  const Node& node(Coord c) const;

  Topology topo_;
  SimConfig cfg_;
  std::vector<Node> nodes_;
  std::uint64_t cycle_ = 0;
  std::uint64_t last_progress_ = 0;
  std::uint64_t injected_ = 0;
  std::uint64_t ejected_ = 0;
  std::uint64_t corrupt_ = 0;
  std::uint64_t flits_moved_ = 0;
  std::vector<Flit> scratch_;
};

}  // namespace xnet::fabric
