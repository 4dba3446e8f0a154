#pragma once

// Self-test layer on top of the fabric: traffic generator, consumer,
// performance records, the ping-pong latency application, bandwidth sweeps,
// and the register-file control plane. Host-side (NI) costs are modeled here.

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "xnet/fabric.hpp"

namespace xnet::harness {

struct HostModel {
  int write_cycles_per_word = 4;
  int read_cycles_per_word = 20;
  // Words the host moves per packet through the target controller.
  int words_per_packet = 3;
  double clock_hz = fabric::kClockHz;

  std::uint64_t write_cycles() const {
    return static_cast<std::uint64_t>(write_cycles_per_word) * static_cast<std::uint64_t>(words_per_packet);
  }
  std::uint64_t read_cycles() const {
    return static_cast<std::uint64_t>(read_cycles_per_word) * static_cast<std::uint64_t>(words_per_packet);
  }
};

enum class Pattern { Pingpong, Saturate, UniformRandom };

struct TrafficSpec {
  Pattern pattern = Pattern::Saturate;
  // Fixed payload size; when size_max > size the size is drawn uniformly in
  // [size, size_max] per packet.
  std::size_t size = 512;
  std::size_t size_max = 0;
  std::uint8_t ptype = 0;
  // Saturate: packets per sender port.
  std::uint64_t count = 0;
  // UniformRandom: injection window in cycles and per-node probability of a
  // new packet each cycle.
  std::uint64_t duration = 0;
  double rate = 0.0;
  // Concurrent intra-tile sender ports per source node.
  int ports = 1;
  // Saturate endpoints. Empty sources means every node.
  std::vector<Coord> sources;
  Coord dest;
  int dest_port = 0;
  std::uint64_t seed = 0;
};

struct Injection {
  std::uint64_t cycle = 0;  // earliest injection cycle
  Coord src;
  int port = 0;
  Coord dest;
  int dest_port = 0;
  std::uint16_t size = 0;
  std::uint32_t id = 0;  // sender port in bits 24-31, per-sender sequence below
};

// Ordered by cycle, then source node, then port. Throws ConfigError for
// absent nodes, bad ports or sizes above the maximum payload.
std::vector<Injection> traffic_generate(const TrafficSpec& spec, const fabric::Topology& topo,
                                        int intra_ports);

// Deterministic payload bytes for a given packet.
std::vector<std::uint8_t> payload_bytes(std::uint64_t seed, Coord src, std::uint32_t id,
                                        std::size_t size);

// Optional outputs of a run: link event trace and a dump of every delivered
// packet.
struct Observe {
  std::ostream* trace = nullptr;
  std::string trace_filter = "all";
  std::ostream* dump = nullptr;
};

struct PerfRecord {
  Coord src;
  Coord dest;
  int dest_port = 0;
  std::uint32_t id = 0;
  std::uint16_t size = 0;
  std::uint64_t inject_cycle = 0;
  std::uint64_t eject_cycle = 0;
};

// Feeds an injection schedule into the fabric with per-sender FIFO order
// (a rejected head is retried next cycle) and drains every ejection FIFO.
class Driver {
 public:
  Driver(fabric::Simulator& sim, std::vector<Injection> schedule, std::uint64_t seed);

  void inject_due();
  void consume();
  fabric::Hooks hooks();

  bool injection_done() const { return pending_ == 0; }
  bool drained() const;
  void set_consumer(bool enabled) { consumer_ = enabled; }
  void set_keep_records(bool keep) { keep_records_ = keep; }
  void set_dump(std::ostream* dump) { dump_ = dump; }

  const std::vector<PerfRecord>& records() const { return records_; }
  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t order_violations() const { return order_violations_; }
  std::uint64_t rejected_attempts() const { return rejected_; }
  std::uint64_t latency_sum() const { return latency_sum_; }
  std::uint64_t latency_max() const { return latency_max_; }

 private:
  using FlowKey = std::tuple<Coord, int, Coord, int>;

  fabric::Simulator& sim_;
  std::uint64_t seed_;
  std::vector<std::deque<Injection>> queues_;
  std::uint64_t pending_ = 0;
  bool consumer_ = true;
  bool keep_records_ = true;
  std::ostream* dump_ = nullptr;
  std::map<std::pair<Coord, std::uint32_t>, std::uint64_t> inject_cycle_;
  std::map<FlowKey, std::uint32_t> last_seq_;
  std::vector<PerfRecord> records_;
  std::uint64_t delivered_ = 0;
  std::uint64_t order_violations_ = 0;
  std::uint64_t rejected_ = 0;
  std::uint64_t latency_sum_ = 0;
  std::uint64_t latency_max_ = 0;
};

struct PingPongStats {
  int hops = 0;
  int iterations = 0;
  std::size_t size = 0;
  // Roundtrip including host costs, in seconds.
  double min_s = 0, avg_s = 0, max_s = 0;
  // Network-only roundtrip, in cycles.
  std::uint64_t net_min = 0, net_max = 0;
  double net_avg = 0;
  std::uint64_t host_cycles = 0;  // added to every roundtrip
};

// Shortest hop count between two nodes under the topology's routing.
int hop_count(const fabric::Topology& topo, const router::RouterConfig& rc, Coord a, Coord b);

// a == b loops through the node's own router. Throws ConfigError for absent
// nodes, InvariantViolation if the fabric stalls.
PingPongStats pingpong_latency(const fabric::Topology& topo, const fabric::SimConfig& cfg,
                               const HostModel& host, Coord a, Coord b, std::size_t size,
                               int iterations, const Observe& obs = {});

enum class SweepKind { Router, Link };

struct BandwidthRow {
  std::size_t size = 0;
  double gbps = 0;
  double efficiency = 0;
  double peak_gbps = 0;
  std::uint64_t busy_cycles = 0;
  std::uint64_t packets = 0;
};

struct SweepParams {
  SweepKind kind = SweepKind::Router;
  int senders = 1;
  std::uint64_t packets_per_sender = 200;
  std::uint64_t seed = 0;
};

// One saturated run per size. Router sweeps use a single node with the
// senders on intra ports 0..s-1 all aimed at intra port s; link sweeps use
// two nodes and measure the serial link between them.
BandwidthRow bandwidth_point(std::size_t size, const fabric::SimConfig& cfg, const SweepParams& p,
                             const Observe& obs = {});
std::vector<BandwidthRow> bandwidth_sweep(const std::vector<std::size_t>& sizes,
                                          const fabric::SimConfig& cfg, const SweepParams& p);

// Closed form for a saturated link: payload over payload plus the four
// words of framing, header and footer overhead (plus padding).
double link_efficiency_model(std::size_t size);

// Register map. Values are 64-bit.
enum Reg : std::uint32_t {
  kRegCoord = 0x00,        // x | y << 8 | z << 16
  kRegLattice = 0x01,      // nx-1 | ny-1 << 8 | nz-1 << 16 | wrap bits << 24
  kRegDimOrder = 0x02,     // dims in order, 2 bits each
  kRegArbPolicy = 0x03,    // 0 round robin, 1 fixed
  kRegArbPriority = 0x04,  // port numbers, 4 bits each, highest priority first; 0xF ends
  kRegPortDisable = 0x05,
  kRegVcPolicy = 0x06,     // 0 offset sign, 1 dateline
  kRegFifoStatus = 0x10,   // + port: occupied flits in both VCs
  kRegLinkStatus = 0x20,   // bit d: inter-tile port d connected; bits 8+d: stalled
  kRegInjected = 0x21,
  kRegEjected = 0x22,
  kRegDropped = 0x23,
  kRegHealth = 0x24,       // local health status byte, broadcast on every link
};

class RegisterError : public std::invalid_argument {
 public:
  enum class Kind { InvalidRegister, ReadOnly };
  RegisterError(Kind kind, const std::string& what) : std::invalid_argument(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::uint64_t reg_read(fabric::Simulator& sim, Coord node, std::uint32_t reg);
// Configuration writes take effect from the next cycle.
void reg_write(fabric::Simulator& sim, Coord node, std::uint32_t reg, std::uint64_t value);

}  // namespace xnet::harness
