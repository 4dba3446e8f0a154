#pragma once

// Crossbar router: intra-tile and inter-tile switch ports with per-VC input
// FIFOs, a switch gate enforcing whole-packet (cut-through) admission,
// dimension-ordered routing with virtual-channel selection, and a per-output
// arbiter.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "xnet/fifo.hpp"
#include "xnet/link.hpp"
#include "xnet/types.hpp"
#include "xnet/wire.hpp"

namespace xnet::router {

inline constexpr int kIntraPayloadDepth = 4096;
inline constexpr int kInterPayloadDepth = 1024;
inline constexpr int kHeaderFifoDepth = 128;

// Flit buffers hold header, payload and footer flits together; the
// inter-tile budget is split evenly between the two virtual channels.
inline constexpr int kIntraBufferFlits = kIntraPayloadDepth + kHeaderFifoDepth;
inline constexpr int kInterVcBufferFlits = (kInterPayloadDepth + kHeaderFifoDepth) / 2;

struct PortId {
  bool inter = false;
  int index = 0;  // intra-tile port number, or Direction value when inter

  static constexpr PortId intra(int i) { return {false, i}; }
  static constexpr PortId inter_tile(Direction d) { return {true, static_cast<int>(d)}; }
  Direction direction() const { return static_cast<Direction>(index); }

  friend constexpr bool operator==(const PortId&, const PortId&) = default;
};

std::string to_string(const PortId& p);

enum class ArbPolicy { RoundRobin, Fixed };
enum class VcPolicy { OffsetSign, Dateline };

struct RouterConfig {
  Coord my_coord;
  std::array<int, 3> extents{1, 1, 1};
  std::array<bool, 3> wrap{false, false, false};
  std::array<int, 3> dim_order{0, 1, 2};
  // Bit i disables router port i (intra ports first, then X+,X-,Y+,Y-,Z+,Z-).
  std::uint32_t disabled_ports = 0;
  ArbPolicy arb_policy = ArbPolicy::RoundRobin;
  // Input ports, highest priority first; used by ArbPolicy::Fixed.
  std::vector<int> priority;
  VcPolicy vc_policy = VcPolicy::OffsetSign;
  int routing_latency = 8;
  int turnaround = 2;
  int intra_ports = 3;
  int intra_buffer = kIntraBufferFlits;
  int inter_vc_buffer = kInterVcBufferFlits;
  // Direct links to non-lattice neighbours; taken before dimension order.
  std::vector<std::pair<Coord, Direction>> express;

  int num_ports() const { return intra_ports + kDirections; }
  int port_index(const PortId& p) const { return p.inter ? intra_ports + p.index : p.index; }
  PortId port_id(int index) const {
    return index < intra_ports ? PortId::intra(index)
                               : PortId::inter_tile(static_cast<Direction>(index - intra_ports));
  }
  bool port_disabled(const PortId& p) const {
    return ((disabled_ports >> port_index(p)) & 1u) != 0;
  }

  // Throws ConfigError.
  void validate() const;
};

class Unroutable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Direction of the minimal path along `dim`; ties on a ring go plus.
bool minimal_plus(const RouterConfig& cfg, int my, int dest, int dim);

std::optional<PortId> try_route(const RouterConfig& cfg, Coord dest, int dest_port);
// Throws Unroutable when the dimension-ordered port is disabled or absent.
PortId route(const RouterConfig& cfg, Coord dest, int dest_port = 0);

// 1 = upper, 0 = lower. Requires a nonzero offset along `dim`. `src` is the
// packet's source; the dateline policy needs it to know whether the packet
// already went through the wraparound link of this dimension.
std::uint8_t select_vc(const RouterConfig& cfg, Coord src, Coord my, Coord dest, int dim);

constexpr bool gate_admit(std::size_t free_flits, std::size_t pkt_flits) {
  return free_flits >= pkt_flits;
}

// Requests are slot ids (input port * 2 + vc).
class Arbiter {
 public:
  explicit Arbiter(int slots = 0) : slots_(slots) {}

  int grant(std::span<const int> requests, ArbPolicy policy, std::span<const int> priority);
  int last_granted() const { return last_; }
  void set_last_granted(int slot) { last_ = slot; }

 private:
  int slots_;
  int last_ = -1;
};

struct OutputStats {
  std::int64_t first_request_cycle = -1;
  std::int64_t first_flit_cycle = -1;
  std::int64_t last_footer_cycle = -1;
  std::uint64_t packets = 0;
  std::uint64_t flits = 0;
  std::uint64_t payload_bytes = 0;
};

struct GrantRecord {
  std::uint64_t cycle;
  int output;
  int input_slot;
};

struct CycleResult {
  int flits_moved = 0;
  int dropped = 0;
};

class Router {
 public:
  explicit Router(RouterConfig cfg);

  const RouterConfig& config() const { return cfg_; }
  // Configuration as last written, including a change not yet applied.
  const RouterConfig& latched_config() const { return pending_ ? *pending_ : cfg_; }
  // Takes effect from the next call to cycle().
  void reconfigure(const RouterConfig& cfg);

  void attach_link(Direction d, link::LinkEnd* end);
  link::LinkEnd* link(Direction d) const { return links_[static_cast<int>(d)]; }

  FlitFifo& input(int port, int vc) { return inputs_[slot(port, vc)].fifo; }
  const FlitFifo& input(int port, int vc) const { return inputs_[slot(port, vc)].fifo; }
  FlitFifo& eject_fifo(int intra_port) { return ejects_[intra_port]; }
  const FlitFifo& eject_fifo(int intra_port) const { return ejects_[intra_port]; }

  // Places a whole packet into an intra-tile input FIFO; false when it does
  // not fit (never partial).
  bool inject(int intra_port, std::span<const Flit> flits);

  // Stops an output from granting anything; fault injection for tests.
  void freeze_output(int port, bool frozen) { outputs_[port].frozen = frozen; }

  CycleResult cycle(std::uint64_t now);
  bool idle() const;

  const OutputStats& output_stats(int port) const { return outputs_[port].stats; }
  void set_grant_log(std::vector<GrantRecord>* log) { grant_log_ = log; }

  std::size_t input_occupancy(int port) const;
  std::size_t footers_buffered() const;
  std::uint64_t dropped() const { return dropped_; }

 private:
  enum class State { Idle, Routing, Active, Discard };

  struct InputVc {
    FlitFifo fifo;
    State state = State::Idle;
    std::uint64_t ready_at = 0;
    int out = -1;
    std::uint8_t out_vc = 0;
    int remaining = 0;
    int flits = 0;
    std::uint16_t payload_len = 0;
  };

  struct Output {
    bool busy = false;
    int src = -1;
    std::uint64_t free_at = 0;
    bool frozen = false;
    Arbiter arbiter;
    std::vector<int> waiting;  // input slots routed here, in arrival order
    OutputStats stats;
  };

  static int slot(int port, int vc) { return port * 2 + vc; }
  void start_packet(int s, std::uint64_t now, CycleResult& res);
  bool admissible(int out, const InputVc& in) const;
  void note_stall(int out, const InputVc& in, std::uint64_t now);
  void move_flit(int out, std::uint64_t now, CycleResult& res);
  void drained(int s, bool footer);

  RouterConfig cfg_;
  std::optional<RouterConfig> pending_;
  std::vector<InputVc> inputs_;
  std::vector<Output> outputs_;
  std::vector<FlitFifo> ejects_;
  std::vector<int> eject_reserved_;
  std::array<link::LinkEnd*, kDirections> links_{};
  std::vector<GrantRecord>* grant_log_ = nullptr;
  std::vector<int> requests_;
  std::uint64_t dropped_ = 0;
};

}  // namespace xnet::router
