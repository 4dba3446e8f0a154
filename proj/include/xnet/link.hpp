#pragma once

// Serial link transmission control: Magic/Start framing, credit-based flow
// control with a suspension threshold, node health piggybacked on credit
// words, and a serializer timing model.

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "xnet/fifo.hpp"
#include "xnet/types.hpp"
#include "xnet/wire.hpp"

namespace xnet::link {

enum class LineKind : std::uint8_t { Magic, Start, Data, Credit };

struct LineWord {
  LineKind kind = LineKind::Data;
  Flit bits;

  friend bool operator==(const LineWord&, const LineWord&) = default;
};

// Framing constants: 0xA55AF00D repeated, the Start word ends in its complement.
inline constexpr Flit kMagicBits{0xA55AF00DA55AF00DULL, 0xA55AF00DA55AF00DULL};
inline constexpr Flit kStartBits{0xA55AF00D5AA50FF2ULL, 0xA55AF00DA55AF00DULL};

inline constexpr LineWord kMagic{LineKind::Magic, kMagicBits};
inline constexpr LineWord kStart{LineKind::Start, kStartBits};

std::vector<LineWord> frame(const wire::Packet& p);

// Words on the line for a packet of `payload_len` bytes.
constexpr std::size_t frame_words(std::size_t payload_len) {
  return 2 + wire::packet_flits(payload_len);
}

struct HealthWord {
  std::uint8_t status = 0;
  std::uint8_t seq = 0;

  friend bool operator==(const HealthWord&, const HealthWord&) = default;
};

// Body of a Credit word: flits freed per virtual channel since the previous
// credit word, plus the sender's health.
struct CreditPayload {
  std::array<std::uint16_t, 2> restore{};
  HealthWord health;

  friend bool operator==(const CreditPayload&, const CreditPayload&) = default;
};

LineWord embed_health(const CreditPayload& c);
CreditPayload decode_credit(const LineWord& w);
// Throws std::invalid_argument unless `w` is a Credit word.
HealthWord extract_health(const LineWord& w);

struct CreditState {
  int credit = 0;
  int tred = 4;
  int initial = 0;

  friend bool operator==(const CreditState&, const CreditState&) = default;
};

// Credit never goes negative or above `initial`; both are InvariantViolation.
CreditState credit_consume(CreditState s, int n);
CreditState credit_restore(CreditState s, int n);
// Whole-packet gate: the packet starts only if it fits strictly above TRED.
constexpr bool can_transmit(const CreditState& s, int pkt_flits) {
  return s.credit - pkt_flits > s.tred;
}

struct SerialModel {
  double line_rate = 10e9;
  int coding_num = 64;
  int coding_den = 66;
  double clock_hz = 156.25e6;
  // When false, line_rate is taken as the usable post-coding rate.
  bool charge_coding = false;

  double effective_rate() const;
  int cycles_per_word() const;
  // Usable payload bits the line carries per clock cycle.
  double bits_per_cycle() const { return effective_rate() / clock_hz; }
};

std::uint64_t serial_cycles(std::uint64_t words, const SerialModel& m);

struct DeframerStats {
  std::uint64_t packets = 0;
  std::uint64_t resyncs = 0;
  std::uint64_t framing_drops = 0;
  std::uint64_t header_drops = 0;
  std::uint64_t crc_drops = 0;
  std::uint64_t credit_words = 0;
};

// Streaming receiver state machine. Accepts a word stream that may start
// mid-frame; Credit words are sideband and may appear anywhere.
class Deframer {
 public:
  struct Event {
    enum class Type { None, Flit, Credit, Dropped };
    Type type = Type::None;
    Slot slot;                 // Flit
    bool crc_ok = true;        // Flit of kind Footer
    CreditPayload credit;      // Credit
    int frame_words = 0;       // Flit of kind Footer: words of the whole frame
  };

  Event push(const LineWord& w);
  const DeframerStats& stats() const { return stats_; }

 private:
  enum class State { Idle, Hunt, GotMagic, ExpectHeader, InFrame };

  void lose_sync();

  State state_ = State::Idle;
  int remaining_ = 0;
  std::size_t bytes_left_ = 0;
  std::uint8_t vc_ = 0;
  std::uint16_t payload_len_ = 0;
  std::uint32_t crc_ = 0;
  std::uint32_t expected_crc_ = 0;
  DeframerStats stats_;
};

struct DeframeResult {
  std::vector<wire::Packet> packets;
  std::vector<CreditPayload> credits;
  DeframerStats stats;
};

DeframeResult deframe(std::span<const LineWord> words);

struct LinkParams {
  SerialModel serial;
  int tred = 4;
  int credit_batch = 16;
  int credit_timer = 64;
  // Transceiver plus cable pipeline, in cycles, after the last bit of a word
  // leaves the serializer.
  int wire_latency = 22;
  // Receiver buffer per virtual channel, in flits.
  int vc_capacity = 576;
};

struct LinkStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t data_words = 0;    // Magic, Start and flits
  std::uint64_t credit_words = 0;
  std::uint64_t payload_bytes = 0;
  std::int64_t first_word_cycle = -1;
  std::int64_t last_word_end = -1;  // last cycle the serializer was busy with data
  std::uint64_t stall_cycles = 0;
  std::uint64_t health_updates = 0;
  std::uint64_t health_duplicates = 0;
};

// One end of a bidirectional link: the transmit half feeds this end's
// outgoing wire, the receive half consumes the peer's outgoing wire. Credit
// words for data received here travel back on this end's outgoing wire.
class LinkEnd {
 public:
  LinkEnd(std::string name, const LinkParams& params);

  static void connect(LinkEnd& a, LinkEnd& b);
  bool connected() const { return peer_ != nullptr; }

  // Receive-side buffers, one per virtual channel. Sized by the owner; their
  // capacity must equal params.vc_capacity.
  void set_sinks(FlitFifo* vc0, FlitFifo* vc1);
  void set_trace(std::ostream* trace) { trace_ = trace; }

  // Transmit side.
  bool can_send(int vc, int flits) const { return can_transmit(credit_[vc], flits); }
  // Admission of a whole packet; returns false (and records a stall) when the
  // credit gate refuses it.
  bool try_reserve(int vc, int flits, std::uint64_t now);
  // Counts a cycle in which a ready packet was refused by the credit gate.
  void note_stall(std::uint64_t now, int flits);
  void enqueue(const Slot& s);
  std::size_t tx_backlog() const { return txq_.size(); }

  // Receive side: the owner drained `n` flits of `vc` from a sink.
  void on_drained(int vc, int n, bool footer);

  void set_health(std::uint8_t status);
  HealthWord local_health() const { return health_; }
  HealthWord peer_health() const { return peer_health_; }

  // Cycle phases, called in this order by the engine.
  // Returns number of data flits delivered to sinks.
  int receive(std::uint64_t now);
  // Returns true when a word started serializing this cycle.
  bool transmit(std::uint64_t now);
  void credit_update(std::uint64_t now);

  const CreditState& credit(int vc) const { return credit_[vc]; }
  int reserved(int vc) const { return reserved_[vc]; }
  const LinkStats& stats() const { return stats_; }
  const DeframerStats& rx_stats() const { return deframer_.stats(); }
  const std::string& name() const { return name_; }
  const LinkParams& params() const { return params_; }
  // Footer flits anywhere in this end's transmit path and outgoing wire.
  std::size_t footers_in_flight() const;

  // Every flit of credit for data flowing from `tx` to its peer on `vc` is
  // somewhere: still as credit, reserved, queued, on the wire, buffered,
  // drained-but-unreported, or riding back in a credit word.
  static bool credit_conserved(const LinkEnd& tx, int vc, std::string* why = nullptr);

 private:
  struct WireWord {
    std::uint64_t arrival;
    LineWord word;
    std::int8_t vc;       // data flits only, otherwise -1
    FlitKind kind;
  };

  void send(std::uint64_t now, const LineWord& w, std::int8_t vc, FlitKind kind);
  void trace(std::uint64_t now, const char* event, std::uint64_t words);

  std::string name_;
  LinkParams params_;
  int cycles_per_word_;
  LinkEnd* peer_ = nullptr;
  std::ostream* trace_ = nullptr;

  std::array<CreditState, 2> credit_{};
  std::array<int, 2> reserved_{};
  std::deque<Slot> txq_;
  std::deque<CreditPayload> credit_out_;
  int frame_pos_ = 0;  // 0 between frames, 1 Magic sent, 2 inside frame
  std::uint64_t serializer_free_at_ = 0;
  std::deque<WireWord> wire_;
  std::uint64_t last_stall_cycle_ = ~std::uint64_t{0};
  bool stalled_ = false;

  Deframer deframer_;
  std::array<FlitFifo*, 2> sinks_{};
  std::array<int, 2> drained_{};
  bool footer_drained_ = false;
  bool drained_now_ = false;
  bool timer_armed_ = false;
  std::uint64_t timer_start_ = 0;

  HealthWord health_;
  HealthWord health_sent_;
  HealthWord peer_health_;
  bool peer_health_seen_ = false;

  LinkStats stats_;
};

}  // namespace xnet::link
