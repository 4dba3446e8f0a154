#include "xnet/link.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace xnet::link {

std::vector<LineWord> frame(const wire::Packet& p) {
  std::vector<LineWord> out;
  out.reserve(frame_words(p.payload.size()));
  out.push_back(kMagic);
  out.push_back(kStart);
  for (const Flit& f : wire::to_flits(p)) out.push_back({LineKind::Data, f});
  return out;
}

// Credit word layout: bits 0-15 vc0 restore, 16-31 vc1 restore,
// 32-39 health status, 40-47 health seq.
LineWord embed_health(const CreditPayload& c) {
  Flit f;
  f.lo = static_cast<std::uint64_t>(c.restore[0]) | static_cast<std::uint64_t>(c.restore[1]) << 16 |
         static_cast<std::uint64_t>(c.health.status) << 32 |
         static_cast<std::uint64_t>(c.health.seq) << 40;
  return {LineKind::Credit, f};
}

CreditPayload decode_credit(const LineWord& w) {
  if (w.kind != LineKind::Credit) throw std::invalid_argument("not a Credit word");
  CreditPayload c;
  c.restore[0] = static_cast<std::uint16_t>(w.bits.lo);
  c.restore[1] = static_cast<std::uint16_t>(w.bits.lo >> 16);
  c.health.status = static_cast<std::uint8_t>(w.bits.lo >> 32);
  c.health.seq = static_cast<std::uint8_t>(w.bits.lo >> 40);
  return c;
}

HealthWord extract_health(const LineWord& w) { return decode_credit(w).health; }

CreditState credit_consume(CreditState s, int n) {
  if (n < 0 || n > s.credit) {
    throw InvariantViolation("credit underflow: consume " + std::to_string(n) + " with " +
                             std::to_string(s.credit) + " left");
  }
  s.credit -= n;
  return s;
}

CreditState credit_restore(CreditState s, int n) {
  if (n < 0 || s.credit + n > s.initial) {
    throw InvariantViolation("credit overflow: restore " + std::to_string(n) + " onto " +
                             std::to_string(s.credit) + " of " + std::to_string(s.initial));
  }
  s.credit += n;
  return s;
}

double SerialModel::effective_rate() const {
  if (!charge_coding) return line_rate;
  return line_rate * static_cast<double>(coding_num) / static_cast<double>(coding_den);
}

int SerialModel::cycles_per_word() const {
  const double cycles = kFlitBits * clock_hz / effective_rate();
  return std::max(1, static_cast<int>(std::ceil(cycles - 1e-9)));
}

std::uint64_t serial_cycles(std::uint64_t words, const SerialModel& m) {
  return words * static_cast<std::uint64_t>(m.cycles_per_word());
}

void Deframer::lose_sync() {
  if (state_ != State::Hunt) ++stats_.resyncs;
  state_ = State::Hunt;
}

Deframer::Event Deframer::push(const LineWord& w) {
  Event ev;
  if (w.kind == LineKind::Credit) {
    ++stats_.credit_words;
    ev.type = Event::Type::Credit;
    ev.credit = decode_credit(w);
    return ev;
  }
  const bool magic = w.kind == LineKind::Magic && w.bits == kMagicBits;
  const bool start = w.kind == LineKind::Start && w.bits == kStartBits;

  switch (state_) {
    case State::Idle:
    case State::Hunt:
      if (magic) {
        state_ = State::GotMagic;
      } else {
        lose_sync();
      }
      break;

    case State::GotMagic:
      if (start) {
        state_ = State::ExpectHeader;
      } else if (magic) {
        ++stats_.resyncs;
      } else {
        lose_sync();
      }
      break;

    case State::ExpectHeader:
      if (w.kind != LineKind::Data) {
        ++stats_.framing_drops;
        state_ = magic ? State::GotMagic : State::Hunt;
        ev.type = Event::Type::Dropped;
        break;
      }
      try {
        const wire::DecodedHeader dh = wire::decode_header(w.bits);
        Flit fixed = w.bits;
        wire::secded_correct(fixed);
        payload_len_ = dh.header.payload_len;
        bytes_left_ = payload_len_;
        remaining_ = static_cast<int>(wire::payload_flits(payload_len_)) + 1;
        vc_ = dh.header.vc;
        crc_ = 0xFFFFFFFFu;
        state_ = State::InFrame;
        ev.type = Event::Type::Flit;
        ev.slot = {fixed, FlitKind::Header, vc_};
      } catch (const wire::DecodeError&) {
        ++stats_.header_drops;
        state_ = State::Hunt;
        ev.type = Event::Type::Dropped;
      }
      break;

    case State::InFrame:
      if (w.kind != LineKind::Data) {
        // Truncated frame: the next Magic starts over.
        ++stats_.framing_drops;
        state_ = magic ? State::GotMagic : State::Hunt;
        ev.type = Event::Type::Dropped;
        break;
      }
      --remaining_;
      ev.type = Event::Type::Flit;
      if (remaining_ == 0) {
        const wire::Footer ft = wire::decode_footer(w.bits);
        const std::uint32_t crc = crc_ ^ 0xFFFFFFFFu;
        ev.slot = {w.bits, FlitKind::Footer, vc_};
        ev.crc_ok = crc == ft.crc32;
        ev.frame_words = static_cast<int>(frame_words(payload_len_));
        if (ev.crc_ok) {
          ++stats_.packets;
        } else {
          ++stats_.crc_drops;
        }
        state_ = State::Idle;
      } else {
        const std::size_t n = std::min<std::size_t>(kFlitBytes, bytes_left_);
        std::uint8_t buf[kFlitBytes];
        for (std::size_t k = 0; k < n; ++k) {
          buf[k] = static_cast<std::uint8_t>((k < 8 ? w.bits.lo : w.bits.hi) >> (8 * (k % 8)));
        }
        crc_ = wire::crc32_update(crc_, std::span<const std::uint8_t>(buf, n));
        bytes_left_ -= n;
        ev.slot = {w.bits, FlitKind::Payload, vc_};
      }
      break;
  }
  return ev;
}

DeframeResult deframe(std::span<const LineWord> words) {
  DeframeResult result;
  Deframer d;
  std::vector<Flit> current;
  for (const LineWord& w : words) {
    const Deframer::Event ev = d.push(w);
    switch (ev.type) {
      case Deframer::Event::Type::Credit:
        result.credits.push_back(ev.credit);
        break;
      case Deframer::Event::Type::Dropped:
        current.clear();
        break;
      case Deframer::Event::Type::Flit:
        if (ev.slot.kind == FlitKind::Header) current.clear();
        current.push_back(ev.slot.flit);
        if (ev.slot.kind == FlitKind::Footer) {
          if (ev.crc_ok) result.packets.push_back(wire::from_flits(current));
          current.clear();
        }
        break;
      case Deframer::Event::Type::None:
        break;
    }
  }
  result.stats = d.stats();
  return result;
}

LinkEnd::LinkEnd(std::string name, const LinkParams& params)
    : name_(std::move(name)), params_(params), cycles_per_word_(params.serial.cycles_per_word()) {
  for (auto& c : credit_) c = {params.vc_capacity, params.tred, params.vc_capacity};
}

void LinkEnd::connect(LinkEnd& a, LinkEnd& b) {
  a.peer_ = &b;
  b.peer_ = &a;
}

void LinkEnd::set_sinks(FlitFifo* vc0, FlitFifo* vc1) {
  sinks_ = {vc0, vc1};
  for (FlitFifo* s : sinks_) {
    if (s != nullptr && s->capacity() != static_cast<std::size_t>(params_.vc_capacity)) {
      throw ConfigError("link sink capacity must equal the credit initial value");
    }
  }
}

void LinkEnd::note_stall(std::uint64_t now, int flits) {
  if (last_stall_cycle_ != now) {
    ++stats_.stall_cycles;
    last_stall_cycle_ = now;
  }
  if (!stalled_) {
    stalled_ = true;
    trace(now, "stall", static_cast<std::uint64_t>(flits));
  }
}

bool LinkEnd::try_reserve(int vc, int flits, std::uint64_t now) {
  if (!can_transmit(credit_[vc], flits)) {
    note_stall(now, flits);
    return false;
  }
  stalled_ = false;
  credit_[vc] = credit_consume(credit_[vc], flits);
  reserved_[vc] += flits;
  return true;
}

void LinkEnd::enqueue(const Slot& s) {
  if (reserved_[s.vc] <= 0) {
    throw InvariantViolation(name_ + ": flit enqueued without reserved credit");
  }
  --reserved_[s.vc];
  txq_.push_back(s);
}

void LinkEnd::on_drained(int vc, int n, bool footer) {
  drained_[vc] += n;
  footer_drained_ = footer_drained_ || footer;
  drained_now_ = drained_now_ || n > 0;
}

void LinkEnd::set_health(std::uint8_t status) {
  if (status != health_.status) {
    health_.status = status;
    ++health_.seq;
  }
}

void LinkEnd::send(std::uint64_t now, const LineWord& w, std::int8_t vc, FlitKind kind) {
  wire_.push_back({now + static_cast<std::uint64_t>(cycles_per_word_ + params_.wire_latency), w,
                   vc, kind});
  serializer_free_at_ = now + static_cast<std::uint64_t>(cycles_per_word_);
}

void LinkEnd::trace(std::uint64_t now, const char* event, std::uint64_t words) {
  if (trace_ != nullptr) *trace_ << now << ',' << name_ << ',' << event << ',' << words << '\n';
}

int LinkEnd::receive(std::uint64_t now) {
  if (peer_ == nullptr) return 0;
  int delivered = 0;
  auto& in = peer_->wire_;
  while (!in.empty() && in.front().arrival <= now) {
    const Deframer::Event ev = deframer_.push(in.front().word);
    in.pop_front();
    switch (ev.type) {
      case Deframer::Event::Type::Credit: {
        const CreditPayload& c = ev.credit;
        for (int vc = 0; vc < 2; ++vc) credit_[vc] = credit_restore(credit_[vc], c.restore[vc]);
        if (peer_health_seen_ && c.health == peer_health_) {
          ++stats_.health_duplicates;
        } else {
          peer_health_ = c.health;
          peer_health_seen_ = true;
          ++stats_.health_updates;
        }
        break;
      }
      case Deframer::Event::Type::Flit: {
        FlitFifo* sink = sinks_[ev.slot.vc];
        if (sink == nullptr) throw InvariantViolation(name_ + ": no receive buffer for vc");
        sink->push(ev.slot);
        ++delivered;
        if (ev.slot.kind == FlitKind::Footer) trace(now, "rx", static_cast<std::uint64_t>(ev.frame_words));
        break;
      }
      case Deframer::Event::Type::Dropped:
      case Deframer::Event::Type::None:
        break;
    }
  }
  return delivered;
}

bool LinkEnd::transmit(std::uint64_t now) {
  if (peer_ == nullptr || now < serializer_free_at_) return false;
  if (!credit_out_.empty()) {
    send(now, embed_health(credit_out_.front()), -1, FlitKind::Payload);
    credit_out_.pop_front();
    ++stats_.credit_words;
    trace(now, "credit", 1);
    return true;
  }
  if (txq_.empty()) return false;

  LineWord w;
  std::int8_t vc = -1;
  FlitKind kind = FlitKind::Payload;
  if (frame_pos_ == 0) {
    if (txq_.front().kind != FlitKind::Header) {
      throw InvariantViolation(name_ + ": frame does not start with a header flit");
    }
    w = kMagic;
    frame_pos_ = 1;
    ++stats_.frames_sent;
    const auto len = static_cast<std::size_t>(txq_.front().flit.field(56, 16));
    stats_.payload_bytes += len;
    if (stats_.first_word_cycle < 0) stats_.first_word_cycle = static_cast<std::int64_t>(now);
    trace(now, "tx", frame_words(len));
  } else if (frame_pos_ == 1) {
    w = kStart;
    frame_pos_ = 2;
  } else {
    const Slot s = txq_.front();
    txq_.pop_front();
    w = {LineKind::Data, s.flit};
    vc = static_cast<std::int8_t>(s.vc);
    kind = s.kind;
    if (s.kind == FlitKind::Footer) frame_pos_ = 0;
  }
  send(now, w, vc, kind);
  ++stats_.data_words;
  stats_.last_word_end = static_cast<std::int64_t>(now) + cycles_per_word_ - 1;
  return true;
}

void LinkEnd::credit_update(std::uint64_t now) {
  const int total = drained_[0] + drained_[1];
  // A health change is announced even on a link with no data to credit.
  const bool health_dirty = health_ != health_sent_;
  if (total == 0 && !health_dirty) {
    footer_drained_ = false;
    drained_now_ = false;
    return;
  }
  // The timer counts idle cycles: it restarts whenever more flits drain, so a
  // packet flowing through is credited once, at its footer.
  if (!timer_armed_ || drained_now_) {
    timer_armed_ = true;
    timer_start_ = now;
  }
  drained_now_ = false;
  const bool batch_ready = footer_drained_ && total >= params_.credit_batch;
  const bool timer_fired = now - timer_start_ >= static_cast<std::uint64_t>(params_.credit_timer);
  footer_drained_ = false;
  if (!batch_ready && !timer_fired) return;

  CreditPayload c;
  c.restore = {static_cast<std::uint16_t>(drained_[0]), static_cast<std::uint16_t>(drained_[1])};
  c.health = health_;
  credit_out_.push_back(c);
  drained_ = {0, 0};
  health_sent_ = health_;
  timer_armed_ = false;
}

std::size_t LinkEnd::footers_in_flight() const {
  std::size_t n = 0;
  for (const Slot& s : txq_) n += s.kind == FlitKind::Footer ? 1 : 0;
  for (const WireWord& w : wire_) n += (w.vc >= 0 && w.kind == FlitKind::Footer) ? 1 : 0;
  return n;
}

bool LinkEnd::credit_conserved(const LinkEnd& tx, int vc, std::string* why) {
  const LinkEnd* rx = tx.peer_;
  if (rx == nullptr) return true;
  long total = tx.credit_[vc].credit + tx.reserved_[vc];
  for (const Slot& s : tx.txq_) total += s.vc == vc ? 1 : 0;
  for (const WireWord& w : tx.wire_) total += w.vc == vc ? 1 : 0;
  if (rx->sinks_[vc] != nullptr) total += static_cast<long>(rx->sinks_[vc]->size());
  total += rx->drained_[vc];
  for (const CreditPayload& c : rx->credit_out_) total += c.restore[vc];
  for (const WireWord& w : rx->wire_) {
    if (w.word.kind == LineKind::Credit) total += decode_credit(w.word).restore[vc];
  }
  if (total == tx.credit_[vc].initial) return true;
  if (why != nullptr) {
    *why = tx.name_ + " vc" + std::to_string(vc) + ": accounted " + std::to_string(total) +
           " of " + std::to_string(tx.credit_[vc].initial);
  }
  return false;
}

}  // namespace xnet::link
