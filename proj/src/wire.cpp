#include "xnet/wire.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>

namespace xnet {

std::string to_string(const Coord& c) {
  return std::to_string(c.x) + "." + std::to_string(c.y) + "." + std::to_string(c.z);
}

const char* to_string(Direction d) {
  static constexpr const char* kNames[] = {"X+", "X-", "Y+", "Y-", "Z+", "Z-"};
  return kNames[static_cast<int>(d)];
}

}  // namespace xnet

namespace xnet::wire {
namespace {

constexpr int kHammingBits = 8;
constexpr int kParityBit = 127;

constexpr bool is_pow2(unsigned v) { return v != 0 && (v & (v - 1)) == 0; }

// Hamming position of each data bit. The first 60 data bits take the
// non-power-of-two positions from 3 upwards; the rest take the same run
// offset by 128 so that every one of the 8 check bits covers data.
constexpr std::array<std::uint8_t, kHeaderDataBits> make_positions() {
  std::array<std::uint8_t, kHeaderDataBits> pos{};
  int i = 0;
  for (unsigned p = 3; i < 60; ++p) {
    if (!is_pow2(p)) pos[i++] = static_cast<std::uint8_t>(p);
  }
  for (unsigned p = 129; i < kHeaderDataBits; ++p) {
    if (!is_pow2(p)) pos[i++] = static_cast<std::uint8_t>(p);
  }
  return pos;
}

constexpr auto kPositions = make_positions();

struct Mask {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
};

// Data bits covered by each Hamming check bit.
constexpr std::array<Mask, kHammingBits> make_masks() {
  std::array<Mask, kHammingBits> masks{};
  for (int i = 0; i < kHeaderDataBits; ++i) {
    for (int j = 0; j < kHammingBits; ++j) {
      if ((kPositions[i] >> j) & 1u) {
        if (i < 64) {
          masks[j].lo |= std::uint64_t{1} << i;
        } else {
          masks[j].hi |= std::uint64_t{1} << (i - 64);
        }
      }
    }
  }
  return masks;
}

constexpr auto kMasks = make_masks();

// Reverse lookup: Hamming position -> data bit index, or -1.
constexpr std::array<std::int16_t, 256> make_lookup() {
  std::array<std::int16_t, 256> lut{};
  for (auto& v : lut) v = -1;
  for (int i = 0; i < kHeaderDataBits; ++i) lut[kPositions[i]] = static_cast<std::int16_t>(i);
  return lut;
}

constexpr auto kLookup = make_lookup();

constexpr std::uint64_t kDataHiMask = (std::uint64_t{1} << (kHeaderDataBits - 64)) - 1;

int parity(std::uint64_t lo, std::uint64_t hi) { return std::popcount(lo ^ hi) & 1; }

std::uint8_t hamming_bits(std::uint64_t lo, std::uint64_t hi) {
  std::uint8_t c = 0;
  for (int j = 0; j < kHammingBits; ++j) {
    c |= static_cast<std::uint8_t>(parity(lo & kMasks[j].lo, hi & kMasks[j].hi) << j);
  }
  return c;
}

constexpr std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t n = 0; n < 256; ++n) {
    std::uint32_t c = n;
    for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[n] = c;
  }
  return table;
}

constexpr auto kCrcTable = make_crc_table();

Flit pack_payload_flit(std::span<const std::uint8_t> bytes) {
  Flit f;
  for (std::size_t k = 0; k < bytes.size(); ++k) {
    const std::uint64_t b = bytes[k];
    if (k < 8) {
      f.lo |= b << (8 * k);
    } else {
      f.hi |= b << (8 * (k - 8));
    }
  }
  return f;
}

void unpack_payload_flit(const Flit& f, std::size_t n, std::vector<std::uint8_t>& out) {
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t w = k < 8 ? f.lo : f.hi;
    out.push_back(static_cast<std::uint8_t>(w >> (8 * (k % 8))));
  }
}

}  // namespace

std::size_t Packet::flit_count() const { return packet_flits(payload.size()); }

std::uint16_t secded_check_bits(const Flit& word) {
  const std::uint64_t lo = word.lo;
  const std::uint64_t hi = word.hi & kDataHiMask;
  const std::uint8_t c = hamming_bits(lo, hi);
  const int overall = parity(lo, hi) ^ (std::popcount(static_cast<unsigned>(c)) & 1);
  return static_cast<std::uint16_t>(c | (overall << kHammingBits));
}

EccVerdict secded_correct(Flit& word) {
  const std::uint64_t lo = word.lo;
  const std::uint64_t hi = word.hi & kDataHiMask;
  const auto stored = static_cast<std::uint8_t>(word.hi >> (kHeaderDataBits - 64));
  const unsigned syndrome = hamming_bits(lo, hi) ^ stored;
  const int total_parity = std::popcount(word.lo) + std::popcount(word.hi);

  if ((total_parity & 1) == 0) {
    if (syndrome == 0) return {EccStatus::Clean, -1};
    return {EccStatus::Uncorrectable, -1};
  }
  int bit = -1;
  if (syndrome == 0) {
    bit = kParityBit;
  } else if (is_pow2(syndrome)) {
    bit = kHeaderDataBits + std::countr_zero(syndrome);
  } else if (kLookup[syndrome] >= 0) {
    bit = kLookup[syndrome];
  } else {
    return {EccStatus::Uncorrectable, -1};
  }
  word.flip(bit);
  return {EccStatus::Corrected, bit};
}

std::uint32_t crc32_update(std::uint32_t state, std::span<const std::uint8_t> bytes) {
  for (std::uint8_t b : bytes) state = kCrcTable[(state ^ b) & 0xFFu] ^ (state >> 8);
  return state;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  return crc32_update(0xFFFFFFFFu, bytes) ^ 0xFFFFFFFFu;
}

Flit encode_header(const Header& h) {
  if (h.payload_len > kMaxPayload) {
    throw InvalidHeader("payload_len " + std::to_string(h.payload_len) + " exceeds " +
                        std::to_string(kMaxPayload));
  }
  for (const Coord* c : {&h.dest, &h.src}) {
    for (int d = 0; d < kDims; ++d) {
      if ((*c)[d] < 0 || (*c)[d] > 255) throw InvalidHeader("coordinate out of 8-bit range");
    }
  }
  if (h.vc > 1) throw InvalidHeader("vc must be 0 or 1");

  Flit f;
  f.lo = static_cast<std::uint64_t>(h.dest.x) | static_cast<std::uint64_t>(h.dest.y) << 8 |
         static_cast<std::uint64_t>(h.dest.z) << 16 | static_cast<std::uint64_t>(h.src.x) << 24 |
         static_cast<std::uint64_t>(h.src.y) << 32 | static_cast<std::uint64_t>(h.src.z) << 40 |
         static_cast<std::uint64_t>(h.ptype) << 48 |
         static_cast<std::uint64_t>(h.payload_len & 0xFFu) << 56;
  f.hi = static_cast<std::uint64_t>(h.payload_len >> 8) |
         static_cast<std::uint64_t>(h.packet_id) << 8 |
         static_cast<std::uint64_t>(h.dest_port) << 40 | static_cast<std::uint64_t>(h.vc) << 48;
  f.hi |= static_cast<std::uint64_t>(secded_check_bits(f)) << (kHeaderDataBits - 64);
  return f;
}

DecodedHeader decode_header(Flit f) {
  const EccVerdict verdict = secded_correct(f);
  if (verdict.status == EccStatus::Uncorrectable) {
    throw DecodeError(DecodeError::Kind::HeaderCorrupt, "uncorrectable header");
  }
  Header h;
  h.dest = {static_cast<int>(f.field(0, 8)), static_cast<int>(f.field(8, 8)),
            static_cast<int>(f.field(16, 8))};
  h.src = {static_cast<int>(f.field(24, 8)), static_cast<int>(f.field(32, 8)),
           static_cast<int>(f.field(40, 8))};
  h.ptype = static_cast<std::uint8_t>(f.field(48, 8));
  h.payload_len = static_cast<std::uint16_t>(f.field(56, 16));
  h.packet_id = static_cast<std::uint32_t>(f.field(72, 32));
  h.dest_port = static_cast<std::uint8_t>(f.field(104, 8));
  h.vc = static_cast<std::uint8_t>(f.field(112, 1));
  if (h.payload_len > kMaxPayload) {
    throw DecodeError(DecodeError::Kind::HeaderCorrupt, "payload_len out of range");
  }
  return {h, verdict};
}

Flit with_vc(Flit header, std::uint8_t vc) {
  header.set_bit(112, vc != 0);
  header.hi &= kDataHiMask;
  header.hi |= static_cast<std::uint64_t>(secded_check_bits(header)) << (kHeaderDataBits - 64);
  return header;
}

Flit encode_footer(const Footer& ft) {
  Flit f;
  f.lo = static_cast<std::uint64_t>(ft.crc32) | static_cast<std::uint64_t>(ft.echo_id) << 32;
  f.hi = static_cast<std::uint64_t>(ft.timestamp) | static_cast<std::uint64_t>(ft.reserved) << 32;
  return f;
}

Footer decode_footer(const Flit& f) {
  return {static_cast<std::uint32_t>(f.lo), static_cast<std::uint32_t>(f.lo >> 32),
          static_cast<std::uint32_t>(f.hi), static_cast<std::uint32_t>(f.hi >> 32)};
}

Packet build_packet(Coord dest, Coord src, std::uint8_t ptype,
                    std::span<const std::uint8_t> payload, std::uint32_t id,
                    std::uint64_t cycle, std::uint8_t dest_port) {
  if (payload.size() > kMaxPayload) {
    throw std::invalid_argument("payload of " + std::to_string(payload.size()) +
                                " bytes exceeds " + std::to_string(kMaxPayload));
  }
  Packet p;
  p.header.dest = dest;
  p.header.src = src;
  p.header.ptype = ptype;
  p.header.payload_len = static_cast<std::uint16_t>(payload.size());
  p.header.packet_id = id;
  p.header.dest_port = dest_port;
  p.payload.assign(payload.begin(), payload.end());
  p.footer.crc32 = crc32(payload);
  p.footer.echo_id = id;
  p.footer.timestamp = static_cast<std::uint32_t>(cycle);
  return p;
}

std::vector<Flit> to_flits(const Packet& p) {
  if (p.payload.size() != p.header.payload_len) {
    throw InvalidHeader("payload_len disagrees with payload size");
  }
  std::vector<Flit> out;
  out.reserve(p.flit_count());
  out.push_back(encode_header(p.header));
  const std::span<const std::uint8_t> bytes(p.payload);
  for (std::size_t off = 0; off < bytes.size(); off += kFlitBytes) {
    out.push_back(pack_payload_flit(
        bytes.subspan(off, std::min<std::size_t>(kFlitBytes, bytes.size() - off))));
  }
  out.push_back(encode_footer(p.footer));
  return out;
}

Packet from_flits(std::span<const Flit> flits) {
  if (flits.empty()) throw DecodeError(DecodeError::Kind::Framing, "empty flit sequence");
  Packet p;
  p.header = decode_header(flits[0]).header;
  const std::size_t need = packet_flits(p.header.payload_len);
  if (flits.size() < need) {
    throw DecodeError(DecodeError::Kind::Framing, "truncated packet: " +
                                                      std::to_string(flits.size()) + " of " +
                                                      std::to_string(need) + " flits");
  }
  if (flits.size() > need) {
    throw DecodeError(DecodeError::Kind::Framing, "trailing flits after footer");
  }
  p.payload.reserve(p.header.payload_len);
  std::size_t left = p.header.payload_len;
  for (std::size_t i = 1; i + 1 < need; ++i) {
    const std::size_t n = std::min<std::size_t>(kFlitBytes, left);
    unpack_payload_flit(flits[i], n, p.payload);
    left -= n;
  }
  p.footer = decode_footer(flits[need - 1]);
  if (crc32(p.payload) != p.footer.crc32) {
    throw DecodeError(DecodeError::Kind::PayloadCorrupt, "payload CRC mismatch");
  }
  return p;
}

std::string to_hex(const Flit& f) {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(f.hi),
                static_cast<unsigned long long>(f.lo));
  return buf;
}

Flit flit_from_hex(std::string_view hex) {
  if (hex.size() != 32) throw std::invalid_argument("flit hex must be 32 digits");
  auto parse = [](std::string_view s) {
    std::uint64_t v = 0;
    for (char ch : s) {
      int d;
      if (ch >= '0' && ch <= '9') {
        d = ch - '0';
      } else if (ch >= 'a' && ch <= 'f') {
        d = ch - 'a' + 10;
      } else if (ch >= 'A' && ch <= 'F') {
        d = ch - 'A' + 10;
      } else {
        throw std::invalid_argument("bad hex digit");
      }
      v = v << 4 | static_cast<std::uint64_t>(d);
    }
    return v;
  };
  return {parse(hex.substr(16)), parse(hex.substr(0, 16))};
}

std::string dump_line(const Packet& p) {
  std::string line;
  for (const Flit& f : to_flits(p)) {
    if (!line.empty()) line += ' ';
    line += to_hex(f);
  }
  return line;
}

}  // namespace xnet::wire
