#pragma once

// Packet representation on the datapath: 128-bit header (SECDED protected),
// byte-aligned payload packed 16 bytes per flit, 128-bit footer carrying a
// CRC-32 of the payload.
//
// Header bit layout:
//   0-7 dest.x    8-15 dest.y    16-23 dest.z
//   24-31 src.x   32-39 src.y    40-47 src.z
//   48-55 ptype   56-71 payload_len   72-103 packet_id
//   104-111 dest_port   112 vc   113-118 reserved (zero)
//   119-126 Hamming check bits   127 overall parity
//
// Footer bit layout:
//   0-31 crc32   32-63 echo_id   64-95 timestamp   96-127 reserved

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "xnet/types.hpp"

namespace xnet::wire {

inline constexpr std::size_t kMaxPayload = 512;
inline constexpr int kHeaderDataBits = 119;
inline constexpr int kCheckBits = 9;

struct Header {
  Coord dest;
  Coord src;
  std::uint8_t ptype = 0;
  std::uint16_t payload_len = 0;
  std::uint32_t packet_id = 0;
  std::uint8_t dest_port = 0;
  std::uint8_t vc = 0;

  friend bool operator==(const Header&, const Header&) = default;
};

struct Footer {
  std::uint32_t crc32 = 0;
  std::uint32_t echo_id = 0;
  std::uint32_t timestamp = 0;
  std::uint32_t reserved = 0;

  friend bool operator==(const Footer&, const Footer&) = default;
};

struct Packet {
  Header header;
  std::vector<std::uint8_t> payload;
  Footer footer;

  std::size_t flit_count() const;
  friend bool operator==(const Packet&, const Packet&) = default;
};

// Payload flits needed for `payload_len` bytes.
constexpr std::size_t payload_flits(std::size_t payload_len) {
  return (payload_len + kFlitBytes - 1) / kFlitBytes;
}
// Header + payload + footer.
constexpr std::size_t packet_flits(std::size_t payload_len) {
  return 2 + payload_flits(payload_len);
}

enum class EccStatus { Clean, Corrected, Uncorrectable };

struct EccVerdict {
  EccStatus status = EccStatus::Clean;
  int bit_index = -1;  // flipped stored bit, when Corrected

  friend bool operator==(const EccVerdict&, const EccVerdict&) = default;
};

struct DecodedHeader {
  Header header;
  EccVerdict verdict;
};

class InvalidHeader : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Codec failures. `kind` tells the caller which counter to bump.
class DecodeError : public std::runtime_error {
 public:
  enum class Kind { HeaderCorrupt, PayloadCorrupt, Framing };

  DecodeError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// SECDED over the 119 low bits of `word`; returns the 9 check bits in the
// order they are stored at bits 119..127.
std::uint16_t secded_check_bits(const Flit& word);

// Checks and, for a single-bit error, repairs `word` in place.
EccVerdict secded_correct(Flit& word);

// Reflected CRC-32 (poly 0x04C11DB7), init and final xor 0xFFFFFFFF.
std::uint32_t crc32(std::span<const std::uint8_t> bytes);
// Raw register update without init/xorout, for running checksums.
std::uint32_t crc32_update(std::uint32_t state, std::span<const std::uint8_t> bytes);

Flit encode_header(const Header& h);

// Throws DecodeError(HeaderCorrupt) on an uncorrectable word.
DecodedHeader decode_header(Flit f);

// Rewrites the vc bit of an encoded header and recomputes its check bits.
Flit with_vc(Flit header, std::uint8_t vc);

Flit encode_footer(const Footer& f);
Footer decode_footer(const Flit& f);

Packet build_packet(Coord dest, Coord src, std::uint8_t ptype,
                    std::span<const std::uint8_t> payload, std::uint32_t id,
                    std::uint64_t cycle, std::uint8_t dest_port = 0);

std::vector<Flit> to_flits(const Packet& p);

// Validates ECC, length and CRC; throws DecodeError.
Packet from_flits(std::span<const Flit> flits);

// 32 hex digits, most significant nibble first.
std::string to_hex(const Flit& f);
Flit flit_from_hex(std::string_view hex);

// One line of the packet trace dump: hex flits separated by single spaces.
std::string dump_line(const Packet& p);

}  // namespace xnet::wire
