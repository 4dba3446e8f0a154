#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace xnet {

// One 128-bit datapath word. Bit i lives in lo for i < 64, hi otherwise.
struct Flit {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  constexpr bool bit(int i) const {
    return i < 64 ? ((lo >> i) & 1u) != 0 : ((hi >> (i - 64)) & 1u) != 0;
  }
  constexpr void set_bit(int i, bool v) {
    std::uint64_t& w = i < 64 ? lo : hi;
    const std::uint64_t m = std::uint64_t{1} << (i & 63);
    w = v ? (w | m) : (w & ~m);
  }
  constexpr void flip(int i) { set_bit(i, !bit(i)); }

  // Extracts `width` (1..64) bits starting at `pos`.
  constexpr std::uint64_t field(int pos, int width) const {
    const std::uint64_t mask = width == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1;
    if (pos >= 64) return (hi >> (pos - 64)) & mask;
    std::uint64_t v = lo >> pos;
    if (pos + width > 64 && pos > 0) v |= hi << (64 - pos);
    return v & mask;
  }
  constexpr void set_field(int pos, int width, std::uint64_t v) {
    for (int i = 0; i < width; ++i) set_bit(pos + i, ((v >> i) & 1u) != 0);
  }

  friend constexpr bool operator==(const Flit&, const Flit&) = default;
};

inline constexpr int kFlitBits = 128;
inline constexpr int kFlitBytes = 16;

// Node coordinate inside a lattice of at most 256 per dimension.
struct Coord {
  int x = 0;
  int y = 0;
  int z = 0;

  constexpr int operator[](int dim) const { return dim == 0 ? x : dim == 1 ? y : z; }
  constexpr int& operator[](int dim) { return dim == 0 ? x : dim == 1 ? y : z; }

  friend constexpr auto operator<=>(const Coord&, const Coord&) = default;
};

std::string to_string(const Coord& c);

enum class Direction : std::uint8_t { XPlus, XMinus, YPlus, YMinus, ZPlus, ZMinus };

inline constexpr int kDirections = 6;
inline constexpr int kDims = 3;

constexpr Direction make_direction(int dim, bool plus) {
  return static_cast<Direction>(dim * 2 + (plus ? 0 : 1));
}
constexpr int dim_of(Direction d) { return static_cast<int>(d) / 2; }
constexpr bool is_plus(Direction d) { return (static_cast<int>(d) & 1) == 0; }
constexpr Direction opposite(Direction d) {
  return static_cast<Direction>(static_cast<int>(d) ^ 1);
}

const char* to_string(Direction d);

// Thrown on malformed configuration (bad extents, bad keys, absent nodes).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when a simulator invariant breaks (FIFO overflow, credit underflow,
// interleaved flits). Always a bug, never a traffic condition.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace xnet
