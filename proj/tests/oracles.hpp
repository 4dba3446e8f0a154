#pragma once

// Reference models used by the tests. They are deliberately written the slow,
// obvious way and share no code with the library.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <zlib.h>

#include "xnet/types.hpp"

namespace oracle {

// Hamming position of stored bit i of a header word: data bits take the
// non-power-of-two positions (first 60 from 3 upward, the rest from 129
// upward), check bit j sits at position 2^j, the overall parity bit at 0.
inline std::array<int, 128> header_positions() {
  std::array<int, 128> pos{};
  auto pow2 = [](int v) { return v > 0 && (v & (v - 1)) == 0; };
  int i = 0;
  for (int p = 3; i < 60; ++p) {
    if (!pow2(p)) pos[i++] = p;
  }
  for (int p = 129; i < 119; ++p) {
    if (!pow2(p)) pos[i++] = p;
  }
  for (int j = 0; j < 8; ++j) pos[119 + j] = 1 << j;
  pos[127] = 0;
  return pos;
}

inline bool get(const xnet::Flit& f, int i) { return i < 64 ? (f.lo >> i & 1) : (f.hi >> (i - 64) & 1); }

inline void put(xnet::Flit& f, int i, bool v) {
  std::uint64_t& w = i < 64 ? f.lo : f.hi;
  const std::uint64_t m = std::uint64_t{1} << (i % 64);
  w = v ? (w | m) : (w & ~m);
}

// Fills bits 119..127 of `f` from its 119 data bits.
inline xnet::Flit secded_encode(xnet::Flit f) {
  const auto pos = header_positions();
  for (int i = 119; i < 128; ++i) put(f, i, false);
  for (int j = 0; j < 8; ++j) {
    bool c = false;
    for (int i = 0; i < 119; ++i) {
      if (get(f, i) && (pos[i] >> j & 1)) c = !c;
    }
    put(f, 119 + j, c);
  }
  bool all = false;
  for (int i = 0; i < 127; ++i) all ^= get(f, i);
  put(f, 127, all);
  return f;
}

enum class Verdict { Clean, Corrected, Uncorrectable };

// Syndrome = XOR of the positions of all set bits.
inline Verdict secded_decode(xnet::Flit& f, int* fixed = nullptr) {
  const auto pos = header_positions();
  int syndrome = 0;
  bool parity = false;
  for (int i = 0; i < 128; ++i) {
    if (get(f, i)) {
      syndrome ^= pos[i];
      parity = !parity;
    }
  }
  if (!parity) return syndrome == 0 ? Verdict::Clean : Verdict::Uncorrectable;
  for (int i = 0; i < 128; ++i) {
    if (pos[i] == syndrome) {
      put(f, i, !get(f, i));
      if (fixed) *fixed = i;
      return Verdict::Corrected;
    }
  }
  return Verdict::Uncorrectable;
}

inline std::uint32_t crc32(const std::vector<std::uint8_t>& bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

// Dimension-ordered path by brute force: walk one unit step at a time along
// each dimension in order, taking the shorter way round a ring (ties go up).
struct Hop {
  xnet::Coord at;
  int dim;
  bool plus;
};

inline std::vector<Hop> dor_path(xnet::Coord src, xnet::Coord dst, std::array<int, 3> ext,
                                 std::array<bool, 3> wrap, std::array<int, 3> order = {0, 1, 2}) {
  std::vector<Hop> path;
  xnet::Coord cur = src;
  for (int dim : order) {
    while (cur[dim] != dst[dim]) {
      bool plus;
      if (wrap[dim]) {
        int up = 0;
        for (int c = cur[dim]; c != dst[dim]; c = (c + 1) % ext[dim]) ++up;
        plus = up <= ext[dim] - up;
      } else {
        plus = dst[dim] > cur[dim];
      }
      path.push_back({cur, dim, plus});
      cur[dim] = plus ? (cur[dim] + 1) % ext[dim] : (cur[dim] - 1 + ext[dim]) % ext[dim];
    }
  }
  return path;
}

}  // namespace oracle
