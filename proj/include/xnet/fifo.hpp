#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "xnet/types.hpp"

namespace xnet {

enum class FlitKind : std::uint8_t { Header, Payload, Footer };

// A flit plus the sideband the hardware carries as control signals.
struct Slot {
  Flit flit;
  FlitKind kind = FlitKind::Payload;
  std::uint8_t vc = 0;
};

// Fixed-capacity ring buffer of flits. Overflow is an invariant violation:
// every producer must have checked free space (switch gate or credits).
class FlitFifo {
 public:
  FlitFifo() = default;
  explicit FlitFifo(std::size_t capacity, std::string name = {})
      : ring_(capacity), name_(std::move(name)) {}

  std::size_t capacity() const { return ring_.size(); }
  std::size_t size() const { return size_; }
  std::size_t free() const { return ring_.size() - size_; }
  bool empty() const { return size_ == 0; }
  std::size_t footers() const { return footers_; }
  std::size_t high_water() const { return high_water_; }

  void push(const Slot& s) {
    if (size_ == ring_.size()) {
      throw InvariantViolation("FIFO overflow: " + name_ + " (capacity " +
                               std::to_string(ring_.size()) + ")");
    }
    ring_[(head_ + size_) % ring_.size()] = s;
    ++size_;
    if (s.kind == FlitKind::Footer) ++footers_;
    if (size_ > high_water_) high_water_ = size_;
  }

  const Slot& front() const { return ring_[head_]; }
  const Slot& at(std::size_t i) const { return ring_[(head_ + i) % ring_.size()]; }

  Slot pop() {
    if (size_ == 0) throw InvariantViolation("FIFO underflow: " + name_);
    Slot s = ring_[head_];
    head_ = (head_ + 1) % ring_.size();
    --size_;
    if (s.kind == FlitKind::Footer) --footers_;
    return s;
  }

 private:
  std::vector<Slot> ring_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::size_t footers_ = 0;
  std::size_t high_water_ = 0;
  std::string name_;
};

}  // namespace xnet
