#include "xnet/router.hpp"

#include <algorithm>

namespace xnet::router {

std::string to_string(const PortId& p) {
  if (p.inter) return xnet::to_string(p.direction());
  return "intra" + std::to_string(p.index);
}

void RouterConfig::validate() const {
  for (int d = 0; d < kDims; ++d) {
    if (extents[d] < 1 || extents[d] > 256) throw ConfigError("extent out of range 1..256");
    if (my_coord[d] < 0 || my_coord[d] >= extents[d]) {
      throw ConfigError("coordinate " + xnet::to_string(my_coord) + " outside lattice");
    }
  }
  std::array<int, 3> seen{};
  for (int d : dim_order) {
    if (d < 0 || d >= kDims || seen[d]++ != 0) throw ConfigError("dim_order is not a permutation");
  }
  if (intra_ports < 1 || intra_ports > 16) throw ConfigError("intra_ports out of range 1..16");
  if (routing_latency < 0 || turnaround < 0) throw ConfigError("negative router latency");
  for (int p : priority) {
    if (p < 0 || p >= num_ports()) throw ConfigError("priority names an unknown port");
  }
}

bool minimal_plus(const RouterConfig& cfg, int my, int dest, int dim) {
  const int k = cfg.extents[dim];
  if (cfg.wrap[dim] && k > 1) {
    const int fwd = ((dest - my) % k + k) % k;
    return fwd <= k - fwd;
  }
  return dest > my;
}

namespace {

bool inside(const RouterConfig& cfg, Coord c) {
  for (int d = 0; d < kDims; ++d) {
    if (c[d] < 0 || c[d] >= cfg.extents[d]) return false;
  }
  return true;
}

const std::pair<Coord, Direction>* express_for(const RouterConfig& cfg, Coord dest) {
  for (const auto& e : cfg.express) {
    if (e.first == dest) return &e;
  }
  return nullptr;
}

}  // namespace

std::optional<PortId> try_route(const RouterConfig& cfg, Coord dest, int dest_port) {
  if (!inside(cfg, dest)) return std::nullopt;
  if (const auto* e = express_for(cfg, dest); e != nullptr && dest != cfg.my_coord) {
    const PortId p = PortId::inter_tile(e->second);
    if (cfg.port_disabled(p)) return std::nullopt;
    return p;
  }
  for (int dim : cfg.dim_order) {
    if (dest[dim] == cfg.my_coord[dim]) continue;
    const PortId p = PortId::inter_tile(
        make_direction(dim, minimal_plus(cfg, cfg.my_coord[dim], dest[dim], dim)));
    if (cfg.port_disabled(p)) return std::nullopt;
    return p;
  }
  if (dest_port < 0 || dest_port >= cfg.intra_ports) return std::nullopt;
  const PortId p = PortId::intra(dest_port);
  if (cfg.port_disabled(p)) return std::nullopt;
  return p;
}

PortId route(const RouterConfig& cfg, Coord dest, int dest_port) {
  if (auto p = try_route(cfg, dest, dest_port)) return *p;
  throw Unroutable("no usable port from " + xnet::to_string(cfg.my_coord) + " towards " +
                   xnet::to_string(dest));
}

std::uint8_t select_vc(const RouterConfig& cfg, Coord src, Coord my, Coord dest, int dim) {
  const bool plus = minimal_plus(cfg, my[dim], dest[dim], dim);
  if (cfg.vc_policy == VcPolicy::Dateline && cfg.wrap[dim] && cfg.extents[dim] > 1) {
    // The dateline is the wraparound link (extent-1 <-> 0). Under dimension
    // order the packet entered this dimension at src[dim], so it has crossed
    // iff it now sits on the far side of its starting coordinate.
    const bool crossed = plus ? my[dim] < src[dim] : my[dim] > src[dim];
    return crossed ? 0 : 1;
  }
  return plus ? 1 : 0;
}

int Arbiter::grant(std::span<const int> requests, ArbPolicy policy, std::span<const int> priority) {
  if (requests.empty()) return -1;
  int best = -1;
  if (policy == ArbPolicy::RoundRobin) {
    int best_dist = slots_ + 1;
    for (int r : requests) {
      const int dist = ((r - last_ - 1) % slots_ + slots_) % slots_;
      if (dist < best_dist) {
        best_dist = dist;
        best = r;
      }
    }
  } else {
    auto rank = [&](int r) {
      const int port = r / 2;
      const auto it = std::find(priority.begin(), priority.end(), port);
      const int pos = it == priority.end() ? static_cast<int>(priority.size()) + port
                                           : static_cast<int>(it - priority.begin());
      return pos * 2 + (r % 2);
    };
    for (int r : requests) {
      if (best < 0 || rank(r) < rank(best)) best = r;
    }
  }
  last_ = best;
  return best;
}

Router::Router(RouterConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int ports = cfg_.num_ports();
  inputs_.resize(static_cast<std::size_t>(ports) * 2);
  const std::string base = xnet::to_string(cfg_.my_coord);
  for (int p = 0; p < ports; ++p) {
    const bool inter = p >= cfg_.intra_ports;
    const std::string name = base + ":" + to_string(cfg_.port_id(p));
    inputs_[slot(p, 0)].fifo =
        FlitFifo(static_cast<std::size_t>(inter ? cfg_.inter_vc_buffer : cfg_.intra_buffer),
                 name + "/vc0");
    inputs_[slot(p, 1)].fifo =
        FlitFifo(inter ? static_cast<std::size_t>(cfg_.inter_vc_buffer) : 0, name + "/vc1");
  }
  outputs_.resize(static_cast<std::size_t>(ports));
  for (auto& o : outputs_) o.arbiter = Arbiter(ports * 2);
  for (int i = 0; i < cfg_.intra_ports; ++i) {
    ejects_.emplace_back(static_cast<std::size_t>(cfg_.intra_buffer),
                         base + ":intra" + std::to_string(i) + "/rx");
  }
  eject_reserved_.assign(static_cast<std::size_t>(cfg_.intra_ports), 0);
}

void Router::reconfigure(const RouterConfig& cfg) {
  cfg.validate();
  if (cfg.intra_ports != cfg_.intra_ports) throw ConfigError("port count is fixed at construction");
  pending_ = cfg;
}

void Router::attach_link(Direction d, link::LinkEnd* end) {
  links_[static_cast<int>(d)] = end;
  const int port = cfg_.intra_ports + static_cast<int>(d);
  if (end != nullptr) end->set_sinks(&input(port, 0), &input(port, 1));
}

bool Router::inject(int intra_port, std::span<const Flit> flits) {
  FlitFifo& fifo = inputs_[slot(intra_port, 0)].fifo;
  if (!gate_admit(fifo.free(), flits.size())) return false;
  for (std::size_t i = 0; i < flits.size(); ++i) {
    const FlitKind kind = i == 0 ? FlitKind::Header
                          : i + 1 == flits.size() ? FlitKind::Footer
                                                  : FlitKind::Payload;
    fifo.push({flits[i], kind, 0});
  }
  return true;
}

void Router::drained(int s, bool footer) {
  const int port = s / 2;
  if (port < cfg_.intra_ports) return;
  link::LinkEnd* end = links_[port - cfg_.intra_ports];
  if (end != nullptr) end->on_drained(s % 2, 1, footer);
}

void Router::start_packet(int s, std::uint64_t now, CycleResult& res) {
  InputVc& in = inputs_[s];
  const Slot& head = in.fifo.front();
  if (head.kind != FlitKind::Header) {
    throw InvariantViolation(xnet::to_string(cfg_.my_coord) + ": packet does not start with a header");
  }
  wire::Header h;
  try {
    h = wire::decode_header(head.flit).header;
  } catch (const wire::DecodeError& e) {
    throw InvariantViolation(std::string("corrupt header inside router: ") + e.what());
  }
  in.payload_len = h.payload_len;
  in.flits = static_cast<int>(wire::packet_flits(h.payload_len));
  in.remaining = in.flits;

  const auto port = try_route(cfg_, h.dest, h.dest_port);
  if (!port) {
    in.state = State::Discard;
    (void)res;
    return;
  }
  in.out = cfg_.port_index(*port);
  in.out_vc = 0;
  if (port->inter && express_for(cfg_, h.dest) == nullptr) {
    in.out_vc = select_vc(cfg_, h.src, cfg_.my_coord, h.dest, dim_of(port->direction()));
  }
  in.state = State::Routing;
  in.ready_at = now + static_cast<std::uint64_t>(cfg_.routing_latency);
  Output& out = outputs_[in.out];
  out.waiting.push_back(s);
  if (out.stats.first_request_cycle < 0) out.stats.first_request_cycle = static_cast<std::int64_t>(now);
}

bool Router::admissible(int o, const InputVc& in) const {
  if (o < cfg_.intra_ports) {
    const auto free = ejects_[o].free() - static_cast<std::size_t>(eject_reserved_[o]);
    return gate_admit(free, static_cast<std::size_t>(in.flits));
  }
  const link::LinkEnd* end = links_[o - cfg_.intra_ports];
  return end != nullptr && end->can_send(in.out_vc, in.flits);
}

void Router::note_stall(int o, const InputVc& in, std::uint64_t now) {
  if (o < cfg_.intra_ports) return;
  if (link::LinkEnd* end = links_[o - cfg_.intra_ports]) end->note_stall(now, in.flits);
}

void Router::move_flit(int o, std::uint64_t now, CycleResult& res) {
  Output& out = outputs_[o];
  InputVc& in = inputs_[out.src];
  if (in.fifo.empty()) return;  // cut-through: rest of the packet still arriving

  Slot sl = in.fifo.pop();
  const bool first = in.remaining == in.flits;
  if (first != (sl.kind == FlitKind::Header)) {
    throw InvariantViolation(xnet::to_string(cfg_.my_coord) + ": flit interleaving on output " +
                             to_string(cfg_.port_id(o)));
  }
  --in.remaining;
  if ((in.remaining == 0) != (sl.kind == FlitKind::Footer)) {
    throw InvariantViolation(xnet::to_string(cfg_.my_coord) + ": packet length mismatch on output " +
                             to_string(cfg_.port_id(o)));
  }
  drained(out.src, sl.kind == FlitKind::Footer);

  if (o < cfg_.intra_ports) {
    ejects_[o].push(sl);
    --eject_reserved_[o];
  } else {
    sl.vc = in.out_vc;
    if (sl.kind == FlitKind::Header) sl.flit = wire::with_vc(sl.flit, in.out_vc);
    links_[o - cfg_.intra_ports]->enqueue(sl);
  }
  ++out.stats.flits;
  ++res.flits_moved;
  if (out.stats.first_flit_cycle < 0) out.stats.first_flit_cycle = static_cast<std::int64_t>(now);

  if (sl.kind == FlitKind::Footer) {
    out.busy = false;
    out.free_at = now + 1 + static_cast<std::uint64_t>(cfg_.turnaround);
    out.src = -1;
    in.state = State::Idle;
    ++out.stats.packets;
    out.stats.payload_bytes += in.payload_len;
    out.stats.last_footer_cycle = static_cast<std::int64_t>(now);
  }
}

CycleResult Router::cycle(std::uint64_t now) {
  if (pending_) {
    cfg_ = std::move(*pending_);
    pending_.reset();
  }
  CycleResult res;

  for (int s = 0; s < static_cast<int>(inputs_.size()); ++s) {
    InputVc& in = inputs_[s];
    if (in.fifo.empty()) continue;
    if (in.state == State::Discard) {
      const Slot sl = in.fifo.pop();
      drained(s, sl.kind == FlitKind::Footer);
      ++res.flits_moved;
      if (--in.remaining == 0) {
        in.state = State::Idle;
        ++dropped_;
        ++res.dropped;
      }
    } else if (in.state == State::Idle) {
      start_packet(s, now, res);
    }
  }

  for (int o = 0; o < static_cast<int>(outputs_.size()); ++o) {
    Output& out = outputs_[o];
    if (out.busy) {
      move_flit(o, now, res);
      continue;
    }
    if (out.waiting.empty() || out.frozen || now < out.free_at) continue;

    const bool disabled = cfg_.port_disabled(cfg_.port_id(o));
    requests_.clear();
    for (auto it = out.waiting.begin(); it != out.waiting.end();) {
      InputVc& in = inputs_[*it];
      if (disabled) {
        // Port switched off after the routing decision: drop like any
        // other unroutable packet.
        in.state = State::Discard;
        it = out.waiting.erase(it);
        continue;
      }
      if (in.ready_at <= now) {
        if (admissible(o, in)) {
          requests_.push_back(*it);
        } else {
          note_stall(o, in, now);
        }
      }
      ++it;
    }
    if (requests_.empty()) continue;

    const int g = out.arbiter.grant(requests_, cfg_.arb_policy, cfg_.priority);
    InputVc& in = inputs_[g];
    if (o < cfg_.intra_ports) {
      eject_reserved_[o] += in.flits;
    } else if (!links_[o - cfg_.intra_ports]->try_reserve(in.out_vc, in.flits, now)) {
      throw InvariantViolation("credit gate refused an admissible packet");
    }
    out.waiting.erase(std::find(out.waiting.begin(), out.waiting.end(), g));
    in.state = State::Active;
    out.busy = true;
    out.src = g;
    if (grant_log_ != nullptr) grant_log_->push_back({now, o, g});
    move_flit(o, now, res);
  }
  return res;
}

bool Router::idle() const {
  for (const auto& in : inputs_) {
    if (!in.fifo.empty() || in.state != State::Idle) return false;
  }
  for (const auto& o : outputs_) {
    if (o.busy) return false;
  }
  return true;
}

std::size_t Router::input_occupancy(int port) const {
  return inputs_[slot(port, 0)].fifo.size() + inputs_[slot(port, 1)].fifo.size();
}

std::size_t Router::footers_buffered() const {
  std::size_t n = 0;
  for (const auto& in : inputs_) n += in.fifo.footers();
  for (const auto& e : ejects_) n += e.footers();
  return n;
}

}  // namespace xnet::router
