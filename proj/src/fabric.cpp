#include "xnet/fabric.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

namespace xnet::fabric {

int Topology::node_index(Coord c) const {
  for (int d = 0; d < kDims; ++d) {
    if (c[d] < 0 || c[d] >= extents[d]) return -1;
  }
  return c.x + extents[0] * (c.y + extents[1] * c.z);
}

Topology build_lattice(std::array<int, 3> extents, std::array<bool, 3> wrap, std::string preset) {
  for (int e : extents) {
    if (e < 1 || e > 256) throw ConfigError("extents must lie in 1..256, got " + std::to_string(e));
  }
  Topology t;
  t.preset = std::move(preset);
  t.extents = extents;
  for (int d = 0; d < kDims; ++d) t.wrap[d] = wrap[d] && extents[d] > 1;
  for (int z = 0; z < extents[2]; ++z) {
    for (int y = 0; y < extents[1]; ++y) {
      for (int x = 0; x < extents[0]; ++x) t.nodes.push_back({x, y, z});
    }
  }
  t.express.resize(t.nodes.size());
  for (const Coord& c : t.nodes) {
    for (int d = 0; d < kDims; ++d) {
      if (extents[d] == 1) continue;
      Coord n = c;
      if (c[d] + 1 < extents[d]) {
        n[d] = c[d] + 1;
      } else if (t.wrap[d]) {
        n[d] = 0;
      } else {
        continue;
      }
      t.links.push_back({c, make_direction(d, true), n, make_direction(d, false)});
    }
  }
  return t;
}

Topology build_topology(std::string_view preset, std::array<int, 3> extents) {
  if (preset == "mesh2x2") return build_lattice({2, 2, 1}, {false, false, false}, "mesh2x2");
  if (preset == "mesh") return build_lattice(extents, {false, false, false}, "mesh");
  if (preset == "torus") return build_lattice(extents, {true, true, true}, "torus");
  if (preset == "qfdb4") {
    // Four FPGAs, each cabled to the other three: the 2x2 lattice plus both
    // diagonals on the otherwise unused Z ports.
    Topology t = build_lattice({2, 2, 1}, {false, false, false}, "qfdb4");
    const std::pair<Coord, Coord> diagonals[] = {{{0, 0, 0}, {1, 1, 0}}, {{1, 0, 0}, {0, 1, 0}}};
    for (const auto& [a, b] : diagonals) {
      t.links.push_back({a, Direction::ZPlus, b, Direction::ZMinus});
      t.express[t.node_index(a)].push_back({b, Direction::ZPlus});
      t.express[t.node_index(b)].push_back({a, Direction::ZMinus});
    }
    return t;
  }
  throw ConfigError("unknown topology preset '" + std::string(preset) + "'");
}

Simulator::Simulator(Topology topo, SimConfig cfg) : topo_(std::move(topo)), cfg_(std::move(cfg)) {
  cfg_.link.vc_capacity = cfg_.router.inter_vc_buffer;
  nodes_.resize(topo_.nodes.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) nodes_[i].coord = topo_.nodes[i];
  for (const LinkSpec& l : topo_.links) {
    auto& ea = node(l.a).links[static_cast<int>(l.da)];
    auto& eb = node(l.b).links[static_cast<int>(l.db)];
    if (ea || eb) throw ConfigError("port cabled twice at " + to_string(l.a) + " or " + to_string(l.b));
    ea = std::make_unique<link::LinkEnd>(to_string(l.a) + ":" + to_string(l.da), cfg_.link);
    eb = std::make_unique<link::LinkEnd>(to_string(l.b) + ":" + to_string(l.db), cfg_.link);
    link::LinkEnd::connect(*ea, *eb);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    router::RouterConfig rc = cfg_.router;
    rc.my_coord = n.coord;
    rc.extents = topo_.extents;
    rc.wrap = topo_.wrap;
    rc.express = topo_.express[i];
    for (int d = 0; d < kDirections; ++d) {
      if (!n.links[d]) {
        rc.disabled_ports |= 1u << rc.port_index(router::PortId::inter_tile(static_cast<Direction>(d)));
      }
    }
    n.router = std::make_unique<router::Router>(std::move(rc));
    for (int d = 0; d < kDirections; ++d) {
      if (n.links[d]) n.router->attach_link(static_cast<Direction>(d), n.links[d].get());
    }
  }
}

Simulator::Node& Simulator::node(Coord c) {
  const int i = topo_.node_index(c);
  if (i < 0) throw ConfigError("no node at " + to_string(c));
  return nodes_[static_cast<std::size_t>(i)];
}

const Simulator::Node& Simulator::node(Coord c) const {
  const int i = topo_.node_index(c);
  if (i < 0) throw ConfigError("no node at " + to_string(c));
  return nodes_[static_cast<std::size_t>(i)];
}

router::Router& Simulator::router(Coord c) { return *node(c).router; }
const router::Router& Simulator::router(Coord c) const { return *node(c).router; }

link::LinkEnd* Simulator::link(Coord c, Direction d) { return node(c).links[static_cast<int>(d)].get(); }
const link::LinkEnd* Simulator::link(Coord c, Direction d) const {
  return node(c).links[static_cast<int>(d)].get();
}

std::vector<const link::LinkEnd*> Simulator::links() const {
  std::vector<const link::LinkEnd*> out;
  for (const Node& n : nodes_) {
    for (const auto& l : n.links) {
      if (l) out.push_back(l.get());
    }
  }
  return out;
}

bool Simulator::inject(Coord at, const wire::Packet& p, int port) {
  Node& n = node(at);
  if (port < 0 || port >= n.router->config().intra_ports) {
    throw ConfigError("no intra-tile port " + std::to_string(port) + " at " + to_string(at));
  }
  scratch_ = wire::to_flits(p);
  if (!n.router->inject(port, scratch_)) return false;
  ++injected_;
  ++n.injected;
  return true;
}

bool Simulator::can_inject(Coord at, std::size_t payload_len, int port) const {
  const Node& n = node(at);
  if (port < 0 || port >= n.router->config().intra_ports) return false;
  return router::gate_admit(n.router->input(port, 0).free(), wire::packet_flits(payload_len));
}

bool Simulator::can_eject(Coord at, int port) const {
  return node(at).router->eject_fifo(port).footers() > 0;
}

std::optional<Delivery> Simulator::eject(Coord at, int port) {
  Node& n = node(at);
  FlitFifo& fifo = n.router->eject_fifo(port);
  while (fifo.footers() > 0) {
    scratch_.clear();
    for (;;) {
      const Slot s = fifo.pop();
      scratch_.push_back(s.flit);
      if (s.kind == FlitKind::Footer) break;
    }
    try {
      Delivery d{wire::from_flits(scratch_), cycle_, port};
      last_progress_ = cycle_;
      ++ejected_;
      ++n.ejected;
      return d;
    } catch (const wire::DecodeError&) {
      ++corrupt_;
      ++n.corrupt;
    }
  }
  return std::nullopt;
}

void Simulator::step() {
  const std::uint64_t now = cycle_;
  std::uint64_t moved = 0;
  for (Node& n : nodes_) {
    for (auto& l : n.links) {
      if (l) moved += static_cast<std::uint64_t>(l->receive(now));
    }
  }
  for (Node& n : nodes_) moved += static_cast<std::uint64_t>(n.router->cycle(now).flits_moved);
  for (Node& n : nodes_) {
    for (auto& l : n.links) {
      if (l) l->transmit(now);
    }
  }
  for (Node& n : nodes_) {
    for (auto& l : n.links) {
      if (l) l->credit_update(now);
    }
  }
  ++cycle_;
  flits_moved_ += moved;
  if (moved > 0 || counters().in_flight == 0) last_progress_ = cycle_;
  if (cfg_.check_interval != 0 && cycle_ % cfg_.check_interval == 0) check_invariants();
}

RunResult Simulator::run_until(const std::function<bool(const Simulator&)>& done,
                               std::uint64_t max_cycles, const Hooks& hooks) {
  RunResult r;
  const std::uint64_t stop = cycle_ + max_cycles;
  while (true) {
    if (done && done(*this)) {
      r.done = true;
      break;
    }
    if (cycle_ >= stop) break;
    if (hooks.before_step) hooks.before_step(*this);
    step();
    if (hooks.after_step) hooks.after_step(*this);
    if (detect_stall(cfg_.watchdog_window)) {
      r.possible_deadlock = true;
      r.report = stall_report();
      break;
    }
  }
  r.counters = counters();
  return r;
}

bool Simulator::detect_stall(std::uint64_t window) const {
  return counters().in_flight > 0 && cycle_ - last_progress_ >= window;
}

GlobalCounters Simulator::counters() const {
  GlobalCounters c;
  c.cycle = cycle_;
  c.injected = injected_;
  c.ejected = ejected_;
  c.corrupt = corrupt_;
  c.dropped = corrupt_;
  for (const Node& n : nodes_) {
    c.dropped += n.router->dropped();
    for (const auto& l : n.links) {
      if (!l) continue;
      c.stall_cycles += l->stats().stall_cycles;
      const auto& rx = l->rx_stats();
      c.dropped += rx.header_drops;
    }
  }
  c.in_flight = c.injected - c.ejected - c.dropped;
  c.flits_moved = flits_moved_;
  return c;
}

NodeCounters Simulator::node_counters(Coord c) const {
  const Node& n = node(c);
  return {n.injected, n.ejected, n.router->dropped() + n.corrupt};
}

void Simulator::set_health(Coord c, std::uint8_t status) {
  Node& n = node(c);
  n.health = status;
  for (auto& l : n.links) {
    if (l) l->set_health(status);
  }
}

std::uint64_t Simulator::in_flight_recount() const {
  std::uint64_t n = 0;
  for (const Node& node : nodes_) {
    n += node.router->footers_buffered();
    for (const auto& l : node.links) {
      if (l) n += l->footers_in_flight();
    }
  }
  return n;
}

void Simulator::check_invariants() const {
  const GlobalCounters c = counters();
  const std::uint64_t present = in_flight_recount();
  if (c.injected != c.ejected + c.dropped + present) {
    std::ostringstream os;
    os << "cycle " << cycle_ << ": conservation broken: injected " << c.injected << " ejected "
       << c.ejected << " dropped " << c.dropped << " present " << present;
    throw InvariantViolation(os.str());
  }
  for (const Node& n : nodes_) {
    for (const auto& l : n.links) {
      if (!l) continue;
      for (int vc = 0; vc < 2; ++vc) {
        std::string why;
        if (!link::LinkEnd::credit_conserved(*l, vc, &why)) {
          throw InvariantViolation("cycle " + std::to_string(cycle_) + ": credit leak: " + why);
        }
      }
    }
  }
}

std::string Simulator::stall_report() const {
  std::ostringstream os;
  const GlobalCounters c = counters();
  os << "possible deadlock at cycle " << cycle_ << ": no flit moved for " << (cycle_ - last_progress_)
     << " cycles with " << c.in_flight << " packets in flight";
  int shown = 0;
  for (const Node& n : nodes_) {
    const auto& rc = n.router->config();
    for (int p = 0; p < rc.num_ports(); ++p) {
      for (int vc = 0; vc < 2; ++vc) {
        const FlitFifo& f = n.router->input(p, vc);
        if (f.empty()) continue;
        if (shown++ < 16) {
          os << "\n  " << to_string(n.coord) << ' ' << router::to_string(rc.port_id(p)) << " vc" << vc
             << ": " << f.size() << '/' << f.capacity() << " flits";
        }
      }
    }
  }
  if (shown > 16) os << "\n  ... " << (shown - 16) << " more occupied buffers";
  return os.str();
}

void Simulator::set_trace(std::ostream* out, const std::string& filter) {
  for (Node& n : nodes_) {
    for (auto& l : n.links) {
      if (!l) continue;
      const bool match = filter.empty() || filter == "all" || l->name().find(filter) != std::string::npos;
      l->set_trace(match ? out : nullptr);
    }
  }
}

}  // namespace xnet::fabric
