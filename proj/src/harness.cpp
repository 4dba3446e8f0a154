#include "xnet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace xnet::harness {

namespace {

void require_node(const fabric::Topology& topo, Coord c) {
  if (!topo.contains(c)) throw ConfigError("traffic references absent node " + to_string(c));
}

void require_size(std::size_t size) {
  if (size > wire::kMaxPayload) {
    throw ConfigError("payload size " + std::to_string(size) + " exceeds " +
                      std::to_string(wire::kMaxPayload));
  }
}

}  // namespace

std::vector<Injection> traffic_generate(const TrafficSpec& spec, const fabric::Topology& topo,
                                        int intra_ports) {
  require_size(spec.size);
  if (spec.size_max != 0) require_size(spec.size_max);
  if (spec.ports < 1 || spec.ports > intra_ports) {
    throw ConfigError("sender ports must lie in 1.." + std::to_string(intra_ports));
  }
  if (spec.dest_port < 0 || spec.dest_port >= intra_ports) {
    throw ConfigError("destination port " + std::to_string(spec.dest_port) + " does not exist");
  }
  std::mt19937_64 rng(spec.seed);
  const bool random_size = spec.size_max > spec.size;
  std::uniform_int_distribution<std::size_t> size_dist(spec.size, random_size ? spec.size_max : spec.size);
  auto next_size = [&] { return static_cast<std::uint16_t>(random_size ? size_dist(rng) : spec.size); };

  std::vector<Coord> sources = spec.sources.empty() ? topo.nodes : spec.sources;
  for (const Coord& s : sources) require_node(topo, s);

  // Sequence numbers per (source node, sender port).
  std::map<std::pair<Coord, int>, std::uint32_t> seq;
  auto make_id = [&](Coord src, int port) {
    std::uint32_t& n = seq[{src, port}];
    if (n > 0xFFFFFFu) throw ConfigError("more than 2^24 packets from one sender port");
    return static_cast<std::uint32_t>(port) << 24 | n++;
  };

  std::vector<Injection> out;
  switch (spec.pattern) {
    case Pattern::Pingpong:
    case Pattern::Saturate: {
      require_node(topo, spec.dest);
      const std::uint64_t count = spec.pattern == Pattern::Pingpong ? 1 : spec.count;
      for (std::uint64_t i = 0; i < count; ++i) {
        for (const Coord& s : sources) {
          for (int port = 0; port < spec.ports; ++port) {
            out.push_back({0, s, port, spec.dest, spec.dest_port, next_size(), make_id(s, port)});
          }
        }
      }
      break;
    }
    case Pattern::UniformRandom: {
      if (spec.rate <= 0.0 || topo.nodes.size() < 2) break;
      if (spec.rate > 1.0) throw ConfigError("injection rate must lie in 0..1");
      std::bernoulli_distribution fire(spec.rate);
      std::uniform_int_distribution<int> pick_port(0, spec.ports - 1);
      std::uniform_int_distribution<std::size_t> pick_node(0, topo.nodes.size() - 2);
      for (std::uint64_t t = 0; t < spec.duration; ++t) {
        for (const Coord& s : sources) {
          if (!fire(rng)) continue;
          // Uniform over every node except the source itself.
          std::size_t d = pick_node(rng);
          if (d >= static_cast<std::size_t>(topo.node_index(s))) ++d;
          const int port = pick_port(rng);
          const std::uint16_t size = next_size();
          out.push_back({t, s, port, topo.nodes[d], spec.dest_port, size, make_id(s, port)});
        }
      }
      break;
    }
  }
  return out;
}

std::vector<std::uint8_t> payload_bytes(std::uint64_t seed, Coord src, std::uint32_t id,
                                        std::size_t size) {
  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(src.x | src.y << 8 | src.z << 16), id};
  std::minstd_rand gen(ss);
  std::vector<std::uint8_t> out(size);
  for (auto& b : out) b = static_cast<std::uint8_t>(gen() >> 7);
  return out;
}

Driver::Driver(fabric::Simulator& sim, std::vector<Injection> schedule, std::uint64_t seed)
    : sim_(sim), seed_(seed) {
  const int ports = sim.config().router.intra_ports;
  queues_.resize(sim.topology().nodes.size() * static_cast<std::size_t>(ports));
  for (Injection& inj : schedule) {
    queues_[static_cast<std::size_t>(sim.topology().node_index(inj.src) * ports + inj.port)].push_back(inj);
  }
  pending_ = schedule.size();
}

void Driver::inject_due() {
  const std::uint64_t now = sim_.cycle();
  for (auto& q : queues_) {
    if (q.empty() || q.front().cycle > now) continue;
    const Injection& inj = q.front();
    if (!sim_.can_inject(inj.src, inj.size, inj.port)) {
      ++rejected_;
      continue;
    }
    const auto bytes = payload_bytes(seed_, inj.src, inj.id, inj.size);
    const wire::Packet p = wire::build_packet(inj.dest, inj.src, 0, bytes, inj.id, now,
                                              static_cast<std::uint8_t>(inj.dest_port));
    if (!sim_.inject(inj.src, p, inj.port)) {
      ++rejected_;
      continue;
    }
    inject_cycle_[{inj.src, inj.id}] = now;
    q.pop_front();
    --pending_;
  }
}

void Driver::consume() {
  if (!consumer_) return;
  const int ports = sim_.config().router.intra_ports;
  for (const Coord& c : sim_.topology().nodes) {
    for (int port = 0; port < ports; ++port) {
      while (auto d = sim_.eject(c, port)) {
        const wire::Header& h = d->packet.header;
        const auto it = inject_cycle_.find({h.src, h.packet_id});
        if (it == inject_cycle_.end()) {
          throw InvariantViolation("packet " + std::to_string(h.packet_id) + " from " +
                                   to_string(h.src) + " delivered twice or never injected");
        }
        const std::uint64_t t0 = it->second;
        inject_cycle_.erase(it);
        const FlowKey key{h.src, static_cast<int>(h.packet_id >> 24), h.dest, h.dest_port};
        const std::uint32_t seq = h.packet_id & 0xFFFFFFu;
        const auto [pos, fresh] = last_seq_.try_emplace(key, seq);
        if (!fresh) {
          if (seq <= pos->second) ++order_violations_;
          pos->second = seq;
        }
        ++delivered_;
        if (dump_ != nullptr) *dump_ << wire::dump_line(d->packet) << '\n';
        const std::uint64_t lat = d->cycle - t0;
        latency_sum_ += lat;
        latency_max_ = std::max(latency_max_, lat);
        if (keep_records_) {
          records_.push_back({h.src, h.dest, h.dest_port, h.packet_id, h.payload_len, t0, d->cycle});
        }
      }
    }
  }
}

fabric::Hooks Driver::hooks() {
  return {[this](fabric::Simulator&) { inject_due(); }, [this](fabric::Simulator&) { consume(); }};
}

bool Driver::drained() const { return pending_ == 0 && sim_.counters().in_flight == 0; }

int hop_count(const fabric::Topology& topo, const router::RouterConfig& base, Coord a, Coord b) {
  router::RouterConfig rc = base;
  rc.extents = topo.extents;
  rc.wrap = topo.wrap;
  rc.disabled_ports = 0;
  Coord cur = a;
  int hops = 0;
  while (cur != b) {
    rc.my_coord = cur;
    rc.express = topo.express[static_cast<std::size_t>(topo.node_index(cur))];
    const auto port = router::try_route(rc, b, 0);
    if (!port || !port->inter) return -1;
    const Direction d = port->direction();
    bool found = false;
    for (const auto& l : topo.links) {
      if (l.a == cur && l.da == d) {
        cur = l.b;
        found = true;
      } else if (l.b == cur && l.db == d) {
        cur = l.a;
        found = true;
      }
      if (found) break;
    }
    if (!found || ++hops > static_cast<int>(topo.nodes.size())) return -1;
  }
  return hops;
}

PingPongStats pingpong_latency(const fabric::Topology& topo, const fabric::SimConfig& cfg,
                               const HostModel& host, Coord a, Coord b, std::size_t size,
                               int iterations, const Observe& obs) {
  require_node(topo, a);
  require_node(topo, b);
  require_size(size);
  if (iterations < 1) throw ConfigError("ping-pong needs at least one iteration");

  fabric::Simulator sim(topo, cfg);
  sim.set_trace(obs.trace, obs.trace_filter);
  PingPongStats st;
  st.hops = hop_count(topo, cfg.router, a, b);
  st.iterations = iterations;
  st.size = size;
  st.host_cycles = 2 * (host.write_cycles() + host.read_cycles());
  st.net_min = std::numeric_limits<std::uint64_t>::max();

  constexpr std::uint64_t kLegCap = 1'000'000;
  auto leg = [&](Coord from, Coord to, std::uint32_t id) {
    const auto bytes = payload_bytes(0, from, id, size);
    const wire::Packet p = wire::build_packet(to, from, 0, bytes, id, sim.cycle());
    if (!sim.inject(from, p)) throw InvariantViolation("ping-pong injection refused on an idle fabric");
    const std::uint64_t start = sim.cycle();
    while (!sim.can_eject(to)) {
      if (sim.cycle() - start > kLegCap) throw InvariantViolation("ping-pong packet never arrived");
      sim.step();
    }
    const auto d = sim.eject(to);
    if (!d || d->packet.header.packet_id != id) throw InvariantViolation("ping-pong packet lost");
    if (obs.dump != nullptr) *obs.dump << wire::dump_line(d->packet) << '\n';
  };

  double sum = 0;
  for (int i = 0; i < iterations; ++i) {
    const std::uint64_t t0 = sim.cycle();
    leg(a, b, static_cast<std::uint32_t>(2 * i));
    leg(b, a, static_cast<std::uint32_t>(2 * i + 1));
    const std::uint64_t net = sim.cycle() - t0;
    st.net_min = std::min(st.net_min, net);
    st.net_max = std::max(st.net_max, net);
    sum += static_cast<double>(net);
    // Let credit words settle so iterations see the same idle fabric.
    for (int k = 0; k < 200; ++k) sim.step();
  }
  st.net_avg = sum / iterations;
  const double hc = static_cast<double>(st.host_cycles);
  st.min_s = (static_cast<double>(st.net_min) + hc) / host.clock_hz;
  st.max_s = (static_cast<double>(st.net_max) + hc) / host.clock_hz;
  st.avg_s = (st.net_avg + hc) / host.clock_hz;
  return st;
}

double link_efficiency_model(std::size_t size) {
  const double words = static_cast<double>(wire::payload_flits(size) + 4);
  return static_cast<double>(size) * 8.0 / (words * kFlitBits);
}

BandwidthRow bandwidth_point(std::size_t size, const fabric::SimConfig& base, const SweepParams& p,
                             const Observe& obs) {
  require_size(size);
  if (p.senders < 1) throw ConfigError("at least one sender is required");
  fabric::SimConfig cfg = base;
  TrafficSpec spec;
  spec.pattern = Pattern::Saturate;
  spec.size = size;
  spec.count = p.packets_per_sender;
  spec.ports = p.senders;
  spec.seed = p.seed;

  fabric::Topology topo;
  if (p.kind == SweepKind::Router) {
    cfg.router.intra_ports = std::max(cfg.router.intra_ports, p.senders + 1);
    topo = fabric::build_topology("mesh", {1, 1, 1});
    spec.sources = {{0, 0, 0}};
    spec.dest = {0, 0, 0};
    spec.dest_port = p.senders;
  } else {
    cfg.router.intra_ports = std::max(cfg.router.intra_ports, p.senders);
    topo = fabric::build_topology("mesh", {2, 1, 1});
    spec.sources = {{0, 0, 0}};
    spec.dest = {1, 0, 0};
    spec.dest_port = 0;
  }

  fabric::Simulator sim(topo, cfg);
  Driver drv(sim, traffic_generate(spec, topo, cfg.router.intra_ports), p.seed);
  drv.set_keep_records(false);
  drv.set_dump(obs.dump);
  sim.set_trace(obs.trace, obs.trace_filter);
  const auto res = sim.run_until([&](const fabric::Simulator&) { return drv.drained(); },
                                 100'000'000, drv.hooks());
  if (!res.done) throw InvariantViolation("bandwidth run did not drain: " + res.report);

  BandwidthRow row;
  row.size = size;
  row.packets = drv.delivered();
  double bits = 0;
  double bits_per_cycle = 0;
  if (p.kind == SweepKind::Router) {
    const auto& st = sim.router({0, 0, 0}).output_stats(p.senders);
    row.busy_cycles = static_cast<std::uint64_t>(st.last_footer_cycle - st.first_request_cycle + 1);
    bits = static_cast<double>(st.payload_bytes) * 8.0;
    bits_per_cycle = kFlitBits;
  } else {
    const auto& st = sim.link({0, 0, 0}, Direction::XPlus)->stats();
    row.busy_cycles = static_cast<std::uint64_t>(st.last_word_end - st.first_word_cycle + 1);
    bits = static_cast<double>(st.payload_bytes) * 8.0;
    bits_per_cycle = cfg.link.serial.bits_per_cycle();
  }
  row.peak_gbps = bits_per_cycle * fabric::kClockHz / 1e9;
  row.efficiency = bits / (static_cast<double>(row.busy_cycles) * bits_per_cycle);
  row.gbps = row.efficiency * row.peak_gbps;
  return row;
}

std::vector<BandwidthRow> bandwidth_sweep(const std::vector<std::size_t>& sizes,
                                          const fabric::SimConfig& cfg, const SweepParams& p) {
  std::vector<BandwidthRow> rows;
  rows.reserve(sizes.size());
  for (std::size_t s : sizes) rows.push_back(bandwidth_point(s, cfg, p));
  return rows;
}

namespace {

std::uint64_t pack_coord(Coord c) {
  return static_cast<std::uint64_t>(c.x) | static_cast<std::uint64_t>(c.y) << 8 |
         static_cast<std::uint64_t>(c.z) << 16;
}

Coord unpack_coord(std::uint64_t v) {
  return {static_cast<int>(v & 0xFF), static_cast<int>(v >> 8 & 0xFF), static_cast<int>(v >> 16 & 0xFF)};
}

std::string reg_name(std::uint32_t reg) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%02x", reg);
  return buf;
}

bool is_fifo_status(const router::RouterConfig& rc, std::uint32_t reg) {
  return reg >= kRegFifoStatus && reg < kRegFifoStatus + static_cast<std::uint32_t>(rc.num_ports());
}

}  // namespace

std::uint64_t reg_read(fabric::Simulator& sim, Coord node, std::uint32_t reg) {
  const router::Router& r = sim.router(node);
  const router::RouterConfig& rc = r.latched_config();
  switch (reg) {
    case kRegCoord:
      return pack_coord(rc.my_coord);
    case kRegLattice: {
      std::uint64_t v = 0;
      for (int d = 0; d < kDims; ++d) {
        v |= static_cast<std::uint64_t>(rc.extents[d] - 1) << (8 * d);
        if (rc.wrap[d]) v |= std::uint64_t{1} << (24 + d);
      }
      return v;
    }
    case kRegDimOrder:
      return static_cast<std::uint64_t>(rc.dim_order[0] | rc.dim_order[1] << 2 | rc.dim_order[2] << 4);
    case kRegArbPolicy:
      return rc.arb_policy == router::ArbPolicy::Fixed ? 1 : 0;
    case kRegArbPriority: {
      std::uint64_t v = ~std::uint64_t{0};
      for (std::size_t i = 0; i < rc.priority.size() && i < 16; ++i) {
        v &= ~(std::uint64_t{0xF} << (4 * i));
        v |= static_cast<std::uint64_t>(rc.priority[i]) << (4 * i);
      }
      return v;
    }
    case kRegPortDisable:
      return rc.disabled_ports;
    case kRegVcPolicy:
      return rc.vc_policy == router::VcPolicy::Dateline ? 1 : 0;
    case kRegLinkStatus: {
      std::uint64_t v = 0;
      for (int d = 0; d < kDirections; ++d) {
        const link::LinkEnd* l = r.link(static_cast<Direction>(d));
        if (l == nullptr) continue;
        v |= std::uint64_t{1} << d;
        const int max_pkt = static_cast<int>(wire::packet_flits(wire::kMaxPayload));
        if (!l->can_send(0, max_pkt) || !l->can_send(1, max_pkt)) v |= std::uint64_t{1} << (8 + d);
      }
      return v;
    }
    case kRegInjected:
      return sim.node_counters(node).injected;
    case kRegEjected:
      return sim.node_counters(node).ejected;
    case kRegDropped:
      return sim.node_counters(node).dropped;
    case kRegHealth:
      return sim.health(node);
    default:
      break;
  }
  if (is_fifo_status(rc, reg)) return r.input_occupancy(static_cast<int>(reg - kRegFifoStatus));
  throw RegisterError(RegisterError::Kind::InvalidRegister, "invalid register " + reg_name(reg));
}

void reg_write(fabric::Simulator& sim, Coord node, std::uint32_t reg, std::uint64_t value) {
  router::Router& r = sim.router(node);
  router::RouterConfig rc = r.latched_config();
  switch (reg) {
    case kRegCoord:
      rc.my_coord = unpack_coord(value);
      break;
    case kRegLattice:
      for (int d = 0; d < kDims; ++d) {
        rc.extents[d] = static_cast<int>(value >> (8 * d) & 0xFF) + 1;
        rc.wrap[d] = (value >> (24 + d) & 1) != 0;
      }
      break;
    case kRegDimOrder:
      for (int i = 0; i < kDims; ++i) rc.dim_order[i] = static_cast<int>(value >> (2 * i) & 3);
      break;
    case kRegArbPolicy:
      rc.arb_policy = (value & 1) != 0 ? router::ArbPolicy::Fixed : router::ArbPolicy::RoundRobin;
      break;
    case kRegArbPriority:
      rc.priority.clear();
      for (int i = 0; i < 16; ++i) {
        const int port = static_cast<int>(value >> (4 * i) & 0xF);
        if (port == 0xF) break;
        rc.priority.push_back(port);
      }
      break;
    case kRegPortDisable:
      rc.disabled_ports = static_cast<std::uint32_t>(value);
      break;
    case kRegVcPolicy:
      rc.vc_policy = (value & 1) != 0 ? router::VcPolicy::Dateline : router::VcPolicy::OffsetSign;
      break;
    case kRegHealth:
      sim.set_health(node, static_cast<std::uint8_t>(value));
      return;
    case kRegLinkStatus:
    case kRegInjected:
    case kRegEjected:
    case kRegDropped:
      throw RegisterError(RegisterError::Kind::ReadOnly, "register " + reg_name(reg) + " is read-only");
    default:
      if (is_fifo_status(rc, reg)) throw RegisterError(RegisterError::Kind::ReadOnly, "register " + reg_name(reg) + " is read-only");
      throw RegisterError(RegisterError::Kind::InvalidRegister, "invalid register " + reg_name(reg));
  }
  r.reconfigure(rc);
}

}  // namespace xnet::harness
