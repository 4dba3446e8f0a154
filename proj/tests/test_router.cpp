#include "doctest.h"
#include "oracles.hpp"
#include "xnet/router.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <tuple>
#include <random>
#include <set>

using namespace xnet;
using namespace xnet::router;

namespace {

RouterConfig lattice_cfg(Coord my, std::array<int, 3> ext, bool torus) {
  RouterConfig c;
  c.my_coord = my;
  c.extents = ext;
  for (int d = 0; d < 3; ++d) c.wrap[d] = torus && ext[d] > 1;
  return c;
}

std::vector<Flit> packet_flits(int dest_port, std::size_t size, std::uint32_t id) {
  std::vector<std::uint8_t> bytes(size, static_cast<std::uint8_t>(id));
  const auto p = wire::build_packet({0, 0, 0}, {0, 0, 0}, 0, bytes, id, 0,
                                    static_cast<std::uint8_t>(dest_port));
  return wire::to_flits(p);
}

Coord step(Coord c, Direction d, const std::array<int, 3>& ext) {
  const int dim = dim_of(d);
  c[dim] = is_plus(d) ? (c[dim] + 1) % ext[dim] : (c[dim] - 1 + ext[dim]) % ext[dim];
  return c;
}

// A lone router with only intra-tile ports in use. Ejected packets are
// pulled off and decoded every cycle.
struct Bench {
  Router r;
  std::uint64_t now = 0;
  std::vector<std::pair<int, wire::Packet>> out;  // (eject port, packet)
  std::vector<std::vector<Flit>> partial;
  std::vector<GrantRecord> grants;

  explicit Bench(RouterConfig c) : r(std::move(c)) {
    partial.resize(static_cast<std::size_t>(r.config().intra_ports));
    r.set_grant_log(&grants);
  }

  CycleResult tick() {
    const CycleResult res = r.cycle(now++);
    for (int p = 0; p < r.config().intra_ports; ++p) {
      FlitFifo& f = r.eject_fifo(p);
      while (!f.empty()) {
        const Slot s = f.pop();
        partial[p].push_back(s.flit);
        if (s.kind == FlitKind::Footer) {
          out.emplace_back(p, wire::from_flits(partial[p]));
          partial[p].clear();
        }
      }
    }
    return res;
  }
};

}  // namespace

TEST_CASE("route examples") {
  RouterConfig c = lattice_cfg({0, 0, 0}, {4, 4, 4}, false);
  CHECK(route(c, {0, 0, 0}, 2) == PortId::intra(2));
  CHECK(route(c, {1, 0, 0}) == PortId::inter_tile(Direction::XPlus));
  CHECK(route(c, {0, 3, 2}) == PortId::inter_tile(Direction::YPlus));
  c.dim_order = {2, 1, 0};
  CHECK(route(c, {1, 1, 1}) == PortId::inter_tile(Direction::ZPlus));

  RouterConfig ring = lattice_cfg({3, 0, 0}, {4, 1, 1}, true);
  CHECK(route(ring, {0, 0, 0}) == PortId::inter_tile(Direction::XPlus));
  CHECK(route(ring, {1, 0, 0}) == PortId::inter_tile(Direction::XPlus));  // tie goes plus
  CHECK(route(ring, {2, 0, 0}) == PortId::inter_tile(Direction::XMinus));

  RouterConfig line = lattice_cfg({3, 0, 0}, {4, 1, 1}, false);
  CHECK(route(line, {0, 0, 0}) == PortId::inter_tile(Direction::XMinus));
}

TEST_CASE("unroutable destinations") {
  RouterConfig c = lattice_cfg({1, 1, 0}, {4, 4, 1}, false);
  c.disabled_ports = 1u << c.port_index(PortId::inter_tile(Direction::XPlus));
  CHECK_THROWS_AS(route(c, {3, 0, 0}), Unroutable);
  // The disabled port only matters when dimension order needs it.
  CHECK(route(c, {1, 3, 0}) == PortId::inter_tile(Direction::YPlus));
  CHECK_THROWS_AS(route(c, {9, 0, 0}), Unroutable);
  CHECK_THROWS_AS(route(c, {1, 1, 0}, 7), Unroutable);
}

TEST_CASE("dimension-ordered paths match the brute-force oracle on every 4x4x4 pair") {
  const std::array<int, 3> ext{4, 4, 4};
  const std::array<std::array<int, 3>, 2> orders{{{0, 1, 2}, {2, 1, 0}}};
  for (bool torus : {false, true}) {
    for (const auto& order : orders) {
      std::map<Coord, RouterConfig> cfgs;
      for (int x = 0; x < 4; ++x)
        for (int y = 0; y < 4; ++y)
          for (int z = 0; z < 4; ++z) {
            RouterConfig c = lattice_cfg({x, y, z}, ext, torus);
            c.dim_order = order;
            cfgs[{x, y, z}] = c;
          }
      for (const auto& [src, c0] : cfgs) {
        for (const auto& [dst, c1] : cfgs) {
          const auto path = oracle::dor_path(src, dst, ext, {torus, torus, torus}, order);
          Coord at = src;
          for (const auto& hop : path) {
            REQUIRE(at == hop.at);
            const PortId p = route(cfgs.at(at), dst);
            REQUIRE(p.inter);
            REQUIRE(p.direction() == make_direction(hop.dim, hop.plus));
            at = step(at, p.direction(), ext);
          }
          REQUIRE(at == dst);
          REQUIRE(route(cfgs.at(at), dst, 1) == PortId::intra(1));
        }
      }
    }
  }
}

TEST_CASE("virtual channel selection") {
  RouterConfig c = lattice_cfg({0, 0, 0}, {4, 1, 1}, false);
  CHECK(select_vc(c, {0, 0, 0}, {0, 0, 0}, {2, 0, 0}, 0) == 1);
  c.my_coord = {1, 0, 0};
  CHECK(select_vc(c, {1, 0, 0}, {1, 0, 0}, {0, 0, 0}, 0) == 0);

  RouterConfig ring = lattice_cfg({3, 0, 0}, {4, 1, 1}, true);
  ring.vc_policy = VcPolicy::Dateline;
  // 3 -> 0 -> 1: upper before the wraparound link, lower after it.
  CHECK(select_vc(ring, {3, 0, 0}, {3, 0, 0}, {1, 0, 0}, 0) == 1);
  CHECK(select_vc(ring, {3, 0, 0}, {0, 0, 0}, {1, 0, 0}, 0) == 0);
  // Minus direction: 0 -> 3 crosses too.
  CHECK(select_vc(ring, {1, 0, 0}, {0, 0, 0}, {3, 0, 0}, 0) == 1);
  CHECK(select_vc(ring, {1, 0, 0}, {3, 0, 0}, {2, 0, 0}, 0) == 0);
  // Never crossing: upper throughout.
  CHECK(select_vc(ring, {0, 0, 0}, {1, 0, 0}, {2, 0, 0}, 0) == 1);
  // Under offset-sign the same ring keeps the minimal-path sign.
  ring.vc_policy = VcPolicy::OffsetSign;
  CHECK(select_vc(ring, {3, 0, 0}, {0, 0, 0}, {1, 0, 0}, 0) == 1);
  CHECK(select_vc(ring, {0, 0, 0}, {0, 0, 0}, {3, 0, 0}, 0) == 0);
}

TEST_CASE("dateline oracle: lower exactly on hops after the wraparound link") {
  const std::array<int, 3> ext{4, 4, 1};
  for (int sx = 0; sx < 4; ++sx)
    for (int sy = 0; sy < 4; ++sy)
      for (int dx = 0; dx < 4; ++dx)
        for (int dy = 0; dy < 4; ++dy) {
          const Coord src{sx, sy, 0}, dst{dx, dy, 0};
          const auto path = oracle::dor_path(src, dst, ext, {true, true, false});
          std::array<bool, 3> crossed{};
          for (const auto& hop : path) {
            RouterConfig c = lattice_cfg(hop.at, ext, true);
            c.vc_policy = VcPolicy::Dateline;
            REQUIRE(select_vc(c, src, hop.at, dst, hop.dim) == (crossed[hop.dim] ? 0 : 1));
            const bool wraps = hop.plus ? hop.at[hop.dim] == ext[hop.dim] - 1 : hop.at[hop.dim] == 0;
            if (wraps) crossed[hop.dim] = true;
          }
        }
}

namespace {

// Channel dependency graph over (node, direction, vc) for all-pairs
// dimension-ordered traffic; true when it has a cycle.
bool dependency_cycle(std::array<int, 3> ext, bool torus, VcPolicy policy) {
  using Chan = std::tuple<Coord, int, int>;
  std::map<Chan, std::set<Chan>> g;
  std::vector<Coord> nodes;
  for (int x = 0; x < ext[0]; ++x)
    for (int y = 0; y < ext[1]; ++y)
      for (int z = 0; z < ext[2]; ++z) nodes.push_back({x, y, z});
  for (const Coord& s : nodes) {
    for (const Coord& d : nodes) {
      Coord at = s;
      std::optional<Chan> prev;
      while (at != d) {
        RouterConfig c = lattice_cfg(at, ext, torus);
        c.vc_policy = policy;
        const PortId p = route(c, d);
        const Chan ch{at, p.index, select_vc(c, s, at, d, dim_of(p.direction()))};
        if (prev) g[*prev].insert(ch);
        g[ch];
        prev = ch;
        at = step(at, p.direction(), ext);
      }
    }
  }
  std::map<Chan, int> color;
  std::function<bool(const Chan&)> dfs = [&](const Chan& u) {
    color[u] = 1;
    for (const Chan& v : g[u]) {
      if (color[v] == 1) return true;
      if (color[v] == 0 && dfs(v)) return true;
    }
    color[u] = 2;
    return false;
  };
  for (const auto& [u, _] : g) {
    if (color[u] == 0 && dfs(u)) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("channel dependencies: acyclic on meshes and on dateline tori") {
  CHECK_FALSE(dependency_cycle({4, 4, 1}, false, VcPolicy::OffsetSign));
  CHECK_FALSE(dependency_cycle({4, 4, 4}, false, VcPolicy::OffsetSign));
  CHECK_FALSE(dependency_cycle({4, 1, 1}, true, VcPolicy::Dateline));
  CHECK_FALSE(dependency_cycle({4, 4, 1}, true, VcPolicy::Dateline));
  CHECK_FALSE(dependency_cycle({5, 3, 1}, true, VcPolicy::Dateline));
  // Offset-sign alone leaves the ring cycle in place.
  CHECK(dependency_cycle({4, 1, 1}, true, VcPolicy::OffsetSign));
}

TEST_CASE("switch gate boundaries") {
  CHECK(gate_admit(1024, 34));
  CHECK(gate_admit(34, 34));
  CHECK_FALSE(gate_admit(33, 34));
}

TEST_CASE("arbiter policies") {
  Arbiter rr(8);
  const std::vector<int> ab{0, 2};
  rr.set_last_granted(0);
  CHECK(rr.grant(ab, ArbPolicy::RoundRobin, {}) == 2);
  CHECK(rr.grant(ab, ArbPolicy::RoundRobin, {}) == 0);
  CHECK(rr.grant(ab, ArbPolicy::RoundRobin, {}) == 2);
  CHECK(rr.grant({}, ArbPolicy::RoundRobin, {}) == -1);

  Arbiter fixed(8);
  const std::vector<int> prio{1, 0};  // port 1 (slot 2) over port 0 (slot 0)
  for (int i = 0; i < 10; ++i) CHECK(fixed.grant(ab, ArbPolicy::Fixed, prio) == 2);
  const std::vector<int> only_a{0};
  CHECK(fixed.grant(only_a, ArbPolicy::Fixed, prio) == 0);
}

TEST_CASE("single 512-byte flow keeps its output busy for 42 cycles") {
  Bench b(lattice_cfg({0, 0, 0}, {1, 1, 1}, false));
  REQUIRE(b.r.inject(0, packet_flits(1, 512, 1)));
  for (int i = 0; i < 100; ++i) b.tick();
  REQUIRE(b.out.size() == 1);
  CHECK(b.out[0].first == 1);
  const OutputStats& st = b.r.output_stats(1);
  CHECK(st.last_footer_cycle - st.first_request_cycle + 1 == 42);
  CHECK(st.first_flit_cycle - st.first_request_cycle == 8);
  CHECK(b.r.idle());
}

TEST_CASE("two senders to one output: back-to-back packets every 36 cycles") {
  Bench b(lattice_cfg({0, 0, 0}, {1, 1, 1}, false));
  for (std::uint32_t i = 0; i < 40; ++i) {
    REQUIRE(b.r.inject(static_cast<int>(i % 2), packet_flits(2, 512, i)));
  }
  std::vector<std::uint64_t> footers;
  std::size_t seen = 0;
  while (b.out.size() < 40) {
    b.tick();
    if (b.out.size() != seen) {
      seen = b.out.size();
      footers.push_back(b.now - 1);
    }
  }
  for (std::size_t i = 1; i < footers.size(); ++i) CHECK(footers[i] - footers[i - 1] == 36);
}

TEST_CASE("idle router produces no events") {
  Bench b(lattice_cfg({0, 0, 0}, {1, 1, 1}, false));
  for (int i = 0; i < 1000; ++i) {
    const CycleResult r = b.tick();
    REQUIRE(r.flits_moved == 0);
  }
  CHECK(b.r.idle());
  CHECK(b.grants.empty());
}

TEST_CASE("round robin alternates exactly under saturation") {
  Bench b(lattice_cfg({0, 0, 0}, {1, 1, 1}, false));
  std::uint32_t next[2] = {0, 0};
  while (b.out.size() < 1000) {
    for (int p = 0; p < 2; ++p) {
      if (b.r.input(p, 0).size() < 200) {
        REQUIRE(b.r.inject(p, packet_flits(2, 64, next[p]++ | static_cast<std::uint32_t>(p) << 24)));
      }
    }
    b.tick();
  }
  int count[2] = {0, 0};
  for (std::size_t i = 0; i < 1000; ++i) {
    const int src = static_cast<int>(b.out[i].second.footer.echo_id >> 24);
    ++count[src];
    if (i > 0) {
      CHECK(src != static_cast<int>(b.out[i - 1].second.footer.echo_id >> 24));
    }
  }
  CHECK(count[0] == 500);
  CHECK(count[1] == 500);
}

TEST_CASE("round robin fairness across k contenders") {
  for (int k = 2; k <= 5; ++k) {
    RouterConfig c = lattice_cfg({0, 0, 0}, {1, 1, 1}, false);
    c.intra_ports = k + 1;
    Bench b(c);
    std::vector<std::uint32_t> next(static_cast<std::size_t>(k), 0);
    const int total = 300 * k + 1;
    while (static_cast<int>(b.out.size()) < total) {
      for (int p = 0; p < k; ++p) {
        if (b.r.input(p, 0).size() < 100) {
          REQUIRE(b.r.inject(p, packet_flits(k, 32, next[p]++ | static_cast<std::uint32_t>(p) << 24)));
        }
      }
      b.tick();
    }
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < total; ++i) ++count[b.out[i].second.footer.echo_id >> 24];
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("fixed priority starves the lower-priority input") {
  RouterConfig c = lattice_cfg({0, 0, 0}, {1, 1, 1}, false);
  c.arb_policy = ArbPolicy::Fixed;
  c.priority = {1, 0};
  // The next header of a flow is routed only after its predecessor leaves the
  // input, so the favoured input requests at every grant only when routing
  // fits inside the turnaround gap.
  c.routing_latency = 0;
  Bench b(c);
  for (std::uint32_t i = 0; i < 50; ++i) {
    REQUIRE(b.r.inject(0, packet_flits(2, 64, i)));
    REQUIRE(b.r.inject(1, packet_flits(2, 64, i | 1u << 24)));
  }
  for (int i = 0; i < 5000 && b.out.size() < 100; ++i) b.tick();
  REQUIRE(b.out.size() == 100);
  for (int i = 0; i < 50; ++i) CHECK((b.out[static_cast<std::size_t>(i)].second.footer.echo_id >> 24) == 1);
}

TEST_CASE("packets to a disabled port are dropped and counted") {
  RouterConfig c = lattice_cfg({0, 0, 0}, {1, 1, 1}, false);
  c.disabled_ports = 1u << 2;
  Bench b(c);
  REQUIRE(b.r.inject(0, packet_flits(2, 128, 1)));
  REQUIRE(b.r.inject(0, packet_flits(1, 128, 2)));
  REQUIRE(b.r.inject(1, packet_flits(5, 0, 3)));  // no such intra port
  std::uint64_t dropped = 0;
  for (int i = 0; i < 200; ++i) dropped += static_cast<std::uint64_t>(b.tick().dropped);
  CHECK(dropped == 2);
  CHECK(b.r.dropped() == 2);
  REQUIRE(b.out.size() == 1);
  CHECK(b.out[0].second.footer.echo_id == 2);
  CHECK(b.r.idle());
}

TEST_CASE("packets never interleave on an output and arrive intact") {
  RouterConfig c = lattice_cfg({0, 0, 0}, {1, 1, 1}, false);
  c.intra_ports = 4;
  Bench b(c);
  std::mt19937_64 rng(12);
  std::vector<std::uint32_t> sent_per_src(3, 0);
  for (int round = 0; round < 400; ++round) {
    const int src = static_cast<int>(rng() % 3);
    const int dst = 3 - static_cast<int>(rng() % 2);
    const std::uint32_t id = sent_per_src[static_cast<std::size_t>(src)]++ | static_cast<std::uint32_t>(src) << 24;
    if (!b.r.inject(src, packet_flits(dst, rng() % 513, id))) break;
    if (round % 3 == 0) b.tick();
  }
  for (int i = 0; i < 40000 && !b.r.idle(); ++i) b.tick();
  b.tick();
  CHECK(b.r.idle());
  std::uint32_t total = 0;
  for (auto n : sent_per_src) total += n;
  CHECK(b.out.size() == total);
  // Per source, ids come out in injection order (Bench::tick decodes, so a
  // torn or mixed packet would already have thrown).
  std::map<std::pair<int, int>, std::uint32_t> last;
  for (const auto& [port, p] : b.out) {
    const int src = static_cast<int>(p.footer.echo_id >> 24);
    const std::uint32_t seq = p.footer.echo_id & 0xFFFFFF;
    auto it = last.find({src, port});
    if (it != last.end()) CHECK(seq > it->second);
    last[{src, port}] = seq;
  }
}

TEST_CASE("reconfiguration applies from the next cycle") {
  Bench b(lattice_cfg({0, 0, 0}, {1, 1, 1}, false));
  RouterConfig c = b.r.config();
  c.disabled_ports = 1u << 1;
  b.r.reconfigure(c);
  CHECK(b.r.config().disabled_ports == 0);
  CHECK(b.r.latched_config().disabled_ports == 2u);
  REQUIRE(b.r.inject(0, packet_flits(1, 0, 1)));
  for (int i = 0; i < 50; ++i) b.tick();
  CHECK(b.r.config().disabled_ports == 2u);
  CHECK(b.out.empty());
  CHECK(b.r.dropped() == 1);

  c.my_coord = {5, 0, 0};
  CHECK_THROWS_AS(b.r.reconfigure(c), ConfigError);
}
