#include "xnet/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

namespace xnet::experiments {

using Json = nlohmann::ordered_json;
using config::ExperimentConfig;

std::string csv_header(const std::string& experiment) {
  if (experiment == "pingpong") {
    return "hops,size,roundtrip_min_us,roundtrip_avg_us,roundtrip_max_us,network_avg_cycles,host_cycles\n";
  }
  if (experiment == "bandwidth-router" || experiment == "bandwidth-link") return "size,gbps,efficiency\n";
  return "cycles,injected,ejected,dropped,in_flight,avg_latency_cycles,max_latency_cycles,stall_cycles,"
         "order_violations,possible_deadlock\n";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace {

// Runs fn(0..n-1) on up to `jobs` threads. Exceptions surface in index order.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Streams {
  std::ostringstream trace;
  std::ostringstream dump;
};

harness::Observe observe(const ExperimentConfig& cfg, Streams& s) {
  harness::Observe o;
  if (!cfg.output.trace_link.empty()) {
    o.trace = &s.trace;
    o.trace_filter = cfg.output.trace_link;
  }
  if (cfg.output.dump_packets) o.dump = &s.dump;
  return o;
}

Json calibration(const ExperimentConfig& cfg) {
  auto entry = [](double v, const char* status, const char* note) {
    return Json{{"value", v}, {"status", status}, {"note", note}};
  };
  const auto& r = cfg.sim.router;
  const auto& l = cfg.sim.link;
  Json j;
  j["routing_latency_cycles"] =
      entry(r.routing_latency, "calibrated", "router pipeline from header arrival to first forwarded flit");
  j["turnaround_cycles"] = entry(r.turnaround, "calibrated", "output idle gap after a footer");
  j["wire_latency_cycles"] =
      entry(l.wire_latency, "calibrated", "transceiver and cable delay; sets the per-hop roundtrip increment");
  j["words_per_packet"] = entry(cfg.host.words_per_packet, "calibrated", "host words moved per packet");
  j["read_cycles_per_word"] = entry(cfg.host.read_cycles_per_word, "measured", "host read cost");
  j["write_cycles_per_word"] = entry(cfg.host.write_cycles_per_word, "measured", "host write cost");
  j["line_rate_gbps"] = entry(l.serial.line_rate / 1e9, "measured", "serial lane rate");
  j["clock_hz"] = entry(fabric::kClockHz, "measured", "datapath clock");
  return j;
}

Json counters_json(const fabric::GlobalCounters& c) {
  return {{"cycle", c.cycle},         {"injected", c.injected},         {"ejected", c.ejected},
          {"dropped", c.dropped},     {"in_flight", c.in_flight},       {"corrupt", c.corrupt},
          {"stall_cycles", c.stall_cycles}, {"flits_moved", c.flits_moved}};
}

void run_pingpong(const ExperimentConfig& cfg, Artifacts& a) {
  const fabric::Topology topo = config::parse_topology(cfg.topology);
  const Coord src = topo.nodes.front();
  struct Point {
    int hops;
    Coord dest;
    std::size_t size;
    harness::PingPongStats st;
    Streams io;
  };
  std::vector<std::unique_ptr<Point>> points;
  for (int h : cfg.workload.hops) {
    std::optional<Coord> dest;
    for (const Coord& c : topo.nodes) {
      if (harness::hop_count(topo, cfg.sim.router, src, c) == h) {
        dest = c;
        break;
      }
    }
    if (!dest) {
      throw ConfigError("workload.hops: no node " + std::to_string(h) + " hops from " + to_string(src) +
                        " in " + cfg.topology);
    }
    for (std::size_t s : cfg.workload.sizes) {
      auto p = std::make_unique<Point>();
      p->hops = h;
      p->dest = *dest;
      p->size = s;
      points.push_back(std::move(p));
    }
  }
  parallel_for(points.size(), cfg.jobs, [&](std::size_t i) {
    Point& p = *points[i];
    p.st = harness::pingpong_latency(topo, cfg.sim, cfg.host, src, p.dest, p.size, cfg.workload.iterations,
                                     observe(cfg, p.io));
  });

  std::string csv = csv_header(cfg.experiment);
  Json rows = Json::array();
  for (const auto& p : points) {
    const auto& st = p->st;
    csv += std::to_string(p->hops) + "," + std::to_string(p->size) + "," + fmt(st.min_s * 1e6) + "," +
           fmt(st.avg_s * 1e6) + "," + fmt(st.max_s * 1e6) + "," + fmt(st.net_avg) + "," +
           std::to_string(st.host_cycles) + "\n";
    rows.push_back({{"hops", p->hops},
                    {"dest", to_string(p->dest)},
                    {"size", p->size},
                    {"roundtrip_avg_us", st.avg_s * 1e6},
                    {"network_avg_cycles", st.net_avg}});
    a.trace += p->io.trace.str();
    a.packets += p->io.dump.str();
  }
  Json deltas = Json::array();
  const std::size_t per_hop = cfg.workload.sizes.size();
  for (std::size_t h = 1; h < cfg.workload.hops.size(); ++h) {
    for (std::size_t s = 0; s < per_hop; ++s) {
      const auto& lo = points[(h - 1) * per_hop + s]->st;
      const auto& hi = points[h * per_hop + s]->st;
      deltas.push_back({{"from_hops", cfg.workload.hops[h - 1]},
                        {"to_hops", cfg.workload.hops[h]},
                        {"size", cfg.workload.sizes[s]},
                        {"delta_us", (hi.avg_s - lo.avg_s) * 1e6}});
    }
  }
  a.csv = std::move(csv);
  a.summary["stats"] = {{"source", to_string(src)}, {"points", rows}, {"hop_deltas", deltas}};
  a.message = "ping-pong: " + std::to_string(points.size()) + " points";
}

void run_bandwidth(const ExperimentConfig& cfg, Artifacts& a, harness::SweepKind kind) {
  harness::SweepParams p;
  p.kind = kind;
  p.senders = cfg.workload.senders;
  p.packets_per_sender = cfg.workload.packets_per_sender;
  p.seed = cfg.seed;
  const auto& sizes = cfg.workload.sizes;
  std::vector<harness::BandwidthRow> rows(sizes.size());
  std::vector<Streams> io(sizes.size());
  parallel_for(sizes.size(), cfg.jobs, [&](std::size_t i) {
    rows[i] = harness::bandwidth_point(sizes[i], cfg.sim, p, observe(cfg, io[i]));
  });

  std::string csv = csv_header(cfg.experiment);
  Json points = Json::array();
  bool monotonic = true;
  double max_model_gap = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    csv += std::to_string(r.size) + "," + fmt(r.gbps) + "," + fmt(r.efficiency) + "\n";
    Json pt{{"size", r.size},
            {"gbps", r.gbps},
            {"efficiency", r.efficiency},
            {"busy_cycles", r.busy_cycles},
            {"packets", r.packets}};
    if (kind == harness::SweepKind::Link) {
      const double model = harness::link_efficiency_model(r.size);
      pt["model_efficiency"] = model;
      max_model_gap = std::max(max_model_gap, std::abs(model - r.efficiency));
    }
    points.push_back(pt);
    if (i > 0 && r.size > rows[i - 1].size && r.efficiency < rows[i - 1].efficiency) monotonic = false;
    a.trace += io[i].trace.str();
    a.packets += io[i].dump.str();
  }
  a.csv = std::move(csv);
  Json stats{{"port", kind == harness::SweepKind::Router ? "router" : "link"},
             {"peak_gbps", rows.empty() ? 0.0 : rows.front().peak_gbps},
             {"senders", p.senders},
             {"monotonic", monotonic},
             {"points", points}};
  if (kind == harness::SweepKind::Router) {
    stats["protocol_overhead_512"] = 2.0 / static_cast<double>(wire::payload_flits(512));
  } else {
    stats["max_model_gap"] = max_model_gap;
  }
  a.summary["stats"] = stats;
  a.message = "bandwidth sweep: " + std::to_string(rows.size()) + " sizes";
}

// Uniform-random traffic; also reused by the deadlock demonstration.
void run_traffic(const ExperimentConfig& cfg, Artifacts& a, const fabric::Topology& topo,
                 std::vector<harness::Injection> schedule, std::uint64_t cap) {
  fabric::SimConfig sc = cfg.sim;
  if (sc.check_interval == 0) sc.check_interval = 1000;
  fabric::Simulator sim(topo, sc);
  Streams io;
  const harness::Observe obs = observe(cfg, io);
  sim.set_trace(obs.trace, obs.trace_filter);
  harness::Driver drv(sim, std::move(schedule), cfg.seed);
  drv.set_keep_records(false);
  drv.set_dump(obs.dump);
  const fabric::RunResult res =
      sim.run_until([&](const fabric::Simulator&) { return drv.drained(); }, cap, drv.hooks());
  sim.check_invariants();
  const auto& c = res.counters;
  const bool balanced = c.injected == c.ejected + c.dropped + sim.in_flight_recount();
  const double avg_lat = drv.delivered() == 0 ? 0.0
                                              : static_cast<double>(drv.latency_sum()) /
                                                    static_cast<double>(drv.delivered());
  a.csv = csv_header(cfg.experiment);
  a.csv += std::to_string(c.cycle) + "," + std::to_string(c.injected) + "," + std::to_string(c.ejected) + "," +
           std::to_string(c.dropped) + "," + std::to_string(c.in_flight) + "," + fmt(avg_lat) + "," +
           std::to_string(drv.latency_max()) + "," + std::to_string(c.stall_cycles) + "," +
           std::to_string(drv.order_violations()) + "," + (res.possible_deadlock ? "1" : "0") + "\n";
  a.trace = io.trace.str();
  a.packets = io.dump.str();
  a.summary["stats"] = {{"counters", counters_json(c)},
                        {"conservation_balanced", balanced},
                        {"order_violations", drv.order_violations()},
                        {"avg_latency_cycles", avg_lat},
                        {"max_latency_cycles", drv.latency_max()},
                        {"drained", res.done},
                        {"possible_deadlock", res.possible_deadlock},
                        {"report", res.report}};
  if (res.possible_deadlock) {
    a.exit_code = kExitDeadlock;
    a.message = res.report;
  } else if (!balanced || drv.order_violations() > 0) {
    a.exit_code = kExitInvariant;
    a.message = "conservation or ordering violated";
  } else if (!res.done) {
    a.exit_code = kExitDeadlock;
    a.message = "cycle cap reached at " + std::to_string(c.cycle) + " with " + std::to_string(c.in_flight) +
                " packets in flight";
  } else {
    a.message = "drained at cycle " + std::to_string(c.cycle) + ": " + std::to_string(c.ejected) + " delivered";
  }
}

void run_soak(const ExperimentConfig& cfg, Artifacts& a) {
  const fabric::Topology topo = config::parse_topology(cfg.topology);
  harness::TrafficSpec spec;
  spec.pattern = harness::Pattern::UniformRandom;
  spec.size = cfg.workload.size_min;
  spec.size_max = cfg.workload.size_max;
  spec.rate = cfg.workload.rate;
  spec.duration = cfg.workload.cycles;
  spec.ports = cfg.workload.ports;
  spec.seed = cfg.seed;
  auto schedule = harness::traffic_generate(spec, topo, cfg.sim.router.intra_ports);
  run_traffic(cfg, a, topo, std::move(schedule), cfg.workload.cycles + 1'000'000);
}

void run_deadlock_demo(const ExperimentConfig& cfg, Artifacts& a) {
  const fabric::Topology topo = config::parse_topology(cfg.topology);
  const int k = topo.extents[0];
  if (k < 3 || !topo.wrap[0]) throw ConfigError("deadlock-demo needs a wrapped X ring of at least 3 nodes");
  // Every node floods the node half-way round the X ring; ties route plus, so
  // all traffic circulates the same way.
  std::vector<harness::Injection> schedule;
  for (const Coord& c : topo.nodes) {
    harness::TrafficSpec spec;
    spec.size = cfg.workload.size_max;
    spec.count = cfg.workload.packets_per_sender;
    spec.ports = cfg.workload.senders;
    spec.sources = {c};
    spec.dest = {(c.x + k / 2) % k, c.y, c.z};
    spec.seed = cfg.seed;
    auto part = harness::traffic_generate(spec, topo, cfg.sim.router.intra_ports);
    schedule.insert(schedule.end(), part.begin(), part.end());
  }
  run_traffic(cfg, a, topo, std::move(schedule), 10'000'000);
}

}  // namespace

ExperimentConfig resolve(ExperimentConfig cfg) {
  const std::string& e = cfg.experiment;
  // Bandwidth sweeps measure one router port or one cable in isolation.
  const char* fixed = e == "bandwidth-router" ? "mesh:1x1x1" : e == "bandwidth-link" ? "mesh:2x1x1" : nullptr;
  if (fixed != nullptr && !cfg.topology.empty() && cfg.topology != fixed) {
    throw ConfigError(e + " runs on " + fixed + ", not '" + cfg.topology + "'");
  }
  if (cfg.topology.empty()) {
    cfg.topology = fixed != nullptr          ? fixed
                   : e == "soak"             ? "mesh:4x4"
                   : e == "deadlock-demo"    ? "torus:4"
                                             : "mesh2x2";
  }
  if (cfg.workload.sizes.empty()) {
    if (e == "pingpong") {
      cfg.workload.sizes = {0, 16, 32, 64, 128, 256, 512};
    } else {
      for (std::size_t s = 16; s <= 512; s += 16) cfg.workload.sizes.push_back(s);
    }
  }
  if (cfg.workload.senders == 0) {
    if (e == "bandwidth-link") {
      cfg.workload.senders = 2;
    } else if (e == "deadlock-demo") {
      cfg.workload.senders = cfg.sim.router.intra_ports;
    } else {
      cfg.workload.senders = 1;
    }
  }
  config::validate(cfg);
  return cfg;
}

Artifacts run_experiment(const ExperimentConfig& cfg) {
  Artifacts a;
  a.summary["experiment"] = cfg.experiment;
  a.summary["seed"] = cfg.seed;
  a.summary["config"] = config::to_json(cfg);
  a.summary["calibration"] = calibration(cfg);
  try {
    if (cfg.experiment == "pingpong") {
      run_pingpong(cfg, a);
    } else if (cfg.experiment == "bandwidth-router") {
      run_bandwidth(cfg, a, harness::SweepKind::Router);
    } else if (cfg.experiment == "bandwidth-link") {
      run_bandwidth(cfg, a, harness::SweepKind::Link);
    } else if (cfg.experiment == "soak") {
      run_soak(cfg, a);
    } else if (cfg.experiment == "deadlock-demo") {
      run_deadlock_demo(cfg, a);
    } else {
      throw ConfigError("unknown experiment '" + cfg.experiment + "'");
    }
  } catch (const ConfigError& e) {
    a.exit_code = kExitConfig;
    a.message = std::string("config error: ") + e.what();
  } catch (const InvariantViolation& e) {
    a.exit_code = kExitInvariant;
    a.message = std::string("invariant violation: ") + e.what();
  }
  if (!a.summary.contains("stats")) a.summary["stats"] = Json::object();
  if (a.csv.empty()) a.csv = csv_header(cfg.experiment);
  a.summary["exit_code"] = a.exit_code;
  a.summary["message"] = a.message;
  if (!cfg.output.trace_link.empty()) a.trace = "cycle,endpoint,event,words\n" + a.trace;
  return a;
}

void write_artifacts(const Artifacts& a, const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output.dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  auto put = [&](const char* name, const std::string& body) {
    const fs::path path = dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << body;
    f.close();
    if (!f) throw IoError("write to '" + path.string() + "' failed");
  };
  put("results.csv", a.csv);
  put("summary.json", a.summary.dump(2) + "\n");
  if (!cfg.output.trace_link.empty()) put("trace.csv", a.trace);
  if (cfg.output.dump_packets) put("packets.txt", a.packets);
}

}  // namespace xnet::experiments
