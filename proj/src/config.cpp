#include "xnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <set>

namespace xnet::config {

using Json = nlohmann::ordered_json;

namespace {

long parse_long(std::string_view s, const std::string& what) {
  long v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc{} || r.ptr != end) throw ConfigError("bad number '" + std::string(s) + "' in " + what);
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Strict section reader: each key must be consumed exactly once by name.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(name(key) + ": wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string vc_name(router::VcPolicy p) { return p == router::VcPolicy::Dateline ? "dateline" : "offset-sign"; }
std::string arb_name(router::ArbPolicy p) { return p == router::ArbPolicy::Fixed ? "fixed" : "round-robin"; }

}  // namespace

fabric::Topology parse_topology(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    if (spec == "mesh2x2" || spec == "qfdb4") return fabric::build_topology(spec);
    throw ConfigError("unknown topology '" + spec + "' (mesh2x2, qfdb4, mesh:NxMxK, torus:NxMxK)");
  }
  const std::string kind = spec.substr(0, colon);
  if (kind != "mesh" && kind != "torus") throw ConfigError("unknown topology kind '" + kind + "'");
  const auto parts = split(std::string_view(spec).substr(colon + 1), 'x');
  if (parts.empty() || parts.size() > 3) throw ConfigError("topology extents must be N, NxM or NxMxK");
  std::array<int, 3> ext{1, 1, 1};
  for (std::size_t i = 0; i < parts.size(); ++i) ext[i] = static_cast<int>(parse_long(parts[i], "topology"));
  return fabric::build_topology(kind, ext);
}

std::array<int, 3> parse_dim_order(const std::string& s) {
  std::array<int, 3> order{};
  std::string sorted = s;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != "xyz") throw ConfigError("dim_order must be a permutation of xyz, got '" + s + "'");
  for (int i = 0; i < 3; ++i) order[i] = s[i] - 'x';
  return order;
}

std::string dim_order_name(const std::array<int, 3>& order) {
  std::string s;
  for (int d : order) s += static_cast<char>('x' + d);
  return s;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  const auto dots = s.find("..");
  if (dots != std::string::npos) {
    const auto colon = s.find(':', dots);
    const long a = parse_long(std::string_view(s).substr(0, dots), "sizes");
    const std::string_view b_str = std::string_view(s).substr(dots + 2, colon == std::string::npos ? std::string::npos : colon - dots - 2);
    const long b = parse_long(b_str, "sizes");
    const long step = colon == std::string::npos ? 16 : parse_long(std::string_view(s).substr(colon + 1), "sizes");
    if (a < 0 || b < a || step < 1) throw ConfigError("sizes range must be a..b:step with 0 <= a <= b, step >= 1");
    for (long v = a; v <= b; v += step) out.push_back(static_cast<std::size_t>(v));
    return out;
  }
  for (auto part : split(s, ',')) {
    const long v = parse_long(part, "sizes");
    if (v < 0) throw ConfigError("negative size");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (auto part : split(s, ',')) out.push_back(static_cast<int>(parse_long(part, "list")));
  return out;
}

void apply_json(ExperimentConfig& cfg, const Json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  // A run summary carries its resolved config under "config".
  if (doc.contains("config") && doc.at("config").is_object()) {
    apply_json(cfg, doc.at("config"));
    return;
  }
  Section top(doc, "");
  top.get("experiment", cfg.experiment);
  top.get("topology", cfg.topology);
  top.get("seed", cfg.seed);
  top.get("jobs", cfg.jobs);

  if (const Json* j = top.child("router")) {
    Section s(*j, "router");
    auto& r = cfg.sim.router;
    s.get("routing_latency", r.routing_latency);
    s.get("turnaround", r.turnaround);
    s.get("intra_ports", r.intra_ports);
    s.get("priority", r.priority);
    s.get("disabled_ports", r.disabled_ports);
    std::string text = dim_order_name(r.dim_order);
    s.get("dim_order", text);
    r.dim_order = parse_dim_order(text);
    text = vc_name(r.vc_policy);
    s.get("vc_policy", text);
    if (text == "dateline") {
      r.vc_policy = router::VcPolicy::Dateline;
    } else if (text == "offset-sign") {
      r.vc_policy = router::VcPolicy::OffsetSign;
    } else {
      throw ConfigError("router.vc_policy: expected offset-sign or dateline, got '" + text + "'");
    }
    text = arb_name(r.arb_policy);
    s.get("arb_policy", text);
    if (text == "fixed") {
      r.arb_policy = router::ArbPolicy::Fixed;
    } else if (text == "round-robin") {
      r.arb_policy = router::ArbPolicy::RoundRobin;
    } else {
      throw ConfigError("router.arb_policy: expected round-robin or fixed, got '" + text + "'");
    }
    s.finish();
  }
  if (const Json* j = top.child("link")) {
    Section s(*j, "link");
    auto& l = cfg.sim.link;
    double gbps = l.serial.line_rate / 1e9;
    s.get("line_rate_gbps", gbps);
    l.serial.line_rate = gbps * 1e9;
    s.get("charge_coding", l.serial.charge_coding);
    s.get("tred", l.tred);
    s.get("credit_batch", l.credit_batch);
    s.get("credit_timer", l.credit_timer);
    s.get("wire_latency", l.wire_latency);
    s.finish();
  }
  if (const Json* j = top.child("engine")) {
    Section s(*j, "engine");
    s.get("check_interval", cfg.sim.check_interval);
    s.get("watchdog_window", cfg.sim.watchdog_window);
    s.finish();
  }
  if (const Json* j = top.child("host")) {
    Section s(*j, "host");
    s.get("write_cycles_per_word", cfg.host.write_cycles_per_word);
    s.get("read_cycles_per_word", cfg.host.read_cycles_per_word);
    s.get("words_per_packet", cfg.host.words_per_packet);
    s.finish();
  }
  if (const Json* j = top.child("workload")) {
    Section s(*j, "workload");
    auto& w = cfg.workload;
    s.get("sizes", w.sizes);
    s.get("hops", w.hops);
    s.get("senders", w.senders);
    s.get("iterations", w.iterations);
    s.get("packets_per_sender", w.packets_per_sender);
    s.get("rate", w.rate);
    s.get("cycles", w.cycles);
    s.get("size_min", w.size_min);
    s.get("size_max", w.size_max);
    s.get("ports", w.ports);
    s.finish();
  }
  if (const Json* j = top.child("output")) {
    Section s(*j, "output");
    s.get("dir", cfg.output.dir);
    s.get("trace_link", cfg.output.trace_link);
    s.get("dump_packets", cfg.output.dump_packets);
    s.finish();
  }
  top.finish();
}

Json to_json(const ExperimentConfig& cfg) {
  const auto& r = cfg.sim.router;
  const auto& l = cfg.sim.link;
  const auto& w = cfg.workload;
  Json j;
  j["experiment"] = cfg.experiment;
  j["topology"] = cfg.topology;
  j["router"] = {{"routing_latency", r.routing_latency},
                 {"turnaround", r.turnaround},
                 {"intra_ports", r.intra_ports},
                 {"dim_order", dim_order_name(r.dim_order)},
                 {"vc_policy", vc_name(r.vc_policy)},
                 {"arb_policy", arb_name(r.arb_policy)},
                 {"priority", r.priority},
                 {"disabled_ports", r.disabled_ports}};
  j["link"] = {{"line_rate_gbps", l.serial.line_rate / 1e9},
               {"charge_coding", l.serial.charge_coding},
               {"tred", l.tred},
               {"credit_batch", l.credit_batch},
               {"credit_timer", l.credit_timer},
               {"wire_latency", l.wire_latency}};
  j["engine"] = {{"check_interval", cfg.sim.check_interval},
                 {"watchdog_window", cfg.sim.watchdog_window}};
  j["host"] = {{"write_cycles_per_word", cfg.host.write_cycles_per_word},
               {"read_cycles_per_word", cfg.host.read_cycles_per_word},
               {"words_per_packet", cfg.host.words_per_packet}};
  j["workload"] = {{"sizes", w.sizes},
                   {"hops", w.hops},
                   {"senders", w.senders},
                   {"iterations", w.iterations},
                   {"packets_per_sender", w.packets_per_sender},
                   {"rate", w.rate},
                   {"cycles", w.cycles},
                   {"size_min", w.size_min},
                   {"size_max", w.size_max},
                   {"ports", w.ports}};
  j["seed"] = cfg.seed;
  j["output"] = {{"dir", cfg.output.dir},
                 {"trace_link", cfg.output.trace_link},
                 {"dump_packets", cfg.output.dump_packets}};
  j["jobs"] = cfg.jobs;
  return j;
}

void validate(const ExperimentConfig& cfg) {
  const auto& names = experiments();
  if (std::find(names.begin(), names.end(), cfg.experiment) == names.end()) {
    throw ConfigError("unknown experiment '" + cfg.experiment + "'");
  }
  parse_topology(cfg.topology);
  cfg.sim.router.validate();
  const auto& w = cfg.workload;
  for (std::size_t s : w.sizes) {
    if (s > wire::kMaxPayload) throw ConfigError("workload.sizes: " + std::to_string(s) + " exceeds 512");
  }
  if (cfg.experiment.rfind("bandwidth", 0) == 0) {
    for (std::size_t s : w.sizes) {
      if (s < 16) throw ConfigError("workload.sizes: bandwidth sweeps take sizes in 16..512");
    }
  }
  for (int h : w.hops) {
    if (h < 1) throw ConfigError("workload.hops: hop counts start at 1");
  }
  if (w.senders < 0 || w.senders > 15) throw ConfigError("workload.senders must lie in 0..15");
  if (w.iterations < 1) throw ConfigError("workload.iterations must be at least 1");
  if (w.rate < 0 || w.rate > 1) throw ConfigError("workload.rate must lie in 0..1");
  if (w.size_min > w.size_max || w.size_max > wire::kMaxPayload) {
    throw ConfigError("workload.size_min..size_max must lie in 0..512");
  }
  if (w.ports < 1 || w.ports > cfg.sim.router.intra_ports) {
    throw ConfigError("workload.ports must lie in 1..router.intra_ports");
  }
  const auto& l = cfg.sim.link;
  if (l.serial.line_rate <= 0) throw ConfigError("link.line_rate_gbps must be positive");
  if (l.tred < 0 || l.credit_batch < 1 || l.credit_timer < 1 || l.wire_latency < 0) {
    throw ConfigError("link parameters out of range");
  }
  if (cfg.host.write_cycles_per_word < 0 || cfg.host.read_cycles_per_word < 0 ||
      cfg.host.words_per_packet < 0) {
    throw ConfigError("host costs must be non-negative");
  }
  if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");
  if (cfg.sim.watchdog_window < 1) throw ConfigError("engine.watchdog_window must be at least 1");
}

}  // namespace xnet::config
