// Command-line front end: resolves a configuration (defaults, then the JSON
// file, then flags), runs one experiment and writes its artifacts.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "xnet/experiments.hpp"

namespace {

using namespace xnet;
using experiments::ExitCode;

int fail(int code, const std::string& msg) {
  std::cerr << "xnet-sim: " << msg << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cycle-driven simulator of an FPGA-based interconnect: link, router and fabric."};
  app.set_version_flag("--version", "xnet-sim 1.0");

  std::optional<std::string> experiment, config_file, topology, sizes, hops, trace_link, out_dir,
      vc_policy, dim_order;
  std::optional<std::size_t> size;
  std::optional<int> senders, jobs, iterations;
  std::optional<std::uint64_t> seed, cycles;
  std::optional<double> rate;
  bool dump_packets = false;
  bool show_config = false;

  app.add_option("--experiment,-e", experiment,
                 "pingpong | bandwidth-router | bandwidth-link | soak | deadlock-demo");
  app.add_option("--config,-c", config_file, "JSON config (a summary.json is accepted too)");
  app.add_option("--topology", topology, "mesh2x2 | qfdb4 | mesh:NxMxK | torus:NxMxK");
  app.add_option("--size", size, "single payload size in bytes");
  app.add_option("--sizes", sizes, "payload sizes: a..b:step or a comma list");
  app.add_option("--hops", hops, "ping-pong hop counts, comma list");
  app.add_option("--senders", senders, "concurrent intra-tile senders");
  app.add_option("--iterations", iterations, "ping-pong iterations per point");
  app.add_option("--cycles", cycles, "soak injection window in cycles");
  app.add_option("--rate", rate, "soak injection probability per node and cycle");
  app.add_option("--vc-policy", vc_policy, "offset-sign | dateline");
  app.add_option("--dim-order", dim_order, "dimension order, e.g. xyz or zyx");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--trace-link", trace_link, "write trace.csv for links whose name contains this (or 'all')");
  app.add_flag("--dump-packets", dump_packets, "write every delivered packet to packets.txt");
  app.add_option("--out,-o", out_dir, "output directory");
  app.add_option("--jobs,-j", jobs, "parallel sweep points");
  app.add_flag("--show-config", show_config, "print the resolved config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ExitCode::kExitConfig;
  }

  config::ExperimentConfig cfg;
  try {
    if (config_file) {
      std::ifstream in(*config_file);
      if (!in) return fail(ExitCode::kExitIo, "cannot read config '" + *config_file + "'");
      nlohmann::ordered_json j;
      try {
        j = nlohmann::ordered_json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        return fail(ExitCode::kExitConfig, *config_file + ": " + e.what());
      }
      config::apply_json(cfg, j);
    }
    if (experiment) cfg.experiment = *experiment;
    if (topology) cfg.topology = *topology;
    if (sizes) cfg.workload.sizes = config::parse_sizes(*sizes);
    if (size) cfg.workload.sizes = {*size};
    if (hops) cfg.workload.hops = config::parse_int_list(*hops);
    if (senders) cfg.workload.senders = *senders;
    if (iterations) cfg.workload.iterations = *iterations;
    if (cycles) cfg.workload.cycles = *cycles;
    if (rate) cfg.workload.rate = *rate;
    if (vc_policy) config::apply_json(cfg, {{"router", {{"vc_policy", *vc_policy}}}});
    if (dim_order) config::apply_json(cfg, {{"router", {{"dim_order", *dim_order}}}});
    if (seed) cfg.seed = *seed;
    if (trace_link) cfg.output.trace_link = *trace_link;
    if (dump_packets) cfg.output.dump_packets = true;
    if (out_dir) cfg.output.dir = *out_dir;
    if (jobs) cfg.jobs = *jobs;
    cfg = experiments::resolve(std::move(cfg));
  } catch (const ConfigError& e) {
    return fail(ExitCode::kExitConfig, std::string("config error: ") + e.what());
  }

  if (show_config) {
    std::cout << config::to_json(cfg).dump(2) << '\n';
    return ExitCode::kExitOk;
  }

  const experiments::Artifacts a = experiments::run_experiment(cfg);
  try {
    experiments::write_artifacts(a, cfg);
  } catch (const experiments::IoError& e) {
    return fail(ExitCode::kExitIo, e.what());
  }
  std::cout << config::to_json(cfg).dump() << '\n';
  std::cout << a.csv;
  if (a.exit_code != ExitCode::kExitOk) return fail(a.exit_code, a.message);
  std::cout << a.message << '\n';
  return ExitCode::kExitOk;
}
