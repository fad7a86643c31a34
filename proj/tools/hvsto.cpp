// hvsto: benchmark harness, leakage analyzer and cluster config tool.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "hvsto/bench.hpp"
#include "hvsto/leakage.hpp"
#include "hvsto/placement.hpp"

namespace {

using namespace hvsto;

void emit(const std::vector<ResultRow>& rows, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    write_csv(std::cout, rows);
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot write {}", out_path));
  write_csv(out, rows);
}

template <typename T>
std::vector<T> narrow(const std::vector<std::uint64_t>& in) {
  return {in.begin(), in.end()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed virtual-disk store: benchmarks and leakage analysis"};
  app.require_subcommand(1);

  // bench ------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "Run a simulated experiment");
  bench->require_subcommand(1);

  std::string out_path;
  std::uint64_t seed = 1;

  SnapshotLatencyOptions snap;
  auto* snap_cmd = bench->add_subcommand("snapshot-latency", "Read latency vs snapshot depth");
  snap_cmd->add_option("--depths", snap.max_depth, "Deepest snapshot chain (sweeps 0..K)")
      ->check(CLI::Range(1u, 64u));
  snap_cmd->add_option("--read-bytes", snap.read_bytes, "Bytes read per measurement");
  snap_cmd->add_option("--reps", snap.repetitions, "Reads per depth")->check(CLI::Range(1u, 100u));
  snap_cmd->add_option("--nodes", snap.nodes, "Storage nodes")->check(CLI::Range(1, 64));
  snap_cmd->add_option("--seed", seed, "Seed");
  snap_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

  BootstormOptions boot;
  std::string vm_range = "1..11";
  std::string cache_mode = "all";
  auto* boot_cmd = bench->add_subcommand("bootstorm", "Concurrent boots from one golden image");
  boot_cmd->add_option("--vms", vm_range, "VM counts, a..b or a,b,c");
  boot_cmd->add_option("--cache", cache_mode, "on, off, nfs-like or all")
      ->check(CLI::IsMember({"on", "off", "nfs-like", "all"}));
  boot_cmd->add_option("--nodes", boot.nodes, "Storage nodes for multi-node modes")
      ->check(CLI::Range(1, 64));
  boot_cmd->add_option("--reads", boot.reads_per_vm, "Block reads per boot");
  boot_cmd->add_option("--seed", seed, "Seed");
  boot_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

  ScaleOptions scale;
  std::string node_range = "1..5";
  std::string server_range = "1..3";
  auto* scale_cmd = bench->add_subcommand("scale", "Postmark-like throughput vs cluster size");
  scale_cmd->add_option("--nodes", node_range, "Storage node counts");
  scale_cmd->add_option("--servers", server_range, "Virtualization server counts");
  scale_cmd->add_option("--vms-per-server", scale.vms_per_server, "VMs per server")
      ->check(CLI::Range(1u, 64u));
  scale_cmd->add_option("--transactions", scale.transactions_per_vm, "Transactions per VM");
  scale_cmd->add_option("--seed", seed, "Seed");
  scale_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

  // leakage ----------------------------------------------------------------
  auto* leak_cmd = app.add_subcommand("leakage", "Expected leakage under n-of-N compromise");
  std::string trace_path;
  std::size_t synthetic_files = 0;
  std::uint64_t synthetic_bytes = 0;
  LeakageSweepOptions sweep;
  std::string n_range = "1..25";
  std::string s_list = "4096,8192";
  std::string report_path;
  bool per_file = false;
  auto* src = leak_cmd->add_option_group("source");
  src->add_option("--trace", trace_path, "Trace CSV, name,size_bytes per line")
      ->check(CLI::ExistingFile);
  src->add_option("--synthetic", synthetic_files, "Generate a log-normal trace of this many files");
  src->add_option("--synthetic-bytes", synthetic_bytes, "Generate a trace totalling this many bytes");
  src->require_option(1);
  leak_cmd->add_option("--N", sweep.N, "Storage nodes")->check(CLI::PositiveNumber);
  leak_cmd->add_option("--n", n_range, "Compromised node counts, a..b or list");
  leak_cmd->add_option("--s", s_list, "Block sizes in bytes");
  leak_cmd->add_option("--monte-carlo", sweep.monte_carlo_trials, "Monte Carlo trials (0 = off)");
  leak_cmd->add_option("--seed", sweep.seed, "Seed for Monte Carlo and the synthetic trace");
  leak_cmd->add_option("--threads", sweep.threads, "Monte Carlo threads")
      ->check(CLI::Range(1u, 256u));
  leak_cmd->add_option("--report", report_path, "Write one JSON report per scenario to this file");
  leak_cmd->add_flag("--per-file", per_file, "Include per-file probabilities in the JSON report");
  leak_cmd->add_option("--out", out_path, "CSV output path (default stdout)");

  // cluster ----------------------------------------------------------------
  auto* cluster_cmd = app.add_subcommand("cluster", "Cluster configuration");
  cluster_cmd->require_subcommand(1);
  auto* init_cmd = cluster_cmd->add_subcommand("init", "Write or validate a cluster config");
  std::string config_path;
  std::size_t init_nodes = 0;
  std::uint64_t init_capacity = 1 << 20;
  std::size_t init_block = 4096;
  std::uint64_t init_salt = 0;
  bool force = false;
  init_cmd->add_option("--config", config_path, "Config JSON path")->required();
  init_cmd->add_option("--nodes", init_nodes, "Create a config with this many nodes");
  init_cmd->add_option("--capacity", init_capacity, "Blocks per node");
  init_cmd->add_option("--block-size", init_block, "Block size in bytes");
  init_cmd->add_option("--salt", init_salt, "Placement salt");
  init_cmd->add_flag("--force", force, "Overwrite an existing config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (snap_cmd->parsed()) {
      snap.seed = seed;
      emit(snapshot_latency_rows(run_snapshot_latency(snap), seed), out_path);
    } else if (boot_cmd->parsed()) {
      boot.seed = seed;
      boot.vm_counts = narrow<unsigned>(parse_range(vm_range));
      if (cache_mode == "on") {
        boot.modes = {BootMode::kMultiCache};
      } else if (cache_mode == "off") {
        boot.modes = {BootMode::kMultiNoCache};
      } else if (cache_mode == "nfs-like") {
        boot.modes = {BootMode::kSingleNoCache};
      }
      emit(bootstorm_rows(run_bootstorm(boot), seed), out_path);
    } else if (scale_cmd->parsed()) {
      scale.seed = seed;
      scale.node_counts = narrow<std::size_t>(parse_range(node_range));
      scale.server_counts = narrow<unsigned>(parse_range(server_range));
      emit(scalability_rows(run_scalability(scale), seed), out_path);
    } else if (leak_cmd->parsed()) {
      std::vector<TraceRecord> trace;
      SyntheticTraceOptions syn;
      syn.seed = sweep.seed;
      if (!trace_path.empty()) {
        trace = load_trace(trace_path);
      } else if (synthetic_files > 0) {
        trace = synthetic_trace(synthetic_files, syn);
      } else {
        trace = synthetic_trace_total(synthetic_bytes, syn);
      }
      const auto ns = parse_range(n_range);
      sweep.block_sizes = parse_range(s_list);
      sweep.n_min = ns.front();
      sweep.n_max = ns.back();
      if (ns.size() != sweep.n_max - sweep.n_min + 1) {
        throw Error(ErrorCode::kInvalidArgument, "--n must be a contiguous range");
      }
      emit(run_leakage_sweep(trace, sweep), out_path);
      if (!report_path.empty()) {
        std::ofstream rep(report_path, std::ios::binary);
        if (!rep) throw Error(ErrorCode::kIo, fmt::format("cannot write {}", report_path));
        for (const auto s : sweep.block_sizes) {
          for (const auto n : ns) {
            rep << expected_leakage(trace, LeakageScenario{sweep.N, n, s, std::nullopt}, per_file)
                       .to_json()
                << '\n';
          }
        }
      }
    } else if (init_cmd->parsed()) {
      if (init_nodes == 0) {
        const auto cfg = ClusterConfig::load(config_path);
        std::cout << fmt::format("{}: {} nodes, block size {}, salt {}\n", config_path,
                                 cfg.nodes.size(), cfg.block_size, cfg.placement_salt);
      } else {
        if (std::filesystem::exists(config_path) && !force) {
          throw Error(ErrorCode::kConflict,
                      fmt::format("{} exists; pass --force to overwrite", config_path));
        }
        ClusterConfig cfg;
        cfg.block_size = init_block;
        cfg.placement_salt = init_salt;
        for (std::size_t i = 0; i < init_nodes; ++i) {
          cfg.nodes.push_back(NodeInfo{static_cast<NodeId>(i), init_capacity, ""});
        }
        ClusterConfig::parse(cfg.to_json());
        std::ofstream out(config_path, std::ios::binary);
        if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot write {}", config_path));
        out << cfg.to_json() << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "hvsto: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
