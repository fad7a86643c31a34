// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "appliance_fuzz.hpp"
#include "cow_oracle.hpp"
#include "hvsto/bench.hpp"
#include "hvsto/leakage.hpp"
#include "hvsto/mapping.hpp"
#include "lirs_reference.hpp"

using namespace hvsto;

namespace {

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
  std::cout << fmt::format("{} [{:>2}] {}: {}\n", ok ? "PASS" : "FAIL", id, title, detail);
  if (!ok) ++failures;
}

// Criterion 11 aggregates over every fuzz run below.
std::uint64_t duplicate_writes = 0;
std::uint64_t writes_checked = 0;

void leakage_vs_monte_carlo() {
  const auto start = std::chrono::steady_clock::now();
  const auto trace = synthetic_trace(1000);
  const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  bool ok = true;
  double worst = 0;
  for (std::uint64_t s : {4096u, 8192u}) {
    for (std::uint64_t n : {1u, 5u, 10u, 20u}) {
      const LeakageScenario sc{20, n, s, std::nullopt};
      const auto exact = expected_leakage(trace, sc).expected_bytes;
      const auto mc = monte_carlo_leakage(trace, sc, 10'000, 7, threads);
      const double diff = std::abs(exact - mc.mean_bytes);
      if (diff > 3 * mc.stderr_bytes) ok = false;
      if (mc.stderr_bytes > 0) worst = std::max(worst, diff / mc.stderr_bytes);
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(1, "closed-form leakage within 3 stderr of Monte Carlo", ok && secs < 10.0,
         fmt::format("worst |P - mc| = {:.2f} stderr, {:.2f} s", worst, secs));
}

void leakage_trends() {
  const auto trace = synthetic_trace(1000);
  constexpr std::uint64_t N = 100;
  bool increasing = true;
  bool size_order = true;
  std::vector<double> r4;
  std::vector<double> r8;
  for (std::uint64_t n = 1; n <= N; ++n) {
    r4.push_back(expected_leakage(trace, LeakageScenario{N, n, 4096, std::nullopt}).ratio);
    r8.push_back(expected_leakage(trace, LeakageScenario{N, n, 8192, std::nullopt}).ratio);
    if (n > 1 && (r4[n - 1] <= r4[n - 2] || r8[n - 1] <= r8[n - 2])) increasing = false;
    if (n < N && !(r8[n - 1] > r4[n - 1])) size_order = false;
  }
  const bool full = r4.back() == 1.0 && r8.back() == 1.0;
  report(2, "leakage ratio trends", increasing && size_order && full,
         fmt::format("increasing in n: {}, 8K > 4K below N: {}, ratio(n=N) = {} / {}", increasing,
                     size_order, r4.back(), r8.back()));
}

void spot_values() {
  const double a = leak_probability(100, 4096, 1, 100);
  const double b = leak_probability(2 * 4096, 4096, 25, 100);
  const double c = leak_probability(123457, 4096, 100, 100);
  const bool ok = std::abs(a - 0.01) <= 1e-12 && std::abs(b - 0.0625) <= 1e-12 &&
                  std::abs(c - 1.0) <= 1e-12;
  report(3, "leak probability spot values", ok, fmt::format("{} {} {}", a, b, c));
}

testing::CowFuzzResult cow_total;
std::uint64_t cow_seeds = 0;
std::uint64_t cow_mismatch = 0;

void cow_oracle() {
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    const auto r = testing::run_cow_fuzz(seed);
    ++cow_seeds;
    cow_total.operations += r.operations;
    cow_total.reads_checked += r.reads_checked;
    cow_total.snapshots += r.snapshots;
    cow_total.gcs += r.gcs;
    cow_total.bad_snapshot_cost += r.bad_snapshot_cost;
    cow_total.bad_fetch_counts += r.bad_fetch_counts;
    cow_total.gc_leaks += r.gc_leaks;
    cow_total.gc_unsound += r.gc_unsound;
    cow_total.max_created_per_write = std::max(cow_total.max_created_per_write, r.max_created_per_write);
    cow_total.max_copied_first_write =
        std::max(cow_total.max_copied_first_write, r.max_copied_first_write);
    cow_mismatch += r.mismatches.size();
    duplicate_writes += r.duplicate_write_addresses;
  }
  const bool ok = cow_mismatch == 0 && cow_total.gc_leaks == 0 && cow_total.gc_unsound == 0;
  report(4, "copy-on-write mapping equals full-copy reference", ok,
         fmt::format("{} seeds, {} ops, {} reads, {} snapshots, {} gcs, {} mismatches, "
                     "{} leaked, {} unsound",
                     cow_seeds, cow_total.operations, cow_total.reads_checked,
                     cow_total.snapshots, cow_total.gcs, cow_mismatch, cow_total.gc_leaks,
                     cow_total.gc_unsound));
}

void depth_invariance() {
  const auto pts = run_snapshot_latency(SnapshotLatencyOptions{});
  bool fetches = true;
  bool hops = true;
  for (const auto& p : pts) {
    if (p.depth == 0) continue;
    if (p.hvsto_fetches_per_block != 3.0) fetches = false;
    if (p.chain_hops_per_block != static_cast<double>(p.depth)) hops = false;
  }
  const double h = pts[10].hvsto_latency_us / pts[1].hvsto_latency_us;
  const double c = pts[10].chain_latency_us / pts[1].chain_latency_us;
  report(5, "lookup cost independent of snapshot depth",
         fetches && hops && h <= 1.25 && c >= 5.0,
         fmt::format("fetches=3: {}, chain hops=k: {}, depth10/depth1 {:.3f} vs chain {:.2f}",
                     fetches, hops, h, c));
}

void snapshot_cost() {
  Cluster cluster(NodeRegistry::uniform(3, 1 << 20), 4096);
  MappingStore mapping(cluster);
  IoContext ctx;
  const auto [img, v0] = mapping.create_image(4096, 1 << 16);
  std::uint64_t serial = 0;
  auto data = [&](std::uint64_t v) {
    return cluster.allocate(PlacementKey{img, 0, BlockKind::kData, v, serial++}, ctx);
  };
  VersionId head = v0;
  for (std::uint64_t v = 0; v < 1 << 16; v += 997) mapping.map_write(ctx, head, v, data(v));
  mapping.commit(ctx, img);
  bool ok = true;
  unsigned worst_created = 0;
  unsigned worst_copied = 0;
  for (int round = 0; round < 20; ++round) {
    const auto before = mapping.stats();
    head = mapping.snapshot(ctx, head);
    const auto after = mapping.stats();
    if (after.nodes_created - before.nodes_created != 1 ||
        after.nodes_copied != before.nodes_copied) {
      ok = false;
    }
    const auto w = mapping.map_write(ctx, head, (round * 7919) % (1 << 16), data(round));
    worst_created = std::max(worst_created, w.nodes_created);
    worst_copied = std::max(worst_copied, w.nodes_copied);
    if (round % 3 == 0) mapping.commit(ctx, img);
  }
  ok = ok && worst_copied <= 3 && cow_total.bad_snapshot_cost == 0 &&
       cow_total.max_copied_first_write <= 3;
  report(6, "snapshot creates one index node, first write copies at most three", ok,
         fmt::format("first write copied <= {} (fuzz <= {}), created <= {}, "
                     "fuzzed snapshots with other cost: {}",
                     worst_copied, cow_total.max_copied_first_write, worst_created,
                     cow_total.bad_snapshot_cost));
}

void cache_budgets() {
  std::uint64_t ops = 0;
  std::uint64_t violations = 0;
  std::uint64_t protected_evictions = 0;
  std::uint64_t mismatches = 0;
  for (std::uint64_t seed = 1; ops < 100'000; ++seed) {
    testing::ApplianceFuzzOptions opt;
    opt.seed = 10'000 + seed;
    opt.operations = 2000;
    opt.nodes = 1 + seed % 5;
    opt.vms = 2 + seed % 4;
    opt.use_golden = seed % 3 != 0;
    const auto r = testing::run_appliance_fuzz(opt);
    ops += r.operations;
    violations += r.budget_violations;
    protected_evictions += r.protected_evictions;
    mismatches += r.read_mismatches + r.isolation_violations;
    duplicate_writes += r.duplicate_write_addresses;
    writes_checked += r.writes_logged;
  }
  report(7, "cache partitions stay within budget, protected entries kept",
         violations == 0 && protected_evictions == 0 && mismatches == 0,
         fmt::format("{} ops, {} budget violations, {} protected evictions, {} read mismatches",
                     ops, violations, protected_evictions, mismatches));
}

void lirs_conformance() {
  const std::vector<std::pair<const char*, std::vector<std::uint64_t>>> traces{
      {"loop", testing::loop_trace(10'000, 120)},
      {"scan", testing::scan_trace(10'000, 75, 21)},
      {"mixed", testing::mixed_trace(10'000, 33)},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, trace] : traces) {
    const auto d = testing::first_lirs_divergence(trace, 100, 0.01);
    if (d) ok = false;
    detail += fmt::format("{}={} ", name, d ? fmt::format("diverged@{}", *d) : "match");
  }
  report(8, "LIRS matches reference simulator", ok, detail + "(10^4 refs each, capacity 100)");
}

void bootstorm_ordering() {
  const auto pts = run_bootstorm(BootstormOptions{});
  std::map<BootMode, std::map<unsigned, double>> t;
  for (const auto& p : pts) t[p.mode][p.vms] = p.makespan_us;
  auto& cache = t[BootMode::kMultiCache];
  auto& nocache = t[BootMode::kMultiNoCache];
  auto& single = t[BootMode::kSingleNoCache];
  bool order = true;
  for (unsigned v = 4; v <= 11; ++v) {
    if (!(cache[v] < nocache[v] && nocache[v] < single[v])) order = false;
  }
  // Growth relative to one VM: above proportional is super-linear.
  const double single_growth = single[11] / single[1];
  const double multi_growth = nocache[11] / nocache[1];
  const bool shapes = single_growth > 11.0 && multi_growth < 11.0;
  report(9, "boot-storm ordering and growth", order && shapes,
         fmt::format("ordering at 4..11 VMs: {}, T(11)/T(1) single {:.2f} vs multi {:.2f} "
                     "(proportional = 11)",
                     order, single_growth, multi_growth));
}

void scalability() {
  const auto pts = run_scalability(ScaleOptions{});
  std::map<unsigned, std::map<std::size_t, ScalePoint>> by;
  for (const auto& p : pts) by[p.servers][p.nodes] = p;
  bool monotone = true;
  std::string curve;
  for (auto& [servers, row] : by) {
    double prev = 0;
    for (auto& [nodes, p] : row) {
      if (p.per_server_tps < prev) monotone = false;
      prev = p.per_server_tps;
    }
    curve += fmt::format("{}-way {:.0f}->{:.0f} ", servers, row.begin()->second.per_server_tps,
                         row.rbegin()->second.per_server_tps);
  }
  const bool agg = by[3][5].aggregate_tps > by[1][5].aggregate_tps;
  report(10, "throughput grows with storage nodes", monotone && agg,
         curve + fmt::format("txn/s; aggregate at 5 nodes 3-way {:.0f} vs 1-way {:.0f}",
                             by[3][5].aggregate_tps, by[1][5].aggregate_tps));
}

void rewrite_avoidance() {
  report(11, "no block address written twice", duplicate_writes == 0 && writes_checked > 0,
         fmt::format("{} duplicate addresses over {} appliance writes and {} mapping fuzz runs",
                     duplicate_writes, writes_checked, cow_seeds));
}

std::string csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  write_csv(out, rows);
  return out.str();
}

void determinism() {
  const std::vector<std::pair<const char*, std::function<std::string()>>> runs{
      {"snapshot-latency",
       [] {
         SnapshotLatencyOptions o;
         o.max_depth = 4;
         o.seed = 3;
         return csv(snapshot_latency_rows(run_snapshot_latency(o), o.seed));
       }},
      {"bootstorm",
       [] {
         BootstormOptions o;
         o.vm_counts = {1, 4};
         o.seed = 3;
         return csv(bootstorm_rows(run_bootstorm(o), o.seed));
       }},
      {"scale",
       [] {
         ScaleOptions o;
         o.node_counts = {1, 3};
         o.server_counts = {1, 2};
         o.transactions_per_vm = 100;
         o.seed = 3;
         return csv(scalability_rows(run_scalability(o), o.seed));
       }},
      {"leakage",
       [] {
         LeakageSweepOptions o;
         o.monte_carlo_trials = 500;
         o.threads = 3;
         return csv(run_leakage_sweep(synthetic_trace(1000), o));
       }},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, run] : runs) {
    const auto a = run();
    const auto b = run();
    const bool same = a == b && a.size() > 100;
    ok = ok && same;
    detail += fmt::format("{} {}B {} ", name, a.size(), same ? "identical" : "DIFFERENT");
  }
  report(12, "bench output byte-identical across runs", ok, detail);
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> checks{
      leakage_vs_monte_carlo, leakage_trends, spot_values, cow_oracle,       depth_invariance,
      snapshot_cost,          cache_budgets,  lirs_conformance, bootstorm_ordering, scalability,
      rewrite_avoidance,      determinism,
  };
  for (const auto& check : checks) {
    try {
      check();
    } catch (const std::exception& e) {
      std::cout << "FAIL criterion aborted: " << e.what() << "\n";
      ++failures;
    }
  }
  std::cout << (failures == 0 ? "ALL PASS" : fmt::format("{} FAILED", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
