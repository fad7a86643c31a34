#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hvsto/hybrid_cache.hpp"
#include "hvsto/leakage.hpp"
#include "hvsto/node_store.hpp"

namespace hvsto {

struct ResultRow {
  std::string experiment;
  std::string param;  // sweep point, `key=value` pairs joined by ';'
  std::string metric;
  double value = 0.0;
  std::string unit;
  std::uint64_t seed = 0;
};

inline constexpr const char* kCsvHeader = "experiment,param,metric,value,unit,seed";
std::string to_csv_line(const ResultRow& row);
void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);

/// Backing-file style mapping used as the latency baseline: every version
/// keeps a flat table of the blocks it wrote, and a lookup walks from the
/// newest version toward the base. The newest table is resident; every older
/// table on the way costs one remote read.
class ChainBaseline {
 public:
  ChainBaseline(Cluster& cluster, std::uint64_t capacity_blocks, ImageId label);

  void write(IoContext& ctx, std::uint64_t vblock, Bytes block);
  /// Persists the top table and starts a new, empty top layer.
  void snapshot(IoContext& ctx);
  Bytes read(IoContext& ctx, std::uint64_t vblock, unsigned* hops = nullptr);

  std::size_t depth() const { return layers_.size() - 1; }
  std::uint64_t entries_per_table_block() const { return per_block_; }

 private:
  struct Layer {
    std::map<std::uint64_t, BlockAddress> table;
    std::vector<BlockAddress> table_blocks;  // one per chunk once persisted
  };

  Cluster& cluster_;
  std::uint64_t capacity_;
  ImageId label_;
  std::uint64_t per_block_;
  std::uint64_t serial_ = 0;
  std::vector<Layer> layers_;  // back() is the writeable top
};

struct SnapshotLatencyOptions {
  unsigned max_depth = 10;
  std::uint64_t read_bytes = 2ULL << 20;
  unsigned repetitions = 5;
  std::size_t nodes = 4;
  std::uint64_t capacity_blocks = 4096;
  std::uint64_t writes_per_snapshot = 8;
  std::uint64_t seed = 1;
};

struct SnapshotLatencyPoint {
  unsigned depth = 0;
  double hvsto_latency_us = 0;        // mean per read of `read_bytes`
  double chain_latency_us = 0;
  double hvsto_fetches_per_block = 0;  // index node visits per block read
  double chain_hops_per_block = 0;
};

std::vector<SnapshotLatencyPoint> run_snapshot_latency(const SnapshotLatencyOptions& opt);
std::vector<ResultRow> snapshot_latency_rows(const std::vector<SnapshotLatencyPoint>& points,
                                             std::uint64_t seed);

enum class BootMode { kMultiCache, kMultiNoCache, kSingleNoCache };
const char* to_string(BootMode mode);

struct BootstormOptions {
  std::vector<unsigned> vm_counts{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  std::vector<BootMode> modes{BootMode::kMultiCache, BootMode::kMultiNoCache,
                              BootMode::kSingleNoCache};
  std::size_t nodes = 5;  // multi-node modes
  std::uint64_t image_bytes = 64ULL << 20;
  std::size_t reads_per_vm = 2048;
  double shared_fraction = 0.8;
  std::uint64_t cache_bytes = 64ULL << 20;
  SimTime sequential_media_us = 1000;
  std::uint64_t seed = 1;
};

struct BootstormPoint {
  BootMode mode = BootMode::kMultiCache;
  unsigned vms = 0;
  double makespan_us = 0;
};

/// Per-VM read script: a prefix of runs shared by every VM followed by runs
/// private to the VM.
std::vector<std::uint64_t> boot_script(const BootstormOptions& opt, unsigned vm);

std::vector<BootstormPoint> run_bootstorm(const BootstormOptions& opt);
std::vector<ResultRow> bootstorm_rows(const std::vector<BootstormPoint>& points,
                                      std::uint64_t seed);

struct ScaleOptions {
  std::vector<std::size_t> node_counts{1, 2, 3, 4, 5};
  std::vector<unsigned> server_counts{1, 2, 3};
  unsigned vms_per_server = 4;
  std::size_t files_per_vm = 500;
  std::uint64_t min_file_bytes = 1024;
  std::uint64_t max_file_bytes = 16384;
  std::size_t transactions_per_vm = 300;
  double read_fraction = 0.5;
  std::uint64_t cache_bytes = 2ULL << 20;
  std::uint64_t write_buffer_bytes = 64ULL << 10;
  SimTime media_us = 5000;
  std::uint64_t seed = 1;
};

struct ScalePoint {
  std::size_t nodes = 0;
  unsigned servers = 0;
  double per_server_tps = 0;  // mean over servers
  double aggregate_tps = 0;
  std::uint64_t transactions = 0;
};

std::vector<ScalePoint> run_scalability(const ScaleOptions& opt);
std::vector<ResultRow> scalability_rows(const std::vector<ScalePoint>& points, std::uint64_t seed);

struct LeakageSweepOptions {
  std::uint64_t N = 100;
  std::uint64_t n_min = 1;
  std::uint64_t n_max = 25;
  std::vector<std::uint64_t> block_sizes{4096, 8192};
  std::uint64_t monte_carlo_trials = 0;  // 0 disables the oracle columns
  std::uint64_t seed = 7;
  unsigned threads = 1;
};

std::vector<ResultRow> run_leakage_sweep(const std::vector<TraceRecord>& trace,
                                         const LeakageSweepOptions& opt);

/// Parses `a..b` or a comma list into integers.
std::vector<std::uint64_t> parse_range(const std::string& text);

}  // namespace hvsto
