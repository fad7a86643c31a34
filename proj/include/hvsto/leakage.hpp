#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hvsto {

struct TraceRecord {
  std::string name;
  std::uint64_t size = 0;
};

/// n of N storage nodes compromised, files cut into s-byte blocks.
struct LeakageScenario {
  std::uint64_t N = 100;
  std::uint64_t n = 1;
  std::uint64_t s = 4096;
  std::optional<std::uint64_t> M;  // VM count; recorded, not used by the model

  /// Throws kInvalidArgument unless 1 <= n <= N and s >= 1.
  void validate() const;
};

struct LeakageReport {
  LeakageScenario scenario;
  std::vector<double> p;  // per record, filled on request
  double expected_bytes = 0.0;
  std::uint64_t total_bytes = 0;
  double ratio = 0.0;
  std::string to_json() const;
};

struct MonteCarloEstimate {
  double mean_bytes = 0.0;
  double stderr_bytes = 0.0;
  double ratio = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t total_bytes = 0;
};

/// Blocks a file of l bytes occupies: ceil(l / s), at least one.
std::uint64_t required_blocks(std::uint64_t l, std::uint64_t s);

/// Probability that every block of the file sits on a compromised node.
double leak_probability(std::uint64_t l, std::uint64_t s, std::uint64_t n, std::uint64_t N);

LeakageReport expected_leakage(const std::vector<TraceRecord>& trace,
                               const LeakageScenario& scenario, bool per_record = false);

/// Each trial draws n distinct compromised nodes and an independent uniform
/// node for every block. Trials use substreams derived from (seed, trial), so
/// the result does not depend on `threads`.
MonteCarloEstimate monte_carlo_leakage(const std::vector<TraceRecord>& trace,
                                       const LeakageScenario& scenario, std::uint64_t trials,
                                       std::uint64_t seed, unsigned threads = 1);

/// `name,size_bytes` per line. Throws kParse with the line number on bad
/// input, kIo when unreadable, kInvalidArgument when empty.
std::vector<TraceRecord> load_trace(const std::filesystem::path& path);
std::vector<TraceRecord> parse_trace(const std::string& text);

struct SyntheticTraceOptions {
  std::uint64_t seed = 1;
  double log_mean = 9.0;    // median about 8 KB
  double log_sigma = 1.8;
  std::uint64_t max_size = 1ULL << 30;
};

/// Log-normal file sizes, `count` files.
std::vector<TraceRecord> synthetic_trace(std::size_t count, const SyntheticTraceOptions& opt = {});
/// Log-normal file sizes until `total_bytes`; the last file is cut so the
/// total matches exactly.
std::vector<TraceRecord> synthetic_trace_total(std::uint64_t total_bytes,
                                               const SyntheticTraceOptions& opt = {});

std::uint64_t total_bytes(const std::vector<TraceRecord>& trace);

}  // namespace hvsto
