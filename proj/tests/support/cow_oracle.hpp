#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hvsto/types.hpp"

namespace hvsto::testing {

/// Deterministic block content for a token; token 0 is the zero block.
Bytes token_block(std::size_t block_size, std::uint64_t token);

struct CowFuzzResult {
  std::uint64_t operations = 0;
  std::uint64_t reads_checked = 0;
  std::uint64_t snapshots = 0;
  std::uint64_t gcs = 0;
  std::uint64_t max_created_per_write = 0;
  std::uint64_t max_copied_first_write = 0;
  std::uint64_t bad_snapshot_cost = 0;  // snapshots that did not create exactly one node
  std::uint64_t bad_fetch_counts = 0;   // mapped lookups with fetches != 3
  std::uint64_t gc_leaks = 0;           // unreachable data blocks still allocated after GC
  std::uint64_t gc_unsound = 0;         // reachable data blocks freed by GC
  std::uint64_t duplicate_write_addresses = 0;
  std::vector<std::string> mismatches;
};

/// One seeded sequence of write/snapshot/read/commit/gc on a single image of
/// at most 256 blocks, checked against a reference that copies the whole
/// block array at every snapshot.
CowFuzzResult run_cow_fuzz(std::uint64_t seed);

}  // namespace hvsto::testing
