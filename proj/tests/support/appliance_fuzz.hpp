#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hvsto/hybrid_cache.hpp"

namespace hvsto::testing {

struct ApplianceFuzzOptions {
  std::uint64_t seed = 1;
  std::size_t nodes = 3;
  std::size_t operations = 300;
  unsigned vms = 3;
  std::size_t block_size = 512;
  CacheConfig cache = default_cache();
  bool use_golden = true;        // clone VM images from one golden image
  bool check_budget_every_op = true;

  static CacheConfig default_cache();
};

struct ApplianceFuzzResult {
  std::uint64_t operations = 0;
  std::uint64_t reads = 0;
  std::uint64_t read_mismatches = 0;
  std::uint64_t budget_violations = 0;
  std::uint64_t protected_evictions = 0;
  std::uint64_t isolation_violations = 0;
  std::uint64_t duplicate_write_addresses = 0;
  std::uint64_t writes_logged = 0;
  std::uint64_t digest = 0;  // hash of every byte the VMs read, in order
  std::vector<std::string> notes;
};

/// Several VMs, each on its own image, issue random byte-range reads and
/// writes, snapshots, flushes and save/re-attach cycles through one
/// appliance. Every read is compared with a flat per-image byte array.
ApplianceFuzzResult run_appliance_fuzz(const ApplianceFuzzOptions& opt);

}  // namespace hvsto::testing
