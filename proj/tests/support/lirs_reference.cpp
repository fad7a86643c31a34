#include "lirs_reference.hpp"

#include <cmath>
#include <random>

#include "hvsto/lirs_cache.hpp"

namespace hvsto::testing {

std::vector<std::uint64_t> loop_trace(std::size_t length, std::uint64_t loop_blocks) {
  std::vector<std::uint64_t> out;
  out.reserve(length);
  for (std::size_t i = 0; i < length; ++i) out.push_back(i % loop_blocks);
  return out;
}

std::vector<std::uint64_t> scan_trace(std::size_t length, std::uint64_t hot_blocks,
                                      std::uint64_t seed) {
  // Hot set referenced at random, interrupted by long one-touch scans of
  // fresh blocks.
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> out;
  out.reserve(length);
  std::uint64_t next_cold = 1'000'000;
  while (out.size() < length) {
    for (int i = 0; i < 200 && out.size() < length; ++i) out.push_back(rng() % hot_blocks);
    const auto scan = 100 + rng() % 300;
    for (std::uint64_t i = 0; i < scan && out.size() < length; ++i) out.push_back(next_cold++);
  }
  return out;
}

std::vector<std::uint64_t> mixed_trace(std::size_t length, std::uint64_t seed) {
  // Zipf-like popularity plus occasional short loops and sequential runs.
  std::mt19937_64 rng(seed);
  std::vector<double> weights;
  for (int i = 1; i <= 600; ++i) weights.push_back(1.0 / std::pow(i, 0.9));
  std::discrete_distribution<std::uint64_t> zipf(weights.begin(), weights.end());
  std::vector<std::uint64_t> out;
  out.reserve(length);
  while (out.size() < length) {
    const auto kind = rng() % 10;
    if (kind < 6) {
      out.push_back(zipf(rng));
    } else if (kind < 8) {
      const auto start = 5000 + rng() % 2000;
      const auto n = 20 + rng() % 60;
      for (std::uint64_t i = 0; i < n && out.size() < length; ++i) out.push_back(start + i);
    } else {
      const auto base = 10'000 + (rng() % 4) * 200;
      for (int rep = 0; rep < 3; ++rep) {
        for (std::uint64_t i = 0; i < 40 && out.size() < length; ++i) out.push_back(base + i);
      }
    }
  }
  return out;
}

std::optional<std::size_t> first_lirs_divergence(const std::vector<std::uint64_t>& trace,
                                                 std::size_t capacity, double hir_fraction) {
  auto hir = static_cast<std::size_t>(std::floor(static_cast<double>(capacity) * hir_fraction));
  hir = std::min(std::max<std::size_t>(hir, 1), capacity - 1);
  ReferenceLirs ref(capacity - hir, hir);
  LirsCache<std::uint64_t, int> lib(capacity, hir_fraction);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto expected = ref.reference(trace[i]);
    const auto got = lib.access(trace[i], 0);
    if (expected.hit != got.hit || expected.evicted != got.evicted) return i;
    if (ref.is_lir(trace[i]) != lib.is_lir(trace[i])) return i;
    if (!lib.stack_invariant_holds()) return i;
  }
  return std::nullopt;
}

}  // namespace hvsto::testing
