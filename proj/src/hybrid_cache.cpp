#include "hvsto/hybrid_cache.hpp"

#include <cmath>

#include <fmt/format.h>

#include "json.hpp"

namespace hvsto {

const char* to_string(Partition p) {
  switch (p) {
    case Partition::kMetadata: return "metadata";
    case Partition::kImage: return "image";
    case Partition::kActive: return "active";
  }
  return "?";
}

const char* to_string(FlushCause cause) {
  switch (cause) {
    case FlushCause::kFull: return "full";
    case FlushCause::kSave: return "save";
    case FlushCause::kMigrate: return "migrate";
  }
  return "?";
}

void CacheConfig::validate() const {
  for (double s : {metadata_share, image_share, active_share}) {
    if (!(s >= 0.0) || s > 1.0) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("partition share {} outside [0, 1]", s));
    }
  }
  const double sum = metadata_share + image_share + active_share;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("partition shares sum to {}, expected 1", sum));
  }
  if (!(lirs_hir_fraction > 0.0 && lirs_hir_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "LIRS HIR fraction must lie in (0, 1)");
  }
}

std::uint64_t CacheConfig::partition_blocks(Partition p, std::size_t block_size) const {
  double share = 0.0;
  switch (p) {
    case Partition::kMetadata: share = metadata_share; break;
    case Partition::kImage: share = image_share; break;
    case Partition::kActive: share = active_share; break;
  }
  const auto bytes = static_cast<std::uint64_t>(std::floor(static_cast<double>(capacity_bytes) * share));
  return bytes / block_size;
}

namespace {

nlohmann::json partition_json(const PartitionStats& s) {
  return {{"hits", s.hits},
          {"misses", s.misses},
          {"evictions", s.evictions},
          {"bypasses", s.bypasses},
          {"invalidations", s.invalidations}};
}

}  // namespace

std::string CacheStats::to_json() const {
  nlohmann::json j;
  j["metadata"] = partition_json(metadata);
  j["image"] = partition_json(image);
  j["active"] = partition_json(active);
  j["prefetched"] = prefetched;
  j["flushes"] = {{"full", flush_full}, {"save", flush_save}, {"migrate", flush_migrate}};
  return j.dump();
}

// ---------------------------------------------------------------- metadata

MetadataCache::MetadataCache(std::uint64_t capacity_blocks, std::size_t block_size,
                             SimTime hit_cost_us)
    : capacity_(capacity_blocks), block_size_(block_size), hit_cost_(hit_cost_us) {}

void MetadataCache::set_protection(Protection predicate) {
  std::lock_guard lock(mu_);
  protection_ = std::move(predicate);
}

void MetadataCache::set_eviction_observer(EvictionObserver observer) {
  std::lock_guard lock(mu_);
  on_evict_ = std::move(observer);
}

std::optional<Bytes> MetadataCache::get(const BlockAddress& addr) {
  std::lock_guard lock(mu_);
  auto it = map_.find(addr);
  if (it == map_.end()) {
    ++stats_.misses;
    return std::nullopt;
  }
  ++stats_.hits;
  lru_.splice(lru_.begin(), lru_, it->second.pos);
  return it->second.block;
}

MetadataCache::PutResult MetadataCache::put(const BlockAddress& addr, Bytes block) {
  std::lock_guard lock(mu_);
  if (auto it = map_.find(addr); it != map_.end()) {
    it->second.block = std::move(block);
    lru_.splice(lru_.begin(), lru_, it->second.pos);
    return PutResult::kUpdated;
  }
  if (map_.size() >= capacity_) {
    // Refresh marks from the cold end; the first unprotected entry goes.
    std::optional<BlockAddress> victim;
    for (auto rit = lru_.rbegin(); rit != lru_.rend(); ++rit) {
      Entry& e = map_.at(*rit);
      e.protected_mark = protection_ && protection_(*rit);
      if (!e.protected_mark) {
        victim = *rit;
        break;
      }
    }
    if (!victim) {
      ++stats_.bypasses;
      return PutResult::kBypassed;
    }
    auto vit = map_.find(*victim);
    lru_.erase(vit->second.pos);
    map_.erase(vit);
    ++stats_.evictions;
    if (on_evict_) on_evict_(*victim);
  }
  lru_.push_front(addr);
  map_.emplace(addr, Entry{std::move(block), false, lru_.begin()});
  return PutResult::kAdmitted;
}

bool MetadataCache::erase(const BlockAddress& addr) {
  std::lock_guard lock(mu_);
  auto it = map_.find(addr);
  if (it == map_.end()) return false;
  lru_.erase(it->second.pos);
  map_.erase(it);
  ++stats_.invalidations;
  return true;
}

std::optional<Bytes> MetadataCache::lookup(const BlockAddress& addr, IoContext& ctx) {
  auto block = get(addr);
  if (block) ctx.clock += hit_cost_;
  return block;
}

void MetadataCache::admit(const BlockAddress& addr, const Bytes& block) { put(addr, block); }

void MetadataCache::invalidate(const BlockAddress& addr) { erase(addr); }

bool MetadataCache::contains(const BlockAddress& addr) const {
  std::lock_guard lock(mu_);
  return map_.contains(addr);
}

bool MetadataCache::is_protected(const BlockAddress& addr) const {
  Protection p;
  {
    std::lock_guard lock(mu_);
    p = protection_;
  }
  return p && p(addr);
}

std::vector<BlockAddress> MetadataCache::keys_lru_to_mru() const {
  std::lock_guard lock(mu_);
  return {lru_.rbegin(), lru_.rend()};
}

std::uint64_t MetadataCache::size() const {
  std::lock_guard lock(mu_);
  return map_.size();
}

PartitionStats MetadataCache::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

// ------------------------------------------------------------------- image

ImageCache::ImageCache(std::uint64_t capacity_blocks, std::size_t block_size, double hir_fraction)
    : block_size_(block_size), lirs_(capacity_blocks, hir_fraction) {}

std::optional<CachedBlock> ImageCache::get(const BlockAddress& addr) {
  std::lock_guard lock(mu_);
  if (auto* v = lirs_.get(addr)) return *v;
  return std::nullopt;
}

void ImageCache::put(const BlockAddress& addr, CachedBlock block) {
  std::lock_guard lock(mu_);
  lirs_.put(addr, std::move(block));
}

void ImageCache::invalidate(const BlockAddress& addr) {
  std::lock_guard lock(mu_);
  if (lirs_.contains(addr)) ++invalidations_;
  lirs_.erase(addr);
}

bool ImageCache::contains(const BlockAddress& addr) const {
  std::lock_guard lock(mu_);
  return lirs_.contains(addr);
}

std::uint64_t ImageCache::size() const {
  std::lock_guard lock(mu_);
  return lirs_.size();
}

std::uint64_t ImageCache::capacity() const {
  std::lock_guard lock(mu_);
  return lirs_.capacity();
}

PartitionStats ImageCache::stats() const {
  std::lock_guard lock(mu_);
  const auto& s = lirs_.stats();
  PartitionStats out;
  out.hits = s.hits;
  out.misses = s.misses;
  out.evictions = s.evictions;
  out.invalidations = invalidations_;
  return out;
}

// ------------------------------------------------------------------ active

ActiveCache::ActiveCache(std::size_t block_size, std::uint64_t prefetch_window)
    : block_size_(block_size), window_(prefetch_window) {}

void ActiveCache::resize(std::uint64_t read_blocks, std::uint64_t write_blocks) {
  read_limit_ = read_blocks;
  write_limit_ = write_blocks;
  evict_to(read_limit_);
}

const Bytes* ActiveCache::buffered(std::uint64_t vblock) const {
  auto it = writes_.find(vblock);
  return it == writes_.end() ? nullptr : &it->second;
}

bool ActiveCache::buffer(std::uint64_t vblock, Bytes block) {
  writes_[vblock] = std::move(block);
  invalidate(vblock);
  return write_limit_reached();
}

std::map<std::uint64_t, Bytes> ActiveCache::drain() {
  std::map<std::uint64_t, Bytes> out;
  out.swap(writes_);
  return out;
}

std::optional<CachedBlock> ActiveCache::cached(std::uint64_t vblock) {
  auto it = reads_.find(vblock);
  if (it == reads_.end()) return std::nullopt;
  lru_.splice(lru_.begin(), lru_, it->second.pos);
  return it->second.block;
}

void ActiveCache::insert(std::uint64_t vblock, CachedBlock block) {
  if (read_limit_ == 0) return;
  if (auto it = reads_.find(vblock); it != reads_.end()) {
    it->second.block = std::move(block);
    lru_.splice(lru_.begin(), lru_, it->second.pos);
    return;
  }
  evict_to(read_limit_ - 1);
  lru_.push_front(vblock);
  reads_.emplace(vblock, Entry{std::move(block), lru_.begin()});
}

void ActiveCache::invalidate(std::uint64_t vblock) {
  auto it = reads_.find(vblock);
  if (it == reads_.end()) return;
  lru_.erase(it->second.pos);
  reads_.erase(it);
  ++stats_.invalidations;
}

void ActiveCache::evict_to(std::uint64_t limit) {
  while (reads_.size() > limit) {
    reads_.erase(lru_.back());
    lru_.pop_back();
    ++stats_.evictions;
  }
}

std::vector<std::uint64_t> ActiveCache::note_read(std::uint64_t vblock,
                                                  std::uint64_t image_capacity) {
  const bool sequential = last_read_ && *last_read_ + 1 == vblock;
  last_read_ = vblock;
  std::vector<std::uint64_t> out;
  if (!sequential || window_ == 0 || read_limit_ == 0) return out;
  // Prefetched blocks must not push each other out.
  const auto window = std::min(window_, read_limit_ / 2);
  for (std::uint64_t v = vblock + 1; v <= vblock + window && v < image_capacity; ++v) {
    if (!reads_.contains(v) && !writes_.contains(v)) out.push_back(v);
  }
  return out;
}

}  // namespace hvsto
