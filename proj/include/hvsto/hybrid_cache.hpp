#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hvsto/lirs_cache.hpp"
#include "hvsto/types.hpp"

namespace hvsto {

enum class Partition : std::uint8_t { kMetadata, kImage, kActive };
const char* to_string(Partition p);

struct CacheConfig {
  std::uint64_t capacity_bytes = 64ULL << 20;
  double metadata_share = 0.25;
  double image_share = 0.50;
  double active_share = 0.25;
  /// Upper bound of one VM's write buffer; the active share may lower it.
  std::uint64_t write_buffer_bytes = 100ULL << 20;
  std::uint64_t prefetch_window = 32;
  double lirs_hir_fraction = 0.01;
  bool metadata_enabled = true;
  bool image_enabled = true;
  bool active_read_enabled = true;
  bool prefetch_enabled = true;

  /// Throws kInvalidArgument unless shares are non-negative and sum to one.
  void validate() const;
  /// Whole blocks available to a partition.
  std::uint64_t partition_blocks(Partition p, std::size_t block_size) const;
};

struct PartitionStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t bypasses = 0;
  std::uint64_t invalidations = 0;
};

enum class FlushCause : std::uint8_t { kFull, kSave, kMigrate };
const char* to_string(FlushCause cause);

struct CacheStats {
  PartitionStats metadata;
  PartitionStats image;
  PartitionStats active;
  std::uint64_t prefetched = 0;
  std::uint64_t flush_full = 0;
  std::uint64_t flush_save = 0;
  std::uint64_t flush_migrate = 0;

  std::string to_json() const;
};

/// A block held by a data cache. `ready_at` is when its fetch completes; a
/// reader arriving earlier waits for that instead of issuing its own fetch.
struct CachedBlock {
  Bytes data;
  SimTime ready_at = 0;
};

/// LRU cache of serialized index nodes. Entries for which the protection
/// predicate holds are never evicted; when every entry is protected a new
/// block is not admitted.
class MetadataCache : public IndexBlockCache {
 public:
  using Protection = std::function<bool(const BlockAddress&)>;

  MetadataCache(std::uint64_t capacity_blocks, std::size_t block_size, SimTime hit_cost_us);

  void set_protection(Protection predicate);

  std::optional<Bytes> get(const BlockAddress& addr);
  enum class PutResult { kAdmitted, kUpdated, kBypassed };
  PutResult put(const BlockAddress& addr, Bytes block);
  bool erase(const BlockAddress& addr);

  std::optional<Bytes> lookup(const BlockAddress& addr, IoContext& ctx) override;
  void admit(const BlockAddress& addr, const Bytes& block) override;
  void invalidate(const BlockAddress& addr) override;

  bool contains(const BlockAddress& addr) const;
  /// Evaluates the protection predicate now.
  bool is_protected(const BlockAddress& addr) const;
  std::vector<BlockAddress> keys_lru_to_mru() const;

  std::uint64_t size() const;
  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t bytes() const { return size() * block_size_; }
  PartitionStats stats() const;

  using EvictionObserver = std::function<void(const BlockAddress&)>;
  void set_eviction_observer(EvictionObserver observer);

 private:
  struct Entry {
    Bytes block;
    bool protected_mark = false;
    std::list<BlockAddress>::iterator pos;
  };

  std::uint64_t capacity_;
  std::size_t block_size_;
  SimTime hit_cost_;
  mutable std::mutex mu_;
  std::list<BlockAddress> lru_;  // front is most recent
  std::unordered_map<BlockAddress, Entry> map_;
  Protection protection_;
  EvictionObserver on_evict_;
  PartitionStats stats_;
};

/// Shared cache of golden-image data blocks, keyed by physical address,
/// replaced with LIRS.
class ImageCache {
 public:
  ImageCache(std::uint64_t capacity_blocks, std::size_t block_size, double hir_fraction);

  std::optional<CachedBlock> get(const BlockAddress& addr);
  void put(const BlockAddress& addr, CachedBlock block);
  void invalidate(const BlockAddress& addr);

  bool contains(const BlockAddress& addr) const;
  std::uint64_t size() const;
  std::uint64_t capacity() const;
  std::uint64_t bytes() const { return size() * block_size_; }
  PartitionStats stats() const;

 private:
  std::size_t block_size_;
  mutable std::mutex mu_;
  LirsCache<BlockAddress, CachedBlock> lirs_;
  std::uint64_t invalidations_ = 0;
};

/// Per-VM slice of the active partition: an LRU read cache keyed by virtual
/// block plus the write buffer. Not synchronized; owned by one session.
class ActiveCache {
 public:
  ActiveCache(std::size_t block_size, std::uint64_t prefetch_window);

  /// Applies a new share. Read entries over the new capacity are evicted;
  /// the caller flushes the buffer when over_write_limit() turns true.
  void resize(std::uint64_t read_blocks, std::uint64_t write_blocks);

  const Bytes* buffered(std::uint64_t vblock) const;
  /// Stores a full block in the buffer. Returns true once the buffer has
  /// reached its limit.
  bool buffer(std::uint64_t vblock, Bytes block);
  bool over_write_limit() const { return writes_.size() > write_limit_; }
  bool write_limit_reached() const { return writes_.size() >= write_limit_; }
  std::map<std::uint64_t, Bytes> drain();

  std::optional<CachedBlock> cached(std::uint64_t vblock);
  bool contains(std::uint64_t vblock) const { return reads_.contains(vblock); }
  void insert(std::uint64_t vblock, CachedBlock block);
  void invalidate(std::uint64_t vblock);

  /// Records a read. After v followed by v+1 it returns the blocks ahead of
  /// v+1 in the prefetch window that are neither cached nor buffered.
  std::vector<std::uint64_t> note_read(std::uint64_t vblock, std::uint64_t image_capacity);

  std::uint64_t read_blocks() const { return reads_.size(); }
  std::uint64_t buffer_blocks() const { return writes_.size(); }
  std::uint64_t read_capacity() const { return read_limit_; }
  std::uint64_t write_limit() const { return write_limit_; }
  std::uint64_t bytes() const { return (reads_.size() + writes_.size()) * block_size_; }
  const PartitionStats& stats() const { return stats_; }
  PartitionStats& stats() { return stats_; }

 private:
  struct Entry {
    CachedBlock block;
    std::list<std::uint64_t>::iterator pos;
  };

  void evict_to(std::uint64_t limit);

  std::size_t block_size_;
  std::uint64_t window_;
  std::uint64_t read_limit_ = 0;
  std::uint64_t write_limit_ = 0;
  std::list<std::uint64_t> lru_;
  std::unordered_map<std::uint64_t, Entry> reads_;
  std::map<std::uint64_t, Bytes> writes_;
  std::optional<std::uint64_t> last_read_;
  PartitionStats stats_;
};

}  // namespace hvsto
