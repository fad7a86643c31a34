#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hvsto/node_store.hpp"
#include "hvsto/types.hpp"

namespace hvsto {

enum class IndexLevel : std::uint8_t { kRoot = 0, kInterior = 1, kLeaf = 2 };
enum class LinkMode : std::uint8_t { kWriteable = 0, kReadOnly = 1 };

inline constexpr int kIndexDepth = 3;

struct IndexEntry {
  std::uint64_t key = 0;  // first virtual block covered by the child
  BlockAddress child;
  LinkMode mode = LinkMode::kWriteable;
  bool operator==(const IndexEntry&) const = default;
};

/// One node of the block index. Entries are kept sorted by key. A read-only
/// entry points at a node or data block owned by an ancestor version.
struct IndexNode {
  IndexLevel level = IndexLevel::kRoot;
  std::uint64_t owner_seq = 0;
  std::vector<IndexEntry> entries;

  const IndexEntry* find(std::uint64_t key) const;
  IndexEntry* find(std::uint64_t key);
  /// Inserts or replaces the entry with `entry.key`.
  void upsert(const IndexEntry& entry);
  bool operator==(const IndexNode&) const = default;
};

// On-disk layout, little-endian, zero padded to the block size:
//   header: level u8 | entry count u16 | owner version u64
//   entry:  key u64 | node_id u32 | local_id u64 | mode u8
inline constexpr std::size_t kIndexHeaderSize = 1 + 2 + 8;
inline constexpr std::size_t kIndexEntrySize = 8 + 4 + 8 + 1;

Bytes serialize_index_node(const IndexNode& node, std::size_t block_size);
IndexNode deserialize_index_node(std::span<const std::byte> block);

/// Largest number of entries that fits one block.
std::uint64_t max_fanout(std::size_t block_size);
/// Smallest f >= 16 with f^3 >= capacity.
std::uint64_t fanout_for_capacity(std::uint64_t capacity);

enum class VersionCause : std::uint8_t {
  kCreate,
  kClone,
  kExplicitSnapshot,
  kRewriteAvoidance,
  kWriteCacheFlush,
};
const char* to_string(VersionCause cause);

struct VersionInfo {
  VersionId id;
  std::optional<VersionId> parent;
  bool writeable = false;
  bool golden = false;
  bool deleted = false;
  VersionCause cause = VersionCause::kCreate;
  SimTime created_at = 0;
};

struct ImageInfo {
  ImageId id;
  std::size_t block_size = 0;
  std::uint64_t capacity = 0;
  std::uint64_t fanout = 0;
  VersionId head;
};

struct LookupResult {
  std::optional<BlockAddress> addr;
  unsigned fetches = 0;
  bool golden = false;  // data block belongs to a golden (system image) version
  bool mapped() const { return addr.has_value(); }
};

struct MapWriteResult {
  unsigned nodes_created = 0;  // brand new path nodes
  unsigned nodes_copied = 0;   // copy-on-write duplicates of existing nodes
  std::optional<BlockAddress> superseded;  // data block of this version that was replaced
};

struct MappingStats {
  std::uint64_t nodes_created = 0;
  std::uint64_t nodes_copied = 0;
  std::uint64_t node_fetches = 0;
  std::uint64_t nodes_committed = 0;
  std::uint64_t snapshots = 0;
  std::uint64_t blocks_reclaimed = 0;
};

/// Block indexes for all images of one store. Every image keeps a chain of
/// versions; only the newest one accepts writes. Index nodes live on the
/// storage nodes: a node owned by the writeable version is held in memory
/// (allocated, not yet written) until the version is committed, after which
/// it is immutable.
class MappingStore {
 public:
  explicit MappingStore(Cluster& cluster);
  ~MappingStore();

  MappingStore(const MappingStore&) = delete;
  MappingStore& operator=(const MappingStore&) = delete;

  std::pair<ImageId, VersionId> create_image(std::size_t block_size, std::uint64_t capacity,
                                             SimTime now = 0);

  /// New image whose first version inherits everything from a golden version.
  std::pair<ImageId, VersionId> clone_image(IoContext& ctx, VersionId golden);

  LookupResult lookup(IoContext& ctx, VersionId version, std::uint64_t vblock) const;

  MapWriteResult map_write(IoContext& ctx, VersionId version, std::uint64_t vblock,
                           const BlockAddress& data);

  /// Freezes `version` (which must be the writeable head) and opens a new
  /// writeable head whose root links read-only to the frozen root's children.
  VersionId snapshot(IoContext& ctx, VersionId version,
                     VersionCause cause = VersionCause::kExplicitSnapshot);

  /// Writes the head's in-memory index nodes to storage. The head stays
  /// writeable; later changes copy the persisted nodes.
  void commit(IoContext& ctx, ImageId image);

  /// Snapshots the head and marks the frozen version as a golden system
  /// image that clones can inherit from. Golden versions survive GC.
  VersionId freeze_golden(IoContext& ctx, ImageId image);

  /// Deletes every version of `image` outside `retain` (golden versions are
  /// always kept) and frees the index and data blocks no retained root can
  /// reach. Returns the number of blocks freed.
  std::uint64_t collect_garbage(IoContext& ctx, ImageId image,
                                const std::set<VersionId>& retain);

  VersionId head(ImageId image) const;
  ImageInfo image_info(ImageId image) const;
  VersionInfo version_info(VersionId version) const;
  std::vector<VersionInfo> version_log(ImageId image) const;
  bool has_image(ImageId image) const;

  /// One writer per image: throws kConflict while another holder has it.
  void acquire_lease(ImageId image, std::uint64_t holder);
  void release_lease(ImageId image, std::uint64_t holder);
  bool leased(ImageId image) const;

  /// True when `addr` is an index node reachable from the image's head root.
  bool is_head_index_block(ImageId image, const BlockAddress& addr) const;
  std::size_t head_index_block_count(ImageId image) const;
  bool is_golden_data(const BlockAddress& addr) const;

  struct Reachable {
    std::unordered_set<BlockAddress> index;
    std::unordered_set<BlockAddress> data;
  };
  Reachable reachable(IoContext& ctx, VersionId version) const;

  MappingStats stats() const;
  Cluster& cluster() { return cluster_; }

 private:
  struct VersionRecord {
    VersionId id;
    std::optional<std::uint64_t> parent;
    std::optional<BlockAddress> root;
    bool writeable = false;
    bool golden = false;
    bool deleted = false;
    VersionCause cause = VersionCause::kCreate;
    SimTime created_at = 0;
  };

  struct ImageState {
    ImageId id;
    std::size_t block_size = 0;
    std::uint64_t capacity = 0;
    std::uint64_t fanout = 0;
    std::uint64_t head_seq = 0;
    std::vector<std::uint64_t> log;
    std::unordered_map<BlockAddress, IndexNode> dirty;
    // Inherited blocks the head stopped linking to; their owner may already
    // be collected, so the next GC frees them unless still reachable.
    std::unordered_set<BlockAddress> orphan_candidates;
    std::uint64_t node_serial = 0;
    mutable std::shared_mutex mu;

    // Guarded separately: cache eviction consults it while `mu` may be held.
    mutable std::mutex head_index_mu;
    std::unordered_set<BlockAddress> head_index;
    void index_replace(const std::optional<BlockAddress>& old, const BlockAddress& fresh) {
      std::lock_guard lock(head_index_mu);
      if (old) head_index.erase(*old);
      head_index.insert(fresh);
    }
  };

  ImageState& image_state(ImageId image) const;
  bool owned_by(ImageId image, std::uint64_t owner_seq) const;
  VersionRecord record_copy(std::uint64_t seq) const;
  VersionRecord& record_ref(std::uint64_t seq);
  VersionInfo to_info(const VersionRecord& rec) const;

  IndexNode load_node(IoContext& ctx, const ImageState* owner_image,
                      const BlockAddress& addr) const;
  BlockAddress allocate_index_block(IoContext& ctx, ImageState& img);
  /// Returns the address of a dirty, head-owned copy of the node at `addr`.
  BlockAddress make_writeable(IoContext& ctx, ImageState& img, const BlockAddress& addr,
                              MapWriteResult& result);
  void commit_locked(IoContext& ctx, ImageState& img);
  VersionId snapshot_locked(IoContext& ctx, ImageState& img, VersionCause cause);
  void traverse(IoContext& ctx, const ImageState* img, const BlockAddress& root,
                Reachable& out, const Reachable* stop_at,
                const std::function<bool(std::uint64_t owner_seq)>& owned_filter) const;
  void key_spans(const ImageState& img, std::uint64_t vblock, std::uint64_t keys[3]) const;

  Cluster& cluster_;
  mutable std::shared_mutex mu_;  // images_, versions_, golden_*
  std::map<ImageId, std::unique_ptr<ImageState>> images_;
  std::unordered_map<std::uint64_t, VersionRecord> versions_;
  std::unordered_set<BlockAddress> golden_data_;
  std::unordered_map<std::uint64_t, std::unordered_set<BlockAddress>> golden_index_;
  std::unordered_map<ImageId, std::uint64_t> leases_;
  std::uint64_t next_image_ = 1;
  std::uint64_t next_seq_ = 1;

  mutable std::atomic<std::uint64_t> nodes_created_{0};
  mutable std::atomic<std::uint64_t> nodes_copied_{0};
  mutable std::atomic<std::uint64_t> node_fetches_{0};
  mutable std::atomic<std::uint64_t> nodes_committed_{0};
  mutable std::atomic<std::uint64_t> snapshots_{0};
  mutable std::atomic<std::uint64_t> blocks_reclaimed_{0};
};

}  // namespace hvsto
