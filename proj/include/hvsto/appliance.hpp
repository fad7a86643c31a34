#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>

#include "hvsto/hybrid_cache.hpp"
#include "hvsto/mapping.hpp"
#include "hvsto/node_store.hpp"

namespace hvsto {

/// One VM's attachment to a virtual disk. Owned by the Appliance; invalid
/// after save_or_migrate().
class VDiskSession {
 public:
  const std::string& vm_id() const { return vm_id_; }
  ImageId image() const { return image_; }
  VersionId head() const { return head_; }
  std::size_t block_size() const { return block_size_; }
  std::uint64_t capacity_blocks() const { return capacity_; }
  IoContext& ctx() { return ctx_; }
  SimTime clock() const { return ctx_.clock; }
  const ActiveCache& active() const { return active_; }

 private:
  friend class Appliance;
  VDiskSession(std::string vm_id, ImageId image, VersionId head, std::size_t block_size,
               std::uint64_t capacity, std::uint64_t prefetch_window)
      : vm_id_(std::move(vm_id)), image_(image), head_(head), block_size_(block_size),
        capacity_(capacity), active_(block_size, prefetch_window) {}

  std::string vm_id_;
  ImageId image_;
  VersionId head_;
  std::size_t block_size_;
  std::uint64_t capacity_;
  IoContext ctx_;
  ActiveCache active_;
  std::uint64_t alloc_serial_ = 0;
};

struct PartitionUsage {
  std::uint64_t metadata_bytes = 0;
  std::uint64_t image_bytes = 0;
  std::uint64_t active_bytes = 0;
  std::uint64_t metadata_capacity = 0;
  std::uint64_t image_capacity = 0;
  std::uint64_t active_capacity = 0;

  bool within_budget() const {
    return metadata_bytes <= metadata_capacity && image_bytes <= image_capacity &&
           active_bytes <= active_capacity;
  }
};

/// Per-server storage appliance: exposes virtual disks to the VMs of one
/// physical host and fronts the shared cluster with the hybrid cache.
class Appliance {
 public:
  Appliance(Cluster& cluster, MappingStore& mapping, CacheConfig config = {});
  ~Appliance();

  Appliance(const Appliance&) = delete;
  Appliance& operator=(const Appliance&) = delete;

  /// Throws kNotFound for an unknown image, kConflict when the image or the
  /// VM id is already attached.
  VDiskSession& attach(const std::string& vm_id, ImageId image, SimTime now = 0);

  Bytes read(VDiskSession& s, std::uint64_t offset, std::uint64_t length);
  void write(VDiskSession& s, std::uint64_t offset, std::span<const std::byte> data);

  Bytes read_block(VDiskSession& s, std::uint64_t vblock);
  void write_block(VDiskSession& s, std::uint64_t vblock, Bytes block);

  /// Freezes the head and persists the write buffer into a new version.
  /// Returns nullopt when nothing was buffered.
  std::optional<VersionId> flush(VDiskSession& s, FlushCause cause);

  /// Persists buffered writes, then freezes the head as an explicit snapshot.
  VersionId snapshot(VDiskSession& s);

  /// Flushes, commits all index nodes and detaches. Returns the new head.
  VersionId save_or_migrate(VDiskSession& s, FlushCause cause = FlushCause::kSave);

  std::size_t attached() const;
  VDiskSession* session(const std::string& vm_id);
  PartitionUsage usage() const;
  CacheStats stats() const;
  const CacheConfig& config() const { return config_; }
  MetadataCache& metadata_cache() { return metadata_; }
  ImageCache& image_cache() { return image_; }
  MappingStore& mapping() { return mapping_; }
  Cluster& cluster() { return cluster_; }

 private:
  void rebalance_locked();
  std::optional<VersionId> flush_locked(VDiskSession& s, FlushCause cause);
  void persist_buffer_locked(VDiskSession& s);
  Bytes read_block_locked(VDiskSession& s, std::uint64_t vblock);
  void write_block_locked(VDiskSession& s, std::uint64_t vblock, Bytes block);
  void prefetch_locked(VDiskSession& s, const std::vector<std::uint64_t>& vblocks);
  bool protects(const BlockAddress& addr) const;
  void check_block(const VDiskSession& s, std::uint64_t vblock, std::size_t size) const;

  Cluster& cluster_;
  MappingStore& mapping_;
  CacheConfig config_;
  std::size_t block_size_;
  std::uint64_t holder_id_;
  MetadataCache metadata_;
  ImageCache image_;
  std::uint64_t listener_ = 0;

  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<VDiskSession>> sessions_;
  PartitionStats retired_active_;
  std::uint64_t prefetched_ = 0;
  std::uint64_t flush_full_ = 0;
  std::uint64_t flush_save_ = 0;
  std::uint64_t flush_migrate_ = 0;

  // Separate from mu_: consulted from inside metadata cache eviction.
  mutable std::mutex protect_mu_;
  std::unordered_set<ImageId> attached_images_;
};

}  // namespace hvsto
