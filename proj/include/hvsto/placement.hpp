#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hvsto/types.hpp"

namespace hvsto {

struct NodeInfo {
  NodeId id = 0;
  std::uint64_t capacity_blocks = 0;
  std::string endpoint;  // empty for the in-process transport
};

/// Fixed set of storage nodes. Order matters: it defines ring order for
/// allocation retries and the modulus of the placement hash.
class NodeRegistry {
 public:
  NodeRegistry() = default;
  explicit NodeRegistry(std::vector<NodeInfo> nodes, std::uint64_t salt = 0);

  /// Builds `count` nodes with ids 0..count-1.
  static NodeRegistry uniform(std::size_t count, std::uint64_t capacity_blocks,
                              std::uint64_t salt = 0);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const std::vector<NodeInfo>& nodes() const { return nodes_; }
  const NodeInfo& at_index(std::size_t index) const { return nodes_.at(index); }
  std::size_t index_of(NodeId id) const;  // throws kNotFound
  bool contains(NodeId id) const;
  std::uint64_t salt() const { return salt_; }

  /// Node following `id` in ring order.
  NodeId next(NodeId id) const;

 private:
  std::vector<NodeInfo> nodes_;
  std::uint64_t salt_ = 0;
};

enum class BlockKind : std::uint8_t { kData = 0, kIndex = 1, kChainTable = 2 };

struct PlacementKey {
  ImageId image;
  std::uint64_t version_seq = 0;
  BlockKind kind = BlockKind::kData;
  std::uint64_t item = 0;  // vblock for data, node serial for index blocks
  std::uint64_t salt = 0;  // per-allocation sequence
  auto operator<=>(const PlacementKey&) const = default;
};

std::uint64_t placement_hash(const PlacementKey& key, std::uint64_t cluster_salt);

/// Stable hash of the key modulo N.
NodeId place(const PlacementKey& key, const NodeRegistry& registry);

/// Per-node local block id allocator. Fresh ids are handed out in increasing
/// order; freed ids are recycled only once the fresh range is exhausted.
class BlockAllocator {
 public:
  explicit BlockAllocator(std::uint64_t capacity) : capacity_(capacity) {}

  std::uint64_t allocate();  // throws kFull
  void release(std::uint64_t local_id);  // throws kDoubleFree
  bool in_use(std::uint64_t local_id) const { return live_.contains(local_id); }
  std::uint64_t live_count() const { return live_.size(); }
  std::uint64_t capacity() const { return capacity_; }
  /// Allocation generation of a live id; increments every time an id is reused.
  std::uint64_t generation(std::uint64_t local_id) const;

 private:
  std::uint64_t capacity_;
  std::uint64_t next_fresh_ = 0;
  std::vector<std::uint64_t> free_list_;
  std::unordered_set<std::uint64_t> live_;
  std::unordered_map<std::uint64_t, std::uint64_t> reuse_count_;
};

/// Cluster description as stored in the JSON config file.
struct ClusterConfig {
  std::vector<NodeInfo> nodes;
  std::size_t block_size = 4096;
  std::uint64_t placement_salt = 0;

  NodeRegistry registry() const { return NodeRegistry(nodes, placement_salt); }

  static ClusterConfig parse(const std::string& json_text);
  static ClusterConfig load(const std::filesystem::path& path);
  std::string to_json() const;
};

bool valid_block_size(std::size_t block_size);

}  // namespace hvsto
