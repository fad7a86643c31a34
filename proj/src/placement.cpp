#include "hvsto/placement.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

namespace hvsto {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kCapacity: return "capacity";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kReadOnly: return "read-only";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kRange: return "range";
    case ErrorCode::kFull: return "full";
    case ErrorCode::kDoubleFree: return "double-free";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

std::string to_string(const BlockAddress& addr) {
  return fmt::format("{}:{}", addr.node_id, addr.local_id);
}

NodeRegistry::NodeRegistry(std::vector<NodeInfo> nodes, std::uint64_t salt)
    : nodes_(std::move(nodes)), salt_(salt) {
  if (nodes_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "node registry must hold at least one node");
  }
  std::unordered_set<NodeId> seen;
  for (const auto& n : nodes_) {
    if (!seen.insert(n.id).second) {
      throw Error(ErrorCode::kInvalidArgument, fmt::format("duplicate node id {}", n.id));
    }
  }
}

NodeRegistry NodeRegistry::uniform(std::size_t count, std::uint64_t capacity_blocks,
                                   std::uint64_t salt) {
  std::vector<NodeInfo> nodes;
  nodes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    nodes.push_back({static_cast<NodeId>(i), capacity_blocks, {}});
  }
  return NodeRegistry(std::move(nodes), salt);
}

std::size_t NodeRegistry::index_of(NodeId id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id == id) return i;
  }
  throw Error(ErrorCode::kNotFound, fmt::format("unknown storage node {}", id));
}

bool NodeRegistry::contains(NodeId id) const {
  for (const auto& n : nodes_) {
    if (n.id == id) return true;
  }
  return false;
}

NodeId NodeRegistry::next(NodeId id) const {
  return nodes_[(index_of(id) + 1) % nodes_.size()].id;
}

std::uint64_t placement_hash(const PlacementKey& key, std::uint64_t cluster_salt) {
  std::uint64_t h = mix64(cluster_salt ^ 0x48565354ULL);
  h = mix64(h ^ key.image.value);
  h = mix64(h ^ key.version_seq);
  h = mix64(h ^ static_cast<std::uint64_t>(key.kind));
  h = mix64(h ^ key.item);
  h = mix64(h ^ key.salt);
  return h;
}

NodeId place(const PlacementKey& key, const NodeRegistry& registry) {
  const auto h = placement_hash(key, registry.salt());
  return registry.at_index(h % registry.size()).id;
}

std::uint64_t BlockAllocator::allocate() {
  if (live_.size() >= capacity_) {
    throw Error(ErrorCode::kFull, "node has no free blocks");
  }
  std::uint64_t id;
  if (next_fresh_ < capacity_) {
    id = next_fresh_++;
  } else {
    id = free_list_.back();
    free_list_.pop_back();
    ++reuse_count_[id];
  }
  live_.insert(id);
  return id;
}

void BlockAllocator::release(std::uint64_t local_id) {
  if (live_.erase(local_id) == 0) {
    throw Error(ErrorCode::kDoubleFree,
                fmt::format("free of block {} which is not allocated", local_id));
  }
  free_list_.push_back(local_id);
}

std::uint64_t BlockAllocator::generation(std::uint64_t local_id) const {
  auto it = reuse_count_.find(local_id);
  return it == reuse_count_.end() ? 0 : it->second;
}

bool valid_block_size(std::size_t block_size) {
  return block_size >= 512 && block_size <= 65536 && (block_size & (block_size - 1)) == 0;
}

ClusterConfig ClusterConfig::parse(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, fmt::format("cluster config: {}", e.what()));
  }
  ClusterConfig cfg;
  try {
    for (const auto& n : doc.at("nodes")) {
      NodeInfo info;
      info.id = n.at("id").get<NodeId>();
      info.capacity_blocks = n.at("capacity_blocks").get<std::uint64_t>();
      info.endpoint = n.value("endpoint", std::string{});
      cfg.nodes.push_back(std::move(info));
    }
    cfg.block_size = doc.value("block_size", std::size_t{4096});
    cfg.placement_salt = doc.value("placement_salt", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("cluster config: {}", e.what()));
  }
  if (!valid_block_size(cfg.block_size)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("cluster config: unsupported block size {}", cfg.block_size));
  }
  // Validates id uniqueness and non-emptiness.
  (void)cfg.registry();
  return cfg;
}

ClusterConfig ClusterConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kNotFound, fmt::format("cannot open {}", path.string()));
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string ClusterConfig::to_json() const {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes) {
    nlohmann::json j{{"id", n.id}, {"capacity_blocks", n.capacity_blocks}};
    if (!n.endpoint.empty()) j["endpoint"] = n.endpoint;
    doc["nodes"].push_back(std::move(j));
  }
  doc["block_size"] = block_size;
  if (placement_salt != 0) doc["placement_salt"] = placement_salt;
  return doc.dump();
}

}  // namespace hvsto
