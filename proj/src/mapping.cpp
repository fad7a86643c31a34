#include "hvsto/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <fmt/format.h>

#include "byte_io.hpp"

namespace hvsto {

using detail::get_le;
using detail::put_le;

const IndexEntry* IndexNode::find(std::uint64_t key) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), key,
                             [](const IndexEntry& e, std::uint64_t k) { return e.key < k; });
  return it != entries.end() && it->key == key ? &*it : nullptr;
}

IndexEntry* IndexNode::find(std::uint64_t key) {
  return const_cast<IndexEntry*>(std::as_const(*this).find(key));
}

void IndexNode::upsert(const IndexEntry& entry) {
  auto it = std::lower_bound(entries.begin(), entries.end(), entry.key,
                             [](const IndexEntry& e, std::uint64_t k) { return e.key < k; });
  if (it != entries.end() && it->key == entry.key) {
    *it = entry;
  } else {
    entries.insert(it, entry);
  }
}

Bytes serialize_index_node(const IndexNode& node, std::size_t block_size) {
  const std::size_t need = kIndexHeaderSize + kIndexEntrySize * node.entries.size();
  if (need > block_size || node.entries.size() > 0xffff) {
    throw Error(ErrorCode::kCapacity,
                fmt::format("index node with {} entries does not fit a {}-byte block",
                            node.entries.size(), block_size));
  }
  Bytes out;
  out.reserve(block_size);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(node.level));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(node.entries.size()));
  put_le<std::uint64_t>(out, node.owner_seq);
  for (const auto& e : node.entries) {
    put_le<std::uint64_t>(out, e.key);
    put_le<std::uint32_t>(out, e.child.node_id);
    put_le<std::uint64_t>(out, e.child.local_id);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.mode));
  }
  out.resize(block_size, std::byte{0});
  return out;
}

IndexNode deserialize_index_node(std::span<const std::byte> block) {
  if (block.size() < kIndexHeaderSize) {
    throw Error(ErrorCode::kParse, "index block shorter than its header");
  }
  IndexNode node;
  const auto level = get_le<std::uint8_t>(block, 0);
  if (level > static_cast<std::uint8_t>(IndexLevel::kLeaf)) {
    throw Error(ErrorCode::kParse, fmt::format("bad index level {}", level));
  }
  node.level = static_cast<IndexLevel>(level);
  const auto count = get_le<std::uint16_t>(block, 1);
  node.owner_seq = get_le<std::uint64_t>(block, 3);
  if (kIndexHeaderSize + kIndexEntrySize * count > block.size()) {
    throw Error(ErrorCode::kParse, fmt::format("index block claims {} entries", count));
  }
  node.entries.reserve(count);
  std::size_t off = kIndexHeaderSize;
  for (std::uint16_t i = 0; i < count; ++i, off += kIndexEntrySize) {
    IndexEntry e;
    e.key = get_le<std::uint64_t>(block, off);
    e.child.node_id = get_le<std::uint32_t>(block, off + 8);
    e.child.local_id = get_le<std::uint64_t>(block, off + 12);
    const auto mode = get_le<std::uint8_t>(block, off + 20);
    if (mode > 1) throw Error(ErrorCode::kParse, fmt::format("bad link mode {}", mode));
    e.mode = static_cast<LinkMode>(mode);
    if (!node.entries.empty() && node.entries.back().key >= e.key) {
      throw Error(ErrorCode::kParse, "index entries out of order");
    }
    node.entries.push_back(e);
  }
  return node;
}

std::uint64_t max_fanout(std::size_t block_size) {
  if (block_size < kIndexHeaderSize) return 0;
  return std::min<std::uint64_t>((block_size - kIndexHeaderSize) / kIndexEntrySize, 0xffff);
}

std::uint64_t fanout_for_capacity(std::uint64_t capacity) {
  using u128 = unsigned __int128;
  auto f = static_cast<std::uint64_t>(std::cbrt(static_cast<double>(capacity)));
  while (f > 1 && u128(f - 1) * (f - 1) * (f - 1) >= capacity) --f;
  while (u128(f) * f * f < capacity) ++f;
  return std::max<std::uint64_t>(f, 16);
}

const char* to_string(VersionCause cause) {
  switch (cause) {
    case VersionCause::kCreate: return "create";
    case VersionCause::kClone: return "clone";
    case VersionCause::kExplicitSnapshot: return "explicit-snapshot";
    case VersionCause::kRewriteAvoidance: return "rewrite-avoidance";
    case VersionCause::kWriteCacheFlush: return "write-cache-flush";
  }
  return "?";
}

MappingStore::MappingStore(Cluster& cluster) : cluster_(cluster) {}
MappingStore::~MappingStore() = default;

MappingStore::ImageState& MappingStore::image_state(ImageId image) const {
  std::shared_lock lock(mu_);
  auto it = images_.find(image);
  if (it == images_.end()) {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown image {}", image.value));
  }
  return *it->second;
}

bool MappingStore::owned_by(ImageId image, std::uint64_t owner_seq) const {
  std::shared_lock lock(mu_);
  auto it = versions_.find(owner_seq);
  return it != versions_.end() && it->second.id.image == image;
}

MappingStore::VersionRecord MappingStore::record_copy(std::uint64_t seq) const {
  std::shared_lock lock(mu_);
  auto it = versions_.find(seq);
  if (it == versions_.end()) {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown version {}", seq));
  }
  return it->second;
}

MappingStore::VersionRecord& MappingStore::record_ref(std::uint64_t seq) {
  return versions_.at(seq);
}

VersionInfo MappingStore::to_info(const VersionRecord& rec) const {
  VersionInfo info;
  info.id = rec.id;
  if (rec.parent) info.parent = versions_.at(*rec.parent).id;
  info.writeable = rec.writeable;
  info.golden = rec.golden;
  info.deleted = rec.deleted;
  info.cause = rec.cause;
  info.created_at = rec.created_at;
  return info;
}

std::pair<ImageId, VersionId> MappingStore::create_image(std::size_t block_size,
                                                         std::uint64_t capacity, SimTime now) {
  if (!valid_block_size(block_size)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("block size {} is not a power of two in [512, 65536]", block_size));
  }
  if (block_size != cluster_.block_size()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("block size {} differs from the cluster block size {}", block_size,
                            cluster_.block_size()));
  }
  if (capacity == 0) {
    throw Error(ErrorCode::kInvalidArgument, "image capacity must be at least one block");
  }
  const auto fanout = fanout_for_capacity(capacity);
  if (fanout > max_fanout(block_size)) {
    throw Error(ErrorCode::kCapacity,
                fmt::format("{} blocks exceed what a 3-level index of {}-byte nodes can address",
                            capacity, block_size));
  }

  std::unique_lock lock(mu_);
  auto img = std::make_unique<ImageState>();
  img->id = ImageId{next_image_++};
  img->block_size = block_size;
  img->capacity = capacity;
  img->fanout = fanout;
  img->head_seq = next_seq_++;
  img->log.push_back(img->head_seq);

  VersionRecord rec;
  rec.id = VersionId{img->id, img->head_seq};
  rec.writeable = true;
  rec.cause = VersionCause::kCreate;
  rec.created_at = now;
  versions_.emplace(img->head_seq, rec);

  const auto id = img->id;
  images_.emplace(id, std::move(img));
  return {id, rec.id};
}

std::pair<ImageId, VersionId> MappingStore::clone_image(IoContext& ctx, VersionId golden) {
  const auto grec = record_copy(golden.seq);
  if (grec.id != golden || !grec.golden || grec.deleted) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("version {} is not a golden image version", golden.seq));
  }
  const auto& src = image_state(golden.image);

  IndexNode root{IndexLevel::kRoot, 0, {}};
  if (grec.root) {
    root = load_node(ctx, nullptr, *grec.root);
    for (auto& e : root.entries) e.mode = LinkMode::kReadOnly;
  }

  auto img = std::make_unique<ImageState>();
  img->block_size = src.block_size;
  img->capacity = src.capacity;
  img->fanout = src.fanout;
  {
    std::unique_lock lock(mu_);
    img->id = ImageId{next_image_++};
    img->head_seq = next_seq_++;
    if (auto it = golden_index_.find(golden.seq); it != golden_index_.end()) {
      img->head_index = it->second;
    }
  }
  img->log.push_back(img->head_seq);
  root.owner_seq = img->head_seq;
  if (grec.root) img->head_index.erase(*grec.root);

  const auto addr = allocate_index_block(ctx, *img);
  img->dirty.emplace(addr, std::move(root));
  img->index_replace(std::nullopt, addr);
  nodes_created_.fetch_add(1);

  VersionRecord rec;
  rec.id = VersionId{img->id, img->head_seq};
  rec.parent = golden.seq;
  rec.root = addr;
  rec.writeable = true;
  rec.cause = VersionCause::kClone;
  rec.created_at = ctx.clock;

  std::unique_lock lock(mu_);
  versions_.emplace(rec.id.seq, rec);
  const auto id = img->id;
  images_.emplace(id, std::move(img));
  return {id, rec.id};
}

void MappingStore::key_spans(const ImageState& img, std::uint64_t vblock,
                             std::uint64_t keys[3]) const {
  const auto f = img.fanout;
  keys[0] = vblock / (f * f) * (f * f);
  keys[1] = vblock / f * f;
  keys[2] = vblock;
}

IndexNode MappingStore::load_node(IoContext& ctx, const ImageState* owner_image,
                                  const BlockAddress& addr) const {
  ++ctx.index_fetches;
  node_fetches_.fetch_add(1, std::memory_order_relaxed);
  if (owner_image) {
    if (auto it = owner_image->dirty.find(addr); it != owner_image->dirty.end()) {
      ctx.clock += cluster_.cost().local_ssd_us;
      return it->second;
    }
  }
  if (ctx.index_cache) {
    if (auto block = ctx.index_cache->lookup(addr, ctx)) {
      return deserialize_index_node(*block);
    }
  }
  Bytes block = cluster_.read(addr, ctx);
  if (ctx.index_cache) ctx.index_cache->admit(addr, block);
  return deserialize_index_node(block);
}

LookupResult MappingStore::lookup(IoContext& ctx, VersionId version, std::uint64_t vblock) const {
  const auto& img = image_state(version.image);
  if (vblock >= img.capacity) {
    throw Error(ErrorCode::kRange, fmt::format("vblock {} beyond capacity {}", vblock,
                                               img.capacity));
  }
  auto rec = record_copy(version.seq);
  if (rec.id != version || rec.deleted) {
    throw Error(ErrorCode::kNotFound, fmt::format("version {} does not exist", version.seq));
  }
  // Read-only versions never reference in-memory nodes, so they need no image lock.
  std::shared_lock img_lock(img.mu, std::defer_lock);
  if (rec.writeable) {
    img_lock.lock();
    rec = record_copy(version.seq);
  }

  LookupResult result;
  if (!rec.root) return result;
  std::uint64_t keys[3];
  key_spans(img, vblock, keys);
  const ImageState* dirty_source = rec.writeable ? &img : nullptr;
  BlockAddress addr = *rec.root;
  for (int level = 0; level < kIndexDepth; ++level) {
    const IndexNode node = load_node(ctx, dirty_source, addr);
    ++result.fetches;
    const IndexEntry* e = node.find(keys[level]);
    if (!e) return result;
    addr = e->child;
  }
  result.addr = addr;
  result.golden = is_golden_data(addr);
  return result;
}

BlockAddress MappingStore::allocate_index_block(IoContext& ctx, ImageState& img) {
  PlacementKey key{img.id, img.head_seq, BlockKind::kIndex, img.node_serial++, 0};
  return cluster_.allocate(key, ctx);
}

BlockAddress MappingStore::make_writeable(IoContext& ctx, ImageState& img,
                                          const BlockAddress& addr, MapWriteResult& result) {
  if (img.dirty.contains(addr)) return addr;
  IndexNode copy = load_node(ctx, &img, addr);
  const bool own = copy.owner_seq == img.head_seq;
  if (!own && owned_by(img.id, copy.owner_seq)) img.orphan_candidates.insert(addr);
  copy.owner_seq = img.head_seq;
  if (!own) {
    for (auto& e : copy.entries) e.mode = LinkMode::kReadOnly;
  }
  const auto fresh = allocate_index_block(ctx, img);
  img.dirty.emplace(fresh, std::move(copy));
  img.index_replace(addr, fresh);
  ++result.nodes_copied;
  nodes_copied_.fetch_add(1);
  // A persisted node of the head itself is referenced by nothing else.
  if (own) cluster_.release(addr, ctx);
  return fresh;
}

MapWriteResult MappingStore::map_write(IoContext& ctx, VersionId version, std::uint64_t vblock,
                                       const BlockAddress& data) {
  auto& img = image_state(version.image);
  std::unique_lock img_lock(img.mu);
  if (version.seq != img.head_seq) {
    const auto rec = record_copy(version.seq);
    if (rec.id != version || rec.deleted) {
      throw Error(ErrorCode::kNotFound, fmt::format("version {} does not exist", version.seq));
    }
    throw Error(ErrorCode::kReadOnly,
                fmt::format("version {} is read-only; snapshot the head first", version.seq));
  }
  if (vblock >= img.capacity) {
    throw Error(ErrorCode::kRange, fmt::format("vblock {} beyond capacity {}", vblock,
                                               img.capacity));
  }

  MapWriteResult result;
  const auto rec = record_copy(img.head_seq);
  BlockAddress root;
  if (!rec.root) {
    root = allocate_index_block(ctx, img);
    img.dirty.emplace(root, IndexNode{IndexLevel::kRoot, img.head_seq, {}});
    img.index_replace(std::nullopt, root);
    ++result.nodes_created;
  } else {
    root = make_writeable(ctx, img, *rec.root, result);
  }
  if (!rec.root || root != *rec.root) {
    std::unique_lock lock(mu_);
    record_ref(img.head_seq).root = root;
  }

  std::uint64_t keys[3];
  key_spans(img, vblock, keys);
  BlockAddress cur = root;
  for (int level = 0; level < kIndexDepth - 1; ++level) {
    const IndexEntry* e = img.dirty.at(cur).find(keys[level]);
    BlockAddress child;
    if (!e) {
      child = allocate_index_block(ctx, img);
      img.dirty.emplace(child, IndexNode{static_cast<IndexLevel>(level + 1), img.head_seq, {}});
      img.index_replace(std::nullopt, child);
      ++result.nodes_created;
    } else {
      child = make_writeable(ctx, img, e->child, result);
    }
    img.dirty.at(cur).upsert({keys[level], child, LinkMode::kWriteable});
    cur = child;
  }

  IndexNode& leaf = img.dirty.at(cur);
  if (const IndexEntry* e = leaf.find(vblock); e && e->child != data) {
    if (e->mode == LinkMode::kWriteable) {
      result.superseded = e->child;
    } else if (!is_golden_data(e->child)) {
      img.orphan_candidates.insert(e->child);
    }
  }
  leaf.upsert({vblock, data, LinkMode::kWriteable});
  nodes_created_.fetch_add(result.nodes_created);
  if (result.superseded) cluster_.release(*result.superseded, ctx);
  return result;
}

void MappingStore::commit_locked(IoContext& ctx, ImageState& img) {
  if (img.dirty.empty()) return;
  std::vector<std::pair<BlockAddress, Bytes>> blocks;
  blocks.reserve(img.dirty.size());
  for (const auto& [addr, node] : img.dirty) {
    blocks.emplace_back(addr, serialize_index_node(node, img.block_size));
  }
  std::sort(blocks.begin(), blocks.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  if (ctx.index_cache) {
    for (const auto& [addr, bytes] : blocks) ctx.index_cache->admit(addr, bytes);
  }
  nodes_committed_.fetch_add(blocks.size());
  cluster_.write_batch(std::move(blocks), ctx);
  img.dirty.clear();
}

void MappingStore::commit(IoContext& ctx, ImageId image) {
  auto& img = image_state(image);
  std::unique_lock img_lock(img.mu);
  commit_locked(ctx, img);
}

VersionId MappingStore::snapshot_locked(IoContext& ctx, ImageState& img, VersionCause cause) {
  const auto old_seq = img.head_seq;
  const auto rec = record_copy(old_seq);

  IndexNode root{IndexLevel::kRoot, 0, {}};
  if (rec.root) {
    if (auto it = img.dirty.find(*rec.root); it != img.dirty.end()) {
      root = it->second;
    } else {
      root = load_node(ctx, &img, *rec.root);
    }
    for (auto& e : root.entries) e.mode = LinkMode::kReadOnly;
  }
  commit_locked(ctx, img);

  std::uint64_t new_seq;
  {
    std::unique_lock lock(mu_);
    new_seq = next_seq_++;
  }
  img.head_seq = new_seq;
  root.owner_seq = new_seq;
  const auto addr = allocate_index_block(ctx, img);
  img.dirty.emplace(addr, std::move(root));
  img.index_replace(rec.root, addr);
  img.log.push_back(new_seq);
  nodes_created_.fetch_add(1);
  snapshots_.fetch_add(1);

  VersionRecord next;
  next.id = VersionId{img.id, new_seq};
  next.parent = old_seq;
  next.root = addr;
  next.writeable = true;
  next.cause = cause;
  next.created_at = ctx.clock;
  std::unique_lock lock(mu_);
  record_ref(old_seq).writeable = false;
  versions_.emplace(new_seq, next);
  return next.id;
}

VersionId MappingStore::snapshot(IoContext& ctx, VersionId version, VersionCause cause) {
  auto& img = image_state(version.image);
  std::unique_lock img_lock(img.mu);
  if (version.seq != img.head_seq) {
    const auto rec = record_copy(version.seq);
    if (rec.id != version || rec.deleted) {
      throw Error(ErrorCode::kNotFound, fmt::format("version {} does not exist", version.seq));
    }
    throw Error(ErrorCode::kReadOnly,
                fmt::format("version {} is not the writeable head", version.seq));
  }
  return snapshot_locked(ctx, img, cause);
}

VersionId MappingStore::freeze_golden(IoContext& ctx, ImageId image) {
  auto& img = image_state(image);
  std::unique_lock img_lock(img.mu);
  const VersionId frozen{img.id, img.head_seq};
  snapshot_locked(ctx, img, VersionCause::kExplicitSnapshot);

  Reachable reach;
  const auto rec = record_copy(frozen.seq);
  if (rec.root) traverse(ctx, &img, *rec.root, reach, nullptr, {});

  std::unique_lock lock(mu_);
  record_ref(frozen.seq).golden = true;
  golden_data_.insert(reach.data.begin(), reach.data.end());
  golden_index_[frozen.seq] = std::move(reach.index);
  return frozen;
}

void MappingStore::traverse(IoContext& ctx, const ImageState* img, const BlockAddress& root,
                            Reachable& out, const Reachable* stop_at,
                            const std::function<bool(std::uint64_t)>& owned_filter) const {
  std::vector<BlockAddress> stack{root};
  std::unordered_set<BlockAddress> visited;
  while (!stack.empty()) {
    const auto addr = stack.back();
    stack.pop_back();
    if (!visited.insert(addr).second) continue;
    if (stop_at && stop_at->index.contains(addr)) continue;
    const IndexNode node = load_node(ctx, img, addr);
    const bool owned = !owned_filter || owned_filter(node.owner_seq);
    if (!owned) continue;
    out.index.insert(addr);
    for (const auto& e : node.entries) {
      if (node.level == IndexLevel::kLeaf) {
        out.data.insert(e.child);
      } else {
        stack.push_back(e.child);
      }
    }
  }
}

MappingStore::Reachable MappingStore::reachable(IoContext& ctx, VersionId version) const {
  const auto& img = image_state(version.image);
  std::shared_lock img_lock(img.mu);
  const auto rec = record_copy(version.seq);
  Reachable out;
  if (rec.root) traverse(ctx, rec.writeable ? &img : nullptr, *rec.root, out, nullptr, {});
  return out;
}

std::uint64_t MappingStore::collect_garbage(IoContext& ctx, ImageId image,
                                            const std::set<VersionId>& retain) {
  auto& img = image_state(image);
  std::unique_lock img_lock(img.mu);
  for (const auto& v : retain) {
    if (v.image != image) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("version {} belongs to another image", v.seq));
    }
    const auto rec = record_copy(v.seq);
    if (rec.deleted) {
      throw Error(ErrorCode::kNotFound, fmt::format("version {} was already collected", v.seq));
    }
  }
  if (!retain.contains(VersionId{image, img.head_seq})) {
    throw Error(ErrorCode::kInvalidArgument, "retain set must include the writeable version");
  }

  std::vector<std::uint64_t> keep;
  std::vector<std::uint64_t> doomed;
  for (const auto seq : img.log) {
    const auto rec = record_copy(seq);
    if (rec.deleted) continue;
    if (rec.golden || retain.contains(rec.id)) {
      keep.push_back(seq);
    } else {
      doomed.push_back(seq);
    }
  }
  if (doomed.empty() && img.orphan_candidates.empty()) return 0;

  Reachable live;
  for (const auto seq : keep) {
    const auto rec = record_copy(seq);
    if (rec.root) traverse(ctx, &img, *rec.root, live, nullptr, {});
  }
  const auto owned_here = [this, image](std::uint64_t owner_seq) {
    return owned_by(image, owner_seq);
  };
  Reachable dead;
  for (const auto seq : doomed) {
    const auto rec = record_copy(seq);
    if (rec.root) traverse(ctx, &img, *rec.root, dead, &live, owned_here);
  }

  std::unordered_set<BlockAddress> doomed_blocks;
  for (const auto& a : dead.index) {
    if (!live.index.contains(a)) doomed_blocks.insert(a);
  }
  for (const auto& a : dead.data) {
    if (!live.data.contains(a) && !is_golden_data(a)) doomed_blocks.insert(a);
  }
  for (const auto& a : img.orphan_candidates) {
    if (!live.index.contains(a) && !live.data.contains(a)) doomed_blocks.insert(a);
  }
  img.orphan_candidates.clear();
  std::vector<BlockAddress> freed(doomed_blocks.begin(), doomed_blocks.end());
  std::sort(freed.begin(), freed.end());
  for (const auto& a : freed) cluster_.release(a, ctx);

  {
    std::unique_lock lock(mu_);
    for (const auto seq : doomed) {
      auto& rec = record_ref(seq);
      rec.deleted = true;
      rec.writeable = false;
    }
    for (const auto seq : keep) {
      auto& rec = record_ref(seq);
      while (rec.parent && versions_.at(*rec.parent).deleted) {
        rec.parent = versions_.at(*rec.parent).parent;
      }
    }
  }
  blocks_reclaimed_.fetch_add(freed.size());
  return freed.size();
}

VersionId MappingStore::head(ImageId image) const {
  const auto& img = image_state(image);
  std::shared_lock img_lock(img.mu);
  return VersionId{image, img.head_seq};
}

ImageInfo MappingStore::image_info(ImageId image) const {
  const auto& img = image_state(image);
  std::shared_lock img_lock(img.mu);
  return ImageInfo{img.id, img.block_size, img.capacity, img.fanout,
                   VersionId{image, img.head_seq}};
}

VersionInfo MappingStore::version_info(VersionId version) const {
  std::shared_lock lock(mu_);
  auto it = versions_.find(version.seq);
  if (it == versions_.end() || it->second.id != version) {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown version {}", version.seq));
  }
  return to_info(it->second);
}

std::vector<VersionInfo> MappingStore::version_log(ImageId image) const {
  const auto& img = image_state(image);
  std::shared_lock img_lock(img.mu);
  std::shared_lock lock(mu_);
  std::vector<VersionInfo> out;
  for (const auto seq : img.log) out.push_back(to_info(versions_.at(seq)));
  return out;
}

bool MappingStore::has_image(ImageId image) const {
  std::shared_lock lock(mu_);
  return images_.contains(image);
}

void MappingStore::acquire_lease(ImageId image, std::uint64_t holder) {
  std::unique_lock lock(mu_);
  if (!images_.contains(image)) {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown image {}", image.value));
  }
  auto [it, inserted] = leases_.emplace(image, holder);
  if (!inserted && it->second != holder) {
    throw Error(ErrorCode::kConflict, fmt::format("image {} is already attached", image.value));
  }
}

void MappingStore::release_lease(ImageId image, std::uint64_t holder) {
  std::unique_lock lock(mu_);
  if (auto it = leases_.find(image); it != leases_.end() && it->second == holder) leases_.erase(it);
}

bool MappingStore::leased(ImageId image) const {
  std::shared_lock lock(mu_);
  return leases_.contains(image);
}

bool MappingStore::is_head_index_block(ImageId image, const BlockAddress& addr) const {
  const auto& img = image_state(image);
  std::lock_guard lock(img.head_index_mu);
  return img.head_index.contains(addr);
}

std::size_t MappingStore::head_index_block_count(ImageId image) const {
  const auto& img = image_state(image);
  std::lock_guard lock(img.head_index_mu);
  return img.head_index.size();
}

bool MappingStore::is_golden_data(const BlockAddress& addr) const {
  std::shared_lock lock(mu_);
  return golden_data_.contains(addr);
}

MappingStats MappingStore::stats() const {
  return MappingStats{nodes_created_.load(), nodes_copied_.load(),   node_fetches_.load(),
                      nodes_committed_.load(), snapshots_.load(), blocks_reclaimed_.load()};
}

}  // namespace hvsto
