#include "hvsto/appliance.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>

#include <fmt/format.h>

namespace hvsto {

namespace {

std::atomic<std::uint64_t> next_holder{1};

VersionCause version_cause(FlushCause cause) {
  return cause == FlushCause::kFull ? VersionCause::kWriteCacheFlush
                                    : VersionCause::kRewriteAvoidance;
}

}  // namespace

Appliance::Appliance(Cluster& cluster, MappingStore& mapping, CacheConfig config)
    : cluster_(cluster),
      mapping_(mapping),
      config_(config),
      block_size_(cluster.block_size()),
      holder_id_(next_holder.fetch_add(1)),
      metadata_(config.metadata_enabled
                    ? config.partition_blocks(Partition::kMetadata, cluster.block_size())
                    : 0,
                cluster.block_size(), cluster.cost().local_ssd_us),
      image_(config.image_enabled ? config.partition_blocks(Partition::kImage, cluster.block_size())
                                  : 0,
             cluster.block_size(), config.lirs_hir_fraction) {
  config_.validate();
  metadata_.set_protection([this](const BlockAddress& a) { return protects(a); });
  listener_ = cluster_.add_release_listener([this](const BlockAddress& a) {
    metadata_.invalidate(a);
    image_.invalidate(a);
  });
}

Appliance::~Appliance() {
  cluster_.remove_release_listener(listener_);
  std::lock_guard lock(mu_);
  for (auto& [id, s] : sessions_) mapping_.release_lease(s->image(), holder_id_);
}

bool Appliance::protects(const BlockAddress& addr) const {
  std::lock_guard lock(protect_mu_);
  for (const auto& image : attached_images_) {
    if (mapping_.is_head_index_block(image, addr)) return true;
  }
  return false;
}

VDiskSession& Appliance::attach(const std::string& vm_id, ImageId image, SimTime now) {
  std::lock_guard lock(mu_);
  if (sessions_.contains(vm_id)) {
    throw Error(ErrorCode::kConflict, fmt::format("VM {} is already attached", vm_id));
  }
  const auto info = mapping_.image_info(image);
  mapping_.acquire_lease(image, holder_id_);
  auto s = std::unique_ptr<VDiskSession>(new VDiskSession(
      vm_id, image, info.head, info.block_size, info.capacity,
      config_.prefetch_enabled ? config_.prefetch_window : 0));
  s->ctx_.clock = now;
  s->ctx_.index_cache = config_.metadata_enabled ? &metadata_ : nullptr;
  auto& ref = *s;
  sessions_.emplace(vm_id, std::move(s));
  {
    std::lock_guard plock(protect_mu_);
    attached_images_.insert(image);
  }
  rebalance_locked();
  return ref;
}

void Appliance::rebalance_locked() {
  if (sessions_.empty()) return;
  const auto active_blocks = config_.partition_blocks(Partition::kActive, block_size_);
  const auto share = active_blocks / sessions_.size();
  const auto write = std::min<std::uint64_t>(config_.write_buffer_bytes / block_size_, share);
  const auto read = config_.active_read_enabled ? share - write : 0;
  for (auto& [id, s] : sessions_) {
    s->active_.resize(read, write);
    if (s->active_.over_write_limit()) flush_locked(*s, FlushCause::kFull);
  }
}

void Appliance::check_block(const VDiskSession& s, std::uint64_t vblock, std::size_t size) const {
  if (vblock >= s.capacity_) {
    throw Error(ErrorCode::kRange,
                fmt::format("vblock {} beyond capacity {}", vblock, s.capacity_));
  }
  if (size != s.block_size_) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("block of {} bytes, expected {}", size, s.block_size_));
  }
}

Bytes Appliance::read_block(VDiskSession& s, std::uint64_t vblock) {
  std::lock_guard lock(mu_);
  return read_block_locked(s, vblock);
}

Bytes Appliance::read_block_locked(VDiskSession& s, std::uint64_t vblock) {
  check_block(s, vblock, s.block_size_);
  const auto ssd = cluster_.cost().local_ssd_us;
  auto& ctx = s.ctx_;
  auto& stats = s.active_.stats();

  Bytes out;
  if (const Bytes* b = s.active_.buffered(vblock)) {
    ++stats.hits;
    ctx.clock += ssd;
    out = *b;
  } else if (auto c = s.active_.cached(vblock)) {
    ++stats.hits;
    ctx.clock = std::max(ctx.clock, c->ready_at) + ssd;
    out = std::move(c->data);
  } else {
    if (config_.active_read_enabled) ++stats.misses;
    const auto hit = mapping_.lookup(ctx, s.head_, vblock);
    if (!hit.addr) {
      out.assign(s.block_size_, std::byte{0});
    } else if (hit.golden && config_.image_enabled) {
      if (auto g = image_.get(*hit.addr)) {
        ctx.clock = std::max(ctx.clock, g->ready_at) + ssd;
        out = std::move(g->data);
      } else {
        out = cluster_.read(*hit.addr, ctx);
        image_.put(*hit.addr, CachedBlock{out, ctx.clock});
      }
    } else {
      out = cluster_.read(*hit.addr, ctx);
      s.active_.insert(vblock, CachedBlock{out, ctx.clock});
    }
  }
  if (config_.prefetch_enabled) {
    const auto ahead = s.active_.note_read(vblock, s.capacity_);
    if (!ahead.empty()) prefetch_locked(s, ahead);
  }
  return out;
}

void Appliance::prefetch_locked(VDiskSession& s, const std::vector<std::uint64_t>& vblocks) {
  // Prefetches run on their own lane: the VM does not wait for them, but
  // they occupy the storage nodes like any other request.
  IoContext lane{s.ctx_.clock, 0, s.ctx_.index_cache};
  std::vector<std::uint64_t> targets;
  std::vector<BlockAddress> addrs;
  std::vector<bool> golden;
  for (const auto v : vblocks) {
    const auto hit = mapping_.lookup(lane, s.head_, v);
    if (!hit.addr) continue;
    const bool to_image = hit.golden && config_.image_enabled;
    if (to_image && image_.contains(*hit.addr)) continue;
    targets.push_back(v);
    addrs.push_back(*hit.addr);
    golden.push_back(to_image);
  }
  if (targets.empty()) return;
  std::vector<IoRequest> reqs;
  reqs.reserve(addrs.size());
  for (const auto& a : addrs) {
    IoRequest r;
    r.op = IoOp::kRead;
    r.addr = a;
    reqs.push_back(std::move(r));
  }
  auto resps = cluster_.dispatch_batch(std::move(reqs), lane);
  for (std::size_t i = 0; i < resps.size(); ++i) {
    if (resps[i].status != IoStatus::kOk) continue;
    CachedBlock block{std::move(resps[i].payload), resps[i].completed_at};
    if (golden[i]) {
      image_.put(addrs[i], std::move(block));
    } else {
      s.active_.insert(targets[i], std::move(block));
    }
    ++prefetched_;
  }
}

void Appliance::write_block(VDiskSession& s, std::uint64_t vblock, Bytes block) {
  std::lock_guard lock(mu_);
  write_block_locked(s, vblock, std::move(block));
}

void Appliance::write_block_locked(VDiskSession& s, std::uint64_t vblock, Bytes block) {
  check_block(s, vblock, block.size());
  s.ctx_.clock += cluster_.cost().local_ssd_us;
  if (s.active_.buffer(vblock, std::move(block))) flush_locked(s, FlushCause::kFull);
}

Bytes Appliance::read(VDiskSession& s, std::uint64_t offset, std::uint64_t length) {
  std::lock_guard lock(mu_);
  if (offset + length > s.capacity_ * s.block_size_ || offset + length < offset) {
    throw Error(ErrorCode::kRange,
                fmt::format("range [{}, {}) beyond the disk", offset, offset + length));
  }
  Bytes out;
  out.reserve(length);
  const auto bs = s.block_size_;
  for (std::uint64_t pos = offset; pos < offset + length;) {
    const auto vblock = pos / bs;
    const auto within = pos % bs;
    const auto n = std::min<std::uint64_t>(bs - within, offset + length - pos);
    const Bytes block = read_block_locked(s, vblock);
    out.insert(out.end(), block.begin() + static_cast<std::ptrdiff_t>(within),
               block.begin() + static_cast<std::ptrdiff_t>(within + n));
    pos += n;
  }
  return out;
}

void Appliance::write(VDiskSession& s, std::uint64_t offset, std::span<const std::byte> data) {
  std::lock_guard lock(mu_);
  const auto end = offset + data.size();
  if (end > s.capacity_ * s.block_size_ || end < offset) {
    throw Error(ErrorCode::kRange, fmt::format("range [{}, {}) beyond the disk", offset, end));
  }
  const auto bs = s.block_size_;
  std::size_t consumed = 0;
  for (std::uint64_t pos = offset; pos < end;) {
    const auto vblock = pos / bs;
    const auto within = pos % bs;
    const auto n = std::min<std::uint64_t>(bs - within, end - pos);
    Bytes block;
    if (n == bs) {
      block.assign(data.begin() + static_cast<std::ptrdiff_t>(consumed),
                   data.begin() + static_cast<std::ptrdiff_t>(consumed + n));
    } else {
      block = read_block_locked(s, vblock);
      std::memcpy(block.data() + within, data.data() + consumed, n);
    }
    write_block_locked(s, vblock, std::move(block));
    consumed += n;
    pos += n;
  }
}

void Appliance::persist_buffer_locked(VDiskSession& s) {
  auto pending = s.active_.drain();
  if (pending.empty()) return;
  std::vector<PlacementKey> keys;
  keys.reserve(pending.size());
  for (const auto& [v, bytes] : pending) {
    keys.push_back(PlacementKey{s.image_, s.head_.seq, BlockKind::kData, v, s.alloc_serial_++});
  }
  const auto addrs = cluster_.allocate_batch(keys, s.ctx_);
  std::vector<std::pair<BlockAddress, Bytes>> blocks;
  blocks.reserve(pending.size());
  std::size_t i = 0;
  for (auto& [v, bytes] : pending) blocks.emplace_back(addrs[i++], std::move(bytes));
  cluster_.write_batch(std::move(blocks), s.ctx_);
  i = 0;
  for (const auto& [v, bytes] : pending) {
    mapping_.map_write(s.ctx_, s.head_, v, addrs[i++]);
    s.active_.invalidate(v);
  }
}

std::optional<VersionId> Appliance::flush(VDiskSession& s, FlushCause cause) {
  std::lock_guard lock(mu_);
  return flush_locked(s, cause);
}

std::optional<VersionId> Appliance::flush_locked(VDiskSession& s, FlushCause cause) {
  if (s.active_.buffer_blocks() == 0) return std::nullopt;
  s.head_ = mapping_.snapshot(s.ctx_, s.head_, version_cause(cause));
  persist_buffer_locked(s);
  switch (cause) {
    case FlushCause::kFull: ++flush_full_; break;
    case FlushCause::kSave: ++flush_save_; break;
    case FlushCause::kMigrate: ++flush_migrate_; break;
  }
  return s.head_;
}

VersionId Appliance::snapshot(VDiskSession& s) {
  std::lock_guard lock(mu_);
  persist_buffer_locked(s);
  s.head_ = mapping_.snapshot(s.ctx_, s.head_, VersionCause::kExplicitSnapshot);
  return s.head_;
}

VersionId Appliance::save_or_migrate(VDiskSession& s, FlushCause cause) {
  std::lock_guard lock(mu_);
  flush_locked(s, cause);
  mapping_.commit(s.ctx_, s.image_);
  const auto head = s.head_;
  const auto image = s.image_;
  const auto& st = s.active_.stats();
  retired_active_.hits += st.hits;
  retired_active_.misses += st.misses;
  retired_active_.evictions += st.evictions;
  retired_active_.invalidations += st.invalidations;
  {
    std::lock_guard plock(protect_mu_);
    attached_images_.erase(image);
  }
  mapping_.release_lease(image, holder_id_);
  sessions_.erase(s.vm_id_);
  rebalance_locked();
  return head;
}

std::size_t Appliance::attached() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

VDiskSession* Appliance::session(const std::string& vm_id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(vm_id);
  return it == sessions_.end() ? nullptr : it->second.get();
}

PartitionUsage Appliance::usage() const {
  std::lock_guard lock(mu_);
  PartitionUsage u;
  u.metadata_bytes = metadata_.bytes();
  u.image_bytes = image_.bytes();
  for (const auto& [id, s] : sessions_) u.active_bytes += s->active_.bytes();
  u.metadata_capacity = config_.partition_blocks(Partition::kMetadata, block_size_) * block_size_;
  u.image_capacity = config_.partition_blocks(Partition::kImage, block_size_) * block_size_;
  u.active_capacity = config_.partition_blocks(Partition::kActive, block_size_) * block_size_;
  return u;
}

CacheStats Appliance::stats() const {
  std::lock_guard lock(mu_);
  CacheStats out;
  out.metadata = metadata_.stats();
  out.image = image_.stats();
  out.active = retired_active_;
  for (const auto& [id, s] : sessions_) {
    const auto& st = s->active_.stats();
    out.active.hits += st.hits;
    out.active.misses += st.misses;
    out.active.evictions += st.evictions;
    out.active.invalidations += st.invalidations;
  }
  out.prefetched = prefetched_;
  out.flush_full = flush_full_;
  out.flush_save = flush_save_;
  out.flush_migrate = flush_migrate_;
  return out;
}

}  // namespace hvsto
