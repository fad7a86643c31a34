#include "hvsto/node_store.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "byte_io.hpp"

namespace hvsto {

using detail::get_le;
using detail::put_le;

const char* to_string(IoOp op) {
  switch (op) {
    case IoOp::kRead: return "READ";
    case IoOp::kWrite: return "WRITE";
    case IoOp::kAlloc: return "ALLOC";
    case IoOp::kFree: return "FREE";
  }
  return "?";
}

const char* to_string(IoStatus status) {
  switch (status) {
    case IoStatus::kOk: return "OK";
    case IoStatus::kNotFound: return "NOT_FOUND";
    case IoStatus::kFull: return "FULL";
    case IoStatus::kError: return "ERROR";
  }
  return "?";
}

namespace {

Bytes encode_frame(std::uint64_t request_id, std::uint8_t op, NodeId node,
                   std::uint64_t local_id, const Bytes& payload) {
  Bytes out;
  out.reserve(kFrameHeaderSize + payload.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kFrameHeaderSize - 4 + payload.size()));
  put_le<std::uint64_t>(out, request_id);
  put_le<std::uint8_t>(out, op);
  put_le<std::uint32_t>(out, node);
  put_le<std::uint64_t>(out, local_id);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

struct RawFrame {
  std::uint64_t request_id;
  std::uint8_t op;
  NodeId node;
  std::uint64_t local_id;
  std::span<const std::byte> payload;
};

RawFrame decode_frame(std::span<const std::byte> frame) {
  if (frame.size() < kFrameHeaderSize) {
    throw Error(ErrorCode::kParse, fmt::format("frame of {} bytes is shorter than the header",
                                                 frame.size()));
  }
  const auto length = get_le<std::uint32_t>(frame, 0);
  if (length + 4ULL != frame.size()) {
    throw Error(ErrorCode::kParse, fmt::format("frame length field {} does not match {} bytes",
                                                 length, frame.size()));
  }
  return RawFrame{get_le<std::uint64_t>(frame, 4), get_le<std::uint8_t>(frame, 12),
                  get_le<std::uint32_t>(frame, 13), get_le<std::uint64_t>(frame, 17),
                  frame.subspan(kFrameHeaderSize)};
}

}  // namespace

Bytes encode_request(const IoRequest& req, NodeId destination) {
  const std::uint64_t local = req.addr ? req.addr->local_id : 0;
  return encode_frame(req.request_id, static_cast<std::uint8_t>(req.op), destination, local,
                      req.payload);
}

Bytes encode_response(const IoResponse& resp) {
  return encode_frame(resp.request_id, static_cast<std::uint8_t>(resp.status), resp.served_by,
                      resp.local_id, resp.payload);
}

DecodedRequest decode_request(std::span<const std::byte> frame) {
  const auto raw = decode_frame(frame);
  if (raw.op > static_cast<std::uint8_t>(IoOp::kFree)) {
    throw Error(ErrorCode::kParse, fmt::format("unknown op code {}", raw.op));
  }
  DecodedRequest out;
  out.destination = raw.node;
  out.request.request_id = raw.request_id;
  out.request.op = static_cast<IoOp>(raw.op);
  if (out.request.op == IoOp::kAlloc) {
    out.request.alloc_node = raw.node;
  } else {
    out.request.addr = BlockAddress{raw.node, raw.local_id};
  }
  out.request.payload.assign(raw.payload.begin(), raw.payload.end());
  return out;
}

IoResponse decode_response(std::span<const std::byte> frame, IoOp request_op) {
  const auto raw = decode_frame(frame);
  if (raw.op > static_cast<std::uint8_t>(IoStatus::kError)) {
    throw Error(ErrorCode::kParse, fmt::format("unknown status code {}", raw.op));
  }
  IoResponse resp;
  resp.request_id = raw.request_id;
  resp.status = static_cast<IoStatus>(raw.op);
  resp.served_by = raw.node;
  resp.local_id = raw.local_id;
  if (request_op == IoOp::kRead && resp.status == IoStatus::kOk) {
    resp.payload.assign(raw.payload.begin(), raw.payload.end());
  }
  return resp;
}

StorageNode::StorageNode(NodeId id, std::uint64_t capacity_blocks, std::size_t block_size)
    : id_(id), block_size_(block_size), allocator_(capacity_blocks) {}

IoResponse StorageNode::execute(const IoRequest& req) {
  std::lock_guard lock(mu_);
  IoResponse resp;
  resp.request_id = req.request_id;
  resp.served_by = id_;
  if (req.addr) resp.local_id = req.addr->local_id;

  switch (req.op) {
    case IoOp::kAlloc:
      if (allocator_.live_count() >= allocator_.capacity()) {
        resp.status = IoStatus::kFull;
      } else {
        resp.local_id = allocator_.allocate();
      }
      break;
    case IoOp::kFree:
      if (!req.addr || !allocator_.in_use(req.addr->local_id)) {
        resp.status = IoStatus::kError;
      } else {
        allocator_.release(req.addr->local_id);
        table_.erase(req.addr->local_id);
      }
      break;
    case IoOp::kRead:
      if (!req.addr || !allocator_.in_use(req.addr->local_id)) {
        resp.status = IoStatus::kNotFound;
      } else if (auto it = table_.find(req.addr->local_id); it != table_.end()) {
        resp.payload = it->second;
      } else {
        resp.payload.assign(block_size_, std::byte{0});
      }
      break;
    case IoOp::kWrite:
      if (!req.addr || !allocator_.in_use(req.addr->local_id) ||
          req.payload.size() != block_size_) {
        resp.status = IoStatus::kError;
      } else {
        table_[req.addr->local_id] = req.payload;
        if (log_writes_) {
          write_log_.push_back({req.addr->local_id, allocator_.generation(req.addr->local_id)});
        }
      }
      break;
  }
  return resp;
}

std::uint64_t StorageNode::live_blocks() const {
  std::lock_guard lock(mu_);
  return allocator_.live_count();
}

std::vector<StorageNode::WriteRecord> StorageNode::write_log() const {
  std::lock_guard lock(mu_);
  return write_log_;
}

void StorageNode::set_write_logging(bool on) {
  std::lock_guard lock(mu_);
  log_writes_ = on;
}

InProcessTransport::InProcessTransport(const NodeRegistry& registry, std::size_t block_size) {
  for (const auto& n : registry.nodes()) {
    nodes_.emplace(n.id, std::make_unique<StorageNode>(n.id, n.capacity_blocks, block_size));
  }
}

IoResponse InProcessTransport::deliver(NodeId destination, const IoRequest& req) {
  auto it = nodes_.find(destination);
  if (it == nodes_.end()) {
    IoResponse resp;
    resp.request_id = req.request_id;
    resp.status = IoStatus::kError;
    resp.served_by = destination;
    return resp;
  }
  return it->second->execute(req);
}

StorageNode* InProcessTransport::node(NodeId id) {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : it->second.get();
}

Cluster::Cluster(NodeRegistry registry, std::size_t block_size, CostModel cost)
    : Cluster(registry, block_size, cost,
              std::make_unique<InProcessTransport>(registry, block_size)) {}

Cluster::Cluster(NodeRegistry registry, std::size_t block_size, CostModel cost,
                 std::unique_ptr<Transport> transport)
    : registry_(std::move(registry)),
      block_size_(block_size),
      cost_(cost),
      transport_(std::move(transport)) {
  if (!valid_block_size(block_size_)) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("unsupported block size {}", block_size_));
  }
  in_process_ = dynamic_cast<InProcessTransport*>(transport_.get());
  for (const auto& n : registry_.nodes()) lanes_.emplace(n.id, std::make_unique<Lane>());
}

Cluster::Cluster(const ClusterConfig& config, CostModel cost)
    : Cluster(config.registry(), config.block_size, cost) {}

Cluster::~Cluster() = default;

NodeId Cluster::route(const IoRequest& req) const {
  if (req.op == IoOp::kAlloc) {
    if (req.alloc_node) return *req.alloc_node;
    if (req.alloc_key) return place(*req.alloc_key, registry_);
    return registry_.at_index(0).id;
  }
  return req.addr ? req.addr->node_id : registry_.at_index(0).id;
}

IoResponse Cluster::execute(IoRequest& req, SimTime issue) {
  if (req.request_id == 0) req.request_id = next_request_id_.fetch_add(1);
  dispatched_.fetch_add(1, std::memory_order_relaxed);

  const NodeId dest = route(req);
  auto lane_it = lanes_.find(dest);
  if (lane_it == lanes_.end()) {
    IoResponse resp;
    resp.request_id = req.request_id;
    resp.status = IoStatus::kError;
    resp.served_by = dest;
    resp.completed_at = issue;
    return resp;
  }
  Lane& lane = *lane_it->second;
  std::lock_guard lock(lane.mu);
  IoResponse resp = transport_->deliver(dest, req);

  SimTime media = cost_.remote_media_us;
  const bool positional = req.op == IoOp::kRead || req.op == IoOp::kWrite;
  if (positional && cost_.remote_sequential_media_us && lane.last_local_id &&
      resp.local_id == *lane.last_local_id + 1) {
    media = *cost_.remote_sequential_media_us;
  }
  if (positional) lane.last_local_id = resp.local_id;
  const SimTime start = lane.reserve(issue, media);
  resp.completed_at = start + media + cost_.remote_rtt_us;
  advance_now(resp.completed_at);
  return resp;
}

SimTime Cluster::Lane::reserve(SimTime issue, SimTime length) {
  SimTime start = issue;
  auto next = busy.upper_bound(start);
  if (next != busy.begin()) {
    const auto prev = std::prev(next);
    start = std::max(start, prev->second);
  }
  while (next != busy.end() && next->first < start + length) {
    start = std::max(start, next->second);
    ++next;
  }
  if (length == 0) return start;
  const SimTime end = start + length;
  // Merge with the neighbours it touches.
  auto right = busy.find(end);
  SimTime merged_end = end;
  if (right != busy.end()) {
    merged_end = right->second;
    busy.erase(right);
  }
  auto after = busy.upper_bound(start);
  if (after != busy.begin()) {
    const auto left = std::prev(after);
    if (left->second == start) {
      left->second = merged_end;
      return start;
    }
  }
  busy.emplace(start, merged_end);
  return start;
}

void Cluster::advance_now(SimTime t) {
  SimTime cur = now_.load(std::memory_order_relaxed);
  while (cur < t && !now_.compare_exchange_weak(cur, t, std::memory_order_acq_rel)) {
  }
}

IoResponse Cluster::dispatch(IoRequest req, IoContext& ctx) {
  IoResponse resp = execute(req, ctx.clock);
  ctx.clock = std::max(ctx.clock, resp.completed_at);
  return resp;
}

std::vector<IoResponse> Cluster::dispatch_batch(std::vector<IoRequest> reqs, IoContext& ctx) {
  std::vector<IoResponse> out;
  out.reserve(reqs.size());
  SimTime done = ctx.clock;
  for (auto& r : reqs) {
    out.push_back(execute(r, ctx.clock));
    done = std::max(done, out.back().completed_at);
  }
  ctx.clock = done;
  return out;
}

void Cluster::reset_timing() {
  for (auto& [id, lane] : lanes_) {
    std::lock_guard lock(lane->mu);
    lane->busy.clear();
    lane->last_local_id.reset();
  }
  now_.store(0);
}

void Cluster::fail(const IoRequest& req, const IoResponse& resp) const {
  const auto where = req.addr ? to_string(*req.addr) : fmt::format("node {}", resp.served_by);
  const auto msg = fmt::format("{} {} failed: {}", to_string(req.op), where,
                               to_string(resp.status));
  switch (resp.status) {
    case IoStatus::kNotFound: throw Error(ErrorCode::kNotFound, msg);
    case IoStatus::kFull: throw Error(ErrorCode::kFull, msg);
    default:
      throw Error(req.op == IoOp::kFree ? ErrorCode::kDoubleFree : ErrorCode::kIo, msg);
  }
}

BlockAddress Cluster::allocate(const PlacementKey& key, IoContext& ctx) {
  std::vector<PlacementKey> one{key};
  return allocate_batch(one, ctx).front();
}

std::vector<BlockAddress> Cluster::allocate_batch(std::span<const PlacementKey> keys,
                                                  IoContext& ctx) {
  std::vector<IoRequest> reqs;
  reqs.reserve(keys.size());
  for (const auto& k : keys) {
    IoRequest r;
    r.op = IoOp::kAlloc;
    r.alloc_key = k;
    reqs.push_back(std::move(r));
  }
  auto resps = dispatch_batch(std::move(reqs), ctx);
  std::vector<BlockAddress> out;
  out.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    IoResponse resp = std::move(resps[i]);
    // A full node hands the request on to its ring successor.
    NodeId node = resp.served_by;
    for (std::size_t tries = 1; resp.status == IoStatus::kFull && tries < registry_.size();
         ++tries) {
      node = registry_.next(node);
      IoRequest retry;
      retry.op = IoOp::kAlloc;
      retry.alloc_node = node;
      resp = dispatch(std::move(retry), ctx);
    }
    if (resp.status != IoStatus::kOk) {
      IoRequest r;
      r.op = IoOp::kAlloc;
      fail(r, resp);
    }
    out.push_back(BlockAddress{resp.served_by, resp.local_id});
  }
  return out;
}

void Cluster::write(const BlockAddress& addr, Bytes data, IoContext& ctx) {
  std::vector<std::pair<BlockAddress, Bytes>> one;
  one.emplace_back(addr, std::move(data));
  write_batch(std::move(one), ctx);
}

void Cluster::write_batch(std::vector<std::pair<BlockAddress, Bytes>> blocks, IoContext& ctx) {
  std::vector<IoRequest> reqs;
  reqs.reserve(blocks.size());
  for (auto& [addr, data] : blocks) {
    IoRequest r;
    r.op = IoOp::kWrite;
    r.addr = addr;
    r.payload = std::move(data);
    reqs.push_back(std::move(r));
  }
  auto resps = dispatch_batch(reqs, ctx);
  for (std::size_t i = 0; i < resps.size(); ++i) {
    if (resps[i].status != IoStatus::kOk) fail(reqs[i], resps[i]);
  }
}

Bytes Cluster::read(const BlockAddress& addr, IoContext& ctx) {
  IoRequest r;
  r.op = IoOp::kRead;
  r.addr = addr;
  auto resp = dispatch(r, ctx);
  if (resp.status != IoStatus::kOk) fail(r, resp);
  return std::move(resp.payload);
}

void Cluster::release(const BlockAddress& addr, IoContext& ctx) {
  IoRequest r;
  r.op = IoOp::kFree;
  r.addr = addr;
  auto resp = dispatch(r, ctx);
  if (resp.status != IoStatus::kOk) fail(r, resp);
  notify_release(addr);
}

std::uint64_t Cluster::add_release_listener(ReleaseListener listener) {
  std::lock_guard lock(listeners_mu_);
  const auto handle = next_listener_++;
  listeners_.emplace_back(handle, std::move(listener));
  return handle;
}

void Cluster::remove_release_listener(std::uint64_t handle) {
  std::lock_guard lock(listeners_mu_);
  std::erase_if(listeners_, [&](const auto& p) { return p.first == handle; });
}

void Cluster::notify_release(const BlockAddress& addr) {
  std::lock_guard lock(listeners_mu_);
  for (const auto& [handle, fn] : listeners_) fn(addr);
}

StorageNode* Cluster::node(NodeId id) {
  return in_process_ ? in_process_->node(id) : nullptr;
}

std::vector<Cluster::LoggedWrite> Cluster::write_log() {
  std::vector<LoggedWrite> out;
  if (!in_process_) return out;
  for (const auto& n : registry_.nodes()) {
    for (const auto& rec : in_process_->node(n.id)->write_log()) {
      out.push_back({BlockAddress{n.id, rec.local_id}, rec.generation});
    }
  }
  return out;
}

}  // namespace hvsto
