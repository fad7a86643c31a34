#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "hvsto/placement.hpp"
#include "hvsto/types.hpp"

namespace hvsto {

enum class IoOp : std::uint8_t { kRead = 0, kWrite = 1, kAlloc = 2, kFree = 3 };
enum class IoStatus : std::uint8_t { kOk = 0, kNotFound = 1, kFull = 2, kError = 3 };

const char* to_string(IoOp op);
const char* to_string(IoStatus status);

struct IoRequest {
  IoOp op = IoOp::kRead;
  std::optional<BlockAddress> addr;        // absent for ALLOC
  std::optional<PlacementKey> alloc_key;   // ALLOC only, selects the node
  std::optional<NodeId> alloc_node;        // ALLOC only, overrides placement
  Bytes payload;                           // WRITE only
  std::uint64_t request_id = 0;
};

struct IoResponse {
  std::uint64_t request_id = 0;
  IoStatus status = IoStatus::kOk;
  Bytes payload;  // READ + OK only
  NodeId served_by = 0;
  std::uint64_t local_id = 0;  // block id touched or allocated
  SimTime completed_at = 0;    // simulation bookkeeping, not on the wire
};

/// Simulated costs in microseconds. A remote request occupies its node for
/// the media time and pays the round trip on top; the node serves one request
/// at a time, starting each in the first idle slot at or after its issue time.
struct CostModel {
  SimTime local_ssd_us = 100;
  SimTime remote_rtt_us = 500;
  SimTime remote_media_us = 5000;
  /// Media time when a READ/WRITE hits the block right after the one the
  /// node served last. Unset means no sequential discount.
  std::optional<SimTime> remote_sequential_media_us;
};

// Wire frames, little-endian:
//   u32 length | u64 request_id | u8 op | u32 node_id | u64 local_id | payload
// `length` counts the bytes after the length field. Responses use the same
// layout with the op byte carrying the IoStatus and node_id the serving node.
inline constexpr std::size_t kFrameHeaderSize = 4 + 8 + 1 + 4 + 8;

Bytes encode_request(const IoRequest& req, NodeId destination);
Bytes encode_response(const IoResponse& resp);

struct DecodedRequest {
  IoRequest request;
  NodeId destination = 0;
};
/// Decodes one complete frame; throws kParse on truncated or oversized input.
DecodedRequest decode_request(std::span<const std::byte> frame);
IoResponse decode_response(std::span<const std::byte> frame, IoOp request_op);

/// One storage daemon: block table plus allocator. Requests are executed
/// under the node's own lock; timing lives in the Cluster.
class StorageNode {
 public:
  StorageNode(NodeId id, std::uint64_t capacity_blocks, std::size_t block_size);

  IoResponse execute(const IoRequest& req);

  NodeId id() const { return id_; }
  std::size_t block_size() const { return block_size_; }
  std::uint64_t live_blocks() const;
  std::uint64_t capacity_blocks() const { return allocator_.capacity(); }

  struct WriteRecord {
    std::uint64_t local_id;
    std::uint64_t generation;
  };
  std::vector<WriteRecord> write_log() const;
  void set_write_logging(bool on);

 private:
  NodeId id_;
  std::size_t block_size_;
  mutable std::mutex mu_;
  BlockAllocator allocator_;
  std::unordered_map<std::uint64_t, Bytes> table_;
  bool log_writes_ = true;
  std::vector<WriteRecord> write_log_;
};

/// Carries a request to the node that executes it.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual IoResponse deliver(NodeId destination, const IoRequest& req) = 0;
};

class InProcessTransport : public Transport {
 public:
  InProcessTransport(const NodeRegistry& registry, std::size_t block_size);
  IoResponse deliver(NodeId destination, const IoRequest& req) override;
  StorageNode* node(NodeId id);

 private:
  std::unordered_map<NodeId, std::unique_ptr<StorageNode>> nodes_;
};

/// The appliance-side view of the shared distributed storage: routes each
/// request to its node, executes it there and accounts simulated time.
class Cluster {
 public:
  Cluster(NodeRegistry registry, std::size_t block_size, CostModel cost = {});
  Cluster(NodeRegistry registry, std::size_t block_size, CostModel cost,
          std::unique_ptr<Transport> transport);
  explicit Cluster(const ClusterConfig& config, CostModel cost = {});
  ~Cluster();

  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  /// Issues one request at ctx.clock and advances ctx.clock to its completion.
  IoResponse dispatch(IoRequest req, IoContext& ctx);
  /// Issues all requests at ctx.clock; nodes serve in parallel, each node in
  /// FIFO order. ctx.clock becomes the latest completion.
  std::vector<IoResponse> dispatch_batch(std::vector<IoRequest> reqs, IoContext& ctx);

  /// Latest completion time observed so far.
  SimTime simulated_now() const { return now_.load(std::memory_order_acquire); }
  /// Clears node queues and the observed clock, for harness setup phases.
  void reset_timing();

  // Throwing convenience wrappers.
  BlockAddress allocate(const PlacementKey& key, IoContext& ctx);
  std::vector<BlockAddress> allocate_batch(std::span<const PlacementKey> keys, IoContext& ctx);
  void write(const BlockAddress& addr, Bytes data, IoContext& ctx);
  void write_batch(std::vector<std::pair<BlockAddress, Bytes>> blocks, IoContext& ctx);
  Bytes read(const BlockAddress& addr, IoContext& ctx);
  void release(const BlockAddress& addr, IoContext& ctx);

  using ReleaseListener = std::function<void(const BlockAddress&)>;
  std::uint64_t add_release_listener(ReleaseListener listener);
  void remove_release_listener(std::uint64_t handle);

  const NodeRegistry& registry() const { return registry_; }
  const CostModel& cost() const { return cost_; }
  std::size_t block_size() const { return block_size_; }
  std::uint64_t dispatched() const { return dispatched_.load(); }

  /// In-process nodes only; nullptr with a custom transport.
  StorageNode* node(NodeId id);

  struct LoggedWrite {
    BlockAddress addr;
    std::uint64_t generation;
  };
  std::vector<LoggedWrite> write_log();

 private:
  struct Lane {
    std::mutex mu;
    std::map<SimTime, SimTime> busy;  // disjoint [start, end), adjacent ones merged
    std::optional<std::uint64_t> last_local_id;

    /// Reserves `length` at the earliest idle slot at or after `issue`.
    SimTime reserve(SimTime issue, SimTime length);
  };

  NodeId route(const IoRequest& req) const;
  IoResponse execute(IoRequest& req, SimTime issue);
  void advance_now(SimTime t);
  void notify_release(const BlockAddress& addr);
  [[noreturn]] void fail(const IoRequest& req, const IoResponse& resp) const;

  NodeRegistry registry_;
  std::size_t block_size_;
  CostModel cost_;
  std::unique_ptr<Transport> transport_;
  InProcessTransport* in_process_ = nullptr;
  std::unordered_map<NodeId, std::unique_ptr<Lane>> lanes_;
  std::atomic<SimTime> now_{0};
  std::atomic<std::uint64_t> next_request_id_{1};
  std::atomic<std::uint64_t> dispatched_{0};

  std::mutex listeners_mu_;
  std::uint64_t next_listener_ = 1;
  std::vector<std::pair<std::uint64_t, ReleaseListener>> listeners_;
};

}  // namespace hvsto
