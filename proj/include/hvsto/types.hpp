#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hvsto {

using SimTime = std::uint64_t;  // simulated microseconds
using NodeId = std::uint32_t;
using Bytes = std::vector<std::byte>;

enum class ErrorCode {
  kInvalidArgument,
  kCapacity,
  kNotFound,
  kReadOnly,
  kConflict,
  kRange,
  kFull,
  kDoubleFree,
  kParse,
  kIo,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct ImageId {
  std::uint64_t value = 0;
  auto operator<=>(const ImageId&) const = default;
};

/// Identifies one version of one image. Sequence numbers are drawn from a
/// store-wide counter and never reused.
struct VersionId {
  ImageId image;
  std::uint64_t seq = 0;
  auto operator<=>(const VersionId&) const = default;
};

struct BlockAddress {
  NodeId node_id = 0;
  std::uint64_t local_id = 0;
  auto operator<=>(const BlockAddress&) const = default;
};

std::string to_string(const BlockAddress& addr);

/// Simulated-time lane for one issuer (a VM session, a prefetcher, an admin
/// task). Operations charge their cost to `clock`.
struct IoContext {
  SimTime clock = 0;
  std::uint64_t index_fetches = 0;
  class IndexBlockCache* index_cache = nullptr;
};

/// Read-through cache slot for serialized index nodes, consulted by the
/// mapping layer. A hit charges the caller's context.
class IndexBlockCache {
 public:
  virtual ~IndexBlockCache() = default;
  virtual std::optional<Bytes> lookup(const BlockAddress& addr, IoContext& ctx) = 0;
  virtual void admit(const BlockAddress& addr, const Bytes& block) = 0;
  virtual void invalidate(const BlockAddress& addr) = 0;
};

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace hvsto

template <>
struct std::hash<hvsto::BlockAddress> {
  std::size_t operator()(const hvsto::BlockAddress& a) const noexcept {
    return hvsto::mix64((static_cast<std::uint64_t>(a.node_id) << 48) ^ a.local_id);
  }
};

template <>
struct std::hash<hvsto::ImageId> {
  std::size_t operator()(const hvsto::ImageId& id) const noexcept {
    return hvsto::mix64(id.value);
  }
};
