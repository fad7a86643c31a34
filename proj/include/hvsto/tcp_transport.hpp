#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "hvsto/node_store.hpp"

namespace hvsto {

/// Serves one StorageNode over loopback TCP using the frame encoding.
class TcpNodeServer {
 public:
  /// Binds 127.0.0.1 on `port` (0 picks an ephemeral port).
  TcpNodeServer(NodeId id, std::uint64_t capacity_blocks, std::size_t block_size,
                std::uint16_t port = 0);
  ~TcpNodeServer();

  TcpNodeServer(const TcpNodeServer&) = delete;
  TcpNodeServer& operator=(const TcpNodeServer&) = delete;

  std::uint16_t port() const { return port_; }
  StorageNode& node() { return node_; }
  void stop();

 private:
  void accept_loop();
  void serve(int fd);

  StorageNode node_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

/// Client side: one persistent connection per node endpoint ("host:port").
class TcpTransport : public Transport {
 public:
  explicit TcpTransport(const NodeRegistry& registry);
  ~TcpTransport() override;

  IoResponse deliver(NodeId destination, const IoRequest& req) override;

 private:
  struct Connection {
    std::mutex mu;
    int fd = -1;
  };
  std::map<NodeId, std::unique_ptr<Connection>> conns_;
};

}  // namespace hvsto
