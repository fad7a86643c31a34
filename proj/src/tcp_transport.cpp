#include "hvsto/tcp_transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <fmt/format.h>

#include "byte_io.hpp"

namespace hvsto {

namespace {

[[noreturn]] void sys_fail(const char* what) {
  throw Error(ErrorCode::kIo, fmt::format("{}: {}", what, std::strerror(errno)));
}

bool read_exact(int fd, std::byte* buf, std::size_t n) {
  while (n > 0) {
    const auto got = ::recv(fd, buf, n, 0);
    if (got == 0) return false;
    if (got < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    buf += got;
    n -= static_cast<std::size_t>(got);
  }
  return true;
}

bool write_all(int fd, const Bytes& data) {
  const std::byte* p = data.data();
  std::size_t n = data.size();
  while (n > 0) {
    const auto put = ::send(fd, p, n, MSG_NOSIGNAL);
    if (put < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += put;
    n -= static_cast<std::size_t>(put);
  }
  return true;
}

/// Reads one length-prefixed frame, or returns false on EOF.
bool read_frame(int fd, Bytes& frame) {
  frame.resize(4);
  if (!read_exact(fd, frame.data(), 4)) return false;
  const auto length = detail::get_le<std::uint32_t>(frame, 0);
  if (length + 4ULL < kFrameHeaderSize || length > (64U << 20)) {
    throw Error(ErrorCode::kParse, fmt::format("bad frame length {}", length));
  }
  frame.resize(4 + std::size_t{length});
  return read_exact(fd, frame.data() + 4, length);
}

}  // namespace

TcpNodeServer::TcpNodeServer(NodeId id, std::uint64_t capacity_blocks, std::size_t block_size,
                             std::uint16_t port)
    : node_(id, capacity_blocks, block_size) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) sys_fail("socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(listen_fd_);
    sys_fail("bind");
  }
  if (::listen(listen_fd_, 16) < 0) {
    ::close(listen_fd_);
    sys_fail("listen");
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpNodeServer::~TcpNodeServer() { stop(); }

void TcpNodeServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mu_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

void TcpNodeServer::accept_loop() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(workers_mu_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

void TcpNodeServer::serve(int fd) {
  Bytes frame;
  try {
    while (read_frame(fd, frame)) {
      const auto decoded = decode_request(frame);
      IoResponse resp;
      if (decoded.destination != node_.id()) {
        resp.request_id = decoded.request.request_id;
        resp.status = IoStatus::kError;
        resp.served_by = node_.id();
      } else {
        resp = node_.execute(decoded.request);
      }
      if (!write_all(fd, encode_response(resp))) break;
    }
  } catch (const Error&) {
    // Malformed input ends the connection.
  }
  std::lock_guard lock(workers_mu_);
  std::erase(client_fds_, fd);
  ::close(fd);
}

TcpTransport::TcpTransport(const NodeRegistry& registry) {
  for (const auto& n : registry.nodes()) {
    const auto colon = n.endpoint.rfind(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("node {} endpoint '{}' is not host:port", n.id, n.endpoint));
    }
    const auto host = n.endpoint.substr(0, colon);
    const auto port = static_cast<std::uint16_t>(std::stoul(n.endpoint.substr(colon + 1)));
    auto conn = std::make_unique<Connection>();
    conn->fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (conn->fd < 0) sys_fail("socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(conn->fd);
      throw Error(ErrorCode::kInvalidArgument, fmt::format("bad IPv4 address '{}'", host));
    }
    if (::connect(conn->fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      ::close(conn->fd);
      sys_fail("connect");
    }
    int one = 1;
    ::setsockopt(conn->fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    conns_.emplace(n.id, std::move(conn));
  }
}

TcpTransport::~TcpTransport() {
  for (auto& [id, c] : conns_) ::close(c->fd);
}

IoResponse TcpTransport::deliver(NodeId destination, const IoRequest& req) {
  auto it = conns_.find(destination);
  if (it == conns_.end()) {
    IoResponse resp;
    resp.request_id = req.request_id;
    resp.status = IoStatus::kError;
    resp.served_by = destination;
    return resp;
  }
  auto& conn = *it->second;
  std::lock_guard lock(conn.mu);
  if (!write_all(conn.fd, encode_request(req, destination))) sys_fail("send");
  Bytes frame;
  if (!read_frame(conn.fd, frame)) {
    throw Error(ErrorCode::kIo, fmt::format("node {} closed the connection", destination));
  }
  return decode_response(frame, req.op);
}

}  // namespace hvsto
