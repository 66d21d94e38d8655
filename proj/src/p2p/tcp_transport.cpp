// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/p2p/tcp_transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <stdexcept>

#include "bftflow/common/log.hpp"

namespace bftflow::p2p {

namespace {

bool writeAll(int fd, const std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    auto n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data += n;
    size -= static_cast<std::size_t>(n);
  }
  return true;
}

bool readAll(int fd, std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    auto n = ::recv(fd, data, size, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data += n;
    size -= static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<Envelope> readFrame(int fd) {
  std::uint8_t prefix[4];
  if (!readAll(fd, prefix, 4)) return std::nullopt;
  std::uint32_t len = (std::uint32_t{prefix[0]} << 24) | (std::uint32_t{prefix[1]} << 16) |
                      (std::uint32_t{prefix[2]} << 8) | std::uint32_t{prefix[3]};
  if (len == 0 || len > kMaxFrameSize) return std::nullopt;
  Bytes payload(len);
  if (!readAll(fd, payload.data(), len)) return std::nullopt;
  try {
    return Envelope::fromFramePayload(payload);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

bool waitReadable(int fd, int timeoutMs) {
  pollfd p{fd, POLLIN, 0};
  return ::poll(&p, 1, timeoutMs) > 0;
}

void closeFd(int fd) {
  if (fd >= 0) {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
  }
}

}  // namespace

std::pair<std::string, int> splitAddress(const std::string& address) {
  auto colon = address.rfind(':');
  if (colon == std::string::npos || colon + 1 == address.size()) {
    throw std::invalid_argument("address must be host:port: " + address);
  }
  int port = 0;
  try {
    port = std::stoi(address.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in address: " + address);
  }
  if (port < 0 || port > 65535) throw std::invalid_argument("bad port in address: " + address);
  auto host = address.substr(0, colon);
  if (host.empty()) host = "0.0.0.0";
  return {host, port};
}

struct TcpTransport::Link {
  NodeId id;
  std::string address;
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<Bytes> queue;
  int fd = -1;
  std::uint64_t epoch = 0;
  std::uint64_t dropped = 0;
};

TcpTransport::TcpTransport(NodeId self, KeyPair key, std::vector<PeerDescriptor> peers, std::string listenAddress,
                           Inbox inbox, TcpOptions options)
    : self_(std::move(self)),
      key_(std::move(key)),
      listenAddress_(std::move(listenAddress)),
      inbox_(std::move(inbox)),
      options_(options) {
  for (auto& p : peers) {
    if (keyring_.contains(p.id)) throw std::invalid_argument("duplicate peer id " + p.id);
    keyring_.add(p.id, p.publicKey);
    if (p.id == self_) continue;
    auto link = std::make_shared<Link>();
    link->id = p.id;
    link->address = p.address;
    links_[p.id] = link;
  }
  if (!keyring_.contains(self_)) throw std::invalid_argument("own id missing from peer list");
}

TcpTransport::~TcpTransport() { stop(); }

std::vector<NodeId> TcpTransport::peers() const {
  std::vector<NodeId> ids;
  for (const auto& [id, link] : links_) ids.push_back(id);
  return ids;
}

std::vector<NodeId> TcpTransport::connectedPeers() const {
  std::vector<NodeId> ids;
  for (const auto& [id, link] : links_) {
    std::lock_guard lock(link->mutex);
    if (link->fd >= 0) ids.push_back(id);
  }
  return ids;
}

void TcpTransport::start() {
  auto [host, port] = splitAddress(listenAddress_);
  listenFd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listenFd_ < 0) throw std::runtime_error("socket() failed");
  int one = 1;
  ::setsockopt(listenFd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
    throw std::runtime_error("listen host must be an IPv4 address: " + host);
  }
  if (::bind(listenFd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listenFd_, 64) != 0) {
    ::close(listenFd_);
    listenFd_ = -1;
    throw std::runtime_error("cannot listen on " + listenAddress_ + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listenFd_, reinterpret_cast<sockaddr*>(&addr), &len);
  boundPort_ = ntohs(addr.sin_port);

  running_ = true;
  std::lock_guard lock(threadsMutex_);
  threads_.emplace_back([this] { acceptLoop(); });
  for (auto& [id, link] : links_) {
    if (self_ < id) threads_.emplace_back([this, link = link] { dialLoop(link); });
  }
}

void TcpTransport::stop() {
  if (!running_.exchange(false)) return;
  if (listenFd_ >= 0) {
    ::shutdown(listenFd_, SHUT_RDWR);
    ::close(listenFd_);
    listenFd_ = -1;
  }
  for (auto& [id, link] : links_) {
    std::lock_guard lock(link->mutex);
    if (link->fd >= 0) ::shutdown(link->fd, SHUT_RDWR);
    link->cv.notify_all();
  }
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(threadsMutex_);
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
  for (auto& [id, link] : links_) {
    std::lock_guard lock(link->mutex);
    if (link->fd >= 0) ::close(link->fd);
    link->fd = -1;
  }
}

void TcpTransport::send(const NodeId& to, const Envelope& env) {
  if (to == self_) {
    inbox_(env);
    return;
  }
  auto it = links_.find(to);
  if (it == links_.end()) return;
  auto& link = *it->second;
  std::lock_guard lock(link.mutex);
  if (link.queue.size() >= options_.queueLimit) {
    link.queue.pop_front();
    ++link.dropped;
  }
  link.queue.push_back(env.frame());
  link.cv.notify_all();
}

Envelope TcpTransport::hello(const NodeId& to) const {
  codec::Writer w;
  w.str(to).i64(std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::system_clock::now().time_since_epoch())
                    .count());
  return Envelope::sign(self_, MessageKind::Hello, std::move(w).bytes(), key_);
}

void TcpTransport::acceptLoop() {
  while (running_) {
    if (!waitReadable(listenFd_, 200)) continue;
    int fd = ::accept(listenFd_, nullptr, nullptr);
    if (fd < 0) continue;
    handleInbound(fd);
  }
}

void TcpTransport::handleInbound(int fd) {
  auto refuse = [&](const std::string& why) {
    ++refused_;
    log().warn("{}: refusing inbound connection: {}", self_, why);
    closeFd(fd);
  };
  if (!waitReadable(fd, 2000)) return refuse("no hello");
  auto env = readFrame(fd);
  if (!env || env->kind != MessageKind::Hello) return refuse("no hello");
  if (!keyring_.contains(env->sender)) return refuse("unknown peer " + env->sender);
  if (!env->verify(keyring_)) return refuse("bad hello signature from " + env->sender);
  try {
    codec::Reader r(env->body);
    if (r.str() != self_) return refuse("hello addressed elsewhere");
  } catch (const codec::DecodeError&) {
    return refuse("malformed hello");
  }
  auto it = links_.find(env->sender);
  if (it == links_.end() || !(env->sender < self_)) return refuse("duplicate direction from " + env->sender);
  auto reply = hello(env->sender).frame();
  if (!writeAll(fd, reply.data(), reply.size())) return refuse("hello reply failed");
  attach(it->second, fd);
}

void TcpTransport::dialLoop(std::shared_ptr<Link> link) {
  Micros backoff = options_.retryMin;
  while (running_) {
    {
      std::unique_lock lock(link->mutex);
      link->cv.wait(lock, [&] { return link->fd < 0 || !running_; });
    }
    if (!running_) return;

    int fd = -1;
    try {
      auto [host, port] = splitAddress(link->address);
      addrinfo hints{};
      hints.ai_family = AF_INET;
      hints.ai_socktype = SOCK_STREAM;
      addrinfo* res = nullptr;
      if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) == 0 && res != nullptr) {
        fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
        if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
          ::close(fd);
          fd = -1;
        }
        ::freeaddrinfo(res);
      }
    } catch (const std::exception& e) {
      log().error("{}: {}", self_, e.what());
    }

    bool ok = false;
    if (fd >= 0) {
      auto h = hello(link->id).frame();
      if (writeAll(fd, h.data(), h.size()) && waitReadable(fd, 2000)) {
        auto reply = readFrame(fd);
        ok = reply && reply->kind == MessageKind::Hello && reply->sender == link->id && reply->verify(keyring_);
      }
      if (!ok) closeFd(fd);
    }
    if (ok && attach(link, fd)) {
      backoff = options_.retryMin;
      continue;
    }
    auto deadline = std::chrono::steady_clock::now() + std::chrono::microseconds(backoff);
    while (running_ && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    backoff = std::min(backoff * 2, options_.retryMax);
  }
}

bool TcpTransport::attach(const std::shared_ptr<Link>& link, int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  std::uint64_t epoch;
  {
    std::lock_guard lock(link->mutex);
    if (link->fd >= 0) {
      closeFd(fd);
      return false;
    }
    link->fd = fd;
    epoch = ++link->epoch;
  }
  log().info("{}: connected to {}", self_, link->id);
  std::lock_guard lock(threadsMutex_);
  if (!running_) return false;
  threads_.emplace_back([this, link, fd, epoch] { readLoop(link, fd, epoch); });
  threads_.emplace_back([this, link, fd, epoch] { writeLoop(link, fd, epoch); });
  return true;
}

void TcpTransport::detach(const std::shared_ptr<Link>& link, std::uint64_t epoch) {
  std::lock_guard lock(link->mutex);
  if (link->epoch != epoch || link->fd < 0) return;
  ::shutdown(link->fd, SHUT_RDWR);
  ::close(link->fd);
  link->fd = -1;
  ++link->epoch;
  link->cv.notify_all();
  log().info("{}: link to {} closed", self_, link->id);
}

void TcpTransport::readLoop(std::shared_ptr<Link> link, int fd, std::uint64_t epoch) {
  while (running_) {
    auto env = readFrame(fd);
    if (!env) break;
    // Relayed envelopes keep their original signer, so only the signature matters.
    if (!env->verify(keyring_)) {
      log().warn("{}: dropping unauthenticated envelope on link {}", self_, link->id);
      continue;
    }
    if (env->kind == MessageKind::Hello) continue;
    if (env->sender != link->id && env->kind != MessageKind::Request && env->kind != MessageKind::Checkpoint) {
      log().warn("{}: {} relayed by {} not accepted", self_, toString(env->kind), link->id);
      continue;
    }
    inbox_(std::move(*env));
  }
  detach(link, epoch);
}

void TcpTransport::writeLoop(std::shared_ptr<Link> link, int fd, std::uint64_t epoch) {
  while (true) {
    Bytes frame;
    {
      std::unique_lock lock(link->mutex);
      link->cv.wait(lock, [&] { return !running_ || link->epoch != epoch || !link->queue.empty(); });
      if (!running_ || link->epoch != epoch) return;
      frame = std::move(link->queue.front());
      link->queue.pop_front();
    }
    if (!writeAll(fd, frame.data(), frame.size())) {
      std::lock_guard lock(link->mutex);
      link->queue.push_front(std::move(frame));
      break;
    }
  }
  detach(link, epoch);
}

}  // namespace bftflow::p2p
