// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "bftflow/p2p/transport.hpp"

namespace bftflow::p2p {

struct PeerDescriptor {
  NodeId id;
  std::string address;  // host:port
  PublicKey publicKey;
};

struct TcpOptions {
  std::size_t queueLimit = 4096;
  Micros retryMin = 100'000;
  Micros retryMax = 2'000'000;
};

/// Live transport over TCP. The lower node id dials, the higher one accepts;
/// both sides authenticate with a signed HELLO before any traffic flows.
/// Inbound envelopes are verified and handed to `inbox` from reader threads.
class TcpTransport final : public Transport {
 public:
  using Inbox = std::function<void(Envelope)>;

  TcpTransport(NodeId self, KeyPair key, std::vector<PeerDescriptor> peers, std::string listenAddress, Inbox inbox,
               TcpOptions options = {});
  ~TcpTransport() override;

  /// Binds the listener and starts connecting. Throws if the listen address
  /// cannot be bound.
  void start();
  void stop();

  const NodeId& self() const override { return self_; }
  void send(const NodeId& to, const Envelope& env) override;
  std::vector<NodeId> peers() const override;

  /// Port actually bound (useful with port 0).
  int boundPort() const { return boundPort_; }
  std::vector<NodeId> connectedPeers() const;
  std::uint64_t refused() const { return refused_; }

 private:
  struct Link;

  void acceptLoop();
  void dialLoop(std::shared_ptr<Link> link);
  void handleInbound(int fd);
  bool attach(const std::shared_ptr<Link>& link, int fd);
  void readLoop(std::shared_ptr<Link> link, int fd, std::uint64_t epoch);
  void writeLoop(std::shared_ptr<Link> link, int fd, std::uint64_t epoch);
  void detach(const std::shared_ptr<Link>& link, std::uint64_t epoch);
  Envelope hello(const NodeId& to) const;

  NodeId self_;
  KeyPair key_;
  Keyring keyring_;
  std::string listenAddress_;
  Inbox inbox_;
  TcpOptions options_;
  std::map<NodeId, std::shared_ptr<Link>> links_;

  std::atomic<bool> running_{false};
  int listenFd_ = -1;
  int boundPort_ = 0;
  std::atomic<std::uint64_t> refused_{0};
  std::mutex threadsMutex_;
  std::vector<std::thread> threads_;
};

/// Splits "host:port"; throws std::invalid_argument when malformed.
std::pair<std::string, int> splitAddress(const std::string& address);

}  // namespace bftflow::p2p
