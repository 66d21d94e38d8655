// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <memory>

#include "bftflow/p2p/transport.hpp"
#include "bftflow/pbft/messages.hpp"

namespace bftflow::pbft {

using p2p::Micros;

struct ClientConfig {
  /// Per attempt; the request is rebroadcast when it expires.
  Micros timeout = 2'000'000;
  int attempts = 5;
  /// Unordered reads give up sooner and fall back to an ordered read.
  Micros readTimeout = 300'000;
};

enum class ClientStatus { Ok, Timeout, DivergentReplies };
const char* toString(ClientStatus s);

struct ClientResult {
  ClientStatus status = ClientStatus::Ok;
  OrderingReply reply;
  std::uint64_t requestSequence = 0;
  /// Replies received, by sender.
  std::size_t replies = 0;
};

/// Ordering-service client. Broadcasts each request to every member and waits
/// for 2f+1 byte-identical replies. Not thread-safe; driven from the node's
/// event loop like the replica.
class OrderingClient {
 public:
  using Callback = std::function<void(const ClientResult&)>;

  OrderingClient(NodeId self, std::shared_ptr<const KeyPair> key, ViewConfig membership, p2p::Transport& transport,
                 const p2p::Clock& clock, ClientConfig config = {}, std::uint64_t firstSequence = 1);

  std::uint64_t submit(ClientRequest request, Callback done);
  /// GET_LATEST_HASH as an unordered read, retried as an ordered one when
  /// replicas disagree or stay silent.
  void readLatestHash(Callback done);

  void deliver(const Envelope& reply);
  void tick();

  void setMembership(const ViewConfig& membership) { membership_ = membership; }
  const ViewConfig& membership() const { return membership_; }
  std::size_t outstanding() const { return pending_.size(); }

  /// Fired when the co-located replica's reply differs from the agreed one.
  std::function<void(std::uint64_t requestSequence)> onLocalMismatch;

 private:
  struct Pending {
    ClientRequest request;
    Envelope env;
    Callback done;
    std::map<NodeId, Bytes> replies;
    Micros sentAt = 0;
    int attempt = 1;
    bool read = false;
  };

  void send(Pending& p);
  void finish(std::uint64_t seq, ClientResult result);
  void evaluate(std::uint64_t seq);

  NodeId self_;
  std::shared_ptr<const KeyPair> key_;
  ViewConfig membership_;
  p2p::Transport& transport_;
  const p2p::Clock& clock_;
  ClientConfig config_;
  std::uint64_t nextSequence_;
  std::map<std::uint64_t, Pending> pending_;
  /// Agreed replies whose local copy has not arrived yet.
  std::map<std::uint64_t, Bytes> awaitingLocal_;
};

}  // namespace bftflow::pbft
