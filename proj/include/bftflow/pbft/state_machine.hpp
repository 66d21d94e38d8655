// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>

#include "bftflow/chain/block.hpp"
#include "bftflow/engine/engine.hpp"
#include "bftflow/pbft/messages.hpp"

namespace bftflow::pbft {

using Validator = std::function<engine::Validation(const engine::Transaction& tx, const engine::Transaction* pendingTx)>;
/// Receives each block the moment it is built, before the next request of
/// the batch is validated.
using BlockSink = std::function<void(const chain::Block& block)>;

struct OrderingState {
  Digest lastBlockHash;
  std::uint64_t lastBlockNumber = 0;
  std::vector<engine::Transaction> pendingTxQueue;
  std::int64_t lastTimestampMs = 0;
};

/// The replicated ordering state plus the bookkeeping every replica must hold
/// identically: membership and the per-client reply window.
class OrderingStateMachine {
 public:
  static constexpr std::size_t kReplyWindow = 256;

  /// `membership.viewNumber` is ignored; views are the replica's business.
  OrderingStateMachine(std::size_t blockSize, ViewConfig membership, Keyring keyring);

  struct Outcome {
    LogEntry entry;
    std::vector<chain::Block> blocks;
    bool membershipChanged = false;
  };

  /// Executes every request of the batch in order at consensus sequence `seq`.
  Outcome execute(std::uint64_t seq, const Batch& batch, const Validator& validate, const BlockSink& sink = {});
  /// Re-applies a logged entry using its recorded outcomes.
  Outcome replay(const LogEntry& entry, const BlockSink& sink = {});

  /// Reply to GET_LATEST_HASH. Unordered reads carry no sequence or queue hash
  /// so that replicas at different sequences can still agree.
  OrderingReply latestHash(bool ordered) const;

  const OrderingState& state() const { return state_; }
  std::uint64_t lastSequence() const { return lastSequence_; }
  Digest pendingQueueHash() const;
  const std::vector<NodeId>& members() const { return members_; }
  std::uint32_t f() const { return f_; }
  std::size_t blockSize() const { return blockSize_; }
  const Keyring& keyring() const { return keyring_; }

  std::optional<Bytes> cachedReply(const NodeId& client, std::uint64_t requestSequence) const;
  /// The request is older than the client's reply window.
  bool stale(const NodeId& client, std::uint64_t requestSequence) const;

  Bytes snapshot() const;
  /// Replaces the state; throws codec::DecodeError on malformed input.
  void install(ByteView snapshot);

 private:
  struct ClientWindow {
    std::uint64_t low = 0;
    std::map<std::uint64_t, Bytes> replies;
  };

  OrderingReply decide(const ClientRequest& req, std::uint64_t seq, const Validator& validate,
                       std::optional<engine::Transaction>& tx) const;
  void apply(const ClientRequest& req, const OrderingReply& reply, const std::optional<engine::Transaction>& tx,
             std::int64_t timestampMs, Outcome& out, const BlockSink& sink);
  void finishReply(OrderingReply& reply) const;
  void remember(const NodeId& client, std::uint64_t requestSequence, const Bytes& result);
  const engine::Transaction* relevantPending(const engine::Transaction& tx) const;

  std::size_t blockSize_;
  Keyring keyring_;
  std::vector<NodeId> members_;
  std::uint32_t f_;
  OrderingState state_;
  std::uint64_t lastSequence_ = 0;
  std::map<NodeId, ClientWindow> clients_;
};

}  // namespace bftflow::pbft
