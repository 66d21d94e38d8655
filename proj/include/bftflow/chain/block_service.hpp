// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <random>

#include "bftflow/chain/block_store.hpp"
#include "bftflow/p2p/transport.hpp"

namespace bftflow::chain {

using p2p::Envelope;
using p2p::MessageKind;
using p2p::Micros;

struct BlockRequestMsg {
  Digest hash;
  Bytes encode() const;
  static BlockRequestMsg decode(ByteView bytes);
};

struct BlockchainRequestMsg {
  std::uint64_t lower = 0;
  std::uint64_t upper = 0;
  Bytes encode() const;
  /// Throws codec::DecodeError unless lower <= upper.
  static BlockchainRequestMsg decode(ByteView bytes);
};

/// Body of BLOCK_SEND (one block) and BLOCKCHAIN_SEND (ascending run).
struct BlocksMsg {
  std::vector<Block> blocks;
  Bytes encode() const;
  static BlocksMsg decode(ByteView bytes);
};

struct BlockServiceConfig {
  /// Per escalation round.
  Micros fetchTimeout = 2'000'000;
  std::size_t bufferLimit = 1024;
  /// Largest run served in one BLOCKCHAIN_SEND.
  std::size_t maxRun = 256;
  /// Full-fan-out rounds without progress before reporting SYNC_STALLED.
  int retryBudget = 3;
  /// Cap on the backoff between stalled rounds.
  Micros maxBackoff = 30'000'000;
};

enum class SyncStatus { Idle, Syncing, Stalled, Halted };
const char* toString(SyncStatus s);

/// Block exchange and verification for one node. Single-threaded; the owner
/// feeds it envelopes and ticks.
class BlockService {
 public:
  using Applied = std::function<void(const Block&)>;
  /// Called with LINKAGE_MISMATCH details when the local ordering service
  /// hands over a block that does not extend the head.
  using Fault = std::function<void(const std::string& code, const std::string& detail)>;

  BlockService(NodeId self, std::shared_ptr<const KeyPair> key, BlockStore& store, p2p::Transport& transport,
               const p2p::Clock& clock, BlockServiceConfig config, std::uint64_t seed);

  void onApplied(Applied fn) { applied_ = std::move(fn); }
  void onFault(Fault fn) { fault_ = std::move(fn); }

  /// A block created by the co-located ordering service.
  void receiveBlock(const Block& block);
  /// Fetches whatever lies between the local head and the authoritative head.
  void syncFromHead(const Digest& latestHash, std::uint64_t latestNumber);

  void deliver(const Envelope& env);
  void tick();

  /// A node that does not serve answers no block requests.
  void setServing(bool serving) { serving_ = serving; }
  /// Forgets the sync target and buffered blocks, leaving any halt; the
  /// owner calls syncFromHead again.
  void restart();

  SyncStatus status() const { return status_; }
  bool synced() const { return !target_ || store_.headNumber() >= target_->first; }
  std::optional<std::uint64_t> targetNumber() const {
    return target_ ? std::optional(target_->first) : std::nullopt;
  }
  const BlockStore& store() const { return store_; }
  std::size_t buffered() const { return buffer_.size(); }

  /// Requests sent so far, for tests: (kind, recipient, body).
  struct SentRequest {
    MessageKind kind;
    NodeId to;
    std::uint64_t lower = 0;
    std::uint64_t upper = 0;
  };
  const std::vector<SentRequest>& requestLog() const { return requestLog_; }

 private:
  void handleBlockRequest(const Envelope& env);
  void handleBlockchainRequest(const Envelope& env);
  void handleBlocks(const Envelope& env);
  void bufferBlock(const Block& block);
  void drain();
  /// Walks down from the target through buffered blocks; returns the number
  /// of the highest missing block and the hash it must have, if any.
  std::optional<std::pair<std::uint64_t, Digest>> topGap();
  void requestGap();
  void send(const NodeId& to, MessageKind kind, Bytes body);

  NodeId self_;
  std::shared_ptr<const KeyPair> key_;
  BlockStore& store_;
  p2p::Transport& transport_;
  const p2p::Clock& clock_;
  BlockServiceConfig config_;
  std::mt19937_64 rng_;
  Applied applied_;
  Fault fault_;
  bool serving_ = true;

  SyncStatus status_ = SyncStatus::Idle;
  std::optional<std::pair<std::uint64_t, Digest>> target_;
  std::map<std::uint64_t, Block> buffer_;
  std::optional<NodeId> lastDonor_;
  std::size_t fanout_ = 1;
  int fullRounds_ = 0;
  Micros roundStarted_ = 0;
  Micros roundTimeout_ = 0;
  std::uint64_t requestedUpper_ = 0;
  std::vector<SentRequest> requestLog_;
};

}  // namespace bftflow::chain
