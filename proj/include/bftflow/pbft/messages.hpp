// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "bftflow/engine/transaction.hpp"
#include "bftflow/p2p/envelope.hpp"

namespace bftflow::pbft {

using p2p::Envelope;
using p2p::MessageKind;

struct ViewConfig {
  std::uint64_t viewNumber = 0;
  std::vector<NodeId> members;
  std::uint32_t f = 0;

  std::size_t n() const { return members.size(); }
  std::size_t leaderIndex() const { return members.empty() ? 0 : viewNumber % members.size(); }
  const NodeId& leader() const { return members.at(leaderIndex()); }
  const NodeId& leaderOf(std::uint64_t view) const { return members.at(view % members.size()); }
  /// Matching votes needed to advance a phase: 2f+1 when n = 3f+1, and
  /// large enough that any two quorums share an honest member otherwise.
  std::size_t quorum() const { return (n() + f + 2) / 2; }
  /// Identical replies a client waits for.
  std::size_t replyQuorum() const { return 2 * f + 1; }
  bool contains(const NodeId& id) const;
  /// Throws std::invalid_argument unless n >= 3f+1 and members are unique.
  void validate() const;

  void encode(codec::Writer& w) const;
  static ViewConfig decode(codec::Reader& r);
  bool operator==(const ViewConfig&) const = default;
};

enum class OpTag : std::uint8_t { AddTransaction = 1, GetLatestHash = 2, Reconfigure = 3 };
const char* toString(OpTag op);

struct Reconfiguration {
  bool add = true;
  NodeId node;
  /// Replaces f when set.
  std::optional<std::uint32_t> newF;

  Bytes encode() const;
  static Reconfiguration decode(ByteView bytes);
};

struct ClientRequest {
  NodeId clientId;
  std::uint64_t requestSequence = 0;
  OpTag op = OpTag::AddTransaction;
  bool ordered = true;
  Bytes payload;

  static ClientRequest addTransaction(const engine::Transaction& tx);
  static ClientRequest latestHash(bool ordered);
  static ClientRequest reconfigure(const Reconfiguration& r);

  Bytes encode() const;
  static ClientRequest decode(ByteView bytes);
  Envelope sign(const KeyPair& key) const;
};

/// Digest identifying a client request inside batches.
Digest requestDigest(const Envelope& request);

/// Requests the leader orders in one consensus instance.
struct Batch {
  std::int64_t timestampMs = 0;
  std::vector<Envelope> requests;

  void encode(codec::Writer& w) const;
  static Batch decode(codec::Reader& r);
  Digest digest() const;
  bool operator==(const Batch&) const = default;
};

struct PrePrepare {
  std::uint64_t view = 0;
  std::uint64_t sequence = 0;
  Digest digest;
  Batch batch;

  Bytes encode() const;
  static PrePrepare decode(ByteView bytes);
};

/// Body of PREPARE and COMMIT.
struct Vote {
  std::uint64_t view = 0;
  std::uint64_t sequence = 0;
  Digest digest;

  Bytes encode() const;
  static Vote decode(ByteView bytes);
};

struct CheckpointMsg {
  std::uint64_t sequence = 0;
  Digest stateDigest;

  Bytes encode() const;
  static CheckpointMsg decode(ByteView bytes);
};

/// A signed PRE_PREPARE with matching signed PREPAREs from a quorum.
struct PreparedCert {
  Envelope prePrepare;
  std::vector<Envelope> prepares;

  void encode(codec::Writer& w) const;
  static PreparedCert decode(codec::Reader& r);
};

struct ViewChangeMsg {
  std::uint64_t newView = 0;
  std::uint64_t stableSequence = 0;
  Digest stableDigest;
  std::vector<Envelope> checkpointProof;
  std::vector<PreparedCert> prepared;

  Bytes encode() const;
  static ViewChangeMsg decode(ByteView bytes);
};

struct NewViewMsg {
  std::uint64_t view = 0;
  std::vector<Envelope> viewChanges;
  std::vector<Envelope> prePrepares;

  Bytes encode() const;
  static NewViewMsg decode(ByteView bytes);
};

/// Outcome of one ordered (or unordered) operation, byte-identical across
/// honest replicas for the same consensus sequence.
struct OrderingReply {
  OpTag op = OpTag::AddTransaction;
  bool accepted = false;
  std::string code;
  std::string reason;
  std::uint64_t consensusSequence = 0;
  Digest latestBlockHash;
  std::uint64_t latestBlockNumber = 0;
  Digest pendingQueueHash;
  /// For an accepted transaction: the block that holds or will hold it.
  std::uint64_t blockNumber = 0;

  Bytes encode() const;
  static OrderingReply decode(ByteView bytes);
  bool operator==(const OrderingReply&) const = default;
};

struct ReplyMsg {
  std::uint64_t requestSequence = 0;
  Bytes result;

  Bytes encode() const;
  static ReplyMsg decode(ByteView bytes);
};

/// One executed consensus instance with its outcomes; replaying the entry
/// needs no workflow validation.
struct LogEntry {
  std::uint64_t sequence = 0;
  Batch batch;
  std::vector<Bytes> results;

  void encode(codec::Writer& w) const;
  static LogEntry decode(codec::Reader& r);
  Digest digest() const;
};

struct BatchRequestMsg {
  std::uint64_t sequence = 0;

  Bytes encode() const;
  static BatchRequestMsg decode(ByteView bytes);
};

/// Commit certificate for one sequence.
struct BatchReplyMsg {
  Envelope prePrepare;
  std::vector<Envelope> commits;

  Bytes encode() const;
  static BatchReplyMsg decode(ByteView bytes);
};

struct StateRequestMsg {
  std::uint64_t nonce = 0;
  std::uint64_t lastExecuted = 0;
  NodeId donor;

  Bytes encode() const;
  static StateRequestMsg decode(ByteView bytes);
};

struct StateReplyMsg {
  std::uint64_t nonce = 0;
  ViewConfig view;
  std::uint64_t stableSequence = 0;
  Digest stableDigest;
  std::vector<Envelope> checkpointProof;
  std::uint64_t lastExecuted = 0;
  std::vector<Digest> logDigests;  // sequences stableSequence+1 ..
  std::optional<Bytes> snapshot;
  std::vector<LogEntry> entries;

  Bytes encode() const;
  static StateReplyMsg decode(ByteView bytes);
};

void encodeEnvelopes(codec::Writer& w, const std::vector<Envelope>& envs);
std::vector<Envelope> decodeEnvelopes(codec::Reader& r);

}  // namespace bftflow::pbft
