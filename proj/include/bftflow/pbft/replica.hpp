// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include "bftflow/p2p/transport.hpp"
#include "bftflow/pbft/state_machine.hpp"

namespace bftflow::pbft {

using p2p::Micros;

struct ReplicaConfig {
  std::uint32_t checkpointInterval = 64;
  std::uint32_t watermarkWindow = 128;
  /// T: a backup forwards an unexecuted request to the leader after T and
  /// suspects the leader after 2T.
  Micros requestTimeout = 500'000;
  /// How long to wait for NEW_VIEW before moving on to the next view.
  Micros viewChangeTimeout = 1'000'000;
  Micros retransmitInterval = 100'000;
  Micros stateTransferTimeout = 1'000'000;
  std::size_t maxBatch = 64;
  std::size_t maxInFlight = 4;
};

/// The co-located node as seen by its replica.
class ReplicaHost {
 public:
  virtual ~ReplicaHost() = default;
  virtual engine::Validation validate(const engine::Transaction& tx, const engine::Transaction* pendingTx) = 0;
  virtual void blockCreated(const chain::Block& block) = 0;
  /// False while the engine lags the ordering state; execution then waits.
  virtual bool canExecute() const { return true; }
  virtual void stateInstalled() {}
  virtual void configChanged(const ViewConfig&) {}
  virtual void executed(std::uint64_t /*seq*/, const LogEntry& /*entry*/) {}
  /// Timestamp the leader proposes for new batches.
  virtual std::int64_t timestampMs() const;
};

enum class ReplicaStatus { Normal, ViewChanging, Observer };
const char* toString(ReplicaStatus s);

/// PBFT replica: three-phase ordering, checkpoints, view change and state
/// transfer. Single-threaded; the owner feeds it envelopes and ticks.
class Replica {
 public:
  Replica(NodeId self, std::shared_ptr<const KeyPair> key, ViewConfig initial, std::size_t blockSize, Keyring keyring,
          ReplicaConfig config, p2p::Transport& transport, const p2p::Clock& clock, ReplicaHost& host);

  /// Consensus-channel envelopes other than REPLY.
  void deliver(const Envelope& env);
  void tick();

  /// Fetches snapshot and log from peers; used at startup and when lagging.
  void startStateTransfer();
  /// Drops all ordering state and refetches it (self-check after divergence).
  void reset();
  /// Votes to replace the current leader.
  void suspectLeader() { startViewChange(view_.viewNumber + 1); }
  /// Called by the host when canExecute() may have turned true.
  void resume();

  const NodeId& self() const { return self_; }
  const ViewConfig& view() const { return view_; }
  ReplicaStatus status() const { return status_; }
  bool transferring() const { return transfer_.has_value(); }
  bool isMember() const { return view_.contains(self_); }
  bool isLeader() const { return isMember() && view_.leader() == self_; }
  std::uint64_t lastExecuted() const { return lastExecuted_; }
  std::uint64_t stableCheckpoint() const { return stableSeq_; }
  const OrderingStateMachine& stateMachine() const { return sm_; }
  std::size_t pendingRequests() const { return requests_.size(); }
  std::uint64_t completedTransfers() const { return completedTransfers_; }
  std::uint64_t viewChangesStarted() const { return viewChangesStarted_; }
  std::uint64_t snapshotMismatches() const { return snapshotMismatches_; }

  Bytes snapshot() const { return sm_.snapshot(); }

 private:
  struct Proposal {
    Envelope env;
    Digest digest;
    Batch batch;
  };
  struct Decision {
    std::uint64_t view = 0;
    Digest digest;
    Batch batch;
    Envelope prePrepare;
    std::vector<Envelope> commits;
  };
  using VoteKey = std::pair<std::uint64_t, Digest>;
  struct Slot {
    std::map<std::uint64_t, Proposal> proposals;
    std::map<VoteKey, std::map<NodeId, Envelope>> prepares;
    std::map<VoteKey, std::map<NodeId, Envelope>> commits;
    std::optional<PreparedCert> cert;
    std::uint64_t certView = 0;
    std::optional<Envelope> myPrepare;
    std::optional<Envelope> myCommit;
    std::optional<Decision> decided;
    bool executed = false;
    bool reconfig = false;
    Micros firstSeen = 0;
    Micros lastSent = 0;
  };
  struct PendingRequest {
    Envelope env;
    ClientRequest req;
    Micros firstSeen = 0;
    bool forwarded = false;
    std::optional<std::uint64_t> proposedIn;
  };
  struct Transfer {
    std::uint64_t nonce = 0;
    NodeId donor;
    Micros started = 0;
    std::map<NodeId, StateReplyMsg> replies;
  };

  // normal case
  void onRequest(const Envelope& env);
  void onPrePrepare(const Envelope& env);
  void onPrepare(const Envelope& env);
  void onCommit(const Envelope& env);
  void notePeerSeq(const NodeId& peer, std::uint64_t seq);
  void onCheckpoint(const Envelope& env);
  void onBatchRequest(const Envelope& env);
  void onBatchReply(const Envelope& env);
  bool acceptPrePrepare(const Envelope& env, const PrePrepare& pp);
  void resetProposals();
  void checkPrepared(std::uint64_t seq, Slot& slot);
  void checkCommitted(std::uint64_t seq, Slot& slot);
  void tryPropose();
  void tryExecute();
  void executeSlot(std::uint64_t seq, Slot& slot);
  void takeCheckpoint(std::uint64_t seq);
  void makeStable(std::uint64_t seq, const Digest& digest, std::vector<Envelope> proof);
  void applyMembership();
  void trackRequest(const Envelope& env, const ClientRequest& req, std::optional<std::uint64_t> proposedIn);
  void sendReply(const ClientRequest& req, const Bytes& result);
  std::optional<std::uint64_t> reconfigBarrier() const;

  // validation helpers
  bool validRequest(const Envelope& env, ClientRequest* out, bool signatureChecked);
  bool validBatch(const Batch& batch);
  std::optional<PrePrepare> validPrePrepareEnv(const Envelope& env, bool checkSignature);
  bool validPreparedCert(const PreparedCert& cert, PrePrepare* out);
  bool validCheckpointProof(std::uint64_t seq, const Digest& digest, const std::vector<Envelope>& proof);
  std::optional<ViewChangeMsg> validViewChange(const Envelope& env);

  // view change
  void startViewChange(std::uint64_t newView);
  void onViewChange(const Envelope& env);
  void onNewView(const Envelope& env);
  void maybeSendNewView(std::uint64_t view);
  struct NewViewPlan {
    std::uint64_t minS = 0;
    Digest minDigest;
    std::vector<Envelope> minProof;
    std::uint64_t maxS = 0;
    std::map<std::uint64_t, Batch> batches;
  };
  NewViewPlan planNewView(const std::vector<ViewChangeMsg>& vcs) const;
  void installView(std::uint64_t view, const NewViewPlan& plan, const std::vector<PrePrepare>& pps,
                   const std::vector<Envelope>& ppEnvs, const Envelope& newViewEnv);
  Micros suspectTimeout() const;
  Micros viewChangeWait() const;

  // state transfer
  void onStateRequest(const Envelope& env);
  void onStateReply(const Envelope& env);
  StateReplyMsg localStateReply(std::uint64_t nonce, bool withBody) const;
  void sendStateRequest();
  void finishTransfer();

  Envelope broadcast(MessageKind kind, Bytes body);
  void sendToOthers(const Envelope& env);
  Envelope signEnv(MessageKind kind, Bytes body) const;
  std::size_t quorum() const { return view_.quorum(); }

  NodeId self_;
  std::shared_ptr<const KeyPair> key_;
  Keyring keyring_;
  ReplicaConfig config_;
  p2p::Transport& transport_;
  const p2p::Clock& clock_;
  ReplicaHost& host_;

  ViewConfig initialView_;
  ViewConfig view_;
  ReplicaStatus status_ = ReplicaStatus::Normal;
  OrderingStateMachine sm_;
  Digest initialDigest_;

  std::map<std::uint64_t, Slot> slots_;
  std::uint64_t lastExecuted_ = 0;
  std::uint64_t nextSeq_ = 0;
  Micros lastProgress_ = 0;
  Micros lastDecided_ = 0;
  Micros lastFetch_ = 0;
  Micros transferDone_ = 0;
  /// Highest sequence each peer voted on, in any view.
  std::map<NodeId, std::uint64_t> peerSeq_;
  bool executing_ = false;

  std::map<Digest, PendingRequest> requests_;
  std::deque<Digest> requestOrder_;
  std::set<Digest> verifiedRequests_;

  std::map<std::uint64_t, Bytes> ownSnapshots_;
  std::map<std::uint64_t, std::map<Digest, std::map<NodeId, Envelope>>> checkpointVotes_;
  std::uint64_t stableSeq_ = 0;
  Digest stableDigest_;
  std::vector<Envelope> stableProof_;
  Bytes stableSnapshot_;
  std::map<std::uint64_t, LogEntry> log_;

  std::uint64_t targetView_ = 0;
  Micros vcStarted_ = 0;
  Micros vcLastSent_ = 0;
  int vcAttempts_ = 0;
  std::optional<Envelope> myViewChange_;
  std::map<std::uint64_t, std::map<NodeId, std::pair<Envelope, ViewChangeMsg>>> viewChanges_;
  std::optional<Envelope> lastNewView_;
  std::map<NodeId, Micros> newViewResent_;

  std::optional<Transfer> transfer_;
  std::uint64_t transferNonce_ = 0;
  std::size_t donorCursor_ = 0;
  std::uint64_t completedTransfers_ = 0;
  std::uint64_t viewChangesStarted_ = 0;
  std::uint64_t snapshotMismatches_ = 0;
};

}  // namespace bftflow::pbft
