// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>

#include "bftflow/chain/block_service.hpp"
#include "bftflow/engine/engine.hpp"
#include "bftflow/pbft/client.hpp"
#include "bftflow/pbft/replica.hpp"

namespace bftflow::node {

using p2p::Envelope;
using p2p::MessageKind;
using p2p::Micros;

enum class NodeStatus { Recovering, Ready };
const char* toString(NodeStatus s);

enum class EventKind { WorkItemAdded, WorkItemWithdrawn, CaseUpdated, BlockApplied, PendingTxChanged, StatusChanged };
const char* toString(EventKind k);

/// Emitted after the state it describes is queryable.
struct NodeEvent {
  std::uint64_t id = 0;
  EventKind kind = EventKind::BlockApplied;
  /// Work item id, case id (hex), block number or transaction id (hex).
  std::string subject;
  std::string detail;
  std::uint64_t headNumber = 0;
  std::int64_t atMs = 0;
};

struct NodeOptions {
  pbft::ViewConfig initialView;
  /// Every permissioned node, members or not.
  Keyring keyring;
  std::size_t blockSize = 1;
  pbft::ReplicaConfig replica;
  pbft::ClientConfig client;
  chain::BlockServiceConfig blocks;
  /// Block store location; in memory when unset.
  std::optional<std::filesystem::path> dataDir;
  std::shared_ptr<const engine::HostRegistry> registry;
  /// Must exceed every request sequence this node used before a restart.
  std::uint64_t firstClientSequence = 1;
  std::uint64_t seed = 0;
  std::function<Digest()> nonceSource;
  /// Block timestamps proposed while leading (default: system clock).
  std::function<std::int64_t()> wallClockMs;
  Micros joinRetry = 1'000'000;
  Micros observerPoll = 1'000'000;
  /// How long RECOVERING may sit in one stage before it is restarted.
  Micros recoveryRetry = 10'000'000;
};

enum class SubmitStatus { Committed, Accepted, Rejected, Timeout, Divergent, NotReady };
const char* toString(SubmitStatus s);

struct SubmitOutcome {
  SubmitStatus status = SubmitStatus::Committed;
  Digest txId;
  /// Block holding the transaction (Committed, Accepted).
  std::uint64_t blockNumber = 0;
  std::string code;
  std::string reason;
};

struct PendingSubmission {
  Digest txId;
  engine::TxKind kind = engine::TxKind::InstanceState;
  /// Case id (hex) or model id.
  std::string subject;
  /// Ordered and waiting for its block.
  bool queued = false;
  std::uint64_t blockNumber = 0;
};

struct ChainStatus {
  NodeStatus status = NodeStatus::Recovering;
  std::uint64_t headNumber = 0;
  Digest headHash;
  std::size_t pendingQueueLength = 0;
  pbft::ViewConfig view;
  bool member = false;
  chain::SyncStatus sync = chain::SyncStatus::Idle;
};

/// One participant: ordering replica, ordering client, block service, block
/// store and workflow engine on a single logical thread. The owner delivers
/// envelopes and ticks; nothing here blocks.
class Node final : public p2p::Endpoint, public pbft::ReplicaHost {
 public:
  using Done = std::function<void(const SubmitOutcome&)>;

  Node(NodeId self, std::shared_ptr<const KeyPair> key, NodeOptions options, p2p::Transport& transport,
       const p2p::Clock& clock);
  ~Node() override;

  /// Begins recovery: state transfer, block sync, engine rebuild.
  void start();

  void deliver(const Envelope& env) override;
  void tick() override;

  /// Orders `tx`. `done` fires once: Committed when the block holding the
  /// transaction is applied here, or with the failure. `ordered`, when
  /// given, fires as soon as consensus accepted the transaction.
  void submit(engine::Transaction tx, Done done, Done ordered = {});

  /// Engine actions followed by submit; they throw engine::EngineError.
  Digest installModel(engine::WorkflowModel model, Done done, Done ordered = {});
  /// Returns the new case id.
  Digest launchCase(const std::string& modelId, engine::DataMap data, Done done, Done ordered = {});
  Digest completeWorkItem(const std::string& itemId, const engine::DataMap& outputs, Done done, Done ordered = {});

  const NodeId& id() const { return self_; }
  NodeStatus status() const { return phase_ == Phase::Ready ? NodeStatus::Ready : NodeStatus::Recovering; }
  bool ready() const { return phase_ == Phase::Ready; }
  /// Valid once the node was READY at least once.
  const engine::Engine& engine() const { return *engine_; }
  bool hasEngine() const { return engine_ != nullptr; }
  const chain::BlockStore& store() const { return *store_; }
  const pbft::Replica& replica() const { return *replica_; }
  pbft::Replica& replica() { return *replica_; }
  const chain::BlockService& blocks() const { return *blocks_; }
  chain::BlockService& blocks() { return *blocks_; }
  pbft::OrderingClient& client() { return *client_; }
  ChainStatus chainStatus() const;
  std::vector<PendingSubmission> pendingSubmissions() const;

  std::uint64_t selfChecks() const { return selfChecks_; }
  bool joinRejected() const { return join_ == Join::Rejected; }

  void onEvent(std::function<void(const NodeEvent&)> fn) { eventSink_ = std::move(fn); }

  // ReplicaHost
  engine::Validation validate(const engine::Transaction& tx, const engine::Transaction* pendingTx) override;
  void blockCreated(const chain::Block& block) override;
  bool canExecute() const override;
  void stateInstalled() override;
  void configChanged(const pbft::ViewConfig& view) override;
  std::int64_t timestampMs() const override;

 private:
  enum class Phase { Transfer, Joining, Sync, Ready };
  enum class Join { None, Requesting, Rejected };
  struct Submission {
    engine::Transaction tx;
    Done done;
    Done ordered;
    bool queued = false;
    std::uint64_t blockNumber = 0;
  };

  void enter(Phase phase);
  void beginSync();
  void checkSync();
  void materialize();
  void onApplied(const chain::Block& block);
  void onSubmitResult(const Digest& txId, const pbft::ClientResult& r);
  void finishSubmission(const Digest& txId, SubmitOutcome outcome);
  void settleCommitted();
  void handleEffects(engine::EngineEffects effects);
  void emit(EventKind kind, std::string subject, std::string detail = {});
  void selfCheck(const std::string& why);
  void afterDispatch();

  void sendJoinRequest();
  void onJoinRequest(const Envelope& env);
  void onJoinAck(const Envelope& env);

  NodeId self_;
  std::shared_ptr<const KeyPair> key_;
  NodeOptions options_;
  p2p::Transport& transport_;
  const p2p::Clock& clock_;

  std::unique_ptr<chain::BlockStore> store_;
  std::unique_ptr<chain::BlockService> blocks_;
  std::unique_ptr<pbft::Replica> replica_;
  std::unique_ptr<pbft::OrderingClient> client_;
  std::unique_ptr<engine::Engine> engine_;

  Phase phase_ = Phase::Transfer;
  Micros phaseSince_ = 0;
  bool started_ = false;
  /// Local blocks may come from a faulty local replica and are discarded on
  /// conflict.
  bool distrustLocal_ = false;
  bool resumeWanted_ = false;
  std::optional<std::string> selfCheckWanted_;
  std::uint64_t selfChecks_ = 0;

  Join join_ = Join::None;
  std::size_t joinCursor_ = 0;
  Micros joinSent_ = 0;
  std::set<NodeId> joinsInFlight_;
  Micros lastObserverPoll_ = 0;
  bool observerPollInFlight_ = false;

  std::map<Digest, Submission> submissions_;
  std::function<void(const NodeEvent&)> eventSink_;
  std::uint64_t nextEventId_ = 1;
};

}  // namespace bftflow::node
