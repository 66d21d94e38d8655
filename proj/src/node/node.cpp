// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/node/node.hpp"

#include <algorithm>

#include "bftflow/common/log.hpp"

namespace bftflow::node {

using engine::EngineEffects;
using engine::Transaction;
using pbft::ClientRequest;
using pbft::ClientResult;
using pbft::ClientStatus;

namespace {

struct JoinAckMsg {
  bool accepted = false;
  std::string code;
  std::string reason;

  Bytes encode() const {
    codec::Writer w;
    w.boolean(accepted).str(code).str(reason);
    return std::move(w).bytes();
  }
  static JoinAckMsg decode(ByteView bytes) {
    codec::Reader r(bytes);
    JoinAckMsg m;
    m.accepted = r.boolean();
    m.code = r.str();
    m.reason = r.str();
    r.expectDone();
    return m;
  }
};

}  // namespace

const char* toString(NodeStatus s) {
  switch (s) {
    case NodeStatus::Recovering: return "RECOVERING";
    case NodeStatus::Ready: return "READY";
  }
  return "?";
}

const char* toString(EventKind k) {
  switch (k) {
    case EventKind::WorkItemAdded: return "WORK_ITEM_ADDED";
    case EventKind::WorkItemWithdrawn: return "WORK_ITEM_WITHDRAWN";
    case EventKind::CaseUpdated: return "CASE_UPDATED";
    case EventKind::BlockApplied: return "BLOCK_APPLIED";
    case EventKind::PendingTxChanged: return "PENDING_TX_CHANGED";
    case EventKind::StatusChanged: return "STATUS_CHANGED";
  }
  return "?";
}

const char* toString(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::Committed: return "COMMITTED";
    case SubmitStatus::Accepted: return "ACCEPTED";
    case SubmitStatus::Rejected: return "REJECTED";
    case SubmitStatus::Timeout: return "TIMEOUT";
    case SubmitStatus::Divergent: return "DIVERGENT_REPLIES";
    case SubmitStatus::NotReady: return "NOT_READY";
  }
  return "?";
}

Node::Node(NodeId self, std::shared_ptr<const KeyPair> key, NodeOptions options, p2p::Transport& transport,
           const p2p::Clock& clock)
    : self_(std::move(self)),
      key_(std::move(key)),
      options_(std::move(options)),
      transport_(transport),
      clock_(clock) {
  store_ = options_.dataDir ? std::make_unique<chain::BlockStore>(chain::BlockStore::open(*options_.dataDir))
                            : std::make_unique<chain::BlockStore>();
  blocks_ = std::make_unique<chain::BlockService>(self_, key_, *store_, transport_, clock_, options_.blocks,
                                                  options_.seed);
  blocks_->onApplied([this](const chain::Block& b) { onApplied(b); });
  blocks_->onFault([this](const std::string& code, const std::string& detail) {
    log().error("{}: block service {}: {}", self_, code, detail);
  });
  replica_ = std::make_unique<pbft::Replica>(self_, key_, options_.initialView, options_.blockSize, options_.keyring,
                                             options_.replica, transport_, clock_, *this);
  client_ = std::make_unique<pbft::OrderingClient>(self_, key_, options_.initialView, transport_, clock_,
                                                   options_.client, options_.firstClientSequence);
  client_->onLocalMismatch = [this](std::uint64_t seq) {
    if (phase_ == Phase::Ready) selfCheckWanted_ = "local reply to request " + std::to_string(seq) + " disagreed";
  };
}

Node::~Node() = default;

void Node::start() {
  if (started_) return;
  started_ = true;
  log().info("{}: starting with local chain at block {}", self_, store_->headNumber());
  enter(Phase::Transfer);
  replica_->startStateTransfer();
  afterDispatch();
}

void Node::enter(Phase phase) {
  bool wasReady = phase_ == Phase::Ready;
  phase_ = phase;
  phaseSince_ = clock_.now();
  if (wasReady != (phase == Phase::Ready)) emit(EventKind::StatusChanged, toString(status()));
}

// ---------------------------------------------------------------- dispatch

void Node::deliver(const Envelope& env) {
  switch (p2p::channelOf(env.kind)) {
    case p2p::Channel::Consensus:
      if (env.kind == MessageKind::Reply) {
        client_->deliver(env);
      } else {
        replica_->deliver(env);
      }
      break;
    case p2p::Channel::Blocks: blocks_->deliver(env); break;
    case p2p::Channel::Membership:
      try {
        if (env.kind == MessageKind::JoinRequest) onJoinRequest(env);
        if (env.kind == MessageKind::JoinAck) onJoinAck(env);
      } catch (const codec::DecodeError& e) {
        log().warn("{}: malformed {} from {}: {}", self_, p2p::toString(env.kind), env.sender, e.what());
      }
      break;
    case p2p::Channel::Control: break;
  }
  afterDispatch();
}

void Node::tick() {
  replica_->tick();
  client_->tick();
  blocks_->tick();
  auto now = clock_.now();
  switch (phase_) {
    case Phase::Transfer:
      if (started_ && !replica_->transferring() && now - phaseSince_ > options_.recoveryRetry) {
        log().warn("{}: no state transfer progress, restarting it", self_);
        phaseSince_ = now;
        replica_->startStateTransfer();
      }
      break;
    case Phase::Joining:
      if (now - joinSent_ > options_.joinRetry) sendJoinRequest();
      break;
    case Phase::Sync: checkSync(); break;
    case Phase::Ready:
      if (blocks_->status() == chain::SyncStatus::Halted) {
        selfCheckWanted_ = "local chain conflicts with the consensus head";
        break;
      }
      if (!replica_->isMember() && !observerPollInFlight_ && now - lastObserverPoll_ > options_.observerPoll) {
        observerPollInFlight_ = true;
        lastObserverPoll_ = now;
        client_->readLatestHash([this](const ClientResult& r) {
          observerPollInFlight_ = false;
          if (r.status == ClientStatus::Ok && phase_ == Phase::Ready) {
            blocks_->syncFromHead(r.reply.latestBlockHash, r.reply.latestBlockNumber);
          }
        });
      }
      break;
  }
  afterDispatch();
}

void Node::afterDispatch() {
  if (selfCheckWanted_) {
    auto why = std::move(*selfCheckWanted_);
    selfCheckWanted_.reset();
    selfCheck(why);
  }
  while (resumeWanted_ && canExecute()) {
    resumeWanted_ = false;
    replica_->resume();
  }
}

// ---------------------------------------------------------------- replica host

engine::Validation Node::validate(const Transaction& tx, const Transaction* pendingTx) {
  return engine_->validateTransaction(tx, pendingTx);
}

void Node::blockCreated(const chain::Block& block) { blocks_->receiveBlock(block); }

bool Node::canExecute() const {
  if (phase_ != Phase::Ready || !engine_ || blocks_->status() == chain::SyncStatus::Halted) return false;
  auto head = store_->headNumber();
  return engine_->lastAppliedBlock() == head && replica_->stateMachine().state().lastBlockNumber == head;
}

void Node::stateInstalled() {
  switch (phase_) {
    case Phase::Transfer:
      if (!replica_->isMember() && join_ != Join::Rejected) {
        enter(Phase::Joining);
        join_ = Join::Requesting;
        sendJoinRequest();
        return;
      }
      enter(Phase::Sync);
      beginSync();
      break;
    case Phase::Sync:
    case Phase::Ready:
      beginSync();
      resumeWanted_ = true;
      break;
    case Phase::Joining: break;
  }
}

void Node::configChanged(const pbft::ViewConfig& view) {
  client_->setMembership(view);
  if (view.contains(self_) && join_ == Join::Requesting) join_ = Join::None;
}

std::int64_t Node::timestampMs() const {
  return options_.wallClockMs ? options_.wallClockMs() : ReplicaHost::timestampMs();
}

// ---------------------------------------------------------------- recovery

void Node::beginSync() {
  const auto& st = replica_->stateMachine().state();
  if (store_->headNumber() > st.lastBlockNumber) {
    const auto* b = store_->get(st.lastBlockNumber);
    bool prefix = b && b->hash == st.lastBlockHash;
    if (!distrustLocal_) {
      log().error("{}: local chain (block {}) is ahead of the consensus head (block {})", self_,
                  store_->headNumber(), st.lastBlockNumber);
      return;
    }
    store_->rewind(prefix ? st.lastBlockNumber : 0);
    blocks_->restart();
  }
  blocks_->syncFromHead(st.lastBlockHash, st.lastBlockNumber);
}

void Node::checkSync() {
  if (blocks_->status() == chain::SyncStatus::Halted) {
    // The consensus head is authoritative; local blocks that conflict with it
    // are discarded and refetched.
    log().error("{}: local chain conflicts with the consensus head; discarding it", self_);
    store_->rewind(0);
    blocks_->restart();
    beginSync();
    return;
  }
  const auto& st = replica_->stateMachine().state();
  if (store_->headNumber() == st.lastBlockNumber && store_->headHash() == st.lastBlockHash) {
    materialize();
    return;
  }
  if (store_->headNumber() < st.lastBlockNumber && blocks_->status() == chain::SyncStatus::Idle) beginSync();
  if (store_->headNumber() > st.lastBlockNumber && clock_.now() - phaseSince_ > options_.recoveryRetry) {
    log().warn("{}: retrying state transfer", self_);
    enter(Phase::Transfer);
    replica_->startStateTransfer();
  }
}

void Node::materialize() {
  auto check = store_->verifyChainBackward(store_->headHash());
  if (!check.ok) {
    auto bad = check.failedAt ? *check.failedAt : check.missing.value_or(1);
    log().error("{}: chain verification failed at block {}; refetching", self_, bad);
    store_->rewind(bad == 0 ? 0 : bad - 1);
    blocks_->restart();
    beginSync();
    return;
  }
  engine_ = std::make_unique<engine::Engine>(self_, key_, options_.registry);
  if (options_.nonceSource) engine_->setNonceSource(options_.nonceSource);
  EngineEffects effects;
  try {
    effects = engine_->materialize(store_->headNumber(),
                                   [this](std::uint64_t n) -> const chain::Block& { return *store_->get(n); });
  } catch (const std::exception& e) {
    log().error("{}: engine rebuild failed: {}", self_, e.what());
    engine_.reset();
    return;
  }
  distrustLocal_ = false;
  log().info("{}: READY at block {} ({} cases, view {})", self_, store_->headNumber(), engine_->cases().size(),
             replica_->view().viewNumber);
  enter(Phase::Ready);
  lastObserverPoll_ = 0;
  handleEffects(std::move(effects));
  settleCommitted();
  resumeWanted_ = true;
}

void Node::selfCheck(const std::string& why) {
  ++selfChecks_;
  log().warn("{}: self-check ({}); resetting the local ordering replica", self_, why);
  distrustLocal_ = true;
  enter(Phase::Transfer);
  blocks_->restart();
  replica_->reset();
}

// ---------------------------------------------------------------- blocks and engine

void Node::onApplied(const chain::Block& block) {
  if (phase_ != Phase::Ready || !engine_) return;
  if (block.number != engine_->lastAppliedBlock() + 1) {
    log().error("{}: engine at block {} was handed block {}", self_, engine_->lastAppliedBlock(), block.number);
    return;
  }
  handleEffects(engine_->applyBlock(block));
  emit(EventKind::BlockApplied, std::to_string(block.number));
  settleCommitted();
  resumeWanted_ = true;
}

void Node::handleEffects(EngineEffects effects) {
  for (const auto& e : effects.errors) log().warn("{}: {}", self_, e);
  for (const auto& id : effects.casesLaunched) emit(EventKind::CaseUpdated, id.hex(), "launched");
  for (const auto& id : effects.casesUpdated) emit(EventKind::CaseUpdated, id.hex(), "updated");
  for (const auto& id : effects.casesFinished) emit(EventKind::CaseUpdated, id.hex(), "finished");
  for (const auto& id : effects.casesDeadlocked) emit(EventKind::CaseUpdated, id.hex(), "deadlocked");
  for (const auto& id : effects.itemsCompleted) emit(EventKind::WorkItemWithdrawn, id, "completed");
  for (const auto& id : effects.itemsWithdrawn) emit(EventKind::WorkItemWithdrawn, id, "withdrawn");
  for (const auto& id : effects.itemsAdded) emit(EventKind::WorkItemAdded, id);
  for (auto& tx : effects.autoSubmissions) {
    submit(std::move(tx), [this](const SubmitOutcome& o) {
      if (o.status != SubmitStatus::Committed) {
        log().warn("{}: automated completion {} ended {} {}", self_, o.txId.shortHex(), toString(o.status), o.reason);
      }
    });
  }
}

void Node::emit(EventKind kind, std::string subject, std::string detail) {
  if (!eventSink_) return;
  NodeEvent e;
  e.id = nextEventId_++;
  e.kind = kind;
  e.subject = std::move(subject);
  e.detail = std::move(detail);
  e.headNumber = store_->headNumber();
  e.atMs = timestampMs();
  eventSink_(e);
}

// ---------------------------------------------------------------- submissions

void Node::submit(Transaction tx, Done done, Done ordered) {
  auto id = tx.id();
  if (phase_ != Phase::Ready) {
    if (engine_) handleEffects(engine_->submissionRejected(id));
    if (done) done({SubmitStatus::NotReady, id, 0, "NOT_READY", "node is recovering"});
    return;
  }
  if (submissions_.count(id)) {
    if (done) done({SubmitStatus::Rejected, id, 0, "DUPLICATE_TRANSACTION", "already submitted"});
    return;
  }
  auto request = ClientRequest::addTransaction(tx);
  submissions_[id] = Submission{std::move(tx), std::move(done), std::move(ordered)};
  emit(EventKind::PendingTxChanged, id.hex(), "submitted");
  client_->submit(std::move(request), [this, id](const ClientResult& r) { onSubmitResult(id, r); });
}

void Node::onSubmitResult(const Digest& txId, const ClientResult& r) {
  auto it = submissions_.find(txId);
  if (it == submissions_.end()) return;
  auto unlock = [&] {
    if (engine_) handleEffects(engine_->submissionRejected(txId));
  };
  switch (r.status) {
    case ClientStatus::Ok:
      if (r.reply.accepted) {
        it->second.queued = true;
        it->second.blockNumber = r.reply.blockNumber;
        emit(EventKind::PendingTxChanged, txId.hex(), "queued");
        if (it->second.ordered) it->second.ordered({SubmitStatus::Accepted, txId, r.reply.blockNumber, {}, {}});
        settleCommitted();
      } else {
        unlock();
        finishSubmission(txId, {SubmitStatus::Rejected, txId, 0, r.reply.code, r.reply.reason});
      }
      break;
    case ClientStatus::Timeout:
      unlock();
      finishSubmission(txId, {SubmitStatus::Timeout, txId, 0, "TIMEOUT", "no 2f+1 identical replies"});
      break;
    case ClientStatus::DivergentReplies:
      unlock();
      finishSubmission(txId, {SubmitStatus::Divergent, txId, 0, "DIVERGENT_REPLIES", "replicas disagree"});
      if (phase_ == Phase::Ready) selfCheckWanted_ = "divergent replies";
      break;
  }
}

void Node::finishSubmission(const Digest& txId, SubmitOutcome outcome) {
  auto node = submissions_.extract(txId);
  if (node.empty()) return;
  emit(EventKind::PendingTxChanged, txId.hex(), toString(outcome.status));
  if (node.mapped().done) node.mapped().done(outcome);
}

void Node::settleCommitted() {
  if (!engine_) return;
  std::vector<std::pair<Digest, std::uint64_t>> due;
  for (const auto& [id, s] : submissions_) {
    if (s.queued && s.blockNumber <= engine_->lastAppliedBlock()) due.emplace_back(id, s.blockNumber);
  }
  for (const auto& [id, number] : due) {
    const auto* b = store_->get(number);
    bool present = b && std::any_of(b->transactions.begin(), b->transactions.end(),
                                    [&](const Transaction& t) { return t.id() == id; });
    if (present) {
      finishSubmission(id, {SubmitStatus::Committed, id, number, {}, {}});
    } else {
      log().error("{}: transaction {} is missing from block {}", self_, id.shortHex(), number);
      finishSubmission(id, {SubmitStatus::Rejected, id, 0, "NOT_IN_BLOCK", "block " + std::to_string(number) +
                                                                                 " does not hold the transaction"});
    }
  }
}

Digest Node::installModel(engine::WorkflowModel model, Done done, Done ordered) {
  if (!engine_) throw std::runtime_error("node is recovering");
  auto tx = engine_->installModel(std::move(model));
  auto id = tx.id();
  submit(std::move(tx), std::move(done), std::move(ordered));
  return id;
}

Digest Node::launchCase(const std::string& modelId, engine::DataMap data, Done done, Done ordered) {
  if (!engine_) throw std::runtime_error("node is recovering");
  auto tx = engine_->launchCase(modelId, std::move(data));
  auto caseId = tx.state().caseId;
  submit(std::move(tx), std::move(done), std::move(ordered));
  return caseId;
}

Digest Node::completeWorkItem(const std::string& itemId, const engine::DataMap& outputs, Done done, Done ordered) {
  if (!engine_) throw std::runtime_error("node is recovering");
  auto tx = engine_->completeWorkItem(itemId, outputs);
  auto id = tx.id();
  emit(EventKind::WorkItemWithdrawn, itemId, "pending");
  submit(std::move(tx), std::move(done), std::move(ordered));
  return id;
}

ChainStatus Node::chainStatus() const {
  ChainStatus s;
  s.status = status();
  s.headNumber = store_->headNumber();
  s.headHash = store_->headHash();
  s.pendingQueueLength = replica_->stateMachine().state().pendingTxQueue.size();
  s.view = replica_->view();
  s.member = replica_->isMember();
  s.sync = blocks_->status();
  return s;
}

std::vector<PendingSubmission> Node::pendingSubmissions() const {
  std::vector<PendingSubmission> out;
  for (const auto& [id, s] : submissions_) {
    PendingSubmission p;
    p.txId = id;
    p.kind = s.tx.kind();
    p.subject = s.tx.isInstanceState() ? s.tx.state().caseId.hex() : s.tx.model().modelId;
    p.queued = s.queued;
    p.blockNumber = s.blockNumber;
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------- join

void Node::sendJoinRequest() {
  std::vector<NodeId> members;
  for (const auto& m : replica_->view().members) {
    if (m != self_) members.push_back(m);
  }
  joinSent_ = clock_.now();
  if (members.empty()) return;
  const auto& to = members[joinCursor_++ % members.size()];
  log().info("{}: asking {} to add us to the ordering view", self_, to);
  transport_.send(to, Envelope::sign(self_, MessageKind::JoinRequest, {}, *key_));
}

void Node::onJoinRequest(const Envelope& env) {
  if (phase_ != Phase::Ready || !replica_->isMember()) return;
  const auto joiner = env.sender;
  auto ack = [this, joiner](bool accepted, std::string code, std::string reason) {
    transport_.send(joiner, Envelope::sign(self_, MessageKind::JoinAck,
                                           JoinAckMsg{accepted, std::move(code), std::move(reason)}.encode(), *key_));
  };
  if (replica_->view().contains(joiner)) {
    ack(true, "ALREADY_MEMBER", "");
    return;
  }
  if (!joinsInFlight_.insert(joiner).second) return;
  log().info("{}: submitting RECONFIGURE to add {}", self_, joiner);
  client_->submit(ClientRequest::reconfigure({true, joiner, std::nullopt}),
                  [this, joiner, ack](const ClientResult& r) {
                    joinsInFlight_.erase(joiner);
                    if (r.status != ClientStatus::Ok) {
                      log().warn("{}: RECONFIGURE for {} ended {}", self_, joiner, toString(r.status));
                      return;
                    }
                    bool ok = r.reply.accepted || r.reply.code == "ALREADY_MEMBER";
                    ack(ok, r.reply.code, r.reply.reason);
                  });
}

void Node::onJoinAck(const Envelope& env) {
  auto m = JoinAckMsg::decode(env.body);
  if (phase_ != Phase::Joining) return;
  if (m.accepted) {
    log().info("{}: {} confirmed our membership; fetching state", self_, env.sender);
    join_ = Join::None;
    enter(Phase::Transfer);
    replica_->startStateTransfer();
    return;
  }
  log().warn("{}: join rejected by {} ({}: {}); continuing as observer", self_, env.sender, m.code, m.reason);
  join_ = Join::Rejected;
  enter(Phase::Sync);
  beginSync();
}

}  // namespace bftflow::node
