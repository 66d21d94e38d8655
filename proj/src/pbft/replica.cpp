// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/pbft/replica.hpp"

#include <algorithm>
#include <chrono>

#include "bftflow/common/log.hpp"

namespace bftflow::pbft {

std::int64_t ReplicaHost::timestampMs() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

const char* toString(ReplicaStatus s) {
  switch (s) {
    case ReplicaStatus::Normal: return "NORMAL";
    case ReplicaStatus::ViewChanging: return "VIEW_CHANGING";
    case ReplicaStatus::Observer: return "OBSERVER";
  }
  return "?";
}

Replica::Replica(NodeId self, std::shared_ptr<const KeyPair> key, ViewConfig initial, std::size_t blockSize,
                 Keyring keyring, ReplicaConfig config, p2p::Transport& transport, const p2p::Clock& clock,
                 ReplicaHost& host)
    : self_(std::move(self)),
      key_(std::move(key)),
      keyring_(keyring),
      config_(config),
      transport_(transport),
      clock_(clock),
      host_(host),
      initialView_(initial),
      view_(initial),
      sm_(blockSize, initial, std::move(keyring)) {
  view_.validate();
  if (config_.checkpointInterval == 0 || config_.watermarkWindow < config_.checkpointInterval) {
    throw std::invalid_argument("watermark window must cover at least one checkpoint interval");
  }
  stableSnapshot_ = sm_.snapshot();
  stableDigest_ = initialDigest_ = sha256(stableSnapshot_);
  status_ = isMember() ? ReplicaStatus::Normal : ReplicaStatus::Observer;
  targetView_ = view_.viewNumber;
  lastProgress_ = lastDecided_ = clock_.now();
}

Envelope Replica::signEnv(MessageKind kind, Bytes body) const { return Envelope::sign(self_, kind, std::move(body), *key_); }

void Replica::sendToOthers(const Envelope& env) {
  for (const auto& m : view_.members) {
    if (m != self_) transport_.send(m, env);
  }
}

Envelope Replica::broadcast(MessageKind kind, Bytes body) {
  auto env = signEnv(kind, std::move(body));
  sendToOthers(env);
  return env;
}

void Replica::deliver(const Envelope& env) {
  try {
    switch (env.kind) {
      case MessageKind::Request: onRequest(env); return;
      case MessageKind::StateRequest: onStateRequest(env); return;
      case MessageKind::StateReply: onStateReply(env); return;
      default: break;
    }
    if (!isMember() || !view_.contains(env.sender)) return;
    switch (env.kind) {
      case MessageKind::PrePrepare: onPrePrepare(env); break;
      case MessageKind::Prepare: onPrepare(env); break;
      case MessageKind::Commit: onCommit(env); break;
      case MessageKind::Checkpoint: onCheckpoint(env); break;
      case MessageKind::ViewChange: onViewChange(env); break;
      case MessageKind::NewView: onNewView(env); break;
      case MessageKind::BatchRequest: onBatchRequest(env); break;
      case MessageKind::BatchReply: onBatchReply(env); break;
      default: break;
    }
  } catch (const codec::DecodeError& e) {
    log().warn("{}: dropping malformed {} from {}: {}", self_, p2p::toString(env.kind), env.sender, e.what());
  }
}

// ---------------------------------------------------------------- validation

bool Replica::validRequest(const Envelope& env, ClientRequest* out, bool signatureChecked) {
  if (env.kind != MessageKind::Request || !keyring_.contains(env.sender)) return false;
  ClientRequest req;
  try {
    req = ClientRequest::decode(env.body);
  } catch (const codec::DecodeError&) {
    return false;
  }
  if (req.clientId != env.sender) return false;
  auto d = requestDigest(env);
  if (!signatureChecked && !verifiedRequests_.count(d)) {
    if (!env.verify(keyring_)) return false;
  }
  verifiedRequests_.insert(d);
  if (out) *out = std::move(req);
  return true;
}

bool Replica::validBatch(const Batch& batch) {
  std::set<Digest> seen;
  for (const auto& r : batch.requests) {
    ClientRequest req;
    if (!validRequest(r, &req, false) || !req.ordered) return false;
    if (!seen.insert(requestDigest(r)).second) return false;
  }
  return true;
}

std::optional<PrePrepare> Replica::validPrePrepareEnv(const Envelope& env, bool checkSignature) {
  if (env.kind != MessageKind::PrePrepare) return std::nullopt;
  if (checkSignature && !env.verify(keyring_)) return std::nullopt;
  PrePrepare pp;
  try {
    pp = PrePrepare::decode(env.body);
  } catch (const codec::DecodeError&) {
    return std::nullopt;
  }
  if (env.sender != view_.leaderOf(pp.view)) return std::nullopt;
  if (pp.digest != pp.batch.digest() || !validBatch(pp.batch)) return std::nullopt;
  return pp;
}

bool Replica::validPreparedCert(const PreparedCert& cert, PrePrepare* out) {
  auto pp = validPrePrepareEnv(cert.prePrepare, true);
  if (!pp) return false;
  std::set<NodeId> signers;
  for (const auto& p : cert.prepares) {
    if (p.kind != MessageKind::Prepare || !view_.contains(p.sender) || p.sender == view_.leaderOf(pp->view)) continue;
    if (signers.count(p.sender) || !p.verify(keyring_)) continue;
    Vote v;
    try {
      v = Vote::decode(p.body);
    } catch (const codec::DecodeError&) {
      continue;
    }
    if (v.view == pp->view && v.sequence == pp->sequence && v.digest == pp->digest) signers.insert(p.sender);
  }
  if (signers.size() + 1 < quorum()) return false;
  *out = std::move(*pp);
  return true;
}

bool Replica::validCheckpointProof(std::uint64_t seq, const Digest& digest, const std::vector<Envelope>& proof) {
  if (seq == 0) return digest == initialDigest_;
  std::set<NodeId> signers;
  for (const auto& e : proof) {
    if (e.kind != MessageKind::Checkpoint || !keyring_.contains(e.sender) || signers.count(e.sender)) continue;
    if (!e.verify(keyring_)) continue;
    CheckpointMsg c;
    try {
      c = CheckpointMsg::decode(e.body);
    } catch (const codec::DecodeError&) {
      continue;
    }
    if (c.sequence == seq && c.stateDigest == digest) signers.insert(e.sender);
  }
  return signers.size() >= quorum();
}

std::optional<ViewChangeMsg> Replica::validViewChange(const Envelope& env) {
  if (env.kind != MessageKind::ViewChange) return std::nullopt;
  auto m = ViewChangeMsg::decode(env.body);
  if (!validCheckpointProof(m.stableSequence, m.stableDigest, m.checkpointProof)) return std::nullopt;
  std::set<std::uint64_t> seqs;
  for (const auto& cert : m.prepared) {
    PrePrepare pp;
    if (!validPreparedCert(cert, &pp)) return std::nullopt;
    if (pp.sequence <= m.stableSequence || pp.sequence > m.stableSequence + config_.watermarkWindow) return std::nullopt;
    if (pp.view >= m.newView || !seqs.insert(pp.sequence).second) return std::nullopt;
  }
  return m;
}

// ---------------------------------------------------------------- requests

void Replica::trackRequest(const Envelope& env, const ClientRequest& req, std::optional<std::uint64_t> proposedIn) {
  auto d = requestDigest(env);
  auto it = requests_.find(d);
  if (it != requests_.end()) {
    if (proposedIn) it->second.proposedIn = proposedIn;
    return;
  }
  if (sm_.cachedReply(req.clientId, req.requestSequence) || sm_.stale(req.clientId, req.requestSequence)) return;
  requests_.emplace(d, PendingRequest{env, req, clock_.now(), false, proposedIn});
  requestOrder_.push_back(d);
}

void Replica::onRequest(const Envelope& env) {
  ClientRequest req;
  if (!validRequest(env, &req, true)) return;
  if (!req.ordered) {
    if (isMember() && !transfer_) sendReply(req, sm_.latestHash(false).encode());
    return;
  }
  if (!isMember()) return;
  if (auto cached = sm_.cachedReply(req.clientId, req.requestSequence)) {
    sendReply(req, *cached);
    return;
  }
  if (sm_.stale(req.clientId, req.requestSequence)) return;
  trackRequest(env, req, std::nullopt);
  tryPropose();
}

void Replica::sendReply(const ClientRequest& req, const Bytes& result) {
  transport_.send(req.clientId, signEnv(MessageKind::Reply, ReplyMsg{req.requestSequence, result}.encode()));
}

std::optional<std::uint64_t> Replica::reconfigBarrier() const {
  for (auto it = slots_.upper_bound(lastExecuted_); it != slots_.end(); ++it) {
    if (it->second.reconfig) return it->first;
  }
  return std::nullopt;
}

void Replica::tryPropose() {
  if (!isLeader() || status_ != ReplicaStatus::Normal || transfer_) return;
  nextSeq_ = std::max(nextSeq_, lastExecuted_);
  while (nextSeq_ - lastExecuted_ < config_.maxInFlight && nextSeq_ < stableSeq_ + config_.watermarkWindow &&
         !reconfigBarrier()) {
    Batch batch;
    bool reconfig = false;
    while (!requestOrder_.empty() && batch.requests.size() < config_.maxBatch) {
      auto it = requests_.find(requestOrder_.front());
      if (it == requests_.end() || it->second.proposedIn) {
        requestOrder_.pop_front();
        continue;
      }
      if (it->second.req.op == OpTag::Reconfigure) {
        if (!batch.requests.empty()) break;
        reconfig = true;
      }
      batch.requests.push_back(it->second.env);
      requestOrder_.pop_front();
      if (reconfig) break;
    }
    if (batch.requests.empty()) return;
    batch.timestampMs = host_.timestampMs();
    PrePrepare pp{view_.viewNumber, ++nextSeq_, batch.digest(), std::move(batch)};
    auto env = signEnv(MessageKind::PrePrepare, pp.encode());
    log().debug("{}: proposing seq {} with {} requests in view {}", self_, pp.sequence, pp.batch.requests.size(),
                pp.view);
    acceptPrePrepare(env, pp);
    sendToOthers(env);
  }
}

// ---------------------------------------------------------------- three phases

bool Replica::acceptPrePrepare(const Envelope& env, const PrePrepare& pp) {
  auto& slot = slots_[pp.sequence];
  auto now = clock_.now();
  if (slot.firstSeen == 0) slot.firstSeen = now;
  auto existing = slot.proposals.find(pp.view);
  if (existing != slot.proposals.end()) return existing->second.digest == pp.digest;
  if (slot.decided && slot.decided->digest != pp.digest) {
    log().error("{}: PRE_PREPARE for decided seq {} carries another digest", self_, pp.sequence);
    return false;
  }
  slot.proposals.emplace(pp.view, Proposal{env, pp.digest, pp.batch});
  for (const auto& r : pp.batch.requests) {
    auto req = ClientRequest::decode(r.body);
    if (req.op == OpTag::Reconfigure) slot.reconfig = true;
    trackRequest(r, req, pp.sequence);
  }
  if (pp.view == view_.viewNumber && view_.leaderOf(pp.view) != self_) {
    Vote v{pp.view, pp.sequence, pp.digest};
    auto prepare = broadcast(MessageKind::Prepare, v.encode());
    slot.prepares[{pp.view, pp.digest}][self_] = prepare;
    slot.myPrepare = prepare;
    slot.lastSent = now;
  }
  checkPrepared(pp.sequence, slot);
  checkCommitted(pp.sequence, slot);
  return true;
}

void Replica::onPrePrepare(const Envelope& env) {
  if (status_ != ReplicaStatus::Normal) return;
  auto pp = validPrePrepareEnv(env, false);
  if (!pp) {
    log().warn("{}: invalid PRE_PREPARE from {}", self_, env.sender);
    return;
  }
  if (pp->view != view_.viewNumber) return;
  if (pp->sequence <= stableSeq_ || pp->sequence > stableSeq_ + config_.watermarkWindow) return;
  if (auto barrier = reconfigBarrier(); barrier && pp->sequence > *barrier) return;
  if (!acceptPrePrepare(env, *pp)) {
    log().warn("{}: conflicting PRE_PREPARE for seq {} in view {} from {}", self_, pp->sequence, pp->view, env.sender);
    startViewChange(view_.viewNumber + 1);
  }
}

void Replica::notePeerSeq(const NodeId& peer, std::uint64_t seq) {
  auto& s = peerSeq_[peer];
  s = std::max(s, seq);
}

void Replica::onPrepare(const Envelope& env) {
  auto v = Vote::decode(env.body);
  notePeerSeq(env.sender, v.sequence);
  if (status_ != ReplicaStatus::Normal) return;
  if (v.view != view_.viewNumber || env.sender == view_.leaderOf(v.view)) return;
  if (v.sequence <= stableSeq_ || v.sequence > stableSeq_ + config_.watermarkWindow) return;
  auto& slot = slots_[v.sequence];
  if (slot.firstSeen == 0) slot.firstSeen = clock_.now();
  slot.prepares[{v.view, v.digest}].emplace(env.sender, env);
  checkPrepared(v.sequence, slot);
}

void Replica::checkPrepared(std::uint64_t seq, Slot& slot) {
  auto p = slot.proposals.find(view_.viewNumber);
  if (p == slot.proposals.end() || status_ != ReplicaStatus::Normal) return;
  if (slot.cert && slot.certView == view_.viewNumber) return;
  auto votes = slot.prepares.find({view_.viewNumber, p->second.digest});
  std::size_t have = votes == slot.prepares.end() ? 0 : votes->second.size();
  if (have + 1 < quorum()) return;

  PreparedCert cert{p->second.env, {}};
  for (const auto& [sender, e] : votes->second) {
    if (cert.prepares.size() + 1 >= quorum()) break;
    cert.prepares.push_back(e);
  }
  slot.cert = std::move(cert);
  slot.certView = view_.viewNumber;
  Vote c{view_.viewNumber, seq, p->second.digest};
  auto commit = broadcast(MessageKind::Commit, c.encode());
  slot.commits[{c.view, c.digest}][self_] = commit;
  slot.myCommit = commit;
  slot.lastSent = clock_.now();
  checkCommitted(seq, slot);
}

void Replica::onCommit(const Envelope& env) {
  auto v = Vote::decode(env.body);
  notePeerSeq(env.sender, v.sequence);
  if (v.view > view_.viewNumber) return;
  if (v.sequence <= stableSeq_ || v.sequence > stableSeq_ + config_.watermarkWindow) return;
  auto& slot = slots_[v.sequence];
  if (slot.firstSeen == 0) slot.firstSeen = clock_.now();
  slot.commits[{v.view, v.digest}].emplace(env.sender, env);
  checkCommitted(v.sequence, slot);
}

void Replica::checkCommitted(std::uint64_t seq, Slot& slot) {
  if (slot.decided) return;
  for (const auto& [key, senders] : slot.commits) {
    if (senders.size() < quorum()) continue;
    auto p = slot.proposals.find(key.first);
    if (p == slot.proposals.end() || p->second.digest != key.second) continue;
    Decision d{key.first, key.second, p->second.batch, p->second.env, {}};
    for (const auto& [sender, e] : senders) {
      if (d.commits.size() >= quorum()) break;
      d.commits.push_back(e);
    }
    slot.decided = std::move(d);
    lastDecided_ = clock_.now();
    log().debug("{}: seq {} committed in view {}", self_, seq, key.first);
    tryExecute();
    return;
  }
}

void Replica::onBatchRequest(const Envelope& env) {
  auto m = BatchRequestMsg::decode(env.body);
  if (m.sequence <= stableSeq_) {
    // Already collected; the requester needs state transfer, and our
    // checkpoint proof tells it so.
    for (const auto& c : stableProof_) transport_.send(env.sender, c);
    return;
  }
  auto it = slots_.find(m.sequence);
  if (it == slots_.end() || !it->second.decided || it->second.decided->commits.size() < quorum()) return;
  const auto& d = *it->second.decided;
  transport_.send(env.sender, signEnv(MessageKind::BatchReply, BatchReplyMsg{d.prePrepare, d.commits}.encode()));
}

void Replica::onBatchReply(const Envelope& env) {
  auto m = BatchReplyMsg::decode(env.body);
  auto pp = validPrePrepareEnv(m.prePrepare, true);
  if (!pp || pp->sequence <= lastExecuted_ || pp->sequence <= stableSeq_) return;
  auto& slot = slots_[pp->sequence];
  if (slot.decided) return;
  std::set<NodeId> signers;
  std::vector<Envelope> commits;
  for (const auto& c : m.commits) {
    if (c.kind != MessageKind::Commit || !view_.contains(c.sender) || signers.count(c.sender)) continue;
    if (!c.verify(keyring_)) continue;
    auto v = Vote::decode(c.body);
    if (v.view != pp->view || v.sequence != pp->sequence || v.digest != pp->digest) continue;
    signers.insert(c.sender);
    commits.push_back(c);
  }
  if (signers.size() < quorum()) return;
  if (slot.firstSeen == 0) slot.firstSeen = clock_.now();
  slot.proposals.emplace(pp->view, Proposal{m.prePrepare, pp->digest, pp->batch});
  for (const auto& r : pp->batch.requests) {
    auto req = ClientRequest::decode(r.body);
    if (req.op == OpTag::Reconfigure) slot.reconfig = true;
    trackRequest(r, req, pp->sequence);
  }
  slot.decided = Decision{pp->view, pp->digest, pp->batch, m.prePrepare, std::move(commits)};
  lastDecided_ = clock_.now();
  log().debug("{}: seq {} learned from commit certificate sent by {}", self_, pp->sequence, env.sender);
  tryExecute();
}

// ---------------------------------------------------------------- execution

void Replica::resume() {
  tryExecute();
  tryPropose();
}

void Replica::tryExecute() {
  if (executing_ || transfer_ || !host_.canExecute()) return;
  executing_ = true;
  while (true) {
    auto it = slots_.find(lastExecuted_ + 1);
    if (it == slots_.end() || !it->second.decided || it->second.executed) break;
    executeSlot(it->first, it->second);
    if (!host_.canExecute()) break;
  }
  executing_ = false;
  tryPropose();
}

void Replica::executeSlot(std::uint64_t seq, Slot& slot) {
  auto batch = slot.decided->batch;
  auto out = sm_.execute(
      seq, batch,
      [this](const engine::Transaction& tx, const engine::Transaction* pending) { return host_.validate(tx, pending); },
      [this](const chain::Block& b) { host_.blockCreated(b); });
  slot.executed = true;
  lastExecuted_ = seq;
  lastProgress_ = clock_.now();
  vcAttempts_ = 0;
  for (std::size_t i = 0; i < batch.requests.size(); ++i) {
    auto req = ClientRequest::decode(batch.requests[i].body);
    sendReply(req, out.entry.results[i]);
    auto d = requestDigest(batch.requests[i]);
    requests_.erase(d);
    verifiedRequests_.erase(d);
  }
  host_.executed(seq, out.entry);
  log_[seq] = std::move(out.entry);
  if (seq % config_.checkpointInterval == 0) takeCheckpoint(seq);
  if (out.membershipChanged) applyMembership();
}

void Replica::takeCheckpoint(std::uint64_t seq) {
  auto bytes = sm_.snapshot();
  auto digest = sha256(bytes);
  ownSnapshots_[seq] = std::move(bytes);
  if (!isMember()) return;
  auto env = broadcast(MessageKind::Checkpoint, CheckpointMsg{seq, digest}.encode());
  auto& votes = checkpointVotes_[seq][digest];
  votes[self_] = env;
  if (votes.size() >= quorum()) {
    std::vector<Envelope> proof;
    for (const auto& [n, e] : votes) proof.push_back(e);
    makeStable(seq, digest, std::move(proof));
  }
}

void Replica::onCheckpoint(const Envelope& env) {
  auto c = CheckpointMsg::decode(env.body);
  if (c.sequence <= stableSeq_ || c.sequence % config_.checkpointInterval != 0) return;
  auto& votes = checkpointVotes_[c.sequence][c.stateDigest];
  votes.emplace(env.sender, env);
  auto own = ownSnapshots_.find(c.sequence);
  if (votes.size() >= quorum() && own != ownSnapshots_.end() && sha256(own->second) == c.stateDigest) {
    std::vector<Envelope> proof;
    for (const auto& [n, e] : votes) proof.push_back(e);
    makeStable(c.sequence, c.stateDigest, std::move(proof));
  }
}

void Replica::makeStable(std::uint64_t seq, const Digest& digest, std::vector<Envelope> proof) {
  if (seq <= stableSeq_) return;
  stableSeq_ = seq;
  stableDigest_ = digest;
  stableProof_ = std::move(proof);
  stableSnapshot_ = ownSnapshots_.at(seq);
  ownSnapshots_.erase(ownSnapshots_.begin(), ownSnapshots_.upper_bound(seq));
  checkpointVotes_.erase(checkpointVotes_.begin(), checkpointVotes_.upper_bound(seq));
  slots_.erase(slots_.begin(), slots_.upper_bound(seq));
  log_.erase(log_.begin(), log_.upper_bound(seq));
  log().debug("{}: checkpoint {} stable", self_, seq);
  tryPropose();
}

void Replica::resetProposals() {
  auto now = clock_.now();
  requestOrder_.clear();
  for (auto& [d, r] : requests_) {
    r.proposedIn.reset();
    r.firstSeen = now;
    r.forwarded = false;
    requestOrder_.push_back(d);
  }
}

void Replica::applyMembership() {
  auto before = view_;
  view_ = ViewConfig{view_.viewNumber + 1, sm_.members(), sm_.f()};
  targetView_ = view_.viewNumber;
  status_ = isMember() ? ReplicaStatus::Normal : ReplicaStatus::Observer;
  viewChanges_.clear();
  lastNewView_.reset();
  myViewChange_.reset();
  for (auto it = slots_.upper_bound(lastExecuted_); it != slots_.end();) {
    it = it->second.decided ? std::next(it) : slots_.erase(it);
  }
  nextSeq_ = lastExecuted_;
  resetProposals();
  log().info("{}: membership now {} members (f={}), view {}", self_, view_.n(), view_.f, view_.viewNumber);
  host_.configChanged(view_);
}

// ---------------------------------------------------------------- view change

Micros Replica::suspectTimeout() const { return 2 * config_.requestTimeout << std::min(vcAttempts_, 6); }

Micros Replica::viewChangeWait() const { return config_.viewChangeTimeout << std::min(std::max(vcAttempts_ - 1, 0), 6); }

void Replica::startViewChange(std::uint64_t newView) {
  if (!isMember() || newView <= view_.viewNumber) return;
  status_ = ReplicaStatus::ViewChanging;
  targetView_ = newView;
  ++vcAttempts_;
  ++viewChangesStarted_;
  vcStarted_ = vcLastSent_ = clock_.now();

  ViewChangeMsg m{newView, stableSeq_, stableDigest_, stableProof_, {}};
  for (auto it = slots_.upper_bound(stableSeq_); it != slots_.end(); ++it) {
    if (it->second.cert) m.prepared.push_back(*it->second.cert);
  }
  auto env = broadcast(MessageKind::ViewChange, m.encode());
  myViewChange_ = env;
  viewChanges_[newView][self_] = {env, std::move(m)};
  log().info("{}: view change to {} (attempt {})", self_, newView, vcAttempts_);
  maybeSendNewView(newView);
}

void Replica::onViewChange(const Envelope& env) {
  auto m = validViewChange(env);
  if (!m) {
    log().warn("{}: invalid VIEW_CHANGE from {}", self_, env.sender);
    return;
  }
  auto now = clock_.now();
  if (m->newView <= view_.viewNumber) {
    auto& last = newViewResent_[env.sender];
    if (now - last > config_.retransmitInterval) {
      if (lastNewView_) transport_.send(env.sender, *lastNewView_);
      // Show how far we got; a sender that missed a reconfiguration fetches from there.
      auto it = slots_.find(lastExecuted_);
      if (it != slots_.end() && it->second.myCommit) {
        transport_.send(env.sender, *it->second.myCommit);
      } else {
        for (const auto& c : stableProof_) transport_.send(env.sender, c);
      }
      last = now;
    }
    return;
  }
  auto view = m->newView;
  viewChanges_[view][env.sender] = {env, std::move(*m)};

  // Join once f+1 others want a newer view than the one we are heading for,
  // or want an earlier one than ours that is still newer than the installed view.
  std::set<NodeId> wanting;
  std::uint64_t lowest = UINT64_MAX;
  for (const auto& [v, byNode] : viewChanges_) {
    if (v <= view_.viewNumber) continue;
    if (status_ == ReplicaStatus::ViewChanging && v == targetView_) continue;
    for (const auto& [n, vc] : byNode) {
      if (n == self_) continue;
      wanting.insert(n);
    }
    lowest = std::min(lowest, v);
  }
  bool higher = status_ != ReplicaStatus::ViewChanging || lowest > targetView_;
  if (wanting.size() >= view_.f + 1 && lowest != UINT64_MAX) {
    std::set<NodeId> atLowest;
    for (const auto& [n, vc] : viewChanges_[lowest]) atLowest.insert(n);
    atLowest.erase(self_);
    if (higher || atLowest.size() >= view_.f + 1) startViewChange(lowest);
  }
  maybeSendNewView(view);
}

Replica::NewViewPlan Replica::planNewView(const std::vector<ViewChangeMsg>& vcs) const {
  NewViewPlan plan;
  for (const auto& vc : vcs) {
    if (vc.stableSequence > plan.minS || plan.minProof.empty()) {
      if (vc.stableSequence >= plan.minS) {
        plan.minS = vc.stableSequence;
        plan.minDigest = vc.stableDigest;
        plan.minProof = vc.checkpointProof;
      }
    }
  }
  if (plan.minS == 0) plan.minDigest = initialDigest_;
  std::map<std::uint64_t, std::pair<std::uint64_t, Batch>> best;
  for (const auto& vc : vcs) {
    for (const auto& cert : vc.prepared) {
      auto pp = PrePrepare::decode(cert.prePrepare.body);
      if (pp.sequence <= plan.minS) continue;
      auto it = best.find(pp.sequence);
      if (it == best.end() || pp.view > it->second.first) best[pp.sequence] = {pp.view, pp.batch};
    }
  }
  plan.maxS = best.empty() ? plan.minS : std::max(plan.minS, best.rbegin()->first);
  for (auto s = plan.minS + 1; s <= plan.maxS; ++s) {
    auto it = best.find(s);
    plan.batches[s] = it == best.end() ? Batch{} : it->second.second;
  }
  return plan;
}

void Replica::maybeSendNewView(std::uint64_t view) {
  if (status_ != ReplicaStatus::ViewChanging || targetView_ != view || view_.leaderOf(view) != self_) return;
  auto it = viewChanges_.find(view);
  if (it == viewChanges_.end() || it->second.size() < quorum() || !it->second.count(self_)) return;

  std::vector<ViewChangeMsg> msgs;
  NewViewMsg nv{view, {}, {}};
  nv.viewChanges.push_back(it->second.at(self_).first);
  msgs.push_back(it->second.at(self_).second);
  for (const auto& [n, vc] : it->second) {
    if (n == self_ || msgs.size() >= quorum()) continue;
    nv.viewChanges.push_back(vc.first);
    msgs.push_back(vc.second);
  }
  auto plan = planNewView(msgs);
  std::vector<PrePrepare> pps;
  for (const auto& [s, batch] : plan.batches) {
    PrePrepare pp{view, s, batch.digest(), batch};
    nv.prePrepares.push_back(signEnv(MessageKind::PrePrepare, pp.encode()));
    pps.push_back(std::move(pp));
  }
  auto env = broadcast(MessageKind::NewView, nv.encode());
  log().info("{}: NEW_VIEW {} re-proposes {} sequences", self_, view, pps.size());
  installView(view, plan, pps, nv.prePrepares, env);
}

void Replica::onNewView(const Envelope& env) {
  auto nv = NewViewMsg::decode(env.body);
  if (nv.view <= view_.viewNumber || env.sender != view_.leaderOf(nv.view)) return;
  std::vector<ViewChangeMsg> msgs;
  std::set<NodeId> senders;
  for (const auto& e : nv.viewChanges) {
    if (!view_.contains(e.sender) || senders.count(e.sender) || !e.verify(keyring_)) return;
    auto m = validViewChange(e);
    if (!m || m->newView != nv.view) return;
    senders.insert(e.sender);
    msgs.push_back(std::move(*m));
  }
  if (senders.size() < quorum()) return;
  auto plan = planNewView(msgs);
  if (nv.prePrepares.size() != plan.batches.size()) return;
  std::vector<PrePrepare> pps;
  auto expected = plan.batches.begin();
  for (const auto& e : nv.prePrepares) {
    auto pp = validPrePrepareEnv(e, true);
    if (!pp || pp->view != nv.view || pp->sequence != expected->first || pp->digest != expected->second.digest()) {
      log().warn("{}: NEW_VIEW {} from {} does not match its view changes", self_, nv.view, env.sender);
      return;
    }
    pps.push_back(std::move(*pp));
    ++expected;
  }
  installView(nv.view, plan, pps, nv.prePrepares, env);
}

void Replica::installView(std::uint64_t view, const NewViewPlan& plan, const std::vector<PrePrepare>& pps,
                          const std::vector<Envelope>& ppEnvs, const Envelope& newViewEnv) {
  view_.viewNumber = view;
  status_ = ReplicaStatus::Normal;
  targetView_ = view;
  lastNewView_ = newViewEnv;
  myViewChange_.reset();
  viewChanges_.erase(viewChanges_.begin(), viewChanges_.upper_bound(view));
  newViewResent_.clear();
  log().info("{}: installed view {} (leader {})", self_, view, view_.leader());

  if (plan.minS > stableSeq_) {
    auto own = ownSnapshots_.find(plan.minS);
    if (own != ownSnapshots_.end() && sha256(own->second) == plan.minDigest) {
      makeStable(plan.minS, plan.minDigest, plan.minProof);
    }
  }
  for (auto it = slots_.begin(); it != slots_.end();) {
    auto& slot = it->second;
    if (it->first > plan.minS) {
      slot.myPrepare.reset();
      slot.myCommit.reset();
    }
    if (it->first > plan.maxS && !slot.decided) {
      it = slots_.erase(it);
    } else {
      ++it;
    }
  }
  nextSeq_ = std::max(plan.maxS, lastExecuted_);
  resetProposals();
  lastDecided_ = clock_.now();
  for (std::size_t i = 0; i < pps.size(); ++i) {
    if (pps[i].sequence <= stableSeq_) continue;
    acceptPrePrepare(ppEnvs[i], pps[i]);
  }
  if (lastExecuted_ < plan.minS) startStateTransfer();
  tryExecute();
  tryPropose();
}

// ---------------------------------------------------------------- state transfer

StateReplyMsg Replica::localStateReply(std::uint64_t nonce, bool withBody) const {
  StateReplyMsg r;
  r.nonce = nonce;
  r.view = view_;
  r.stableSequence = stableSeq_;
  r.stableDigest = stableDigest_;
  r.checkpointProof = stableProof_;
  r.lastExecuted = lastExecuted_;
  for (auto it = log_.upper_bound(stableSeq_); it != log_.end() && it->first <= lastExecuted_; ++it) {
    r.logDigests.push_back(it->second.digest());
    if (withBody) r.entries.push_back(it->second);
  }
  if (withBody) r.snapshot = stableSnapshot_;
  return r;
}

void Replica::startStateTransfer() {
  if (transfer_) return;
  transfer_ = Transfer{};
  log().info("{}: starting state transfer from seq {}", self_, lastExecuted_);
  sendStateRequest();
}

void Replica::sendStateRequest() {
  std::vector<NodeId> others;
  for (const auto& m : view_.members) {
    if (m != self_) others.push_back(m);
  }
  transfer_->nonce = ++transferNonce_;
  transfer_->started = clock_.now();
  transfer_->replies.clear();
  if (others.empty()) {
    transfer_.reset();
    ++completedTransfers_;
    host_.stateInstalled();
    return;
  }
  transfer_->donor = others[donorCursor_++ % others.size()];
  if (isMember()) transfer_->replies[self_] = localStateReply(transfer_->nonce, false);
  StateRequestMsg req{transfer_->nonce, lastExecuted_, transfer_->donor};
  auto env = signEnv(MessageKind::StateRequest, req.encode());
  for (const auto& m : others) transport_.send(m, env);
}

void Replica::onStateRequest(const Envelope& env) {
  auto m = StateRequestMsg::decode(env.body);
  transport_.send(env.sender, signEnv(MessageKind::StateReply, localStateReply(m.nonce, m.donor == self_).encode()));
}

void Replica::onStateReply(const Envelope& env) {
  if (!transfer_ || !view_.contains(env.sender)) return;
  auto m = StateReplyMsg::decode(env.body);
  if (m.nonce != transfer_->nonce) return;
  transfer_->replies[env.sender] = std::move(m);
  if (transfer_->replies.count(transfer_->donor) && transfer_->replies.size() >= quorum()) finishTransfer();
}

void Replica::finishTransfer() {
  auto& replies = transfer_->replies;
  const auto& donor = replies.at(transfer_->donor);
  if (!donor.snapshot || !validCheckpointProof(donor.stableSequence, donor.stableDigest, donor.checkpointProof) ||
      sha256(*donor.snapshot) != donor.stableDigest) {
    log().warn("{}: SNAPSHOT_DIGEST_MISMATCH from donor {}", self_, transfer_->donor);
    ++snapshotMismatches_;
    sendStateRequest();
    return;
  }

  auto digestAt = [](const StateReplyMsg& r, std::uint64_t seq) -> std::optional<Digest> {
    if (seq <= r.stableSequence || seq > r.lastExecuted) return std::nullopt;
    auto idx = seq - r.stableSequence - 1;
    if (idx >= r.logDigests.size()) return std::nullopt;
    return r.logDigests[idx];
  };
  std::vector<const LogEntry*> entries;
  auto expectSeq = donor.stableSequence + 1;
  for (std::size_t i = 0; i < donor.entries.size(); ++i) {
    const auto& e = donor.entries[i];
    if (e.sequence != expectSeq) break;
    auto d = e.digest();
    std::size_t agree = 0;
    for (const auto& [n, r] : replies) {
      auto at = digestAt(r, e.sequence);
      if (at && *at == d) ++agree;
    }
    if (agree < view_.f + 1) break;
    entries.push_back(&e);
    ++expectSeq;
  }

  bool changed = false;
  auto membersBefore = sm_.members();
  if (donor.stableSequence > lastExecuted_) {
    sm_.install(*donor.snapshot);
    lastExecuted_ = donor.stableSequence;
    stableSeq_ = donor.stableSequence;
    stableDigest_ = donor.stableDigest;
    stableProof_ = donor.checkpointProof;
    stableSnapshot_ = *donor.snapshot;
    slots_.erase(slots_.begin(), slots_.upper_bound(stableSeq_));
    log_.clear();
    ownSnapshots_.clear();
    ownSnapshots_[stableSeq_] = stableSnapshot_;
    checkpointVotes_.erase(checkpointVotes_.begin(), checkpointVotes_.upper_bound(stableSeq_));
    changed = true;
  }
  for (const auto* e : entries) {
    if (e->sequence != lastExecuted_ + 1) continue;
    auto out = sm_.replay(*e, [this](const chain::Block& b) { host_.blockCreated(b); });
    lastExecuted_ = e->sequence;
    auto& slot = slots_[e->sequence];
    slot.executed = true;
    if (!slot.decided) slot.decided = Decision{0, e->batch.digest(), e->batch, {}, {}};
    for (const auto& r : e->batch.requests) requests_.erase(requestDigest(r));
    host_.executed(e->sequence, *e);
    log_[e->sequence] = *e;
    if (e->sequence % config_.checkpointInterval == 0) takeCheckpoint(e->sequence);
    changed = true;
  }

  std::vector<std::uint64_t> views;
  for (const auto& [n, r] : replies) views.push_back(r.view.viewNumber);
  std::sort(views.rbegin(), views.rend());
  auto adopted = views.size() > view_.f ? views[view_.f] : view_.viewNumber;
  bool membersChanged = sm_.members() != membersBefore || sm_.members() != view_.members;
  if (adopted > view_.viewNumber || membersChanged) {
    view_.viewNumber = std::max(adopted, view_.viewNumber);
    view_.members = sm_.members();
    view_.f = sm_.f();
    targetView_ = view_.viewNumber;
    status_ = isMember() ? ReplicaStatus::Normal : ReplicaStatus::Observer;
    for (auto it = slots_.upper_bound(lastExecuted_); it != slots_.end();) {
      it = it->second.decided ? std::next(it) : slots_.erase(it);
    }
    lastNewView_.reset();
    viewChanges_.erase(viewChanges_.begin(), viewChanges_.upper_bound(view_.viewNumber));
    host_.configChanged(view_);
  } else if (status_ == ReplicaStatus::Observer && isMember()) {
    status_ = ReplicaStatus::Normal;
  }
  nextSeq_ = std::max(nextSeq_, lastExecuted_);
  resetProposals();

  log().info("{}: state transfer done at seq {} (view {}, {} log entries{})", self_, lastExecuted_, view_.viewNumber,
             entries.size(), changed ? "" : ", nothing new");
  transfer_.reset();
  ++completedTransfers_;
  lastProgress_ = lastDecided_ = transferDone_ = clock_.now();
  host_.stateInstalled();
  tryExecute();
}

void Replica::reset() {
  sm_ = OrderingStateMachine(sm_.blockSize(), initialView_, keyring_);
  view_ = initialView_;
  status_ = isMember() ? ReplicaStatus::Normal : ReplicaStatus::Observer;
  targetView_ = view_.viewNumber;
  slots_.clear();
  lastExecuted_ = nextSeq_ = 0;
  requests_.clear();
  requestOrder_.clear();
  ownSnapshots_.clear();
  checkpointVotes_.clear();
  stableSeq_ = 0;
  stableSnapshot_ = sm_.snapshot();
  stableDigest_ = initialDigest_;
  stableProof_.clear();
  log_.clear();
  viewChanges_.clear();
  lastNewView_.reset();
  myViewChange_.reset();
  transfer_.reset();
  startStateTransfer();
}

// ---------------------------------------------------------------- timers

void Replica::tick() {
  auto now = clock_.now();
  if (transfer_) {
    if (now - transfer_->started > config_.stateTransferTimeout) {
      log().info("{}: state transfer round timed out, trying another donor", self_);
      sendStateRequest();
    }
    return;
  }
  if (!isMember()) return;

  for (auto& [seq, slot] : slots_) {
    if (slot.decided || now - slot.lastSent < config_.retransmitInterval) continue;
    auto p = slot.proposals.find(view_.viewNumber);
    bool any = false;
    if (status_ == ReplicaStatus::Normal && p != slot.proposals.end() && view_.leaderOf(p->first) == self_) {
      sendToOthers(p->second.env);
      any = true;
    }
    if (slot.myPrepare) sendToOthers(*slot.myPrepare), any = true;
    if (slot.myCommit) sendToOthers(*slot.myCommit), any = true;
    if (any) slot.lastSent = now;
  }

  auto next = slots_.find(lastExecuted_ + 1);
  bool waiting = (next != slots_.end() && !next->second.decided) ||
                 (next == slots_.end() && slots_.upper_bound(lastExecuted_ + 1) != slots_.end());
  if (!waiting) {
    // Peers voting beyond us in a view we never saw.
    std::size_t ahead = 0;
    for (const auto& [peer, seq] : peerSeq_) {
      if (peer != self_ && seq > lastExecuted_ && view_.contains(peer)) ++ahead;
    }
    // Donors may have executed more while their replies were in flight.
    waiting = ahead >= view_.f + 1 || (completedTransfers_ > 0 && now - transferDone_ < 8 * config_.retransmitInterval);
  }
  if (waiting) {
    Micros since = std::max(lastProgress_, next != slots_.end() ? next->second.firstSeen : 0);
    if (now - since > 2 * config_.retransmitInterval && now - lastFetch_ > config_.retransmitInterval) {
      broadcast(MessageKind::BatchRequest, BatchRequestMsg{lastExecuted_ + 1}.encode());
      lastFetch_ = now;
    }
  }

  if (host_.canExecute() && now - lastProgress_ > 4 * config_.retransmitInterval) {
    for (auto it = checkpointVotes_.rbegin(); it != checkpointVotes_.rend(); ++it) {
      if (it->first <= lastExecuted_) break;
      bool lagging = std::any_of(it->second.begin(), it->second.end(), [&](const auto& kv) {
        return kv.second.size() - kv.second.count(self_) >= view_.f + 1;
      });
      if (lagging) {
        log().info("{}: peers checkpointed seq {} while we are at {}", self_, it->first, lastExecuted_);
        startStateTransfer();
        return;
      }
    }
  }

  if (status_ == ReplicaStatus::ViewChanging) {
    if (now - vcStarted_ > viewChangeWait()) {
      startViewChange(targetView_ + 1);
    } else if (myViewChange_ && now - vcLastSent_ > config_.retransmitInterval) {
      sendToOthers(*myViewChange_);
      vcLastSent_ = now;
    }
    return;
  }

  if (!isLeader() && host_.canExecute()) {
    for (auto& [d, r] : requests_) {
      auto age = now - r.firstSeen;
      if (age > suspectTimeout() && now - lastDecided_ > suspectTimeout() / 2) {
        log().info("{}: request from {} pending for {} ms, suspecting leader {}", self_, r.req.clientId, age / 1000,
                   view_.leader());
        startViewChange(view_.viewNumber + 1);
        return;
      }
      if (age > config_.requestTimeout && !r.forwarded) {
        transport_.send(view_.leader(), r.env);
        r.forwarded = true;
      }
    }
  }
  tryPropose();
}

}  // namespace bftflow::pbft
