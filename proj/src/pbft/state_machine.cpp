// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/pbft/state_machine.hpp"

#include <algorithm>

#include "bftflow/common/log.hpp"

namespace bftflow::pbft {

using engine::Transaction;

OrderingStateMachine::OrderingStateMachine(std::size_t blockSize, ViewConfig membership, Keyring keyring)
    : blockSize_(blockSize), keyring_(std::move(keyring)), members_(std::move(membership.members)), f_(membership.f) {
  if (blockSize_ == 0) throw std::invalid_argument("blockSize must be at least 1");
  state_.lastBlockHash = chain::Block::genesis().hash;
}

Digest OrderingStateMachine::pendingQueueHash() const {
  codec::Writer w;
  w.u32(static_cast<std::uint32_t>(state_.pendingTxQueue.size()));
  for (const auto& tx : state_.pendingTxQueue) w.raw(tx.id().bytes);
  return sha256(w.bytes());
}

std::optional<Bytes> OrderingStateMachine::cachedReply(const NodeId& client, std::uint64_t requestSequence) const {
  auto it = clients_.find(client);
  if (it == clients_.end()) return std::nullopt;
  auto r = it->second.replies.find(requestSequence);
  if (r == it->second.replies.end()) return std::nullopt;
  return r->second;
}

bool OrderingStateMachine::stale(const NodeId& client, std::uint64_t requestSequence) const {
  auto it = clients_.find(client);
  return it != clients_.end() && requestSequence <= it->second.low && !it->second.replies.count(requestSequence);
}

void OrderingStateMachine::remember(const NodeId& client, std::uint64_t requestSequence, const Bytes& result) {
  auto& w = clients_[client];
  w.replies[requestSequence] = result;
  while (w.replies.size() > kReplyWindow) {
    w.low = std::max(w.low, w.replies.begin()->first);
    w.replies.erase(w.replies.begin());
  }
}

OrderingReply OrderingStateMachine::latestHash(bool ordered) const {
  OrderingReply r;
  r.op = OpTag::GetLatestHash;
  r.accepted = true;
  r.latestBlockHash = state_.lastBlockHash;
  r.latestBlockNumber = state_.lastBlockNumber;
  if (ordered) {
    r.consensusSequence = lastSequence_;
    r.pendingQueueHash = pendingQueueHash();
  }
  return r;
}

const Transaction* OrderingStateMachine::relevantPending(const Transaction& tx) const {
  for (auto it = state_.pendingTxQueue.rbegin(); it != state_.pendingTxQueue.rend(); ++it) {
    if (tx.isInstanceState() && it->isInstanceState() && it->state().caseId == tx.state().caseId) return &*it;
  }
  const std::string& modelId = tx.isInstanceState() ? tx.state().modelId : tx.model().modelId;
  for (auto it = state_.pendingTxQueue.rbegin(); it != state_.pendingTxQueue.rend(); ++it) {
    if (it->isModelUpdate() && it->model().modelId == modelId) return &*it;
  }
  return nullptr;
}

OrderingReply OrderingStateMachine::decide(const ClientRequest& req, std::uint64_t seq, const Validator& validate,
                                           std::optional<Transaction>& tx) const {
  OrderingReply r;
  r.op = req.op;
  r.consensusSequence = seq;
  auto reject = [&](std::string code, std::string reason) {
    r.accepted = false;
    r.code = std::move(code);
    r.reason = std::move(reason);
    return r;
  };

  switch (req.op) {
    case OpTag::GetLatestHash:
      r.accepted = true;
      return r;

    case OpTag::AddTransaction: {
      try {
        tx = Transaction::deserialize(req.payload);
      } catch (const std::exception& e) {
        return reject("MALFORMED_TRANSACTION", e.what());
      }
      if (!tx->verifySignature(keyring_)) return reject("BAD_SIGNATURE", "transaction signature does not verify");
      for (const auto& q : state_.pendingTxQueue) {
        if (q.id() == tx->id()) return reject("DUPLICATE_TRANSACTION", "transaction already queued");
      }
      auto v = validate(*tx, relevantPending(*tx));
      if (!v.accepted) return reject(engine::toString(v.code), v.reason);
      r.accepted = true;
      r.blockNumber = state_.lastBlockNumber + 1;
      return r;
    }

    case OpTag::Reconfigure: {
      Reconfiguration c;
      try {
        c = Reconfiguration::decode(req.payload);
      } catch (const std::exception& e) {
        return reject("MALFORMED_RECONFIGURATION", e.what());
      }
      ViewConfig next{0, members_, c.newF.value_or(f_)};
      bool member = std::find(next.members.begin(), next.members.end(), c.node) != next.members.end();
      if (c.add) {
        if (!keyring_.contains(c.node)) return reject("REJECTED", c.node + " is not on the permissioned peer list");
        if (member) return reject("ALREADY_MEMBER", c.node + " is already a member");
        next.members.push_back(c.node);
      } else {
        if (!member) return reject("REJECTED", c.node + " is not a member");
        next.members.erase(std::find(next.members.begin(), next.members.end(), c.node));
      }
      try {
        next.validate();
      } catch (const std::invalid_argument& e) {
        return reject("REJECTED", e.what());
      }
      r.accepted = true;
      return r;
    }
  }
  return reject("UNKNOWN_OPERATION", "unknown operation");
}

void OrderingStateMachine::apply(const ClientRequest& req, const OrderingReply& reply,
                                 const std::optional<Transaction>& tx, std::int64_t timestampMs, Outcome& out,
                                 const BlockSink& sink) {
  if (!reply.accepted) return;
  if (req.op == OpTag::AddTransaction) {
    state_.pendingTxQueue.push_back(*tx);
    if (state_.pendingTxQueue.size() >= blockSize_) {
      auto block = chain::Block::make(state_.lastBlockNumber + 1, state_.lastBlockHash,
                                      std::move(state_.pendingTxQueue), timestampMs);
      state_.pendingTxQueue.clear();
      state_.lastBlockHash = block.hash;
      state_.lastBlockNumber = block.number;
      state_.lastTimestampMs = timestampMs;
      out.blocks.push_back(std::move(block));
      if (sink) sink(out.blocks.back());
    }
  } else if (req.op == OpTag::Reconfigure) {
    auto c = Reconfiguration::decode(req.payload);
    if (c.add) {
      members_.push_back(c.node);
    } else {
      members_.erase(std::find(members_.begin(), members_.end(), c.node));
    }
    if (c.newF) f_ = *c.newF;
    out.membershipChanged = true;
  }
}

void OrderingStateMachine::finishReply(OrderingReply& reply) const {
  reply.latestBlockHash = state_.lastBlockHash;
  reply.latestBlockNumber = state_.lastBlockNumber;
  reply.pendingQueueHash = pendingQueueHash();
}

OrderingStateMachine::Outcome OrderingStateMachine::execute(std::uint64_t seq, const Batch& batch,
                                                            const Validator& validate, const BlockSink& sink) {
  Outcome out;
  out.entry.sequence = seq;
  out.entry.batch = batch;
  auto ts = std::max(batch.timestampMs, state_.lastTimestampMs);
  for (const auto& env : batch.requests) {
    auto req = ClientRequest::decode(env.body);
    if (auto cached = cachedReply(req.clientId, req.requestSequence)) {
      out.entry.results.push_back(*cached);
      continue;
    }
    if (stale(req.clientId, req.requestSequence)) {
      OrderingReply r;
      r.op = req.op;
      r.code = "STALE_REQUEST";
      r.consensusSequence = seq;
      finishReply(r);
      out.entry.results.push_back(r.encode());
      continue;
    }
    std::optional<Transaction> tx;
    auto reply = decide(req, seq, validate, tx);
    apply(req, reply, tx, ts, out, sink);
    finishReply(reply);
    auto bytes = reply.encode();
    remember(req.clientId, req.requestSequence, bytes);
    out.entry.results.push_back(std::move(bytes));
  }
  lastSequence_ = seq;
  return out;
}

OrderingStateMachine::Outcome OrderingStateMachine::replay(const LogEntry& entry, const BlockSink& sink) {
  Outcome out;
  out.entry = entry;
  auto ts = std::max(entry.batch.timestampMs, state_.lastTimestampMs);
  for (std::size_t i = 0; i < entry.batch.requests.size(); ++i) {
    auto req = ClientRequest::decode(entry.batch.requests[i].body);
    if (cachedReply(req.clientId, req.requestSequence) || stale(req.clientId, req.requestSequence)) continue;
    auto reply = OrderingReply::decode(entry.results.at(i));
    std::optional<Transaction> tx;
    if (req.op == OpTag::AddTransaction && reply.accepted) tx = Transaction::deserialize(req.payload);
    apply(req, reply, tx, ts, out, sink);
    remember(req.clientId, req.requestSequence, entry.results[i]);
  }
  lastSequence_ = entry.sequence;
  return out;
}

Bytes OrderingStateMachine::snapshot() const {
  codec::Writer w;
  w.u64(lastSequence_).raw(state_.lastBlockHash.bytes).u64(state_.lastBlockNumber).i64(state_.lastTimestampMs);
  w.u64(blockSize_).u32(f_).u32(static_cast<std::uint32_t>(members_.size()));
  for (const auto& m : members_) w.str(m);
  w.u32(static_cast<std::uint32_t>(state_.pendingTxQueue.size()));
  for (const auto& tx : state_.pendingTxQueue) tx.encode(w);
  w.u32(static_cast<std::uint32_t>(clients_.size()));
  for (const auto& [client, window] : clients_) {
    w.str(client).u64(window.low).u32(static_cast<std::uint32_t>(window.replies.size()));
    for (const auto& [seq, bytes] : window.replies) w.u64(seq).blob(bytes);
  }
  return std::move(w).bytes();
}

void OrderingStateMachine::install(ByteView snapshot) {
  codec::Reader r(snapshot);
  auto seq = r.u64();
  OrderingState st;
  st.lastBlockHash.bytes = r.array<Digest::kSize>();
  st.lastBlockNumber = r.u64();
  st.lastTimestampMs = r.i64();
  if (r.u64() != blockSize_) throw codec::DecodeError("snapshot block size differs from configuration");
  auto f = r.u32();
  std::vector<NodeId> members;
  auto n = r.count(4);
  for (std::uint32_t i = 0; i < n; ++i) members.push_back(r.str());
  auto q = r.count(8);
  for (std::uint32_t i = 0; i < q; ++i) st.pendingTxQueue.push_back(Transaction::decode(r));
  std::map<NodeId, ClientWindow> clients;
  auto c = r.count(16);
  for (std::uint32_t i = 0; i < c; ++i) {
    auto id = r.str();
    auto& win = clients[id];
    win.low = r.u64();
    auto k = r.count(12);
    for (std::uint32_t j = 0; j < k; ++j) {
      auto s = r.u64();
      win.replies[s] = r.blob();
    }
  }
  r.expectDone();
  lastSequence_ = seq;
  state_ = std::move(st);
  f_ = f;
  members_ = std::move(members);
  clients_ = std::move(clients);
}

}  // namespace bftflow::pbft
