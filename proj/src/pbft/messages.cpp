// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/pbft/messages.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace bftflow::pbft {

namespace {

void putDigest(codec::Writer& w, const Digest& d) { w.raw(d.bytes); }

Digest getDigest(codec::Reader& r) {
  Digest d;
  d.bytes = r.array<Digest::kSize>();
  return d;
}

template <typename T>
T decodeWhole(ByteView bytes, T (*fn)(codec::Reader&)) {
  codec::Reader r(bytes);
  T v = fn(r);
  r.expectDone();
  return v;
}

}  // namespace

bool ViewConfig::contains(const NodeId& id) const {
  return std::find(members.begin(), members.end(), id) != members.end();
}

void ViewConfig::validate() const {
  if (members.empty()) throw std::invalid_argument("view has no members");
  if (members.size() < 3 * static_cast<std::size_t>(f) + 1) {
    throw std::invalid_argument("view of " + std::to_string(members.size()) + " members cannot tolerate f=" +
                                std::to_string(f));
  }
  std::set<NodeId> unique(members.begin(), members.end());
  if (unique.size() != members.size()) throw std::invalid_argument("duplicate member in view");
}

void ViewConfig::encode(codec::Writer& w) const {
  w.u64(viewNumber).u32(f).u32(static_cast<std::uint32_t>(members.size()));
  for (const auto& m : members) w.str(m);
}

ViewConfig ViewConfig::decode(codec::Reader& r) {
  ViewConfig v;
  v.viewNumber = r.u64();
  v.f = r.u32();
  auto n = r.count(4);
  for (std::uint32_t i = 0; i < n; ++i) v.members.push_back(r.str());
  return v;
}

const char* toString(OpTag op) {
  switch (op) {
    case OpTag::AddTransaction: return "ADD_TRANSACTION";
    case OpTag::GetLatestHash: return "GET_LATEST_HASH";
    case OpTag::Reconfigure: return "RECONFIGURE";
  }
  return "?";
}

Bytes Reconfiguration::encode() const {
  codec::Writer w;
  w.boolean(add).str(node).boolean(newF.has_value()).u32(newF.value_or(0));
  return std::move(w).bytes();
}

Reconfiguration Reconfiguration::decode(ByteView bytes) {
  codec::Reader r(bytes);
  Reconfiguration c;
  c.add = r.boolean();
  c.node = r.str();
  bool hasF = r.boolean();
  auto f = r.u32();
  if (hasF) c.newF = f;
  r.expectDone();
  return c;
}

ClientRequest ClientRequest::addTransaction(const engine::Transaction& tx) {
  ClientRequest c;
  c.op = OpTag::AddTransaction;
  c.payload = tx.serialize();
  return c;
}

ClientRequest ClientRequest::latestHash(bool ordered) {
  ClientRequest c;
  c.op = OpTag::GetLatestHash;
  c.ordered = ordered;
  return c;
}

ClientRequest ClientRequest::reconfigure(const Reconfiguration& r) {
  ClientRequest c;
  c.op = OpTag::Reconfigure;
  c.payload = r.encode();
  return c;
}

Bytes ClientRequest::encode() const {
  codec::Writer w(payload.size() + 32);
  w.str(clientId).u64(requestSequence).u8(static_cast<std::uint8_t>(op)).boolean(ordered).blob(payload);
  return std::move(w).bytes();
}

ClientRequest ClientRequest::decode(ByteView bytes) {
  codec::Reader r(bytes);
  ClientRequest c;
  c.clientId = r.str();
  c.requestSequence = r.u64();
  auto op = r.u8();
  if (op < 1 || op > 3) throw codec::DecodeError("unknown operation tag");
  c.op = static_cast<OpTag>(op);
  c.ordered = r.boolean();
  c.payload = r.blob();
  r.expectDone();
  if (c.op != OpTag::GetLatestHash && !c.ordered) throw codec::DecodeError("operation must be ordered");
  return c;
}

Envelope ClientRequest::sign(const KeyPair& key) const { return Envelope::sign(clientId, MessageKind::Request, encode(), key); }

Digest requestDigest(const Envelope& request) { return sha256(request.signingPayload()); }

void Batch::encode(codec::Writer& w) const {
  w.i64(timestampMs);
  encodeEnvelopes(w, requests);
}

Batch Batch::decode(codec::Reader& r) {
  Batch b;
  b.timestampMs = r.i64();
  b.requests = decodeEnvelopes(r);
  return b;
}

Digest Batch::digest() const {
  codec::Writer w;
  encode(w);
  return sha256(w.bytes());
}

Bytes PrePrepare::encode() const {
  codec::Writer w;
  w.u64(view).u64(sequence);
  putDigest(w, digest);
  batch.encode(w);
  return std::move(w).bytes();
}

PrePrepare PrePrepare::decode(ByteView bytes) {
  return decodeWhole<PrePrepare>(bytes, +[](codec::Reader& r) {
    PrePrepare p;
    p.view = r.u64();
    p.sequence = r.u64();
    p.digest = getDigest(r);
    p.batch = Batch::decode(r);
    return p;
  });
}

Bytes Vote::encode() const {
  codec::Writer w(48);
  w.u64(view).u64(sequence);
  putDigest(w, digest);
  return std::move(w).bytes();
}

Vote Vote::decode(ByteView bytes) {
  return decodeWhole<Vote>(bytes, +[](codec::Reader& r) {
    Vote v;
    v.view = r.u64();
    v.sequence = r.u64();
    v.digest = getDigest(r);
    return v;
  });
}

Bytes CheckpointMsg::encode() const {
  codec::Writer w(40);
  w.u64(sequence);
  putDigest(w, stateDigest);
  return std::move(w).bytes();
}

CheckpointMsg CheckpointMsg::decode(ByteView bytes) {
  return decodeWhole<CheckpointMsg>(bytes, +[](codec::Reader& r) {
    CheckpointMsg c;
    c.sequence = r.u64();
    c.stateDigest = getDigest(r);
    return c;
  });
}

void PreparedCert::encode(codec::Writer& w) const {
  prePrepare.encode(w);
  encodeEnvelopes(w, prepares);
}

PreparedCert PreparedCert::decode(codec::Reader& r) {
  PreparedCert c;
  c.prePrepare = Envelope::decode(r);
  c.prepares = decodeEnvelopes(r);
  return c;
}

Bytes ViewChangeMsg::encode() const {
  codec::Writer w;
  w.u64(newView).u64(stableSequence);
  putDigest(w, stableDigest);
  encodeEnvelopes(w, checkpointProof);
  w.u32(static_cast<std::uint32_t>(prepared.size()));
  for (const auto& c : prepared) c.encode(w);
  return std::move(w).bytes();
}

ViewChangeMsg ViewChangeMsg::decode(ByteView bytes) {
  return decodeWhole<ViewChangeMsg>(bytes, +[](codec::Reader& r) {
    ViewChangeMsg m;
    m.newView = r.u64();
    m.stableSequence = r.u64();
    m.stableDigest = getDigest(r);
    m.checkpointProof = decodeEnvelopes(r);
    auto n = r.count(8);
    for (std::uint32_t i = 0; i < n; ++i) m.prepared.push_back(PreparedCert::decode(r));
    return m;
  });
}

Bytes NewViewMsg::encode() const {
  codec::Writer w;
  w.u64(view);
  encodeEnvelopes(w, viewChanges);
  encodeEnvelopes(w, prePrepares);
  return std::move(w).bytes();
}

NewViewMsg NewViewMsg::decode(ByteView bytes) {
  return decodeWhole<NewViewMsg>(bytes, +[](codec::Reader& r) {
    NewViewMsg m;
    m.view = r.u64();
    m.viewChanges = decodeEnvelopes(r);
    m.prePrepares = decodeEnvelopes(r);
    return m;
  });
}

Bytes OrderingReply::encode() const {
  codec::Writer w(160);
  w.u8(static_cast<std::uint8_t>(op)).boolean(accepted).str(code).str(reason).u64(consensusSequence);
  putDigest(w, latestBlockHash);
  w.u64(latestBlockNumber);
  putDigest(w, pendingQueueHash);
  w.u64(blockNumber);
  return std::move(w).bytes();
}

OrderingReply OrderingReply::decode(ByteView bytes) {
  return decodeWhole<OrderingReply>(bytes, +[](codec::Reader& r) {
    OrderingReply o;
    auto op = r.u8();
    if (op < 1 || op > 3) throw codec::DecodeError("unknown operation tag");
    o.op = static_cast<OpTag>(op);
    o.accepted = r.boolean();
    o.code = r.str();
    o.reason = r.str();
    o.consensusSequence = r.u64();
    o.latestBlockHash = getDigest(r);
    o.latestBlockNumber = r.u64();
    o.pendingQueueHash = getDigest(r);
    o.blockNumber = r.u64();
    return o;
  });
}

Bytes ReplyMsg::encode() const {
  codec::Writer w(result.size() + 12);
  w.u64(requestSequence).blob(result);
  return std::move(w).bytes();
}

ReplyMsg ReplyMsg::decode(ByteView bytes) {
  return decodeWhole<ReplyMsg>(bytes, +[](codec::Reader& r) {
    ReplyMsg m;
    m.requestSequence = r.u64();
    m.result = r.blob();
    return m;
  });
}

void LogEntry::encode(codec::Writer& w) const {
  w.u64(sequence);
  batch.encode(w);
  w.u32(static_cast<std::uint32_t>(results.size()));
  for (const auto& res : results) w.blob(res);
}

LogEntry LogEntry::decode(codec::Reader& r) {
  LogEntry e;
  e.sequence = r.u64();
  e.batch = Batch::decode(r);
  auto n = r.count(4);
  for (std::uint32_t i = 0; i < n; ++i) e.results.push_back(r.blob());
  if (e.results.size() != e.batch.requests.size()) throw codec::DecodeError("log entry result count mismatch");
  return e;
}

Digest LogEntry::digest() const {
  codec::Writer w;
  encode(w);
  return sha256(w.bytes());
}

Bytes BatchRequestMsg::encode() const {
  codec::Writer w(8);
  w.u64(sequence);
  return std::move(w).bytes();
}

BatchRequestMsg BatchRequestMsg::decode(ByteView bytes) {
  return decodeWhole<BatchRequestMsg>(bytes, +[](codec::Reader& r) { return BatchRequestMsg{r.u64()}; });
}

Bytes BatchReplyMsg::encode() const {
  codec::Writer w;
  prePrepare.encode(w);
  encodeEnvelopes(w, commits);
  return std::move(w).bytes();
}

BatchReplyMsg BatchReplyMsg::decode(ByteView bytes) {
  return decodeWhole<BatchReplyMsg>(bytes, +[](codec::Reader& r) {
    BatchReplyMsg m;
    m.prePrepare = Envelope::decode(r);
    m.commits = decodeEnvelopes(r);
    return m;
  });
}

Bytes StateRequestMsg::encode() const {
  codec::Writer w;
  w.u64(nonce).u64(lastExecuted).str(donor);
  return std::move(w).bytes();
}

StateRequestMsg StateRequestMsg::decode(ByteView bytes) {
  return decodeWhole<StateRequestMsg>(bytes, +[](codec::Reader& r) {
    StateRequestMsg m;
    m.nonce = r.u64();
    m.lastExecuted = r.u64();
    m.donor = r.str();
    return m;
  });
}

Bytes StateReplyMsg::encode() const {
  codec::Writer w;
  w.u64(nonce);
  view.encode(w);
  w.u64(stableSequence);
  putDigest(w, stableDigest);
  encodeEnvelopes(w, checkpointProof);
  w.u64(lastExecuted).u32(static_cast<std::uint32_t>(logDigests.size()));
  for (const auto& d : logDigests) putDigest(w, d);
  w.boolean(snapshot.has_value());
  if (snapshot) w.blob(*snapshot);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) e.encode(w);
  return std::move(w).bytes();
}

StateReplyMsg StateReplyMsg::decode(ByteView bytes) {
  return decodeWhole<StateReplyMsg>(bytes, +[](codec::Reader& r) {
    StateReplyMsg m;
    m.nonce = r.u64();
    m.view = ViewConfig::decode(r);
    m.stableSequence = r.u64();
    m.stableDigest = getDigest(r);
    m.checkpointProof = decodeEnvelopes(r);
    m.lastExecuted = r.u64();
    auto n = r.count(Digest::kSize);
    for (std::uint32_t i = 0; i < n; ++i) m.logDigests.push_back(getDigest(r));
    if (r.boolean()) m.snapshot = r.blob();
    auto e = r.count(20);
    for (std::uint32_t i = 0; i < e; ++i) m.entries.push_back(LogEntry::decode(r));
    return m;
  });
}

void encodeEnvelopes(codec::Writer& w, const std::vector<Envelope>& envs) {
  w.u32(static_cast<std::uint32_t>(envs.size()));
  for (const auto& e : envs) e.encode(w);
}

std::vector<Envelope> decodeEnvelopes(codec::Reader& r) {
  auto n = r.count(1 + 4 + 4 + Signature::kSize);
  std::vector<Envelope> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(Envelope::decode(r));
  return out;
}

}  // namespace bftflow::pbft
