// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/chain/block_service.hpp"

#include <algorithm>

#include "bftflow/common/log.hpp"

namespace bftflow::chain {

Bytes BlockRequestMsg::encode() const {
  codec::Writer w;
  w.raw(hash.bytes);
  return std::move(w).bytes();
}

BlockRequestMsg BlockRequestMsg::decode(ByteView bytes) {
  codec::Reader r(bytes);
  BlockRequestMsg m;
  m.hash.bytes = r.array<Digest::kSize>();
  r.expectDone();
  return m;
}

Bytes BlockchainRequestMsg::encode() const {
  codec::Writer w;
  w.u64(lower).u64(upper);
  return std::move(w).bytes();
}

BlockchainRequestMsg BlockchainRequestMsg::decode(ByteView bytes) {
  codec::Reader r(bytes);
  BlockchainRequestMsg m;
  m.lower = r.u64();
  m.upper = r.u64();
  r.expectDone();
  if (m.lower > m.upper) throw codec::DecodeError("block range upside down");
  return m;
}

Bytes BlocksMsg::encode() const {
  codec::Writer w;
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) b.encode(w);
  return std::move(w).bytes();
}

BlocksMsg BlocksMsg::decode(ByteView bytes) {
  codec::Reader r(bytes);
  BlocksMsg m;
  auto n = r.count(64);
  for (std::uint32_t i = 0; i < n; ++i) m.blocks.push_back(Block::decode(r));
  r.expectDone();
  return m;
}

const char* toString(SyncStatus s) {
  switch (s) {
    case SyncStatus::Idle: return "IDLE";
    case SyncStatus::Syncing: return "SYNCING";
    case SyncStatus::Stalled: return "SYNC_STALLED";
    case SyncStatus::Halted: return "HALTED";
  }
  return "?";
}

BlockService::BlockService(NodeId self, std::shared_ptr<const KeyPair> key, BlockStore& store,
                           p2p::Transport& transport, const p2p::Clock& clock, BlockServiceConfig config,
                           std::uint64_t seed)
    : self_(std::move(self)),
      key_(std::move(key)),
      store_(store),
      transport_(transport),
      clock_(clock),
      config_(config),
      rng_(seed),
      roundTimeout_(config.fetchTimeout) {}

void BlockService::send(const NodeId& to, MessageKind kind, Bytes body) {
  transport_.send(to, Envelope::sign(self_, kind, std::move(body), *key_));
}

void BlockService::restart() {
  status_ = SyncStatus::Idle;
  target_.reset();
  buffer_.clear();
  lastDonor_.reset();
}

void BlockService::receiveBlock(const Block& block) {
  if (status_ == SyncStatus::Halted) return;
  auto head = store_.headNumber();
  if (block.number <= head) {
    const auto* mine = store_.get(block.number);
    if (mine && mine->hash == block.hash) return;
    status_ = SyncStatus::Halted;
    if (fault_) fault_("LINKAGE_MISMATCH", "ordering produced a different block " + std::to_string(block.number));
    return;
  }
  if (!block.hashValid()) {
    status_ = SyncStatus::Halted;
    if (fault_) fault_("LINKAGE_MISMATCH", "ordering produced block " + std::to_string(block.number) + " with a bad hash");
    return;
  }
  if (block.number == head + 1) {
    if (block.previousHash != store_.headHash()) {
      log().error("{}: LINKAGE_MISMATCH at block {}: previous hash {} but head is {}", self_, block.number,
                  block.previousHash.shortHex(), store_.headHash().shortHex());
      status_ = SyncStatus::Halted;
      if (fault_) fault_("LINKAGE_MISMATCH", "block " + std::to_string(block.number) + " does not extend the head");
      return;
    }
    store_.append(block);
    if (applied_) applied_(block);
    drain();
    return;
  }
  // Ahead of the head: the gap must be fetched first.
  if (!target_ || block.number > target_->first) target_ = {block.number, block.hash};
  bufferBlock(block);
  if (status_ != SyncStatus::Syncing && status_ != SyncStatus::Stalled) {
    status_ = SyncStatus::Syncing;
    fanout_ = 1;
    fullRounds_ = 0;
    requestGap();
  }
}

void BlockService::syncFromHead(const Digest& latestHash, std::uint64_t latestNumber) {
  if (status_ == SyncStatus::Halted) return;
  if (latestNumber <= store_.headNumber()) {
    const auto* mine = store_.get(latestNumber);
    if (!mine || mine->hash != latestHash) {
      log().error("{}: local block {} conflicts with the consensus head", self_, latestNumber);
      status_ = SyncStatus::Halted;
      if (fault_) fault_("LINKAGE_MISMATCH", "local chain conflicts with the consensus head");
    }
    return;
  }
  if (!target_ || latestNumber > target_->first) target_ = {latestNumber, latestHash};
  log().info("{}: syncing blocks {}..{}", self_, store_.headNumber() + 1, latestNumber);
  status_ = SyncStatus::Syncing;
  fanout_ = 1;
  fullRounds_ = 0;
  roundTimeout_ = config_.fetchTimeout;
  requestGap();
}

void BlockService::bufferBlock(const Block& block) {
  buffer_[block.number] = block;
  while (buffer_.size() > config_.bufferLimit) buffer_.erase(std::prev(buffer_.end()));
}

std::optional<std::pair<std::uint64_t, Digest>> BlockService::topGap() {
  if (!target_) return std::nullopt;
  auto n = target_->first;
  auto expected = target_->second;
  while (n > store_.headNumber()) {
    auto it = buffer_.find(n);
    if (it == buffer_.end()) return std::pair{n, expected};
    if (it->second.hash != expected || !it->second.hashValid()) {
      buffer_.erase(it);
      return std::pair{n, expected};
    }
    expected = it->second.previousHash;
    --n;
  }
  if (expected != store_.headHash()) {
    log().error("{}: consensus chain does not link to local block {}", self_, n);
    status_ = SyncStatus::Halted;
    if (fault_) fault_("LINKAGE_MISMATCH", "fetched chain does not extend local block " + std::to_string(n));
  }
  return std::nullopt;
}

void BlockService::drain() {
  while (true) {
    auto it = buffer_.find(store_.headNumber() + 1);
    if (it == buffer_.end()) break;
    auto block = std::move(it->second);
    buffer_.erase(it);
    if (!store_.append(block)) break;
    if (applied_) applied_(block);
  }
  buffer_.erase(buffer_.begin(), buffer_.upper_bound(store_.headNumber()));
  if (synced() && (status_ == SyncStatus::Syncing || status_ == SyncStatus::Stalled)) {
    log().info("{}: chain synced to block {}", self_, store_.headNumber());
    status_ = SyncStatus::Idle;
    lastDonor_.reset();
  }
}

void BlockService::requestGap() {
  auto gap = topGap();
  if (status_ == SyncStatus::Halted) return;
  if (!gap) {
    drain();
    return;
  }
  auto upper = gap->first;
  auto lower = std::max<std::uint64_t>(store_.headNumber() + 1, upper + 1 > config_.maxRun ? upper + 1 - config_.maxRun : 1);

  auto peers = transport_.peers();
  if (peers.empty()) return;
  std::shuffle(peers.begin(), peers.end(), rng_);
  if (lastDonor_) {
    auto it = std::find(peers.begin(), peers.end(), *lastDonor_);
    if (it != peers.end()) std::rotate(peers.begin(), it, it + 1);
  }
  peers.resize(std::min(fanout_, peers.size()));

  Bytes body;
  MessageKind kind;
  if (lower == upper) {
    kind = MessageKind::BlockRequest;
    body = BlockRequestMsg{gap->second}.encode();
  } else {
    kind = MessageKind::BlockchainRequest;
    body = BlockchainRequestMsg{lower, upper}.encode();
  }
  auto env = Envelope::sign(self_, kind, std::move(body), *key_);
  for (const auto& p : peers) {
    transport_.send(p, env);
    requestLog_.push_back({kind, p, lower, upper});
  }
  requestedUpper_ = upper;
  roundStarted_ = clock_.now();
}

void BlockService::deliver(const Envelope& env) {
  try {
    switch (env.kind) {
      case MessageKind::BlockRequest: handleBlockRequest(env); break;
      case MessageKind::BlockchainRequest: handleBlockchainRequest(env); break;
      case MessageKind::BlockSend:
      case MessageKind::BlockchainSend: handleBlocks(env); break;
      default: break;
    }
  } catch (const codec::DecodeError& e) {
    log().warn("{}: malformed {} from {}: {}", self_, p2p::toString(env.kind), env.sender, e.what());
  }
}

void BlockService::handleBlockRequest(const Envelope& env) {
  auto m = BlockRequestMsg::decode(env.body);
  if (!serving_) return;
  if (const auto* b = store_.findByHash(m.hash)) send(env.sender, MessageKind::BlockSend, BlocksMsg{{*b}}.encode());
}

void BlockService::handleBlockchainRequest(const Envelope& env) {
  auto m = BlockchainRequestMsg::decode(env.body);
  // Only answer when the upper end can be served.
  if (!serving_ || !store_.contains(m.upper)) return;
  auto lo = m.upper;
  while (lo > m.lower && store_.contains(lo - 1) && m.upper - lo + 1 < config_.maxRun) --lo;
  BlocksMsg out;
  for (auto n = lo; n <= m.upper; ++n) out.blocks.push_back(*store_.get(n));
  send(env.sender, MessageKind::BlockchainSend, out.encode());
}

void BlockService::handleBlocks(const Envelope& env) {
  if (!target_ || status_ == SyncStatus::Halted) return;
  auto m = BlocksMsg::decode(env.body);
  auto before = topGap();
  auto headBefore = store_.headNumber();
  for (const auto& b : m.blocks) {
    if (b.number <= store_.headNumber() || b.number > target_->first || !b.hashValid()) continue;
    if (buffer_.count(b.number)) continue;
    bufferBlock(b);
  }
  auto after = topGap();
  bool progress = (before && (!after || after->first < before->first)) || store_.headNumber() > headBefore;
  if (!progress) return;
  lastDonor_ = env.sender;
  fanout_ = 1;
  fullRounds_ = 0;
  roundTimeout_ = config_.fetchTimeout;
  if (status_ == SyncStatus::Stalled) status_ = SyncStatus::Syncing;
  requestGap();
}

void BlockService::tick() {
  if (status_ != SyncStatus::Syncing && status_ != SyncStatus::Stalled) return;
  if (clock_.now() - roundStarted_ < roundTimeout_) return;
  auto peers = transport_.peers().size();
  if (fanout_ >= peers) {
    if (++fullRounds_ >= config_.retryBudget) {
      if (status_ != SyncStatus::Stalled) {
        log().warn("{}: SYNC_STALLED at head {} (target {})", self_, store_.headNumber(),
                   target_ ? target_->first : 0);
      }
      status_ = SyncStatus::Stalled;
      roundTimeout_ = std::min(roundTimeout_ * 2, config_.maxBackoff);
    }
  } else {
    fanout_ = std::min(fanout_ * 2, peers);
  }
  requestGap();
}

}  // namespace bftflow::chain
