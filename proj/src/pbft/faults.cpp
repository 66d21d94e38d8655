// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/pbft/faults.hpp"

#include "bftflow/pbft/messages.hpp"

namespace bftflow::pbft::faults {

namespace {

Digest flip(Digest d, std::mt19937_64& rng) {
  d.bytes[rng() % Digest::kSize] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
  return d;
}

}  // namespace

p2p::Mutator conflictingPrePrepare() {
  return [](const Bytes& body, std::mt19937_64& rng) {
    auto pp = PrePrepare::decode(body);
    if (pp.batch.requests.size() > 1) {
      pp.batch.requests.erase(pp.batch.requests.begin() + static_cast<std::ptrdiff_t>(rng() % pp.batch.requests.size()));
    } else {
      pp.batch.timestampMs += 1 + static_cast<std::int64_t>(rng() % 1000);
    }
    pp.digest = pp.batch.digest();
    return pp.encode();
  };
}

p2p::Mutator conflictingVote() {
  return [](const Bytes& body, std::mt19937_64& rng) {
    auto v = Vote::decode(body);
    v.digest = flip(v.digest, rng);
    return v.encode();
  };
}

p2p::Mutator corruptedReply() {
  return [](const Bytes& body, std::mt19937_64& rng) {
    auto r = ReplyMsg::decode(body);
    try {
      auto reply = OrderingReply::decode(r.result);
      reply.accepted = !reply.accepted;
      reply.latestBlockHash = flip(reply.latestBlockHash, rng);
      r.result = reply.encode();
    } catch (const codec::DecodeError&) {
      r.result.push_back(0);
    }
    return r.encode();
  };
}

p2p::Mutator conflictingCheckpoint() {
  return [](const Bytes& body, std::mt19937_64& rng) {
    auto c = CheckpointMsg::decode(body);
    c.stateDigest = flip(c.stateDigest, rng);
    return c.encode();
  };
}

void installAll(p2p::SimulatedNetwork& net) {
  net.setMutator(MessageKind::PrePrepare, conflictingPrePrepare());
  net.setMutator(MessageKind::Prepare, conflictingVote());
  net.setMutator(MessageKind::Commit, conflictingVote());
  net.setMutator(MessageKind::Reply, corruptedReply());
  net.setMutator(MessageKind::Checkpoint, conflictingCheckpoint());
}

}  // namespace bftflow::pbft::faults
