// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/pbft/client.hpp"

#include "bftflow/common/log.hpp"

namespace bftflow::pbft {

const char* toString(ClientStatus s) {
  switch (s) {
    case ClientStatus::Ok: return "OK";
    case ClientStatus::Timeout: return "TIMEOUT";
    case ClientStatus::DivergentReplies: return "DIVERGENT_REPLIES";
  }
  return "?";
}

OrderingClient::OrderingClient(NodeId self, std::shared_ptr<const KeyPair> key, ViewConfig membership,
                               p2p::Transport& transport, const p2p::Clock& clock, ClientConfig config,
                               std::uint64_t firstSequence)
    : self_(std::move(self)),
      key_(std::move(key)),
      membership_(std::move(membership)),
      transport_(transport),
      clock_(clock),
      config_(config),
      nextSequence_(firstSequence) {}

std::uint64_t OrderingClient::submit(ClientRequest request, Callback done) {
  request.clientId = self_;
  request.requestSequence = nextSequence_++;
  auto seq = request.requestSequence;
  auto env = request.sign(*key_);
  auto& p = pending_[seq];
  p.request = std::move(request);
  p.env = std::move(env);
  p.done = std::move(done);
  p.read = !p.request.ordered;
  send(p);
  return seq;
}

void OrderingClient::readLatestHash(Callback done) {
  submit(ClientRequest::latestHash(false), [this, done = std::move(done)](const ClientResult& r) {
    if (r.status == ClientStatus::Ok) {
      done(r);
      return;
    }
    log().debug("{}: unordered read {} ({}), retrying ordered", self_, r.requestSequence, toString(r.status));
    submit(ClientRequest::latestHash(true), done);
  });
}

void OrderingClient::send(Pending& p) {
  p.sentAt = clock_.now();
  for (const auto& m : membership_.members) transport_.send(m, p.env);
}

void OrderingClient::deliver(const Envelope& env) {
  if (env.kind != MessageKind::Reply || !membership_.contains(env.sender)) return;
  ReplyMsg reply;
  try {
    reply = ReplyMsg::decode(env.body);
  } catch (const codec::DecodeError&) {
    return;
  }
  if (env.sender == self_) {
    auto it = awaitingLocal_.find(reply.requestSequence);
    if (it != awaitingLocal_.end()) {
      bool mismatch = it->second != reply.result;
      awaitingLocal_.erase(it);
      if (mismatch && onLocalMismatch) onLocalMismatch(reply.requestSequence);
      return;
    }
  }
  auto it = pending_.find(reply.requestSequence);
  if (it == pending_.end()) return;
  it->second.replies[env.sender] = std::move(reply.result);
  evaluate(reply.requestSequence);
}

void OrderingClient::evaluate(std::uint64_t seq) {
  auto& p = pending_.at(seq);
  std::map<Bytes, std::size_t> counts;
  std::size_t best = 0;
  const Bytes* winner = nullptr;
  for (const auto& [sender, bytes] : p.replies) {
    if (!membership_.contains(sender)) continue;
    auto c = ++counts[bytes];
    if (c > best) {
      best = c;
      winner = &bytes;
    }
  }
  auto need = membership_.replyQuorum();
  std::size_t received = 0;
  for (const auto& [bytes, c] : counts) received += c;

  ClientResult result;
  result.requestSequence = seq;
  result.replies = received;
  if (winner && best >= need) {
    try {
      result.reply = OrderingReply::decode(*winner);
    } catch (const codec::DecodeError&) {
      result.status = ClientStatus::DivergentReplies;
      finish(seq, result);
      return;
    }
    auto local = p.replies.find(self_);
    if (membership_.contains(self_) && !p.read) {
      if (local == p.replies.end()) {
        awaitingLocal_[seq] = *winner;
        while (awaitingLocal_.size() > 1024) awaitingLocal_.erase(awaitingLocal_.begin());
      } else if (local->second != *winner && onLocalMismatch) {
        log().warn("{}: local reply to request {} disagrees with the quorum", self_, seq);
        onLocalMismatch(seq);
      }
    }
    finish(seq, result);
    return;
  }
  // Divergent once no body can still reach the quorum with the members yet to reply.
  auto outstanding = membership_.n() - std::min(membership_.n(), received);
  if (received >= need && best + outstanding < need) {
    log().warn("{}: {} replies to request {} never agree", self_, received, seq);
    result.status = ClientStatus::DivergentReplies;
    finish(seq, result);
  }
}

void OrderingClient::finish(std::uint64_t seq, ClientResult result) {
  auto node = pending_.extract(seq);
  if (node.mapped().done) node.mapped().done(result);
}

void OrderingClient::tick() {
  auto now = clock_.now();
  std::vector<std::uint64_t> expired;
  for (auto& [seq, p] : pending_) {
    auto limit = p.read ? config_.readTimeout : config_.timeout;
    if (now - p.sentAt < limit) continue;
    if (!p.read && p.attempt < config_.attempts) {
      ++p.attempt;
      log().debug("{}: request {} rebroadcast (attempt {})", self_, seq, p.attempt);
      send(p);
    } else {
      expired.push_back(seq);
    }
  }
  for (auto seq : expired) {
    ClientResult r;
    r.status = ClientStatus::Timeout;
    r.requestSequence = seq;
    r.replies = pending_.at(seq).replies.size();
    finish(seq, r);
  }
}

}  // namespace bftflow::pbft
