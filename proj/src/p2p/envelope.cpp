// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/p2p/envelope.hpp"

namespace bftflow::p2p {

Channel channelOf(MessageKind kind) {
  auto v = static_cast<std::uint8_t>(kind);
  if (v < 0x20) return Channel::Consensus;
  if (v < 0x30) return Channel::Blocks;
  if (v < 0x3f) return Channel::Membership;
  return Channel::Control;
}

const char* toString(MessageKind kind) {
  switch (kind) {
    case MessageKind::Request: return "REQUEST";
    case MessageKind::PrePrepare: return "PRE_PREPARE";
    case MessageKind::Prepare: return "PREPARE";
    case MessageKind::Commit: return "COMMIT";
    case MessageKind::Reply: return "REPLY";
    case MessageKind::ViewChange: return "VIEW_CHANGE";
    case MessageKind::NewView: return "NEW_VIEW";
    case MessageKind::Checkpoint: return "CHECKPOINT";
    case MessageKind::StateRequest: return "STATE_REQUEST";
    case MessageKind::StateReply: return "STATE_REPLY";
    case MessageKind::BatchRequest: return "BATCH_REQUEST";
    case MessageKind::BatchReply: return "BATCH_REPLY";
    case MessageKind::BlockRequest: return "BLOCK_REQUEST";
    case MessageKind::BlockSend: return "BLOCK_SEND";
    case MessageKind::BlockchainRequest: return "BLOCKCHAIN_REQUEST";
    case MessageKind::BlockchainSend: return "BLOCKCHAIN_SEND";
    case MessageKind::JoinRequest: return "JOIN_REQUEST";
    case MessageKind::JoinAck: return "JOIN_ACK";
    case MessageKind::Hello: return "HELLO";
  }
  return "?";
}

std::optional<MessageKind> kindFromByte(std::uint8_t b) {
  switch (b) {
    case 0x01: case 0x02: case 0x03: case 0x04: case 0x05: case 0x06: case 0x07: case 0x08: case 0x09: case 0x0a: case 0x0b: case 0x0c:
    case 0x20: case 0x21: case 0x22: case 0x23:
    case 0x30: case 0x31:
    case 0x3f:
      return static_cast<MessageKind>(b);
    default:
      return std::nullopt;
  }
}

Envelope Envelope::sign(const NodeId& sender, MessageKind kind, Bytes body, const KeyPair& key) {
  Envelope e{sender, kind, std::move(body), {}};
  e.signature = key.sign(e.signingPayload());
  return e;
}

Bytes Envelope::signingPayload() const {
  codec::Writer w(body.size() + sender.size() + 16);
  w.str(sender).u8(static_cast<std::uint8_t>(kind)).blob(body);
  return std::move(w).bytes();
}

bool Envelope::verify(const Keyring& keys) const { return keys.verify(sender, signingPayload(), signature); }

void Envelope::encode(codec::Writer& w) const {
  w.u8(static_cast<std::uint8_t>(kind)).str(sender).blob(body).raw(signature.bytes);
}

Envelope Envelope::decode(codec::Reader& r) {
  Envelope e;
  auto kind = kindFromByte(r.u8());
  if (!kind) throw codec::DecodeError("unknown message kind");
  e.kind = *kind;
  e.sender = r.str();
  e.body = r.blob();
  e.signature.bytes = r.array<Signature::kSize>();
  return e;
}

Bytes Envelope::frame() const {
  codec::Writer inner(body.size() + sender.size() + 80);
  encode(inner);
  codec::Writer w(inner.size() + 4);
  w.u32(static_cast<std::uint32_t>(inner.size())).raw(inner.bytes());
  return std::move(w).bytes();
}

Envelope Envelope::fromFramePayload(ByteView payload) {
  codec::Reader r(payload);
  auto e = decode(r);
  r.expectDone();
  return e;
}

}  // namespace bftflow::p2p
