// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>

#include "bftflow/common/codec.hpp"
#include "bftflow/common/crypto.hpp"

namespace bftflow::p2p {

/// Message kind tags. Consensus and block exchange share one transport but
/// use disjoint tag ranges.
enum class MessageKind : std::uint8_t {
  Request = 0x01,
  PrePrepare = 0x02,
  Prepare = 0x03,
  Commit = 0x04,
  Reply = 0x05,
  ViewChange = 0x06,
  NewView = 0x07,
  Checkpoint = 0x08,
  StateRequest = 0x09,
  StateReply = 0x0a,
  BatchRequest = 0x0b,
  BatchReply = 0x0c,

  BlockRequest = 0x20,
  BlockSend = 0x21,
  BlockchainRequest = 0x22,
  BlockchainSend = 0x23,

  JoinRequest = 0x30,
  JoinAck = 0x31,

  Hello = 0x3f,
};

enum class Channel { Consensus, Blocks, Membership, Control };

Channel channelOf(MessageKind kind);
const char* toString(MessageKind kind);
std::optional<MessageKind> kindFromByte(std::uint8_t b);

/// Signed message: the signature covers (sender, kind, body).
struct Envelope {
  NodeId sender;
  MessageKind kind = MessageKind::Request;
  Bytes body;
  Signature signature;

  static Envelope sign(const NodeId& sender, MessageKind kind, Bytes body, const KeyPair& key);

  Bytes signingPayload() const;
  bool verify(const Keyring& keys) const;

  /// Canonical encoding without the length prefix: kind, sender, body, signature.
  void encode(codec::Writer& w) const;
  static Envelope decode(codec::Reader& r);

  /// Wire frame: 4-byte big-endian length of everything that follows, then
  /// the canonical encoding.
  Bytes frame() const;
  /// Parses a frame payload (the bytes after the length prefix).
  static Envelope fromFramePayload(ByteView payload);

  bool operator==(const Envelope&) const = default;
};

inline constexpr std::size_t kMaxFrameSize = 64u << 20;

}  // namespace bftflow::p2p
