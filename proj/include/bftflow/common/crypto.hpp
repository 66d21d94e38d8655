// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// The deployment uses exactly one digest algorithm (SHA-256) and one signature
// scheme (Ed25519), both provided by libsodium.

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "bftflow/common/bytes.hpp"

namespace bftflow {

struct Digest {
  static constexpr std::size_t kSize = 32;
  std::array<std::uint8_t, kSize> bytes{};

  static Digest zero() { return {}; }
  static Digest fromHex(std::string_view hex);

  bool isZero() const;
  std::string hex() const;
  /// First 8 hex chars, for log lines.
  std::string shortHex() const { return hex().substr(0, 8); }

  auto operator<=>(const Digest&) const = default;
};

Digest sha256(ByteView data);

struct Signature {
  static constexpr std::size_t kSize = 64;
  std::array<std::uint8_t, kSize> bytes{};
  auto operator<=>(const Signature&) const = default;
};

struct PublicKey {
  static constexpr std::size_t kSize = 32;
  std::array<std::uint8_t, kSize> bytes{};
  static PublicKey fromHex(std::string_view hex);
  std::string hex() const;
  auto operator<=>(const PublicKey&) const = default;
};

class KeyPair {
 public:
  static KeyPair generate();
  /// Deterministic key from a 32-byte seed; used by the simulator and tests.
  static KeyPair fromSeed(const Digest& seed);
  static KeyPair fromSeedHex(std::string_view hex) { return fromSeed(Digest::fromHex(hex)); }

  const PublicKey& publicKey() const { return public_; }
  Signature sign(ByteView message) const;
  std::string seedHex() const { return seed_.hex(); }

 private:
  PublicKey public_;
  std::array<std::uint8_t, 64> secret_{};
  Digest seed_;
};

bool verify(const PublicKey& key, ByteView message, const Signature& sig);

/// Static registry of node public keys from the permissioned peer list.
class Keyring {
 public:
  void add(const NodeId& id, const PublicKey& key) { keys_[id] = key; }
  bool contains(const NodeId& id) const { return keys_.count(id) != 0; }
  std::optional<PublicKey> find(const NodeId& id) const;
  bool verify(const NodeId& signer, ByteView message, const Signature& sig) const;
  const std::map<NodeId, PublicKey>& all() const { return keys_; }

 private:
  std::map<NodeId, PublicKey> keys_;
};

void initCrypto();

}  // namespace bftflow
