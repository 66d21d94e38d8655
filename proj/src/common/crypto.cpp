// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/common/crypto.hpp"

#include <sodium.h>

#include <algorithm>
#include <stdexcept>

namespace bftflow {

void initCrypto() {
  static const int rc = sodium_init();
  if (rc < 0) throw std::runtime_error("libsodium initialization failed");
}

Digest Digest::fromHex(std::string_view hex) {
  auto raw = bftflow::fromHex(hex);
  if (raw.size() != kSize) throw std::invalid_argument("digest must be 32 bytes");
  Digest d;
  std::copy(raw.begin(), raw.end(), d.bytes.begin());
  return d;
}

bool Digest::isZero() const {
  return std::all_of(bytes.begin(), bytes.end(), [](auto b) { return b == 0; });
}

std::string Digest::hex() const { return toHex(bytes); }

Digest sha256(ByteView data) {
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

PublicKey PublicKey::fromHex(std::string_view hex) {
  auto raw = bftflow::fromHex(hex);
  if (raw.size() != kSize) throw std::invalid_argument("public key must be 32 bytes");
  PublicKey k;
  std::copy(raw.begin(), raw.end(), k.bytes.begin());
  return k;
}

std::string PublicKey::hex() const { return toHex(bytes); }

KeyPair KeyPair::generate() {
  initCrypto();
  Digest seed;
  randombytes_buf(seed.bytes.data(), seed.bytes.size());
  return fromSeed(seed);
}

KeyPair KeyPair::fromSeed(const Digest& seed) {
  initCrypto();
  KeyPair kp;
  kp.seed_ = seed;
  crypto_sign_seed_keypair(kp.public_.bytes.data(), kp.secret_.data(), seed.bytes.data());
  return kp;
}

Signature KeyPair::sign(ByteView message) const {
  Signature sig;
  crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(), secret_.data());
  return sig;
}

bool verify(const PublicKey& key, ByteView message, const Signature& sig) {
  return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(), key.bytes.data()) == 0;
}

std::optional<PublicKey> Keyring::find(const NodeId& id) const {
  auto it = keys_.find(id);
  if (it == keys_.end()) return std::nullopt;
  return it->second;
}

bool Keyring::verify(const NodeId& signer, ByteView message, const Signature& sig) const {
  auto it = keys_.find(signer);
  return it != keys_.end() && bftflow::verify(it->second, message, sig);
}

}  // namespace bftflow
