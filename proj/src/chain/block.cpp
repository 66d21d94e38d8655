// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/chain/block.hpp"

namespace bftflow::chain {

Bytes hashPreimage(std::uint64_t number, const Digest& previousHash, const std::vector<engine::Transaction>& txs) {
  codec::Writer w(256);
  w.u64(number).raw(previousHash.bytes).u32(static_cast<std::uint32_t>(txs.size()));
  for (const auto& tx : txs) tx.encode(w);
  return std::move(w).bytes();
}

Block Block::make(std::uint64_t number, const Digest& previousHash, std::vector<engine::Transaction> txs,
                  std::int64_t timestampMs) {
  Block b;
  b.number = number;
  b.previousHash = previousHash;
  b.transactions = std::move(txs);
  b.timestampMs = timestampMs;
  b.hash = b.computeHash();
  return b;
}

const Block& Block::genesis() {
  static const Block g = make(0, Digest::zero(), {}, 0);
  return g;
}

Digest Block::computeHash() const { return sha256(hashPreimage(number, previousHash, transactions)); }

void Block::encode(codec::Writer& w) const {
  w.u64(number).raw(previousHash.bytes).u32(static_cast<std::uint32_t>(transactions.size()));
  for (const auto& tx : transactions) tx.encode(w);
  w.i64(timestampMs).raw(hash.bytes);
}

Block Block::decode(codec::Reader& r) {
  Block b;
  b.number = r.u64();
  b.previousHash.bytes = r.array<Digest::kSize>();
  auto n = r.count(64);
  b.transactions.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) b.transactions.push_back(engine::Transaction::decode(r));
  b.timestampMs = r.i64();
  b.hash.bytes = r.array<Digest::kSize>();
  return b;
}

Bytes Block::serialize() const {
  codec::Writer w(256);
  encode(w);
  return std::move(w).bytes();
}

Block Block::deserialize(ByteView bytes) {
  codec::Reader r(bytes);
  auto b = decode(r);
  r.expectDone();
  return b;
}

}  // namespace bftflow::chain
