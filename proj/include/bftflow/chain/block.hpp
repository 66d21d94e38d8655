// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "bftflow/engine/transaction.hpp"

namespace bftflow::chain {

/// Numbered, hash-chained container of transactions. The hash covers the
/// number, the previous hash and the canonical transaction list; the timestamp
/// is informational and stays outside the digest.
struct Block {
  std::uint64_t number = 0;
  Digest previousHash;
  std::vector<engine::Transaction> transactions;
  std::int64_t timestampMs = 0;
  Digest hash;

  static Block make(std::uint64_t number, const Digest& previousHash, std::vector<engine::Transaction> txs,
                    std::int64_t timestampMs);
  /// Block 0: no transactions, all-zero previous hash, zero timestamp.
  static const Block& genesis();

  Digest computeHash() const;
  bool hashValid() const { return computeHash() == hash; }

  void encode(codec::Writer& w) const;
  static Block decode(codec::Reader& r);
  Bytes serialize() const;
  static Block deserialize(ByteView bytes);

  bool operator==(const Block& o) const { return serialize() == o.serialize(); }
};

/// Hash preimage shared by the block and by independent checkers.
Bytes hashPreimage(std::uint64_t number, const Digest& previousHash, const std::vector<engine::Transaction>& txs);

}  // namespace bftflow::chain
