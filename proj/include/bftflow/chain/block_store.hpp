// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>

#include "bftflow/chain/block.hpp"

namespace bftflow::chain {

/// Result of walking previousHash links from a starting block toward genesis.
struct ChainCheck {
  /// Reached an intact genesis block.
  bool ok = false;
  /// Lowest block whose hash and linkage verified on the walk.
  std::optional<std::uint64_t> lowestVerified;
  /// First block (from the top) that failed hash recomputation or did not decode.
  std::optional<std::uint64_t> failedAt;
  /// First block absent from the store.
  std::optional<std::uint64_t> missing;
};

/// Hash-chained block log. Blocks may be stored out of order; the head is the
/// highest block linked without gaps back to genesis. With a data directory,
/// every block is a file `blocks/<number>.blk` holding its canonical
/// serialization, and `HEAD` holds (headNumber, headHash).
class BlockStore {
 public:
  /// In-memory store holding genesis.
  BlockStore();
  /// Opens or creates a store under `dir`. Unreadable block files are
  /// remembered as corrupt rather than failing the open.
  static BlockStore open(const std::filesystem::path& dir);

  /// Stores a block without moving the head. Replaces any block stored under
  /// the same number.
  void put(const Block& block);
  /// Stores block head+1 after checking its hash and linkage, and advances the
  /// head. Returns false (and stores nothing) otherwise.
  bool append(const Block& block);
  /// Removes a stored block above the head.
  void erase(std::uint64_t number);
  /// Drops every block above `number` and makes it the head. Only for a node
  /// discarding blocks its own faulty ordering replica produced.
  void rewind(std::uint64_t number);

  const Block* get(std::uint64_t number) const;
  const Block* findByHash(const Digest& hash) const;
  bool contains(std::uint64_t number) const { return blocks_.count(number) != 0; }
  std::uint64_t headNumber() const { return headNumber_; }
  const Digest& headHash() const { return headHash_; }
  const Block& head() const { return blocks_.at(headNumber_); }
  /// Highest stored number, head or not.
  std::uint64_t highest() const { return blocks_.empty() ? 0 : blocks_.rbegin()->first; }
  std::size_t size() const { return blocks_.size(); }
  const std::map<std::uint64_t, Block>& blocks() const { return blocks_; }
  const std::set<std::uint64_t>& corrupt() const { return corrupt_; }
  const std::optional<std::filesystem::path>& directory() const { return dir_; }

  ChainCheck verifyChainBackward(const Digest& fromHash) const;

  /// Canonical serialization of genesis..head, for byte comparison.
  Bytes exportChain() const;

  static std::filesystem::path blockFile(const std::filesystem::path& dir, std::uint64_t number);

 private:
  void persist(const Block& block);
  void persistHead();
  void advance();

  std::optional<std::filesystem::path> dir_;
  std::map<std::uint64_t, Block> blocks_;
  std::map<Digest, std::uint64_t> byHash_;
  std::set<std::uint64_t> corrupt_;
  std::uint64_t headNumber_ = 0;
  Digest headHash_;
};

}  // namespace bftflow::chain
