// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/chain/block_store.hpp"

#include <fmt/format.h>

#include <fstream>

#include "bftflow/common/log.hpp"

namespace fs = std::filesystem;

namespace bftflow::chain {

namespace {

Bytes readFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void writeFileAtomic(const fs::path& p, const Bytes& data) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

}  // namespace

BlockStore::BlockStore() {
  const auto& g = Block::genesis();
  blocks_.emplace(0, g);
  byHash_.emplace(g.hash, 0);
  headHash_ = g.hash;
}

fs::path BlockStore::blockFile(const fs::path& dir, std::uint64_t number) {
  return dir / "blocks" / fmt::format("{:012}.blk", number);
}

BlockStore BlockStore::open(const fs::path& dir) {
  BlockStore s;
  s.dir_ = dir;
  fs::create_directories(dir / "blocks");
  for (const auto& entry : fs::directory_iterator(dir / "blocks")) {
    if (entry.path().extension() != ".blk") continue;
    std::uint64_t number = 0;
    try {
      number = std::stoull(entry.path().stem().string());
    } catch (const std::exception&) {
      continue;
    }
    try {
      auto raw = readFile(entry.path());
      auto b = Block::deserialize(raw);
      if (b.number != number || b.serialize() != raw) throw codec::DecodeError("non-canonical block file");
      s.blocks_[number] = b;
      s.byHash_[b.hash] = number;
    } catch (const std::exception& e) {
      log().error("block file {} unreadable: {}", entry.path().string(), e.what());
      if (number != 0) s.blocks_.erase(number);
      s.corrupt_.insert(number);
    }
  }
  // Genesis is fixed; a differing file is corruption, a missing one is written.
  if (s.blocks_.at(0).serialize() != Block::genesis().serialize()) {
    s.corrupt_.insert(0);
    s.blocks_[0] = Block::genesis();
  }
  s.byHash_[Block::genesis().hash] = 0;
  if (!fs::exists(blockFile(dir, 0))) s.persist(Block::genesis());

  std::optional<std::uint64_t> recorded;
  if (fs::exists(dir / "HEAD")) {
    try {
      auto raw = readFile(dir / "HEAD");
      codec::Reader r(raw);
      recorded = r.u64();
    } catch (const std::exception&) {
      log().warn("HEAD file in {} unreadable; recomputing", dir.string());
    }
  }
  // The head is recomputed from the files; HEAD only caps it.
  s.headNumber_ = 0;
  s.headHash_ = s.blocks_.at(0).hash;
  if (!s.corrupt_.count(0)) s.advance();
  if (recorded && *recorded < s.headNumber_) {
    s.headNumber_ = *recorded;
    s.headHash_ = s.blocks_.at(*recorded).hash;
  }
  return s;
}

void BlockStore::advance() {
  while (true) {
    auto next = blocks_.find(headNumber_ + 1);
    if (next == blocks_.end() || next->second.previousHash != headHash_ || !next->second.hashValid()) break;
    headNumber_ = next->first;
    headHash_ = next->second.hash;
  }
}

void BlockStore::persist(const Block& block) {
  if (!dir_) return;
  writeFileAtomic(blockFile(*dir_, block.number), block.serialize());
}

void BlockStore::persistHead() {
  if (!dir_) return;
  codec::Writer w;
  w.u64(headNumber_).raw(headHash_.bytes);
  writeFileAtomic(*dir_ / "HEAD", std::move(w).bytes());
}

void BlockStore::put(const Block& block) {
  auto old = blocks_.find(block.number);
  if (old != blocks_.end()) byHash_.erase(old->second.hash);
  blocks_[block.number] = block;
  byHash_[block.hash] = block.number;
  corrupt_.erase(block.number);
  persist(block);
}

bool BlockStore::append(const Block& block) {
  if (block.number != headNumber_ + 1 || block.previousHash != headHash_ || !block.hashValid()) return false;
  put(block);
  headNumber_ = block.number;
  headHash_ = block.hash;
  persistHead();
  return true;
}

void BlockStore::erase(std::uint64_t number) {
  if (number <= headNumber_) throw std::logic_error("cannot erase a block at or below the head");
  auto it = blocks_.find(number);
  if (it == blocks_.end()) return;
  byHash_.erase(it->second.hash);
  blocks_.erase(it);
  if (dir_) fs::remove(blockFile(*dir_, number));
}

void BlockStore::rewind(std::uint64_t number) {
  if (number > headNumber_) throw std::logic_error("cannot rewind above the head");
  log().warn("rewinding block store from {} to {}", headNumber_, number);
  while (!blocks_.empty() && blocks_.rbegin()->first > number) {
    auto n = blocks_.rbegin()->first;
    byHash_.erase(blocks_.rbegin()->second.hash);
    blocks_.erase(n);
    if (dir_) fs::remove(blockFile(*dir_, n));
  }
  for (auto it = corrupt_.upper_bound(number); it != corrupt_.end();) it = corrupt_.erase(it);
  headNumber_ = number;
  headHash_ = blocks_.at(number).hash;
  persistHead();
}

const Block* BlockStore::get(std::uint64_t number) const {
  auto it = blocks_.find(number);
  return it == blocks_.end() ? nullptr : &it->second;
}

const Block* BlockStore::findByHash(const Digest& hash) const {
  auto it = byHash_.find(hash);
  return it == byHash_.end() ? nullptr : get(it->second);
}

ChainCheck BlockStore::verifyChainBackward(const Digest& fromHash) const {
  ChainCheck out;
  const Block* start = findByHash(fromHash);
  if (!start) return out;
  auto n = start->number;
  Digest expected = fromHash;
  while (true) {
    if (corrupt_.count(n)) {
      out.failedAt = n;
      return out;
    }
    auto it = blocks_.find(n);
    if (it == blocks_.end()) {
      out.missing = n;
      return out;
    }
    const auto& b = it->second;
    if (b.number != n || b.computeHash() != expected) {
      out.failedAt = n;
      return out;
    }
    out.lowestVerified = n;
    if (n == 0) {
      out.ok = b.hash == Block::genesis().hash;
      if (!out.ok) out.failedAt = 0;
      return out;
    }
    expected = b.previousHash;
    --n;
  }
}

Bytes BlockStore::exportChain() const {
  codec::Writer w;
  for (std::uint64_t n = 0; n <= headNumber_; ++n) blocks_.at(n).encode(w);
  return std::move(w).bytes();
}

}  // namespace bftflow::chain
