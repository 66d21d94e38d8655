// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <fmt/format.h>

#include <fstream>

#include "criteria.hpp"
#include "support/chain_fixture.hpp"

namespace acceptance {

using namespace chainfix;

namespace {

Bytes readAll(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void writeAll(const std::filesystem::path& p, const Bytes& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

Outcome tamper() {
  TempDir dir("tamper");
  auto chain = makeChain(100, 3);
  {
    auto s = BlockStore::open(dir.path);
    for (std::size_t n = 1; n < chain.size(); ++n) {
      if (!s.append(chain[n])) return {false, "fixture chain does not link"};
    }
  }
  // The hashed fields are everything before the trailing timestamp and hash;
  // confirm that by hashing the region of every pristine file.
  std::vector<Bytes> pristine;
  for (std::uint64_t n = 0; n <= 100; ++n) {
    auto raw = readAll(BlockStore::blockFile(dir.path, n));
    if (raw.size() <= 40) return {false, fmt::format("block file {} too short", n)};
    Bytes region(raw.begin(), raw.end() - 40);
    Digest stored;
    std::copy(raw.end() - 32, raw.end(), stored.bytes.begin());
    if (sha256(region) != stored || stored != chain[n].hash) {
      return {false, fmt::format("hashed region of block {} is not what the file layout implies", n)};
    }
    pristine.push_back(std::move(raw));
  }

  std::mt19937_64 rng(20260418);
  int detected = 0, trials = 1000;
  std::string firstMiss;
  for (int t = 0; t < trials; ++t) {
    auto k = rng() % 101;
    auto bits = (pristine[k].size() - 40) * 8;
    auto bit = rng() % bits;
    auto flipped = pristine[k];
    flipped[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    auto file = BlockStore::blockFile(dir.path, k);
    writeAll(file, flipped);

    auto store = BlockStore::open(dir.path);
    auto r = store.verifyChainBackward(chain[100].hash);
    bool ok = false;
    if (!r.ok) {
      if (r.failedAt) {
        ok = *r.failedAt >= k;
      } else if (r.missing) {
        ok = *r.missing >= k;
      } else {
        // The head itself no longer decodes.
        ok = k == 100;
      }
    }
    detected += ok;
    if (!ok && firstMiss.empty()) firstMiss = fmt::format("block {} bit {}", k, bit);
    writeAll(file, pristine[k]);
  }
  Outcome o;
  o.pass = detected == trials;
  o.detail = fmt::format("{}/{} single-bit flips detected at or above the tampered block", detected, trials);
  if (!firstMiss.empty()) o.detail += "; first miss " + firstMiss;
  return o;
}

}  // namespace

std::vector<Criterion> chainCriteria() {
  return {{"tamper", "100-block chain, 1000 single-bit flips all detected", tamper}};
}

}  // namespace acceptance
