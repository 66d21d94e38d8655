// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <random>

#include <fmt/format.h>

#include "criteria.hpp"
#include "support/pbft_harness.hpp"

namespace acceptance {

using namespace harness;

namespace {

enum class Fault { Crash, Drop, Delay, Equivocate };
const char* faultName(Fault f) {
  switch (f) {
    case Fault::Crash: return "CRASH";
    case Fault::Drop: return "DROP";
    case Fault::Delay: return "DELAY";
    case Fault::Equivocate: return "EQUIVOCATE";
  }
  return "?";
}

struct SafetyRun {
  bool diverged = false;
  bool completed = false;
  std::string note;
};

SafetyRun safetyRun(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto faulty = static_cast<std::size_t>(rng() % 4);
  auto fault = static_cast<Fault>(rng() % 4);
  auto faultyId = nodeName(faulty);
  p2p::FaultPlan plan;
  switch (fault) {
    case Fault::Crash: plan.crashes.push_back({faultyId, 100 + rng() % 4000}); break;
    case Fault::Drop: plan.drops.push_back({faultyId, 0.3}); break;
    case Fault::Delay: plan.delays.push_back({faultyId, 2'000, 40'000}); break;
    case Fault::Equivocate: plan.equivocations.push_back({faultyId, {MessageKind::PrePrepare}}); break;
  }
  ClusterOptions opts;
  opts.blockSize = 1 + rng() % 3;
  Cluster c(seed, plan, opts);

  // Honest clients only; the faulty node's client would not count anyway.
  std::size_t expected = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (n == faulty) continue;
    for (std::uint64_t i = 0; i < 6; ++i) {
      ++expected;
      auto at = static_cast<p2p::Micros>(rng() % 300'000);
      c.net.post([&c, n, i] { c.submitTx(n, i); }, at);
    }
  }
  c.net.runUntil([&] { return c.results.size() == expected; }, 120'000'000);
  c.net.runFor(500'000);

  SafetyRun out;
  out.completed = c.results.size() == expected;
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) {
      if (fault == Fault::Equivocate && (a == faulty || b == faulty)) continue;
      if (!Cluster::agree(c.node(a), c.node(b))) {
        out.diverged = true;
        out.note = fmt::format("seed {}: {} and {} executed different digests ({} on {})", seed, c.node(a).id,
                               c.node(b).id, faultName(fault), faultyId);
      }
    }
  }
  if (!out.completed && out.note.empty()) {
    out.note = fmt::format("seed {}: {}/{} requests finished ({} on {})", seed, c.results.size(), expected,
                           faultName(fault), faultyId);
  }
  return out;
}

Outcome safety() {
  auto start = std::chrono::steady_clock::now();
  int diverged = 0, incomplete = 0;
  std::string firstNote;
  for (std::uint64_t seed = 1; seed <= 500; ++seed) {
    auto r = safetyRun(seed);
    diverged += r.diverged;
    incomplete += !r.completed;
    if (firstNote.empty() && (r.diverged || !r.completed)) firstNote = r.note;
  }
  auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Outcome o;
  o.pass = diverged == 0 && secs < 300;
  o.detail = fmt::format("500 schedules, {} divergent, {} with unfinished requests, {:.1f} s", diverged, incomplete, secs);
  if (!firstNote.empty()) o.detail += "; first issue " + firstNote;
  return o;
}

struct LivenessRun {
  bool ok = false;
  std::string note;
};

LivenessRun livenessRun(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  ClusterOptions opts;
  opts.blockSize = 1 + rng() % 2;
  Cluster c(seed, {}, opts);
  std::size_t expected = 0;
  for (std::size_t n = 1; n < 4; ++n) {
    for (std::uint64_t i = 0; i < 8; ++i) {
      ++expected;
      c.net.post([&c, n, i] { c.submitTx(n, i); }, static_cast<p2p::Micros>(rng() % 400'000));
    }
  }
  auto crashAt = static_cast<p2p::Micros>(20'000 + rng() % 200'000);
  std::size_t doneAtCrash = 0;
  c.net.post(
      [&] {
        doneAtCrash = c.results.size();
        c.net.crash(c.node(0).replica->view().leader());
      },
      crashAt);
  c.net.runUntil([&] { return c.results.size() == expected; }, 300'000'000);

  LivenessRun out;
  std::size_t ok = 0;
  for (const auto& [at, r] : c.results) ok += r.status == ClientStatus::Ok && r.replies >= 3;
  std::uint64_t minView = UINT64_MAX;
  for (std::size_t n = 1; n < 4; ++n) minView = std::min(minView, c.node(n).replica->view().viewNumber);
  out.ok = ok == expected && minView >= 1;
  if (!out.ok) {
    out.note = fmt::format("seed {}: {}/{} completed ({} before the crash), view {}", seed, ok, expected, doneAtCrash,
                           minView);
  }
  return out;
}

Outcome liveness() {
  int failures = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto r = livenessRun(seed);
    if (!r.ok) {
      ++failures;
      if (first.empty()) first = r.note;
    }
  }
  Outcome o;
  o.pass = failures == 0;
  o.detail = fmt::format("100 runs with the leader crashed mid-run, {} failures", failures);
  if (!first.empty()) o.detail += "; first " + first;
  return o;
}

}  // namespace

std::vector<Criterion> consensusCriteria() {
  return {
      {"safety", "no divergent execution under one faulty node (500 schedules)", safety},
      {"liveness", "leader crash: every request completes and the view advances (100 runs)", liveness},
  };
}

}  // namespace acceptance
