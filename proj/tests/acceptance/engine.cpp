// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <fmt/format.h>

#include "bftflow/engine/engine.hpp"
#include "criteria.hpp"
#include "support/fixtures.hpp"
#include "support/petri_oracle.hpp"

namespace acceptance {

using namespace bftflow;
using namespace bftflow::engine;

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); }

/// Integer x and y, real r, text s, boolean b.
const std::vector<VariableDecl> kVariables = {{"x", ValueType::Integer},
                                              {"y", ValueType::Integer},
                                              {"r", ValueType::Real},
                                              {"s", ValueType::Text},
                                              {"b", ValueType::Boolean}};

Value randomValue(Rng& rng, ValueType t) {
  switch (t) {
    case ValueType::Integer: return Value{static_cast<std::int64_t>(rng() % 20) - 5};
    case ValueType::Real: return Value{static_cast<double>(rng() % 40) / 4.0 - 2.0};
    case ValueType::Text: return Value{std::string(1, static_cast<char>('a' + rng() % 4))};
    case ValueType::Boolean: return Value{rng() % 2 == 0};
  }
  return Value{std::int64_t{0}};
}

std::string randomAtom(Rng& rng) {
  static const char* ops[] = {"=", "!=", "<", "<=", ">", ">="};
  const char* op = ops[rng() % 6];
  switch (rng() % 6) {
    case 0: return fmt::format("x {} {}", op, static_cast<int>(rng() % 14) - 2);
    case 1: return fmt::format("x {} y", op);
    case 2: return fmt::format("r {} {}", op, static_cast<double>(rng() % 20) / 2.0);
    case 3: return fmt::format("y {} r", op);
    case 4: return fmt::format("s {} \"{}\"", rng() % 2 ? "=" : "!=", static_cast<char>('a' + rng() % 4));
    default: return fmt::format("b {} {}", rng() % 2 ? "=" : "!=", rng() % 2 ? "true" : "false");
  }
}

WorkflowModel randomNet(Rng& rng, std::size_t index) {
  WorkflowModel m;
  m.modelId = "net" + std::to_string(index);
  auto places = pick(rng, 1, 8);
  for (std::size_t p = 0; p < places; ++p) m.places.push_back("p" + std::to_string(p));
  auto place = [&] { return m.places[rng() % places]; };
  m.variables = kVariables;
  auto transitions = pick(rng, 1, 8);
  for (std::size_t t = 0; t < transitions; ++t) {
    TransitionDef d;
    d.name = "t" + std::to_string(t);
    d.assignedNode = "n" + std::to_string(rng() % 4);
    for (auto k = pick(rng, 1, 3); k > 0; --k) d.inputPlaces[place()] = static_cast<std::uint32_t>(pick(rng, 1, 2));
    for (auto k = pick(rng, 0, 3); k > 0; --k) d.outputPlaces[place()] = static_cast<std::uint32_t>(pick(rng, 1, 2));
    for (const auto& v : kVariables) {
      if (rng() % 3 == 0) d.outputVariables.push_back(v.name);
    }
    m.transitions.push_back(std::move(d));
  }
  for (auto k = pick(rng, 1, 3); k > 0; --k) m.initialMarking[place()] = static_cast<std::uint32_t>(pick(rng, 1, 3));
  m.endPlaces = {place()};
  for (auto c = pick(rng, 0, 2); c > 0; --c) {
    std::string text = randomAtom(rng);
    for (auto extra = pick(rng, 0, 2); extra > 0; --extra) text += " && " + randomAtom(rng);
    m.constraints.push_back(parseConstraint("c" + std::to_string(c), text));
  }
  return m;
}

Marking toMarking(const oracle::Tokens& t) {
  Marking m;
  for (const auto& [p, n] : t) {
    if (n > 0) m[p] = static_cast<std::uint32_t>(n);
  }
  return m;
}

/// Proposed successor candidates around `base`: true successors, the base
/// itself, two-step markings, token perturbations and random markings.
std::vector<Marking> candidateMarkings(Rng& rng, const WorkflowModel& m, const Marking& base) {
  std::vector<Marking> out{base};
  auto successors = oracle::singleFiringSuccessors(m, base);
  for (const auto& [tokens, names] : successors) {
    out.push_back(toMarking(tokens));
    for (const auto& [twice, more] : oracle::singleFiringSuccessors(m, toMarking(tokens))) out.push_back(toMarking(twice));
  }
  for (int k = 0; k < 6; ++k) {
    Marking p = out[rng() % out.size()];
    const auto& place = m.places[rng() % m.places.size()];
    if (rng() % 2 && p.count(place)) {
      if (--p[place] == 0) p.erase(place);
    } else {
      ++p[place];
    }
    if (!p.empty()) out.push_back(std::move(p));
  }
  for (int k = 0; k < 2; ++k) {
    Marking p;
    for (const auto& place : m.places) {
      if (rng() % 3 == 0) p[place] = static_cast<std::uint32_t>(pick(rng, 1, 3));
    }
    if (!p.empty()) out.push_back(std::move(p));
  }
  return out;
}

DataMap mutateData(Rng& rng, const DataMap& base) {
  DataMap d = base;
  for (auto k = pick(rng, 0, 3); k > 0; --k) {
    const auto& v = kVariables[rng() % kVariables.size()];
    if (rng() % 5 == 0) {
      d.erase(v.name);
    } else {
      d[v.name] = randomValue(rng, v.type);
    }
  }
  return d;
}

struct Tally {
  std::size_t compared = 0, accepted = 0, disagreements = 0;
  std::string first;
};

Outcome validationOracle() {
  Tally tally;
  const auto key = fixtures::keyFor("n0");
  for (std::size_t net = 0; net < 200; ++net) {
    Rng rng(0x5eed0000 + net);
    auto model = randomNet(rng, net);
    Engine engine("n0", key);
    chain::Block head = chain::Block::genesis();
    auto apply = [&](Transaction tx) {
      head = chain::Block::make(head.number + 1, head.hash, {std::move(tx)}, 0);
      engine.applyBlock(head);
    };
    auto install = engine.installModel(model);
    apply(install);

    const Digest caseId = sha256(asBytes("case:" + std::to_string(net)));
    auto stateTx = [&](const Marking& m, const DataMap& d) {
      return Transaction::instanceState({caseId, model.modelId, m, d}, "n0", *key);
    };
    auto compare = [&](const Marking& baseMarking, const DataMap& baseData, const Marking& m, const DataMap& d) {
      auto tx = stateTx(m, d);
      bool got = engine.validateTransaction(tx).accepted;
      bool want = oracle::expectAccept(model, baseMarking, baseData, m, d);
      ++tally.compared;
      tally.accepted += want;
      if (got != want) {
        if (tally.disagreements++ == 0) {
          tally.first = fmt::format("net {}: {} -> {} engine {} oracle {}", net, toString(baseMarking), toString(m), got, want);
        }
      }
      return got && want;
    };

    apply(stateTx(model.initialMarking, {}));
    Marking marking = model.initialMarking;
    DataMap data;
    // Walk a few accepted firings so proposals are judged against varied
    // reachable states and data, comparing every attempt along the way.
    for (auto steps = pick(rng, 0, 5); steps > 0; --steps) {
      auto successors = oracle::singleFiringSuccessors(model, marking);
      if (successors.empty()) break;
      auto it = std::next(successors.begin(), static_cast<long>(rng() % successors.size()));
      auto next = toMarking(it->first);
      auto nextData = mutateData(rng, data);
      if (!compare(marking, data, next, nextData)) {
        nextData = data;
        if (!compare(marking, data, next, nextData)) continue;
      }
      apply(stateTx(next, nextData));
      marking = next;
      data = nextData;
    }
    for (const auto& proposal : candidateMarkings(rng, model, marking)) {
      compare(marking, data, proposal, data);
      for (int k = 0; k < 3; ++k) compare(marking, data, proposal, mutateData(rng, data));
    }
  }
  Outcome o;
  o.pass = tally.disagreements == 0 && tally.accepted > 0 && tally.accepted < tally.compared;
  o.detail = fmt::format("200 nets, {} proposals ({} expected accepts), {} disagreements{}", tally.compared,
                         tally.accepted, tally.disagreements, tally.first.empty() ? "" : "; first: " + tally.first);
  return o;
}

}  // namespace

std::vector<Criterion> engineCriteria() {
  return {{"validation", "validateTransaction agrees with the brute-force oracle on 200 random nets", validationOracle}};
}

}  // namespace acceptance
