// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Brute-force reference for workflow validation. Deliberately written against
// plain maps and the model's raw arc lists so that it shares no code path with
// the engine's enabling/firing helpers.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "bftflow/engine/model.hpp"

namespace oracle {

using Tokens = std::map<std::string, long long>;

inline Tokens toTokens(const bftflow::engine::Marking& m) {
  Tokens t;
  for (const auto& [p, n] : m) t[p] = n;
  return t;
}

inline Tokens normalized(Tokens t) {
  for (auto it = t.begin(); it != t.end();) it = it->second == 0 ? t.erase(it) : std::next(it);
  return t;
}

/// Every marking reachable by exactly one firing, with the transitions that
/// produce it.
inline std::map<Tokens, std::vector<std::string>> singleFiringSuccessors(const bftflow::engine::WorkflowModel& model,
                                                                        const bftflow::engine::Marking& from) {
  std::map<Tokens, std::vector<std::string>> out;
  const Tokens base = toTokens(from);
  for (const auto& t : model.transitions) {
    bool enabled = true;
    for (const auto& [p, w] : t.inputPlaces) {
      auto it = base.find(p);
      long long have = it == base.end() ? 0 : it->second;
      if (have < static_cast<long long>(w)) enabled = false;
    }
    if (!enabled) continue;
    Tokens next = base;
    for (const auto& [p, w] : t.inputPlaces) next[p] -= w;
    for (const auto& [p, w] : t.outputPlaces) next[p] += w;
    out[normalized(next)].push_back(t.name);
  }
  return out;
}

inline std::set<std::string> enabledNames(const bftflow::engine::WorkflowModel& model,
                                          const bftflow::engine::Marking& from) {
  std::set<std::string> out;
  for (const auto& [m, names] : singleFiringSuccessors(model, from)) out.insert(names.begin(), names.end());
  return out;
}

/// Direct predicate evaluation over every constraint atom.
inline bool constraintsHold(const bftflow::engine::WorkflowModel& model, const bftflow::engine::DataMap& data) {
  using namespace bftflow::engine;
  for (const auto& c : model.constraints) {
    bool anyMissing = false;
    for (const auto& a : c.atoms) {
      if (a.lhs.isVariable && !data.count(a.lhs.variable)) anyMissing = true;
      if (a.rhs.isVariable && !data.count(a.rhs.variable)) anyMissing = true;
    }
    if (anyMissing) continue;
    for (const auto& a : c.atoms) {
      const Value& l = a.lhs.isVariable ? data.at(a.lhs.variable) : a.lhs.literal;
      const Value& r = a.rhs.isVariable ? data.at(a.rhs.variable) : a.rhs.literal;
      int cmp;
      if (l.index() <= 1 && r.index() <= 1) {
        long double x = l.index() == 0 ? std::get<0>(l) : std::get<1>(l);
        long double y = r.index() == 0 ? std::get<0>(r) : std::get<1>(r);
        cmp = x < y ? -1 : (x > y ? 1 : 0);
      } else if (l.index() == 2 && r.index() == 2) {
        cmp = std::get<2>(l).compare(std::get<2>(r));
        cmp = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
      } else if (l.index() == 3 && r.index() == 3) {
        cmp = static_cast<int>(std::get<3>(l)) - static_cast<int>(std::get<3>(r));
      } else {
        return false;
      }
      bool ok = false;
      switch (a.op) {
        case CompareOp::Eq: ok = cmp == 0; break;
        case CompareOp::Ne: ok = cmp != 0; break;
        case CompareOp::Lt: ok = cmp < 0; break;
        case CompareOp::Le: ok = cmp <= 0; break;
        case CompareOp::Gt: ok = cmp > 0; break;
        case CompareOp::Ge: ok = cmp >= 0; break;
      }
      if (!ok) return false;
    }
  }
  return true;
}

/// Expected verdict for an InstanceState proposal against a known base state.
inline bool expectAccept(const bftflow::engine::WorkflowModel& model, const bftflow::engine::Marking& baseMarking,
                         const bftflow::engine::DataMap& baseData, const bftflow::engine::Marking& proposedMarking,
                         const bftflow::engine::DataMap& proposedData) {
  auto successors = singleFiringSuccessors(model, baseMarking);
  auto it = successors.find(normalized(toTokens(proposedMarking)));
  if (it == successors.end()) return false;
  bool dataOk = false;
  for (const auto& name : it->second) {
    const auto* t = model.findTransition(name);
    std::set<std::string> outs(t->outputVariables.begin(), t->outputVariables.end());
    std::set<std::string> keys;
    for (const auto& [k, v] : baseData) keys.insert(k);
    for (const auto& [k, v] : proposedData) keys.insert(k);
    bool ok = true;
    for (const auto& k : keys) {
      if (outs.count(k)) continue;
      if (!baseData.count(k) || !proposedData.count(k) || baseData.at(k) != proposedData.at(k)) ok = false;
    }
    dataOk = dataOk || ok;
  }
  return dataOk && oracle::constraintsHold(model, proposedData);
}

}  // namespace oracle
