// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>

#include "bftflow/engine/engine.hpp"

namespace fixtures {

using namespace bftflow;
using namespace bftflow::engine;

inline std::shared_ptr<const KeyPair> keyFor(const std::string& node) {
  return std::make_shared<KeyPair>(KeyPair::fromSeed(sha256(asBytes("test-key:" + node))));
}

inline TransitionDef transition(std::string name, Marking in, Marking out, NodeId node,
                                std::vector<std::string> outputs = {}, std::vector<std::string> inputs = {}) {
  TransitionDef t;
  t.name = std::move(name);
  t.inputPlaces = std::move(in);
  t.outputPlaces = std::move(out);
  t.assignedNode = std::move(node);
  t.outputVariables = std::move(outputs);
  t.inputVariables = std::move(inputs);
  return t;
}

/// p0 -> [A] -> p1 -> [B] -> p2 -> [C] -> p3, with a data constraint amount <= 1000.
inline WorkflowModel sequenceNet(const std::string& id, NodeId a, NodeId b, NodeId c) {
  WorkflowModel m;
  m.modelId = id;
  m.places = {"p0", "p1", "p2", "p3"};
  m.initialMarking = {{"p0", 1}};
  m.endPlaces = {"p3"};
  m.variables = {{"amount", ValueType::Integer}, {"note", ValueType::Text}, {"approved", ValueType::Boolean}};
  m.transitions = {transition("A", {{"p0", 1}}, {{"p1", 1}}, std::move(a), {"amount"}),
                   transition("B", {{"p1", 1}}, {{"p2", 1}}, std::move(b), {"note"}, {"amount"}),
                   transition("C", {{"p2", 1}}, {{"p3", 1}}, std::move(c), {"approved"}, {"amount", "note"})};
  m.constraints = {parseConstraint("amount limit", "amount <= 1000")};
  return m;
}

/// p0 -> [S] -> p1 + p2; p1 -> [L] -> p3; p2 -> [R] -> p4; p3 + p4 -> [J] -> p5.
inline WorkflowModel andSplitNet(const std::string& id, NodeId node) {
  WorkflowModel m;
  m.modelId = id;
  m.places = {"p0", "p1", "p2", "p3", "p4", "p5"};
  m.initialMarking = {{"p0", 1}};
  m.endPlaces = {"p5"};
  m.transitions = {transition("S", {{"p0", 1}}, {{"p1", 1}, {"p2", 1}}, node),
                   transition("L", {{"p1", 1}}, {{"p3", 1}}, node),
                   transition("R", {{"p2", 1}}, {{"p4", 1}}, node),
                   transition("J", {{"p3", 1}, {"p4", 1}}, {{"p5", 1}}, node)};
  return m;
}

}  // namespace fixtures
