// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bftflow/common/bytes.hpp"
#include "bftflow/engine/constraint.hpp"
#include "bftflow/engine/value.hpp"

namespace bftflow::engine {

/// A Petri-net transition; each one is a workflow activity owned by one node.
struct TransitionDef {
  std::string name;
  Marking inputPlaces;
  Marking outputPlaces;
  NodeId assignedNode;
  std::vector<std::string> inputVariables;
  std::vector<std::string> outputVariables;
  std::optional<std::string> externalCall;
};

struct VariableDecl {
  std::string name;
  ValueType type = ValueType::Integer;
};

struct WorkflowModel {
  std::string modelId;
  std::vector<std::string> places;
  std::vector<TransitionDef> transitions;
  Marking initialMarking;
  std::vector<VariableDecl> variables;
  std::vector<DataConstraint> constraints;
  /// A terminal marking whose tokens all rest on end places is FINISHED.
  std::vector<std::string> endPlaces;

  const TransitionDef* findTransition(std::string_view name) const;
  std::optional<ValueType> variableType(std::string_view name) const;
  bool hasPlace(std::string_view place) const;
};

/// Returns the first violated structural invariant, if any.
std::optional<std::string> checkModel(const WorkflowModel& model);

/// Returns a description of the first problem with `data` (undeclared key or
/// wrong value type), if any.
std::optional<std::string> checkData(const WorkflowModel& model, const DataMap& data);

/// Returns a description of the first place in `marking` the model lacks.
std::optional<std::string> checkMarking(const WorkflowModel& model, const Marking& marking);

/// Plain-net enabling rule, in model declaration order.
std::vector<const TransitionDef*> enabledTransitions(const Marking& marking, const WorkflowModel& model);

bool constraintsHold(const WorkflowModel& model, const DataMap& data);

void encode(codec::Writer& w, const WorkflowModel& model);
WorkflowModel decodeModel(codec::Reader& r);

}  // namespace bftflow::engine
