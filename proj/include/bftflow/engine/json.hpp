// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Model definition documents and typed value conversion. The document schema
// is described in docs/model-format.md.

#include <json.hpp>

#include "bftflow/engine/engine.hpp"

namespace bftflow::engine {

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

WorkflowModel modelFromJson(const nlohmann::json& doc);
nlohmann::json modelToJson(const WorkflowModel& model);
WorkflowModel loadModelFile(const std::string& path);

nlohmann::json valueToJson(const Value& v);
/// Converts using the declared type; integers are accepted for real variables.
std::optional<Value> valueFromJson(ValueType type, const nlohmann::json& j);
nlohmann::json dataToJson(const DataMap& data);
/// Throws EngineError(TYPE_MISMATCH) on undeclared keys or wrong types.
DataMap dataFromJson(const WorkflowModel& model, const nlohmann::json& j);

nlohmann::json markingToJson(const Marking& m);
nlohmann::json caseToJson(const CaseState& cs);
nlohmann::json workItemToJson(const WorkItem& item);

}  // namespace bftflow::engine
