// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/engine/json.hpp"

#include <fstream>

namespace bftflow::engine {

using nlohmann::json;

namespace {

Marking markingFromJson(const json& j, const std::string& what) {
  Marking m;
  if (j.is_array()) {
    for (const auto& p : j) m[p.get<std::string>()] += 1;
  } else if (j.is_object()) {
    for (const auto& [place, tokens] : j.items()) {
      if (!tokens.is_number_unsigned() || tokens.get<std::uint64_t>() == 0 || tokens.get<std::uint64_t>() > UINT32_MAX) {
        throw ModelFormatError(what + ": token count for '" + place + "' must be a positive integer");
      }
      m[place] = tokens.get<std::uint32_t>();
    }
  } else if (!j.is_null()) {
    throw ModelFormatError(what + " must be a list of places or a place->count object");
  }
  return m;
}

std::vector<std::string> names(const json& doc, const char* key) {
  if (!doc.contains(key)) return {};
  return doc.at(key).get<std::vector<std::string>>();
}

}  // namespace

WorkflowModel modelFromJson(const json& doc) {
  try {
    WorkflowModel m;
    m.modelId = doc.at("id").get<std::string>();
    m.places = doc.at("places").get<std::vector<std::string>>();
    m.initialMarking = markingFromJson(doc.at("initialMarking"), "initialMarking");
    m.endPlaces = names(doc, "endPlaces");
    for (const auto& v : doc.value("variables", json::array())) {
      auto type = parseValueType(v.at("type").get<std::string>());
      if (!type) throw ModelFormatError("variable '" + v.at("name").get<std::string>() + "' has unknown type");
      m.variables.push_back({v.at("name").get<std::string>(), *type});
    }
    for (const auto& t : doc.at("transitions")) {
      TransitionDef def;
      def.name = t.at("name").get<std::string>();
      def.assignedNode = t.at("node").get<std::string>();
      def.inputPlaces = markingFromJson(t.at("inputs"), "transition " + def.name + " inputs");
      def.outputPlaces = markingFromJson(t.value("outputs", json()), "transition " + def.name + " outputs");
      def.inputVariables = names(t, "inputVariables");
      def.outputVariables = names(t, "outputVariables");
      if (t.contains("externalCall") && !t.at("externalCall").is_null()) def.externalCall = t.at("externalCall").get<std::string>();
      m.transitions.push_back(std::move(def));
    }
    for (const auto& c : doc.value("constraints", json::array())) {
      auto text = c.at("predicate").get<std::string>();
      m.constraints.push_back(parseConstraint(c.value("description", text), text));
    }
    return m;
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("model document: ") + e.what());
  } catch (const ConstraintSyntaxError& e) {
    throw ModelFormatError(std::string("constraint: ") + e.what());
  }
}

json modelToJson(const WorkflowModel& m) {
  json doc;
  doc["id"] = m.modelId;
  doc["places"] = m.places;
  doc["initialMarking"] = markingToJson(m.initialMarking);
  doc["endPlaces"] = m.endPlaces;
  doc["variables"] = json::array();
  for (const auto& v : m.variables) doc["variables"].push_back({{"name", v.name}, {"type", toString(v.type)}});
  doc["transitions"] = json::array();
  for (const auto& t : m.transitions) {
    json jt = {{"name", t.name},
               {"node", t.assignedNode},
               {"inputs", markingToJson(t.inputPlaces)},
               {"outputs", markingToJson(t.outputPlaces)},
               {"inputVariables", t.inputVariables},
               {"outputVariables", t.outputVariables}};
    if (t.externalCall) jt["externalCall"] = *t.externalCall;
    doc["transitions"].push_back(std::move(jt));
  }
  doc["constraints"] = json::array();
  for (const auto& c : m.constraints) doc["constraints"].push_back({{"description", c.description}, {"predicate", c.text()}});
  return doc;
}

WorkflowModel loadModelFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelFormatError("cannot open model file " + path);
  try {
    return modelFromJson(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ModelFormatError(path + ": " + e.what());
  }
}

json valueToJson(const Value& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

std::optional<Value> valueFromJson(ValueType type, const json& j) {
  switch (type) {
    case ValueType::Integer:
      if (j.is_number_integer()) return Value{j.get<std::int64_t>()};
      return std::nullopt;
    case ValueType::Real:
      if (j.is_number()) return Value{j.get<double>()};
      return std::nullopt;
    case ValueType::Text:
      if (j.is_string()) return Value{j.get<std::string>()};
      return std::nullopt;
    case ValueType::Boolean:
      if (j.is_boolean()) return Value{j.get<bool>()};
      return std::nullopt;
  }
  return std::nullopt;
}

json dataToJson(const DataMap& data) {
  json out = json::object();
  for (const auto& [k, v] : data) out[k] = valueToJson(v);
  return out;
}

DataMap dataFromJson(const WorkflowModel& model, const json& j) {
  DataMap out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw EngineError(ErrorCode::TypeMismatch, "data must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    auto type = model.variableType(k);
    if (!type) throw EngineError(ErrorCode::TypeMismatch, "undeclared variable '" + k + "'");
    auto value = valueFromJson(*type, v);
    if (!value) throw EngineError(ErrorCode::TypeMismatch, "variable '" + k + "' expects " + toString(*type));
    out.emplace(k, std::move(*value));
  }
  return out;
}

json markingToJson(const Marking& m) {
  json out = json::object();
  for (const auto& [place, tokens] : m) out[place] = tokens;
  return out;
}

json caseToJson(const CaseState& cs) {
  return {{"caseId", cs.caseId.hex()},
          {"modelId", cs.modelId},
          {"marking", markingToJson(cs.marking)},
          {"data", dataToJson(cs.data)},
          {"status", toString(cs.status)},
          {"version", cs.version}};
}

json workItemToJson(const WorkItem& item) {
  json j = {{"workItemId", item.id},
            {"caseId", item.caseId.hex()},
            {"transitionName", item.transition},
            {"inputValues", dataToJson(item.inputValues)},
            {"status", toString(item.status)},
            {"enabledAtBlock", item.enabledAtBlock},
            {"locked", item.locked()}};
  if (item.status == WorkItemStatus::Completed) j["outputValues"] = dataToJson(item.outputValues);
  return j;
}

}  // namespace bftflow::engine
