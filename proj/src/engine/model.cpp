// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/engine/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace bftflow::engine {

const TransitionDef* WorkflowModel::findTransition(std::string_view name) const {
  for (const auto& t : transitions) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::optional<ValueType> WorkflowModel::variableType(std::string_view name) const {
  for (const auto& v : variables) {
    if (v.name == name) return v.type;
  }
  return std::nullopt;
}

bool WorkflowModel::hasPlace(std::string_view place) const {
  return std::find(places.begin(), places.end(), place) != places.end();
}

namespace {

std::optional<std::string> checkArcs(const WorkflowModel& m, const TransitionDef& t, const Marking& arcs) {
  for (const auto& [place, weight] : arcs) {
    if (!m.hasPlace(place)) return "transition '" + t.name + "' references undeclared place '" + place + "'";
    if (weight == 0) return "transition '" + t.name + "' has a zero-weight arc";
  }
  return std::nullopt;
}

std::optional<std::string> checkVariables(const WorkflowModel& m, const TransitionDef& t,
                                          const std::vector<std::string>& names) {
  for (const auto& v : names) {
    if (!m.variableType(v)) return "transition '" + t.name + "' references undeclared variable '" + v + "'";
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> checkModel(const WorkflowModel& m) {
  if (m.modelId.empty()) return "model id is empty";
  std::set<std::string> places;
  for (const auto& p : m.places) {
    if (p.empty()) return "empty place name";
    if (!places.insert(p).second) return "duplicate place '" + p + "'";
  }
  std::set<std::string> vars;
  for (const auto& v : m.variables) {
    if (v.name.empty()) return "empty variable name";
    if (!vars.insert(v.name).second) return "duplicate variable '" + v.name + "'";
  }
  std::set<std::string> names;
  for (const auto& t : m.transitions) {
    if (t.name.empty()) return "empty transition name";
    if (!names.insert(t.name).second) return "duplicate transition '" + t.name + "'";
    if (t.inputPlaces.empty()) return "transition '" + t.name + "' has no input places";
    if (t.assignedNode.empty()) return "transition '" + t.name + "' has no assigned node";
    if (auto e = checkArcs(m, t, t.inputPlaces)) return e;
    if (auto e = checkArcs(m, t, t.outputPlaces)) return e;
    if (auto e = checkVariables(m, t, t.inputVariables)) return e;
    if (auto e = checkVariables(m, t, t.outputVariables)) return e;
    if (t.externalCall && t.externalCall->empty()) return "transition '" + t.name + "' has an empty external call";
  }
  if (m.initialMarking.empty()) return "initial marking is empty";
  if (auto e = checkMarking(m, m.initialMarking)) return "initial marking: " + *e;
  for (const auto& p : m.endPlaces) {
    if (!m.hasPlace(p)) return "end place '" + p + "' is not declared";
  }
  for (const auto& c : m.constraints) {
    for (const auto& a : c.atoms) {
      for (const Operand* o : {&a.lhs, &a.rhs}) {
        if (o->isVariable && !m.variableType(o->variable)) {
          return "constraint '" + c.description + "' references undeclared variable '" + o->variable + "'";
        }
      }
      // Literal operands must be comparable with the variable they face.
      if (a.lhs.isVariable != a.rhs.isVariable) {
        const auto& var = a.lhs.isVariable ? a.lhs : a.rhs;
        const auto& lit = a.lhs.isVariable ? a.rhs : a.lhs;
        auto vt = *m.variableType(var.variable);
        auto lt = typeOf(lit.literal);
        bool numeric = (vt == ValueType::Integer || vt == ValueType::Real) &&
                       (lt == ValueType::Integer || lt == ValueType::Real);
        if (!numeric && vt != lt) {
          return "constraint '" + c.description + "' compares " + toString(vt) + " variable '" + var.variable +
                 "' with a " + toString(lt) + " literal";
        }
      }
    }
  }
  return std::nullopt;
}

std::optional<std::string> checkData(const WorkflowModel& model, const DataMap& data) {
  for (const auto& [k, v] : data) {
    auto t = model.variableType(k);
    if (!t) return "undeclared variable '" + k + "'";
    if (*t != typeOf(v)) {
      return "variable '" + k + "' expects " + toString(*t) + ", got " + toString(typeOf(v));
    }
    if (auto d = std::get_if<double>(&v); d && !std::isfinite(*d)) return "variable '" + k + "' is not finite";
  }
  return std::nullopt;
}

std::optional<std::string> checkMarking(const WorkflowModel& model, const Marking& marking) {
  for (const auto& [place, tokens] : marking) {
    if (!model.hasPlace(place)) return "unknown place '" + place + "'";
    if (tokens == 0) return "zero token count on '" + place + "'";
  }
  return std::nullopt;
}

std::vector<const TransitionDef*> enabledTransitions(const Marking& marking, const WorkflowModel& model) {
  std::vector<const TransitionDef*> out;
  for (const auto& t : model.transitions) {
    if (covers(marking, t.inputPlaces)) out.push_back(&t);
  }
  return out;
}

bool constraintsHold(const WorkflowModel& model, const DataMap& data) {
  return std::all_of(model.constraints.begin(), model.constraints.end(),
                     [&data](const DataConstraint& c) { return evaluate(c, data); });
}

namespace {
void encodeNames(codec::Writer& w, const std::vector<std::string>& names) {
  w.u32(static_cast<std::uint32_t>(names.size()));
  for (const auto& n : names) w.str(n);
}

std::vector<std::string> decodeNames(codec::Reader& r) {
  std::vector<std::string> out;
  auto n = r.count(4);
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(r.str());
  return out;
}
}  // namespace

void encode(codec::Writer& w, const WorkflowModel& m) {
  w.str(m.modelId);
  encodeNames(w, m.places);
  w.u32(static_cast<std::uint32_t>(m.transitions.size()));
  for (const auto& t : m.transitions) {
    w.str(t.name);
    encode(w, t.inputPlaces);
    encode(w, t.outputPlaces);
    w.str(t.assignedNode);
    encodeNames(w, t.inputVariables);
    encodeNames(w, t.outputVariables);
    w.boolean(t.externalCall.has_value());
    if (t.externalCall) w.str(*t.externalCall);
  }
  encode(w, m.initialMarking);
  w.u32(static_cast<std::uint32_t>(m.variables.size()));
  for (const auto& v : m.variables) w.str(v.name).u8(static_cast<std::uint8_t>(v.type));
  w.u32(static_cast<std::uint32_t>(m.constraints.size()));
  for (const auto& c : m.constraints) encode(w, c);
  encodeNames(w, m.endPlaces);
}

WorkflowModel decodeModel(codec::Reader& r) {
  WorkflowModel m;
  m.modelId = r.str();
  m.places = decodeNames(r);
  auto nt = r.count(8);
  for (std::uint32_t i = 0; i < nt; ++i) {
    TransitionDef t;
    t.name = r.str();
    t.inputPlaces = decodeMarking(r);
    t.outputPlaces = decodeMarking(r);
    t.assignedNode = r.str();
    t.inputVariables = decodeNames(r);
    t.outputVariables = decodeNames(r);
    if (r.boolean()) t.externalCall = r.str();
    m.transitions.push_back(std::move(t));
  }
  m.initialMarking = decodeMarking(r);
  auto nv = r.count(5);
  for (std::uint32_t i = 0; i < nv; ++i) {
    VariableDecl v;
    v.name = r.str();
    auto type = r.u8();
    if (type > static_cast<std::uint8_t>(ValueType::Boolean)) throw codec::DecodeError("unknown variable type");
    v.type = static_cast<ValueType>(type);
    m.variables.push_back(std::move(v));
  }
  auto nc = r.count(8);
  for (std::uint32_t i = 0; i < nc; ++i) m.constraints.push_back(decodeConstraint(r));
  m.endPlaces = decodeNames(r);
  return m;
}

}  // namespace bftflow::engine
