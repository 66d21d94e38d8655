// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "bftflow/engine/value.hpp"

namespace bftflow::engine {

enum class CompareOp : std::uint8_t { Eq = 0, Ne = 1, Lt = 2, Le = 3, Gt = 4, Ge = 5 };

const char* toString(CompareOp op);

struct Operand {
  bool isVariable = false;
  std::string variable;
  Value literal;

  static Operand var(std::string name) { return {true, std::move(name), {}}; }
  static Operand lit(Value v) { return {false, {}, std::move(v)}; }
};

struct Atom {
  Operand lhs;
  CompareOp op = CompareOp::Eq;
  Operand rhs;
};

/// Global case-data constraint: a conjunction of comparisons. A constraint that
/// mentions a variable not present in the data is vacuously satisfied.
struct DataConstraint {
  std::string description;
  std::vector<Atom> atoms;

  std::set<std::string> variables() const;
  std::string text() const;
};

class ConstraintSyntaxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grammar: atom ("&&" atom)*, atom := operand op operand,
/// op := "=" | "==" | "!=" | "<" | "<=" | ">" | ">=",
/// operand := identifier | integer | real | "text" | true | false.
DataConstraint parseConstraint(std::string description, std::string_view text);

bool evaluate(const Atom& atom, const DataMap& data);
bool evaluate(const DataConstraint& c, const DataMap& data);

void encode(codec::Writer& w, const DataConstraint& c);
DataConstraint decodeConstraint(codec::Reader& r);

}  // namespace bftflow::engine
