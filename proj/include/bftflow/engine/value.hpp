// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>

#include "bftflow/common/codec.hpp"

namespace bftflow::engine {

enum class ValueType : std::uint8_t { Integer = 0, Real = 1, Text = 2, Boolean = 3 };

using Value = std::variant<std::int64_t, double, std::string, bool>;

/// Case data: the key-value store of a workflow instance.
using DataMap = std::map<std::string, Value>;

inline ValueType typeOf(const Value& v) { return static_cast<ValueType>(v.index()); }

const char* toString(ValueType t);
std::optional<ValueType> parseValueType(std::string_view name);
std::string toString(const Value& v);

/// Parses `text` as a value of type `t` (e.g. a `k=v` CLI argument).
std::optional<Value> parseValue(ValueType t, std::string_view text);

void encode(codec::Writer& w, const Value& v);
Value decodeValue(codec::Reader& r);
void encode(codec::Writer& w, const DataMap& data);
DataMap decodeDataMap(codec::Reader& r);

/// Tokens per place. Canonical form holds no zero counts.
using Marking = std::map<std::string, std::uint32_t>;

void encode(codec::Writer& w, const Marking& m);
Marking decodeMarking(codec::Reader& r);
std::string toString(const Marking& m);

/// True when every place in `need` holds at least as many tokens in `m`.
bool covers(const Marking& m, const Marking& need);

/// Firing rule: m - consumed + produced. Caller checks `covers` first.
Marking fire(const Marking& m, const Marking& consumed, const Marking& produced);

}  // namespace bftflow::engine
