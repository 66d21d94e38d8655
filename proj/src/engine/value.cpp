// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/engine/value.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace bftflow::engine {

const char* toString(ValueType t) {
  switch (t) {
    case ValueType::Integer: return "integer";
    case ValueType::Real: return "real";
    case ValueType::Text: return "text";
    case ValueType::Boolean: return "boolean";
  }
  return "?";
}

std::optional<ValueType> parseValueType(std::string_view name) {
  if (name == "integer") return ValueType::Integer;
  if (name == "real") return ValueType::Real;
  if (name == "text") return ValueType::Text;
  if (name == "boolean") return ValueType::Boolean;
  return std::nullopt;
}

std::string toString(const Value& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return '"' + x + '"';
        } else if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, double>) {
          std::ostringstream os;
          os << x;
          return os.str();
        } else {
          return std::to_string(x);
        }
      },
      v);
}

std::optional<Value> parseValue(ValueType t, std::string_view text) {
  switch (t) {
    case ValueType::Integer: {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc{} || p != text.data() + text.size()) return std::nullopt;
      return Value{v};
    }
    case ValueType::Real: {
      try {
        std::size_t used = 0;
        double v = std::stod(std::string(text), &used);
        if (used != text.size() || !std::isfinite(v)) return std::nullopt;
        return Value{v};
      } catch (const std::exception&) {
        return std::nullopt;
      }
    }
    case ValueType::Text: return Value{std::string(text)};
    case ValueType::Boolean:
      if (text == "true") return Value{true};
      if (text == "false") return Value{false};
      return std::nullopt;
  }
  return std::nullopt;
}

void encode(codec::Writer& w, const Value& v) {
  w.u8(static_cast<std::uint8_t>(typeOf(v)));
  std::visit(
      [&w](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::int64_t>) w.i64(x);
        else if constexpr (std::is_same_v<T, double>) w.f64(x);
        else if constexpr (std::is_same_v<T, std::string>) w.str(x);
        else w.boolean(x);
      },
      v);
}

Value decodeValue(codec::Reader& r) {
  switch (r.u8()) {
    case 0: return r.i64();
    case 1: return r.f64();
    case 2: return r.str();
    case 3: return r.boolean();
    default: throw codec::DecodeError("unknown value type tag");
  }
}

void encode(codec::Writer& w, const DataMap& data) {
  w.u32(static_cast<std::uint32_t>(data.size()));
  for (const auto& [k, v] : data) {
    w.str(k);
    encode(w, v);
  }
}

DataMap decodeDataMap(codec::Reader& r) {
  DataMap out;
  auto n = r.count(6);
  std::string prev;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto k = r.str();
    if (i > 0 && k <= prev) throw codec::DecodeError("data keys not in canonical order");
    prev = k;
    out.emplace(std::move(k), decodeValue(r));
  }
  return out;
}

void encode(codec::Writer& w, const Marking& m) {
  w.u32(static_cast<std::uint32_t>(m.size()));
  for (const auto& [place, tokens] : m) w.str(place).u32(tokens);
}

Marking decodeMarking(codec::Reader& r) {
  Marking out;
  auto n = r.count(8);
  std::string prev;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto place = r.str();
    auto tokens = r.u32();
    if (i > 0 && place <= prev) throw codec::DecodeError("marking places not in canonical order");
    if (tokens == 0) throw codec::DecodeError("marking holds a zero count");
    prev = place;
    out.emplace(std::move(place), tokens);
  }
  return out;
}

std::string toString(const Marking& m) {
  std::string out = "{";
  for (const auto& [place, tokens] : m) {
    if (out.size() > 1) out += ", ";
    out += place + ":" + std::to_string(tokens);
  }
  return out + "}";
}

bool covers(const Marking& m, const Marking& need) {
  for (const auto& [place, tokens] : need) {
    auto it = m.find(place);
    if (it == m.end() || it->second < tokens) return false;
  }
  return true;
}

Marking fire(const Marking& m, const Marking& consumed, const Marking& produced) {
  Marking out = m;
  for (const auto& [place, tokens] : consumed) {
    auto it = out.find(place);
    it->second -= tokens;
    if (it->second == 0) out.erase(it);
  }
  for (const auto& [place, tokens] : produced) out[place] += tokens;
  return out;
}

}  // namespace bftflow::engine
