// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/engine/constraint.hpp"

#include <cctype>
#include <charconv>

namespace bftflow::engine {

const char* toString(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "==";
    case CompareOp::Ne: return "!=";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
  }
  return "?";
}

std::set<std::string> DataConstraint::variables() const {
  std::set<std::string> out;
  for (const auto& a : atoms) {
    if (a.lhs.isVariable) out.insert(a.lhs.variable);
    if (a.rhs.isVariable) out.insert(a.rhs.variable);
  }
  return out;
}

namespace {

std::string operandText(const Operand& o) { return o.isVariable ? o.variable : toString(o.literal); }

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  std::vector<Atom> parse() {
    std::vector<Atom> atoms;
    atoms.push_back(atom());
    skipSpace();
    while (!eof()) {
      if (!consume("&&")) fail("expected '&&'");
      atoms.push_back(atom());
      skipSpace();
    }
    return atoms;
  }

 private:
  Atom atom() {
    Atom a;
    a.lhs = operand();
    a.op = op();
    a.rhs = operand();
    if (!a.lhs.isVariable && !a.rhs.isVariable) fail("comparison between two literals");
    return a;
  }

  CompareOp op() {
    skipSpace();
    if (consume("==")) return CompareOp::Eq;
    if (consume("!=")) return CompareOp::Ne;
    if (consume("<=")) return CompareOp::Le;
    if (consume(">=")) return CompareOp::Ge;
    if (consume("=")) return CompareOp::Eq;
    if (consume("<")) return CompareOp::Lt;
    if (consume(">")) return CompareOp::Gt;
    fail("expected comparison operator");
  }

  Operand operand() {
    skipSpace();
    if (eof()) fail("expected operand");
    char c = s_[pos_];
    if (c == '"') {
      ++pos_;
      std::string text;
      while (!eof() && s_[pos_] != '"') text.push_back(s_[pos_++]);
      if (eof()) fail("unterminated string literal");
      ++pos_;
      return Operand::lit(Value{std::move(text)});
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') {
      std::size_t start = pos_;
      ++pos_;
      bool real = false;
      while (!eof() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                        s_[pos_] == 'e' || s_[pos_] == 'E')) {
        real = real || !std::isdigit(static_cast<unsigned char>(s_[pos_]));
        ++pos_;
      }
      auto token = s_.substr(start, pos_ - start);
      auto v = parseValue(real ? ValueType::Real : ValueType::Integer, token[0] == '+' ? token.substr(1) : token);
      if (!v) fail("malformed number '" + std::string(token) + "'");
      return Operand::lit(*v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (!eof() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      std::string ident(s_.substr(start, pos_ - start));
      if (ident == "true") return Operand::lit(Value{true});
      if (ident == "false") return Operand::lit(Value{false});
      return Operand::var(std::move(ident));
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  bool consume(std::string_view tok) {
    skipSpace();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  void skipSpace() {
    while (!eof() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eof() const { return pos_ >= s_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConstraintSyntaxError(what + " at offset " + std::to_string(pos_));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

template <typename T>
bool compare(const T& a, CompareOp op, const T& b) {
  switch (op) {
    case CompareOp::Eq: return a == b;
    case CompareOp::Ne: return a != b;
    case CompareOp::Lt: return a < b;
    case CompareOp::Le: return a <= b;
    case CompareOp::Gt: return a > b;
    case CompareOp::Ge: return a >= b;
  }
  return false;
}

bool isNumeric(const Value& v) { return typeOf(v) == ValueType::Integer || typeOf(v) == ValueType::Real; }

long double asNumber(const Value& v) {
  if (auto i = std::get_if<std::int64_t>(&v)) return static_cast<long double>(*i);
  return static_cast<long double>(std::get<double>(v));
}

}  // namespace

std::string DataConstraint::text() const {
  std::string out;
  for (const auto& a : atoms) {
    if (!out.empty()) out += " && ";
    out += operandText(a.lhs) + " " + toString(a.op) + " " + operandText(a.rhs);
  }
  return out;
}

DataConstraint parseConstraint(std::string description, std::string_view text) {
  return DataConstraint{std::move(description), Parser(text).parse()};
}

bool evaluate(const Atom& atom, const DataMap& data) {
  auto resolve = [&data](const Operand& o) -> const Value* {
    if (!o.isVariable) return &o.literal;
    auto it = data.find(o.variable);
    return it == data.end() ? nullptr : &it->second;
  };
  const Value* a = resolve(atom.lhs);
  const Value* b = resolve(atom.rhs);
  if (a == nullptr || b == nullptr) return true;
  if (typeOf(*a) == ValueType::Integer && typeOf(*b) == ValueType::Integer) {
    return compare(std::get<std::int64_t>(*a), atom.op, std::get<std::int64_t>(*b));
  }
  if (isNumeric(*a) && isNumeric(*b)) return compare(asNumber(*a), atom.op, asNumber(*b));
  if (typeOf(*a) != typeOf(*b)) return false;
  if (typeOf(*a) == ValueType::Text) return compare(std::get<std::string>(*a), atom.op, std::get<std::string>(*b));
  return compare(std::get<bool>(*a), atom.op, std::get<bool>(*b));
}

bool evaluate(const DataConstraint& c, const DataMap& data) {
  for (const auto& v : c.variables()) {
    if (!data.count(v)) return true;
  }
  for (const auto& a : c.atoms) {
    if (!evaluate(a, data)) return false;
  }
  return true;
}

namespace {
void encodeOperand(codec::Writer& w, const Operand& o) {
  w.boolean(o.isVariable);
  if (o.isVariable) w.str(o.variable);
  else encode(w, o.literal);
}

Operand decodeOperand(codec::Reader& r) {
  if (r.boolean()) return Operand::var(r.str());
  return Operand::lit(decodeValue(r));
}
}  // namespace

void encode(codec::Writer& w, const DataConstraint& c) {
  w.str(c.description);
  w.u32(static_cast<std::uint32_t>(c.atoms.size()));
  for (const auto& a : c.atoms) {
    encodeOperand(w, a.lhs);
    w.u8(static_cast<std::uint8_t>(a.op));
    encodeOperand(w, a.rhs);
  }
}

DataConstraint decodeConstraint(codec::Reader& r) {
  DataConstraint c;
  c.description = r.str();
  auto n = r.count(4);
  for (std::uint32_t i = 0; i < n; ++i) {
    Atom a;
    a.lhs = decodeOperand(r);
    auto op = r.u8();
    if (op > static_cast<std::uint8_t>(CompareOp::Ge)) throw codec::DecodeError("unknown comparison operator");
    a.op = static_cast<CompareOp>(op);
    a.rhs = decodeOperand(r);
    c.atoms.push_back(std::move(a));
  }
  return c;
}

}  // namespace bftflow::engine
