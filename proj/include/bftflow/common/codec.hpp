// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Canonical serialization. Field order is fixed by the caller, integers are
// big-endian fixed width, strings and byte blobs carry a u32 length prefix.
// Every digest and signature in the system is computed over this encoding.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "bftflow/common/bytes.hpp"

namespace bftflow::codec {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Writer {
 public:
  Writer() = default;
  explicit Writer(std::size_t reserve) { out_.reserve(reserve); }

  Writer& u8(std::uint8_t v) {
    out_.push_back(v);
    return *this;
  }
  Writer& u16(std::uint16_t v) { return fixed(v, 2); }
  Writer& u32(std::uint32_t v) { return fixed(v, 4); }
  Writer& u64(std::uint64_t v) { return fixed(v, 8); }
  Writer& i64(std::int64_t v) { return fixed(static_cast<std::uint64_t>(v), 8); }
  Writer& f64(double v);
  Writer& boolean(bool v) { return u8(v ? 1 : 0); }
  Writer& str(std::string_view s);
  Writer& blob(ByteView b);
  /// Raw bytes with no length prefix; for fixed-size fields.
  Writer& raw(ByteView b) {
    out_.insert(out_.end(), b.begin(), b.end());
    return *this;
  }
  template <std::size_t N>
  Writer& raw(const std::array<std::uint8_t, N>& a) {
    return raw(ByteView(a.data(), N));
  }

  const Bytes& bytes() const& { return out_; }
  Bytes bytes() && { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  Writer& fixed(std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    return *this;
  }

  Bytes out_;
};

class Reader {
 public:
  explicit Reader(ByteView in) : in_(in) {}

  std::uint8_t u8();
  std::uint16_t u16() { return static_cast<std::uint16_t>(fixed(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(fixed(4)); }
  std::uint64_t u64() { return fixed(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(fixed(8)); }
  double f64();
  bool boolean();
  std::string str();
  Bytes blob();
  ByteView raw(std::size_t n);
  template <std::size_t N>
  std::array<std::uint8_t, N> array() {
    std::array<std::uint8_t, N> a{};
    auto v = raw(N);
    std::copy(v.begin(), v.end(), a.begin());
    return a;
  }
  /// Guards list decoders against absurd counts before allocating.
  std::uint32_t count(std::size_t minElementSize = 1);

  std::size_t remaining() const { return in_.size() - pos_; }
  bool done() const { return pos_ == in_.size(); }
  void expectDone() const;

 private:
  std::uint64_t fixed(int width);

  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace bftflow::codec
