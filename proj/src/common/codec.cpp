// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/common/codec.hpp"

#include <bit>
#include <limits>

namespace bftflow::codec {

Writer& Writer::f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

Writer& Writer::str(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint32_t>::max()) throw std::length_error("string too long");
  u32(static_cast<std::uint32_t>(s.size()));
  return raw(asBytes(s));
}

Writer& Writer::blob(ByteView b) {
  if (b.size() > std::numeric_limits<std::uint32_t>::max()) throw std::length_error("blob too long");
  u32(static_cast<std::uint32_t>(b.size()));
  return raw(b);
}

std::uint64_t Reader::fixed(int width) {
  if (remaining() < static_cast<std::size_t>(width)) throw DecodeError("truncated integer");
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v = (v << 8) | in_[pos_++];
  return v;
}

std::uint8_t Reader::u8() {
  if (remaining() < 1) throw DecodeError("truncated byte");
  return in_[pos_++];
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

bool Reader::boolean() {
  auto v = u8();
  if (v > 1) throw DecodeError("non-canonical boolean");
  return v == 1;
}

ByteView Reader::raw(std::size_t n) {
  if (remaining() < n) throw DecodeError("truncated field");
  auto v = in_.subspan(pos_, n);
  pos_ += n;
  return v;
}

std::string Reader::str() {
  auto n = u32();
  auto v = raw(n);
  return {reinterpret_cast<const char*>(v.data()), v.size()};
}

Bytes Reader::blob() {
  auto n = u32();
  auto v = raw(n);
  return {v.begin(), v.end()};
}

std::uint32_t Reader::count(std::size_t minElementSize) {
  auto n = u32();
  if (minElementSize > 0 && static_cast<std::size_t>(n) > remaining() / minElementSize) {
    throw DecodeError("list count exceeds remaining input");
  }
  return n;
}

void Reader::expectDone() const {
  if (!done()) throw DecodeError("trailing bytes after message");
}

}  // namespace bftflow::codec
