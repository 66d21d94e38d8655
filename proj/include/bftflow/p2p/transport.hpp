// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "bftflow/p2p/envelope.hpp"

namespace bftflow::p2p {

/// Microseconds on the owning clock (virtual in the simulator).
using Micros = std::int64_t;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Micros now() const = 0;
};

class SteadyClock final : public Clock {
 public:
  Micros now() const override;
};

/// Outbound side of the permissioned transport. Inbound envelopes reach the
/// owning node through its inbox after signature verification.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual const NodeId& self() const = 0;
  /// Best effort; per-link FIFO. Sending to self delivers locally.
  virtual void send(const NodeId& to, const Envelope& env) = 0;
  /// Every configured peer except self.
  virtual std::vector<NodeId> peers() const = 0;

  void broadcast(const Envelope& env) {
    for (const auto& p : peers()) send(p, env);
  }
  void sendTo(const std::vector<NodeId>& recipients, const Envelope& env) {
    for (const auto& p : recipients) send(p, env);
  }
};

/// Receives verified envelopes and periodic ticks on the node's own context.
class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void deliver(const Envelope& env) = 0;
  virtual void tick() = 0;
};

}  // namespace bftflow::p2p
