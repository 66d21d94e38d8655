// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Deterministic in-process network. A single scheduler owns every delivery,
// tick and posted task; given the same seed, fault plan and workload it
// produces the same schedule and the same transcript digest.

#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "bftflow/p2p/transport.hpp"

namespace bftflow::p2p {

struct FaultPlan {
  /// Node stops at scheduler step `atStep`: no deliveries, ticks or sends.
  struct Crash {
    NodeId node;
    std::uint64_t atStep = 0;
  };
  /// Each message to or from the node is lost with this probability.
  struct Drop {
    NodeId node;
    double probability = 0;
  };
  /// Extra latency on every message to or from the node.
  struct Delay {
    NodeId node;
    Micros min = 0;
    Micros max = 0;
  };
  /// The node sends conflicting versions of these kinds to different peers.
  struct Equivocate {
    NodeId node;
    std::set<MessageKind> kinds;
  };
  /// The node is cut off from everyone during [from, to).
  struct Partition {
    NodeId node;
    Micros from = 0;
    Micros to = 0;
  };

  std::vector<Crash> crashes;
  std::vector<Drop> drops;
  std::vector<Delay> delays;
  std::vector<Equivocate> equivocations;
  std::vector<Partition> partitions;

  /// Throws std::invalid_argument on a malformed plan.
  void validate() const;
};

struct SimConfig {
  Micros minLatency = 500;
  Micros maxLatency = 2'000;
  Micros tickInterval = 5'000;
};

/// Produces the conflicting body an equivocating sender shows to half of its
/// recipients.
using Mutator = std::function<Bytes(const Bytes& body, std::mt19937_64& rng)>;

class SimulatedNetwork final : public Clock {
 public:
  SimulatedNetwork(std::uint64_t seed, FaultPlan plan, SimConfig config = {});
  ~SimulatedNetwork() override;

  SimulatedNetwork(const SimulatedNetwork&) = delete;
  SimulatedNetwork& operator=(const SimulatedNetwork&) = delete;

  /// Registers a node. Its key joins the shared keyring used for verification.
  Transport& addNode(const NodeId& id, const KeyPair& key, Endpoint* endpoint);
  /// Swaps the endpoint behind an id (node restart); pending messages to the
  /// old endpoint are discarded.
  void replaceEndpoint(const NodeId& id, Endpoint* endpoint);
  void setMutator(MessageKind kind, Mutator m) { mutators_[kind] = std::move(m); }
  /// Messages to or from this node are silently dropped from now on.
  void crash(const NodeId& id);

  Micros now() const override { return now_; }
  std::uint64_t steps() const { return steps_; }
  const Keyring& keyring() const { return keyring_; }
  bool isCrashed(const NodeId& id) const;

  /// Schedules `task` on the scheduler at the current virtual time.
  void post(std::function<void()> task, Micros delay = 0);

  /// Processes one event. Returns false when nothing is scheduled.
  bool step();
  /// Runs until `done` holds (checked after every event) or virtual time
  /// passes `deadline`. Returns the final value of `done`.
  bool runUntil(const std::function<bool()>& done, Micros deadline);
  void runFor(Micros duration);

  /// Digest over every delivery (time, sender, receiver, kind, signature).
  Digest transcriptDigest() const;
  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t rejected() const { return rejected_; }

 private:
  class SimTransport;
  struct Event {
    Micros time;
    std::uint64_t seq;
    enum class Type { Deliver, Tick, Task } type;
    NodeId to;
    std::uint64_t generation;
    Envelope env;
    std::function<void()> task;
  };
  struct Later {
    bool operator()(const Event* a, const Event* b) const {
      return a->time != b->time ? a->time > b->time : a->seq > b->seq;
    }
  };
  struct NodeSlot {
    std::unique_ptr<SimTransport> transport;
    Endpoint* endpoint = nullptr;
    KeyPair key;
    std::uint64_t generation = 0;
    bool crashed = false;
  };

  void enqueue(std::unique_ptr<Event> e);
  void send(const NodeId& from, const NodeId& to, const Envelope& env);
  bool isolated(const NodeId& id, Micros at) const;
  double dropProbability(const NodeId& id) const;
  Micros extraDelay(const NodeId& id);
  bool equivocates(const NodeId& id, MessageKind kind) const;
  void applyCrashes();
  std::vector<NodeId> nodeIds() const;

  FaultPlan plan_;
  SimConfig config_;
  std::mt19937_64 rng_;
  Keyring keyring_;
  std::map<NodeId, NodeSlot> nodes_;
  std::map<std::pair<NodeId, NodeId>, Micros> linkClock_;
  std::map<MessageKind, Mutator> mutators_;
  std::priority_queue<Event*, std::vector<Event*>, Later> queue_;
  Micros now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t steps_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t rejected_ = 0;
  Digest transcript_;
};

}  // namespace bftflow::p2p
