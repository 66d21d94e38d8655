// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/p2p/sim_network.hpp"

#include <algorithm>
#include <stdexcept>

#include "bftflow/common/log.hpp"

namespace bftflow::p2p {

void FaultPlan::validate() const {
  for (const auto& d : drops) {
    if (d.node.empty() || !(d.probability >= 0.0 && d.probability <= 1.0)) {
      throw std::invalid_argument("drop probability must be within [0, 1]");
    }
  }
  for (const auto& d : delays) {
    if (d.node.empty() || d.min < 0 || d.max < d.min) throw std::invalid_argument("delay bounds must satisfy 0 <= min <= max");
  }
  for (const auto& p : partitions) {
    if (p.node.empty() || p.from < 0 || p.to <= p.from) throw std::invalid_argument("partition interval must be non-empty");
  }
  for (const auto& c : crashes) {
    if (c.node.empty()) throw std::invalid_argument("crash entry needs a node");
  }
  for (const auto& e : equivocations) {
    if (e.node.empty() || e.kinds.empty()) throw std::invalid_argument("equivocation entry needs a node and kinds");
  }
}

class SimulatedNetwork::SimTransport final : public Transport {
 public:
  SimTransport(SimulatedNetwork& net, NodeId self) : net_(net), self_(std::move(self)) {}

  const NodeId& self() const override { return self_; }
  void send(const NodeId& to, const Envelope& env) override { net_.send(self_, to, env); }
  std::vector<NodeId> peers() const override {
    auto ids = net_.nodeIds();
    ids.erase(std::remove(ids.begin(), ids.end(), self_), ids.end());
    return ids;
  }

 private:
  SimulatedNetwork& net_;
  NodeId self_;
};

SimulatedNetwork::SimulatedNetwork(std::uint64_t seed, FaultPlan plan, SimConfig config)
    : plan_(std::move(plan)), config_(config), rng_(seed) {
  plan_.validate();
  if (config_.minLatency < 0 || config_.maxLatency < config_.minLatency || config_.tickInterval <= 0) {
    throw std::invalid_argument("invalid simulator latency configuration");
  }
}

SimulatedNetwork::~SimulatedNetwork() {
  while (!queue_.empty()) {
    delete queue_.top();
    queue_.pop();
  }
}

std::vector<NodeId> SimulatedNetwork::nodeIds() const {
  std::vector<NodeId> ids;
  for (const auto& [id, slot] : nodes_) ids.push_back(id);
  return ids;
}

Transport& SimulatedNetwork::addNode(const NodeId& id, const KeyPair& key, Endpoint* endpoint) {
  if (nodes_.count(id)) throw std::invalid_argument("duplicate simulated node " + id);
  auto& slot = nodes_[id];
  slot.transport = std::make_unique<SimTransport>(*this, id);
  slot.endpoint = endpoint;
  slot.key = key;
  keyring_.add(id, key.publicKey());
  enqueue(std::unique_ptr<Event>(new Event{now_ + config_.tickInterval, 0, Event::Type::Tick, id, slot.generation, {}, {}}));
  return *slot.transport;
}

void SimulatedNetwork::replaceEndpoint(const NodeId& id, Endpoint* endpoint) {
  auto& slot = nodes_.at(id);
  slot.endpoint = endpoint;
  slot.crashed = false;
  ++slot.generation;
  enqueue(std::unique_ptr<Event>(new Event{now_ + config_.tickInterval, 0, Event::Type::Tick, id, slot.generation, {}, {}}));
}

void SimulatedNetwork::crash(const NodeId& id) { nodes_.at(id).crashed = true; }

bool SimulatedNetwork::isCrashed(const NodeId& id) const {
  auto it = nodes_.find(id);
  return it != nodes_.end() && it->second.crashed;
}

void SimulatedNetwork::post(std::function<void()> task, Micros delay) {
  enqueue(std::unique_ptr<Event>(new Event{now_ + delay, 0, Event::Type::Task, {}, 0, {}, std::move(task)}));
}

void SimulatedNetwork::enqueue(std::unique_ptr<Event> e) {
  e->seq = seq_++;
  queue_.push(e.release());
}

bool SimulatedNetwork::isolated(const NodeId& id, Micros at) const {
  return std::any_of(plan_.partitions.begin(), plan_.partitions.end(),
                     [&](const FaultPlan::Partition& p) { return p.node == id && at >= p.from && at < p.to; });
}

double SimulatedNetwork::dropProbability(const NodeId& id) const {
  double p = 0;
  for (const auto& d : plan_.drops) {
    if (d.node == id) p = std::max(p, d.probability);
  }
  return p;
}

Micros SimulatedNetwork::extraDelay(const NodeId& id) {
  Micros extra = 0;
  for (const auto& d : plan_.delays) {
    if (d.node == id) extra += std::uniform_int_distribution<Micros>(d.min, d.max)(rng_);
  }
  return extra;
}

bool SimulatedNetwork::equivocates(const NodeId& id, MessageKind kind) const {
  return std::any_of(plan_.equivocations.begin(), plan_.equivocations.end(),
                     [&](const FaultPlan::Equivocate& e) { return e.node == id && e.kinds.count(kind); });
}

void SimulatedNetwork::send(const NodeId& from, const NodeId& to, const Envelope& env) {
  auto src = nodes_.find(from);
  auto dst = nodes_.find(to);
  if (src == nodes_.end() || dst == nodes_.end() || src->second.crashed) {
    ++dropped_;
    return;
  }
  Envelope out = env;
  if (equivocates(from, env.kind)) {
    auto m = mutators_.find(env.kind);
    auto ids = nodeIds();
    auto index = std::find(ids.begin(), ids.end(), to) - ids.begin();
    if (m != mutators_.end() && index % 2 == 1) {
      out = Envelope::sign(from, env.kind, m->second(env.body, rng_), src->second.key);
    }
  }

  if (from == to) {
    enqueue(std::unique_ptr<Event>(new Event{now_, 0, Event::Type::Deliver, to, dst->second.generation, std::move(out), {}}));
    return;
  }
  if (isolated(from, now_) || isolated(to, now_)) {
    ++dropped_;
    return;
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (const auto& id : {from, to}) {
    double p = dropProbability(id);
    if (p > 0 && coin(rng_) < p) {
      ++dropped_;
      return;
    }
  }

  Micros latency = std::uniform_int_distribution<Micros>(config_.minLatency, config_.maxLatency)(rng_);
  latency += extraDelay(from) + extraDelay(to);
  auto& last = linkClock_[{from, to}];
  Micros at = std::max(now_ + latency, last);
  last = at;
  enqueue(std::unique_ptr<Event>(new Event{at, 0, Event::Type::Deliver, to, dst->second.generation, std::move(out), {}}));
}

void SimulatedNetwork::applyCrashes() {
  for (const auto& c : plan_.crashes) {
    if (steps_ >= c.atStep) {
      auto it = nodes_.find(c.node);
      if (it != nodes_.end() && !it->second.crashed) {
        log().info("sim: crashing {} at step {}", c.node, steps_);
        it->second.crashed = true;
      }
    }
  }
}

bool SimulatedNetwork::step() {
  if (queue_.empty()) return false;
  std::unique_ptr<Event> e(queue_.top());
  queue_.pop();
  now_ = std::max(now_, e->time);
  ++steps_;
  applyCrashes();

  if (e->type == Event::Type::Task) {
    e->task();
    return true;
  }
  auto it = nodes_.find(e->to);
  if (it == nodes_.end()) return true;
  auto& slot = it->second;
  if (e->generation != slot.generation) return true;

  if (e->type == Event::Type::Tick) {
    enqueue(std::unique_ptr<Event>(new Event{now_ + config_.tickInterval, 0, Event::Type::Tick, e->to, slot.generation, {}, {}}));
    if (!slot.crashed && slot.endpoint != nullptr) slot.endpoint->tick();
    return true;
  }

  if (slot.crashed || slot.endpoint == nullptr || (isolated(e->to, now_) && e->env.sender != e->to)) {
    ++dropped_;
    return true;
  }
  if (!e->env.verify(keyring_)) {
    ++rejected_;
    return true;
  }
  codec::Writer w;
  w.raw(transcript_.bytes).i64(now_).str(e->env.sender).str(e->to).u8(static_cast<std::uint8_t>(e->env.kind)).raw(e->env.signature.bytes);
  transcript_ = sha256(w.bytes());
  ++delivered_;
  slot.endpoint->deliver(e->env);
  return true;
}

bool SimulatedNetwork::runUntil(const std::function<bool()>& done, Micros deadline) {
  while (!done()) {
    if (queue_.empty() || queue_.top()->time > deadline) return done();
    step();
  }
  return true;
}

void SimulatedNetwork::runFor(Micros duration) {
  auto deadline = now_ + duration;
  while (!queue_.empty() && queue_.top()->time <= deadline) step();
  now_ = std::max(now_, deadline);
}

Digest SimulatedNetwork::transcriptDigest() const { return transcript_; }

}  // namespace bftflow::p2p
