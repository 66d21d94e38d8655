// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/node/host.hpp"

#include <chrono>

#include "bftflow/common/log.hpp"

namespace bftflow::node {

namespace {

std::int64_t systemMicros() {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

NodeHost::NodeHost(NodeConfig config, HostOptions options) : config_(std::move(config)), options_(std::move(options)) {
  validateConfig(config_);
  auto key = std::make_shared<const KeyPair>(loadKey(config_.keyFile));
  if (key->publicKey() != config_.self().publicKey) {
    throw ConfigError("key file " + config_.keyFile.string() + " does not match the public key listed for " +
                      config_.nodeId);
  }
  std::vector<p2p::PeerDescriptor> peers;
  for (const auto& p : config_.peers) peers.push_back({p.id, p.address, p.publicKey});
  transport_ = std::make_unique<p2p::TcpTransport>(config_.nodeId, *key, std::move(peers), config_.p2pListen(),
                                                   [this](Envelope env) {
                                                     {
                                                       std::lock_guard lock(mutex_);
                                                       queue_.emplace_back(std::move(env));
                                                     }
                                                     wake_.notify_one();
                                                   });

  auto o = toOptions(config_);
  o.registry = options_.registry;
  // Request sequences stay above anything used before a restart.
  o.firstClientSequence = static_cast<std::uint64_t>(systemMicros());
  o.seed = static_cast<std::uint64_t>(systemMicros());
  node_ = std::make_unique<Node>(config_.nodeId, key, std::move(o), *transport_, clock_);
  node_->onEvent([this](const NodeEvent& e) {
    {
      std::lock_guard lock(eventsMutex_);
      events_.push_back(e);
      while (events_.size() > options_.eventBacklog) events_.pop_front();
    }
    eventsCv_.notify_all();
  });
}

NodeHost::~NodeHost() { stop(); }

void NodeHost::start() {
  if (running_) return;
  transport_->start();
  running_ = true;
  thread_ = std::thread([this] { loop(); });
  post([](Node& n) { n.start(); });
  log().info("{}: peer listener on {}", config_.nodeId, config_.p2pListen());
}

void NodeHost::stop() {
  if (!running_.exchange(false)) return;
  wake_.notify_all();
  if (thread_.joinable()) thread_.join();
  transport_->stop();
  eventsCv_.notify_all();
}

void NodeHost::post(Task task) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw std::runtime_error(config_.nodeId + " is stopped");
    queue_.emplace_back(std::move(task));
  }
  wake_.notify_one();
}

void NodeHost::loop() {
  loopId_ = std::this_thread::get_id();
  auto interval = std::chrono::microseconds(options_.tickInterval);
  auto nextTick = std::chrono::steady_clock::now();
  while (running_) {
    std::deque<std::variant<Envelope, Task>> batch;
    {
      std::unique_lock lock(mutex_);
      wake_.wait_until(lock, nextTick, [&] { return !queue_.empty() || !running_; });
      batch.swap(queue_);
    }
    for (auto& item : batch) {
      try {
        if (auto* env = std::get_if<Envelope>(&item)) {
          node_->deliver(*env);
        } else {
          std::get<Task>(item)(*node_);
        }
      } catch (const std::exception& e) {
        log().error("{}: {}", config_.nodeId, e.what());
      }
    }
    if (std::chrono::steady_clock::now() >= nextTick) {
      node_->tick();
      nextTick = std::chrono::steady_clock::now() + interval;
    }
  }
  // Tasks still queued would leave their callers waiting forever.
  std::deque<std::variant<Envelope, Task>> rest;
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
    rest.swap(queue_);
  }
  for (auto& item : rest) {
    if (auto* task = std::get_if<Task>(&item)) (*task)(*node_);
  }
}

std::vector<NodeEvent> NodeHost::eventsAfter(std::uint64_t after, std::chrono::milliseconds wait) const {
  std::unique_lock lock(eventsMutex_);
  auto ready = [&] { return !events_.empty() && events_.back().id > after; };
  if (!ready()) eventsCv_.wait_for(lock, wait, [&] { return ready() || !running_; });
  std::vector<NodeEvent> out;
  for (const auto& e : events_) {
    if (e.id > after) out.push_back(e);
  }
  return out;
}

std::uint64_t NodeHost::lastEventId() const {
  std::lock_guard lock(eventsMutex_);
  return events_.empty() ? 0 : events_.back().id;
}

}  // namespace bftflow::node
