// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <thread>
#include <type_traits>
#include <variant>

#include "bftflow/node/config.hpp"
#include "bftflow/p2p/tcp_transport.hpp"

namespace bftflow::node {

struct HostOptions {
  Micros tickInterval = 5'000;
  /// Events kept for late subscribers.
  std::size_t eventBacklog = 4096;
  std::shared_ptr<const engine::HostRegistry> registry;
};

/// A live node: TCP transport plus one thread that owns the Node and runs
/// every delivery, tick and API action in order.
class NodeHost {
 public:
  using Task = std::function<void(Node&)>;

  explicit NodeHost(NodeConfig config, HostOptions options = {});
  ~NodeHost();

  NodeHost(const NodeHost&) = delete;
  NodeHost& operator=(const NodeHost&) = delete;

  /// Binds the peer listener and starts recovery. Throws when the listen
  /// address cannot be bound or the data directory is unusable.
  void start();
  void stop();
  bool running() const { return running_; }

  /// Throws std::runtime_error once the host stopped.
  void post(Task task);

  /// Runs `fn` on the node thread and waits for its result.
  template <typename F>
  auto call(F&& fn) -> std::invoke_result_t<F, Node&> {
    using R = std::invoke_result_t<F, Node&>;
    if (std::this_thread::get_id() == loopId_) return fn(*node_);
    auto task = std::make_shared<std::packaged_task<R(Node&)>>(std::forward<F>(fn));
    auto result = task->get_future();
    post([task](Node& n) { (*task)(n); });
    return result.get();
  }

  /// Events with id > `after`; waits up to `wait` when there are none yet.
  std::vector<NodeEvent> eventsAfter(std::uint64_t after, std::chrono::milliseconds wait) const;
  std::uint64_t lastEventId() const;

  const NodeConfig& config() const { return config_; }
  const p2p::TcpTransport& transport() const { return *transport_; }

 private:
  void loop();

  NodeConfig config_;
  HostOptions options_;
  p2p::SteadyClock clock_;
  std::unique_ptr<p2p::TcpTransport> transport_;
  std::unique_ptr<Node> node_;

  std::mutex mutex_;
  std::condition_variable wake_;
  std::deque<std::variant<Envelope, Task>> queue_;
  std::atomic<bool> running_{false};
  std::thread thread_;
  std::atomic<std::thread::id> loopId_;
  bool closed_ = false;

  mutable std::mutex eventsMutex_;
  mutable std::condition_variable eventsCv_;
  std::deque<NodeEvent> events_;
};

}  // namespace bftflow::node
