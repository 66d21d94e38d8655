// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// HTTP/1.1 worklist interface of one node. Endpoints and bodies are listed
// in docs/api.md.

#include <atomic>
#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include "bftflow/node/host.hpp"

namespace httplib {
class Server;
}

namespace bftflow::api {

struct ApiOptions {
  /// host:port; port 0 picks a free one.
  std::string listen = "127.0.0.1:8080";
  /// Bearer token; empty disables authentication.
  std::string token;
  /// Longest a submitting request waits for its outcome.
  std::chrono::milliseconds submitWait{20'000};
  /// After consensus accepted a transaction, how long to wait for its block
  /// before answering 202.
  std::chrono::milliseconds acceptGrace{1'000};
  std::chrono::milliseconds keepAlive{15'000};
  std::size_t threads = 32;
};

class WorklistApi {
 public:
  WorklistApi(node::NodeHost& host, ApiOptions options);
  ~WorklistApi();

  /// Binds and serves on a background thread; throws when binding fails.
  void start();
  void stop();
  int port() const { return port_; }

 private:
  void routes();

  node::NodeHost& host_;
  ApiOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<bool> stopping_{false};
  int port_ = 0;
};

/// Milliseconds since the epoch as ISO-8601 UTC ("2026-01-02T03:04:05.678Z").
std::string isoTime(std::int64_t ms);

}  // namespace bftflow::api
