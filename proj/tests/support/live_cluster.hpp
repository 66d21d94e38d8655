// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Real nodes over loopback TCP, each with its worklist API on a free port.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include <httplib.h>

#include "bftflow/api/worklist_api.hpp"
#include "support/chain_fixture.hpp"
#include "support/fixtures.hpp"

namespace live {

using namespace bftflow;
using nlohmann::json;

inline int freePort() {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

inline bool eventually(const std::function<bool()>& pred, std::chrono::milliseconds limit) {
  auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  return pred();
}

struct Response {
  int status = 0;
  json body;
};

class Cluster {
 public:
  static constexpr const char* kToken = "test-token";

  /// `members` nodes in the initial view plus `spares` that may join.
  explicit Cluster(std::size_t members = 4, std::size_t spares = 0, std::size_t blockSize = 1)
      : dir_("live") {
    std::vector<node::PeerConfig> peers;
    for (std::size_t i = 0; i < members + spares; ++i) {
      auto id = "n" + std::to_string(i);
      peers.push_back({id, "127.0.0.1:" + std::to_string(freePort()), fixtures::keyFor(id)->publicKey(), i < members});
      node::writeKey(dir_.path / (id + ".key"), *fixtures::keyFor(id));
    }
    for (const auto& p : peers) {
      node::NodeConfig c;
      c.nodeId = p.id;
      c.peers = peers;
      c.blockSize = blockSize;
      c.dataDir = dir_.path / p.id;
      c.keyFile = dir_.path / (p.id + ".key");
      c.apiListen = "127.0.0.1:0";
      c.apiToken = kToken;
      configs_.push_back(c);
    }
    hosts_.resize(configs_.size());
    apis_.resize(configs_.size());
  }

  ~Cluster() {
    for (std::size_t i = 0; i < hosts_.size(); ++i) stop(i);
  }

  void start(std::size_t i) {
    hosts_[i] = std::make_unique<node::NodeHost>(configs_[i]);
    apis_[i] = std::make_unique<api::WorklistApi>(*hosts_[i], api::ApiOptions{.listen = "127.0.0.1:0", .token = kToken});
    hosts_[i]->start();
    apis_[i]->start();
  }

  void stop(std::size_t i) {
    if (apis_[i]) apis_[i]->stop();
    if (hosts_[i]) hosts_[i]->stop();
    apis_[i].reset();
    hosts_[i].reset();
  }

  node::NodeHost& host(std::size_t i) { return *hosts_.at(i); }
  int apiPort(std::size_t i) const { return apis_.at(i)->port(); }
  const node::NodeConfig& config(std::size_t i) const { return configs_.at(i); }
  std::size_t size() const { return configs_.size(); }

  bool ready(std::size_t i) {
    return hosts_[i] && hosts_[i]->call([](node::Node& n) { return n.ready(); });
  }

  Response get(std::size_t i, const std::string& path, bool auth = true) {
    httplib::Client c("127.0.0.1", apiPort(i));
    c.set_read_timeout(60, 0);
    httplib::Headers h;
    if (auth) h.emplace("Authorization", std::string("Bearer ") + kToken);
    return wrap(c.Get(path, h));
  }

  Response post(std::size_t i, const std::string& path, const json& body) {
    httplib::Client c("127.0.0.1", apiPort(i));
    c.set_read_timeout(60, 0);
    httplib::Headers h{{"Authorization", std::string("Bearer ") + kToken}};
    return wrap(c.Post(path, h, body.dump(), "application/json"));
  }

 private:
  static Response wrap(const httplib::Result& r) {
    if (!r) return {0, json()};
    return {r->status, json::parse(r->body, nullptr, false)};
  }

  chainfix::TempDir dir_;
  std::vector<node::NodeConfig> configs_;
  std::vector<std::unique_ptr<node::NodeHost>> hosts_;
  std::vector<std::unique_ptr<api::WorklistApi>> apis_;
};

}  // namespace live
