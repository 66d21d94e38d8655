// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Static node configuration (JSON). Relative paths resolve against the
// directory holding the config file.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bftflow/node/node.hpp"

namespace bftflow::node {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PeerConfig {
  NodeId id;
  /// host:port of the peer-to-peer listener.
  std::string address;
  PublicKey publicKey;
  /// Part of the initial ordering view; others join at runtime.
  bool member = true;
};

struct NodeConfig {
  NodeId nodeId;
  std::vector<PeerConfig> peers;
  std::uint32_t f = 1;
  std::size_t blockSize = 1;
  std::uint32_t checkpointInterval = 64;
  std::uint32_t watermarkWindow = 128;
  Micros requestTimeout = 500'000;
  Micros viewChangeTimeout = 1'000'000;
  Micros retransmitInterval = 100'000;
  Micros stateTransferTimeout = 1'000'000;
  Micros clientTimeout = 2'000'000;
  Micros fetchTimeout = 2'000'000;
  std::filesystem::path dataDir;
  std::filesystem::path keyFile;
  /// Overrides the address in this node's peer entry.
  std::string listen;
  std::string apiListen = "127.0.0.1:8080";
  /// Empty disables authentication.
  std::string apiToken;

  const PeerConfig& self() const;
  std::string p2pListen() const { return listen.empty() ? self().address : listen; }
};

/// Throws ConfigError naming the offending field.
NodeConfig configFromJson(const nlohmann::json& doc, const std::filesystem::path& baseDir = {});
NodeConfig loadConfig(const std::filesystem::path& path);
nlohmann::json configToJson(const NodeConfig& config);
/// Checks the invariants: nodeId in the peer list, unique ids and addresses,
/// blockSize >= 1, enough initial members for f.
void validateConfig(const NodeConfig& config);

/// Ordering, block and client settings; key material, clocks and data
/// directory stay with the caller.
NodeOptions toOptions(const NodeConfig& config);

/// Key files hold the hex seed of an Ed25519 key pair on one line.
KeyPair loadKey(const std::filesystem::path& path);
void writeKey(const std::filesystem::path& path, const KeyPair& key);

}  // namespace bftflow::node
