// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/node/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "bftflow/p2p/tcp_transport.hpp"

namespace bftflow::node {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T field(const json& doc, const char* name, const T& fallback) {
  auto it = doc.find(name);
  if (it == doc.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + name + "' has the wrong type");
  }
}

template <typename T>
T required(const json& doc, const char* name) {
  if (!doc.contains(name)) throw ConfigError(std::string("missing field '") + name + "'");
  return field<T>(doc, name, T{});
}

Micros millis(const json& doc, const char* name, Micros fallback) {
  auto ms = field<std::int64_t>(doc, name, fallback / 1000);
  if (ms <= 0) throw ConfigError(std::string("timeouts.") + name + " must be positive");
  return ms * 1000;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

const PeerConfig& NodeConfig::self() const {
  for (const auto& p : peers) {
    if (p.id == nodeId) return p;
  }
  throw ConfigError("nodeId '" + nodeId + "' is not in the peer list");
}

NodeConfig configFromJson(const json& doc, const fs::path& baseDir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  NodeConfig c;
  c.nodeId = required<std::string>(doc, "nodeId");
  c.f = field<std::uint32_t>(doc, "f", c.f);
  auto blockSize = field<std::int64_t>(doc, "blockSize", 1);
  if (blockSize < 1) throw ConfigError("blockSize must be at least 1");
  c.blockSize = static_cast<std::size_t>(blockSize);
  c.checkpointInterval = field<std::uint32_t>(doc, "checkpointInterval", c.checkpointInterval);
  c.watermarkWindow = field<std::uint32_t>(doc, "watermarkWindow", c.watermarkWindow);
  if (c.checkpointInterval == 0 || c.watermarkWindow < c.checkpointInterval) {
    throw ConfigError("watermarkWindow must be at least checkpointInterval, which must be positive");
  }

  auto t = field<json>(doc, "timeouts", json::object());
  c.requestTimeout = millis(t, "requestMs", c.requestTimeout);
  c.viewChangeTimeout = millis(t, "viewChangeMs", c.viewChangeTimeout);
  c.retransmitInterval = millis(t, "retransmitMs", c.retransmitInterval);
  c.stateTransferTimeout = millis(t, "stateTransferMs", c.stateTransferTimeout);
  c.clientTimeout = millis(t, "clientMs", c.clientTimeout);
  c.fetchTimeout = millis(t, "fetchMs", c.fetchTimeout);

  c.dataDir = resolve(baseDir, required<std::string>(doc, "dataDir"));
  c.keyFile = resolve(baseDir, required<std::string>(doc, "keyFile"));
  c.listen = field<std::string>(doc, "listen", "");
  auto api = field<json>(doc, "api", json::object());
  c.apiListen = field<std::string>(api, "listen", c.apiListen);
  c.apiToken = field<std::string>(api, "token", "");

  auto peers = required<json>(doc, "peers");
  if (!peers.is_array() || peers.empty()) throw ConfigError("peers must be a non-empty array");
  for (const auto& p : peers) {
    PeerConfig pc;
    pc.id = required<std::string>(p, "id");
    pc.address = required<std::string>(p, "address");
    try {
      pc.publicKey = PublicKey::fromHex(required<std::string>(p, "publicKey"));
    } catch (const std::invalid_argument&) {
      throw ConfigError("peer '" + pc.id + "' has a malformed publicKey");
    }
    pc.member = field<bool>(p, "member", true);
    c.peers.push_back(std::move(pc));
  }
  validateConfig(c);
  return c;
}

NodeConfig loadConfig(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return configFromJson(doc, fs::absolute(path).parent_path());
}

json configToJson(const NodeConfig& c) {
  json peers = json::array();
  for (const auto& p : c.peers) {
    peers.push_back({{"id", p.id}, {"address", p.address}, {"publicKey", p.publicKey.hex()}, {"member", p.member}});
  }
  json doc = {
      {"nodeId", c.nodeId},
      {"f", c.f},
      {"blockSize", c.blockSize},
      {"checkpointInterval", c.checkpointInterval},
      {"watermarkWindow", c.watermarkWindow},
      {"timeouts",
       {{"requestMs", c.requestTimeout / 1000},
        {"viewChangeMs", c.viewChangeTimeout / 1000},
        {"retransmitMs", c.retransmitInterval / 1000},
        {"stateTransferMs", c.stateTransferTimeout / 1000},
        {"clientMs", c.clientTimeout / 1000},
        {"fetchMs", c.fetchTimeout / 1000}}},
      {"dataDir", c.dataDir.string()},
      {"keyFile", c.keyFile.string()},
      {"api", {{"listen", c.apiListen}, {"token", c.apiToken}}},
      {"peers", peers},
  };
  if (!c.listen.empty()) doc["listen"] = c.listen;
  return doc;
}

void validateConfig(const NodeConfig& c) {
  if (c.blockSize < 1) throw ConfigError("blockSize must be at least 1");
  std::set<NodeId> ids;
  std::set<std::string> addresses;
  std::size_t members = 0;
  for (const auto& p : c.peers) {
    if (p.id.empty()) throw ConfigError("peer with empty id");
    if (!ids.insert(p.id).second) throw ConfigError("duplicate peer id '" + p.id + "'");
    if (!addresses.insert(p.address).second) throw ConfigError("duplicate peer address '" + p.address + "'");
    try {
      p2p::splitAddress(p.address);
    } catch (const std::invalid_argument&) {
      throw ConfigError("peer '" + p.id + "' has a malformed address '" + p.address + "'");
    }
    if (p.member) ++members;
  }
  c.self();
  if (members < 3 * static_cast<std::size_t>(c.f) + 1) {
    throw ConfigError("f=" + std::to_string(c.f) + " needs at least " + std::to_string(3 * c.f + 1) +
                      " initial members, config lists " + std::to_string(members));
  }
}

NodeOptions toOptions(const NodeConfig& c) {
  NodeOptions o;
  o.initialView.f = c.f;
  for (const auto& p : c.peers) {
    o.keyring.add(p.id, p.publicKey);
    if (p.member) o.initialView.members.push_back(p.id);
  }
  o.blockSize = c.blockSize;
  o.replica.checkpointInterval = c.checkpointInterval;
  o.replica.watermarkWindow = c.watermarkWindow;
  o.replica.requestTimeout = c.requestTimeout;
  o.replica.viewChangeTimeout = c.viewChangeTimeout;
  o.replica.retransmitInterval = c.retransmitInterval;
  o.replica.stateTransferTimeout = c.stateTransferTimeout;
  o.client.timeout = c.clientTimeout;
  o.blocks.fetchTimeout = c.fetchTimeout;
  o.dataDir = c.dataDir;
  return o;
}

KeyPair loadKey(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read key file " + path.string());
  std::string hex;
  in >> hex;
  try {
    return KeyPair::fromSeedHex(hex);
  } catch (const std::invalid_argument&) {
    throw ConfigError("key file " + path.string() + " does not hold a 64-digit hex seed");
  }
}

void writeKey(const fs::path& path, const KeyPair& key) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write key file " + path.string());
    out << key.seedHex() << "\n";
  }
  fs::permissions(path, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
}

}  // namespace bftflow::node
