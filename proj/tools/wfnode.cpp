// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

// wfnode: run a node, inspect its chain, talk to its worklist API.

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>

#include "bftflow/api/worklist_api.hpp"
#include "bftflow/chain/block_store.hpp"
#include "bftflow/common/log.hpp"
#include "bftflow/engine/json.hpp"

namespace fs = std::filesystem;
using namespace bftflow;
using nlohmann::json;

namespace {

enum Exit : int {
  kOk = 0,
  kFailed = 1,
  kConfig = 2,
  kKey = 3,
  kBind = 4,
  kData = 5,
};

struct ApiTarget {
  std::string config;
  std::string address = "127.0.0.1:8080";
  std::string token;

  void resolve() {
    if (config.empty()) return;
    auto c = node::loadConfig(config);
    address = c.apiListen;
    if (token.empty()) token = c.apiToken;
  }
};

int request(ApiTarget target, const std::string& method, const std::string& path, const json& body) {
  target.resolve();
  auto [host, port] = p2p::splitAddress(target.address);
  httplib::Client client(host, port);
  client.set_read_timeout(60, 0);
  httplib::Headers headers;
  if (!target.token.empty()) headers.emplace("Authorization", "Bearer " + target.token);
  auto res = method == "POST" ? client.Post(path, headers, body.dump(), "application/json") : client.Get(path, headers);
  if (!res) {
    std::cerr << "cannot reach " << target.address << ": " << httplib::to_string(res.error()) << "\n";
    return kFailed;
  }
  auto parsed = json::parse(res->body, nullptr, false);
  std::cout << (parsed.is_discarded() ? res->body : parsed.dump(2)) << "\n";
  return res->status < 300 ? kOk : kFailed;
}

int runNode(const std::string& configPath, const std::string& nodeId, const std::string& dataDir,
            const std::string& listen, const std::string& apiListen) {
  node::NodeConfig config;
  try {
    auto doc = json::parse(std::ifstream(configPath), nullptr, false);
    if (doc.is_discarded()) throw node::ConfigError(configPath + " is not valid JSON");
    if (!nodeId.empty()) doc["nodeId"] = nodeId;
    if (!dataDir.empty()) doc["dataDir"] = fs::absolute(dataDir).string();
    if (!listen.empty()) doc["listen"] = listen;
    if (!apiListen.empty()) doc["api"]["listen"] = apiListen;
    config = node::configFromJson(doc, fs::absolute(configPath).parent_path());
  } catch (const node::ConfigError& e) {
    std::cerr << "config: " << e.what() << "\n";
    return kConfig;
  }

  // Signals go to the sigwait below, not to worker threads.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<node::NodeHost> host;
  try {
    host = std::make_unique<node::NodeHost>(config);
  } catch (const node::ConfigError& e) {
    std::cerr << "key: " << e.what() << "\n";
    return kKey;
  } catch (const std::exception& e) {
    std::cerr << "data directory " << config.dataDir << ": " << e.what() << "\n";
    return kData;
  }
  api::WorklistApi worklist(*host, {.listen = config.apiListen, .token = config.apiToken});
  try {
    host->start();
    worklist.start();
  } catch (const std::exception& e) {
    std::cerr << "listen: " << e.what() << "\n";
    return kBind;
  }
  std::cout << config.nodeId << " running; peers on " << config.p2pListen() << ", API on " << config.apiListen
            << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  std::cout << "shutting down" << std::endl;
  worklist.stop();
  host->stop();
  return kOk;
}

int inspectChain(const std::string& dir, bool quiet) {
  if (!fs::is_directory(dir)) {
    std::cerr << dir << " is not a directory\n";
    return kData;
  }
  auto store = chain::BlockStore::open(dir);
  if (!quiet) {
    for (const auto& [number, b] : store.blocks()) {
      std::cout << "#" << number << " " << b.hash.hex() << " prev " << b.previousHash.shortHex() << " "
                << b.transactions.size() << " tx " << api::isoTime(b.timestampMs) << "\n";
      for (const auto& tx : b.transactions) {
        if (tx.isModelUpdate()) {
          std::cout << "    MODEL_UPDATE   " << tx.id().shortHex() << " model " << tx.model().modelId;
        } else {
          std::cout << "    INSTANCE_STATE " << tx.id().shortHex() << " case " << tx.state().caseId.shortHex()
                    << " marking " << engine::markingToJson(tx.state().marking).dump();
        }
        std::cout << " by " << tx.submitter() << "\n";
      }
    }
  }
  auto check = store.verifyChainBackward(store.headHash());
  std::cout << "head #" << store.headNumber() << " " << store.headHash().hex() << "\n";
  for (auto n : store.corrupt()) std::cout << "corrupt block file #" << n << "\n";
  if (store.highest() > store.headNumber()) {
    std::cout << "blocks above the head are not linked: highest stored #" << store.highest() << "\n";
  }
  if (!check.ok) {
    std::cout << "chain INVALID";
    if (check.failedAt) std::cout << ": block #" << *check.failedAt << " fails hash or linkage";
    if (check.missing) std::cout << ": block #" << *check.missing << " missing";
    std::cout << "\n";
    return kFailed;
  }
  std::cout << "chain OK (" << store.headNumber() << " blocks after genesis)\n";
  return store.corrupt().empty() ? kOk : kFailed;
}

int validateModel(const std::string& file) {
  try {
    auto model = engine::loadModelFile(file);
    if (auto problem = engine::checkModel(model)) {
      std::cerr << file << ": " << *problem << "\n";
      return kFailed;
    }
    std::cout << file << ": model '" << model.modelId << "' OK (" << model.places.size() << " places, "
              << model.transitions.size() << " transitions)\n";
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << file << ": " << e.what() << "\n";
    return kFailed;
  }
}

json parseAssignments(const std::vector<std::string>& pairs) {
  json data = json::object();
  for (const auto& kv : pairs) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--data", "expected key=value, got " + kv);
    auto key = kv.substr(0, eq);
    auto raw = kv.substr(eq + 1);
    // Numbers and booleans keep their type; anything else is text.
    auto v = json::parse(raw, nullptr, false);
    data[key] = v.is_discarded() || v.is_object() || v.is_array() || v.is_null() ? json(raw) : v;
  }
  return data;
}

int initCluster(const std::string& dir, std::size_t nodes, std::size_t spares, std::uint32_t f, std::size_t blockSize,
                const std::string& host, int p2pPort, int apiPort) {
  fs::create_directories(fs::path(dir) / "keys");
  auto token = KeyPair::generate().seedHex().substr(0, 32);
  std::vector<node::PeerConfig> peers;
  for (std::size_t i = 0; i < nodes + spares; ++i) {
    auto id = "n" + std::to_string(i);
    auto key = KeyPair::generate();
    node::writeKey(fs::path(dir) / "keys" / (id + ".key"), key);
    peers.push_back({id, host + ":" + std::to_string(p2pPort + static_cast<int>(i)), key.publicKey(), i < nodes});
  }
  for (std::size_t i = 0; i < peers.size(); ++i) {
    node::NodeConfig c;
    c.nodeId = peers[i].id;
    c.peers = peers;
    c.f = f;
    c.blockSize = blockSize;
    c.dataDir = "data/" + c.nodeId;
    c.keyFile = "keys/" + c.nodeId + ".key";
    c.apiListen = host + ":" + std::to_string(apiPort + static_cast<int>(i));
    c.apiToken = token;
    node::validateConfig(c);
    std::ofstream(fs::path(dir) / (c.nodeId + ".json")) << node::configToJson(c).dump(2) << "\n";
  }
  std::cout << "wrote " << peers.size() << " configs to " << dir << " (API token " << token << ")\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Permissioned workflow blockchain node"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a node");
  std::string configPath, nodeId, dataDir, listen, apiListen;
  run->add_option("--config", configPath, "Node config file")->required()->check(CLI::ExistingFile);
  run->add_option("--node-id", nodeId, "Override nodeId");
  run->add_option("--data", dataDir, "Override the data directory");
  run->add_option("--listen", listen, "Override the peer listen address (host:port)");
  run->add_option("--api-listen", apiListen, "Override the worklist API address (host:port)");

  auto* chainCmd = app.add_subcommand("chain", "Local chain tools");
  chainCmd->require_subcommand(1);
  auto* inspect = chainCmd->add_subcommand("inspect", "Print and verify the local chain");
  std::string inspectDir;
  bool quiet = false;
  inspect->add_option("--data", inspectDir, "Node data directory")->required();
  inspect->add_flag("--quiet,-q", quiet, "Only print the verification result");

  ApiTarget target;
  auto addTarget = [&target](CLI::App* cmd) {
    cmd->add_option("--config", target.config, "Take API address and token from this node config")
        ->check(CLI::ExistingFile);
    cmd->add_option("--api", target.address, "Worklist API address (host:port)");
    cmd->add_option("--token", target.token, "Bearer token");
  };

  auto* model = app.add_subcommand("model", "Workflow models");
  model->require_subcommand(1);
  std::string modelFile;
  auto* submit = model->add_subcommand("submit", "Install a model through a running node");
  submit->add_option("file", modelFile, "Model document (JSON)")->required()->check(CLI::ExistingFile);
  addTarget(submit);
  auto* validate = model->add_subcommand("validate", "Check a model document offline");
  validate->add_option("file", modelFile, "Model document (JSON)")->required()->check(CLI::ExistingFile);

  auto* caseCmd = app.add_subcommand("case", "Workflow cases");
  caseCmd->require_subcommand(1);
  auto* launch = caseCmd->add_subcommand("launch", "Launch a case through a running node");
  std::string modelId;
  std::vector<std::string> assignments;
  launch->add_option("modelId", modelId, "Installed model id")->required();
  launch->add_option("--data", assignments, "Initial data, key=value (repeatable)");
  addTarget(launch);

  auto* worklistCmd = app.add_subcommand("worklist", "Show the worklist of a running node");
  addTarget(worklistCmd);
  auto* status = app.add_subcommand("status", "Show the chain status of a running node");
  addTarget(status);

  auto* keygen = app.add_subcommand("keygen", "Generate a node key pair");
  std::string keyOut;
  keygen->add_option("--out", keyOut, "Key file to write")->required();

  auto* init = app.add_subcommand("init", "Write keys and configs for a local cluster");
  std::string initDir = "cluster";
  std::size_t nodes = 4, spares = 0, blockSize = 1;
  std::uint32_t f = 1;
  std::string host = "127.0.0.1";
  int p2pPort = 7000, apiPort = 8080;
  init->add_option("--dir", initDir, "Output directory");
  init->add_option("--nodes", nodes, "Initial members")->check(CLI::Range(1, 64));
  init->add_option("--spares", spares, "Permissioned nodes outside the initial view");
  init->add_option("--f", f, "Tolerated faults");
  init->add_option("--block-size", blockSize, "Transactions per block")->check(CLI::PositiveNumber);
  init->add_option("--host", host, "Address all nodes bind to");
  init->add_option("--p2p-port", p2pPort, "First peer port");
  init->add_option("--api-port", apiPort, "First API port");

  CLI11_PARSE(app, argc, argv);
  initCrypto();

  try {
    if (*run) return runNode(configPath, nodeId, dataDir, listen, apiListen);
    if (*inspect) return inspectChain(inspectDir, quiet);
    if (*validate) return validateModel(modelFile);
    if (*submit) {
      auto doc = json::parse(std::ifstream(modelFile), nullptr, false);
      if (doc.is_discarded()) {
        std::cerr << modelFile << " is not valid JSON\n";
        return kFailed;
      }
      return request(target, "POST", "/models", doc);
    }
    if (*launch) {
      return request(target, "POST", "/cases", {{"modelId", modelId}, {"initialData", parseAssignments(assignments)}});
    }
    if (*worklistCmd) return request(target, "GET", "/worklist", {});
    if (*status) return request(target, "GET", "/chain/status", {});
    if (*keygen) {
      auto key = KeyPair::generate();
      node::writeKey(keyOut, key);
      std::cout << key.publicKey().hex() << "\n";
      return kOk;
    }
    if (*init) return initCluster(initDir, nodes, spares, f, blockSize, host, p2pPort, apiPort);
  } catch (const node::ConfigError& e) {
    std::cerr << "config: " << e.what() << "\n";
    return kConfig;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kFailed;
  }
  return kOk;
}
