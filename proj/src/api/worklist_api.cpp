// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/api/worklist_api.hpp"

#include <condition_variable>
#include <ctime>
#include <mutex>
#include <set>

#include <httplib.h>

#include "bftflow/common/log.hpp"
#include "bftflow/engine/json.hpp"
#include "bftflow/p2p/tcp_transport.hpp"

namespace bftflow::api {

using nlohmann::json;
using node::Node;
using node::SubmitOutcome;
using node::SubmitStatus;

std::string isoTime(std::int64_t ms) {
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
  return out;
}

namespace {

struct Reply {
  int status = 200;
  json body;
};

Reply error(int status, const std::string& code, const std::string& message) {
  return {status, {{"code", code}, {"message", message}}};
}

Reply recovering() { return error(503, "RECOVERING", "node is recovering"); }

int statusFor(engine::ErrorCode c) {
  switch (c) {
    case engine::ErrorCode::UnknownModel:
    case engine::ErrorCode::UnknownWorkItem: return 404;
    case engine::ErrorCode::WorkItemStale: return 409;
    default: return 422;
  }
}

int statusForRejection(const std::string& code) {
  static const std::set<std::string> invalid = {"MALFORMED_MODEL", "BAD_DATA", "DATA_CHANGE_VIOLATION",
                                                "CONSTRAINT_VIOLATION", "UNKNOWN_MODEL", "MODEL_MISMATCH"};
  return invalid.count(code) ? 422 : 409;
}

/// Outcome of one submission, filled on the node thread.
struct Waiter {
  std::mutex m;
  std::condition_variable cv;
  std::optional<SubmitOutcome> done;
  std::optional<SubmitOutcome> ordered;

  static Node::Done onDone(std::shared_ptr<Waiter> w) {
    return [w](const SubmitOutcome& o) {
      std::lock_guard lock(w->m);
      w->done = o;
      w->cv.notify_all();
    };
  }
  static Node::Done onOrdered(std::shared_ptr<Waiter> w) {
    return [w](const SubmitOutcome& o) {
      std::lock_guard lock(w->m);
      w->ordered = o;
      w->cv.notify_all();
    };
  }
};

json worklistItem(const Node& n, const engine::WorkItem& item) {
  auto j = engine::workItemToJson(item);
  const auto* b = n.store().get(item.enabledAtBlock);
  j["enabledAt"] = isoTime(b ? b->timestampMs : 0);
  return j;
}

json worklistJson(const Node& n) {
  json items = json::array();
  for (const auto& item : n.engine().worklist()) {
    if (!item.locked()) items.push_back(worklistItem(n, item));
  }
  json pending = json::array();
  for (const auto& p : n.pendingSubmissions()) {
    pending.push_back({{"txId", p.txId.hex()},
                       {"kind", p.kind == engine::TxKind::ModelUpdate ? "MODEL_UPDATE" : "INSTANCE_STATE"},
                       {"subject", p.subject},
                       {"queued", p.queued},
                       {"blockNumber", p.blockNumber}});
  }
  return {{"workItems", items}, {"pendingSubmissions", pending}};
}

json eventJson(const node::NodeEvent& e) {
  return {{"id", e.id},
          {"kind", node::toString(e.kind)},
          {"subject", e.subject},
          {"detail", e.detail},
          {"headNumber", e.headNumber},
          {"at", isoTime(e.atMs)}};
}

}  // namespace

WorklistApi::WorklistApi(node::NodeHost& host, ApiOptions options)
    : host_(host), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  auto threads = options_.threads;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  routes();
}

WorklistApi::~WorklistApi() { stop(); }

void WorklistApi::start() {
  auto [host, port] = p2p::splitAddress(options_.listen);
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ < 0) throw std::runtime_error("cannot bind API to " + options_.listen);
  } else {
    if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind API to " + options_.listen);
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  log().info("{}: worklist API on {}:{}", host_.config().nodeId, host, port_);
}

void WorklistApi::stop() {
  if (stopping_.exchange(true)) return;
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

void WorklistApi::routes() {
  using httplib::Request;
  using httplib::Response;

  auto send = [](Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };

  auto authorized = [this](const Request& req) {
    if (options_.token.empty()) return true;
    if (req.get_header_value("Authorization") == "Bearer " + options_.token) return true;
    // EventSource cannot set headers.
    return req.has_param("token") && req.get_param_value("token") == options_.token;
  };

  // Authentication, body parsing and node-stopped handling around `fn`.
  auto handle = [this, send, authorized](std::function<Reply(const Request&)> fn) {
    return [this, send, authorized, fn](const Request& req, Response& res) {
      if (!authorized(req)) return send(res, error(401, "UNAUTHORIZED", "missing or wrong bearer token"));
      try {
        send(res, fn(req));
      } catch (const json::exception& e) {
        send(res, error(400, "BAD_REQUEST", e.what()));
      } catch (const std::exception& e) {
        log().warn("{}: {} {}: {}", host_.config().nodeId, req.method, req.path, e.what());
        send(res, error(503, "UNAVAILABLE", e.what()));
      }
    };
  };

  // Runs `action` on the node thread; it either answers at once or starts a
  // submission reporting to the waiter. Then waits for the outcome.
  auto submitAndWait = [this](const std::function<std::optional<Reply>(Node&, const std::shared_ptr<Waiter>&)>& action,
                              const std::function<Reply(const SubmitOutcome&)>& committed,
                              const std::function<Reply(const SubmitOutcome&)>& rejected) -> Reply {
    auto waiter = std::make_shared<Waiter>();
    auto now = host_.call([&](Node& n) -> std::optional<Reply> {
      if (!n.ready() || !n.hasEngine()) return recovering();
      try {
        return action(n, waiter);
      } catch (const engine::EngineError& e) {
        return error(statusFor(e.code()), engine::toString(e.code()), e.what());
      }
    });
    if (now) return *now;
    std::unique_lock lock(waiter->m);
    auto deadline = std::chrono::steady_clock::now() + options_.submitWait;
    std::optional<std::chrono::steady_clock::time_point> graceEnd;
    while (!waiter->done) {
      if (waiter->ordered && !graceEnd) graceEnd = std::chrono::steady_clock::now() + options_.acceptGrace;
      auto until = graceEnd ? std::min(*graceEnd, deadline) : deadline;
      if (waiter->cv.wait_until(lock, until) == std::cv_status::timeout) {
        if (!waiter->done && graceEnd && std::chrono::steady_clock::now() >= *graceEnd) {
          const auto& o = *waiter->ordered;
          return {202, {{"status", "pending"}, {"txId", o.txId.hex()}, {"blockNumber", o.blockNumber}}};
        }
        if (std::chrono::steady_clock::now() >= deadline) break;
      }
    }
    if (!waiter->done) return error(504, "TIMEOUT", "no outcome yet; the transaction may still commit");
    auto o = *waiter->done;
    lock.unlock();
    switch (o.status) {
      case SubmitStatus::Committed: return committed(o);
      case SubmitStatus::Accepted:
        return {202, {{"status", "pending"}, {"txId", o.txId.hex()}, {"blockNumber", o.blockNumber}}};
      case SubmitStatus::Rejected: return rejected(o);
      case SubmitStatus::Timeout: return error(504, "TIMEOUT", o.reason);
      case SubmitStatus::Divergent: return error(502, "DIVERGENT_REPLIES", o.reason);
      case SubmitStatus::NotReady: return recovering();
    }
    return error(500, "INTERNAL", "unknown outcome");
  };

  auto plainRejection = [](const SubmitOutcome& o) -> Reply {
    return {statusForRejection(o.code), {{"code", o.code}, {"message", o.reason}, {"txId", o.txId.hex()}}};
  };

  server_->Get("/worklist", handle([this](const Request&) {
                 return host_.call([](Node& n) -> Reply {
                   if (!n.ready()) return recovering();
                   return {200, worklistJson(n)};
                 });
               }));

  server_->Post(R"(/worklist/([^/]+)/complete)",
                handle([this, submitAndWait](const Request& req) {
                  std::string itemId = req.matches[1];
                  json body = req.body.empty() ? json::object() : json::parse(req.body);
                  json outputs = body.value("outputValues", json::object());
                  return submitAndWait(
                      [&](Node& n, const std::shared_ptr<Waiter>& w) -> std::optional<Reply> {
                        const auto* item = n.engine().findWorkItem(itemId);
                        if (!item) return error(404, "UNKNOWN_WORK_ITEM", "no work item '" + itemId + "'");
                        const auto* cs = n.engine().findCase(item->caseId);
                        if (!cs) return error(404, "UNKNOWN_WORK_ITEM", "work item '" + itemId + "' has no case");
                        auto data = engine::dataFromJson(n.engine().models().at(cs->modelId), outputs);
                        n.completeWorkItem(itemId, data, Waiter::onDone(w), Waiter::onOrdered(w));
                        return std::nullopt;
                      },
                      [&](const SubmitOutcome& o) -> Reply {
                        return {200, {{"status", "committed"}, {"txId", o.txId.hex()}, {"blockNumber", o.blockNumber}}};
                      },
                      [&](const SubmitOutcome& o) -> Reply {
                        // Race loser: the item was re-evaluated against the new state.
                        auto worklist = host_.call([](Node& n) { return n.ready() ? worklistJson(n) : json(); });
                        return {statusForRejection(o.code),
                                {{"code", o.code}, {"message", o.reason}, {"txId", o.txId.hex()}, {"worklist", worklist}}};
                      });
                }));

  server_->Post("/models", handle([submitAndWait, plainRejection](const Request& req) {
                  json doc = json::parse(req.body);
                  engine::WorkflowModel model;
                  try {
                    model = engine::modelFromJson(doc);
                  } catch (const engine::ModelFormatError& e) {
                    return error(422, "MALFORMED_MODEL", e.what());
                  }
                  auto modelId = model.modelId;
                  return submitAndWait(
                      [&](Node& n, const std::shared_ptr<Waiter>& w) -> std::optional<Reply> {
                        n.installModel(std::move(model), Waiter::onDone(w), Waiter::onOrdered(w));
                        return std::nullopt;
                      },
                      [&](const SubmitOutcome& o) -> Reply {
                        return {200,
                                {{"status", "committed"},
                                 {"modelId", modelId},
                                 {"txId", o.txId.hex()},
                                 {"blockNumber", o.blockNumber}}};
                      },
                      plainRejection);
                }));

  server_->Post("/cases", handle([submitAndWait, plainRejection](const Request& req) {
                  json body = json::parse(req.body);
                  auto modelId = body.at("modelId").get<std::string>();
                  json initial = body.value("initialData", json::object());
                  Digest caseId;
                  return submitAndWait(
                      [&](Node& n, const std::shared_ptr<Waiter>& w) -> std::optional<Reply> {
                        auto it = n.engine().models().find(modelId);
                        if (it == n.engine().models().end()) {
                          return error(404, "UNKNOWN_MODEL", "no model '" + modelId + "'");
                        }
                        auto data = engine::dataFromJson(it->second, initial);
                        caseId = n.launchCase(modelId, std::move(data), Waiter::onDone(w), Waiter::onOrdered(w));
                        return std::nullopt;
                      },
                      [&](const SubmitOutcome& o) -> Reply {
                        return {200,
                                {{"status", "committed"},
                                 {"caseId", caseId.hex()},
                                 {"txId", o.txId.hex()},
                                 {"blockNumber", o.blockNumber}}};
                      },
                      plainRejection);
                }));

  server_->Get("/cases", handle([this](const Request&) {
                 return host_.call([](Node& n) -> Reply {
                   if (!n.ready()) return recovering();
                   json cases = json::array();
                   for (const auto& [id, cs] : n.engine().cases()) cases.push_back(engine::caseToJson(cs));
                   return {200, {{"cases", cases}}};
                 });
               }));

  server_->Get(R"(/cases/([0-9a-fA-F]{64}))", handle([this](const Request& req) {
                 auto caseId = Digest::fromHex(std::string(req.matches[1]));
                 return host_.call([&](Node& n) -> Reply {
                   if (!n.ready()) return recovering();
                   const auto* cs = n.engine().findCase(caseId);
                   if (!cs) return error(404, "UNKNOWN_CASE", "no case " + caseId.hex());
                   auto j = engine::caseToJson(*cs);
                   json items = json::array();
                   for (const auto& [id, item] : n.engine().allWorkItems()) {
                     if (item.caseId == caseId) items.push_back(engine::workItemToJson(item));
                   }
                   j["workItems"] = items;
                   return {200, j};
                 });
               }));

  server_->Get("/chain/status", handle([this](const Request&) {
                 return host_.call([](Node& n) -> Reply {
                   auto s = n.chainStatus();
                   return {200,
                           {{"status", node::toString(s.status)},
                            {"headNumber", s.headNumber},
                            {"headHash", s.headHash.hex()},
                            {"pendingQueueLength", s.pendingQueueLength},
                            {"viewNumber", s.view.viewNumber},
                            {"membership", s.view.members},
                            {"f", s.view.f},
                            {"leader", s.view.members.empty() ? "" : s.view.leader()},
                            {"member", s.member},
                            {"sync", chain::toString(s.sync)}}};
                 });
               }));

  server_->Get("/events", [this, send, authorized](const Request& req, Response& res) {
    if (!authorized(req)) return send(res, error(401, "UNAUTHORIZED", "missing or wrong bearer token"));
    std::uint64_t after = 0;
    try {
      if (req.has_header("Last-Event-ID")) {
        after = std::stoull(req.get_header_value("Last-Event-ID"));
      } else if (req.has_param("after")) {
        after = std::stoull(req.get_param_value("after"));
      } else {
        after = host_.lastEventId();
      }
    } catch (const std::exception&) {
      return send(res, error(400, "BAD_REQUEST", "event id must be a number"));
    }
    auto cursor = std::make_shared<std::uint64_t>(after);
    auto idle = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, cursor, idle](std::size_t, httplib::DataSink& sink) {
      if (stopping_ || !host_.running()) {
        sink.done();
        return false;
      }
      auto events = host_.eventsAfter(*cursor, std::chrono::milliseconds(500));
      std::string out;
      for (const auto& e : events) {
        out += "id: " + std::to_string(e.id) + "\nevent: " + node::toString(e.kind) + "\ndata: " + eventJson(e).dump() +
               "\n\n";
        *cursor = e.id;
      }
      auto now = std::chrono::steady_clock::now();
      if (out.empty() && now - *idle > options_.keepAlive) out = ": keepalive\n\n";
      if (!out.empty()) {
        *idle = now;
        if (!sink.write(out.data(), out.size())) return false;
      }
      return sink.is_writable();
    });
  });
}

}  // namespace bftflow::api
