// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "bftflow/chain/block.hpp"
#include "bftflow/engine/transaction.hpp"

namespace bftflow::engine {

enum class ErrorCode {
  UnknownModel,
  MalformedModel,
  TypeMismatch,
  UnknownWorkItem,
  WorkItemStale,
  UnregisteredFunction,
  FunctionFailed,
};

const char* toString(ErrorCode c);

class EngineError : public std::runtime_error {
 public:
  EngineError(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

enum class RejectCode : std::uint8_t {
  None = 0,
  UnknownModel,
  DuplicateModel,
  MalformedModel,
  ModelMismatch,
  BadMarking,
  BadData,
  NotReachable,
  DataChangeViolation,
  ConstraintViolation,
  BadSignature,
  DuplicateTransaction,
};

const char* toString(RejectCode c);

struct Validation {
  bool accepted = true;
  RejectCode code = RejectCode::None;
  std::string reason;

  static Validation ok() { return {}; }
  static Validation reject(RejectCode code, std::string reason) { return {false, code, std::move(reason)}; }
};

enum class CaseStatus : std::uint8_t { Running = 0, Finished = 1, Deadlocked = 2 };
const char* toString(CaseStatus s);

struct CaseState {
  Digest caseId;
  std::string modelId;
  Marking marking;
  DataMap data;
  CaseStatus status = CaseStatus::Running;
  /// Number of InstanceState transactions applied for this case.
  std::uint64_t version = 0;
  Digest lastTx;

  bool operator==(const CaseState&) const = default;
};

enum class WorkItemStatus : std::uint8_t { Enabled = 0, Completed = 1, Withdrawn = 2 };
const char* toString(WorkItemStatus s);

struct WorkItem {
  std::string id;
  Digest caseId;
  std::string transition;
  DataMap inputValues;
  WorkItemStatus status = WorkItemStatus::Enabled;
  DataMap outputValues;
  /// Set while a completion transaction awaits inclusion in a block.
  std::optional<Digest> pendingTx;
  std::uint64_t enabledAtBlock = 0;

  bool locked() const { return pendingTx.has_value(); }
};

/// What a block (or a local action) changed; the node runtime turns these into
/// worklist events and submits `autoSubmissions`.
struct EngineEffects {
  std::vector<std::string> modelsInstalled;
  std::vector<Digest> casesLaunched;
  std::vector<Digest> casesUpdated;
  std::vector<Digest> casesFinished;
  std::vector<Digest> casesDeadlocked;
  std::vector<std::string> itemsAdded;
  std::vector<std::string> itemsWithdrawn;
  std::vector<std::string> itemsCompleted;
  std::vector<Transaction> autoSubmissions;
  std::vector<std::string> errors;

  void merge(EngineEffects&& other);
};

using HostFunction = std::function<DataMap(const DataMap&)>;

/// Host functions available to automated transitions. Functions must be pure:
/// every node calling one with the same inputs must get the same outputs.
class HostRegistry {
 public:
  void add(const std::string& name, HostFunction fn) { functions_[name] = std::move(fn); }
  bool contains(const std::string& name) const { return functions_.count(name) != 0; }
  DataMap call(const std::string& name, const DataMap& inputs) const;

 private:
  std::map<std::string, HostFunction> functions_;
};

/// Generic Petri-net workflow engine. Case state is copied from committed
/// InstanceState transactions; the engine never derives state on its own.
class Engine {
 public:
  Engine(NodeId self, std::shared_ptr<const KeyPair> key, std::shared_ptr<const HostRegistry> registry = {});

  const NodeId& self() const { return self_; }

  /// `pendingTx`, when given, is the most recent queued transaction relevant
  /// to `tx`; an InstanceState for the same case replaces the committed state
  /// as the base, a ModelUpdate supplies a not-yet-committed model.
  Validation validateTransaction(const Transaction& tx, const Transaction* pendingTx = nullptr) const;

  /// Blocks must arrive in number order, starting at 1.
  EngineEffects applyBlock(const chain::Block& block);

  /// Rebuilds from a verified chain. External calls are deferred until the
  /// whole chain is applied and only run for items still enabled at the end.
  EngineEffects materialize(std::uint64_t head, const std::function<const chain::Block&(std::uint64_t)>& blockAt);

  Transaction installModel(WorkflowModel model) const;
  Transaction launchCase(const std::string& modelId, DataMap initialData);
  Transaction completeWorkItem(const std::string& workItemId, const DataMap& outputValues);
  /// Consensus rejected a completion: unlock the item and re-offer it if the
  /// transition is still enabled.
  EngineEffects submissionRejected(const Digest& txId);

  DataMap externalCall(const std::string& functionName, const DataMap& inputs) const;

  std::uint64_t lastAppliedBlock() const { return lastApplied_; }
  const std::map<std::string, WorkflowModel>& models() const { return models_; }
  const std::map<Digest, CaseState>& cases() const { return cases_; }
  const CaseState* findCase(const Digest& caseId) const;
  const WorkItem* findWorkItem(const std::string& id) const;
  /// Enabled items on this node, ordered by id.
  std::vector<WorkItem> worklist() const;
  const std::map<std::string, WorkItem>& allWorkItems() const { return items_; }

  /// Canonical encoding of models, cases and open work items; equal across
  /// replicas that applied the same blocks.
  Bytes fingerprint() const;

  /// Replaces the source of case-id nonces (default: OS entropy).
  void setNonceSource(std::function<Digest()> source) { nonceSource_ = std::move(source); }

 private:
  void refreshCase(CaseState& cs, EngineEffects& effects);
  void runExternalCall(WorkItem& item, const TransitionDef& t, EngineEffects& effects);
  const WorkflowModel* resolveModel(const std::string& modelId, const Transaction* pendingTx) const;

  NodeId self_;
  std::shared_ptr<const KeyPair> key_;
  std::shared_ptr<const HostRegistry> registry_;
  std::function<Digest()> nonceSource_;
  std::uint64_t launchCounter_ = 0;
  std::uint64_t lastApplied_ = 0;
  bool replaying_ = false;

  std::map<std::string, WorkflowModel> models_;
  std::map<Digest, CaseState> cases_;
  std::map<std::string, WorkItem> items_;
  std::map<std::pair<Digest, std::string>, std::string> open_;
  std::map<Digest, std::string> lockedBy_;
};

CaseStatus classify(const WorkflowModel& model, const Marking& marking);

/// Transitions whose single firing turns `from` into `to`.
std::vector<const TransitionDef*> firingCandidates(const WorkflowModel& model, const Marking& from, const Marking& to);

/// Latest InstanceState per case found by walking the chain from `head` down
/// to block 1.
std::map<Digest, InstanceState> latestStatesBackward(std::uint64_t head,
                                                     const std::function<const chain::Block&(std::uint64_t)>& blockAt);

}  // namespace bftflow::engine
