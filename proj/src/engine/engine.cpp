// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/engine/engine.hpp"

#include <sodium.h>

#include <algorithm>

#include "bftflow/common/log.hpp"

namespace bftflow::engine {

const char* toString(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownModel: return "UNKNOWN_MODEL";
    case ErrorCode::MalformedModel: return "MALFORMED_MODEL";
    case ErrorCode::TypeMismatch: return "TYPE_MISMATCH";
    case ErrorCode::UnknownWorkItem: return "UNKNOWN_WORK_ITEM";
    case ErrorCode::WorkItemStale: return "WORK_ITEM_STALE";
    case ErrorCode::UnregisteredFunction: return "UNREGISTERED_FUNCTION";
    case ErrorCode::FunctionFailed: return "FUNCTION_FAILED";
  }
  return "?";
}

const char* toString(RejectCode c) {
  switch (c) {
    case RejectCode::None: return "NONE";
    case RejectCode::UnknownModel: return "UNKNOWN_MODEL";
    case RejectCode::DuplicateModel: return "DUPLICATE_MODEL";
    case RejectCode::MalformedModel: return "MALFORMED_MODEL";
    case RejectCode::ModelMismatch: return "MODEL_MISMATCH";
    case RejectCode::BadMarking: return "BAD_MARKING";
    case RejectCode::BadData: return "BAD_DATA";
    case RejectCode::NotReachable: return "NOT_REACHABLE";
    case RejectCode::DataChangeViolation: return "DATA_CHANGE_VIOLATION";
    case RejectCode::ConstraintViolation: return "CONSTRAINT_VIOLATION";
    case RejectCode::BadSignature: return "BAD_SIGNATURE";
    case RejectCode::DuplicateTransaction: return "DUPLICATE_TRANSACTION";
  }
  return "?";
}

const char* toString(CaseStatus s) {
  switch (s) {
    case CaseStatus::Running: return "RUNNING";
    case CaseStatus::Finished: return "FINISHED";
    case CaseStatus::Deadlocked: return "DEADLOCKED";
  }
  return "?";
}

const char* toString(WorkItemStatus s) {
  switch (s) {
    case WorkItemStatus::Enabled: return "ENABLED";
    case WorkItemStatus::Completed: return "COMPLETED";
    case WorkItemStatus::Withdrawn: return "WITHDRAWN";
  }
  return "?";
}

void EngineEffects::merge(EngineEffects&& o) {
  auto append = [](auto& dst, auto& src) { dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end())); };
  append(modelsInstalled, o.modelsInstalled);
  append(casesLaunched, o.casesLaunched);
  append(casesUpdated, o.casesUpdated);
  append(casesFinished, o.casesFinished);
  append(casesDeadlocked, o.casesDeadlocked);
  append(itemsAdded, o.itemsAdded);
  append(itemsWithdrawn, o.itemsWithdrawn);
  append(itemsCompleted, o.itemsCompleted);
  append(autoSubmissions, o.autoSubmissions);
  append(errors, o.errors);
}

DataMap HostRegistry::call(const std::string& name, const DataMap& inputs) const {
  auto it = functions_.find(name);
  if (it == functions_.end()) throw EngineError(ErrorCode::UnregisteredFunction, "function '" + name + "' is not registered");
  return it->second(inputs);
}

CaseStatus classify(const WorkflowModel& model, const Marking& marking) {
  if (!enabledTransitions(marking, model).empty()) return CaseStatus::Running;
  if (marking.empty()) return CaseStatus::Deadlocked;
  for (const auto& [place, tokens] : marking) {
    if (std::find(model.endPlaces.begin(), model.endPlaces.end(), place) == model.endPlaces.end()) {
      return CaseStatus::Deadlocked;
    }
  }
  return CaseStatus::Finished;
}

std::vector<const TransitionDef*> firingCandidates(const WorkflowModel& model, const Marking& from, const Marking& to) {
  std::vector<const TransitionDef*> out;
  for (const auto* t : enabledTransitions(from, model)) {
    if (fire(from, t->inputPlaces, t->outputPlaces) == to) out.push_back(t);
  }
  return out;
}

namespace {

/// Every variable outside `outputs` must be carried over verbatim.
bool onlyOutputsChanged(const DataMap& before, const DataMap& after, const std::vector<std::string>& outputs) {
  auto isOutput = [&outputs](const std::string& k) { return std::find(outputs.begin(), outputs.end(), k) != outputs.end(); };
  for (const auto& [k, v] : before) {
    if (isOutput(k)) continue;
    auto it = after.find(k);
    if (it == after.end() || it->second != v) return false;
  }
  for (const auto& [k, v] : after) {
    if (!isOutput(k) && !before.count(k)) return false;
  }
  return true;
}

std::string itemId(const Digest& caseId, const std::string& transition, std::uint64_t version) {
  return caseId.hex().substr(0, 16) + "." + transition + "." + std::to_string(version);
}

}  // namespace

Engine::Engine(NodeId self, std::shared_ptr<const KeyPair> key, std::shared_ptr<const HostRegistry> registry)
    : self_(std::move(self)), key_(std::move(key)), registry_(std::move(registry)) {
  nonceSource_ = [] {
    Digest d;
    randombytes_buf(d.bytes.data(), d.bytes.size());
    return d;
  };
}

const WorkflowModel* Engine::resolveModel(const std::string& modelId, const Transaction* pendingTx) const {
  if (auto it = models_.find(modelId); it != models_.end()) return &it->second;
  if (pendingTx != nullptr && pendingTx->isModelUpdate() && pendingTx->model().modelId == modelId) {
    return &pendingTx->model();
  }
  return nullptr;
}

Validation Engine::validateTransaction(const Transaction& tx, const Transaction* pendingTx) const {
  if (tx.isModelUpdate()) {
    const auto& m = tx.model();
    if (auto e = checkModel(m)) return Validation::reject(RejectCode::MalformedModel, *e);
    if (resolveModel(m.modelId, pendingTx) != nullptr) {
      return Validation::reject(RejectCode::DuplicateModel, "model '" + m.modelId + "' already installed");
    }
    return Validation::ok();
  }

  const auto& s = tx.state();
  const WorkflowModel* model = resolveModel(s.modelId, pendingTx);
  if (model == nullptr) return Validation::reject(RejectCode::UnknownModel, "model '" + s.modelId + "' is not installed");
  if (auto e = checkMarking(*model, s.marking)) return Validation::reject(RejectCode::BadMarking, *e);
  if (auto e = checkData(*model, s.data)) return Validation::reject(RejectCode::BadData, *e);

  const Marking* baseMarking = nullptr;
  const DataMap* baseData = nullptr;
  const std::string* baseModel = nullptr;
  if (pendingTx != nullptr && pendingTx->isInstanceState() && pendingTx->state().caseId == s.caseId) {
    baseMarking = &pendingTx->state().marking;
    baseData = &pendingTx->state().data;
    baseModel = &pendingTx->state().modelId;
  } else if (auto it = cases_.find(s.caseId); it != cases_.end()) {
    baseMarking = &it->second.marking;
    baseData = &it->second.data;
    baseModel = &it->second.modelId;
  }

  if (baseMarking == nullptr) {
    if (s.marking != model->initialMarking) {
      return Validation::reject(RejectCode::NotReachable, "launch marking differs from the initial marking");
    }
  } else {
    if (*baseModel != s.modelId) return Validation::reject(RejectCode::ModelMismatch, "case belongs to model '" + *baseModel + "'");
    auto candidates = firingCandidates(*model, *baseMarking, s.marking);
    if (candidates.empty()) {
      return Validation::reject(RejectCode::NotReachable,
                                "marking " + toString(s.marking) + " is not one firing away from " + toString(*baseMarking));
    }
    bool dataOk = std::any_of(candidates.begin(), candidates.end(), [&](const TransitionDef* t) {
      return onlyOutputsChanged(*baseData, s.data, t->outputVariables);
    });
    if (!dataOk) return Validation::reject(RejectCode::DataChangeViolation, "data changed outside the fired activity's outputs");
  }

  for (const auto& c : model->constraints) {
    if (!evaluate(c, s.data)) return Validation::reject(RejectCode::ConstraintViolation, "constraint violated: " + c.description);
  }
  return Validation::ok();
}

EngineEffects Engine::applyBlock(const chain::Block& block) {
  if (block.number != lastApplied_ + 1) {
    throw std::logic_error("engine received block " + std::to_string(block.number) + " after " +
                           std::to_string(lastApplied_));
  }
  EngineEffects effects;
  std::vector<Digest> touched;
  for (const auto& tx : block.transactions) {
    if (tx.isModelUpdate()) {
      const auto& m = tx.model();
      if (models_.emplace(m.modelId, m).second) effects.modelsInstalled.push_back(m.modelId);
      continue;
    }
    const auto& s = tx.state();
    auto [it, launched] = cases_.try_emplace(s.caseId);
    auto& cs = it->second;
    cs.caseId = s.caseId;
    cs.modelId = s.modelId;
    cs.marking = s.marking;
    cs.data = s.data;
    cs.version += 1;
    cs.lastTx = tx.id();
    (launched ? effects.casesLaunched : effects.casesUpdated).push_back(s.caseId);
    if (std::find(touched.begin(), touched.end(), s.caseId) == touched.end()) touched.push_back(s.caseId);

    if (auto lk = lockedBy_.find(tx.id()); lk != lockedBy_.end()) {
      auto& item = items_.at(lk->second);
      item.status = WorkItemStatus::Completed;
      item.pendingTx.reset();
      open_.erase({item.caseId, item.transition});
      effects.itemsCompleted.push_back(item.id);
      lockedBy_.erase(lk);
    }
  }
  lastApplied_ = block.number;
  for (const auto& caseId : touched) refreshCase(cases_.at(caseId), effects);
  return effects;
}

void Engine::refreshCase(CaseState& cs, EngineEffects& effects) {
  auto mit = models_.find(cs.modelId);
  if (mit == models_.end()) {
    effects.errors.push_back("case " + cs.caseId.shortHex() + " references missing model " + cs.modelId);
    return;
  }
  const auto& model = mit->second;
  auto enabled = enabledTransitions(cs.marking, model);
  auto isEnabled = [&enabled](const std::string& name) {
    return std::any_of(enabled.begin(), enabled.end(), [&name](const TransitionDef* t) { return t->name == name; });
  };

  for (auto it = open_.lower_bound({cs.caseId, std::string()}); it != open_.end() && it->first.first == cs.caseId;) {
    auto& item = items_.at(it->second);
    if (isEnabled(item.transition)) {
      if (!item.locked()) {
        const auto* t = model.findTransition(item.transition);
        item.inputValues.clear();
        for (const auto& v : t->inputVariables) {
          if (auto d = cs.data.find(v); d != cs.data.end()) item.inputValues.insert(*d);
        }
      }
      ++it;
      continue;
    }
    item.status = WorkItemStatus::Withdrawn;
    if (item.pendingTx) lockedBy_.erase(*item.pendingTx);
    item.pendingTx.reset();
    effects.itemsWithdrawn.push_back(item.id);
    it = open_.erase(it);
  }

  for (const auto* t : enabled) {
    if (t->assignedNode != self_ || open_.count({cs.caseId, t->name})) continue;
    WorkItem item;
    item.id = itemId(cs.caseId, t->name, cs.version);
    item.caseId = cs.caseId;
    item.transition = t->name;
    item.enabledAtBlock = lastApplied_;
    for (const auto& v : t->inputVariables) {
      if (auto d = cs.data.find(v); d != cs.data.end()) item.inputValues.insert(*d);
    }
    open_[{cs.caseId, t->name}] = item.id;
    effects.itemsAdded.push_back(item.id);
    auto& stored = items_[item.id] = std::move(item);
    if (t->externalCall && !replaying_) runExternalCall(stored, *t, effects);
  }

  auto previous = cs.status;
  cs.status = classify(model, cs.marking);
  if (cs.status != previous) {
    if (cs.status == CaseStatus::Finished) effects.casesFinished.push_back(cs.caseId);
    if (cs.status == CaseStatus::Deadlocked) effects.casesDeadlocked.push_back(cs.caseId);
  }
}

void Engine::runExternalCall(WorkItem& item, const TransitionDef& t, EngineEffects& effects) {
  try {
    auto outputs = externalCall(*t.externalCall, item.inputValues);
    DataMap filtered;
    for (const auto& name : t.outputVariables) {
      if (auto it = outputs.find(name); it != outputs.end()) filtered.insert(*it);
    }
    effects.autoSubmissions.push_back(completeWorkItem(item.id, filtered));
  } catch (const std::exception& e) {
    auto msg = "external call '" + *t.externalCall + "' for " + item.id + " failed: " + e.what();
    log().warn("{}", msg);
    effects.errors.push_back(std::move(msg));
  }
}

EngineEffects Engine::materialize(std::uint64_t head, const std::function<const chain::Block&(std::uint64_t)>& blockAt) {
  EngineEffects effects;
  replaying_ = true;
  try {
    for (auto n = lastApplied_ + 1; n <= head; ++n) effects.merge(applyBlock(blockAt(n)));
  } catch (...) {
    replaying_ = false;
    throw;
  }
  replaying_ = false;
  for (auto& [key, id] : open_) {
    auto& item = items_.at(id);
    const auto& model = models_.at(cases_.at(item.caseId).modelId);
    const auto* t = model.findTransition(item.transition);
    if (t->externalCall && !item.locked()) runExternalCall(item, *t, effects);
  }
  return effects;
}

Transaction Engine::installModel(WorkflowModel model) const {
  if (auto e = checkModel(model)) throw EngineError(ErrorCode::MalformedModel, *e);
  return Transaction::modelUpdate(std::move(model), self_, *key_);
}

Transaction Engine::launchCase(const std::string& modelId, DataMap initialData) {
  auto it = models_.find(modelId);
  if (it == models_.end()) throw EngineError(ErrorCode::UnknownModel, "model '" + modelId + "' is not installed");
  if (auto e = checkData(it->second, initialData)) throw EngineError(ErrorCode::TypeMismatch, *e);

  codec::Writer w;
  w.str(self_).str(modelId).u64(++launchCounter_).raw(nonceSource_().bytes);
  InstanceState s{sha256(w.bytes()), modelId, it->second.initialMarking, std::move(initialData)};
  return Transaction::instanceState(std::move(s), self_, *key_);
}

Transaction Engine::completeWorkItem(const std::string& workItemId, const DataMap& outputValues) {
  auto it = items_.find(workItemId);
  if (it == items_.end()) throw EngineError(ErrorCode::UnknownWorkItem, "no work item '" + workItemId + "'");
  auto& item = it->second;
  if (item.status != WorkItemStatus::Enabled) {
    throw EngineError(ErrorCode::WorkItemStale, "work item " + workItemId + " is " + toString(item.status));
  }
  if (item.locked()) throw EngineError(ErrorCode::WorkItemStale, "work item " + workItemId + " already has a pending completion");

  auto& cs = cases_.at(item.caseId);
  const auto& model = models_.at(cs.modelId);
  const auto* t = model.findTransition(item.transition);
  for (const auto& [k, v] : outputValues) {
    if (std::find(t->outputVariables.begin(), t->outputVariables.end(), k) == t->outputVariables.end()) {
      throw EngineError(ErrorCode::TypeMismatch, "'" + k + "' is not an output of " + t->name);
    }
  }
  if (auto e = checkData(model, outputValues)) throw EngineError(ErrorCode::TypeMismatch, *e);
  if (!covers(cs.marking, t->inputPlaces)) {
    throw EngineError(ErrorCode::WorkItemStale, "transition " + t->name + " is no longer enabled");
  }

  InstanceState s{cs.caseId, cs.modelId, fire(cs.marking, t->inputPlaces, t->outputPlaces), cs.data};
  for (const auto& [k, v] : outputValues) s.data[k] = v;
  auto tx = Transaction::instanceState(std::move(s), self_, *key_);
  item.pendingTx = tx.id();
  item.outputValues = outputValues;
  lockedBy_[tx.id()] = item.id;
  return tx;
}

EngineEffects Engine::submissionRejected(const Digest& txId) {
  EngineEffects effects;
  auto it = lockedBy_.find(txId);
  if (it == lockedBy_.end()) return effects;
  auto& item = items_.at(it->second);
  item.pendingTx.reset();
  item.outputValues.clear();
  lockedBy_.erase(it);
  refreshCase(cases_.at(item.caseId), effects);
  return effects;
}

DataMap Engine::externalCall(const std::string& functionName, const DataMap& inputs) const {
  if (!registry_ || !registry_->contains(functionName)) {
    throw EngineError(ErrorCode::UnregisteredFunction, "function '" + functionName + "' is not registered");
  }
  try {
    return registry_->call(functionName, inputs);
  } catch (const EngineError&) {
    throw;
  } catch (const std::exception& e) {
    throw EngineError(ErrorCode::FunctionFailed, e.what());
  }
}

const CaseState* Engine::findCase(const Digest& caseId) const {
  auto it = cases_.find(caseId);
  return it == cases_.end() ? nullptr : &it->second;
}

const WorkItem* Engine::findWorkItem(const std::string& id) const {
  auto it = items_.find(id);
  return it == items_.end() ? nullptr : &it->second;
}

std::vector<WorkItem> Engine::worklist() const {
  std::vector<WorkItem> out;
  for (const auto& [key, id] : open_) out.push_back(items_.at(id));
  std::sort(out.begin(), out.end(), [](const WorkItem& a, const WorkItem& b) { return a.id < b.id; });
  return out;
}

Bytes Engine::fingerprint() const {
  codec::Writer w;
  w.u64(lastApplied_).u32(static_cast<std::uint32_t>(models_.size()));
  for (const auto& [id, m] : models_) encode(w, m);
  w.u32(static_cast<std::uint32_t>(cases_.size()));
  for (const auto& [id, cs] : cases_) {
    w.raw(id.bytes).str(cs.modelId);
    encode(w, cs.marking);
    encode(w, cs.data);
    w.u8(static_cast<std::uint8_t>(cs.status)).u64(cs.version).raw(cs.lastTx.bytes);
  }
  auto items = worklist();
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (const auto& item : items) {
    w.str(item.id).raw(item.caseId.bytes).str(item.transition);
    encode(w, item.inputValues);
  }
  return std::move(w).bytes();
}

std::map<Digest, InstanceState> latestStatesBackward(std::uint64_t head,
                                                     const std::function<const chain::Block&(std::uint64_t)>& blockAt) {
  std::map<Digest, InstanceState> out;
  for (auto n = head; n >= 1; --n) {
    const auto& block = blockAt(n);
    for (auto it = block.transactions.rbegin(); it != block.transactions.rend(); ++it) {
      if (it->isInstanceState()) out.try_emplace(it->state().caseId, it->state());
    }
  }
  return out;
}

}  // namespace bftflow::engine
