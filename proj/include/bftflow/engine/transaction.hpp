// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <variant>

#include "bftflow/common/crypto.hpp"
#include "bftflow/engine/model.hpp"

namespace bftflow::engine {

enum class TxKind : std::uint8_t { ModelUpdate = 1, InstanceState = 2 };

/// Full snapshot of one case. Carries no record of which activity ran.
struct InstanceState {
  Digest caseId;
  std::string modelId;
  Marking marking;
  DataMap data;
};

/// The unit ordered by consensus. `id` is the digest of the canonical unsigned
/// body; the submitter signs the id.
class Transaction {
 public:
  Transaction() = default;

  static Transaction modelUpdate(WorkflowModel model, const NodeId& submitter, const KeyPair& key);
  static Transaction instanceState(InstanceState state, const NodeId& submitter, const KeyPair& key);

  TxKind kind() const { return kind_; }
  const Digest& id() const { return id_; }
  const NodeId& submitter() const { return submitter_; }
  const Signature& signature() const { return signature_; }

  const WorkflowModel& model() const { return std::get<WorkflowModel>(payload_); }
  const InstanceState& state() const { return std::get<InstanceState>(payload_); }
  bool isModelUpdate() const { return kind_ == TxKind::ModelUpdate; }
  bool isInstanceState() const { return kind_ == TxKind::InstanceState; }

  bool verifySignature(const Keyring& keys) const;

  void encode(codec::Writer& w) const;
  static Transaction decode(codec::Reader& r);
  Bytes serialize() const;
  static Transaction deserialize(ByteView bytes);

  bool operator==(const Transaction& o) const { return id_ == o.id_ && signature_ == o.signature_; }

 private:
  void encodeBody(codec::Writer& w) const;
  void finish(const KeyPair* key);

  TxKind kind_ = TxKind::InstanceState;
  std::variant<WorkflowModel, InstanceState> payload_;
  NodeId submitter_;
  Digest id_;
  Signature signature_;
};

}  // namespace bftflow::engine
