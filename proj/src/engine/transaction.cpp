// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "bftflow/engine/transaction.hpp"

namespace bftflow::engine {

Transaction Transaction::modelUpdate(WorkflowModel model, const NodeId& submitter, const KeyPair& key) {
  Transaction tx;
  tx.kind_ = TxKind::ModelUpdate;
  tx.payload_ = std::move(model);
  tx.submitter_ = submitter;
  tx.finish(&key);
  return tx;
}

Transaction Transaction::instanceState(InstanceState state, const NodeId& submitter, const KeyPair& key) {
  Transaction tx;
  tx.kind_ = TxKind::InstanceState;
  tx.payload_ = std::move(state);
  tx.submitter_ = submitter;
  tx.finish(&key);
  return tx;
}

void Transaction::encodeBody(codec::Writer& w) const {
  w.u8(static_cast<std::uint8_t>(kind_));
  w.str(submitter_);
  if (kind_ == TxKind::ModelUpdate) {
    engine::encode(w, model());
  } else {
    const auto& s = state();
    w.raw(s.caseId.bytes).str(s.modelId);
    engine::encode(w, s.marking);
    engine::encode(w, s.data);
  }
}

void Transaction::finish(const KeyPair* key) {
  codec::Writer w;
  encodeBody(w);
  id_ = sha256(w.bytes());
  if (key != nullptr) signature_ = key->sign(id_.bytes);
}

bool Transaction::verifySignature(const Keyring& keys) const { return keys.verify(submitter_, id_.bytes, signature_); }

void Transaction::encode(codec::Writer& w) const {
  encodeBody(w);
  w.raw(signature_.bytes);
}

Transaction Transaction::decode(codec::Reader& r) {
  Transaction tx;
  auto kind = r.u8();
  if (kind != static_cast<std::uint8_t>(TxKind::ModelUpdate) && kind != static_cast<std::uint8_t>(TxKind::InstanceState)) {
    throw codec::DecodeError("unknown transaction kind");
  }
  tx.kind_ = static_cast<TxKind>(kind);
  tx.submitter_ = r.str();
  if (tx.kind_ == TxKind::ModelUpdate) {
    tx.payload_ = decodeModel(r);
  } else {
    InstanceState s;
    s.caseId.bytes = r.array<Digest::kSize>();
    s.modelId = r.str();
    s.marking = decodeMarking(r);
    s.data = decodeDataMap(r);
    tx.payload_ = std::move(s);
  }
  tx.signature_.bytes = r.array<Signature::kSize>();
  tx.finish(nullptr);
  return tx;
}

Bytes Transaction::serialize() const {
  codec::Writer w;
  encode(w);
  return std::move(w).bytes();
}

Transaction Transaction::deserialize(ByteView bytes) {
  codec::Reader r(bytes);
  auto tx = decode(r);
  r.expectDone();
  return tx;
}

}  // namespace bftflow::engine
