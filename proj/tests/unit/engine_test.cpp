// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "bftflow/engine/json.hpp"
#include "support/fixtures.hpp"
#include "support/petri_oracle.hpp"

using namespace bftflow;
using namespace bftflow::engine;
using fixtures::keyFor;

namespace {

class EngineTest : public ::testing::Test {
 protected:
  EngineTest() : engine_("n1", keyFor("n1")) {}

  chain::Block nextBlock(std::vector<Transaction> txs) {
    auto b = chain::Block::make(head_.number + 1, head_.hash, std::move(txs), 0);
    head_ = b;
    return b;
  }

  EngineEffects apply(std::vector<Transaction> txs) { return engine_.applyBlock(nextBlock(std::move(txs))); }

  Transaction stateTx(const Digest& caseId, const std::string& model, Marking m, DataMap d = {}) {
    return Transaction::instanceState({caseId, model, std::move(m), std::move(d)}, "n1", *keyFor("n1"));
  }

  Engine engine_;
  chain::Block head_ = chain::Block::genesis();
};

TEST_F(EngineTest, EnabledTransitionsFollowPlainNetRule) {
  auto seq = fixtures::sequenceNet("seq", "n1", "n2", "n3");
  auto names = [](const std::vector<const TransitionDef*>& ts) {
    std::set<std::string> out;
    for (auto* t : ts) out.insert(t->name);
    return out;
  };
  EXPECT_EQ(names(enabledTransitions({{"p0", 1}}, seq)), (std::set<std::string>{"A"}));
  EXPECT_TRUE(enabledTransitions({}, seq).empty());

  auto split = fixtures::andSplitNet("split", "n1");
  Marking afterSplit{{"p1", 1}, {"p2", 1}};
  EXPECT_EQ(names(enabledTransitions(afterSplit, split)), oracle::enabledNames(split, afterSplit));
  EXPECT_EQ(names(enabledTransitions(afterSplit, split)), (std::set<std::string>{"L", "R"}));
}

TEST_F(EngineTest, ValidatesSingleFiringAgainstCommittedState) {
  auto model = fixtures::sequenceNet("seq", "n1", "n2", "n3");
  apply({engine_.installModel(model)});
  auto launch = engine_.launchCase("seq", {});
  ASSERT_TRUE(engine_.validateTransaction(launch).accepted);
  apply({launch});
  const auto& caseId = launch.state().caseId;

  // The oracle's only successor of {p0:1} is {p1:1}.
  auto successors = oracle::singleFiringSuccessors(model, {{"p0", 1}});
  ASSERT_EQ(successors.size(), 1u);
  EXPECT_EQ(successors.begin()->first, (oracle::Tokens{{"p1", 1}}));

  EXPECT_TRUE(engine_.validateTransaction(stateTx(caseId, "seq", {{"p1", 1}}, {{"amount", Value{std::int64_t{10}}}})).accepted);
  auto twoSteps = engine_.validateTransaction(stateTx(caseId, "seq", {{"p2", 1}}));
  EXPECT_FALSE(twoSteps.accepted);
  EXPECT_EQ(twoSteps.code, RejectCode::NotReachable);

  auto overLimit = engine_.validateTransaction(stateTx(caseId, "seq", {{"p1", 1}}, {{"amount", Value{std::int64_t{5000}}}}));
  EXPECT_FALSE(overLimit.accepted);
  EXPECT_EQ(overLimit.code, RejectCode::ConstraintViolation);
  EXPECT_FALSE(oracle::constraintsHold(model, {{"amount", Value{std::int64_t{5000}}}}));
}

TEST_F(EngineTest, ValidatesAgainstPendingTransactionForSameCase) {
  apply({engine_.installModel(fixtures::sequenceNet("seq", "n1", "n2", "n3"))});
  auto launch = engine_.launchCase("seq", {});
  apply({launch});
  const auto& caseId = launch.state().caseId;
  auto fireA = stateTx(caseId, "seq", {{"p1", 1}});
  auto fireB = stateTx(caseId, "seq", {{"p2", 1}});
  EXPECT_FALSE(engine_.validateTransaction(fireB).accepted);
  EXPECT_TRUE(engine_.validateTransaction(fireB, &fireA).accepted);
  // A pending tx for another case leaves the committed state as the base.
  auto other = stateTx(sha256(asBytes("other")), "seq", {{"p0", 1}});
  EXPECT_FALSE(engine_.validateTransaction(fireB, &other).accepted);
  EXPECT_TRUE(engine_.validateTransaction(fireA, &other).accepted);
}

TEST_F(EngineTest, RejectsUnknownModelAndDuplicateModel) {
  auto orphan = stateTx(sha256(asBytes("c")), "nope", {{"p0", 1}});
  auto v = engine_.validateTransaction(orphan);
  EXPECT_FALSE(v.accepted);
  EXPECT_EQ(v.code, RejectCode::UnknownModel);

  auto install = engine_.installModel(fixtures::sequenceNet("seq", "n1", "n2", "n3"));
  EXPECT_TRUE(engine_.validateTransaction(install).accepted);
  // Building a second install locally succeeds; consensus validation rejects it.
  auto again = engine_.installModel(fixtures::sequenceNet("seq", "n1", "n2", "n3"));
  EXPECT_FALSE(engine_.validateTransaction(again, &install).accepted);
  apply({install});
  EXPECT_EQ(engine_.validateTransaction(again).code, RejectCode::DuplicateModel);
}

TEST_F(EngineTest, LaunchAgainstPendingModelUpdate) {
  auto install = engine_.installModel(fixtures::sequenceNet("seq", "n1", "n2", "n3"));
  auto launch = stateTx(sha256(asBytes("case")), "seq", {{"p0", 1}});
  EXPECT_TRUE(engine_.validateTransaction(launch, &install).accepted);
  EXPECT_FALSE(engine_.validateTransaction(launch).accepted);
}

TEST_F(EngineTest, MalformedModelIsRefusedLocally) {
  auto m = fixtures::sequenceNet("seq", "n1", "n2", "n3");
  m.transitions[1].outputPlaces = {{"nowhere", 1}};
  try {
    engine_.installModel(m);
    FAIL() << "expected MALFORMED_MODEL";
  } catch (const EngineError& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedModel);
    EXPECT_NE(std::string(e.what()).find("nowhere"), std::string::npos);
  }
}

TEST_F(EngineTest, DataMayOnlyChangeThroughFiredOutputs) {
  apply({engine_.installModel(fixtures::sequenceNet("seq", "n1", "n2", "n3"))});
  auto launch = engine_.launchCase("seq", {{"note", Value{std::string("x")}}});
  apply({launch});
  const auto& caseId = launch.state().caseId;
  // A's only output is `amount`; touching `note` is a violation.
  auto bad = stateTx(caseId, "seq", {{"p1", 1}}, {{"note", Value{std::string("y")}}});
  EXPECT_EQ(engine_.validateTransaction(bad).code, RejectCode::DataChangeViolation);
  auto good = stateTx(caseId, "seq", {{"p1", 1}}, {{"note", Value{std::string("x")}}, {"amount", Value{std::int64_t{3}}}});
  EXPECT_TRUE(engine_.validateTransaction(good).accepted);
}

TEST_F(EngineTest, ApplyBlockCreatesLocalWorkItemsOnly) {
  apply({engine_.installModel(fixtures::sequenceNet("seq", "n1", "n2", "n3"))});
  auto launch = engine_.launchCase("seq", {});
  auto effects = apply({launch});
  ASSERT_EQ(effects.itemsAdded.size(), 1u);
  auto list = engine_.worklist();
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0].transition, "A");

  // Fire A: B belongs to n2, so n1's worklist empties.
  auto tx = engine_.completeWorkItem(list[0].id, {{"amount", Value{std::int64_t{42}}}});
  EXPECT_EQ(tx.state().marking, (Marking{{"p1", 1}}));
  effects = apply({tx});
  EXPECT_EQ(effects.itemsCompleted, std::vector<std::string>{list[0].id});
  EXPECT_TRUE(engine_.worklist().empty());
  EXPECT_EQ(engine_.findCase(launch.state().caseId)->data.at("amount"), Value{std::int64_t{42}});
}

TEST_F(EngineTest, CompletionCopiesPriorData) {
  apply({engine_.installModel(fixtures::sequenceNet("seq", "n1", "n1", "n1"))});
  auto launch = engine_.launchCase("seq", {{"note", Value{std::string("keep")}}});
  apply({launch});
  auto item = engine_.worklist().at(0);
  auto tx = engine_.completeWorkItem(item.id, {{"amount", Value{std::int64_t{42}}}});
  apply({tx});
  const auto& data = engine_.findCase(launch.state().caseId)->data;
  EXPECT_EQ(data.at("amount"), Value{std::int64_t{42}});
  EXPECT_EQ(data.at("note"), Value{std::string("keep")});
}

TEST_F(EngineTest, FinishedCaseWithdrawsItems) {
  apply({engine_.installModel(fixtures::sequenceNet("seq", "n1", "n1", "n1"))});
  auto launch = engine_.launchCase("seq", {});
  apply({launch});
  const auto& caseId = launch.state().caseId;
  EXPECT_EQ(engine_.worklist().size(), 1u);
  // A foreign transaction moves the case straight through; the open item goes.
  apply({stateTx(caseId, "seq", {{"p1", 1}})});
  apply({stateTx(caseId, "seq", {{"p2", 1}})});
  auto effects = apply({stateTx(caseId, "seq", {{"p3", 1}})});
  EXPECT_EQ(engine_.findCase(caseId)->status, CaseStatus::Finished);
  EXPECT_EQ(effects.casesFinished, std::vector<Digest>{caseId});
  EXPECT_TRUE(engine_.worklist().empty());
}

TEST_F(EngineTest, DeadlockedWhenTokensStrandedOutsideEndPlaces) {
  auto m = fixtures::andSplitNet("split", "n1");
  m.places.push_back("sink");
  apply({engine_.installModel(m)});
  auto launch = engine_.launchCase("split", {});
  apply({launch});
  apply({stateTx(launch.state().caseId, "split", {{"p1", 1}, {"p2", 1}})});
  EXPECT_EQ(classify(m, {{"sink", 1}}), CaseStatus::Deadlocked);
  EXPECT_EQ(classify(m, {{"p5", 1}}), CaseStatus::Finished);
  EXPECT_EQ(classify(m, {{"p3", 1}}), CaseStatus::Deadlocked);
  EXPECT_EQ(classify(m, {{"p1", 1}}), CaseStatus::Running);
}

TEST_F(EngineTest, StaleAndMistypedCompletions) {
  apply({engine_.installModel(fixtures::sequenceNet("seq", "n1", "n1", "n1"))});
  auto launch = engine_.launchCase("seq", {});
  apply({launch});
  auto item = engine_.worklist().at(0);

  try {
    engine_.completeWorkItem(item.id, {{"amount", Value{std::string("lots")}}});
    FAIL();
  } catch (const EngineError& e) {
    EXPECT_EQ(e.code(), ErrorCode::TypeMismatch);
  }
  try {
    engine_.completeWorkItem(item.id, {{"note", Value{std::string("not an output of A")}}});
    FAIL();
  } catch (const EngineError& e) {
    EXPECT_EQ(e.code(), ErrorCode::TypeMismatch);
  }

  apply({stateTx(launch.state().caseId, "seq", {{"p1", 1}})});
  try {
    engine_.completeWorkItem(item.id, {});
    FAIL();
  } catch (const EngineError& e) {
    EXPECT_EQ(e.code(), ErrorCode::WorkItemStale);
  }
}

TEST_F(EngineTest, RejectedSubmissionIsReoffered) {
  apply({engine_.installModel(fixtures::andSplitNet("split", "n1"))});
  auto launch = engine_.launchCase("split", {});
  apply({launch});
  apply({stateTx(launch.state().caseId, "split", {{"p1", 1}, {"p2", 1}})});
  auto items = engine_.worklist();
  ASSERT_EQ(items.size(), 2u);
  auto tx = engine_.completeWorkItem(items[0].id, {});
  EXPECT_TRUE(engine_.findWorkItem(items[0].id)->locked());
  engine_.submissionRejected(tx.id());
  EXPECT_FALSE(engine_.findWorkItem(items[0].id)->locked());
  EXPECT_EQ(engine_.findWorkItem(items[0].id)->status, WorkItemStatus::Enabled);
}

TEST_F(EngineTest, LaunchCaseErrorsAndDistinctIds) {
  EXPECT_THROW(engine_.launchCase("missing", {}), EngineError);
  apply({engine_.installModel(fixtures::sequenceNet("seq", "n1", "n2", "n3"))});
  auto a = engine_.launchCase("seq", {});
  auto b = engine_.launchCase("seq", {});
  EXPECT_NE(a.state().caseId, b.state().caseId);
  EXPECT_EQ(a.state().marking, (Marking{{"p0", 1}}));
  EXPECT_TRUE(engine_.validateTransaction(a).accepted);
  EXPECT_TRUE(engine_.validateTransaction(b, &a).accepted);

  auto violating = engine_.launchCase("seq", {{"amount", Value{std::int64_t{99999}}}});
  EXPECT_EQ(engine_.validateTransaction(violating).code, RejectCode::ConstraintViolation);
  try {
    engine_.launchCase("seq", {{"amount", Value{true}}});
    FAIL();
  } catch (const EngineError& e) {
    EXPECT_EQ(e.code(), ErrorCode::TypeMismatch);
  }
}

TEST(ExternalCalls, RegistryInvocationAndFailures) {
  auto registry = std::make_shared<HostRegistry>();
  registry->add("uppercase", [](const DataMap& in) {
    auto s = std::get<std::string>(in.at("s"));
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return DataMap{{"s", Value{s}}};
  });
  Engine e("n1", keyFor("n1"), registry);
  EXPECT_EQ(e.externalCall("uppercase", {{"s", Value{std::string("abc")}}}).at("s"), Value{std::string("ABC")});
  try {
    e.externalCall("missing", {});
    FAIL();
  } catch (const EngineError& err) {
    EXPECT_EQ(err.code(), ErrorCode::UnregisteredFunction);
  }
}

WorkflowModel automatedModel(const std::string& fn) {
  WorkflowModel m;
  m.modelId = "auto";
  m.places = {"p0", "p1", "p2"};
  m.initialMarking = {{"p0", 1}};
  m.endPlaces = {"p2"};
  m.variables = {{"s", ValueType::Text}};
  m.transitions = {fixtures::transition("Shout", {{"p0", 1}}, {{"p1", 1}}, "n1", {"s"}, {"s"}),
                   fixtures::transition("Done", {{"p1", 1}}, {{"p2", 1}}, "n2")};
  m.transitions[0].externalCall = fn;
  return m;
}

TEST(ExternalCalls, AutomatedTransitionSubmitsOnEnablement) {
  auto registry = std::make_shared<HostRegistry>();
  registry->add("uppercase", [](const DataMap& in) {
    auto s = std::get<std::string>(in.at("s"));
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return DataMap{{"s", Value{s}}};
  });
  // Two nodes with the same registry and block produce identical outputs.
  Engine a("n1", keyFor("n1"), registry);
  Engine b("n1", keyFor("n1"), registry);
  auto install = a.installModel(automatedModel("uppercase"));
  InstanceState s{sha256(asBytes("case")), "auto", {{"p0", 1}}, {{"s", Value{std::string("abc")}}}};
  auto launchTx = Transaction::instanceState(s, "n1", *keyFor("n1"));
  auto b1 = chain::Block::make(1, chain::Block::genesis().hash, {install, launchTx}, 0);
  auto ea = a.applyBlock(b1);
  auto eb = b.applyBlock(b1);
  ASSERT_EQ(ea.autoSubmissions.size(), 1u);
  ASSERT_EQ(eb.autoSubmissions.size(), 1u);
  EXPECT_EQ(ea.autoSubmissions[0].state().data.at("s"), Value{std::string("ABC")});
  EXPECT_EQ(ea.autoSubmissions[0].id(), eb.autoSubmissions[0].id());
  EXPECT_TRUE(a.validateTransaction(ea.autoSubmissions[0]).accepted);
}

TEST(ExternalCalls, UnregisteredFunctionLeavesItemEnabled) {
  Engine e("n1", keyFor("n1"), std::make_shared<HostRegistry>());
  auto install = e.installModel(automatedModel("nonexistent"));
  InstanceState s{sha256(asBytes("case")), "auto", {{"p0", 1}}, {}};
  auto b1 = chain::Block::make(1, chain::Block::genesis().hash, {install, Transaction::instanceState(s, "n1", *keyFor("n1"))}, 0);
  auto effects = e.applyBlock(b1);
  EXPECT_TRUE(effects.autoSubmissions.empty());
  EXPECT_EQ(effects.errors.size(), 1u);
  ASSERT_EQ(e.worklist().size(), 1u);
  EXPECT_EQ(e.worklist()[0].status, WorkItemStatus::Enabled);
  EXPECT_FALSE(e.worklist()[0].locked());
}

// Forward application and backward reading of the same chain agree, and a
// replica rebuilt by materialization has the same fingerprint.
TEST(EngineProperties, StateCopyFidelityAndReplicaDeterminism) {
  std::mt19937_64 rng(11);
  Engine writer("n1", keyFor("n1"));
  std::vector<chain::Block> chainBlocks{chain::Block::genesis()};
  auto append = [&](std::vector<Transaction> txs) {
    auto b = chain::Block::make(chainBlocks.size(), chainBlocks.back().hash, std::move(txs), 0);
    writer.applyBlock(b);
    chainBlocks.push_back(b);
  };
  append({writer.installModel(fixtures::sequenceNet("seq", "n1", "n1", "n1")),
          writer.installModel(fixtures::andSplitNet("split", "n1"))});
  for (int step = 0; step < 60; ++step) {
    auto items = writer.worklist();
    std::vector<Transaction> txs;
    if (items.empty() || rng() % 4 == 0) {
      txs.push_back(writer.launchCase(rng() % 2 ? "seq" : "split", {}));
    } else {
      const auto& item = items[rng() % items.size()];
      const auto* model = &writer.models().at(writer.findCase(item.caseId)->modelId);
      DataMap out;
      for (const auto& v : model->findTransition(item.transition)->outputVariables) {
        if (*model->variableType(v) == ValueType::Integer) out[v] = Value{static_cast<std::int64_t>(rng() % 900)};
      }
      txs.push_back(writer.completeWorkItem(item.id, out));
      ASSERT_TRUE(writer.validateTransaction(txs.back()).accepted);
    }
    append(std::move(txs));
  }

  auto blockAt = [&](std::uint64_t n) -> const chain::Block& { return chainBlocks.at(n); };
  auto backward = latestStatesBackward(chainBlocks.size() - 1, blockAt);
  ASSERT_EQ(backward.size(), writer.cases().size());
  for (const auto& [id, cs] : writer.cases()) {
    EXPECT_EQ(backward.at(id).marking, cs.marking);
    EXPECT_EQ(backward.at(id).data, cs.data);
  }

  Engine rebuilt("n1", keyFor("n1"));
  rebuilt.materialize(chainBlocks.size() - 1, blockAt);
  EXPECT_EQ(rebuilt.fingerprint(), writer.fingerprint());

  // A node with another identity sees the same cases but none of n1's items.
  Engine other("n2", keyFor("n2"));
  other.materialize(chainBlocks.size() - 1, blockAt);
  EXPECT_EQ(other.cases(), writer.cases());
  EXPECT_TRUE(other.worklist().empty());
}

TEST(ModelDocument, JsonRoundTripAndErrors) {
  auto m = fixtures::sequenceNet("seq", "n1", "n2", "n3");
  m.transitions[0].externalCall = "fn";
  auto back = modelFromJson(modelToJson(m));
  codec::Writer a, b;
  encode(a, m);
  encode(b, back);
  EXPECT_EQ(a.bytes(), b.bytes());

  auto doc = modelToJson(m);
  doc["constraints"][0]["predicate"] = "amount <=";
  EXPECT_THROW(modelFromJson(doc), ModelFormatError);
  doc = modelToJson(m);
  doc.erase("places");
  EXPECT_THROW(modelFromJson(doc), ModelFormatError);
}

TEST(Constraints, ParseAndEvaluate) {
  auto c = parseConstraint("mix", "amount >= 10 && amount < 20.5 && note != \"x\" && approved = true");
  ASSERT_EQ(c.atoms.size(), 4u);
  DataMap d{{"amount", Value{std::int64_t{10}}}, {"note", Value{std::string("y")}}, {"approved", Value{true}}};
  EXPECT_TRUE(evaluate(c, d));
  d["amount"] = Value{std::int64_t{21}};
  EXPECT_FALSE(evaluate(c, d));
  d.erase("note");
  EXPECT_TRUE(evaluate(c, d));  // unset variable: vacuously satisfied
  EXPECT_THROW(parseConstraint("", "1 < 2"), ConstraintSyntaxError);
  EXPECT_THROW(parseConstraint("", "a <"), ConstraintSyntaxError);
  EXPECT_EQ(parseConstraint("", "a<=-3").atoms[0].rhs.literal, Value{std::int64_t{-3}});
}

}  // namespace
