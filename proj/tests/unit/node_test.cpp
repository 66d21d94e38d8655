// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "support/chain_fixture.hpp"
#include "support/node_cluster.hpp"

using namespace bftflow;
using namespace bftflow::node;
using nodesim::Cluster;

namespace {

void installSequence(Cluster& c, std::size_t at = 0) {
  auto out = c.await([&](Node::Done d) {
    c.node(at).installModel(fixtures::sequenceNet("seq", "n1", "n2", "n3"), d);
  });
  ASSERT_TRUE(out);
  ASSERT_EQ(out->status, SubmitStatus::Committed) << out->reason;
}

/// Every node applied the same chain up to the same head.
void expectSameChain(Cluster& c, std::initializer_list<std::size_t> which) {
  std::optional<Bytes> ref;
  for (auto i : which) {
    auto bytes = c.node(i).store().exportChain();
    if (!ref) {
      ref = bytes;
    } else {
      EXPECT_EQ(bytes, *ref) << "node " << i;
    }
  }
}

std::size_t countBlocks(const Node& n) { return n.store().headNumber(); }

}  // namespace

TEST(Node, FreshClusterBecomesReadyAtGenesis) {
  Cluster c(1, {});
  ASSERT_TRUE(c.run([&] { return c.allReady(); }, 3'000'000));
  for (std::size_t i = 0; i < c.size(); ++i) {
    auto s = c.node(i).chainStatus();
    EXPECT_EQ(s.headNumber, 0u);
    EXPECT_EQ(s.headHash, chain::Block::genesis().hash);
    EXPECT_TRUE(s.member);
  }
}

TEST(Node, ValidTransactionCommitsInNextBlockAndInvalidOneMakesNone) {
  Cluster c(2, {});
  ASSERT_TRUE(c.run([&] { return c.allReady(); }, 3'000'000));
  installSequence(c);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(countBlocks(c.node(i)), 1u);

  // Same model id again: rejected, no block.
  auto dup = c.await([&](Node::Done d) { c.node(2).installModel(fixtures::sequenceNet("seq", "n1", "n2", "n3"), d); });
  ASSERT_TRUE(dup);
  EXPECT_EQ(dup->status, SubmitStatus::Rejected);
  EXPECT_EQ(dup->code, "DUPLICATE_MODEL");
  c.net.runFor(200'000);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(countBlocks(c.node(i)), 1u);
}

TEST(Node, WorkItemsMoveAcrossNodes) {
  Cluster c(3, {});
  ASSERT_TRUE(c.run([&] { return c.allReady(); }, 3'000'000));
  installSequence(c);

  Digest caseId;
  auto launched = c.await([&](Node::Done d) { caseId = c.node(0).launchCase("seq", {}, d); });
  ASSERT_TRUE(launched);
  ASSERT_EQ(launched->status, SubmitStatus::Committed);
  ASSERT_TRUE(c.run([&] { return c.node(1).engine().worklist().size() == 1; }, 1'000'000));
  EXPECT_TRUE(c.node(2).engine().worklist().empty());

  auto item = c.node(1).engine().worklist().front();
  EXPECT_EQ(item.transition, "A");
  auto done = c.await(
      [&](Node::Done d) { c.node(1).completeWorkItem(item.id, {{"amount", engine::Value(std::int64_t{40})}}, d); });
  ASSERT_TRUE(done);
  ASSERT_EQ(done->status, SubmitStatus::Committed);
  // Read-your-writes on the completing node.
  EXPECT_TRUE(c.node(1).engine().worklist().empty());
  ASSERT_TRUE(c.run([&] { return c.node(2).engine().worklist().size() == 1; }, 1'000'000));
  EXPECT_EQ(c.node(2).engine().worklist().front().transition, "B");
  EXPECT_EQ(std::get<std::int64_t>(c.node(2).engine().worklist().front().inputValues.at("amount")), 40);

  // Every node's event stream saw the item appear before the case moved on.
  auto& ev = c.events(2);
  auto added = std::find_if(ev.begin(), ev.end(), [](const NodeEvent& e) { return e.kind == EventKind::WorkItemAdded; });
  ASSERT_NE(added, ev.end());
  EXPECT_EQ(added->headNumber, 3u);
}

TEST(Node, CompletionRaceHasOneWinner) {
  // An exclusive choice: X on n1 and Y on n2 both consume the token in p0.
  engine::WorkflowModel m;
  m.modelId = "xor";
  m.places = {"p0", "p1", "p2"};
  m.initialMarking = {{"p0", 1}};
  m.endPlaces = {"p1", "p2"};
  m.transitions = {fixtures::transition("X", {{"p0", 1}}, {{"p1", 1}}, "n1"),
                   fixtures::transition("Y", {{"p0", 1}}, {{"p2", 1}}, "n2")};

  Cluster c(4, {});
  ASSERT_TRUE(c.run([&] { return c.allReady(); }, 3'000'000));
  ASSERT_EQ(c.await([&](Node::Done d) { c.node(0).installModel(m, d); })->status, SubmitStatus::Committed);
  ASSERT_EQ(c.await([&](Node::Done d) { c.node(0).launchCase("xor", {}, d); })->status, SubmitStatus::Committed);
  ASSERT_TRUE(c.run([&] { return c.node(1).engine().worklist().size() == 1 && c.node(2).engine().worklist().size() == 1; },
                    1'000'000));

  std::optional<SubmitOutcome> a, b;
  c.node(1).completeWorkItem(c.node(1).engine().worklist().front().id, {}, [&](const SubmitOutcome& o) { a = o; });
  c.node(2).completeWorkItem(c.node(2).engine().worklist().front().id, {}, [&](const SubmitOutcome& o) { b = o; });
  ASSERT_TRUE(c.run([&] { return a && b; }, 5'000'000));
  EXPECT_NE(a->status == SubmitStatus::Committed, b->status == SubmitStatus::Committed);
  const auto& loser = a->status == SubmitStatus::Committed ? *b : *a;
  EXPECT_EQ(loser.status, SubmitStatus::Rejected);
  EXPECT_EQ(loser.code, "NOT_REACHABLE");
  c.net.runFor(200'000);
  EXPECT_TRUE(c.node(1).engine().worklist().empty());
  EXPECT_TRUE(c.node(2).engine().worklist().empty());
  expectSameChain(c, {0, 1, 2, 3});
}

TEST(Node, RestartRebuildsTheSameEngineState) {
  chainfix::TempDir dir("node-restart");
  nodesim::Options o;
  o.dataRoot = dir.path;
  Cluster c(5, {}, o);
  ASSERT_TRUE(c.run([&] { return c.allReady(); }, 3'000'000));
  installSequence(c);
  for (int i = 0; i < 9; ++i) {
    ASSERT_EQ(c.await([&](Node::Done d) { c.node(i % 4).launchCase("seq", {}, d); })->status, SubmitStatus::Committed);
  }
  c.net.runFor(200'000);
  ASSERT_EQ(c.node(2).store().headNumber(), 10u);
  auto before = c.node(2).engine().cases();
  auto fingerprint = c.node(2).engine().fingerprint();

  c.restart(2);
  ASSERT_TRUE(c.run([&] { return c.node(2).ready(); }, 5'000'000));
  EXPECT_EQ(c.node(2).engine().cases(), before);
  EXPECT_EQ(c.node(2).engine().fingerprint(), fingerprint);

  // The restarted node keeps taking part.
  ASSERT_EQ(c.await([&](Node::Done d) { c.node(2).launchCase("seq", {}, d); })->status, SubmitStatus::Committed);
  c.net.runFor(200'000);
  expectSameChain(c, {0, 1, 2, 3});
}

TEST(Node, SpareNodeJoinsAndCatchesUp) {
  nodesim::Options o;
  o.spares = 1;
  o.autostart = false;
  Cluster c(6, {}, o);
  for (std::size_t i = 0; i < 4; ++i) c.start(i);
  ASSERT_TRUE(c.run([&] { return c.allReady({0, 1, 2, 3}); }, 3'000'000));
  installSequence(c);
  for (int i = 0; i < 5; ++i) {
    ASSERT_EQ(c.await([&](Node::Done d) { c.node(0).launchCase("seq", {}, d); })->status, SubmitStatus::Committed);
  }

  c.start(4);
  ASSERT_TRUE(c.run([&] { return c.node(4).ready(); }, 10'000'000));
  EXPECT_TRUE(c.node(4).replica().isMember());
  EXPECT_EQ(c.node(4).replica().view().n(), 5u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c.node(i).replica().view().n(), 5u);
  expectSameChain(c, {0, 4});
  EXPECT_EQ(c.node(4).engine().cases(), c.node(0).engine().cases());

  // The joiner now orders transactions itself.
  ASSERT_EQ(c.await([&](Node::Done d) { c.node(4).launchCase("seq", {}, d); })->status, SubmitStatus::Committed);
  c.net.runFor(200'000);
  expectSameChain(c, {0, 1, 2, 3, 4});
}

TEST(Node, TwoSimultaneousJoinersBothBecomeMembers) {
  nodesim::Options o;
  o.spares = 2;
  o.autostart = false;
  Cluster c(7, {}, o);
  for (std::size_t i = 0; i < 4; ++i) c.start(i);
  ASSERT_TRUE(c.run([&] { return c.allReady({0, 1, 2, 3}); }, 3'000'000));
  installSequence(c);
  c.start(4);
  c.start(5);
  ASSERT_TRUE(c.run([&] { return c.node(4).ready() && c.node(5).ready(); }, 20'000'000));
  c.net.runFor(2'000'000);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(c.node(i).replica().view().n(), 6u) << i;
    EXPECT_TRUE(c.node(i).replica().isMember()) << i;
  }
  // Both additions sit in one total order: every node holds the same member list.
  for (std::size_t i = 1; i < 6; ++i) EXPECT_EQ(c.node(i).replica().view().members, c.node(0).replica().view().members);
}

TEST(Node, ByzantineLocalReplicaTriggersSelfCheck) {
  p2p::FaultPlan plan;
  // n1 shows a corrupted REPLY to odd-indexed recipients, itself included.
  plan.equivocations.push_back({"n1", {p2p::MessageKind::Reply}});
  Cluster c(8, plan);
  ASSERT_TRUE(c.run([&] { return c.allReady(); }, 3'000'000));
  installSequence(c, 0);

  auto out = c.await([&](Node::Done d) { c.node(1).launchCase("seq", {}, d); });
  ASSERT_TRUE(out);
  EXPECT_EQ(out->status, SubmitStatus::Committed);
  EXPECT_GE(c.node(1).selfChecks(), 1u);
  ASSERT_TRUE(c.run([&] { return c.node(1).ready(); }, 10'000'000));
  c.net.runFor(500'000);
  expectSameChain(c, {0, 1, 2, 3});
}

TEST(Node, DivergedLocalChainIsDiscardedOnSelfCheck) {
  Cluster c(9, {});
  ASSERT_TRUE(c.run([&] { return c.allReady(); }, 3'000'000));
  installSequence(c);
  ASSERT_EQ(c.await([&](Node::Done d) { c.node(0).launchCase("seq", {}, d); })->status, SubmitStatus::Committed);
  c.net.runFor(200'000);

  // Simulate blocks that a faulty local replica produced: rewrite n3's chain.
  auto& store = const_cast<chain::BlockStore&>(c.node(3).store());
  store.rewind(1);
  auto fake = chainfix::makeChain(4, 1, 99);
  auto forged = chain::Block::make(2, store.headHash(), fake[2].transactions, 0);
  ASSERT_TRUE(store.append(forged));

  // The next block from n3's own replica no longer links; n3 resets and refetches.
  ASSERT_EQ(c.await([&](Node::Done d) { c.node(0).launchCase("seq", {}, d); })->status, SubmitStatus::Committed);
  ASSERT_TRUE(c.run([&] { return c.node(3).ready() && c.node(3).store().headNumber() == 3; }, 10'000'000));
  EXPECT_GE(c.node(3).selfChecks(), 1u);
  expectSameChain(c, {0, 1, 2, 3});
  EXPECT_EQ(c.node(3).engine().fingerprint(), c.node(0).engine().fingerprint());
}
