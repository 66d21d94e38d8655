// Copyright (c) 2026 The bftflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <chrono>
#include <mutex>
#include <thread>

#include "bftflow/p2p/sim_network.hpp"
#include "bftflow/p2p/tcp_transport.hpp"
#include "support/fixtures.hpp"

using namespace bftflow;
using namespace bftflow::p2p;

namespace {

Bytes numberBody(std::uint64_t n) {
  codec::Writer w;
  w.u64(n);
  return std::move(w).bytes();
}

std::uint64_t bodyNumber(const Bytes& b) {
  codec::Reader r(b);
  return r.u64();
}

// Relays every received message to a random peer until a hop budget runs out.
struct Gossip : Endpoint {
  NodeId id;
  Transport* transport = nullptr;
  KeyPair key;
  std::mt19937_64 rng;
  std::vector<std::pair<NodeId, std::uint64_t>> seen;
  int ticks = 0;

  Gossip(NodeId i, std::uint64_t seed) : id(std::move(i)), key((*fixtures::keyFor(id))), rng(seed) {}

  void deliver(const Envelope& env) override {
    auto n = bodyNumber(env.body);
    seen.emplace_back(env.sender, n);
    if (n == 0) return;
    auto peers = transport->peers();
    transport->send(peers[rng() % peers.size()], Envelope::sign(id, MessageKind::Request, numberBody(n - 1), key));
  }
  void tick() override {
    if (++ticks <= 3) transport->broadcast(Envelope::sign(id, MessageKind::Request, numberBody(6), key));
  }
};

Digest runGossip(std::uint64_t seed, std::vector<std::vector<std::pair<NodeId, std::uint64_t>>>* logs = nullptr) {
  SimulatedNetwork net(seed, {});
  std::vector<std::unique_ptr<Gossip>> nodes;
  for (int i = 0; i < 4; ++i) {
    nodes.push_back(std::make_unique<Gossip>("n" + std::to_string(i), seed + i));
    nodes.back()->transport = &net.addNode(nodes.back()->id, nodes.back()->key, nodes.back().get());
  }
  net.runFor(100'000);
  if (logs) {
    for (auto& n : nodes) logs->push_back(n->seen);
  }
  return net.transcriptDigest();
}

struct Recorder : Endpoint {
  std::vector<Envelope> got;
  int ticks = 0;
  void deliver(const Envelope& env) override { got.push_back(env); }
  void tick() override { ++ticks; }
};

}  // namespace

TEST(SimulatedNetwork, SameSeedSameTranscript) {
  std::vector<std::vector<std::pair<NodeId, std::uint64_t>>> a, b;
  auto d1 = runGossip(7, &a);
  auto d2 = runGossip(7, &b);
  EXPECT_EQ(d1, d2);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a[0].empty());
  EXPECT_NE(runGossip(8), d1);
}

TEST(SimulatedNetwork, PerLinkFifoUnderRandomDelay) {
  FaultPlan plan;
  plan.delays.push_back({"a", 0, 50'000});
  SimulatedNetwork net(3, plan, {100, 20'000, 5'000});
  Recorder ra, rb;
  auto ka = (*fixtures::keyFor("a")), kb = (*fixtures::keyFor("b"));
  auto& ta = net.addNode("a", ka, &ra);
  net.addNode("b", kb, &rb);
  for (std::uint64_t i = 0; i < 200; ++i) {
    ta.send("b", Envelope::sign("a", MessageKind::Prepare, numberBody(i), ka));
  }
  net.runFor(10'000'000);
  ASSERT_EQ(rb.got.size(), 200u);
  for (std::uint64_t i = 0; i < 200; ++i) EXPECT_EQ(bodyNumber(rb.got[i].body), i);
}

TEST(SimulatedNetwork, SendToSelfIsLocal) {
  FaultPlan plan;
  plan.partitions.push_back({"a", 0, 1'000'000});
  SimulatedNetwork net(1, plan);
  Recorder ra, rb;
  auto ka = (*fixtures::keyFor("a"));
  auto& ta = net.addNode("a", ka, &ra);
  net.addNode("b", (*fixtures::keyFor("b")), &rb);
  ta.send("a", Envelope::sign("a", MessageKind::Commit, numberBody(1), ka));
  ta.send("b", Envelope::sign("a", MessageKind::Commit, numberBody(2), ka));
  net.runFor(10'000);
  ASSERT_EQ(ra.got.size(), 1u);
  EXPECT_TRUE(rb.got.empty());
  EXPECT_EQ(ta.peers(), std::vector<NodeId>{"b"});
}

TEST(SimulatedNetwork, ForgedEnvelopesNeverDelivered) {
  SimulatedNetwork net(1, {});
  Recorder ra, rb;
  auto& ta = net.addNode("a", (*fixtures::keyFor("a")), &ra);
  net.addNode("b", (*fixtures::keyFor("b")), &rb);
  // Signed with b's key but claims to come from a.
  ta.send("b", Envelope::sign("a", MessageKind::Commit, numberBody(1), (*fixtures::keyFor("b"))));
  auto good = Envelope::sign("a", MessageKind::Commit, numberBody(2), (*fixtures::keyFor("a")));
  auto tampered = good;
  tampered.body[7] ^= 1;
  ta.send("b", tampered);
  ta.send("b", good);
  net.runFor(100'000);
  ASSERT_EQ(rb.got.size(), 1u);
  EXPECT_EQ(rb.got[0], good);
  EXPECT_EQ(net.rejected(), 2u);
}

TEST(SimulatedNetwork, EquivocatorShowsOddRecipientsAnotherBody) {
  FaultPlan plan;
  plan.equivocations.push_back({"n0", {MessageKind::PrePrepare}});
  SimulatedNetwork net(5, plan);
  net.setMutator(MessageKind::PrePrepare, [](const Bytes& body, std::mt19937_64&) {
    auto copy = body;
    copy.back() ^= 0xff;
    return copy;
  });
  std::vector<Recorder> recs(4);
  auto k0 = (*fixtures::keyFor("n0"));
  Transport* t0 = nullptr;
  for (int i = 0; i < 4; ++i) {
    auto id = "n" + std::to_string(i);
    auto& t = net.addNode(id, (*fixtures::keyFor(id)), &recs[i]);
    if (i == 0) t0 = &t;
  }
  t0->broadcast(Envelope::sign("n0", MessageKind::PrePrepare, numberBody(9), k0));
  t0->broadcast(Envelope::sign("n0", MessageKind::Prepare, numberBody(9), k0));
  net.runFor(100'000);
  for (int i = 1; i < 4; ++i) {
    ASSERT_EQ(recs[i].got.size(), 2u);
    bool mutated = bodyNumber(recs[i].got[0].body) != 9;
    EXPECT_EQ(mutated, i % 2 == 1) << i;
    EXPECT_EQ(bodyNumber(recs[i].got[1].body), 9u);
  }
  EXPECT_EQ(net.rejected(), 0u);
}

TEST(SimulatedNetwork, CrashStopsDeliveriesAndTicks) {
  FaultPlan plan;
  plan.crashes.push_back({"b", 10});
  SimulatedNetwork net(2, plan);
  Recorder ra, rb;
  auto ka = (*fixtures::keyFor("a"));
  auto& ta = net.addNode("a", ka, &ra);
  net.addNode("b", (*fixtures::keyFor("b")), &rb);
  net.runFor(1'000'000);
  EXPECT_TRUE(net.isCrashed("b"));
  EXPECT_LT(rb.ticks, 10);
  EXPECT_GT(ra.ticks, 100);
  ta.send("b", Envelope::sign("a", MessageKind::Commit, numberBody(1), ka));
  net.runFor(100'000);
  EXPECT_TRUE(rb.got.empty());
}

TEST(SimulatedNetwork, DropProbabilityOneLosesEverything) {
  FaultPlan plan;
  plan.drops.push_back({"a", 1.0});
  SimulatedNetwork net(2, plan);
  Recorder ra, rb;
  auto ka = (*fixtures::keyFor("a"));
  auto& ta = net.addNode("a", ka, &ra);
  net.addNode("b", (*fixtures::keyFor("b")), &rb);
  for (int i = 0; i < 20; ++i) ta.send("b", Envelope::sign("a", MessageKind::Commit, numberBody(i), ka));
  net.runFor(100'000);
  EXPECT_TRUE(rb.got.empty());
  EXPECT_EQ(net.dropped(), 20u);
}

TEST(SimulatedNetwork, MalformedPlansFailFast) {
  FaultPlan drop;
  drop.drops.push_back({"a", 1.5});
  EXPECT_THROW(SimulatedNetwork(1, drop), std::invalid_argument);
  FaultPlan delay;
  delay.delays.push_back({"a", 10, 5});
  EXPECT_THROW(SimulatedNetwork(1, delay), std::invalid_argument);
  FaultPlan part;
  part.partitions.push_back({"a", 10, 10});
  EXPECT_THROW(SimulatedNetwork(1, part), std::invalid_argument);
  FaultPlan eq;
  eq.equivocations.push_back({"a", {}});
  EXPECT_THROW(SimulatedNetwork(1, eq), std::invalid_argument);
}

TEST(Envelope, FrameRoundTrip) {
  auto env = Envelope::sign("n1", MessageKind::BlockchainSend, numberBody(77), (*fixtures::keyFor("n1")));
  auto frame = env.frame();
  ASSERT_GT(frame.size(), 4u);
  std::uint32_t len = (frame[0] << 24) | (frame[1] << 16) | (frame[2] << 8) | frame[3];
  EXPECT_EQ(len, frame.size() - 4);
  EXPECT_EQ(frame[4], 0x23);
  auto back = Envelope::fromFramePayload(ByteView(frame).subspan(4));
  EXPECT_EQ(back, env);
  Keyring keys;
  keys.add("n1", (*fixtures::keyFor("n1")).publicKey());
  EXPECT_TRUE(back.verify(keys));
  back.kind = MessageKind::BlockSend;
  EXPECT_FALSE(back.verify(keys));
}

namespace {

struct LiveNode {
  std::mutex mutex;
  std::vector<Envelope> got;
  std::unique_ptr<TcpTransport> transport;

  std::size_t count() {
    std::lock_guard lock(mutex);
    return got.size();
  }
};

template <typename Pred>
bool eventually(Pred pred, int ms = 10'000) {
  auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(ms);
  while (std::chrono::steady_clock::now() < until) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return pred();
}

int freePort() {
  TcpTransport probe("x", (*fixtures::keyFor("x")), {{"x", "127.0.0.1:0", (*fixtures::keyFor("x")).publicKey()}}, "127.0.0.1:0",
                     [](Envelope) {});
  probe.start();
  int port = probe.boundPort();
  probe.stop();
  return port;
}

}  // namespace

TEST(TcpTransport, FourNodesFormCompleteGraph) {
  std::vector<PeerDescriptor> peers;
  for (int i = 0; i < 4; ++i) {
    auto id = "n" + std::to_string(i);
    peers.push_back({id, "127.0.0.1:" + std::to_string(freePort()), (*fixtures::keyFor(id)).publicKey()});
  }
  std::vector<std::unique_ptr<LiveNode>> nodes;
  for (int i = 0; i < 4; ++i) {
    auto node = std::make_unique<LiveNode>();
    auto* raw = node.get();
    node->transport = std::make_unique<TcpTransport>(peers[i].id, (*fixtures::keyFor(peers[i].id)), peers, peers[i].address,
                                                     [raw](Envelope e) {
                                                       std::lock_guard lock(raw->mutex);
                                                       raw->got.push_back(std::move(e));
                                                     });
    nodes.push_back(std::move(node));
  }
  for (auto& n : nodes) n->transport->start();

  ASSERT_TRUE(eventually([&] {
    std::size_t ends = 0;
    for (auto& n : nodes) ends += n->transport->connectedPeers().size();
    return ends == 12;
  }));
  // Each undirected link appears once on each side: 12 ends, 6 links.

  auto k0 = (*fixtures::keyFor("n0"));
  for (std::uint64_t i = 0; i < 100; ++i) {
    nodes[0]->transport->broadcast(Envelope::sign("n0", MessageKind::Commit, numberBody(i), k0));
  }
  nodes[0]->transport->send("n0", Envelope::sign("n0", MessageKind::Commit, numberBody(1000), k0));
  ASSERT_TRUE(eventually([&] { return nodes[3]->count() == 100 && nodes[1]->count() == 100; }));
  EXPECT_EQ(nodes[0]->count(), 1u);
  {
    std::lock_guard lock(nodes[3]->mutex);
    for (std::uint64_t i = 0; i < 100; ++i) EXPECT_EQ(bodyNumber(nodes[3]->got[i].body), i);
  }
  for (auto& n : nodes) n->transport->stop();
}

TEST(TcpTransport, UnknownPeerIsRefused) {
  auto port = freePort();
  std::vector<PeerDescriptor> peers{{"n0", "127.0.0.1:" + std::to_string(port), (*fixtures::keyFor("n0")).publicKey()},
                                    {"n1", "127.0.0.1:1", (*fixtures::keyFor("n1")).publicKey()}};
  TcpTransport server("n1", (*fixtures::keyFor("n1")), peers, peers[0].address, [](Envelope) {});
  // n1 > n0 so it only accepts; "intruder" is not on the list.
  server.start();

  std::vector<PeerDescriptor> intruderView{{"intruder", "127.0.0.1:0", (*fixtures::keyFor("intruder")).publicKey()},
                                           {"n1", peers[0].address, (*fixtures::keyFor("n1")).publicKey()}};
  TcpTransport intruder("intruder", (*fixtures::keyFor("intruder")), intruderView, "127.0.0.1:0", [](Envelope) {});
  intruder.start();
  EXPECT_TRUE(eventually([&] { return server.refused() > 0; }, 5'000));
  EXPECT_TRUE(server.connectedPeers().empty());
  intruder.stop();
  server.stop();
}
