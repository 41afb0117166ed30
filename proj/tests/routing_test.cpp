// Copyright 2026 The cliquesim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "clique/routing.hpp"

#include <set>

#include "clique/harness.hpp"
#include "gtest/gtest.h"

namespace clique {
namespace {

// Messages within W with exact f|W| source and destination counts, built by
// composing f|W| seeded permutations of W.
std::vector<Message> balanced_within(int n, const std::vector<NodeId>& W,
                                     std::uint64_t seed) {
  const int w = static_cast<int>(W.size());
  const int quota = (n / w) * w;
  std::vector<Message> msgs;
  for (int j = 1; j <= quota; ++j) {
    auto pi = seeded_permutation(w, seed, static_cast<std::uint64_t>(j));
    for (int a = 0; a < w; ++a) {
      msgs.push_back(Message{W[a], j, W[pi[a] - 1], 7000u + static_cast<std::uint64_t>(j), false});
    }
  }
  return msgs;
}

bool multiset_delivers(const DeliveryReport& rep,
                       const std::vector<Message>& msgs, int n) {
  std::vector<std::vector<Message>> want(n);
  for (const auto& m : msgs) {
    if (!m.dummy) want[m.dst - 1].push_back(m);
  }
  for (auto& v : want) std::sort(v.begin(), v.end());
  for (int k = 0; k < n; ++k) {
    if (rep.received[k] != want[k]) return false;
  }
  return true;
}

TEST(RouteKnown, IdentityInstanceStillRunsTwoRounds) {
  const int n = 8;
  std::vector<NodeId> W(n);
  std::iota(W.begin(), W.end(), 1);
  std::vector<Message> msgs;
  for (NodeId v = 1; v <= n; ++v) {
    for (int j = 1; j <= n; ++j) msgs.push_back(Message{v, j, v, 42, false});
  }
  auto rep = route_known(n, W, msgs);
  EXPECT_EQ(rep.rounds_used, 2);
  EXPECT_TRUE(multiset_delivers(rep, msgs, n));
}

TEST(RouteKnown, SubsetWithRandomRegularDemand) {
  const int n = 16;
  std::vector<NodeId> W{1, 2, 3, 4};
  auto msgs = balanced_within(n, W, 7);
  RouteOptions opt;
  opt.trace = true;
  auto rep = route_known(n, W, msgs, opt);
  EXPECT_EQ(rep.rounds_used, 2);
  EXPECT_EQ(rep.max_load, 1);
  EXPECT_TRUE(multiset_delivers(rep, msgs, n));
}

TEST(RouteKnown, LocalityOnlyEdgesTouchingW) {
  const int n = 16;
  std::vector<NodeId> W{5, 6, 7, 8};
  auto msgs = balanced_within(n, W, 3);
  std::set<NodeId> inW(W.begin(), W.end());

  const int w = 4;
  std::map<NodeId, int> pos;
  for (int a = 0; a < w; ++a) pos[W[a]] = a;
  CountsMatrix counts(w, std::vector<int>(w, 0));
  std::vector<std::vector<std::vector<Word>>> items(n);
  for (NodeId v = 1; v <= n; ++v) items[v - 1].assign(w, {});
  auto sorted = msgs;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& m : sorted) {
    counts[pos[m.src]][pos[m.dst]]++;
    items[m.src - 1][pos[m.dst]].push_back(to_word(m));
  }
  auto fn = [&](LaneCtx ctx) -> Task<std::vector<Word>> {
    auto it = pos.find(ctx.self());
    int mypos = it == pos.end() ? -1 : it->second;
    auto got = co_await route_known_words(
        ctx, W, mypos,
        mypos >= 0 ? items[ctx.self() - 1] : std::vector<std::vector<Word>>{},
        counts, "t.locality");
    co_return got;
  };
  RunOptions ro;
  ro.trace_enabled = true;
  auto run = run_protocol<std::vector<Word>>(
      CliqueConfig{n, 1, true}, ro,
      std::function<Task<std::vector<Word>>(LaneCtx)>(fn));
  for (const auto& t : run.engine.traces) {
    for (NodeId s = 1; s <= n; ++s) {
      for (NodeId d = 1; d <= n; ++d) {
        if (t.load(s, d, n) > 0) {
          EXPECT_TRUE(inW.count(s) || inW.count(d))
              << "edge (" << s << "," << d << ") loaded in round " << t.round;
        }
      }
    }
  }
}

TEST(RouteKnown, PreconditionViolations) {
  const int n = 8;
  std::vector<NodeId> W{1, 2};
  std::vector<Message> bad{{1, 1, 5, 0, false}};
  EXPECT_THROW(route_known(n, W, bad), PreconditionViolated);
  std::vector<Message> unbal;
  for (int j = 1; j <= 8; ++j) unbal.push_back(Message{1, j, 2, 0, false});
  EXPECT_THROW(route_known(n, W, unbal), PreconditionViolated);
}

TEST(RouteKnown, TwoDisjointSubsetsConcurrently) {
  const int n = 16;
  std::vector<NodeId> WA{1, 2, 3, 4}, WB{5, 6, 7, 8};
  auto msgsA = balanced_within(n, WA, 11);
  auto msgsB = balanced_within(n, WB, 12);

  std::map<NodeId, int> posA, posB;
  for (int a = 0; a < 4; ++a) posA[WA[a]] = a, posB[WB[a]] = a;
  CountsMatrix cA(4, std::vector<int>(4, 0)), cB(4, std::vector<int>(4, 0));
  std::vector<std::vector<std::vector<Word>>> itemsA(n), itemsB(n);
  for (NodeId v = 1; v <= n; ++v) {
    itemsA[v - 1].assign(4, {});
    itemsB[v - 1].assign(4, {});
  }
  for (const auto& m : msgsA) {
    cA[posA[m.src]][posA[m.dst]]++;
    itemsA[m.src - 1][posA[m.dst]].push_back(to_word(m));
  }
  for (const auto& m : msgsB) {
    cB[posB[m.src]][posB[m.dst]]++;
    itemsB[m.src - 1][posB[m.dst]].push_back(to_word(m));
  }
  auto fn = [&](LaneCtx ctx) -> Task<std::vector<Word>> {
    NodeId self = ctx.self();
    if (posA.count(self)) {
      auto got = co_await route_known_words(ctx, WA, posA[self],
                                            itemsA[self - 1], cA, "t.wa");
      co_return got;
    }
    if (posB.count(self)) {
      auto got = co_await route_known_words(ctx, WB, posB[self],
                                            itemsB[self - 1], cB, "t.wb");
      co_return got;
    }
    auto got = co_await route_known_words(ctx, WA, -1, {}, cA, "t.wa");
    co_return got;
  };
  RunOptions ro;
  ro.trace_enabled = true;
  auto run = run_protocol<std::vector<Word>>(
      CliqueConfig{n, 1, true}, ro,
      std::function<Task<std::vector<Word>>(LaneCtx)>(fn));
  EXPECT_EQ(run.engine.max_load, 1);
  EXPECT_EQ(run.engine.rounds_used, 2);
}

TEST(RouteSubset, FourRoundsRandomDemand) {
  const int n = 16;
  std::vector<NodeId> W{1, 2, 3, 4};
  auto msgs = balanced_within(n, W, 21);
  RouteOptions opt;
  opt.trace = true;
  auto rep = route_subset(n, W, msgs, opt);
  EXPECT_EQ(rep.rounds_used, 4);
  EXPECT_EQ(rep.max_load, 1);
  EXPECT_TRUE(multiset_delivers(rep, msgs, n));
}

TEST(RouteSubset, AlreadyDeliveredStillFourRounds) {
  const int n = 16;
  std::vector<NodeId> W{9, 10, 11, 12};
  std::vector<Message> msgs;
  for (NodeId v : W) {
    for (int j = 1; j <= 16; ++j) msgs.push_back(Message{v, j, v, 1, false});
  }
  auto rep = route_subset(n, W, msgs);
  EXPECT_EQ(rep.rounds_used, 4);
  EXPECT_TRUE(multiset_delivers(rep, msgs, n));
}

TEST(RouteSubset, SubsetTooLargeThrows) {
  const int n = 8;
  std::vector<NodeId> W{1, 2, 3};  // 3^2 = 9 > 8
  EXPECT_THROW(route_subset(n, W, {}), SubsetTooLarge);
}

TEST(RouteIdt, RandomBalancedSquare) {
  auto inst = gen_routing(RoutingKind::random_balanced, 16, 7);
  RouteOptions opt;
  opt.trace = true;
  auto rep = route_idt(inst, opt);
  EXPECT_LE(rep.rounds_used, 16);
  EXPECT_EQ(rep.max_load, 1);
  EXPECT_TRUE(delivery_matches(rep, inst));
}

TEST(RouteIdt, IdentityInstance) {
  auto inst = gen_routing(RoutingKind::identity, 16, 1);
  auto rep = route_idt(inst);
  EXPECT_LE(rep.rounds_used, 16);
  EXPECT_TRUE(delivery_matches(rep, inst));
}

TEST(RouteIdt, TransposeInstanceMatchesOracle) {
  auto inst = gen_routing(RoutingKind::transpose, 16, 1);
  auto rep = route_idt(inst);
  EXPECT_LE(rep.rounds_used, 16);
  EXPECT_TRUE(delivery_matches(rep, inst));
}

TEST(RouteIdt, NonSquareTen) {
  auto inst = gen_routing(RoutingKind::random_balanced, 10, 3);
  RouteOptions opt;
  opt.trace = true;
  auto rep = route_idt(inst, opt);
  EXPECT_LE(rep.rounds_used, 16);
  EXPECT_LE(rep.max_load, 2);
  EXPECT_TRUE(delivery_matches(rep, inst));
}

TEST(RouteIdt, ManySizes) {
  for (int n : {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15, 20, 25}) {
    auto inst = gen_routing(RoutingKind::random_balanced, n, 5);
    auto rep = route_idt(inst);
    EXPECT_LE(rep.rounds_used, 16) << "n = " << n;
    EXPECT_LE(rep.max_load, isqrt_floor(n) * isqrt_floor(n) == n ? 1 : 2)
        << "n = " << n;
    EXPECT_TRUE(delivery_matches(rep, inst)) << "n = " << n;
  }
}

TEST(BalanceBetween, EveryGroupPairHoldsExactlyN) {
  const int n = 16;
  auto inst = gen_routing(RoutingKind::random_balanced, n, 9);
  auto rep = balance_between_subsets(inst);
  auto grp = Grouping::make(n);
  std::vector<std::vector<long long>> held(
      grp.groups(), std::vector<long long>(grp.groups(), 0));
  for (NodeId v = 1; v <= n; ++v) {
    for (const auto& m : rep.received[v - 1]) {
      held[grp.group_of(v)][grp.group_of(m.dst)]++;
    }
  }
  for (int i = 0; i < grp.groups(); ++i) {
    for (int j = 0; j < grp.groups(); ++j) {
      EXPECT_EQ(held[i][j], n) << "pair (" << i << "," << j << ")";
    }
  }
}

TEST(BalanceBetween, SkewInstanceStillBalances) {
  const int n = 16;
  auto inst = gen_routing(RoutingKind::skew, n, 1);
  auto rep = balance_between_subsets(inst);
  auto grp = Grouping::make(n);
  std::vector<std::vector<long long>> held(
      grp.groups(), std::vector<long long>(grp.groups(), 0));
  for (NodeId v = 1; v <= n; ++v) {
    for (const auto& m : rep.received[v - 1]) {
      held[grp.group_of(v)][grp.group_of(m.dst)]++;
    }
  }
  for (int i = 0; i < grp.groups(); ++i)
    for (int j = 0; j < grp.groups(); ++j) EXPECT_EQ(held[i][j], n);
}

TEST(BalanceWithin, EveryNodeHoldsExactShare) {
  const int n = 16;
  auto inst = gen_routing(RoutingKind::random_balanced, n, 13);
  auto rep = balance_within_subsets(inst);
  auto grp = Grouping::make(n);
  for (NodeId v = 1; v <= n; ++v) {
    std::vector<int> per_group(grp.groups(), 0);
    for (const auto& m : rep.received[v - 1]) {
      per_group[grp.group_of(m.dst)]++;
    }
    for (int j = 0; j < grp.groups(); ++j) {
      EXPECT_EQ(per_group[j], 4) << "node " << v << " group " << j;
    }
  }
}

TEST(CrossDeliver, AllMessagesInsideDestinationGroup) {
  const int n = 16;
  auto inst = gen_routing(RoutingKind::random_balanced, n, 17);
  RouteOptions opt;
  opt.trace = true;
  auto rep = cross_deliver(inst, opt);
  auto grp = Grouping::make(n);
  for (NodeId v = 1; v <= n; ++v) {
    for (const auto& m : rep.received[v - 1]) {
      EXPECT_EQ(grp.group_of(m.dst), grp.group_of(v));
    }
  }
}

TEST(RouteIdt, StrictPatternsAgree) {
  auto inst = gen_routing(RoutingKind::random_balanced, 16, 23);
  RouteOptions strict;
  strict.strict_patterns = true;
  auto rep1 = route_idt(inst, strict);
  EXPECT_TRUE(rep1.pattern_checked);
  auto rep2 = route_idt(inst);
  EXPECT_TRUE(delivery_matches(rep1, inst));
  for (int k = 0; k < inst.n; ++k) {
    EXPECT_EQ(rep1.received[k], rep2.received[k]);
  }
}

TEST(RouteIdtFast, RandomBalancedSquare) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    auto inst = gen_routing(RoutingKind::random_balanced, 16, seed);
    RouteOptions opt;
    opt.trace = true;
    auto rep = route_idt_fast(inst, opt);
    EXPECT_LE(rep.rounds_used, 12) << "seed " << seed;
    EXPECT_LE(rep.max_load, 2) << "seed " << seed;
    EXPECT_TRUE(delivery_matches(rep, inst)) << "seed " << seed;
  }
}

TEST(RouteIdtFast, IdentityInstance) {
  auto inst = gen_routing(RoutingKind::identity, 25, 1);
  auto rep = route_idt_fast(inst);
  EXPECT_LE(rep.rounds_used, 12);
  EXPECT_LE(rep.max_load, 2);
  EXPECT_TRUE(delivery_matches(rep, inst));
}

TEST(RouteIdtFast, MatchesRouteIdtReceivedSets) {
  auto inst = gen_routing(RoutingKind::random_balanced, 25, 77);
  auto fast = route_idt_fast(inst);
  auto slow = route_idt(inst);
  for (int k = 0; k < inst.n; ++k) {
    EXPECT_EQ(fast.received[k], slow.received[k]) << "node " << k + 1;
  }
}

TEST(RouteIdtFast, SquareSizesAndSkew) {
  for (int n : {1, 4, 9, 16, 25, 36}) {
    for (auto kind : {RoutingKind::random_balanced, RoutingKind::skew,
                      RoutingKind::transpose}) {
      auto inst = gen_routing(kind, n, 42);
      auto rep = route_idt_fast(inst);
      EXPECT_LE(rep.rounds_used, 12) << "n=" << n << " kind=" << to_string(kind);
      EXPECT_LE(rep.max_load, 2) << "n=" << n << " kind=" << to_string(kind);
      EXPECT_TRUE(delivery_matches(rep, inst))
          << "n=" << n << " kind=" << to_string(kind);
    }
  }
}

TEST(RouteIdtFast, NonSquareFallsBackToRouteIdt) {
  auto inst = gen_routing(RoutingKind::random_balanced, 10, 5);
  auto rep = route_idt_fast(inst);
  EXPECT_LE(rep.rounds_used, 16);
  EXPECT_TRUE(delivery_matches(rep, inst));
}

TEST(Instance, PaddingRoundRobinKeepsCountsExact) {
  RoutingInstance inst;
  inst.n = 4;
  inst.by_source.assign(4, {});
  inst.by_source[0].push_back(Message{1, 1, 2, 5, false});
  inst.pad();
  for (const auto& per : inst.by_source) EXPECT_EQ(per.size(), 4u);
  auto rc = inst.receive_counts();
  for (int c : rc) EXPECT_EQ(c, 4);
}

TEST(Instance, RejectsOverfullNodes) {
  RoutingInstance inst;
  inst.n = 2;
  inst.by_source.assign(2, {});
  for (int j = 1; j <= 3; ++j) {
    inst.by_source[0].push_back(Message{1, j, 2, 0, false});
  }
  EXPECT_THROW(inst.pad(), InvalidInstance);
}

}  // namespace
}  // namespace clique
