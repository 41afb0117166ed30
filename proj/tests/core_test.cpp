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

#include "clique/core.hpp"

#include <sstream>

#include "gtest/gtest.h"

namespace clique {
namespace {

// Sends `words_per_edge` words to every node (including itself) for
// `send_rounds` rounds, then stops. Records everything it receives.
class Flood : public NodeProgram {
 public:
  Flood(int send_rounds, int words_per_edge)
      : send_rounds_(send_rounds), words_(words_per_edge) {}

  void step(RoundApi& api) override {
    for (const auto& env : api.inbox()) {
      for (const auto& w : env.words) received_.push_back({env.src, w});
    }
    if (api.round() <= send_rounds_) {
      for (NodeId d = 1; d <= api.n(); ++d) {
        for (int k = 0; k < words_; ++k) {
          Word w;
          w.value = static_cast<std::uint64_t>(api.self()) * 1000 + api.round();
          api.send(d, w);
        }
      }
    } else {
      finished_ = true;
    }
  }
  bool done() const override { return finished_; }

  std::vector<std::pair<NodeId, Word>> received_;

 private:
  int send_rounds_, words_;
  bool finished_ = false;
};

std::vector<std::unique_ptr<NodeProgram>> make_floods(int n, int rounds,
                                                      int words) {
  std::vector<std::unique_ptr<NodeProgram>> ps;
  for (int i = 0; i < n; ++i) ps.push_back(std::make_unique<Flood>(rounds, words));
  return ps;
}

TEST(Engine, MinimalExchangeUsesOneRound) {
  Engine engine({.n = 2, .edge_capacity_words = 1, .trace_enabled = true});
  auto ps = make_floods(2, 1, 1);
  auto result = engine.run(ps, 10);
  EXPECT_EQ(result.rounds_used, 1);
  EXPECT_EQ(result.max_load, 1);
  // every directed edge carried exactly one word
  for (NodeId s = 1; s <= 2; ++s)
    for (NodeId d = 1; d <= 2; ++d)
      EXPECT_EQ(result.traces[0].load(s, d, 2), 1u);
}

TEST(Engine, SelfEdgeDeliversNextRound) {
  Engine engine({.n = 1, .edge_capacity_words = 1});
  auto ps = make_floods(1, 1, 1);
  auto result = engine.run(ps, 10);
  EXPECT_EQ(result.rounds_used, 1);
  auto* flood = static_cast<Flood*>(ps[0].get());
  ASSERT_EQ(flood->received_.size(), 1u);
  EXPECT_EQ(flood->received_[0].first, 1);
  EXPECT_EQ(flood->received_[0].second.value, 1001u);  // sent in round 1
}

TEST(Engine, CapacityExceededThrows) {
  Engine engine({.n = 4, .edge_capacity_words = 1});
  auto ps = make_floods(4, 1, 2);
  EXPECT_THROW(engine.run(ps, 10), CapacityExceeded);
}

TEST(Engine, SynchronyExactlyOneRoundLater) {
  // A probe that records the round at which each word arrives.
  class Probe : public NodeProgram {
   public:
    void step(RoundApi& api) override {
      for (const auto& env : api.inbox()) {
        arrival_rounds_.push_back({env.round, api.round()});
      }
      if (api.round() == 1 && api.self() == 1) {
        Word w;
        api.send(2, w);
      }
      if (api.round() >= 3) finished_ = true;
    }
    bool done() const override { return finished_; }
    std::vector<std::pair<int, int>> arrival_rounds_;

   private:
    bool finished_ = false;
  };
  std::vector<std::unique_ptr<NodeProgram>> ps;
  ps.push_back(std::make_unique<Probe>());
  ps.push_back(std::make_unique<Probe>());
  Engine engine({.n = 2, .edge_capacity_words = 1});
  engine.run(ps, 10);
  auto* p2 = static_cast<Probe*>(ps[1].get());
  ASSERT_EQ(p2->arrival_rounds_.size(), 1u);
  EXPECT_EQ(p2->arrival_rounds_[0].first, 1);   // emitted in round 1
  EXPECT_EQ(p2->arrival_rounds_[0].second, 2);  // readable exactly in round 2
}

TEST(Engine, ConservationWordsDeliveredEqualsSent) {
  Engine engine({.n = 5, .edge_capacity_words = 3});
  auto ps = make_floods(5, 4, 3);
  auto result = engine.run(ps, 50);
  EXPECT_GT(result.words_sent, 0u);
  EXPECT_EQ(result.words_sent, result.words_delivered);
  std::uint64_t received = 0;
  for (auto& p : ps) received += static_cast<Flood*>(p.get())->received_.size();
  EXPECT_EQ(received, result.words_sent);
}

TEST(Engine, NonTerminationThrows) {
  class Forever : public NodeProgram {
   public:
    void step(RoundApi& api) override { api.send(1, Word{}); }
    bool done() const override { return false; }
  };
  std::vector<std::unique_ptr<NodeProgram>> ps;
  ps.push_back(std::make_unique<Forever>());
  Engine engine({.n = 1, .edge_capacity_words = 1});
  EXPECT_THROW(engine.run(ps, 7), NonTermination);
}

TEST(Engine, DeterministicTraces) {
  auto run_once = [] {
    Engine engine({.n = 6, .edge_capacity_words = 2, .trace_enabled = true});
    auto ps = make_floods(6, 3, 2);
    auto result = engine.run(ps, 50);
    std::ostringstream os;
    write_trace_jsonl(os, result, 6);
    return os.str();
  };
  EXPECT_EQ(run_once(), run_once());
}

TEST(Engine, FaultDropsExactlyOneWord) {
  Engine engine({.n = 3, .edge_capacity_words = 1});
  auto ps = make_floods(3, 1, 1);
  auto result = engine.run(ps, 10, FaultSpec{1, 2, 3});
  EXPECT_EQ(result.words_sent, 9u - 1u);
  EXPECT_EQ(result.words_sent, result.words_delivered);
}

TEST(Engine, RoundsUsedCountsNonEmptyRoundsOnly) {
  // Sends in round 1 and round 3 only; round 2 is quiet.
  class Sparse : public NodeProgram {
   public:
    void step(RoundApi& api) override {
      if (api.round() == 1 || api.round() == 3) api.send(1, Word{});
      if (api.round() >= 3) finished_ = true;
    }
    bool done() const override { return finished_; }

   private:
    bool finished_ = false;
  };
  std::vector<std::unique_ptr<NodeProgram>> ps;
  ps.push_back(std::make_unique<Sparse>());
  Engine engine({.n = 1, .edge_capacity_words = 1});
  auto result = engine.run(ps, 10);
  EXPECT_EQ(result.rounds_used, 2);
  EXPECT_GE(result.rounds_executed, 3);
}

TEST(SubsetOf, SquarePartition) {
  EXPECT_EQ(subset_of(1, 16).index, 1);
  EXPECT_EQ(subset_of(16, 16).index, 4);
  // enumerate the partition {1..4},{5..8},{9..12},{13..16}
  for (NodeId v = 1; v <= 16; ++v) {
    int expect = (v - 1) / 4 + 1;
    EXPECT_EQ(subset_of(v, 16).index, expect);
  }
  EXPECT_EQ(subset_of(5, 16).index, 2);
  EXPECT_EQ(subset_of(5, 16).first, 5);
  EXPECT_EQ(subset_of(5, 16).last, 8);
}

TEST(SubsetOf, OutOfRangeBeyondSquare) {
  EXPECT_THROW(subset_of(10, 10), OutOfRange);  // floor(sqrt(10))^2 = 9
  EXPECT_NO_THROW(subset_of(9, 10));
}

TEST(SubsetOf, IsqrtFloor) {
  EXPECT_EQ(isqrt_floor(1), 1);
  EXPECT_EQ(isqrt_floor(3), 1);
  EXPECT_EQ(isqrt_floor(4), 2);
  EXPECT_EQ(isqrt_floor(99), 9);
  EXPECT_EQ(isqrt_floor(100), 10);
}

}  // namespace
}  // namespace clique
