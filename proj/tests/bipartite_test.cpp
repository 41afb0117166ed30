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

#include "clique/bipartite.hpp"

#include <numeric>
#include <random>

#include "gtest/gtest.h"

namespace clique {
namespace {

BipartiteMultigraph complete_bipartite(int k) {
  BipartiteMultigraph g{k, k, {}};
  for (int l = 0; l < k; ++l)
    for (int r = 0; r < k; ++r) g.add_edge(l, r);
  return g;
}

// Union of d random permutations: d-regular, parallel edges possible.
BipartiteMultigraph random_regular(int k, int d, std::mt19937_64& rng) {
  BipartiteMultigraph g{k, k, {}};
  std::vector<int> perm(k);
  for (int c = 0; c < d; ++c) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int l = 0; l < k; ++l) g.add_edge(l, perm[l]);
  }
  return g;
}

TEST(Koenig, OneRegularIsItsOwnColoring) {
  BipartiteMultigraph g{3, 3, {}};
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  g.add_edge(2, 0);
  auto c = koenig_color(g);
  EXPECT_EQ(c.num_colors, 1);
  auto check = verify_coloring(g, c);
  EXPECT_TRUE(check.valid);
  EXPECT_TRUE(check.all_classes_perfect);
}

TEST(Koenig, CompleteBipartiteThreeByThree) {
  auto g = complete_bipartite(3);
  auto c = koenig_color(g);
  EXPECT_EQ(c.num_colors, 3);
  auto check = verify_coloring(g, c);
  EXPECT_TRUE(check.valid);
  EXPECT_TRUE(check.all_classes_perfect);
}

TEST(Koenig, ParallelEdgesGetDistinctColors) {
  BipartiteMultigraph g{1, 1, {}};
  g.add_edge(0, 0);
  g.add_edge(0, 0);
  auto c = koenig_color(g);
  EXPECT_EQ(c.num_colors, 2);
  EXPECT_NE(c.color[0], c.color[1]);
}

TEST(Koenig, RejectsIrregularAndAsymmetric) {
  BipartiteMultigraph g{2, 2, {}};
  g.add_edge(0, 0);
  g.add_edge(0, 1);
  g.add_edge(1, 0);  // left degrees 2,1
  EXPECT_THROW(koenig_color(g), NotRegular);
  BipartiteMultigraph h{2, 3, {}};
  EXPECT_THROW(koenig_color(h), Asymmetric);
}

TEST(Greedy, Examples) {
  BipartiteMultigraph one_regular{3, 3, {}};
  one_regular.add_edge(0, 0);
  one_regular.add_edge(1, 1);
  one_regular.add_edge(2, 2);
  EXPECT_EQ(greedy_color(one_regular).num_colors, 1);

  auto k33 = complete_bipartite(3);
  auto c = greedy_color(k33);
  EXPECT_LE(c.num_colors, 5);  // 2d-1
  EXPECT_TRUE(verify_coloring(k33, c).valid);

  BipartiteMultigraph empty{4, 4, {}};
  EXPECT_EQ(greedy_color(empty).num_colors, 0);
}

TEST(Greedy, IrregularStarIsProperButImperfect) {
  BipartiteMultigraph g{3, 3, {}};
  g.add_edge(0, 0);
  g.add_edge(0, 1);
  g.add_edge(0, 2);
  auto c = greedy_color(g);
  auto check = verify_coloring(g, c);
  EXPECT_TRUE(check.valid);
  EXPECT_FALSE(check.all_classes_perfect);
}

TEST(Regularize, AlreadyRegularUnchanged) {
  auto g = complete_bipartite(3);
  auto r = regularize(g, 3);
  EXPECT_EQ(r.edges.size(), g.edges.size());
}

TEST(Regularize, SingleDeficientPairGetsOneDummy) {
  auto g = complete_bipartite(3);
  g.edges.pop_back();  // (2,2) missing: left 2 and right 2 at degree d-1
  auto r = regularize(g, 3);
  ASSERT_EQ(r.edges.size(), 9u);
  EXPECT_EQ(r.edges.back().left, 2);
  EXPECT_EQ(r.edges.back().right, 2);
  for (int x : r.left_degrees()) EXPECT_EQ(x, 3);
  for (int x : r.right_degrees()) EXPECT_EQ(x, 3);
}

TEST(Regularize, EmptyGraphGetsTwoKDummies) {
  const int k = 5;
  BipartiteMultigraph g{k, k, {}};
  auto r = regularize(g, 2);
  EXPECT_EQ(r.edges.size(), 2u * k);
  for (int x : r.left_degrees()) EXPECT_EQ(x, 2);
  for (int x : r.right_degrees()) EXPECT_EQ(x, 2);
}

TEST(Regularize, ThrowsWhenDegreeExceedsTarget) {
  auto g = complete_bipartite(3);
  EXPECT_THROW(regularize(g, 2), DegreeExceeded);
}

TEST(Verify, DetectsCollisionAtVertex) {
  auto g = complete_bipartite(2);  // edges (0,0),(0,1),(1,0),(1,1)
  EdgeColoring c;
  c.color = {1, 1, 2, 2};  // edges 0,1 share left vertex 0
  c.num_colors = 2;
  EXPECT_FALSE(verify_coloring(g, c).valid);
}

TEST(Regularize, DummiesNeverCollideWithRealEdgesUnderKoenig) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    int k = 2 + static_cast<int>(rng() % 8);
    int d = 1 + static_cast<int>(rng() % 6);
    // sub-d-regular graph obtained by dropping edges from a regular one
    auto g = random_regular(k, d, rng);
    BipartiteMultigraph sub{k, k, {}};
    for (const auto& e : g.edges) {
      if (rng() % 3 != 0) sub.add_edge(e.left, e.right);
    }
    size_t n_real = sub.edges.size();
    auto reg = regularize(sub, d);
    auto c = koenig_color(reg);
    auto check = verify_coloring(reg, c);
    EXPECT_TRUE(check.valid);
    EXPECT_TRUE(check.all_classes_perfect);
    // restricting a color class to real edges leaves a (possibly imperfect)
    // matching
    std::vector<std::vector<int>> class_left(c.num_colors + 1);
    for (size_t i = 0; i < n_real; ++i) {
      class_left[c.color[i]].push_back(reg.edges[i].left);
    }
    for (auto& v : class_left) {
      std::sort(v.begin(), v.end());
      EXPECT_TRUE(std::adjacent_find(v.begin(), v.end()) == v.end());
    }
  }
}

TEST(KoenigProperty, RandomRegularMultigraphs) {
  std::mt19937_64 rng(12345);
  for (int trial = 0; trial < 60; ++trial) {
    int k = 1 + static_cast<int>(rng() % 64);
    int d = 1 + static_cast<int>(rng() % 64);
    auto g = random_regular(k, d, rng);
    auto c = koenig_color(g);
    ASSERT_EQ(c.num_colors, d);
    auto check = verify_coloring(g, c);
    ASSERT_TRUE(check.valid);
    ASSERT_TRUE(check.all_classes_perfect);

    auto gc = greedy_color(g);
    ASSERT_LE(gc.num_colors, 2 * d - 1);
    ASSERT_TRUE(verify_coloring(g, gc).valid);
  }
}

TEST(KoenigProperty, Deterministic) {
  std::mt19937_64 rng(99);
  auto g = random_regular(16, 9, rng);
  auto c1 = koenig_color(g);
  auto c2 = koenig_color(g);
  EXPECT_EQ(c1, c2);
}

}  // namespace
}  // namespace clique
