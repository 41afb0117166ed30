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

// Regular bipartite multigraph decomposition into perfect matchings and the
// greedy fallback coloring. Every fixed communication pattern in the routing
// and sorting protocols is derived from one of these colorings, so both are
// strictly deterministic: identical input order yields identical colorings.

#ifndef CLIQUE_BIPARTITE_HPP
#define CLIQUE_BIPARTITE_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "clique/core.hpp"

namespace clique {

struct BEdge {
  int id = 0;
  int left = 0;   // in [0, left_size)
  int right = 0;  // in [0, right_size)
};

// Parallel edges allowed; edge ids unique and stable.
struct BipartiteMultigraph {
  int left_size = 0;
  int right_size = 0;
  std::vector<BEdge> edges;

  void add_edge(int left, int right) {
    edges.push_back({static_cast<int>(edges.size()), left, right});
  }

  std::vector<int> left_degrees() const {
    std::vector<int> d(left_size, 0);
    for (const auto& e : edges) d[e.left]++;
    return d;
  }
  std::vector<int> right_degrees() const {
    std::vector<int> d(right_size, 0);
    for (const auto& e : edges) d[e.right]++;
    return d;
  }
};

// color[edge_id] in [1, num_colors]
struct EdgeColoring {
  std::vector<int> color;
  int num_colors = 0;

  friend bool operator==(const EdgeColoring&, const EdgeColoring&) = default;
};

struct NotRegular : Error {
  using Error::Error;
};
struct Asymmetric : Error {
  using Error::Error;
};
struct DegreeExceeded : Error {
  using Error::Error;
};

struct ColoringCheck {
  bool valid = false;
  int num_colors = 0;
  bool all_classes_perfect = false;
};

inline ColoringCheck verify_coloring(const BipartiteMultigraph& g,
                                     const EdgeColoring& c) {
  ColoringCheck out;
  if (c.color.size() < g.edges.size()) return out;
  out.num_colors = c.num_colors;
  // properness: no two edges sharing a vertex have the same color
  std::vector<std::vector<int>> left_seen(g.left_size),
      right_seen(g.right_size);
  for (const auto& e : g.edges) {
    int col = c.color[e.id];
    if (col < 1 || col > c.num_colors) return out;
    left_seen[e.left].push_back(col);
    right_seen[e.right].push_back(col);
  }
  auto proper = [](std::vector<std::vector<int>>& seen) {
    for (auto& v : seen) {
      std::sort(v.begin(), v.end());
      if (std::adjacent_find(v.begin(), v.end()) != v.end()) return false;
    }
    return true;
  };
  if (!proper(left_seen) || !proper(right_seen)) return out;
  out.valid = true;

  if (g.left_size == g.right_size) {
    std::vector<int> class_size(c.num_colors + 1, 0);
    for (const auto& e : g.edges) class_size[c.color[e.id]]++;
    out.all_classes_perfect = c.num_colors > 0 || g.edges.empty();
    for (int col = 1; col <= c.num_colors; ++col) {
      if (class_size[col] != g.left_size) out.all_classes_perfect = false;
    }
    if (c.num_colors == 0) out.all_classes_perfect = g.edges.empty();
  }
  return out;
}

namespace detail {

// Hierholzer circuits over the sub-multigraph given by `ids` (all degrees
// even), alternately assigning edges to `half_a` / `half_b`. Walks start at
// the lowest-indexed vertex with remaining degree; ties in edge choice go to
// the lowest edge id, so the split is deterministic.
inline void euler_split(const BipartiteMultigraph& g, const std::vector<int>& ids,
                        std::vector<int>& half_a, std::vector<int>& half_b,
                        std::uint64_t* ops) {
  const int nl = g.left_size, nr = g.right_size;
  const int nv = nl + nr;
  std::vector<std::vector<std::pair<int, int>>> adj(nv);  // (edge id, other vertex)
  for (int id : ids) {
    const auto& e = g.edges[id];
    adj[e.left].push_back({id, nl + e.right});
    adj[nl + e.right].push_back({id, e.left});
  }
  std::vector<size_t> cursor(nv, 0);
  std::vector<char> used(g.edges.size(), 0);
  if (ops) *ops += 2 * ids.size();

  std::vector<int> circuit;
  for (int start = 0; start < nv; ++start) {
    while (cursor[start] < adj[start].size()) {
      if (used[adj[start][cursor[start]].first]) {
        cursor[start]++;
        continue;
      }
      // grow one closed circuit from `start` with iterative Hierholzer
      circuit.clear();
      std::vector<std::pair<int, int>> stack;  // (vertex, edge taken to get here)
      stack.push_back({start, -1});
      while (!stack.empty()) {
        int v = stack.back().first;
        while (cursor[v] < adj[v].size() && used[adj[v][cursor[v]].first]) {
          cursor[v]++;
        }
        if (cursor[v] == adj[v].size()) {
          if (stack.back().second >= 0) circuit.push_back(stack.back().second);
          stack.pop_back();
        } else {
          auto [eid, other] = adj[v][cursor[v]];
          used[eid] = 1;
          if (ops) *ops += 1;
          stack.push_back({other, eid});
        }
      }
      // circuit is a closed walk (reversed order is still a closed walk)
      for (size_t i = 0; i < circuit.size(); ++i) {
        (i % 2 == 0 ? half_a : half_b).push_back(circuit[i]);
      }
    }
  }
}

// Deterministic augmenting-path perfect matching on the sub-multigraph
// `ids` (d-regular, equal sides). Returns matched edge id per left vertex.
inline std::vector<int> perfect_matching(const BipartiteMultigraph& g,
                                         const std::vector<int>& ids,
                                         std::uint64_t* ops) {
  const int nl = g.left_size, nr = g.right_size;
  std::vector<std::vector<int>> adj(nl);  // edge ids per left vertex
  for (int id : ids) adj[g.edges[id].left].push_back(id);

  std::vector<int> match_right(nr, -1);  // edge id matched at right vertex
  std::vector<int> match_left(nl, -1);
  std::vector<char> visited(nr, 0);

  // Kuhn's algorithm, vertices and adjacency in index order.
  auto augment = [&](auto&& self, int u) -> bool {
    for (int id : adj[u]) {
      int r = g.edges[id].right;
      if (visited[r]) continue;
      visited[r] = 1;
      if (ops) *ops += 1;
      if (match_right[r] < 0 || self(self, g.edges[match_right[r]].left)) {
        match_right[r] = id;
        match_left[u] = id;
        return true;
      }
    }
    return false;
  };
  for (int u = 0; u < nl; ++u) {
    if (match_left[u] >= 0) continue;
    std::fill(visited.begin(), visited.end(), 0);
    if (!augment(augment, u)) {
      throw NotRegular("no perfect matching: graph is not regular");
    }
  }
  return match_left;
}

inline void koenig_rec(const BipartiteMultigraph& g, std::vector<int>& ids,
                       int d, int base, EdgeColoring& out, std::uint64_t* ops) {
  if (d == 0 || ids.empty()) return;
  if (d == 1) {
    for (int id : ids) out.color[id] = base;
    return;
  }
  if (d % 2 == 0) {
    std::vector<int> a, b;
    a.reserve(ids.size() / 2);
    b.reserve(ids.size() / 2);
    euler_split(g, ids, a, b, ops);
    koenig_rec(g, a, d / 2, base, out, ops);
    koenig_rec(g, b, d / 2, base + d / 2, out, ops);
    return;
  }
  // odd: peel one perfect matching, recurse on the (d-1)-regular remainder
  auto match_left = perfect_matching(g, ids, ops);
  std::vector<char> in_matching(g.edges.size(), 0);
  for (int id : match_left) {
    if (id >= 0) in_matching[id] = 1;
  }
  std::vector<int> rest;
  rest.reserve(ids.size());
  for (int id : ids) {
    if (in_matching[id]) {
      out.color[id] = base;
    } else {
      rest.push_back(id);
    }
  }
  koenig_rec(g, rest, d - 1, base + 1, out, ops);
}

}  // namespace detail

// Proper edge coloring of a d-regular bipartite multigraph with exactly d
// colors; every color class is a perfect matching. Recursive Euler split for
// even d, one matching extraction for odd d.
inline EdgeColoring koenig_color(const BipartiteMultigraph& g,
                                 std::uint64_t* ops = nullptr) {
  if (g.left_size != g.right_size) {
    throw Asymmetric("koenig_color requires equal side sizes");
  }
  auto ld = g.left_degrees();
  auto rd = g.right_degrees();
  int d = ld.empty() ? 0 : ld[0];
  for (int x : ld) {
    if (x != d) throw NotRegular("left degrees differ");
  }
  for (int x : rd) {
    if (x != d) throw NotRegular("right degrees differ");
  }
  EdgeColoring out;
  out.color.assign(g.edges.size(), 0);
  out.num_colors = d;
  std::vector<int> ids(g.edges.size());
  std::iota(ids.begin(), ids.end(), 0);
  detail::koenig_rec(g, ids, d, 1, out, ops);
  return out;
}

// Greedy line coloring in edge id order: at most 2d-1 colors on any graph of
// maximum degree d; color classes are matchings but need not be perfect.
inline EdgeColoring greedy_color(const BipartiteMultigraph& g,
                                 std::uint64_t* ops = nullptr) {
  EdgeColoring out;
  out.color.assign(g.edges.size(), 0);
  std::vector<std::vector<char>> left_used(g.left_size),
      right_used(g.right_size);
  for (const auto& e : g.edges) {
    auto& lu = left_used[e.left];
    auto& ru = right_used[e.right];
    int c = 1;
    for (;; ++c) {
      bool free_l = c > static_cast<int>(lu.size()) || !lu[c - 1];
      bool free_r = c > static_cast<int>(ru.size()) || !ru[c - 1];
      if (ops) *ops += 1;
      if (free_l && free_r) break;
    }
    if (c > static_cast<int>(lu.size())) lu.resize(c, 0);
    if (c > static_cast<int>(ru.size())) ru.resize(c, 0);
    lu[c - 1] = 1;
    ru[c - 1] = 1;
    out.color[e.id] = c;
    out.num_colors = std::max(out.num_colors, c);
  }
  return out;
}

// d-regular supergraph: dummy edges pair the lowest-index deficient left
// vertex with the lowest-index deficient right vertex. Added edges carry ids
// >= g.edges.size(), which is how callers tell dummies from real edges.
inline BipartiteMultigraph regularize(const BipartiteMultigraph& g, int d) {
  if (g.left_size != g.right_size) {
    throw Asymmetric("regularize requires equal side sizes");
  }
  auto ld = g.left_degrees();
  auto rd = g.right_degrees();
  for (int x : ld) {
    if (x > d) throw DegreeExceeded("left degree exceeds target");
  }
  for (int x : rd) {
    if (x > d) throw DegreeExceeded("right degree exceeds target");
  }
  BipartiteMultigraph out = g;
  int l = 0, r = 0;
  while (true) {
    while (l < out.left_size && ld[l] == d) ++l;
    while (r < out.right_size && rd[r] == d) ++r;
    if (l == out.left_size || r == out.right_size) break;
    out.add_edge(l, r);
    ld[l]++;
    rd[r]++;
  }
  return out;
}

}  // namespace clique

#endif  // CLIQUE_BIPARTITE_HPP
