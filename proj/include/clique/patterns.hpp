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

// Fixed communication patterns shared by the routing and sorting protocols.
//
// The central one is the two-round exchange within a node group W: a
// bipartite multigraph over W-positions with one edge per word is colored
// with Koenig's theorem, the word of color c travels via relay node
// ((c-1) mod n)+1, and relays forward blindly using the hop mechanism. All
// participants derive the identical pattern from commonly known counts, so
// no coordination messages are needed beyond what the protocols announce.

#ifndef CLIQUE_PATTERNS_HPP
#define CLIQUE_PATTERNS_HPP

#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "clique/bipartite.hpp"
#include "clique/core.hpp"
#include "clique/proto.hpp"

namespace clique {

// counts[a][b] = number of words from group position a to group position b
using CountsMatrix = std::vector<std::vector<int>>;

inline BipartiteMultigraph pattern_graph(const CountsMatrix& counts) {
  const int w = static_cast<int>(counts.size());
  BipartiteMultigraph g{w, w, {}};
  for (int a = 0; a < w; ++a) {
    for (int b = 0; b < w; ++b) {
      for (int k = 0; k < counts[a][b]; ++k) g.add_edge(a, b);
    }
  }
  return g;
}

inline int pattern_quota(const CountsMatrix& counts) {
  const int w = static_cast<int>(counts.size());
  int quota = 0;
  for (int a = 0; a < w; ++a) {
    int row = 0;
    quota = std::max(quota, std::accumulate(counts[a].begin(), counts[a].end(), row));
  }
  for (int b = 0; b < w; ++b) {
    int col = 0;
    for (int a = 0; a < w; ++a) col += counts[a][b];
    quota = std::max(quota, col);
  }
  return quota;
}

inline std::string counts_key(const std::string& tag, const CountsMatrix& counts) {
  std::ostringstream os;
  os << tag << "|" << counts.size();
  for (const auto& row : counts) {
    for (int c : row) os << "," << c;
  }
  return os.str();
}

namespace detail {

inline const PatternCache::Entry& colored_pattern(LaneCtx ctx,
                                                  const std::string& tag,
                                                  const CountsMatrix& counts,
                                                  int quota) {
  auto key = counts_key(tag, counts);
  const auto& entry = ctx.shared().cache.get(
      key, ctx.shared().strict_patterns, [&] {
        PatternCache::Entry e;
        auto g = regularize(pattern_graph(counts), quota);
        e.coloring = koenig_color(g, &e.ops);
        return e;
      });
  ctx.charge(entry.ops);  // every node is charged as if it computed its copy
  return entry;
}

}  // namespace detail

// Two-round delivery of `items[b]` (words for the b-th member of W) under
// commonly known `counts`. Members call with their 0-based position; all
// other nodes pass pos < 0 and merely keep the round alignment (relaying is
// handled by the runtime). Returns the words delivered to this node.
//
// Word c of the pattern travels via relay ((c-1) mod n)+1, so edges touched
// in round one have their source in W and edges in round two have their
// destination in W. Per-edge load is ceil(quota / n) words.
// Send half of the two-round pattern: queues this round's relay-bound words.
// Deliveries arrive two rounds later; callers that interleave other traffic
// do their own ticking, everyone else uses route_known_words below.
inline void route_known_send(LaneCtx ctx, const std::vector<NodeId>& W,
                             int pos, std::vector<std::vector<Word>> items,
                             const CountsMatrix& counts,
                             const std::string& tag) {
  const int w = static_cast<int>(W.size());
  const int quota = pattern_quota(counts);
  if (pos < 0 || quota == 0) return;

  const auto& entry = detail::colored_pattern(ctx, tag, counts, quota);
  // real edges appear in (a, b, copy) lexicographic order; walk them and
  // pick out position `pos` (regularization fillers come after and are
  // never transmitted)
  std::vector<size_t> cursor(w, 0);
  int edge_id = 0;
  for (int a = 0; a < w; ++a) {
    for (int b = 0; b < w; ++b) {
      for (int k = 0; k < counts[a][b]; ++k, ++edge_id) {
        if (a != pos) continue;
        Word word = items[b][cursor[b]++];
        word.hop = true;
        word.fdst = W[b];
        int color = entry.coloring.color[edge_id];
        NodeId relay = ((color - 1) % ctx.n()) + 1;
        ctx.send(relay, word);
      }
    }
  }
  for (int b = 0; b < w; ++b) {
    if (cursor[b] != items[b].size()) {
      throw ProtocolAssertion("route_known_send: items disagree with counts");
    }
  }
  ctx.charge(edge_id);
}

inline Task<std::vector<Word>> route_known_words(
    LaneCtx ctx, std::vector<NodeId> W, int pos,
    std::vector<std::vector<Word>> items, CountsMatrix counts,
    std::string tag) {
  route_known_send(ctx, W, pos, std::move(items), counts, tag);
  co_await ctx.tick();  // relays forward during this round
  co_await ctx.tick();  // deliveries readable now
  std::vector<Word> got;
  for (auto& [src, word] : ctx.inbox()) got.push_back(word);
  co_return got;
}

// Uniform announcement: every member sends exactly `per_pair` words to every
// member (including itself). The fixed counts make the pattern common
// knowledge a priori.
inline Task<std::vector<Word>> announce_within(
    LaneCtx ctx, std::vector<NodeId> W, int pos,
    std::vector<std::vector<Word>> items, int per_pair, std::string tag) {
  const int w = static_cast<int>(W.size());
  CountsMatrix counts(w, std::vector<int>(w, per_pair));
  return route_known_words(ctx, std::move(W), pos, std::move(items),
                           std::move(counts), std::move(tag));
}

struct RRArrival {
  int sender_pos = 0;  // 0-based position in W
  int deal_index = 0;  // 0-based index in the sender's sorted sequence
  Word word;
};

// Two-round round-robin redistribution within W: the sender's k-th word
// (0-based, in an order all of W can reconstruct) lands at member
// (pos + k + 1) mod |W|. Content-oblivious: word k rides via relay
// (k mod n)+1 and the final member is precomputed, so intermediate nodes
// need no knowledge. Per-edge load is ceil(max_items / n).
inline Task<std::vector<RRArrival>> round_robin_within(
    LaneCtx ctx, std::vector<NodeId> W, int pos, std::vector<Word> items) {
  const int w = static_cast<int>(W.size());
  if (pos >= 0) {
    for (size_t k = 0; k < items.size(); ++k) {
      Word word = items[k];
      word.hop = true;
      word.fdst = W[(pos + 1 + static_cast<int>(k)) % w];
      word.aux = {static_cast<std::uint32_t>(pos), static_cast<std::uint32_t>(k)};
      NodeId relay = static_cast<NodeId>(k % ctx.n()) + 1;
      ctx.send(relay, word);
    }
    ctx.charge(items.size());
  }
  co_await ctx.tick();
  co_await ctx.tick();
  std::vector<RRArrival> got;
  for (auto& [src, word] : ctx.inbox()) {
    got.push_back({static_cast<int>(word.aux[0]),
                   static_cast<int>(word.aux[1]), word});
  }
  co_return got;
}

// Share of the t-th receiver (0-based) when `total` units laid out in
// canonical order are dealt cyclically over `parts` receivers: unit u goes to
// receiver u mod parts.
inline int cyclic_share(long long total, int parts, int t) {
  return static_cast<int>(total / parts + (t < total % parts ? 1 : 0));
}

// The receiver of unit `u` (0-based) under the same cyclic layout.
inline int cyclic_receiver(long long u, int parts) {
  return static_cast<int>(u % parts);
}

}  // namespace clique

#endif  // CLIQUE_PATTERNS_HPP
