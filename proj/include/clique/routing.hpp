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

// Deterministic constant-round routing: every node is source and destination
// of exactly n messages and all must be delivered. The two-round primitive
// delivers a bulk with commonly known counts, the four-round one bootstraps
// the counts inside a small group, and the full pipeline balances traffic
// between and within groups of ~sqrt(n) nodes so that no edge ever carries
// more than a word (squares) or two words (otherwise) per round.

#ifndef CLIQUE_ROUTING_HPP
#define CLIQUE_ROUTING_HPP

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "clique/core.hpp"
#include "clique/patterns.hpp"
#include "clique/proto.hpp"

namespace clique {

struct SubsetTooLarge : Error {
  using Error::Error;
};

// One message of the information distribution task. (src, index, dst) is the
// identity; dummy messages pad light instances and are dropped on delivery.
struct Message {
  NodeId src = 0;
  int index = 0;
  NodeId dst = 0;
  std::uint64_t payload = 0;
  bool dummy = false;

  friend auto operator<=>(const Message&, const Message&) = default;
};

inline Word to_word(const Message& m) {
  Word w;
  w.role = m.dummy ? WordRole::dummy : WordRole::payload;
  w.value = m.payload;
  w.meta = {static_cast<std::uint32_t>(m.src),
            static_cast<std::uint32_t>(m.index),
            static_cast<std::uint32_t>(m.dst)};
  return w;
}

inline Message to_message(const Word& w) {
  return Message{static_cast<NodeId>(w.meta[0]), static_cast<int>(w.meta[1]),
                 static_cast<NodeId>(w.meta[2]), w.value,
                 w.role == WordRole::dummy};
}

inline NodeId msg_dst(const Word& w) { return static_cast<NodeId>(w.meta[2]); }

// All messages grouped by source. A valid instance has every node sending
// and receiving exactly n after dummy padding.
struct RoutingInstance {
  int n = 0;
  std::vector<std::vector<Message>> by_source;  // [v-1]

  static RoutingInstance from_messages(int n, std::vector<Message> msgs) {
    RoutingInstance inst;
    inst.n = n;
    inst.by_source.assign(n, {});
    for (auto& m : msgs) {
      if (m.src < 1 || m.src > n || m.dst < 1 || m.dst > n) {
        throw InvalidInstance("message endpoint outside [1, n]");
      }
      inst.by_source[m.src - 1].push_back(m);
    }
    return inst;
  }

  std::vector<int> receive_counts() const {
    std::vector<int> rc(n, 0);
    for (const auto& per : by_source) {
      for (const auto& m : per) rc[m.dst - 1]++;
    }
    return rc;
  }

  // Pads every node to exactly n sent messages, spreading dummy destinations
  // round-robin over the nodes that are short on the receive side.
  void pad() {
    auto rc = receive_counts();
    for (NodeId v = 1; v <= n; ++v) {
      if (static_cast<int>(by_source[v - 1].size()) > n) {
        throw InvalidInstance("node " + std::to_string(v) +
                              " sends more than n messages");
      }
    }
    for (int k = 0; k < n; ++k) {
      if (rc[k] > n) {
        throw InvalidInstance("node " + std::to_string(k + 1) +
                              " receives more than n messages");
      }
    }
    NodeId cursor = 1;
    for (NodeId v = 1; v <= n; ++v) {
      auto& mine = by_source[v - 1];
      int next_index = n + 1;  // dummy indices continue past real ones
      while (static_cast<int>(mine.size()) < n) {
        while (rc[cursor - 1] >= n) {
          cursor = cursor % n + 1;
        }
        mine.push_back(Message{v, next_index++, cursor, 0, true});
        rc[cursor - 1]++;
      }
    }
    for (int k = 0; k < n; ++k) {
      if (rc[k] != n) {
        throw InvalidInstance("instance cannot be padded to exact counts");
      }
    }
  }
};

struct DeliveryReport {
  int rounds_used = 0;
  int max_load = 0;
  std::vector<std::vector<Message>> received;  // [v-1], dummies removed
  std::vector<std::uint64_t> steps;
  bool pattern_checked = false;
};

// Node groups: contiguous id blocks of size floor(sqrt n) or one more, the
// larger groups first. For square n this is exactly the sqrt(n)-partition.
struct Grouping {
  int n = 0;
  std::vector<NodeId> start;  // size g+1, start[g] = n+1

  static Grouping make(int n) {
    const int s = isqrt_floor(n);
    const int r = n - s * s;
    int g, big;  // big groups have size s+1
    if (r == 0) {
      g = s;
      big = 0;
    } else if (r <= s) {
      g = s;
      big = r;
    } else {
      g = s + 1;
      big = r - s;
    }
    Grouping grp;
    grp.n = n;
    grp.start.resize(g + 1);
    NodeId at = 1;
    for (int j = 0; j < g; ++j) {
      grp.start[j] = at;
      at += s + (j < big ? 1 : 0);
    }
    grp.start[g] = at;
    if (at != n + 1) throw ProtocolAssertion("grouping does not cover nodes");
    return grp;
  }

  int groups() const { return static_cast<int>(start.size()) - 1; }
  int size(int j) const { return start[j + 1] - start[j]; }
  int max_size() const {
    int b = 0;
    for (int j = 0; j < groups(); ++j) b = std::max(b, size(j));
    return b;
  }
  int group_of(NodeId v) const {
    int g = groups();
    for (int j = 0; j < g; ++j) {
      if (v < start[j + 1]) return j;
    }
    return g - 1;
  }
  int pos_of(NodeId v) const { return v - start[group_of(v)]; }
  std::vector<NodeId> members(int j) const {
    std::vector<NodeId> m(size(j));
    std::iota(m.begin(), m.end(), start[j]);
    return m;
  }
};

namespace routing_detail {

inline void sort_canonical(std::vector<Word>& words) {
  std::sort(words.begin(), words.end(), [](const Word& a, const Word& b) {
    return std::tie(a.meta[0], a.meta[2], a.meta[1]) <
           std::tie(b.meta[0], b.meta[2], b.meta[1]);
  });
}

// holder-local order used by every pattern: (dst, index, src)
inline void sort_by_dst(std::vector<Word>& words) {
  std::sort(words.begin(), words.end(), [](const Word& a, const Word& b) {
    return std::tie(a.meta[2], a.meta[1], a.meta[0]) <
           std::tie(b.meta[2], b.meta[1], b.meta[0]);
  });
}

// (destination group, dst, index, src)
inline void sort_by_group(std::vector<Word>& words, const Grouping& grp) {
  std::sort(words.begin(), words.end(), [&](const Word& a, const Word& b) {
    int ga = grp.group_of(msg_dst(a)), gb = grp.group_of(msg_dst(b));
    return std::tie(ga, a.meta[2], a.meta[1], a.meta[0]) <
           std::tie(gb, b.meta[2], b.meta[1], b.meta[0]);
  });
}

// Alg2 step 1: per-group destination totals, aggregated inside each group
// and broadcast. Two rounds; afterwards every node knows the full g x g
// matrix of subset-to-subset demands.
inline Task<std::vector<std::vector<long long>>> announce_group_totals(
    LaneCtx ctx, Grouping grp, std::vector<long long> my_counts) {
  const int g = grp.groups();
  const int myg = grp.group_of(ctx.self());
  const int w = grp.size(myg);
  auto members = grp.members(myg);

  for (int j = 0; j < g; ++j) {
    Word word;
    word.role = WordRole::count;
    word.value = static_cast<std::uint64_t>(my_counts[j]);
    word.meta = {static_cast<std::uint32_t>(j), 0, 0};
    ctx.send(members[j % w], word);
  }
  co_await ctx.tick();

  // aggregate my assigned target groups and broadcast each total to all
  const int mypos = grp.pos_of(ctx.self());
  std::map<int, long long> totals;
  for (auto& [src, word] : ctx.inbox()) {
    totals[static_cast<int>(word.meta[0])] += static_cast<long long>(word.value);
  }
  for (int j = mypos; j < g; j += w) {
    Word word;
    word.role = WordRole::count;
    word.value = static_cast<std::uint64_t>(totals.count(j) ? totals[j] : 0);
    word.meta = {static_cast<std::uint32_t>(myg), static_cast<std::uint32_t>(j),
                 0};
    for (NodeId u = 1; u <= ctx.n(); ++u) ctx.send(u, word);
  }
  co_await ctx.tick();

  std::vector<std::vector<long long>> T(g, std::vector<long long>(g, 0));
  for (auto& [src, word] : ctx.inbox()) {
    T[word.meta[0]][word.meta[1]] = static_cast<long long>(word.value);
  }
  ctx.charge(static_cast<std::uint64_t>(g) * g + my_counts.size());
  co_return T;
}

// Count announcement within the group: every member learns every member's
// per-target counts (g values each). Two rounds via the uniform pattern.
inline Task<std::vector<std::vector<int>>> announce_member_counts(
    LaneCtx ctx, Grouping grp, std::vector<int> my_counts, std::string tag) {
  const int myg = grp.group_of(ctx.self());
  const int w = grp.size(myg);
  const int g = static_cast<int>(my_counts.size());
  auto members = grp.members(myg);
  const int mypos = grp.pos_of(ctx.self());

  std::vector<std::vector<Word>> items(w);
  for (int b = 0; b < w; ++b) {
    for (int j = 0; j < g; ++j) {
      Word word;
      word.role = WordRole::count;
      word.value = static_cast<std::uint64_t>(my_counts[j]);
      word.meta = {static_cast<std::uint32_t>(mypos),
                   static_cast<std::uint32_t>(j), 0};
      items[b].push_back(word);
    }
  }
  auto got = co_await announce_within(ctx, members, mypos, std::move(items), g,
                                      tag + "|g" + std::to_string(myg));
  std::vector<std::vector<int>> cmat(w, std::vector<int>(g, 0));
  for (auto& word : got) {
    cmat[word.meta[0]][word.meta[1]] = static_cast<int>(word.value);
  }
  co_return cmat;
}

struct IdtParams {
  int n = 0;
  Grouping grp;
  int stop_stage = 4;  // 1: after inter-group balance, 2: after intra-group
                       // balance, 3: after cross delivery, 4: full
};

// marks words that bypass the round-robin deal (already at their group)
constexpr std::uint32_t kResidualTag = 0xFFFFFFFFu;

// ------------------------------------------------------------------------
// The 16-round pipeline (Alg. 1 steps 2-5 with Alg. 2 expanding step 2).
// Round budget: 2 + 2 + 2 + 1  (inter-group balance)
//             + 2 + 2          (intra-group balance)
//             + 1              (cross delivery)
//             + 2 + 2          (final delivery inside the destination group)
// ------------------------------------------------------------------------
inline Task<std::vector<Word>> idt_protocol(LaneCtx ctx, IdtParams params,
                                            std::vector<Word> holdings) {
  const Grouping& grp = params.grp;
  const int n = params.n;
  const int g = grp.groups();
  const int B = grp.max_size();
  const int myg = grp.group_of(ctx.self());
  const int mypos = grp.pos_of(ctx.self());
  const int w = grp.size(myg);
  auto members = grp.members(myg);

  // ---- Alg2 step 1: announce subset totals (2 rounds) ----
  std::vector<long long> tot(g, 0);
  for (auto& word : holdings) tot[grp.group_of(msg_dst(word))]++;
  auto T = co_await announce_group_totals(ctx, grp, tot);
  {
    std::vector<std::uint64_t> blob;
    for (auto& row : T)
      for (auto v : row) blob.push_back(static_cast<std::uint64_t>(v));
    ctx.audit("idt.totals", blob);
  }

  // ---- Alg2 step 2 (local): color the inter-group demand graph ----
  // Vertices are groups; one edge per message; regularized to the demand
  // maximum (n * max group size for a balanced instance, larger when callers
  // route skewed bulks such as the sorting bucket shipment). Color c routes
  // its messages to group (c-1) mod g.
  long long D = static_cast<long long>(n) * B;
  for (int i = 0; i < g; ++i) {
    long long row = 0, col = 0;
    for (int j = 0; j < g; ++j) {
      row += T[i][j];
      col += T[j][i];
    }
    D = std::max({D, row, col});
  }
  CountsMatrix Tc(g, std::vector<int>(g, 0));
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) Tc[i][j] = static_cast<int>(T[i][j]);
  const auto& inter = detail::colored_pattern(ctx, "idt.inter", Tc,
                                              static_cast<int>(D));
  // colors of my group's (myg, j) copies, one pass over the edge order
  std::vector<std::vector<int>> pair_colors(g);
  {
    int edge_id = 0;
    for (int a = 0; a < g; ++a) {
      for (int b = 0; b < g; ++b) {
        int cnt = Tc[a][b];
        if (a == myg) {
          for (int k = 0; k < cnt; ++k) {
            pair_colors[b].push_back(inter.coloring.color[edge_id + k]);
          }
        }
        edge_id += cnt;
      }
    }
  }

  // ---- Alg2 step 3: announce member counts within the group (2 rounds) ----
  std::vector<int> my_counts(g, 0);
  for (auto& word : holdings) my_counts[grp.group_of(msg_dst(word))]++;
  auto cmat = co_await announce_member_counts(ctx, grp, my_counts, "idt.cmat");

  // ---- Alg2 step 2 completed: per-message colors and routed targets ----
  // The (i, j) copies are ordered by (member position, local (dst, index))
  // so my block starts at the prefix of the earlier members' counts.
  sort_by_group(holdings, grp);
  std::vector<int> routed_target(holdings.size());
  std::vector<std::vector<int>> rho(w, std::vector<int>(g, 0));  // member x target
  {
    ctx.charge(holdings.size());
    // routed counts rho for every member (common knowledge)
    std::vector<int> cursor(g, 0);
    for (int p = 0; p < w; ++p) {
      for (int j = 0; j < g; ++j) {
        for (int k = 0; k < cmat[p][j]; ++k) {
          int color = pair_colors[j][cursor[j]++];
          rho[p][(color - 1) % g]++;
        }
      }
    }
    // my own messages in the same walk order
    std::vector<int> cur2(g, 0);
    for (int p = 0; p < mypos; ++p) {
      for (int j = 0; j < g; ++j) cur2[j] += cmat[p][j];
    }
    size_t h = 0;
    for (int j = 0; j < g && h < holdings.size(); ++j) {
      for (int k = 0; k < my_counts[j]; ++k, ++h) {
        int color = pair_colors[j][cur2[j] + k];
        routed_target[h] = (color - 1) % g;
      }
    }
  }

  // ---- Alg2 step 4 (local): intra-group coloring of degree <= n ----
  // Members x routed-target slots, one edge per message; color t moves its
  // edge's message to member (t-1) mod w.
  const int hw = std::max(w, g);
  CountsMatrix rho_c(hw, std::vector<int>(hw, 0));
  for (int p = 0; p < w; ++p)
    for (int x = 0; x < g; ++x) rho_c[p][x] = rho[p][x];
  int h2_quota = 0;
  for (int p = 0; p < hw; ++p) {
    int row = std::accumulate(rho_c[p].begin(), rho_c[p].end(), 0);
    h2_quota = std::max(h2_quota, row);
  }
  for (int x = 0; x < hw; ++x) {
    int col = 0;
    for (int p = 0; p < hw; ++p) col += rho_c[p][x];
    h2_quota = std::max(h2_quota, col);
  }
  const auto& intra = detail::colored_pattern(
      ctx, "idt.intra|g" + std::to_string(myg), rho_c, h2_quota);

  // destination member of each (member, target) copy under the coloring,
  // and hmat[p][x]: messages for target x held by member p after the exchange
  std::vector<std::vector<std::vector<int>>> h2_member(
      w, std::vector<std::vector<int>>(g));
  std::vector<std::vector<int>> hmat(w, std::vector<int>(g, 0));
  {
    int edge_id = 0;
    for (int a = 0; a < hw; ++a) {
      for (int b = 0; b < hw; ++b) {
        int cnt = rho_c[a][b];
        for (int k = 0; k < cnt; ++k) {
          int color = intra.coloring.color[edge_id + k];
          if (a < w && b < g) {
            h2_member[a][b].push_back((color - 1) % w);
            hmat[(color - 1) % w][b]++;
          }
        }
        edge_id += cnt;
      }
    }
    ctx.charge(static_cast<std::uint64_t>(edge_id));
  }

  // ---- Alg2 step 5: realize the intra-group exchange (2 rounds) ----
  {
    // group my messages by routed target, in local canonical order
    std::vector<std::vector<Word>> by_target(g);
    for (size_t h = 0; h < holdings.size(); ++h) {
      by_target[routed_target[h]].push_back(holdings[h]);
    }
    std::vector<std::vector<Word>> items(w);
    CountsMatrix counts(w, std::vector<int>(w, 0));
    // counts must cover the whole group (common), my items only mine
    for (int p = 0; p < w; ++p) {
      for (int x = 0; x < g; ++x) {
        for (int k = 0; k < rho[p][x]; ++k) counts[p][h2_member[p][x][k]]++;
      }
    }
    for (int x = 0; x < g; ++x) {
      for (int k = 0; k < rho[mypos][x]; ++k) {
        Word word = by_target[x][k];
        word.aux = {static_cast<std::uint32_t>(x), 0};  // routed target rides along
        items[h2_member[mypos][x][k]].push_back(word);
      }
    }
    holdings = co_await route_known_words(
        ctx, members, mypos, std::move(items), std::move(counts),
        "idt.s5|g" + std::to_string(myg));
  }

  // ---- Alg2 step 6: inter-group exchange (1 round) ----
  // I now hold hmat[mypos][x] messages routed to group x; the whole group's
  // stream per target is dealt cyclically over the target's members.
  {
    std::vector<std::vector<Word>> by_target(g);
    for (auto& word : holdings) {
      by_target[word.aux[0]].push_back(word);
    }
    for (int x = 0; x < g; ++x) {
      sort_by_dst(by_target[x]);
      if (static_cast<int>(by_target[x].size()) != hmat[mypos][x]) {
        throw ProtocolAssertion("intra-group exchange holdings mismatch");
      }
      long long before = 0;
      for (int p = 0; p < mypos; ++p) before += hmat[p][x];
      auto tmembers = grp.members(x);
      const int tw = grp.size(x);
      for (size_t k = 0; k < by_target[x].size(); ++k) {
        Word word = by_target[x][k];
        word.aux = {0, 0};
        ctx.send(tmembers[(before + static_cast<long long>(k)) % tw], word);
      }
    }
    co_await ctx.tick();
    holdings.clear();
    for (auto& [src, word] : ctx.inbox()) holdings.push_back(word);
  }

  if (params.stop_stage <= 1) co_return holdings;

  // ---- Alg1 step 3: balance within the group (2 + 2 rounds) ----
  {
    std::vector<int> mine(g, 0);
    for (auto& word : holdings) mine[grp.group_of(msg_dst(word))]++;
    auto amat = co_await announce_member_counts(ctx, grp, mine, "idt.amat");

    // stream per final group j dealt cyclically over members
    std::vector<long long> A(g, 0);
    for (int p = 0; p < w; ++p)
      for (int j = 0; j < g; ++j) A[j] += amat[p][j];

    sort_by_group(holdings, grp);
    std::vector<std::vector<Word>> items(w);
    CountsMatrix counts(w, std::vector<int>(w, 0));
    for (int j = 0; j < g; ++j) {
      long long at = 0;
      for (int p = 0; p < w; ++p) {
        for (int k = 0; k < amat[p][j]; ++k, ++at) {
          counts[p][static_cast<int>(at % w)]++;
        }
      }
    }
    {
      std::vector<long long> my_start(g, 0);
      for (int j = 0; j < g; ++j) {
        for (int p = 0; p < mypos; ++p) my_start[j] += amat[p][j];
      }
      size_t h = 0;
      for (int j = 0; j < g; ++j) {
        int cnt = mine[j];
        for (int k = 0; k < cnt; ++k, ++h) {
          items[static_cast<int>((my_start[j] + k) % w)].push_back(holdings[h]);
        }
      }
    }
    holdings = co_await route_known_words(
        ctx, members, mypos, std::move(items), std::move(counts),
        "idt.s3|g" + std::to_string(myg));
  }

  if (params.stop_stage <= 2) co_return holdings;

  // ---- Alg1 step 4: cross delivery (1 round) ----
  // Every member holds ~|W'| messages per destination group; each group's
  // per-target stream is dealt cyclically over the target members, at most
  // ceil over the member share words per edge.
  {
    std::vector<int> mine(g, 0);
    for (auto& word : holdings) mine[grp.group_of(msg_dst(word))]++;
    // counts of all members are needed for exact streams; they are common
    // knowledge from the pattern of step 3 but simplest to recompute by one
    // more in-group announcement would cost rounds, so the stream is dealt
    // per member: my block position uses my own counts only.
    sort_by_group(holdings, grp);
    size_t h = 0;
    for (int j = 0; j < g; ++j) {
      auto tmembers = grp.members(j);
      const int tw = grp.size(j);
      for (int k = 0; k < mine[j]; ++k, ++h) {
        Word word = holdings[h];
        ctx.send(tmembers[(mypos + k) % tw], word);
      }
    }
    co_await ctx.tick();
    holdings.clear();
    for (auto& [src, word] : ctx.inbox()) holdings.push_back(word);
  }

  if (params.stop_stage <= 3) co_return holdings;

  // ---- Alg1 step 5: deliver inside the destination group (2 + 2 rounds) ----
  {
    std::vector<int> mine(w, 0);
    for (auto& word : holdings) mine[grp.pos_of(msg_dst(word))]++;
    // announce per-node counts within the group
    std::vector<std::vector<Word>> items(w);
    for (int b = 0; b < w; ++b) {
      for (int u = 0; u < w; ++u) {
        Word word;
        word.role = WordRole::count;
        word.value = static_cast<std::uint64_t>(mine[u]);
        word.meta = {static_cast<std::uint32_t>(mypos),
                     static_cast<std::uint32_t>(u), 0};
        items[b].push_back(word);
      }
    }
    auto got = co_await announce_within(ctx, members, mypos, std::move(items),
                                        w, "idt.s5cnt|g" + std::to_string(myg));
    CountsMatrix counts(w, std::vector<int>(w, 0));
    for (auto& word : got) {
      counts[word.meta[0]][word.meta[1]] = static_cast<int>(word.value);
    }
    sort_by_dst(holdings);
    std::vector<std::vector<Word>> payload(w);
    for (auto& word : holdings) {
      payload[grp.pos_of(msg_dst(word))].push_back(word);
    }
    holdings = co_await route_known_words(
        ctx, members, mypos, std::move(payload), std::move(counts),
        "idt.s5pay|g" + std::to_string(myg));
  }

  co_return holdings;
}

// ------------------------------------------------------------------------
// The 12-round variant (square n): messages are ordered once per node by
// bucketsort, dealt round-robin inside the group (2 rounds, oblivious), and
// the inter-group balance moves whole bundles of n messages whose coloring
// graph has only O(n) edges. Residual messages (fewer than n for a group
// pair) go directly to their destination group on the group-pair edges.
// Round budget: 2 (counts) + 2 (deal, totals broadcast overlapped)
//             + 1 (bundles) + 2 (second deal, residuals overlapped)
//             + 1 (cross delivery) + 4 (final delivery) = 12.
// ------------------------------------------------------------------------
inline Task<std::vector<Word>> idt_fast_protocol(LaneCtx ctx, IdtParams params,
                                                 std::vector<Word> holdings) {
  const Grouping& grp = params.grp;
  const int n = params.n;
  const int g = grp.groups();
  const int myg = grp.group_of(ctx.self());
  const int mypos = grp.pos_of(ctx.self());
  const int w = grp.size(myg);
  auto members = grp.members(myg);

  // r1-2: member counts within the group
  std::vector<int> my_counts(g, 0);
  for (auto& word : holdings) my_counts[grp.group_of(msg_dst(word))]++;
  auto cmat = co_await announce_member_counts(ctx, grp, my_counts, "v12.cmat");

  // r3: broadcast my share of the group's totals; deal my messages
  // round-robin over the group in (destination group, dst, index) order
  std::vector<long long> T_row(g, 0);
  for (int p = 0; p < w; ++p)
    for (int j = 0; j < g; ++j) T_row[j] += cmat[p][j];
  for (int j = mypos; j < g; j += w) {
    Word word;
    word.role = WordRole::count;
    word.value = static_cast<std::uint64_t>(T_row[j]);
    word.meta = {static_cast<std::uint32_t>(myg), static_cast<std::uint32_t>(j),
                 0};
    for (NodeId u = 1; u <= ctx.n(); ++u) ctx.send(u, word);
  }
  sort_by_group(holdings, grp);
  ctx.charge(holdings.size());
  for (size_t k = 0; k < holdings.size(); ++k) {
    Word word = holdings[k];
    word.hop = true;
    word.fdst = members[(mypos + 1 + static_cast<int>(k)) % w];
    word.aux = {static_cast<std::uint32_t>(mypos), static_cast<std::uint32_t>(k)};
    ctx.send(static_cast<NodeId>(k % ctx.n()) + 1, word);
  }
  co_await ctx.tick();

  // r4: collect the totals (the deal is being forwarded underneath)
  std::vector<std::vector<long long>> T(g, std::vector<long long>(g, 0));
  for (auto& [src, word] : ctx.inbox()) {
    T[word.meta[0]][word.meta[1]] = static_cast<long long>(word.value);
  }
  {
    std::vector<std::uint64_t> blob;
    for (auto& row : T)
      for (auto v : row) blob.push_back(static_cast<std::uint64_t>(v));
    ctx.audit("v12.totals", blob);
  }
  co_await ctx.tick();

  // r5 prep: full bundles of n messages move to the group named by the
  // bundle coloring. Bundle b of pair (i, j) covers ranks [b*n, (b+1)*n) of
  // the pair's canonical (member, dst, index) order; the graph of full
  // bundles has O(n) edges and degree <= sqrt(n); residual tails go straight
  // to their destination group later.
  CountsMatrix F(g, std::vector<int>(g, 0));
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) F[i][j] = static_cast<int>(T[i][j] / n);
  int bundle_deg = 1;
  for (int i = 0; i < g; ++i) {
    bundle_deg = std::max(bundle_deg,
                          std::accumulate(F[i].begin(), F[i].end(), 0));
    int col = 0;
    for (int a = 0; a < g; ++a) col += F[a][i];
    bundle_deg = std::max(bundle_deg, col);
  }
  const auto& bundles = detail::colored_pattern(ctx, "v12.bundles", F, bundle_deg);
  // target group of bundle b of my group's pair (myg, j)
  std::vector<std::vector<int>> bundle_target(g);
  {
    int edge_id = 0;
    for (int a = 0; a < g; ++a) {
      for (int b = 0; b < g; ++b) {
        for (int k = 0; k < F[a][b]; ++k) {
          if (a == myg) {
            bundle_target[b].push_back((bundles.coloring.color[edge_id + k] - 1) % g);
          }
        }
        edge_id += F[a][b];
      }
    }
  }

  // Common post-deal structure of my group: who holds which ranks of each
  // pair (myg, j). Member u holds the deal indices k = u - v - 1 (mod w) of
  // each sender v; ranks are prefix_v[j] + (k - start_v[j]).
  std::vector<std::vector<long long>> prefix(w + 1, std::vector<long long>(g, 0));
  std::vector<std::vector<long long>> vstart(w, std::vector<long long>(g, 0));
  for (int v = 0; v < w; ++v) {
    for (int j = 0; j < g; ++j) prefix[v + 1][j] = prefix[v][j] + cmat[v][j];
    long long at = 0;
    for (int j = 0; j < g; ++j) {
      vstart[v][j] = at;
      at += cmat[v][j];
    }
  }
  // take[u][j*stride + b]: units of bundle (myg, j, b) held by member u;
  // rtake[u][j]: residual units of pair (myg, j) held by member u
  const int max_bundles = bundle_deg;
  std::vector<std::vector<int>> take(w, std::vector<int>(g * max_bundles, 0));
  std::vector<std::vector<int>> rtake(w, std::vector<int>(g, 0));
  for (int v = 0; v < w; ++v) {
    for (int j = 0; j < g; ++j) {
      for (int k = 0; k < cmat[v][j]; ++k) {
        int u = (v + 1 + static_cast<int>(vstart[v][j]) + k) % w;
        long long rank = prefix[v][j] + k;
        long long b = rank / n;
        if (b < F[myg][j]) {
          take[u][j * max_bundles + static_cast<int>(b)]++;
        } else {
          rtake[u][j]++;
        }
      }
    }
  }
  ctx.charge(static_cast<std::uint64_t>(w) * n);

  // my actual units with their pair and rank, from the deal metadata
  struct Unit {
    long long rank;
    int j;
    Word word;
  };
  std::vector<Unit> bundle_units, residual_units;
  for (auto& [src, word] : ctx.inbox()) {
    int v = static_cast<int>(word.aux[0]);
    long long k = static_cast<long long>(word.aux[1]);
    int j = grp.group_of(msg_dst(word));
    long long rank = prefix[v][j] + (k - vstart[v][j]);
    Word clean = word;
    clean.aux = {0, 0};
    if (rank / n < F[myg][j]) {
      bundle_units.push_back({rank, j, clean});
    } else {
      residual_units.push_back({rank - static_cast<long long>(F[myg][j]) * n, j, clean});
    }
  }
  auto by_rank = [](const Unit& a, const Unit& b) {
    return std::tie(a.j, a.rank) < std::tie(b.j, b.rank);
  };
  std::sort(bundle_units.begin(), bundle_units.end(), by_rank);
  std::sort(residual_units.begin(), residual_units.end(), by_rank);

  // r5: ship bundle units. The stream of bundle (myg, j, b) is ordered by
  // (holder, rank) and dealt unit-wise over the target group's members, so
  // receivers take an exact share and a holder loads an edge with at most
  // ceil(take / |X|) words.
  {
    std::vector<int> stream_pos(g * max_bundles, 0);  // my start per bundle
    for (int u = 0; u < mypos; ++u) {
      for (int jb = 0; jb < g * max_bundles; ++jb) stream_pos[jb] += take[u][jb];
    }
    std::vector<int> cursor(g * max_bundles, 0);
    for (auto& unit : bundle_units) {
      long long b = unit.rank / n;
      int jb = unit.j * max_bundles + static_cast<int>(b);
      int x = bundle_target[unit.j][static_cast<int>(b)];
      auto xmembers = grp.members(x);
      int t = stream_pos[jb] + cursor[jb]++;
      ctx.send(xmembers[t % grp.size(x)], unit.word);
    }
  }
  co_await ctx.tick();

  // r6: deal the bundle arrivals round-robin inside my group (step 3 of the
  // high-level strategy); interleave the first half of the residual
  // deliveries on the spare word per edge.
  std::vector<Word> arrivals;
  for (auto& [src, word] : ctx.inbox()) arrivals.push_back(word);
  sort_by_group(arrivals, grp);
  ctx.charge(arrivals.size());
  for (size_t k = 0; k < arrivals.size(); ++k) {
    Word word = arrivals[k];
    word.hop = true;
    word.fdst = members[(mypos + 1 + static_cast<int>(k)) % w];
    word.aux = {static_cast<std::uint32_t>(mypos),
                static_cast<std::uint32_t>(k)};
    ctx.send(static_cast<NodeId>(k % ctx.n()) + 1, word);
  }
  // residual stream per pair (myg, j): ordered by (holder, rank), dealt over
  // the destination group's members; each holder alternates its words for
  // one receiver between r6 and r7 so each round carries at most one.
  std::vector<std::vector<std::pair<NodeId, Word>>> residual_rounds(2);
  {
    std::vector<int> stream_pos(g, 0);
    for (int u = 0; u < mypos; ++u) {
      for (int j = 0; j < g; ++j) stream_pos[j] += rtake[u][j];
    }
    std::vector<int> cursor(g, 0);
    std::map<NodeId, int> per_receiver;
    for (auto& unit : residual_units) {
      auto jmembers = grp.members(unit.j);
      int t = stream_pos[unit.j] + cursor[unit.j]++;
      NodeId to = jmembers[t % grp.size(unit.j)];
      Word word = unit.word;
      word.aux = {kResidualTag, 0};
      residual_rounds[per_receiver[to]++ % 2].push_back({to, word});
    }
  }
  for (auto& [to, word] : residual_rounds[0]) ctx.send(to, word);
  co_await ctx.tick();

  // r7: residual deliveries arrive here; send the second half
  std::vector<Word> final_hold;
  for (auto& [src, word] : ctx.inbox()) {
    Word clean = word;
    clean.aux = {0, 0};
    final_hold.push_back(clean);
  }
  for (auto& [to, word] : residual_rounds[1]) ctx.send(to, word);
  co_await ctx.tick();

  // r8: split deal arrivals from late residuals; cross-deliver the dealt
  // messages to their destination groups, at most two per edge.
  {
    std::vector<Word> dealt;
    for (auto& [src, word] : ctx.inbox()) {
      Word clean = word;
      clean.aux = {0, 0};
      if (word.aux[0] == kResidualTag) {
        final_hold.push_back(clean);
      } else {
        dealt.push_back(clean);
      }
    }
    sort_by_group(dealt, grp);
    size_t h = 0;
    for (int j = 0; j < g; ++j) {
      auto jmembers = grp.members(j);
      const int tw = grp.size(j);
      int k = 0;
      while (h < dealt.size() && grp.group_of(msg_dst(dealt[h])) == j) {
        ctx.send(jmembers[(mypos + k) % tw], dealt[h]);
        ++h;
        ++k;
      }
    }
  }
  co_await ctx.tick();

  // r9: everything destined to my group has arrived (bundled via the deal,
  // residuals directly). If holdings exceed 2n, pre-deliver the excess to
  // distinct destination nodes now; announce per-node counts for the rest.
  std::vector<Word> predelivered;
  for (auto& [src, word] : ctx.inbox()) final_hold.push_back(word);
  {
    std::vector<std::vector<Word>> per_node(w);
    for (auto& word : final_hold) {
      per_node[grp.pos_of(msg_dst(word))].push_back(word);
    }
    long long excess =
        static_cast<long long>(final_hold.size()) - 2LL * n;
    std::vector<Word> keep;
    if (excess > 0) {
      // one message per distinct destination, largest piles first
      std::vector<int> order(w);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return per_node[a].size() > per_node[b].size();
      });
      if (excess > w) {
        throw ProtocolAssertion("final-group overflow exceeds one per node");
      }
      for (int t = 0; t < excess; ++t) {
        int u = order[t];
        if (per_node[u].empty()) {
          throw ProtocolAssertion("overflow pre-delivery has no candidate");
        }
        ctx.send(members[u], per_node[u].back());
        per_node[u].pop_back();
      }
    }
    final_hold.clear();
    for (int u = 0; u < w; ++u) {
      for (auto& word : per_node[u]) final_hold.push_back(word);
    }
    // announce per-node counts within the group (uniform pattern, relayed)
    std::vector<std::vector<Word>> items(w);
    for (int b = 0; b < w; ++b) {
      for (int u = 0; u < w; ++u) {
        Word word;
        word.role = WordRole::count;
        word.value = per_node[u].size();
        word.meta = {static_cast<std::uint32_t>(mypos),
                     static_cast<std::uint32_t>(u), 0};
        items[b].push_back(word);
      }
    }
    CountsMatrix ucounts(w, std::vector<int>(w, w));
    route_known_send(ctx, members, mypos, std::move(items), ucounts,
                     "v12.s5cnt|g" + std::to_string(myg));
  }
  co_await ctx.tick();

  // r10: collect pre-deliveries addressed to me (count words still relaying)
  for (auto& [src, word] : ctx.inbox()) predelivered.push_back(word);
  co_await ctx.tick();

  // r11: counts known; run the final two-round delivery
  CountsMatrix counts(w, std::vector<int>(w, 0));
  for (auto& [src, word] : ctx.inbox()) {
    counts[word.meta[0]][word.meta[1]] = static_cast<int>(word.value);
  }
  sort_by_dst(final_hold);
  std::vector<std::vector<Word>> payload(w);
  for (auto& word : final_hold) {
    payload[grp.pos_of(msg_dst(word))].push_back(word);
  }
  auto delivered = co_await route_known_words(
      ctx, members, mypos, std::move(payload), std::move(counts),
      "v12.s5pay|g" + std::to_string(myg));
  for (auto& word : predelivered) delivered.push_back(word);
  co_return delivered;
}

}  // namespace routing_detail

// ==========================================================================
// Public operations
// ==========================================================================

struct RouteOptions {
  int capacity = 0;  // 0: pick the declared default for the variant
  bool trace = false;
  bool strict_patterns = false;
  bool count_steps = false;
  std::optional<FaultSpec> fault;
};

namespace routing_detail {

inline DeliveryReport report_from(ProtocolRun<std::vector<Word>>&& run, int n) {
  DeliveryReport rep;
  rep.rounds_used = run.engine.rounds_used;
  rep.max_load = run.engine.max_load;
  rep.steps = std::move(run.steps);
  rep.pattern_checked = run.pattern_agreements > 0;
  rep.received.assign(n, {});
  for (NodeId v = 1; v <= n; ++v) {
    for (auto& word : run.per_node[v - 1]) {
      if (word.role == WordRole::dummy) continue;
      rep.received[v - 1].push_back(to_message(word));
    }
    std::sort(rep.received[v - 1].begin(), rep.received[v - 1].end());
  }
  return rep;
}

inline RunOptions run_options(const RouteOptions& opt, int max_rounds) {
  RunOptions ro;
  ro.max_rounds = max_rounds;
  ro.trace_enabled = opt.trace;
  ro.strict_patterns = opt.strict_patterns;
  ro.count_steps = opt.count_steps;
  ro.fault = opt.fault;
  return ro;
}

}  // namespace routing_detail

// Two-round delivery within W under the corollary preconditions: endpoints
// in W, counts commonly known, every member source and destination of
// exactly f*|W| messages, f = floor(n/|W|). Uses only edges with at least
// one endpoint in W.
inline DeliveryReport route_known(int n, std::vector<NodeId> W,
                                  const std::vector<Message>& msgs,
                                  RouteOptions opt = {}) {
  const int w = static_cast<int>(W.size());
  if (w == 0) throw PreconditionViolated("W is empty");
  const int f = n / w;
  const int quota = f * w;
  std::map<NodeId, int> pos;
  for (int a = 0; a < w; ++a) pos[W[a]] = a;

  std::vector<int> sent(w, 0), recv(w, 0);
  CountsMatrix counts(w, std::vector<int>(w, 0));
  for (const auto& m : msgs) {
    auto is = pos.find(m.src), id = pos.find(m.dst);
    if (is == pos.end() || id == pos.end()) {
      throw PreconditionViolated(
          "condition 1: message endpoint outside W");
    }
    counts[is->second][id->second]++;
    sent[is->second]++;
    recv[id->second]++;
  }
  for (int a = 0; a < w; ++a) {
    if (sent[a] != quota) {
      throw PreconditionViolated("condition 3: node " + std::to_string(W[a]) +
                                 " is source of " + std::to_string(sent[a]) +
                                 " != f|W| = " + std::to_string(quota));
    }
    if (recv[a] != quota) {
      throw PreconditionViolated("condition 4: node " + std::to_string(W[a]) +
                                 " is destination of " +
                                 std::to_string(recv[a]) +
                                 " != f|W| = " + std::to_string(quota));
    }
  }

  std::vector<std::vector<std::vector<Word>>> items(n);  // [node][target pos]
  for (NodeId v = 1; v <= n; ++v) items[v - 1].assign(w, {});
  {
    auto sorted = msgs;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& m : sorted) {
      items[m.src - 1][pos[m.dst]].push_back(to_word(m));
    }
  }

  auto fn = [=, &items](LaneCtx ctx) -> Task<std::vector<Word>> {
    auto it = pos.find(ctx.self());
    int mypos = it == pos.end() ? -1 : it->second;
    std::vector<std::vector<Word>> mine =
        mypos >= 0 ? items[ctx.self() - 1] : std::vector<std::vector<Word>>{};
    auto got = co_await route_known_words(ctx, W, mypos, std::move(mine),
                                          counts, "op.route_known");
    co_return got;
  };
  CliqueConfig cfg{n, opt.capacity ? opt.capacity : std::max(1, (quota + n - 1) / n),
                   opt.trace};
  auto run = run_protocol<std::vector<Word>>(
      cfg, routing_detail::run_options(opt, 16), fn);
  return routing_detail::report_from(std::move(run), n);
}

// Four-round delivery within W with counts not shared in advance: two rounds
// announce each member's per-member counts (|W|^2 <= f|W| values fit the
// two-round pattern because |W| <= sqrt(n)), two more deliver the payload.
inline DeliveryReport route_subset(int n, std::vector<NodeId> W,
                                   const std::vector<Message>& msgs,
                                   RouteOptions opt = {}) {
  const int w = static_cast<int>(W.size());
  if (w == 0) throw PreconditionViolated("W is empty");
  if (static_cast<long long>(w) * w > n) {
    throw SubsetTooLarge("|W| = " + std::to_string(w) +
                         " exceeds sqrt(n) for n = " + std::to_string(n));
  }
  const int f = n / w;
  const int quota = f * w;
  std::map<NodeId, int> pos;
  for (int a = 0; a < w; ++a) pos[W[a]] = a;

  std::vector<int> sent(w, 0), recv(w, 0);
  for (const auto& m : msgs) {
    auto is = pos.find(m.src), id = pos.find(m.dst);
    if (is == pos.end() || id == pos.end()) {
      throw PreconditionViolated("condition 1: message endpoint outside W");
    }
    sent[is->second]++;
    recv[id->second]++;
  }
  for (int a = 0; a < w; ++a) {
    if (sent[a] != quota || recv[a] != quota) {
      throw PreconditionViolated("conditions 3/4: per-node counts != f|W|");
    }
  }

  std::vector<std::vector<Message>> by_src(n);
  for (const auto& m : msgs) by_src[m.src - 1].push_back(m);
  for (auto& v : by_src) std::sort(v.begin(), v.end());

  auto fn = [=, &by_src](LaneCtx ctx) -> Task<std::vector<Word>> {
    auto it = pos.find(ctx.self());
    int mypos = it == pos.end() ? -1 : it->second;

    // announce my per-member counts to everyone in W
    std::vector<int> mine(w, 0);
    if (mypos >= 0) {
      for (const auto& m : by_src[ctx.self() - 1]) mine[pos.at(m.dst)]++;
    }
    std::vector<std::vector<Word>> count_items(mypos >= 0 ? w : 0);
    for (int b = 0; b < static_cast<int>(count_items.size()); ++b) {
      for (int u = 0; u < w; ++u) {
        Word word;
        word.role = WordRole::count;
        word.value = static_cast<std::uint64_t>(mine[u]);
        word.meta = {static_cast<std::uint32_t>(mypos),
                     static_cast<std::uint32_t>(u), 0};
        count_items[b].push_back(word);
      }
    }
    auto got = co_await announce_within(ctx, W, mypos, std::move(count_items),
                                        w, "op.route_subset.counts");
    CountsMatrix counts(w, std::vector<int>(w, 0));
    for (auto& word : got) {
      counts[word.meta[0]][word.meta[1]] = static_cast<int>(word.value);
    }

    std::vector<std::vector<Word>> payload(mypos >= 0 ? w : 0);
    if (mypos >= 0) {
      for (const auto& m : by_src[ctx.self() - 1]) {
        payload[pos.at(m.dst)].push_back(to_word(m));
      }
    }
    auto res = co_await route_known_words(ctx, W, mypos, std::move(payload),
                                          std::move(counts),
                                          "op.route_subset.pay");
    co_return res;
  };
  CliqueConfig cfg{n, opt.capacity ? opt.capacity : std::max(1, (quota + n - 1) / n),
                   opt.trace};
  auto run = run_protocol<std::vector<Word>>(
      cfg, routing_detail::run_options(opt, 16), fn);
  return routing_detail::report_from(std::move(run), n);
}

namespace routing_detail {

// Staged results keep dummies so balance conditions can be checked exactly;
// the full run strips them per the delivery contract.
inline DeliveryReport run_idt_stage(RoutingInstance inst, int stop_stage,
                                    RouteOptions opt, int max_rounds) {
  inst.pad();
  const int n = inst.n;
  IdtParams params;
  params.n = n;
  params.grp = Grouping::make(n);
  params.stop_stage = stop_stage;
  const bool square = isqrt_floor(n) * isqrt_floor(n) == n;

  auto fn = [params, &inst](LaneCtx ctx) -> Task<std::vector<Word>> {
    std::vector<Word> holdings;
    for (const auto& m : inst.by_source[ctx.self() - 1]) {
      holdings.push_back(to_word(m));
    }
    auto res = co_await idt_protocol(ctx, params, std::move(holdings));
    co_return res;
  };
  CliqueConfig cfg{n, opt.capacity ? opt.capacity : (square ? 1 : 2), opt.trace};
  auto run = run_protocol<std::vector<Word>>(cfg, run_options(opt, max_rounds), fn);
  if (stop_stage >= 4) return report_from(std::move(run), n);

  DeliveryReport rep;
  rep.rounds_used = run.engine.rounds_used;
  rep.max_load = run.engine.max_load;
  rep.steps = std::move(run.steps);
  rep.received.assign(n, {});
  for (NodeId v = 1; v <= n; ++v) {
    for (auto& word : run.per_node[v - 1]) {
      rep.received[v - 1].push_back(to_message(word));
    }
  }
  return rep;
}

}  // namespace routing_detail

// Alg. 1 step 2: after these 7 rounds every group holds exactly n messages
// (dummies included) destined for each group.
inline DeliveryReport balance_between_subsets(const RoutingInstance& inst,
                                              RouteOptions opt = {}) {
  return routing_detail::run_idt_stage(inst, 1, opt, 40);
}

// Alg. 1 step 3: 4 more rounds; each node then holds an exact share of its
// group's messages per destination group (sqrt(n) each for square n).
inline DeliveryReport balance_within_subsets(const RoutingInstance& inst,
                                             RouteOptions opt = {}) {
  return routing_detail::run_idt_stage(inst, 2, opt, 40);
}

// Alg. 1 step 4: one more round; every message now sits inside its
// destination group.
inline DeliveryReport cross_deliver(const RoutingInstance& inst,
                                    RouteOptions opt = {}) {
  return routing_detail::run_idt_stage(inst, 3, opt, 40);
}

// Full information distribution: at most 16 rounds, one word per edge per
// round on square n, two otherwise.
inline DeliveryReport route_idt(const RoutingInstance& inst,
                                RouteOptions opt = {}) {
  return routing_detail::run_idt_stage(inst, 4, opt, 40);
}

// The 12-round variant with O(n log n) local work per node: round-robin
// deals replace the in-group exchanges and the inter-group coloring works on
// bundles of n messages. Perfect squares only; other sizes fall back to
// route_idt. Two words per edge per round.
inline DeliveryReport route_idt_fast(const RoutingInstance& inst,
                                     RouteOptions opt = {}) {
  const int s = isqrt_floor(inst.n);
  if (s * s != inst.n) return route_idt(inst, opt);

  RoutingInstance padded = inst;
  padded.pad();
  const int n = padded.n;
  routing_detail::IdtParams params;
  params.n = n;
  params.grp = Grouping::make(n);

  auto fn = [params, &padded](LaneCtx ctx) -> Task<std::vector<Word>> {
    std::vector<Word> holdings;
    for (const auto& m : padded.by_source[ctx.self() - 1]) {
      holdings.push_back(to_word(m));
    }
    auto res = co_await routing_detail::idt_fast_protocol(ctx, params,
                                                          std::move(holdings));
    co_return res;
  };
  CliqueConfig cfg{n, opt.capacity ? opt.capacity : 2, opt.trace};
  auto run = run_protocol<std::vector<Word>>(
      cfg, routing_detail::run_options(opt, 40), fn);
  return routing_detail::report_from(std::move(run), n);
}

}  // namespace clique

#endif  // CLIQUE_ROUTING_HPP
