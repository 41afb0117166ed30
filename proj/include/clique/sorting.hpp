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

// Deterministic distributed sorting: sample-sort inside a sqrt(n)-node group
// (ten rounds), the global sort that composes two levels of it around one
// routing pass (37 rounds), and the distinct-rank / selection / mode
// variants layered on top. Keys are totally ordered by (value, origin,
// local index), so equal values never tie.

#ifndef CLIQUE_SORTING_HPP
#define CLIQUE_SORTING_HPP

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "clique/core.hpp"
#include "clique/patterns.hpp"
#include "clique/proto.hpp"
#include "clique/routing.hpp"

namespace clique {

struct TooManyKeys : Error {
  using Error::Error;
};
struct SubsetSizeMismatch : Error {
  using Error::Error;
};
struct BalanceViolated : Error {
  int bucket;
  long long size;
  BalanceViolated(int j, long long sz)
      : Error("bucket " + std::to_string(j) + " holds " + std::to_string(sz) +
              " keys, violating the 4n balance bound"),
        bucket(j), size(sz) {}
};
struct KOutOfRange : Error {
  using Error::Error;
};

struct Key {
  std::uint64_t value = 0;
  NodeId origin = 0;
  int local_index = 0;

  friend auto operator<=>(const Key&, const Key&) = default;
};

inline Word key_word(const Key& k, bool sentinel = false) {
  Word w;
  w.role = sentinel ? WordRole::dummy : WordRole::key;
  w.value = k.value;
  w.meta = {static_cast<std::uint32_t>(k.origin),
            static_cast<std::uint32_t>(k.local_index), 0};
  return w;
}

inline Key word_key(const Word& w) {
  return Key{w.value, static_cast<NodeId>(w.meta[0]),
             static_cast<int>(w.meta[1])};
}

struct KeyInstance {
  int n = 0;
  std::vector<std::vector<Key>> by_node;  // [v-1]

  void validate() const {
    if (static_cast<int>(by_node.size()) != n) {
      throw InvalidInstance("need a key list per node");
    }
    for (NodeId v = 1; v <= n; ++v) {
      if (static_cast<int>(by_node[v - 1].size()) > n) {
        throw InvalidInstance("node " + std::to_string(v) +
                              " holds more than n keys");
      }
      for (const auto& k : by_node[v - 1]) {
        if (k.origin != v) throw InvalidInstance("key origin mismatch");
      }
    }
  }
};

// Raises when a delimiter bucket outgrows the balance guarantee. A firing
// check is an implementation bug, never expected input behavior.
inline void bucket_bound_check(const std::vector<long long>& bucket_union_sizes,
                               int n) {
  for (size_t j = 0; j < bucket_union_sizes.size(); ++j) {
    if (bucket_union_sizes[j] >= 4LL * n) {
      throw BalanceViolated(static_cast<int>(j + 1), bucket_union_sizes[j]);
    }
  }
}

namespace sorting_detail {

inline void sort_keys(std::vector<Word>& words, LaneCtx ctx) {
  std::sort(words.begin(), words.end(), [](const Word& a, const Word& b) {
    return std::tie(a.value, a.meta[0], a.meta[1]) <
           std::tie(b.value, b.meta[0], b.meta[1]);
  });
  size_t n = words.size();
  std::uint64_t logn = 1;
  while ((1u << logn) < n) ++logn;
  ctx.charge(n * logn);
}

struct SubsortParams {
  std::vector<NodeId> W;
  int n = 0;         // clique size
  int load_cap = 0;  // common upper bound on any member's key count
  bool skip_final = false;
  bool broadcast_piece_size = false;  // one word to all n during shipment
  std::string tag;
};

struct SubsortResult {
  std::vector<Word> piece;       // sorted; bucket union or final block
  long long offset = 0;          // global rank of piece.front(), 0-based
  std::vector<long long> piece_sizes;          // per member (common)
  std::vector<long long> bucket_union_sizes;   // for the balance check
  std::vector<std::pair<NodeId, long long>> size_broadcasts;  // collected
};

// Sample sort within W. Communication: 2 (samples) + 2 (bucket sizes)
// + 4 (shipment: counts then payload) + 2 (final redistribution, skippable).
// Only edges with an endpoint in W are used; non-members pass empty keys and
// keep the round alignment.
inline Task<SubsortResult> subsort_protocol(LaneCtx ctx, SubsortParams P,
                                            std::vector<Word> my_keys) {
  const int w = static_cast<int>(P.W.size());
  int mypos = -1;
  for (int a = 0; a < w; ++a) {
    if (P.W[a] == ctx.self()) mypos = a;
  }
  const int stride = 2 * w;
  const int samples_cap = std::max(1, P.load_cap / stride);

  if (mypos >= 0 && static_cast<int>(my_keys.size()) > P.load_cap) {
    throw TooManyKeys("member holds " + std::to_string(my_keys.size()) +
                      " keys, cap " + std::to_string(P.load_cap));
  }

  // local sort and every-(2w)-th selection, padded to the fixed cap
  std::vector<Word> samples;
  if (mypos >= 0) {
    sort_keys(my_keys, ctx);
    for (int i = stride; i <= static_cast<int>(my_keys.size()); i += stride) {
      samples.push_back(my_keys[i - 1]);
    }
    while (static_cast<int>(samples.size()) < samples_cap) {
      samples.push_back(key_word(Key{~0ULL, static_cast<NodeId>(P.n + 1), 0},
                                 /*sentinel=*/true));
    }
  }

  // rounds 1-2: announce the selected keys to all of W
  std::vector<std::vector<Word>> items(mypos >= 0 ? w : 0);
  for (int b = 0; b < static_cast<int>(items.size()); ++b) items[b] = samples;
  auto got = co_await announce_within(ctx, P.W, mypos, std::move(items),
                                      samples_cap, P.tag + ".samples");

  // common delimiters: every ceil(S/w)-th of the sorted real samples,
  // plus an implicit +infinity bound for the last bucket
  std::vector<Word> delim;
  {
    std::vector<Word> real;
    for (auto& word : got) {
      if (word.role != WordRole::dummy) real.push_back(word);
    }
    sort_keys(real, ctx);
    const long long S = static_cast<long long>(real.size());
    const long long step = std::max<long long>(1, (S + w - 1) / w);
    for (long long j = 1; j < w; ++j) {
      if (j * step <= S) delim.push_back(real[j * step - 1]);
    }
    if (mypos >= 0) {
      std::vector<std::uint64_t> blob;
      for (auto& word : delim) {
        blob.push_back(word.value);
        blob.push_back(word.meta[0]);
        blob.push_back(word.meta[1]);
      }
      ctx.audit(P.tag + ".delims", blob);
    }
  }

  // buckets: K_j = keys in (delim[j-1], delim[j]], last bucket unbounded
  std::vector<std::vector<Word>> bucket(w);
  if (mypos >= 0) {
    auto less_eq = [](const Word& a, const Word& b) {
      return std::tie(a.value, a.meta[0], a.meta[1]) <=
             std::tie(b.value, b.meta[0], b.meta[1]);
    };
    for (auto& word : my_keys) {
      int j = 0;
      while (j < static_cast<int>(delim.size()) && !less_eq(word, delim[j])) {
        ++j;
      }
      bucket[j].push_back(word);
    }
    ctx.charge(my_keys.size());
  }

  // rounds 3-4: announce bucket sizes
  std::vector<std::vector<Word>> size_items(mypos >= 0 ? w : 0);
  for (int b = 0; b < static_cast<int>(size_items.size()); ++b) {
    for (int j = 0; j < w; ++j) {
      Word word;
      word.role = WordRole::count;
      word.value = bucket[j].size();
      word.meta = {static_cast<std::uint32_t>(mypos),
                   static_cast<std::uint32_t>(j), 0};
      size_items[b].push_back(word);
    }
  }
  auto size_words = co_await announce_within(ctx, P.W, mypos,
                                             std::move(size_items), w,
                                             P.tag + ".bsize");
  std::vector<std::vector<long long>> bmat(w, std::vector<long long>(w, 0));
  for (auto& word : size_words) {
    bmat[word.meta[0]][word.meta[1]] = static_cast<long long>(word.value);
  }

  SubsortResult out;
  out.bucket_union_sizes.assign(w, 0);
  for (int j = 0; j < w; ++j) {
    for (int t = 0; t < w; ++t) out.bucket_union_sizes[j] += bmat[t][j];
  }
  if (mypos >= 0) bucket_bound_check(out.bucket_union_sizes, P.n);

  // rounds 5-8: ship bucket j to the j-th member (counts announced, then the
  // payload; the four-round shape of the small-group primitive)
  {
    CountsMatrix ccounts(w, std::vector<int>(w, w));
    std::vector<std::vector<Word>> citems(mypos >= 0 ? w : 0);
    for (int b = 0; b < static_cast<int>(citems.size()); ++b) {
      for (int u = 0; u < w; ++u) {
        Word word;
        word.role = WordRole::count;
        word.value = bucket[u].size();
        word.meta = {static_cast<std::uint32_t>(mypos),
                     static_cast<std::uint32_t>(u), 0};
        citems[b].push_back(word);
      }
    }
    route_known_send(ctx, P.W, mypos, std::move(citems), ccounts,
                     P.tag + ".shipcnt");
    if (P.broadcast_piece_size && mypos >= 0) {
      Word word;
      word.role = WordRole::count;
      word.value = static_cast<std::uint64_t>(out.bucket_union_sizes[mypos]);
      word.meta = {static_cast<std::uint32_t>(ctx.self()), 0, 0};
      for (NodeId u = 1; u <= ctx.n(); ++u) ctx.send(u, word);
    }
    co_await ctx.tick();
    // piece size broadcasts (if any) land here
    for (auto& [src, word] : ctx.inbox()) {
      out.size_broadcasts.push_back(
          {static_cast<NodeId>(word.meta[0]),
           static_cast<long long>(word.value)});
    }
    co_await ctx.tick();
    // shipment counts arrive; they match bmat by construction
    CountsMatrix ship(w, std::vector<int>(w, 0));
    for (auto& [src, word] : ctx.inbox()) {
      if (word.role == WordRole::count) {
        ship[word.meta[0]][word.meta[1]] = static_cast<int>(word.value);
      }
    }
    std::vector<std::vector<Word>> payload(mypos >= 0 ? w : 0);
    if (mypos >= 0) {
      for (int j = 0; j < w; ++j) payload[j] = std::move(bucket[j]);
    }
    route_known_send(ctx, P.W, mypos, std::move(payload), ship,
                     P.tag + ".ship");
    co_await ctx.tick();
    co_await ctx.tick();
  }
  std::vector<Word> mine;
  for (auto& [src, word] : ctx.inbox()) mine.push_back(word);
  sort_keys(mine, ctx);

  out.piece_sizes = out.bucket_union_sizes;
  out.offset = 0;
  if (mypos >= 0) {
    for (int j = 0; j < mypos; ++j) out.offset += out.bucket_union_sizes[j];
  }

  if (P.skip_final) {
    out.piece = std::move(mine);
    co_return out;
  }

  // rounds 9-10: order-preserving redistribution into uniform blocks
  long long total = 0;
  for (int j = 0; j < w; ++j) total += out.bucket_union_sizes[j];
  const long long L = (total + w - 1) / std::max(1, w);
  CountsMatrix counts(w, std::vector<int>(w, 0));
  {
    long long at = 0;
    for (int t = 0; t < w; ++t) {
      for (long long r = 0; r < out.bucket_union_sizes[t]; ++r, ++at) {
        counts[t][static_cast<int>(at / std::max<long long>(1, L))]++;
      }
    }
  }
  std::vector<std::vector<Word>> payload(mypos >= 0 ? w : 0);
  if (mypos >= 0) {
    for (size_t r = 0; r < mine.size(); ++r) {
      payload[static_cast<int>((out.offset + static_cast<long long>(r)) /
                               std::max<long long>(1, L))]
          .push_back(mine[r]);
    }
  }
  auto finals = co_await route_known_words(ctx, P.W, mypos, std::move(payload),
                                           std::move(counts), P.tag + ".redist");
  sort_keys(finals, ctx);
  out.piece = std::move(finals);
  out.offset = mypos >= 0 ? static_cast<long long>(mypos) * L : 0;
  out.piece_sizes.assign(w, L);
  if (w > 0) out.piece_sizes[w - 1] = total - L * (w - 1);
  co_return out;
}

struct SortParams {
  int n = 0;
  Grouping grp;
};

struct SortCore {
  std::vector<Word> block;  // my sorted share of the global order
  long long offset = 0;     // global rank of block.front(), 0-based
  long long real_total = 0;
};

// Alg. 4: one round spreads the locally selected keys over the first ~sqrt(n)
// nodes, eight rounds sort them, two rounds broadcast the delimiters, sixteen
// rounds route every key to its bucket group, eight rounds sort each group,
// two rounds redistribute into exact rank blocks. 37 rounds total.
inline Task<SortCore> sort_protocol(LaneCtx ctx, SortParams P,
                                    std::vector<Word> my_keys) {
  const int n = P.n;
  const Grouping& grp = P.grp;
  const int g = grp.groups();
  const int s = isqrt_floor(n);
  const int sorters = std::max(1, n / s);
  const int myg = grp.group_of(ctx.self());
  const int mypos = grp.pos_of(ctx.self());

  // S1 (local): sort (sentinels included) and select every s-th key
  sort_keys(my_keys, ctx);
  std::vector<Word> selected;
  for (int i = s; i <= static_cast<int>(my_keys.size()) &&
                  static_cast<int>(selected.size()) < sorters; i += s) {
    selected.push_back(my_keys[i - 1]);
  }
  while (static_cast<int>(selected.size()) < sorters) {
    selected.push_back(key_word(Key{~0ULL, static_cast<NodeId>(n + 1), 0},
                                /*sentinel=*/true));
  }

  // S2 (1 round): the i-th selected key goes to node i
  for (int i = 0; i < sorters; ++i) {
    ctx.send(static_cast<NodeId>(i + 1), selected[i]);
  }
  co_await ctx.tick();

  // S3 (8 rounds): nodes 1..sorters sort what they received
  std::vector<Word> sorter_keys;
  for (auto& [src, word] : ctx.inbox()) sorter_keys.push_back(word);
  sorting_detail::SubsortParams sp;
  sp.W.resize(sorters);
  std::iota(sp.W.begin(), sp.W.end(), 1);
  sp.n = n;
  sp.load_cap = n;
  sp.skip_final = true;
  sp.tag = "sort.s3";
  auto s3 = co_await sorting_detail::subsort_protocol(ctx, sp,
                                                      std::move(sorter_keys));

  // S4 (2 rounds): every ceil(total/g)-th sorter key becomes a delimiter,
  // relayed through its index node and broadcast to everyone
  {
    long long M = 0;
    for (auto v : s3.piece_sizes) M += v;
    const long long step = std::max<long long>(1, (M + g - 1) / g);
    if (ctx.self() <= sorters) {
      for (long long k = 1; k < g; ++k) {
        long long r = k * step;  // 1-based global sorter rank
        if (r > s3.offset && r <= s3.offset + static_cast<long long>(s3.piece.size())) {
          Word word = s3.piece[r - s3.offset - 1];
          word.meta[2] = static_cast<std::uint32_t>(k);
          ctx.send(static_cast<NodeId>(k), word);
        }
      }
    }
  }
  co_await ctx.tick();
  // relay each delimiter to all nodes
  for (auto& [src, word] : ctx.inbox()) {
    for (NodeId u = 1; u <= n; ++u) ctx.send(u, word);
  }
  co_await ctx.tick();
  std::vector<Word> delim(g - 1);
  std::vector<bool> have(g - 1, false);
  for (auto& [src, word] : ctx.inbox()) {
    int k = static_cast<int>(word.meta[2]);
    if (k >= 1 && k < g) {
      delim[k - 1] = word;
      have[k - 1] = true;
    }
  }
  {
    // missing trailing delimiters mean "+infinity" (tiny sorter totals)
    std::vector<Word> finite;
    std::vector<std::uint64_t> blob;
    for (int k = 0; k < g - 1; ++k) {
      if (have[k]) {
        finite.push_back(delim[k]);
        blob.push_back(delim[k].value);
        blob.push_back(delim[k].meta[0]);
        blob.push_back(delim[k].meta[1]);
      }
    }
    delim = std::move(finite);
    ctx.audit("sort.delims", blob);
  }

  // S5 (local): bucket my real keys by the delimiters
  std::vector<std::vector<Word>> bucket(g);
  {
    auto less_eq = [](const Word& a, const Word& b) {
      return std::tie(a.value, a.meta[0], a.meta[1]) <=
             std::tie(b.value, b.meta[0], b.meta[1]);
    };
    for (auto& word : my_keys) {
      if (word.role == WordRole::dummy) continue;  // sentinels stay home
      int j = 0;
      while (j < static_cast<int>(delim.size()) && !less_eq(word, delim[j])) {
        ++j;
      }
      // strip the delimiter scratch before shipping
      Word clean = word;
      clean.meta[2] = 0;
      bucket[j].push_back(clean);
    }
    ctx.charge(my_keys.size());
  }

  // S6 (16 rounds): route each bucket to its group, keys spread cyclically
  // over the group members starting at an origin-dependent offset
  {
    std::vector<Word> shipment;
    for (int j = 0; j < g; ++j) {
      auto members = grp.members(j);
      const int wj = grp.size(j);
      for (size_t t = 0; t < bucket[j].size(); ++t) {
        Word word = bucket[j][t];
        NodeId dst = members[(ctx.self() - 1 + static_cast<int>(t)) % wj];
        word.meta[2] = static_cast<std::uint32_t>(dst);
        shipment.push_back(word);
      }
    }
    routing_detail::IdtParams ip;
    ip.n = n;
    ip.grp = grp;
    auto arrived = co_await routing_detail::idt_protocol(ctx, ip,
                                                         std::move(shipment));
    my_keys = std::move(arrived);
  }

  // S7 (8 rounds): each group sorts its bucket; every node broadcasts its
  // final piece size so the closing pattern is common knowledge
  sorting_detail::SubsortParams sp7;
  sp7.W = grp.members(myg);
  sp7.n = n;
  sp7.load_cap = 4 * n;
  sp7.skip_final = true;
  sp7.broadcast_piece_size = true;
  sp7.tag = "sort.s7|g" + std::to_string(myg);
  auto s7 = co_await sorting_detail::subsort_protocol(ctx, sp7,
                                                      std::move(my_keys));

  // S8 (2 rounds): order-preserving redistribution into blocks of n
  std::vector<long long> piece(n + 1, 0);
  for (auto& [node, size] : s7.size_broadcasts) piece[node] = size;
  std::vector<long long> start(n + 2, 0);
  for (NodeId v = 1; v <= n; ++v) start[v + 1] = start[v] + piece[v];
  const long long real_total = start[n + 1];

  std::vector<NodeId> all(n);
  std::iota(all.begin(), all.end(), 1);
  CountsMatrix counts(n, std::vector<int>(n, 0));
  for (NodeId v = 1; v <= n; ++v) {
    for (long long r = start[v]; r < start[v + 1]; ++r) {
      counts[v - 1][static_cast<int>(r / n)]++;
    }
  }
  std::vector<std::vector<Word>> payload(n);
  for (size_t t = 0; t < s7.piece.size(); ++t) {
    long long r = start[ctx.self()] + static_cast<long long>(t);
    payload[static_cast<int>(r / n)].push_back(s7.piece[t]);
  }
  auto block = co_await route_known_words(ctx, all, ctx.self() - 1,
                                          std::move(payload), std::move(counts),
                                          "sort.s8");
  sort_keys(block, ctx);

  SortCore core;
  core.block = std::move(block);
  core.offset = static_cast<long long>(ctx.self() - 1) * n;
  core.real_total = real_total;
  co_return core;
}

// Distinct-rank labels for every input key: sort, one announcement round of
// block boundary values, local computation of the ranks among distinct
// values, and one routing pass to return each label to the key's origin.
struct RankCore {
  std::vector<std::pair<int, long long>> labels;  // (local_index, distinct rank)
};

inline Task<RankCore> rank_protocol(LaneCtx ctx, SortParams P,
                                    std::vector<Word> my_keys) {
  const int n = P.n;
  auto core = co_await sort_protocol(ctx, P, std::move(my_keys));

  // one round: (smallest value, copies), (largest value, copies),
  // (distinct count, emptiness)
  {
    std::uint64_t minv = 0, maxv = 0;
    std::uint64_t minc = 0, maxc = 0, dcount = 0;
    if (!core.block.empty()) {
      minv = core.block.front().value;
      maxv = core.block.back().value;
      for (auto& word : core.block) {
        if (word.value == minv) ++minc;
        if (word.value == maxv) ++maxc;
      }
      dcount = 1;
      for (size_t i = 1; i < core.block.size(); ++i) {
        if (core.block[i].value != core.block[i - 1].value) ++dcount;
      }
    }
    Word w1, w2, w3;
    w1.role = WordRole::count;
    w1.value = minv;
    w1.meta = {static_cast<std::uint32_t>(ctx.self()), 1,
               static_cast<std::uint32_t>(minc)};
    w2.role = WordRole::count;
    w2.value = maxv;
    w2.meta = {static_cast<std::uint32_t>(ctx.self()), 2,
               static_cast<std::uint32_t>(maxc)};
    w3.role = WordRole::count;
    w3.value = dcount;
    w3.meta = {static_cast<std::uint32_t>(ctx.self()), 3,
               core.block.empty() ? 1u : 0u};
    for (NodeId u = 1; u <= n; ++u) {
      ctx.send(u, w1);
      ctx.send(u, w2);
      ctx.send(u, w3);
    }
  }
  co_await ctx.tick();
  struct Boundary {
    std::uint64_t minv = 0, maxv = 0, dcount = 0;
    bool empty = true;
  };
  std::vector<Boundary> bd(n + 1);
  for (auto& [src, word] : ctx.inbox()) {
    auto& b = bd[word.meta[0]];
    if (word.meta[1] == 1) b.minv = word.value;
    if (word.meta[1] == 2) b.maxv = word.value;
    if (word.meta[1] == 3) {
      b.dcount = word.value;
      b.empty = word.meta[2] != 0;
    }
  }
  // distinct values before my block, merging runs across block boundaries
  long long before = 0;
  {
    std::uint64_t prev_max = 0;
    bool any = false;
    for (NodeId v = 1; v < ctx.self(); ++v) {
      if (bd[v].empty) continue;
      before += static_cast<long long>(bd[v].dcount);
      if (any && bd[v].minv == prev_max) --before;
      prev_max = bd[v].maxv;
      any = true;
    }
    if (any && !bd[ctx.self()].empty && bd[ctx.self()].minv == prev_max) {
      --before;
    }
    ctx.charge(n);
  }
  // label words routed back to the keys' origins
  std::vector<Word> labels;
  {
    long long local_d = 0;
    for (size_t i = 0; i < core.block.size(); ++i) {
      if (i == 0 || core.block[i].value != core.block[i - 1].value) ++local_d;
      Word word;
      word.role = WordRole::payload;
      word.value = static_cast<std::uint64_t>(before + local_d);
      word.meta = {static_cast<std::uint32_t>(ctx.self()),
                   core.block[i].meta[1], core.block[i].meta[0]};
      labels.push_back(word);
    }
  }
  routing_detail::IdtParams ip;
  ip.n = n;
  ip.grp = P.grp;
  auto got = co_await routing_detail::idt_protocol(ctx, ip, std::move(labels));

  RankCore out;
  for (auto& word : got) {
    out.labels.push_back({static_cast<int>(word.meta[1]),
                          static_cast<long long>(word.value)});
  }
  std::sort(out.labels.begin(), out.labels.end());
  co_return out;
}

// ==========================================================================
// Public operations
// ==========================================================================

struct SortOptions {
  int capacity = 0;
  bool trace = false;
  bool strict_patterns = false;
  bool count_steps = false;
  std::optional<FaultSpec> fault;
};

struct SubsetSortReport {
  int rounds_used = 0;
  int max_load = 0;
  // (key, 1-based rank in the group's total order) at its final holder
  std::vector<std::vector<std::pair<Key, long long>>> ranked;
  std::vector<long long> bucket_union_sizes;
  std::vector<std::uint64_t> steps;
};

namespace sorting_detail {

inline RunOptions sort_run_options(const SortOptions& opt, int max_rounds) {
  RunOptions ro;
  ro.max_rounds = max_rounds;
  ro.trace_enabled = opt.trace;
  ro.strict_patterns = opt.strict_patterns;
  ro.count_steps = opt.count_steps;
  ro.fault = opt.fault;
  return ro;
}

inline int default_capacity(int n, const SortOptions& opt) {
  if (opt.capacity) return opt.capacity;
  const int s = isqrt_floor(n);
  return s * s == n ? 4 : 8;
}

}  // namespace sorting_detail

// Ten-round (eight with the final redistribution skipped) sort of the keys
// held by the members of W. Every member learns the global ranks of the keys
// it ends up holding; ranks are with respect to the union of W's keys.
inline SubsetSortReport subset_sort(
    int n, std::vector<NodeId> W,
    const std::vector<std::vector<Key>>& keys_per_member,
    bool skip_final_redistribution, SortOptions opt = {}) {
  const int w = static_cast<int>(W.size());
  if (static_cast<int>(keys_per_member.size()) != w) {
    throw SubsetSizeMismatch("need one key list per member of W");
  }
  int load = 0;
  for (const auto& ks : keys_per_member) {
    load = std::max(load, static_cast<int>(ks.size()));
  }
  if (load > 2 * n) {
    throw TooManyKeys("per-member load exceeds 2n");
  }

  std::map<NodeId, int> pos;
  for (int a = 0; a < w; ++a) pos[W[a]] = a;

  sorting_detail::SubsortParams sp;
  sp.W = W;
  sp.n = n;
  sp.load_cap = std::max(1, load);
  sp.skip_final = skip_final_redistribution;
  sp.tag = "op.subsort";

  auto fn = [sp, &pos, &keys_per_member](
                LaneCtx ctx) -> Task<sorting_detail::SubsortResult> {
    std::vector<Word> mine;
    auto it = pos.find(ctx.self());
    if (it != pos.end()) {
      for (const auto& k : keys_per_member[it->second]) {
        mine.push_back(key_word(k));
      }
    }
    auto res = co_await sorting_detail::subsort_protocol(ctx, sp,
                                                         std::move(mine));
    co_return res;
  };
  CliqueConfig cfg{n, sorting_detail::default_capacity(n, opt), opt.trace};
  auto run = run_protocol<sorting_detail::SubsortResult>(
      cfg, sorting_detail::sort_run_options(opt, 20), fn);

  SubsetSortReport rep;
  rep.rounds_used = run.engine.rounds_used;
  rep.max_load = run.engine.max_load;
  rep.steps = std::move(run.steps);
  rep.ranked.assign(n, {});
  for (NodeId v = 1; v <= n; ++v) {
    auto& res = run.per_node[v - 1];
    if (!pos.count(v)) continue;
    rep.bucket_union_sizes = res.bucket_union_sizes;
    for (size_t i = 0; i < res.piece.size(); ++i) {
      rep.ranked[v - 1].push_back(
          {word_key(res.piece[i]), res.offset + static_cast<long long>(i) + 1});
    }
  }
  return rep;
}

struct SortReport {
  int rounds_used = 0;
  int max_load = 0;
  std::vector<std::vector<Key>> blocks;  // [v-1]: global ranks (v-1)n+1..vn
  long long real_total = 0;
  std::vector<std::uint64_t> steps;
};

namespace sorting_detail {

inline std::vector<Word> entry_keys(const KeyInstance& inst, NodeId v) {
  std::vector<Word> mine;
  for (const auto& k : inst.by_node[v - 1]) mine.push_back(key_word(k));
  // sentinel padding keeps every node at exactly n keys; sentinels sort last
  // and never leave their node
  while (static_cast<int>(mine.size()) < inst.n) {
    mine.push_back(key_word(Key{~0ULL, static_cast<NodeId>(inst.n + 1),
                                static_cast<int>(mine.size())},
                            /*sentinel=*/true));
  }
  return mine;
}

}  // namespace sorting_detail

// 37-round global sort: node i ends up holding the keys of ranks
// (i-1)n+1 .. in of the total order.
inline SortReport sort_global(const KeyInstance& inst, SortOptions opt = {}) {
  inst.validate();
  const int n = inst.n;
  SortParams params;
  params.n = n;
  params.grp = Grouping::make(n);

  auto fn = [params, &inst](LaneCtx ctx) -> Task<SortCore> {
    auto res = co_await sort_protocol(
        ctx, params, sorting_detail::entry_keys(inst, ctx.self()));
    co_return res;
  };
  CliqueConfig cfg{n, sorting_detail::default_capacity(n, opt), opt.trace};
  auto run = run_protocol<SortCore>(
      cfg, sorting_detail::sort_run_options(opt, 80), fn);

  SortReport rep;
  rep.rounds_used = run.engine.rounds_used;
  rep.max_load = run.engine.max_load;
  rep.steps = std::move(run.steps);
  rep.blocks.assign(n, {});
  for (NodeId v = 1; v <= n; ++v) {
    rep.real_total = run.per_node[v - 1].real_total;
    for (auto& word : run.per_node[v - 1].block) {
      rep.blocks[v - 1].push_back(word_key(word));
    }
  }
  return rep;
}

struct RankDistinctReport {
  int rounds_used = 0;
  int max_load = 0;
  // [v-1]: (key, index among distinct values), sorted by local_index
  std::vector<std::vector<std::pair<Key, long long>>> labeled;
  std::vector<std::uint64_t> steps;
};

// Every input key labeled with its index in the sorted sequence of distinct
// values; duplicates share an index. At most 54 rounds (37 + 1 + 16).
inline RankDistinctReport rank_distinct(const KeyInstance& inst,
                                        SortOptions opt = {}) {
  inst.validate();
  const int n = inst.n;
  SortParams params;
  params.n = n;
  params.grp = Grouping::make(n);

  auto fn = [params, &inst](LaneCtx ctx) -> Task<RankCore> {
    auto res = co_await rank_protocol(
        ctx, params, sorting_detail::entry_keys(inst, ctx.self()));
    co_return res;
  };
  CliqueConfig cfg{n, sorting_detail::default_capacity(n, opt), opt.trace};
  auto run = run_protocol<RankCore>(
      cfg, sorting_detail::sort_run_options(opt, 120), fn);

  RankDistinctReport rep;
  rep.rounds_used = run.engine.rounds_used;
  rep.max_load = run.engine.max_load;
  rep.steps = std::move(run.steps);
  rep.labeled.assign(n, {});
  for (NodeId v = 1; v <= n; ++v) {
    std::map<int, const Key*> by_index;
    for (const auto& k : inst.by_node[v - 1]) by_index[k.local_index] = &k;
    for (auto& [local_index, rank] : run.per_node[v - 1].labels) {
      auto it = by_index.find(local_index);
      if (it == by_index.end()) {
        throw ProtocolAssertion("label for unknown key returned");
      }
      rep.labeled[v - 1].push_back({*it->second, rank});
    }
  }
  return rep;
}

// Key of global rank k (1-based), read off the owning node's block.
inline Key select_kth(const KeyInstance& inst, long long k,
                      SortOptions opt = {}) {
  auto rep = sort_global(inst, opt);
  if (k < 1 || k > rep.real_total) {
    throw KOutOfRange("k = " + std::to_string(k) + " outside [1, " +
                      std::to_string(rep.real_total) + "]");
  }
  const int owner = static_cast<int>((k - 1) / inst.n);
  return rep.blocks[owner][static_cast<size_t>((k - 1) % inst.n)];
}

// Most frequent value and its multiplicity, from the sorted blocks plus one
// boundary-run exchange (runs of one value span adjacent blocks). Ties go to
// the smaller value.
inline std::pair<std::uint64_t, long long> mode(const KeyInstance& inst,
                                                SortOptions opt = {}) {
  inst.validate();
  const int n = inst.n;
  SortParams params;
  params.n = n;
  params.grp = Grouping::make(n);

  struct ModeCore {
    std::uint64_t value = 0;
    long long count = 0;
  };
  auto fn = [params, &inst](LaneCtx ctx) -> Task<ModeCore> {
    auto core = co_await sort_protocol(
        ctx, params, sorting_detail::entry_keys(inst, ctx.self()));
    // boundary-run exchange: (first value, run), (last value, run),
    // (best interior value, count); interior = runs touching neither end
    std::uint64_t firstv = 0, lastv = 0, bestv = 0;
    long long firstc = 0, lastc = 0, bestc = 0;
    if (!core.block.empty()) {
      firstv = core.block.front().value;
      lastv = core.block.back().value;
      size_t i = 0;
      std::vector<std::pair<std::uint64_t, long long>> runs;
      while (i < core.block.size()) {
        size_t j = i;
        while (j < core.block.size() && core.block[j].value == core.block[i].value) {
          ++j;
        }
        runs.push_back({core.block[i].value, static_cast<long long>(j - i)});
        i = j;
      }
      firstc = runs.front().second;
      lastc = runs.back().second;
      for (size_t r = 1; r + 1 < runs.size(); ++r) {
        if (runs[r].second > bestc ||
            (runs[r].second == bestc && runs[r].first < bestv)) {
          bestv = runs[r].first;
          bestc = runs[r].second;
        }
      }
    }
    Word w1, w2, w3;
    w1.role = WordRole::count;
    w1.value = firstv;
    w1.meta = {static_cast<std::uint32_t>(ctx.self()), 1,
               static_cast<std::uint32_t>(firstc)};
    w2.role = WordRole::count;
    w2.value = lastv;
    w2.meta = {static_cast<std::uint32_t>(ctx.self()), 2,
               static_cast<std::uint32_t>(lastc)};
    w3.role = WordRole::count;
    w3.value = bestv;
    w3.meta = {static_cast<std::uint32_t>(ctx.self()), 3,
               static_cast<std::uint32_t>(bestc)};
    for (NodeId u = 1; u <= ctx.n(); ++u) {
      ctx.send(u, w1);
      ctx.send(u, w2);
      ctx.send(u, w3);
    }
    co_await ctx.tick();

    struct Edgeinfo {
      std::uint64_t firstv = 0, lastv = 0, bestv = 0;
      long long firstc = 0, lastc = 0, bestc = 0;
    };
    std::vector<Edgeinfo> info(ctx.n() + 1);
    for (auto& [src, word] : ctx.inbox()) {
      auto& e = info[word.meta[0]];
      if (word.meta[1] == 1) {
        e.firstv = word.value;
        e.firstc = word.meta[2];
      } else if (word.meta[1] == 2) {
        e.lastv = word.value;
        e.lastc = word.meta[2];
      } else {
        e.bestv = word.value;
        e.bestc = word.meta[2];
      }
    }
    ModeCore best;
    auto consider = [&](std::uint64_t v, long long c) {
      if (c > best.count || (c == best.count && c > 0 && v < best.value)) {
        best.value = v;
        best.count = c;
      }
    };
    std::uint64_t chainv = 0;
    long long chainc = 0;
    bool chain_open = false;
    for (NodeId v = 1; v <= ctx.n(); ++v) {
      const auto& e = info[v];
      if (e.firstc == 0) continue;  // empty block
      bool allsame = e.firstv == e.lastv;
      if (chain_open && e.firstv == chainv) {
        if (allsame) {
          chainc += e.firstc;
          continue;
        }
        consider(chainv, chainc + e.firstc);
      } else {
        if (chain_open) consider(chainv, chainc);
        if (allsame) {
          chainv = e.firstv;
          chainc = e.firstc;
          chain_open = true;
          continue;
        }
        consider(e.firstv, e.firstc);
      }
      consider(e.bestv, e.bestc);
      chainv = e.lastv;
      chainc = e.lastc;
      chain_open = true;
    }
    if (chain_open) consider(chainv, chainc);
    ctx.charge(ctx.n());
    co_return best;
  };
  CliqueConfig cfg{n, sorting_detail::default_capacity(n, opt), opt.trace};
  auto run = run_protocol<ModeCore>(
      cfg, sorting_detail::sort_run_options(opt, 80),
      std::function<Task<ModeCore>(LaneCtx)>(fn));
  for (int v = 1; v < n; ++v) {
    if (run.per_node[v].value != run.per_node[0].value ||
        run.per_node[v].count != run.per_node[0].count) {
      throw ProtocolAssertion("mode disagrees across nodes");
    }
  }
  return {run.per_node[0].value, run.per_node[0].count};
}

}  // namespace clique

#endif  // CLIQUE_SORTING_HPP
