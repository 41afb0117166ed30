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

// Seeded instance generators, centralized oracles, and the bench driver.
// Instances are pure functions of (kind, n, seed): the PRNG is SplitMix64
// and permutations come from Fisher-Yates seeded per permutation index, so
// any implementation of the same convention reproduces them bit for bit.

#ifndef CLIQUE_HARNESS_HPP
#define CLIQUE_HARNESS_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "clique/core.hpp"
#include "clique/routing.hpp"

namespace clique {

// SplitMix64 (Steele, Lea, Vigna): z += 0x9E3779B97F4A7C15 and two xor-shift
// multiplies. Small, seedable, widely documented.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, bound), bound > 0, via rejection sampling
  std::uint64_t below(std::uint64_t bound) {
    std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::uint64_t state_;
};

// Stream splitting: substream k of `seed` starts at SplitMix64(seed ^ mixed k).
inline std::uint64_t split_stream(std::uint64_t seed, std::uint64_t k) {
  SplitMix64 mix(k + 0x632BE59BD9B4E019ULL);
  return seed ^ mix.next();
}

// Fisher-Yates permutation of 1..n for permutation index j of `seed`.
inline std::vector<NodeId> seeded_permutation(int n, std::uint64_t seed,
                                              std::uint64_t j) {
  SplitMix64 rng(split_stream(seed, j));
  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), 1);
  for (int i = n - 1; i > 0; --i) {
    int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[i], perm[k]);
  }
  return perm;
}

enum class RoutingKind { random_balanced, identity, transpose, skew };

inline const char* to_string(RoutingKind k) {
  switch (k) {
    case RoutingKind::random_balanced: return "random-balanced";
    case RoutingKind::identity: return "identity";
    case RoutingKind::transpose: return "transpose";
    case RoutingKind::skew: return "skew";
  }
  return "?";
}

// Message j of node i goes to pi_j(i); composing n permutations keeps both
// send and receive counts at exactly n.
inline RoutingInstance gen_routing(RoutingKind kind, int n,
                                   std::uint64_t seed) {
  if (n < 1) throw InvalidInstance("n must be >= 1");
  RoutingInstance inst;
  inst.n = n;
  inst.by_source.assign(n, {});
  for (int j = 1; j <= n; ++j) {
    std::vector<NodeId> pi;
    switch (kind) {
      case RoutingKind::random_balanced:
        pi = seeded_permutation(n, seed, static_cast<std::uint64_t>(j));
        break;
      case RoutingKind::identity:
        pi.resize(n);
        std::iota(pi.begin(), pi.end(), 1);
        break;
      case RoutingKind::transpose:
        pi.assign(n, static_cast<NodeId>(j));
        break;
      case RoutingKind::skew: {
        // node 1 and node n trade all their traffic, the rest stays home
        pi.resize(n);
        std::iota(pi.begin(), pi.end(), 1);
        if (n > 1) std::swap(pi[0], pi[n - 1]);
        break;
      }
    }
    for (NodeId i = 1; i <= n; ++i) {
      std::uint64_t payload =
          split_stream(seed, (static_cast<std::uint64_t>(i) << 20) | j) % 1000000007ULL;
      inst.by_source[i - 1].push_back(Message{i, j, pi[i - 1], payload, false});
    }
  }
  return inst;
}

// Central ground truth: what each node must have received.
inline std::vector<std::vector<Message>> oracle_route(
    const RoutingInstance& inst) {
  std::vector<std::vector<Message>> want(inst.n);
  for (const auto& per : inst.by_source) {
    for (const auto& m : per) {
      if (!m.dummy) want[m.dst - 1].push_back(m);
    }
  }
  for (auto& v : want) std::sort(v.begin(), v.end());
  return want;
}

inline bool delivery_matches(const DeliveryReport& rep,
                             const RoutingInstance& inst) {
  auto want = oracle_route(inst);
  for (int k = 0; k < inst.n; ++k) {
    if (rep.received[k] != want[k]) return false;
  }
  return true;
}

}  // namespace clique

#endif  // CLIQUE_HARNESS_HPP
