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

// Synchronous-round execution engine for a fully connected message-passing
// system of n nodes. Each directed edge (including self-edges) carries at
// most `edge_capacity_words` word slots per round; a word models one
// O(log n)-bit quantity. Local computation is free; cost is rounds only.

#ifndef CLIQUE_CORE_HPP
#define CLIQUE_CORE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace clique {

using NodeId = int;  // 1-based, globally known

enum class WordRole : std::uint8_t { payload, header, count, key, dummy };

// One word slot. `value` is the primary quantity; `meta` holds the constant
// number of header integers folded into the slot by convention (for a routing
// message: src, index, dst; for a key: origin, local_index). `fdst`/`hop`
// drive the generic one-hop relay service and `lane` tags traffic of
// concurrently composed protocols.
struct Word {
  WordRole role = WordRole::payload;
  bool hop = false;
  std::uint8_t lane = 0;
  NodeId fdst = 0;
  std::uint64_t value = 0;
  std::array<std::uint32_t, 3> meta{0, 0, 0};
  std::array<std::uint32_t, 2> aux{0, 0};  // transport scratch (deal metadata)

  friend bool operator==(const Word&, const Word&) = default;
};

struct Envelope {
  NodeId src = 0;
  NodeId dst = 0;
  int round = 0;
  std::vector<Word> words;
};

struct CliqueConfig {
  int n = 1;
  int edge_capacity_words = 1;
  bool trace_enabled = false;
};

// Word counts for one round. `loads` is flattened (src-1)*n + (dst-1) and is
// populated only when tracing is on; `max_load` is always exact.
struct RoundTrace {
  int round = 0;
  int max_load = 0;
  std::uint64_t total_words = 0;
  std::vector<std::uint32_t> loads;

  std::uint32_t load(NodeId src, NodeId dst, int n) const {
    return loads.empty() ? 0 : loads[static_cast<size_t>(src - 1) * n + (dst - 1)];
  }
};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CapacityExceeded : Error {
  NodeId src, dst;
  int round;
  CapacityExceeded(NodeId s, NodeId d, int r, int words, int cap)
      : Error("capacity exceeded on edge (" + std::to_string(s) + "," +
              std::to_string(d) + ") in round " + std::to_string(r) + ": " +
              std::to_string(words) + " words > " + std::to_string(cap)),
        src(s), dst(d), round(r) {}
};

struct NonTermination : Error {
  explicit NonTermination(int max_rounds)
      : Error("run exceeded max_rounds = " + std::to_string(max_rounds)) {}
};

struct OutOfRange : Error {
  using Error::Error;
};

struct PreconditionViolated : Error {
  using Error::Error;
};

struct InvalidInstance : Error {
  using Error::Error;
};

// Per-round view handed to a program's step function. A program reads the
// envelopes delivered this round (sent in the previous one) and queues sends.
class RoundApi {
 public:
  RoundApi(int n, NodeId self, int round, const std::vector<Envelope>* inbox)
      : n_(n), self_(self), round_(round), inbox_(inbox) {}

  int n() const { return n_; }
  NodeId self() const { return self_; }
  int round() const { return round_; }
  const std::vector<Envelope>& inbox() const { return *inbox_; }

  void send(NodeId dst, Word w) {
    outbox_[dst].push_back(w);
  }
  void send(NodeId dst, const std::vector<Word>& ws) {
    auto& v = outbox_[dst];
    v.insert(v.end(), ws.begin(), ws.end());
  }

  std::map<NodeId, std::vector<Word>>& outbox() { return outbox_; }

 private:
  int n_;
  NodeId self_;
  int round_;
  const std::vector<Envelope>* inbox_;
  std::map<NodeId, std::vector<Word>> outbox_;
};

// Behavioral contract: step() must be a pure function of the program's own
// state and inbox. done() signals completion.
class NodeProgram {
 public:
  virtual ~NodeProgram() = default;
  virtual void step(RoundApi& api) = 0;
  virtual bool done() const = 0;
};

// Drops a single word (the first one) queued on edge (src, dst) in `round`.
// Used by the harness to prove that verdicts are oracle-driven.
struct FaultSpec {
  int round = 0;
  NodeId src = 0;
  NodeId dst = 0;
};

struct RunResult {
  int rounds_used = 0;     // rounds in which at least one non-empty envelope was sent
  int rounds_executed = 0; // includes trailing delivery-only rounds
  int max_load = 0;
  std::uint64_t words_sent = 0;
  std::uint64_t words_delivered = 0;
  std::vector<RoundTrace> traces;
};

// Deterministic synchronous executor. Envelopes emitted in round r are
// delivered to inboxes at round r+1, never earlier or later. Single-threaded;
// programs are pure per the contract, so one engine object must not be shared
// across concurrent runs.
class Engine {
 public:
  explicit Engine(CliqueConfig config) : config_(config) {}

  RunResult run(std::vector<std::unique_ptr<NodeProgram>>& programs,
                int max_rounds,
                std::optional<FaultSpec> fault = std::nullopt) {
    const int n = config_.n;
    if (static_cast<int>(programs.size()) != n) {
      throw PreconditionViolated("need exactly one program per node");
    }
    RunResult result;
    // inflight[k] = envelopes to deliver to node k+1 next round
    std::vector<std::vector<Envelope>> inflight(n);
    bool anything_inflight = false;

    for (int round = 1;; ++round) {
      bool all_done = true;
      for (auto& p : programs) {
        if (!p->done()) { all_done = false; break; }
      }
      if (all_done && !anything_inflight) break;
      if (round > max_rounds) throw NonTermination(max_rounds);

      std::vector<std::vector<Envelope>> inboxes = std::move(inflight);
      inflight.assign(n, {});
      anything_inflight = false;

      RoundTrace trace;
      trace.round = round;
      if (config_.trace_enabled) {
        trace.loads.assign(static_cast<size_t>(n) * n, 0);
      }

      for (NodeId v = 1; v <= n; ++v) {
        auto& program = *programs[v - 1];
        RoundApi api(n, v, round, &inboxes[v - 1]);
        program.step(api);
        for (auto& [dst, words] : api.outbox()) {
          if (dst < 1 || dst > n) {
            throw PreconditionViolated("send to node outside [1, n]");
          }
          if (words.empty()) continue;
          if (fault && fault->round == round && fault->src == v &&
              fault->dst == dst) {
            words.erase(words.begin());
            fault.reset();
            if (words.empty()) continue;
          }
          const int load = static_cast<int>(words.size());
          if (load > config_.edge_capacity_words) {
            throw CapacityExceeded(v, dst, round, load,
                                   config_.edge_capacity_words);
          }
          if (config_.trace_enabled) {
            trace.loads[static_cast<size_t>(v - 1) * n + (dst - 1)] = load;
          }
          trace.max_load = std::max(trace.max_load, load);
          trace.total_words += load;
          Envelope env{v, dst, round, std::move(words)};
          inflight[dst - 1].push_back(std::move(env));
          anything_inflight = true;
        }
      }

      result.rounds_executed = round;
      result.max_load = std::max(result.max_load, trace.max_load);
      result.words_sent += trace.total_words;
      if (trace.total_words > 0) result.rounds_used += 1;
      for (auto& per_node : inflight) {
        for (auto& env : per_node) result.words_delivered += env.words.size();
      }
      result.traces.push_back(std::move(trace));
    }
    return result;
  }

  const CliqueConfig& config() const { return config_; }

 private:
  CliqueConfig config_;
};

// JSON-lines trace output, one record per round. Per-edge loads are included
// only when the run was traced.
inline void write_trace_jsonl(std::ostream& os, const RunResult& result, int n) {
  for (const auto& t : result.traces) {
    os << "{\"round\":" << t.round << ",\"max_load\":" << t.max_load;
    if (!t.loads.empty()) {
      os << ",\"edges\":[";
      bool first = true;
      for (NodeId s = 1; s <= n; ++s) {
        for (NodeId d = 1; d <= n; ++d) {
          auto w = t.loads[static_cast<size_t>(s - 1) * n + (d - 1)];
          if (w == 0) continue;
          if (!first) os << ",";
          first = false;
          os << "[" << s << "," << d << "," << w << "]";
        }
      }
      os << "]";
    }
    os << "}\n";
  }
}

// Square-grid partition used by the routing and sorting algorithms: block i
// of floor(sqrt(n)) consecutive ids. Only defined up to floor(sqrt(n))^2;
// remaining nodes are the business of the general-n path.
struct SubsetId {
  int index = 0;  // in [1, floor(sqrt(n))]
  NodeId first = 0, last = 0;
};

inline int isqrt_floor(int n) {
  int s = static_cast<int>(std::max(0.0, std::sqrt(static_cast<double>(n))));
  while ((s + 1) * (s + 1) <= n) ++s;
  while (s * s > n) --s;
  return s;
}

inline SubsetId subset_of(NodeId node, int n) {
  const int s = isqrt_floor(n);
  if (node < 1 || node > s * s) {
    throw OutOfRange("node " + std::to_string(node) +
                     " outside the square partition of n = " + std::to_string(n));
  }
  const int idx = (node - 1) / s + 1;
  return SubsetId{idx, (idx - 1) * s + 1, idx * s};
}

}  // namespace clique

#endif  // CLIQUE_CORE_HPP
