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

// Coroutine layer for writing per-node protocol logic in round-synchronous
// style: code between two `co_await ctx.tick()` points runs within a single
// round, reading the words delivered at its start and queueing sends. Words
// flagged `hop` are forwarded to `fdst` by the runtime one round after
// arrival, which realizes the two-round relay patterns without any protocol
// code at intermediate nodes.

#ifndef CLIQUE_PROTO_HPP
#define CLIQUE_PROTO_HPP

#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clique/bipartite.hpp"
#include "clique/core.hpp"

namespace clique {

struct ProtocolAssertion : Error {
  using Error::Error;
};

template <typename T>
class Task;

namespace detail {

template <typename T>
struct TaskPromiseBase {
  std::exception_ptr error;
  std::coroutine_handle<> continuation;

  std::suspend_always initial_suspend() noexcept { return {}; }
  struct FinalAwaiter {
    bool await_ready() noexcept { return false; }
    template <typename P>
    std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) noexcept {
      auto c = h.promise().continuation;
      return c ? c : std::noop_coroutine();
    }
    void await_resume() noexcept {}
  };
  FinalAwaiter final_suspend() noexcept { return {}; }
  void unhandled_exception() { error = std::current_exception(); }
};

}  // namespace detail

// Lazy task with continuation chaining. `co_await task` starts the child and
// resumes the awaiting coroutine when the child completes, possibly many
// rounds later.
template <typename T = void>
class [[nodiscard]] Task {
 public:
  struct promise_type : detail::TaskPromiseBase<T> {
    std::optional<T> value;
    Task get_return_object() {
      return Task{std::coroutine_handle<promise_type>::from_promise(*this)};
    }
    void return_value(T v) { value = std::move(v); }
  };

  Task() = default;
  explicit Task(std::coroutine_handle<promise_type> h) : h_(h) {}
  Task(Task&& o) noexcept : h_(std::exchange(o.h_, {})) {}
  Task& operator=(Task&& o) noexcept {
    if (this != &o) {
      if (h_) h_.destroy();
      h_ = std::exchange(o.h_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() {
    if (h_) h_.destroy();
  }

  bool valid() const { return static_cast<bool>(h_); }
  bool finished() const { return h_ && h_.done(); }
  void start() { h_.resume(); }
  void rethrow_if_error() const {
    if (h_ && h_.done() && h_.promise().error) {
      std::rethrow_exception(h_.promise().error);
    }
  }

  auto operator co_await() {
    struct Awaiter {
      std::coroutine_handle<promise_type> h;
      bool await_ready() { return h.done(); }
      std::coroutine_handle<> await_suspend(std::coroutine_handle<> parent) {
        h.promise().continuation = parent;
        return h;
      }
      T await_resume() {
        if (h.promise().error) std::rethrow_exception(h.promise().error);
        return std::move(*h.promise().value);
      }
    };
    return Awaiter{h_};
  }

 private:
  std::coroutine_handle<promise_type> h_;
};

template <>
class [[nodiscard]] Task<void> {
 public:
  struct promise_type : detail::TaskPromiseBase<void> {
    Task get_return_object() {
      return Task{std::coroutine_handle<promise_type>::from_promise(*this)};
    }
    void return_void() {}
  };

  Task() = default;
  explicit Task(std::coroutine_handle<promise_type> h) : h_(h) {}
  Task(Task&& o) noexcept : h_(std::exchange(o.h_, {})) {}
  Task& operator=(Task&& o) noexcept {
    if (this != &o) {
      if (h_) h_.destroy();
      h_ = std::exchange(o.h_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() {
    if (h_) h_.destroy();
  }

  bool valid() const { return static_cast<bool>(h_); }
  bool finished() const { return h_ && h_.done(); }
  void start() { h_.resume(); }
  void rethrow_if_error() const {
    if (h_ && h_.done() && h_.promise().error) {
      std::rethrow_exception(h_.promise().error);
    }
  }

  auto operator co_await() {
    struct Awaiter {
      std::coroutine_handle<promise_type> h;
      bool await_ready() { return h.done(); }
      std::coroutine_handle<> await_suspend(std::coroutine_handle<> parent) {
        h.promise().continuation = parent;
        return h;
      }
      void await_resume() {
        if (h.promise().error) std::rethrow_exception(h.promise().error);
      }
    };
    return Awaiter{h_};
  }

 private:
  std::coroutine_handle<promise_type> h_;
};

// Exchange-pattern colorings are pure functions of commonly known counts, so
// by default each distinct pattern is computed once per run and shared. In
// strict mode every node recomputes its copy and the runtime asserts that
// independently computed patterns agree, which is the pattern-agreement check.
class PatternCache {
 public:
  struct Entry {
    EdgeColoring coloring;
    std::uint64_t ops = 0;
  };

  const Entry& get(const std::string& key, bool strict,
                   const std::function<Entry()>& compute) {
    auto it = entries_.find(key);
    if (!strict) {
      if (it != entries_.end()) {
        ++hits_;
        return it->second;
      }
      return entries_.emplace(key, compute()).first->second;
    }
    Entry fresh = compute();
    ++recomputations_;
    if (it != entries_.end()) {
      if (!(it->second.coloring == fresh.coloring)) {
        throw ProtocolAssertion("pattern agreement violated for key: " + key);
      }
      ++agreements_checked_;
      return it->second;
    }
    return entries_.emplace(key, std::move(fresh)).first->second;
  }

  std::uint64_t hits() const { return hits_; }
  std::uint64_t recomputations() const { return recomputations_; }
  std::uint64_t agreements_checked() const { return agreements_checked_; }

 private:
  std::map<std::string, Entry> entries_;
  std::uint64_t hits_ = 0, recomputations_ = 0, agreements_checked_ = 0;
};

// Values that must be identical across a node group (delimiters, announced
// counts) are recorded here under a common key and compared after the run.
class AuditLog {
 public:
  void record(const std::string& key, NodeId node,
              std::vector<std::uint64_t> blob) {
    entries_[key].push_back({node, std::move(blob)});
  }

  void validate() const {
    for (const auto& [key, recs] : entries_) {
      for (size_t i = 1; i < recs.size(); ++i) {
        if (recs[i].second != recs[0].second) {
          throw ProtocolAssertion("cross-node agreement violated: " + key);
        }
      }
    }
  }
  size_t keys() const { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::pair<NodeId, std::vector<std::uint64_t>>>>
      entries_;
};

// Run-wide shared state. Single-threaded by contract.
struct RunShared {
  PatternCache cache;
  AuditLog audit;
  bool strict_patterns = false;
  bool count_steps = false;
  std::vector<std::uint64_t> steps;  // per node, local computation charge
};

class NodeCtx {
 public:
  NodeCtx(int n, NodeId self, RunShared* shared)
      : n_(n), self_(self), shared_(shared) {}

  int n() const { return n_; }
  NodeId self() const { return self_; }
  int round() const { return round_; }
  RunShared& shared() { return *shared_; }

  void send(NodeId dst, Word w, std::uint8_t lane) {
    w.lane = lane;
    outbox_.push_back({dst, w});
  }

  // Arrivals this round on one lane, in deterministic (src, order) form.
  std::vector<std::pair<NodeId, Word>> inbox(std::uint8_t lane) const {
    std::vector<std::pair<NodeId, Word>> out;
    for (const auto& [src, w] : inbox_words_) {
      if (w.lane == lane) out.push_back({src, w});
    }
    return out;
  }

  void charge(std::uint64_t ops) {
    if (shared_->count_steps) shared_->steps[self_ - 1] += ops;
  }

  struct TickAwaiter {
    NodeCtx* ctx;
    bool await_ready() { return false; }
    void await_suspend(std::coroutine_handle<> h) {
      ctx->waiting_next_.push_back(h);
    }
    void await_resume() {}
  };
  TickAwaiter tick() { return TickAwaiter{this}; }

  // --- runtime side -------------------------------------------------------

  void begin_round(int round, const std::vector<Envelope>& inbox) {
    round_ = round;
    inbox_words_.clear();
    for (const auto& env : inbox) {
      for (const auto& w : env.words) {
        if (w.hop) {
          Word fwd = w;
          fwd.hop = false;
          NodeId dst = fwd.fdst;
          fwd.fdst = 0;
          outbox_.push_back({dst, fwd});
        } else {
          inbox_words_.push_back({env.src, w});
        }
      }
    }
  }

  void resume_waiting() {
    auto batch = std::move(waiting_next_);
    waiting_next_.clear();
    for (auto h : batch) h.resume();
  }

  void flush(RoundApi& api) {
    for (auto& [dst, w] : outbox_) api.send(dst, w);
    outbox_.clear();
  }

  bool parked() const { return !waiting_next_.empty(); }

 private:
  int n_;
  NodeId self_;
  RunShared* shared_;
  int round_ = 0;
  std::vector<std::pair<NodeId, Word>> inbox_words_;
  std::vector<std::pair<NodeId, Word>> outbox_;
  std::vector<std::coroutine_handle<>> waiting_next_;
};

// A node context bound to one traffic lane; protocol code works through this.
struct LaneCtx {
  NodeCtx* node;
  std::uint8_t lane = 0;

  int n() const { return node->n(); }
  NodeId self() const { return node->self(); }
  int round() const { return node->round(); }
  void send(NodeId dst, Word w) const { node->send(dst, std::move(w), lane); }
  std::vector<std::pair<NodeId, Word>> inbox() const {
    return node->inbox(lane);
  }
  auto tick() const { return node->tick(); }
  void charge(std::uint64_t ops) const { node->charge(ops); }
  RunShared& shared() const { return node->shared(); }
  void audit(const std::string& key, std::vector<std::uint64_t> blob) const {
    node->shared().audit.record(key, node->self(), std::move(blob));
  }
};

// Detached children stepped by the shared round scheduler; the parent polls
// all_done() once per round. Used for protocols composed in parallel lanes.
class ParallelSet {
 public:
  void spawn(Task<void> t) {
    tasks_.push_back(std::move(t));
    tasks_.back().start();
  }
  bool all_done() const {
    for (const auto& t : tasks_) {
      if (!t.finished()) return false;
    }
    return true;
  }
  void rethrow_if_error() const {
    for (const auto& t : tasks_) t.rethrow_if_error();
  }

 private:
  std::vector<Task<void>> tasks_;
};

namespace detail {

template <typename R>
class CoroutineProgram : public NodeProgram {
 public:
  CoroutineProgram(int n, NodeId self, RunShared* shared,
                   std::function<Task<R>(LaneCtx)> fn)
      : ctx_(n, self, shared), fn_(std::move(fn)) {}

  void step(RoundApi& api) override {
    ctx_.begin_round(api.round(), api.inbox());
    if (!started_) {
      started_ = true;
      root_ = wrap();
      root_.start();
    } else {
      ctx_.resume_waiting();
    }
    root_.rethrow_if_error();
    ctx_.flush(api);
  }

  bool done() const override { return started_ && root_.finished(); }

  R& result() {
    root_.rethrow_if_error();
    if (!result_) throw ProtocolAssertion("protocol produced no result");
    return *result_;
  }

 private:
  Task<void> wrap() {
    result_ = co_await fn_(LaneCtx{&ctx_, 0});
  }

  NodeCtx ctx_;
  std::function<Task<R>(LaneCtx)> fn_;
  Task<void> root_;
  bool started_ = false;
  std::optional<R> result_;
};

}  // namespace detail

struct RunOptions {
  int max_rounds = 400;
  bool trace_enabled = false;
  bool strict_patterns = false;
  bool count_steps = false;
  std::optional<FaultSpec> fault;
};

template <typename R>
struct ProtocolRun {
  RunResult engine;
  std::vector<R> per_node;
  std::vector<std::uint64_t> steps;
  std::uint64_t pattern_agreements = 0;
};

// Runs one coroutine protocol on every node and collects per-node results.
// The audit log is validated before returning.
template <typename R>
ProtocolRun<R> run_protocol(CliqueConfig config, const RunOptions& opt,
                            std::function<Task<R>(LaneCtx)> fn) {
  config.trace_enabled = opt.trace_enabled;
  RunShared shared;
  shared.strict_patterns = opt.strict_patterns;
  shared.count_steps = opt.count_steps;
  shared.steps.assign(config.n, 0);

  std::vector<std::unique_ptr<NodeProgram>> programs;
  programs.reserve(config.n);
  for (NodeId v = 1; v <= config.n; ++v) {
    programs.push_back(std::make_unique<detail::CoroutineProgram<R>>(
        config.n, v, &shared, fn));
  }
  Engine engine(config);
  ProtocolRun<R> out;
  out.engine = engine.run(programs, opt.max_rounds, opt.fault);
  shared.audit.validate();
  out.pattern_agreements = shared.cache.agreements_checked();
  out.steps = std::move(shared.steps);
  out.per_node.reserve(config.n);
  for (auto& p : programs) {
    out.per_node.push_back(
        std::move(static_cast<detail::CoroutineProgram<R>*>(p.get())->result()));
  }
  return out;
}

}  // namespace clique

#endif  // CLIQUE_PROTO_HPP
