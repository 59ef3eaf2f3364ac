/*
 * Copyright 2026 The Zaya Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// In-process multi-rank fabric. Every logical rank is a coroutine; a single
// OS thread resumes them round-robin in rank order. send() is buffered and
// never blocks; recv() suspends until a message is queued on the (peer, tag)
// channel. Channels are FIFO, so a run is a pure function of its programs.

#include <algorithm>
#include <coroutine>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "zaya/simfabric/task.hpp"

namespace zaya::sim {

using Payload = std::vector<double>;

struct DeadlockError : std::runtime_error {
  DeadlockError(const std::string& what, std::vector<int> cycle)
      : std::runtime_error(what), cycle(std::move(cycle)) {}
  std::vector<int> cycle;  // ranks on the wait-for cycle, in wait order
};

struct FabricError : std::logic_error {
  using std::logic_error::logic_error;
};

enum class EventKind { send, recv };

struct Event {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::send;
  int rank = 0;  // actor
  int peer = 0;
  int tag = 0;
  std::size_t elems = 0;
  friend bool operator==(const Event&, const Event&) = default;
};

class Fabric;

/// Per-rank endpoint handed to a rank's program.
class Comm {
 public:
  Comm(Fabric& f, int rank) : fabric_(&f), rank_(rank) {}

  int rank() const noexcept { return rank_; }
  int world_size() const noexcept;

  void send(int to, int tag, Payload data);

  struct RecvAwaiter {
    Fabric* fabric;
    int at, from, tag;
    Payload out;
    bool taken = false;
    bool await_ready();
    void await_suspend(std::coroutine_handle<> h);
    Payload await_resume();
  };
  RecvAwaiter recv(int from, int tag) { return RecvAwaiter{fabric_, rank_, from, tag, {}, false}; }

 private:
  Fabric* fabric_;
  int rank_;
};

class Fabric {
 public:
  explicit Fabric(int world_size) : world_(world_size) {
    if (world_size < 1) throw FabricError("fabric needs at least one rank");
  }

  int world_size() const noexcept { return world_; }

  /// Runs `program(comm)` on every rank to completion. Throws DeadlockError if
  /// every unfinished rank is blocked in recv, and rethrows the first
  /// exception raised by any rank program.
  template <typename Program>
  void run(Program&& program) {
    comms_.clear();
    procs_.clear();
    mailboxes_.clear();
    comms_.reserve(world_);
    for (int r = 0; r < world_; ++r) comms_.push_back(std::make_unique<Comm>(*this, r));
    procs_.resize(world_);
    for (int r = 0; r < world_; ++r) {
      procs_[r].root = std::make_unique<Task<void>>(program(*comms_[r]));
      procs_[r].resume_at = procs_[r].root->handle();
      procs_[r].state = State::runnable;
    }
    schedule();
  }

  const std::vector<Event>& transcript() const noexcept { return transcript_; }
  void clear_transcript() { transcript_.clear(); seq_ = 0; }

  std::size_t messages_sent() const {
    std::size_t n = 0;
    for (const auto& e : transcript_) n += e.kind == EventKind::send;
    return n;
  }
  std::size_t elems_sent() const {
    std::size_t n = 0;
    for (const auto& e : transcript_)
      if (e.kind == EventKind::send) n += e.elems;
    return n;
  }

 private:
  friend class Comm;
  enum class State { runnable, blocked, done };
  struct Proc {
    std::unique_ptr<Task<void>> root;
    std::coroutine_handle<> resume_at;
    State state = State::done;
    int wait_from = -1;
    int wait_tag = 0;
  };
  using Channel = std::tuple<int, int, int>;  // from, to, tag

  void check_rank(int r, const char* what) const {
    if (r < 0 || r >= world_) throw FabricError(std::string(what) + ": rank " + std::to_string(r) + " out of range");
  }

  void post(int from, int to, int tag, Payload data) {
    check_rank(to, "send");
    transcript_.push_back({seq_++, EventKind::send, from, to, tag, data.size()});
    mailboxes_[{from, to, tag}].push_back(std::move(data));
    auto& p = procs_[to];
    if (p.state == State::blocked && p.wait_from == from && p.wait_tag == tag) p.state = State::runnable;
  }

  bool try_take(int at, int from, int tag, Payload& out) {
    check_rank(from, "recv");
    auto it = mailboxes_.find({from, at, tag});
    if (it == mailboxes_.end() || it->second.empty()) return false;
    out = std::move(it->second.front());
    it->second.pop_front();
    transcript_.push_back({seq_++, EventKind::recv, at, from, tag, out.size()});
    return true;
  }

  void block(int at, int from, int tag, std::coroutine_handle<> h) {
    auto& p = procs_[at];
    p.state = State::blocked;
    p.wait_from = from;
    p.wait_tag = tag;
    p.resume_at = h;
  }

  void schedule() {
    for (;;) {
      bool progressed = false, all_done = true;
      for (int r = 0; r < world_; ++r) {
        auto& p = procs_[r];
        if (p.state == State::done) continue;
        all_done = false;
        if (p.state != State::runnable) continue;
        progressed = true;
        p.resume_at.resume();
        if (p.root->handle().done()) {
          p.state = State::done;
          if (auto err = p.root->handle().promise().error) std::rethrow_exception(err);
        }
      }
      if (all_done) return;
      if (!progressed) report_deadlock();
    }
  }

  [[noreturn]] void report_deadlock() const {
    int start = -1;
    for (int r = 0; r < world_; ++r)
      if (procs_[r].state == State::blocked) {
        start = r;
        break;
      }
    std::vector<int> path;
    std::set<int> seen;
    int cur = start;
    while (cur >= 0 && !seen.count(cur) && procs_[cur].state == State::blocked) {
      seen.insert(cur);
      path.push_back(cur);
      cur = procs_[cur].wait_from;
    }
    std::vector<int> cycle;
    std::ostringstream os;
    if (cur >= 0 && seen.count(cur)) {
      auto it = std::find(path.begin(), path.end(), cur);
      cycle.assign(it, path.end());
      os << "deadlock: wait-for cycle";
      for (int r : cycle) os << " rank " << r << " waits on rank " << procs_[r].wait_from << " (tag " << procs_[r].wait_tag << ");";
    } else {
      os << "deadlock: rank " << path.back() << " waits on finished rank " << cur;
      cycle = path;
    }
    throw DeadlockError(os.str(), cycle);
  }

  int world_;
  std::vector<std::unique_ptr<Comm>> comms_;
  std::vector<Proc> procs_;
  std::map<Channel, std::deque<Payload>> mailboxes_;
  std::vector<Event> transcript_;
  std::uint64_t seq_ = 0;
};

inline int Comm::world_size() const noexcept { return fabric_->world_size(); }
inline void Comm::send(int to, int tag, Payload data) { fabric_->post(rank_, to, tag, std::move(data)); }

inline bool Comm::RecvAwaiter::await_ready() { return taken = fabric->try_take(at, from, tag, out); }
inline void Comm::RecvAwaiter::await_suspend(std::coroutine_handle<> h) { fabric->block(at, from, tag, h); }
inline Payload Comm::RecvAwaiter::await_resume() {
  if (!taken && !fabric->try_take(at, from, tag, out)) throw FabricError("recv resumed without a message");
  return std::move(out);
}

}  // namespace zaya::sim
