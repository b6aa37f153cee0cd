// Copyright 2026 The msim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Microservice instance runtime: the pending queue, the queue-ordering
// policies, execution slices, and stage completion.

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msim/model.hpp"
#include "msim/sim_core.hpp"

namespace msim {

class WrongTarget : public Error {
 public:
  using Error::Error;
};

enum class DeadlineVariant { kEds, kExds };

struct QueuePolicy {
  enum class Kind { kFcfs, kShortestFirst, kFairShare, kEarlyDeadline };

  Kind kind = Kind::kFcfs;
  SimTime quantum{500};  // kFairShare only
  DeadlineVariant variant = DeadlineVariant::kEds;  // kEarlyDeadline only

  static QueuePolicy fcfs() { return {}; }
  static QueuePolicy shortest_first() { return {Kind::kShortestFirst}; }
  static QueuePolicy fair_share(SimTime quantum = SimTime{500}) {
    return {Kind::kFairShare, quantum};
  }
  static QueuePolicy early_deadline(DeadlineVariant v) {
    return {Kind::kEarlyDeadline, SimTime{500}, v};
  }

  bool operator==(const QueuePolicy&) const = default;
};

// Short names used by the CLI and in reports.
inline std::string_view to_string(const QueuePolicy& p) {
  switch (p.kind) {
    case QueuePolicy::Kind::kFcfs: return "fcfs";
    case QueuePolicy::Kind::kShortestFirst: return "sf";
    case QueuePolicy::Kind::kFairShare: return "fs";
    case QueuePolicy::Kind::kEarlyDeadline:
      return p.variant == DeadlineVariant::kEds ? "ed-eds" : "ed-exds";
  }
  return "unknown";
}

inline std::optional<QueuePolicy> parse_queue_policy(std::string_view name) {
  if (name == "fcfs") return QueuePolicy::fcfs();
  if (name == "sf") return QueuePolicy::shortest_first();
  if (name == "fs") return QueuePolicy::fair_share();
  if (name == "ed-eds") return QueuePolicy::early_deadline(DeadlineVariant::kEds);
  if (name == "ed-exds") {
    return QueuePolicy::early_deadline(DeadlineVariant::kExds);
  }
  return std::nullopt;
}

// Load figures the gateway's balancers look at.
struct InstanceLoadView {
  InstanceId instance;
  std::uint64_t queued_count = 0;  // waiting, not counting the running stage
  SimTime queued_exec_sum;         // sum of `remaining` over waiting stages
  SimTime current_remaining;       // 0 when idle
  bool running = false;            // a stage is executing

  // Active connections: waiting stages plus the one in service.
  std::uint64_t active() const { return queued_count + (running ? 1 : 0); }
  SimTime load() const { return queued_exec_sum + current_remaining; }
};

class Instance {
 public:
  Instance(InstanceId id, QueuePolicy policy) : id_(id), policy_(policy) {}

  const InstanceId& id() const { return id_; }
  const QueuePolicy& policy() const { return policy_; }
  bool idle() const { return current_ == nullptr; }
  std::size_t queue_length() const { return entries_.size(); }
  const CallNode* current() const { return current_; }
  SimTime slice_end() const { return slice_end_; }

  // Cumulative time spent executing completed slices.
  SimTime busy_accum() const { return busy_accum_; }

  // Busy time up to `now`, including progress of the running slice.
  SimTime busy_at(SimTime now) const {
    SimTime busy = busy_accum_;
    if (current_ != nullptr && now > slice_start_) {
      busy += std::min(now, slice_end_) - slice_start_;
    }
    return busy;
  }

  InstanceLoadView view(SimTime now) const {
    InstanceLoadView v;
    v.instance = id_;
    v.queued_count = entries_.size();
    v.queued_exec_sum = queued_remaining_;
    if (current_ != nullptr) {
      v.running = true;
      v.current_remaining =
          (slice_end_ > now ? slice_end_ - now : SimTime{}) + remaining_after_;
    }
    return v;
  }

  // Adds the stage to the queue. When the instance is idle the next stage
  // starts right away and the end of its first slice is returned.
  std::optional<SimTime> enqueue(CallNode& node, SimTime now) {
    if (node.stage.target != id_.ms) {
      throw WrongTarget("stage for M" + std::to_string(node.stage.target.index) +
                        " sent to instance " + to_string(id_));
    }
    push(node, now);
    if (!idle()) return std::nullopt;
    CallNode* next = pick_next(now);
    return execute_slice(*next, now);
  }

  // Removes and returns the stage the policy runs next; nullptr when the
  // queue is empty. Pre: idle().
  CallNode* pick_next(SimTime /*now*/) {
    if (entries_.empty()) return nullptr;
    Entry e;
    if (uses_heap()) {
      std::pop_heap(entries_.begin(), entries_.end(), Later{});
      e = entries_.back();
      entries_.pop_back();
    } else {
      e = entries_.front();
      entries_.pop_front();
    }
    queued_remaining_ -= e.node->stage.remaining;
    return e.node;
  }

  // Starts running `node` at `now`; returns when the slice ends. Fair share
  // runs at most one quantum, every other policy runs to completion.
  SimTime execute_slice(CallNode& node, SimTime now) {
    const SimTime rem = node.stage.remaining;
    SimTime len = rem;
    if (policy_.kind == QueuePolicy::Kind::kFairShare &&
        policy_.quantum < len) {
      len = policy_.quantum;
    }
    current_ = &node;
    slice_start_ = now;
    slice_end_ = now + len;
    remaining_after_ = rem - len;
    return slice_end_;
  }

  struct SliceOutcome {
    CallNode* completed = nullptr;        // stage that finished, if any
    std::optional<SimTime> next_slice_end;  // set when another slice started
  };

  // Closes the running slice at `now` (== slice_end()). An unfinished
  // fair-share stage goes back to the tail of the queue; then the next stage
  // is started if there is one.
  SliceOutcome finish_slice(SimTime now) {
    SliceOutcome out;
    CallNode* node = current_;
    busy_accum_ += slice_end_ - slice_start_;
    node->stage.remaining = remaining_after_;
    current_ = nullptr;
    if (node->stage.remaining.micros == 0) {
      out.completed = node;
    } else {
      push(*node, now);
    }
    if (CallNode* next = pick_next(now)) {
      out.next_slice_end = execute_slice(*next, now);
    }
    return out;
  }

 private:
  struct Entry {
    std::uint64_t key = 0;  // remaining (SF) or deadline (ED)
    std::uint64_t arrival = 0;
    std::uint64_t request_id = 0;
    std::uint64_t seq = 0;
    CallNode* node = nullptr;
  };

  // Max-heap comparator that puts the smallest key on top.
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.key != b.key) return a.key > b.key;
      if (a.arrival != b.arrival) return a.arrival > b.arrival;
      if (a.request_id != b.request_id) return a.request_id > b.request_id;
      return a.seq > b.seq;
    }
  };

  bool uses_heap() const {
    return policy_.kind == QueuePolicy::Kind::kShortestFirst ||
           policy_.kind == QueuePolicy::Kind::kEarlyDeadline;
  }

  void push(CallNode& node, SimTime now) {
    Entry e;
    e.arrival = now.micros;
    e.request_id = node.stage.request_id;
    e.seq = next_seq_++;
    e.node = &node;
    queued_remaining_ += node.stage.remaining;
    if (policy_.kind == QueuePolicy::Kind::kShortestFirst) {
      e.key = node.stage.remaining.micros;
    } else if (policy_.kind == QueuePolicy::Kind::kEarlyDeadline) {
      e.key = node.stage.deadline ? node.stage.deadline->micros
                                  : SimTime::max().micros;
    }
    entries_.push_back(e);
    if (uses_heap()) std::push_heap(entries_.begin(), entries_.end(), Later{});
  }

  InstanceId id_;
  QueuePolicy policy_;
  std::deque<Entry> entries_;
  SimTime queued_remaining_;
  std::uint64_t next_seq_ = 0;

  CallNode* current_ = nullptr;
  SimTime slice_start_;
  SimTime slice_end_;
  SimTime remaining_after_;
  SimTime busy_accum_;
};

// ---------------------------------------------------------------------------
// Request progress and deadlines

// Tracks which stages of a client request are still outstanding.
struct RequestProgress {
  ClientRequest request;
  std::size_t outstanding = 0;
  std::optional<SimTime> finished_at;

  explicit RequestProgress(ClientRequest req)
      : request(std::move(req)), outstanding(stage_count(request)) {}
};

// Marks `node` complete at `now` and returns its children for dispatch. The
// request is finished when its last stage completes.
inline std::vector<CallNode*> complete_stage(CallNode& node,
                                             RequestProgress& progress,
                                             SimTime now) {
  std::vector<CallNode*> next;
  next.reserve(node.children.size());
  for (auto& child : node.children) next.push_back(&child);
  if (progress.outstanding > 0 && --progress.outstanding == 0) {
    progress.finished_at = now;
  }
  return next;
}

namespace detail {

// created + round_half_up(sla * num / den), exact in 128-bit arithmetic.
inline SimTime scaled_deadline(SimTime created, SimTime sla, std::uint64_t num,
                               std::uint64_t den) {
  const unsigned __int128 scaled =
      static_cast<unsigned __int128>(sla.micros) * num * 2 + den;
  return created +
         SimTime{static_cast<std::uint64_t>(scaled / (2 * static_cast<unsigned __int128>(den)))};
}

}  // namespace detail

// Equal division of slack: the request's stages share the SLA equally over
// depth levels 0..d, where d is the deepest stage of the whole tree. A stage
// at depth k gets deadline created_at + (k+1) * sla / (d+1).
inline void assign_deadlines_eds(ClientRequest& req, std::uint32_t max_depth) {
  if (req.sla.micros == 0) throw ConfigError("sla: must be > 0");
  const std::uint32_t d = paths_max_depth(req);
  if (d > max_depth) {
    throw ConfigError("request " + std::to_string(req.request_id) +
                      " is deeper than the configured maximum depth");
  }
  for_each_node(req, [&](CallNode& n) {
    n.stage.deadline = detail::scaled_deadline(req.created_at, req.sla,
                                               n.stage.depth + 1, d + 1);
  });
}

// Execution-based division of slack: each depth level gets a share of the
// SLA proportional to its execution time (the longest stage at that level
// when the tree branches); deadlines accumulate the shares level by level.
inline void assign_deadlines_exds(ClientRequest& req) {
  if (req.sla.micros == 0) throw ConfigError("sla: must be > 0");
  std::vector<std::uint64_t> level_exec(paths_max_depth(req) + 1, 0);
  for_each_node(req, [&](const CallNode& n) {
    auto& slot = level_exec[n.stage.depth];
    slot = std::max(slot, n.stage.exec_time.micros);
  });
  std::vector<std::uint64_t> prefix(level_exec.size());
  std::uint64_t total = 0;
  for (std::size_t k = 0; k < level_exec.size(); ++k) {
    total += level_exec[k];
    prefix[k] = total;
  }
  if (total == 0) throw ConfigError("total execution time is zero");
  for_each_node(req, [&](CallNode& n) {
    n.stage.deadline = detail::scaled_deadline(req.created_at, req.sla,
                                               prefix[n.stage.depth], total);
  });
}

}  // namespace msim
