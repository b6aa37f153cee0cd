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

#include <algorithm>
#include <deque>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "msim/instance.hpp"

namespace msim {
namespace {

const InstanceId kM0{MicroserviceId{0}, 0};

CallNode stage(std::uint64_t id, std::uint64_t exec,
               std::optional<std::uint64_t> deadline = std::nullopt) {
  CallNode n{make_stage(id, MicroserviceId{0}, micros(exec), 0, std::nullopt),
             {}};
  if (deadline) n.stage.deadline = micros(*deadline);
  return n;
}

TEST(Enqueue, IdleInstanceStartsAtOnce) {
  Instance inst(kM0, QueuePolicy::fcfs());
  auto a = stage(0, 1000);
  EXPECT_EQ(inst.enqueue(a, micros(40)), micros(1040));
  EXPECT_FALSE(inst.idle());
  EXPECT_EQ(inst.queue_length(), 0u);
}

TEST(Enqueue, BusyInstanceQueuesWithoutPreemption) {
  Instance inst(kM0, QueuePolicy::shortest_first());
  auto a = stage(0, 1000), b = stage(1, 10);
  inst.enqueue(a, micros(0));
  EXPECT_EQ(inst.enqueue(b, micros(5)), std::nullopt);
  EXPECT_EQ(inst.queue_length(), 1u);
  EXPECT_EQ(inst.current(), &a);
}

TEST(Enqueue, WrongTargetThrows) {
  Instance inst(kM0, QueuePolicy::fcfs());
  CallNode n{make_stage(0, MicroserviceId{1}, micros(5), 0, std::nullopt), {}};
  EXPECT_THROW(inst.enqueue(n, micros(0)), WrongTarget);
}

// Occupies the instance so the queue order can be observed.
struct Harness {
  explicit Harness(QueuePolicy p) : inst(kM0, p), blocker(stage(99, 1)) {
    inst.enqueue(blocker, micros(0));
  }
  std::vector<std::uint64_t> order() {
    std::vector<std::uint64_t> ids;
    auto out = inst.finish_slice(micros(1));
    while (inst.current() != nullptr) {
      ids.push_back(inst.current()->stage.request_id);
      out = inst.finish_slice(*out.next_slice_end);
    }
    return ids;
  }
  Instance inst;
  CallNode blocker;
};

TEST(PickNext, FcfsIsArrivalOrder) {
  Harness h(QueuePolicy::fcfs());
  std::deque<CallNode> s{stage(1, 10), stage(2, 5), stage(3, 1)};
  for (std::size_t i = 0; i < s.size(); ++i) {
    h.inst.enqueue(s[i], micros(0));
  }
  EXPECT_EQ(h.order(), (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(PickNext, ShortestFirstPicksMinimum) {
  Harness h(QueuePolicy::shortest_first());
  std::deque<CallNode> s{stage(1, 5000), stage(2, 200), stage(3, 1000)};
  for (auto& n : s) h.inst.enqueue(n, micros(0));
  EXPECT_EQ(h.order(), (std::vector<std::uint64_t>{2, 3, 1}));
}

TEST(PickNext, EarlyDeadlinePicksEarliest) {
  Harness h(QueuePolicy::early_deadline(DeadlineVariant::kEds));
  std::deque<CallNode> s{stage(1, 100, 9000), stage(2, 100, 7000)};
  for (auto& n : s) h.inst.enqueue(n, micros(0));
  EXPECT_EQ(h.order(), (std::vector<std::uint64_t>{2, 1}));
}

TEST(PickNext, TiesBreakByArrivalThenRequestId) {
  Harness h(QueuePolicy::shortest_first());
  std::deque<CallNode> s{stage(5, 10), stage(3, 10), stage(4, 10)};
  h.inst.enqueue(s[0], micros(0));
  h.inst.enqueue(s[1], micros(1));
  h.inst.enqueue(s[2], micros(1));
  EXPECT_EQ(h.order(), (std::vector<std::uint64_t>{5, 3, 4}));
}

TEST(ExecuteSlice, FairShareSplitsIntoQuanta) {
  Instance inst(kM0, QueuePolicy::fair_share(micros(500)));
  auto a = stage(0, 1200);
  std::vector<std::uint64_t> slices;
  SimTime t{}, end = *inst.enqueue(a, t);
  int requeues = 0;
  while (true) {
    slices.push_back((end - t).micros);
    t = end;
    auto out = inst.finish_slice(t);
    if (out.completed != nullptr) break;
    ++requeues;
    end = *out.next_slice_end;
  }
  EXPECT_EQ(slices, (std::vector<std::uint64_t>{500, 500, 200}));
  EXPECT_EQ(requeues, 2);
}

TEST(ExecuteSlice, FairShareShortJobIsOneSlice) {
  Instance inst(kM0, QueuePolicy::fair_share(micros(500)));
  auto a = stage(0, 300);
  EXPECT_EQ(inst.enqueue(a, micros(0)), micros(300));
  EXPECT_EQ(inst.finish_slice(micros(300)).completed, &a);
}

TEST(ExecuteSlice, FcfsRunsToCompletion) {
  Instance inst(kM0, QueuePolicy::fcfs());
  auto a = stage(0, 1000);
  EXPECT_EQ(inst.enqueue(a, micros(0)), micros(1000));
  auto out = inst.finish_slice(micros(1000));
  EXPECT_EQ(out.completed, &a);
  EXPECT_TRUE(inst.idle());
  EXPECT_EQ(inst.busy_accum(), micros(1000));
}

TEST(View, ReportsQueueAndRemaining) {
  Instance inst(kM0, QueuePolicy::fair_share(micros(500)));
  auto a = stage(0, 1200), b = stage(1, 300), c = stage(2, 700);
  inst.enqueue(a, micros(0));
  inst.enqueue(b, micros(0));
  inst.enqueue(c, micros(0));
  const auto v = inst.view(micros(200));
  EXPECT_EQ(v.queued_count, 2u);
  EXPECT_EQ(v.queued_exec_sum, micros(1000));
  EXPECT_EQ(v.current_remaining, micros(1000));
  EXPECT_TRUE(v.running);
  EXPECT_EQ(v.active(), 3u);
  EXPECT_EQ(inst.busy_at(micros(200)), micros(200));
}

TEST(CompleteStage, LeafFinishesRequest) {
  ClientRequest req;
  req.root_stages.push_back(stage(0, 10));
  RequestProgress p(std::move(req));
  auto next = complete_stage(p.request.root_stages[0], p, micros(10));
  EXPECT_TRUE(next.empty());
  EXPECT_EQ(p.finished_at, micros(10));
}

ClientRequest make_chain(std::uint64_t created, std::uint64_t sla,
                         const std::vector<std::uint64_t>& execs) {
  ClientRequest req;
  req.created_at = micros(created);
  req.sla = micros(sla);
  req.max_depth = static_cast<std::uint32_t>(execs.size() - 1);
  CallNode root{make_stage(0, MicroserviceId{0}, micros(execs[0]), 0,
                           std::nullopt),
                {}};
  CallNode* cur = &root;
  for (std::size_t i = 1; i < execs.size(); ++i) {
    const MicroserviceId parent = cur->stage.target;
    cur->children.push_back(
        CallNode{make_stage(0, MicroserviceId{parent.index ^ 1u},
                            micros(execs[i]), static_cast<std::uint32_t>(i),
                            parent),
                 {}});
    cur = &cur->children.back();
  }
  req.root_stages.push_back(std::move(root));
  return req;
}

std::vector<std::uint64_t> deadlines(const ClientRequest& req) {
  std::vector<std::uint64_t> out;
  for_each_node(req, [&](const CallNode& n) {
    out.push_back(n.stage.deadline->micros);
  });
  return out;
}

TEST(CompleteStage, ChainReleasesOneChild) {
  RequestProgress p(make_chain(0, 100, {1, 2, 3}));
  auto next = complete_stage(p.request.root_stages[0], p, micros(1));
  ASSERT_EQ(next.size(), 1u);
  EXPECT_EQ(next[0]->stage.depth, 1u);
  EXPECT_FALSE(p.finished_at);
  EXPECT_EQ(p.outstanding, 2u);
}

TEST(CompleteStage, FanoutReleasesAllChildren) {
  ClientRequest req;
  CallNode root = stage(0, 10);
  root.children.push_back(
      CallNode{make_stage(0, MicroserviceId{1}, micros(5), 1, MicroserviceId{0}), {}});
  root.children.push_back(
      CallNode{make_stage(0, MicroserviceId{2}, micros(5), 1, MicroserviceId{0}), {}});
  req.root_stages.push_back(std::move(root));
  RequestProgress p(std::move(req));
  EXPECT_EQ(complete_stage(p.request.root_stages[0], p, micros(10)).size(), 2u);
}

TEST(Eds, ChainOfThree) {
  auto req = make_chain(6000, 3000, {10, 10, 10});
  assign_deadlines_eds(req, 2);
  EXPECT_EQ(deadlines(req), (std::vector<std::uint64_t>{7000, 8000, 9000}));
}

TEST(Eds, DepthZeroGetsWholeSla) {
  auto req = make_chain(6000, 3000, {10});
  assign_deadlines_eds(req, 2);
  EXPECT_EQ(deadlines(req), (std::vector<std::uint64_t>{9000}));
  auto single = make_chain(0, 3000, {10});
  assign_deadlines_eds(single, 0);
  EXPECT_EQ(deadlines(single), (std::vector<std::uint64_t>{3000}));
}

TEST(Exds, ProportionalToExec) {
  auto req = make_chain(0, 3000, {100, 200, 100});
  assign_deadlines_exds(req);
  EXPECT_EQ(deadlines(req), (std::vector<std::uint64_t>{750, 2250, 3000}));
}

TEST(Exds, EqualExecMatchesEds) {
  auto a = make_chain(6000, 3000, {400, 400, 400});
  auto b = a;
  assign_deadlines_eds(a, 2);
  assign_deadlines_exds(b);
  EXPECT_EQ(deadlines(a), deadlines(b));
}

TEST(Exds, SingleStageGetsSla) {
  auto req = make_chain(5, 3000, {17});
  assign_deadlines_exds(req);
  EXPECT_EQ(deadlines(req), (std::vector<std::uint64_t>{3005}));
}

TEST(Deadlines, ZeroSlaIsConfigError) {
  auto req = make_chain(0, 0, {1});
  EXPECT_THROW(assign_deadlines_eds(req, 0), ConfigError);
  EXPECT_THROW(assign_deadlines_exds(req), ConfigError);
}

// Equal execution times give identical EDS and EXDS deadlines for any chain.
TEST(DeadlineProperty, EqualExecCollapses) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t len = 1 + gen() % 5;
    auto a = make_chain(gen() % 100000, 1 + gen() % 1000000,
                        std::vector<std::uint64_t>(len, 1 + gen() % 5000));
    auto b = a;
    assign_deadlines_eds(a, 4);
    assign_deadlines_exds(b);
    ASSERT_EQ(deadlines(a), deadlines(b));
  }
}

// Random arrivals on one instance: the instance never idles with work
// queued, busy time equals total execution, non-preemptive policies run each stage
// in one slice, and fair share runs a lone stage in ceil(exec/q) slices.
TEST(InstanceProperty, WorkConservationAndAccounting) {
  std::mt19937_64 gen(17);
  const QueuePolicy policies[] = {
      QueuePolicy::fcfs(), QueuePolicy::shortest_first(),
      QueuePolicy::fair_share(micros(50)),
      QueuePolicy::early_deadline(DeadlineVariant::kEds)};
  for (const auto& policy : policies) {
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + gen() % 15;
      std::deque<CallNode> nodes;
      std::vector<std::uint64_t> arrivals;
      std::uint64_t t = 0, total_exec = 0;
      for (std::size_t i = 0; i < n; ++i) {
        t += gen() % 200;
        const std::uint64_t exec = 1 + gen() % 300;
        total_exec += exec;
        nodes.push_back(stage(i, exec, t + gen() % 1000));
        arrivals.push_back(t);
      }
      Instance inst(kM0, policy);
      std::vector<int> slices(n, 0);
      std::size_t next = 0, done = 0;
      std::uint64_t now = 0;
      while (done < n) {
        const bool running = !inst.idle();
        if (next < n && (!running || arrivals[next] < inst.slice_end().micros)) {
          now = arrivals[next];
          inst.enqueue(nodes[next], micros(now));
          ++next;
        } else {
          ASSERT_TRUE(running);
          const CallNode* cur = inst.current();
          now = inst.slice_end().micros;
          ++slices[cur->stage.request_id];
          auto out = inst.finish_slice(micros(now));
          if (out.completed != nullptr) ++done;
        }
        ASSERT_TRUE(inst.queue_length() == 0 || !inst.idle());
      }
      EXPECT_EQ(inst.busy_accum().micros, total_exec);
      for (std::size_t i = 0; i < n; ++i) {
        if (policy.kind != QueuePolicy::Kind::kFairShare) {
          EXPECT_EQ(slices[i], 1);
        } else {
          const auto exec = nodes[i].stage.exec_time.micros;
          EXPECT_GE(slices[i], static_cast<int>((exec + 49) / 50));
        }
      }
    }
  }
}

TEST(FairShareProperty, LoneStageSliceCount) {
  for (std::uint64_t exec : {1u, 49u, 50u, 51u, 499u, 500u, 1201u}) {
    Instance inst(kM0, QueuePolicy::fair_share(micros(50)));
    auto a = stage(0, exec);
    SimTime end = *inst.enqueue(a, micros(0));
    std::uint64_t count = 1;
    for (auto out = inst.finish_slice(end); out.completed == nullptr;
         out = inst.finish_slice(end)) {
      end = *out.next_slice_end;
      ++count;
    }
    EXPECT_EQ(count, (exec + 49) / 50) << "exec " << exec;
    EXPECT_EQ(end, micros(exec));
  }
}

TEST(QueuePolicyNames, RoundTrip) {
  for (const char* name : {"fcfs", "sf", "fs", "ed-eds", "ed-exds"}) {
    const auto p = parse_queue_policy(name);
    ASSERT_TRUE(p);
    EXPECT_EQ(to_string(*p), name);
  }
  EXPECT_FALSE(parse_queue_policy("lifo"));
}

}  // namespace
}  // namespace msim
