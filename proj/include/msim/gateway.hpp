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

// API gateway: service discovery, load balancing, and stage dispatch.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msim/instance.hpp"
#include "msim/model.hpp"
#include "msim/sim_core.hpp"

namespace msim {

class NoActiveInstance : public Error {
 public:
  using Error::Error;
};

class DuplicateInstance : public Error {
 public:
  using Error::Error;
};

class UnknownInstance : public Error {
 public:
  using Error::Error;
};

enum class LbPolicy { kRoundRobin, kLeastConnection, kGreedy };

inline std::string_view to_string(LbPolicy p) {
  switch (p) {
    case LbPolicy::kRoundRobin: return "rr";
    case LbPolicy::kLeastConnection: return "lc";
    case LbPolicy::kGreedy: return "greedy";
  }
  return "unknown";
}

inline std::optional<LbPolicy> parse_lb_policy(std::string_view name) {
  if (name == "rr") return LbPolicy::kRoundRobin;
  if (name == "lc") return LbPolicy::kLeastConnection;
  if (name == "greedy") return LbPolicy::kGreedy;
  return std::nullopt;
}

// Service discovery: the active instances of every microservice, in
// registration order, plus a round-robin cursor per microservice.
class Registry {
 public:
  explicit Registry(std::size_t microservices = 0) : entries_(microservices) {}

  std::size_t microservices() const { return entries_.size(); }

  void register_instance(InstanceId id) {
    grow_to(id.ms);
    auto& e = entries_[id.ms.index];
    if (std::find(e.instances.begin(), e.instances.end(), id) !=
        e.instances.end()) {
      throw DuplicateInstance("instance " + to_string(id) +
                              " is already registered");
    }
    e.instances.push_back(id);
  }

  void deregister_instance(InstanceId id) {
    if (id.ms.index >= entries_.size()) {
      throw UnknownInstance("instance " + to_string(id) + " is not registered");
    }
    auto& e = entries_[id.ms.index];
    auto it = std::find(e.instances.begin(), e.instances.end(), id);
    if (it == e.instances.end()) {
      throw UnknownInstance("instance " + to_string(id) + " is not registered");
    }
    const auto pos = static_cast<std::size_t>(it - e.instances.begin());
    e.instances.erase(it);
    // Keep the cursor on the instance that was next in line.
    if (pos < e.cursor) --e.cursor;
    if (e.cursor >= e.instances.size()) e.cursor = 0;
  }

  std::span<const InstanceId> instances(MicroserviceId ms) const {
    if (ms.index >= entries_.size()) return {};
    return entries_[ms.index].instances;
  }

  std::size_t cursor(MicroserviceId ms) const {
    return ms.index < entries_.size() ? entries_[ms.index].cursor : 0;
  }

  // Returns the instance under the cursor and advances the cursor.
  InstanceId select_round_robin(MicroserviceId ms) {
    if (ms.index >= entries_.size() || entries_[ms.index].instances.empty()) {
      throw NoActiveInstance("no active instance of M" +
                             std::to_string(ms.index));
    }
    auto& e = entries_[ms.index];
    const InstanceId chosen = e.instances[e.cursor];
    e.cursor = (e.cursor + 1) % e.instances.size();
    return chosen;
  }

 private:
  struct Entry {
    std::vector<InstanceId> instances;
    std::size_t cursor = 0;
  };

  void grow_to(MicroserviceId ms) {
    if (ms.index >= entries_.size()) entries_.resize(ms.index + 1);
  }

  std::vector<Entry> entries_;
};

namespace detail {

template <typename Metric>
InstanceId select_min(std::span<const InstanceLoadView> views, Metric metric) {
  if (views.empty()) throw NoActiveInstance("no instance to choose from");
  const InstanceLoadView* best = &views[0];
  for (const auto& v : views.subspan(1)) {
    const auto mv = metric(v);
    const auto mb = metric(*best);
    if (mv < mb || (mv == mb && v.instance.slot < best->instance.slot)) {
      best = &v;
    }
  }
  return best->instance;
}

}  // namespace detail

// Fewest active connections (waiting + in service); ties to the lowest slot.
inline InstanceId select_least_connection(
    std::span<const InstanceLoadView> views) {
  return detail::select_min(views,
                            [](const InstanceLoadView& v) { return v.active(); });
}

// Least outstanding work: queued remaining time plus what is left of the
// running stage; ties to the lowest slot.
inline InstanceId select_greedy(std::span<const InstanceLoadView> views) {
  return detail::select_min(views,
                            [](const InstanceLoadView& v) { return v.load(); });
}

// The running instances of a deployment, addressable by InstanceId.
class InstancePool {
 public:
  InstancePool() = default;

  // Deploys counts[m] instances of microservice m and registers them.
  InstancePool(const std::vector<std::uint32_t>& counts, QueuePolicy policy,
               Registry& registry) {
    offsets_.reserve(counts.size());
    for (std::uint32_t m = 0; m < counts.size(); ++m) {
      offsets_.push_back(instances_.size());
      for (std::uint32_t s = 0; s < counts[m]; ++s) {
        InstanceId id{MicroserviceId{m}, s};
        instances_.emplace_back(id, policy);
        registry.register_instance(id);
      }
    }
  }

  std::size_t size() const { return instances_.size(); }
  std::size_t index_of(InstanceId id) const {
    return offsets_.at(id.ms.index) + id.slot;
  }
  Instance& at(InstanceId id) { return instances_[index_of(id)]; }
  const Instance& at(InstanceId id) const { return instances_[index_of(id)]; }
  Instance& operator[](std::size_t i) { return instances_[i]; }
  const Instance& operator[](std::size_t i) const { return instances_[i]; }
  std::vector<Instance>& all() { return instances_; }
  const std::vector<Instance>& all() const { return instances_; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<Instance> instances_;
};

struct DispatchResult {
  InstanceId instance;
  std::optional<SimTime> slice_end;  // set when the instance started work
};

// Routes a stage to an instance of its target microservice and enqueues it
// there at `now`; the gateway adds no delay.
inline DispatchResult dispatch_stage(CallNode& node, LbPolicy policy,
                                     Registry& registry, InstancePool& pool,
                                     SimTime now) {
  const MicroserviceId ms = node.stage.target;
  InstanceId chosen;
  if (policy == LbPolicy::kRoundRobin) {
    chosen = registry.select_round_robin(ms);
  } else {
    const auto active = registry.instances(ms);
    if (active.empty()) {
      throw NoActiveInstance("no active instance of M" +
                             std::to_string(ms.index));
    }
    InstanceLoadView views[64];
    std::vector<InstanceLoadView> spill;
    std::span<InstanceLoadView> span;
    if (active.size() <= std::size(views)) {
      span = std::span(views, active.size());
    } else {
      spill.resize(active.size());
      span = spill;
    }
    for (std::size_t i = 0; i < active.size(); ++i) {
      span[i] = pool.at(active[i]).view(now);
    }
    chosen = policy == LbPolicy::kLeastConnection
                 ? select_least_connection(span)
                 : select_greedy(span);
  }
  node.stage.arrival_at_instance = now;
  return DispatchResult{chosen, pool.at(chosen).enqueue(node, now)};
}

}  // namespace msim
