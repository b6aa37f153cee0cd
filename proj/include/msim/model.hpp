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

#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msim/sim_core.hpp"

namespace msim {

class ModelError : public Error {
 public:
  using Error::Error;
};

struct MicroserviceId {
  std::uint32_t index = 0;
  constexpr auto operator<=>(const MicroserviceId&) const = default;
};

struct InstanceId {
  MicroserviceId ms;
  std::uint32_t slot = 0;
  constexpr auto operator<=>(const InstanceId&) const = default;
};

inline std::string to_string(InstanceId id) {
  return "M" + std::to_string(id.ms.index) + "/" + std::to_string(id.slot);
}

// One microservice invocation inside a client request.
struct StageRequest {
  std::uint64_t request_id = 0;
  MicroserviceId target;
  SimTime exec_time;
  std::uint32_t depth = 0;
  std::optional<MicroserviceId> called_by;
  std::optional<SimTime> arrival_at_instance;
  std::optional<SimTime> deadline;
  SimTime remaining;
};

inline StageRequest make_stage(std::uint64_t request_id, MicroserviceId target,
                               SimTime exec_time, std::uint32_t depth,
                               std::optional<MicroserviceId> called_by) {
  StageRequest s;
  s.request_id = request_id;
  s.target = target;
  s.exec_time = exec_time;
  s.depth = depth;
  s.called_by = called_by;
  s.remaining = exec_time;
  return s;
}

// A stage plus the invocations it triggers once it completes.
struct CallNode {
  StageRequest stage;
  std::vector<CallNode> children;
};

struct ClientRequest {
  std::uint64_t request_id = 0;
  SimTime created_at;
  SimTime sla;
  std::uint32_t max_depth = 0;
  std::vector<CallNode> root_stages;
};

namespace detail {

template <typename Node, typename Fn>
void walk(Node& node, Fn& fn) {
  fn(node);
  for (auto& child : node.children) walk(child, fn);
}

inline std::uint64_t max_path_exec(const CallNode& node) {
  std::uint64_t best = 0;
  for (const auto& child : node.children) {
    best = std::max(best, max_path_exec(child));
  }
  return node.stage.exec_time.micros + best;
}

}  // namespace detail

// Pre-order visit of every node of the request.
template <typename Fn>
void for_each_node(ClientRequest& req, Fn&& fn) {
  for (auto& root : req.root_stages) detail::walk(root, fn);
}

template <typename Fn>
void for_each_node(const ClientRequest& req, Fn&& fn) {
  for (const auto& root : req.root_stages) detail::walk(root, fn);
}

inline std::size_t stage_count(const ClientRequest& req) {
  std::size_t n = 0;
  for_each_node(req, [&](const CallNode&) { ++n; });
  return n;
}

// Largest stage depth in the request; 0 when no stage calls another.
inline std::uint32_t paths_max_depth(const ClientRequest& req) {
  std::uint32_t depth = 0;
  for_each_node(req, [&](const CallNode& n) {
    depth = std::max(depth, n.stage.depth);
  });
  return depth;
}

// Longest root-to-leaf sum of execution times.
inline SimTime critical_path_exec(const ClientRequest& req) {
  std::uint64_t best = 0;
  for (const auto& root : req.root_stages) {
    best = std::max(best, detail::max_path_exec(root));
  }
  return SimTime{best};
}

// Throws ModelError describing the first structural violation found.
inline void validate(const ClientRequest& req) {
  if (req.root_stages.empty()) {
    throw ModelError("request " + std::to_string(req.request_id) +
                     " has no stages");
  }
  auto fail = [&](const std::string& what) {
    throw ModelError("request " + std::to_string(req.request_id) + ": " +
                     what);
  };
  auto check = [&](auto& self, const CallNode& node,
                   const CallNode* parent) -> void {
    const StageRequest& s = node.stage;
    if (s.request_id != req.request_id) fail("stage carries a foreign id");
    if (s.exec_time.micros == 0) fail("zero execution time");
    if (s.remaining > s.exec_time) fail("remaining exceeds execution time");
    if (s.depth > req.max_depth) fail("path exceeds maximum depth");
    if (s.deadline && *s.deadline < req.created_at) {
      fail("deadline precedes creation");
    }
    if (parent == nullptr) {
      if (s.depth != 0) fail("root stage at non-zero depth");
      if (s.called_by) fail("root stage has a caller");
    } else {
      const StageRequest& p = parent->stage;
      if (s.depth != p.depth + 1) fail("child depth is not parent depth + 1");
      if (!s.called_by || *s.called_by != p.target) {
        fail("child caller does not match parent target");
      }
      if (s.target == p.target) fail("microservice calls itself");
    }
    for (const auto& child : node.children) self(self, child, &node);
  };
  for (const auto& root : req.root_stages) check(check, root, nullptr);
}

}  // namespace msim
