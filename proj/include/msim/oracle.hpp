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

// Reference results the simulator is checked against: the M/G/1 mean wait
// and a microsecond-stepping single-server scheduler that shares no code
// with the event engine.

#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "msim/instance.hpp"
#include "msim/sim_core.hpp"

namespace msim::oracle {

class UnstableSystem : public Error {
 public:
  using Error::Error;
};

struct Mg1Params {
  double lambda = 0.0;  // arrivals per microsecond
  double es = 0.0;      // mean service time, us
  double es2 = 0.0;     // second moment of service time, us^2
};

// Pollaczek-Khinchine mean time spent waiting in queue (FCFS), in us.
inline double mg1_fcfs_mean_wait(const Mg1Params& p) {
  const double rho = p.lambda * p.es;
  if (!(rho < 1.0)) {
    throw UnstableSystem("utilization " + std::to_string(rho) + " >= 1");
  }
  return p.lambda * p.es2 / (2.0 * (1.0 - rho));
}

struct ScheduledStage {
  std::uint64_t id = 0;  // request id, used for tie-breaking
  SimTime arrival;
  SimTime exec;
  std::optional<SimTime> deadline;  // early-deadline policy only
};

struct StageTiming {
  SimTime start;       // first time the stage ran
  SimTime completion;
  bool operator==(const StageTiming&) const = default;
};

// Runs the stages on one server by advancing a clock one microsecond at a
// time. At any instant, arrivals are admitted first (an idle server starts
// the arrival at once), then a slice that ends at that instant is closed
// and the policy picks the next stage.
inline std::vector<StageTiming> brute_force_schedule(
    const std::vector<ScheduledStage>& stages, const QueuePolicy& policy) {
  const std::size_t n = stages.size();
  std::vector<StageTiming> out(n);
  std::vector<std::uint64_t> remaining(n);
  std::vector<bool> started(n, false);
  for (std::size_t i = 0; i < n; ++i) remaining[i] = stages[i].exec.micros;

  struct Waiting {
    std::size_t idx;
    std::uint64_t stamp;  // time it (re)joined the queue
    std::uint64_t seq;
  };
  std::vector<Waiting> queue;  // kept in join order
  std::uint64_t seq = 0;

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t running = kNone;
  std::uint64_t slice_left = 0;

  const bool fair = policy.kind == QueuePolicy::Kind::kFairShare;
  const std::uint64_t quantum = policy.quantum.micros;

  auto pick = [&]() -> std::size_t {
    if (queue.empty()) return kNone;
    std::size_t best = 0;
    if (policy.kind == QueuePolicy::Kind::kShortestFirst ||
        policy.kind == QueuePolicy::Kind::kEarlyDeadline) {
      auto key = [&](const Waiting& w) {
        const auto& s = stages[w.idx];
        std::uint64_t primary;
        if (policy.kind == QueuePolicy::Kind::kShortestFirst) {
          primary = remaining[w.idx];
        } else {
          primary = s.deadline ? s.deadline->micros
                               : std::numeric_limits<std::uint64_t>::max();
        }
        return std::tuple(primary, w.stamp, s.id, w.seq);
      };
      for (std::size_t k = 1; k < queue.size(); ++k) {
        if (key(queue[k]) < key(queue[best])) best = k;
      }
    }
    const std::size_t idx = queue[best].idx;
    queue.erase(queue.begin() + static_cast<std::ptrdiff_t>(best));
    return idx;
  };

  auto start = [&](std::size_t idx, std::uint64_t t) {
    running = idx;
    slice_left = fair && quantum < remaining[idx] ? quantum : remaining[idx];
    if (!started[idx]) {
      started[idx] = true;
      out[idx].start = SimTime{t};
    }
  };

  std::size_t done = 0;
  for (std::uint64_t t = 0; done < n; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (stages[i].arrival.micros != t) continue;
      queue.push_back({i, t, seq++});
      if (running == kNone) start(pick(), t);
    }
    if (running != kNone && slice_left == 0) {
      const std::size_t idx = running;
      running = kNone;
      if (remaining[idx] == 0) {
        out[idx].completion = SimTime{t};
        ++done;
      } else {
        queue.push_back({idx, t, seq++});
      }
      if (const auto next = pick(); next != kNone) start(next, t);
    }
    if (running != kNone) {
      --slice_left;
      --remaining[running];
    }
  }
  return out;
}

}  // namespace msim::oracle
