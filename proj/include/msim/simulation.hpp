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

// One simulation run: deploys the instances, feeds client requests through
// the gateway, and collects the usage monitor's records.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "msim/config.hpp"
#include "msim/gateway.hpp"
#include "msim/instance.hpp"
#include "msim/metrics.hpp"
#include "msim/model.hpp"
#include "msim/sim_core.hpp"
#include "msim/workload.hpp"

namespace msim {

// Declaration order is the delivery order for events at the same instant.
enum class EventKind : std::uint8_t {
  kRequestArrival,
  kStageDispatch,
  kExecutionSliceComplete,
  kUtilizationSample,
  kSimulationEnd,
};

struct SimEvent {
  EventKind kind = EventKind::kSimulationEnd;
  std::uint32_t index = 0;  // instance index or sample series
  CallNode* node = nullptr;  // stage to dispatch
};

struct EventKindRank {
  std::uint32_t operator()(const SimEvent& e) const {
    return static_cast<std::uint32_t>(e.kind);
  }
};

struct SimResult {
  SimReport report;
  Recorder records;
  std::vector<TraceRow> trace;  // filled when trace collection was asked for
  // Per-instance utilization windows of both sampling series.
  std::vector<UtilizationSeries::Window> utilization_windows;
  std::vector<UtilizationSeries::Window> imbalance_windows;
  std::uint64_t events = 0;
};

class Simulator {
 public:
  // Generates the workload from the configured statistical models.
  explicit Simulator(SimConfig cfg, bool collect_trace = false)
      : cfg_(std::move(cfg)), collect_trace_(collect_trace) {
    validate(cfg_);
    max_depth_ = cfg_.workload.depth.max_depth();
    streams_.emplace(cfg_.seed);
  }

  // Runs a fixed list of client requests instead (trace replay). The
  // statistical samplers are never consulted.
  Simulator(SimConfig cfg, std::vector<ClientRequest> requests,
            bool collect_trace = false)
      : cfg_(std::move(cfg)),
        collect_trace_(collect_trace),
        replay_(std::move(requests)) {
    validate(cfg_);
    std::stable_sort(replay_->begin(), replay_->end(),
                     [](const ClientRequest& a, const ClientRequest& b) {
                       return a.created_at < b.created_at;
                     });
    max_depth_ = 0;
    for (const auto& req : *replay_) {
      msim::validate(req);
      for_each_node(req, [&](const CallNode& n) {
        if (n.stage.target.index >= cfg_.microservices.size()) {
          throw ConfigError("request " + std::to_string(req.request_id) +
                            " calls M" + std::to_string(n.stage.target.index) +
                            " but only " +
                            std::to_string(cfg_.microservices.size()) +
                            " microservices are configured");
        }
      });
      max_depth_ = std::max(max_depth_, paths_max_depth(req));
    }
  }

  const SimConfig& config() const { return cfg_; }

  SimResult run() {
    registry_ = Registry(cfg_.microservices.size());
    pool_ = InstancePool(cfg_.microservices, cfg_.queue_policy, registry_);
    util_.emplace(cfg_.utilization_interval, pool_.size());
    imb_.emplace(cfg_.imbalance_interval, pool_.size());
    busy_scratch_.resize(pool_.size());

    for (SimTime t : window_ends(cfg_.utilization_interval, cfg_.end_time)) {
      queue_.schedule(t, {EventKind::kUtilizationSample, 0, nullptr});
    }
    for (SimTime t : window_ends(cfg_.imbalance_interval, cfg_.end_time)) {
      queue_.schedule(t, {EventKind::kUtilizationSample, 1, nullptr});
    }
    queue_.schedule(cfg_.end_time, {EventKind::kSimulationEnd, 0, nullptr});
    schedule_first_arrival();

    auto handler = [this](const auto& ev) { handle(ev); };
    queue_.run_until(cfg_.end_time, handler);
    const SimTime drain_end = queue_.run(handler);

    SimResult result;
    if (collect_trace_) {
      sort_trace(trace_);
      result.trace = std::move(trace_);
    }
    ReportContext ctx;
    ctx.lb_policy = std::string(to_string(cfg_.lb_policy));
    ctx.queue_policy = std::string(to_string(cfg_.queue_policy));
    ctx.seed = cfg_.seed;
    ctx.end_time = cfg_.end_time;
    ctx.drain_end = std::max(drain_end, cfg_.end_time);
    ctx.instance_counts = cfg_.microservices;
    result.report = finalize_report(records_, *util_, *imb_, std::move(ctx));
    result.records = std::move(records_);
    result.utilization_windows = util_->windows();
    result.imbalance_windows = imb_->windows();
    result.events = queue_.delivered();
    return result;
  }

 private:
  void schedule_first_arrival() {
    if (replay_) {
      if (!replay_->empty() && (*replay_)[0].created_at < cfg_.end_time) {
        queue_.schedule((*replay_)[0].created_at,
                        {EventKind::kRequestArrival, 0, nullptr});
      }
      return;
    }
    const SimTime first =
        sample_interarrival(cfg_.workload.arrival, streams_->arrival);
    if (first < cfg_.end_time) {
      queue_.schedule(first, {EventKind::kRequestArrival, 0, nullptr});
    }
  }

  void handle(const EventQueue<SimEvent, EventKindRank>::Event& ev) {
    const SimTime now = ev.fire_at;
    switch (ev.payload.kind) {
      case EventKind::kRequestArrival:
        on_arrival(now);
        break;
      case EventKind::kStageDispatch:
        on_dispatch(*ev.payload.node, now);
        break;
      case EventKind::kExecutionSliceComplete:
        on_slice_complete(ev.payload.index, now);
        break;
      case EventKind::kUtilizationSample:
        on_sample(ev.payload.index, now);
        break;
      case EventKind::kSimulationEnd:
        break;
    }
  }

  void on_arrival(SimTime now) {
    ClientRequest req;
    if (replay_) {
      req = std::move((*replay_)[next_replay_++]);
      if (next_replay_ < replay_->size() &&
          (*replay_)[next_replay_].created_at < cfg_.end_time) {
        queue_.schedule((*replay_)[next_replay_].created_at,
                        {EventKind::kRequestArrival, 0, nullptr});
      }
    } else {
      req = build_client_request(next_id_++, now, cfg_.workload, *streams_);
      const SimTime next =
          now + sample_interarrival(cfg_.workload.arrival, streams_->arrival);
      if (next < cfg_.end_time) {
        queue_.schedule(next, {EventKind::kRequestArrival, 0, nullptr});
      }
    }
    if (cfg_.queue_policy.kind == QueuePolicy::Kind::kEarlyDeadline) {
      if (cfg_.queue_policy.variant == DeadlineVariant::kEds) {
        assign_deadlines_eds(req, max_depth_);
      } else {
        assign_deadlines_exds(req);
      }
    }
    const std::uint64_t id = req.request_id;
    auto progress = std::make_unique<RequestProgress>(std::move(req));
    for (auto& root : progress->request.root_stages) {
      queue_.schedule(now, {EventKind::kStageDispatch, 0, &root});
    }
    if (!live_.emplace(id, std::move(progress)).second) {
      throw ConfigError("duplicate request id " + std::to_string(id));
    }
  }

  void on_dispatch(CallNode& node, SimTime now) {
    if (collect_trace_) trace_.push_back(trace_row(node.stage, now));
    const DispatchResult d =
        dispatch_stage(node, cfg_.lb_policy, registry_, pool_, now);
    if (d.slice_end) {
      queue_.schedule(*d.slice_end,
                      {EventKind::kExecutionSliceComplete,
                       static_cast<std::uint32_t>(pool_.index_of(d.instance)),
                       nullptr});
    }
  }

  void on_slice_complete(std::uint32_t index, SimTime now) {
    Instance& inst = pool_[index];
    const Instance::SliceOutcome out = inst.finish_slice(now);
    if (out.next_slice_end) {
      queue_.schedule(*out.next_slice_end,
                      {EventKind::kExecutionSliceComplete, index, nullptr});
    }
    if (out.completed == nullptr) return;

    CallNode& node = *out.completed;
    const StageRequest& s = node.stage;
    ++records_.stages_completed;
    if (cfg_.record_stages) {
      records_.stage.push_back(RequestRecord{s.request_id, RecordScope::kStage,
                                             *s.arrival_at_instance, now,
                                             s.exec_time, s.deadline});
    }
    auto it = live_.find(s.request_id);
    RequestProgress& progress = *it->second;
    for (CallNode* child : complete_stage(node, progress, now)) {
      queue_.schedule(now, {EventKind::kStageDispatch, 0, child});
    }
    if (progress.finished_at) {
      const ClientRequest& req = progress.request;
      records_.client.push_back(RequestRecord{
          req.request_id, RecordScope::kClient, req.created_at, now,
          critical_path_exec(req), std::nullopt});
      live_.erase(it);
    }
  }

  void on_sample(std::uint32_t series, SimTime now) {
    for (std::size_t i = 0; i < pool_.size(); ++i) {
      busy_scratch_[i] = pool_[i].busy_at(now);
    }
    (series == 0 ? *util_ : *imb_).close_window(now, busy_scratch_);
  }

  SimConfig cfg_;
  bool collect_trace_ = false;
  std::optional<std::vector<ClientRequest>> replay_;
  std::size_t next_replay_ = 0;
  std::optional<WorkloadStreams> streams_;
  std::uint64_t next_id_ = 0;
  std::uint32_t max_depth_ = 0;

  EventQueue<SimEvent, EventKindRank> queue_;
  Registry registry_;
  InstancePool pool_;
  std::unordered_map<std::uint64_t, std::unique_ptr<RequestProgress>> live_;
  Recorder records_;
  std::optional<UtilizationSeries> util_;
  std::optional<UtilizationSeries> imb_;
  std::vector<SimTime> busy_scratch_;
  std::vector<TraceRow> trace_;
};

inline std::vector<TraceRow> load_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file " + path);
  return read_trace_csv(in);
}

// Runs the configured experiment: replays `trace_in` when set, otherwise
// generates arrivals until end_time. A trace is collected when `trace_out`
// is set or `collect_trace` is true.
inline SimResult run_simulation(const SimConfig& cfg,
                                bool collect_trace = false) {
  const bool want_trace = collect_trace || cfg.trace_out.has_value();
  if (cfg.trace_in) {
    auto requests = replay_trace(load_trace_file(*cfg.trace_in), cfg.workload.sla);
    return Simulator(cfg, std::move(requests), want_trace).run();
  }
  return Simulator(cfg, want_trace).run();
}

struct OutputOptions {
  bool emit_ecdf = false;  // also write stage-slowdown and wait ECDFs
};

// Writes report.json, requests.csv and ecdf_slowdown.csv into `dir`, and
// the trace to cfg.trace_out when set.
inline void write_outputs(const SimResult& result, const SimConfig& cfg,
                          const std::filesystem::path& dir,
                          OutputOptions opts = {}) {
  std::filesystem::create_directories(dir);
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(dir / "report.json");
    write_report_json(out, result.report);
  }
  {
    auto out = open(dir / "requests.csv");
    std::vector<RequestRecord> all;
    all.reserve(result.records.client.size() + result.records.stage.size());
    all.insert(all.end(), result.records.client.begin(),
               result.records.client.end());
    all.insert(all.end(), result.records.stage.begin(),
               result.records.stage.end());
    write_requests_csv(out, all);
  }
  {
    auto out = open(dir / "ecdf_slowdown.csv");
    write_ecdf_csv(out, result.report.client_slowdown_ecdf);
  }
  if (opts.emit_ecdf) {
    auto write_series = [&](const char* name, std::vector<double> values) {
      auto out = open(dir / name);
      if (values.empty()) {
        write_ecdf_csv(out, {});
      } else {
        write_ecdf_csv(out, ecdf(std::move(values)));
      }
    };
    std::vector<double> stage_sd, client_wait;
    for (const auto& r : result.records.stage) stage_sd.push_back(r.slowdown());
    for (const auto& r : result.records.client) {
      client_wait.push_back(static_cast<double>(r.wait_time().micros));
    }
    write_series("ecdf_stage_slowdown.csv", std::move(stage_sd));
    write_series("ecdf_wait.csv", std::move(client_wait));
  }
  if (cfg.trace_out) {
    auto out = open(*cfg.trace_out);
    write_trace_csv(out, result.trace);
  }
}

}  // namespace msim
