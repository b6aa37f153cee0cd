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

// Statistical workload generation and the trace file format.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "msim/model.hpp"
#include "msim/sim_core.hpp"

namespace msim {

class MalformedTrace : public Error {
 public:
  // `row` is the 0-based data row the problem was found on.
  MalformedTrace(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}

  static MalformedTrace header(const std::string& what) {
    MalformedTrace e(0, "header: " + what);
    e.row_.reset();
    return e;
  }

  std::size_t row() const { return row_.value_or(0); }
  // 1-based line in the CSV file; the header is line 1.
  std::size_t line() const { return row_ ? *row_ + 2 : 1; }

 private:
  std::optional<std::size_t> row_;
};

inline constexpr double kWeightTolerance = 1e-9;

struct ArrivalModel {
  SimTime mean_interarrival{1066};
};

enum class TimeUnit { kMicros, kMillis };

inline double unit_scale(TimeUnit unit) {
  return unit == TimeUnit::kMillis ? 1000.0 : 1.0;
}

namespace detail {

// The default execution-time distribution has mean 4.13 ms and standard
// deviation 3.48 ms.
inline constexpr double kDefaultExecMean = 4.13;
inline constexpr double kDefaultExecStddev = 3.48;

inline double lognormal_sigma2(double mean, double stddev) {
  const double ratio = stddev / mean;
  return std::log1p(ratio * ratio);
}

inline const double kDefaultExecMu =
    std::log(kDefaultExecMean) -
    lognormal_sigma2(kDefaultExecMean, kDefaultExecStddev) / 2.0;
inline const double kDefaultExecSigma =
    std::sqrt(lognormal_sigma2(kDefaultExecMean, kDefaultExecStddev));

}  // namespace detail

// Log-normal execution times: exp(N(mu, sigma)) expressed in `unit`.
struct ExecModel {
  double mu = detail::kDefaultExecMu;
  double sigma = detail::kDefaultExecSigma;
  TimeUnit unit = TimeUnit::kMillis;

  // Parameters of the log-normal whose own mean and standard deviation are
  // `mean` and `stddev` (both in `unit`).
  static ExecModel from_moments(double mean, double stddev, TimeUnit unit) {
    const double var = detail::lognormal_sigma2(mean, stddev);
    return ExecModel{std::log(mean) - var / 2.0, std::sqrt(var), unit};
  }
};

struct DepthOutcome {
  std::uint32_t depth = 0;
  double probability = 0.0;
};

struct DepthModel {
  std::vector<DepthOutcome> outcomes{{0, 0.5}, {2, 0.5}};

  std::uint32_t max_depth() const {
    std::uint32_t d = 0;
    for (const auto& o : outcomes) d = std::max(d, o.depth);
    return d;
  }
};

struct RoutingModel {
  std::vector<double> call_probabilities{0.62, 0.18, 0.08, 0.12};
  std::uint32_t fanout = 1;
};

struct CommunicationModel {
  std::vector<double> comm_probabilities{0.62, 0.18, 0.08, 0.12};
  std::uint32_t fanout = 1;
};

// Everything the request builder needs.
struct WorkloadModel {
  ArrivalModel arrival;
  ExecModel exec;
  DepthModel depth;
  RoutingModel routing;
  CommunicationModel communication;
  SimTime sla = seconds(4);
};

// One random stream per stochastic component, all from one master seed.
struct WorkloadStreams {
  explicit WorkloadStreams(std::uint64_t seed)
      : arrival(seed, StreamId::kArrival),
        exec(seed, StreamId::kExec),
        depth(seed, StreamId::kDepth),
        routing(seed, StreamId::kRouting),
        communication(seed, StreamId::kCommunication) {}

  RngStream arrival;
  RngStream exec;
  RngStream depth;
  RngStream routing;
  RngStream communication;
};

namespace detail {

inline double weight_sum(const std::vector<double>& w) {
  double s = 0.0;
  for (double x : w) s += x;
  return s;
}

inline void check_weights(const std::vector<double>& w,
                          const std::string& field) {
  if (w.empty()) throw ValidationError(field, "no weights");
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw ValidationError(field, "weights must be finite and >= 0");
    }
  }
  if (std::fabs(weight_sum(w) - 1.0) > kWeightTolerance) {
    throw ValidationError(field, "weights must sum to 1");
  }
}

// Index drawn proportionally to `weights`; entries with zero weight are
// never returned. Pre: at least one positive weight.
inline std::size_t pick_weighted(const std::vector<double>& weights,
                                 RngStream& rng) {
  const double total = weight_sum(weights);
  const double u = rng.draw_uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    acc += weights[i];
    if (u < acc) return i;
  }
  return last_positive;
}

// Draws `count` distinct indices, renormalizing after each pick. Indices in
// `exclude` are never drawn.
inline std::vector<std::uint32_t> pick_distinct(
    std::vector<double> weights, std::uint32_t count, RngStream& rng,
    std::optional<std::uint32_t> exclude, const char* what) {
  if (exclude && *exclude < weights.size()) weights[*exclude] = 0.0;
  std::vector<std::uint32_t> picked;
  picked.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    if (!(weight_sum(weights) > 0.0)) {
      throw ConfigError(std::string(what) +
                        ": not enough candidate microservices");
    }
    const auto i = static_cast<std::uint32_t>(pick_weighted(weights, rng));
    picked.push_back(i);
    weights[i] = 0.0;
  }
  return picked;
}

}  // namespace detail

inline void validate(const ArrivalModel& m) {
  if (m.mean_interarrival.micros == 0) {
    throw ValidationError("arrival_model.mean_interarrival", "must be > 0");
  }
}

inline void validate(const ExecModel& m) {
  if (!std::isfinite(m.mu)) throw ValidationError("exec_model.mu", "not finite");
  if (!(m.sigma >= 0.0) || !std::isfinite(m.sigma)) {
    throw ValidationError("exec_model.sigma", "must be finite and >= 0");
  }
}

inline void validate(const DepthModel& m) {
  if (m.outcomes.empty()) throw ValidationError("depth_model", "no outcomes");
  double sum = 0.0;
  for (const auto& o : m.outcomes) {
    if (!(o.probability > 0.0)) {
      throw ValidationError("depth_model", "probabilities must be > 0");
    }
    sum += o.probability;
  }
  if (std::fabs(sum - 1.0) > kWeightTolerance) {
    throw ValidationError("depth_model", "probabilities must sum to 1");
  }
}

// Checks the models against `microservices` configured microservices.
inline void validate(const WorkloadModel& m, std::size_t microservices) {
  validate(m.arrival);
  validate(m.exec);
  validate(m.depth);
  detail::check_weights(m.routing.call_probabilities,
                        "routing.call_probabilities");
  detail::check_weights(m.communication.comm_probabilities,
                        "communication.comm_probabilities");
  if (m.routing.call_probabilities.size() != microservices) {
    throw ValidationError("routing.call_probabilities", "expected one weight per microservice");
  }
  if (m.communication.comm_probabilities.size() != microservices) {
    throw ValidationError("communication.comm_probabilities", "expected one weight per "
        "microservice");
  }
  if (m.routing.fanout == 0) throw ValidationError("routing.fanout", "must be > 0");
  if (m.communication.fanout == 0) {
    throw ValidationError("communication.fanout", "must be > 0");
  }
  auto positive = [](const std::vector<double>& w) {
    return static_cast<std::uint32_t>(
        std::count_if(w.begin(), w.end(), [](double x) { return x > 0.0; }));
  };
  if (positive(m.routing.call_probabilities) < m.routing.fanout) {
    throw ValidationError("routing.fanout", "exceeds the number of callable microservices");
  }
  if (m.depth.max_depth() > 0) {
    if (microservices < 2) {
      throw ValidationError("depth_model", "depth > 0 needs at least 2 microservices");
    }
    // Every caller must keep `fanout` candidates after excluding itself.
    const auto& w = m.communication.comm_probabilities;
    for (std::size_t self = 0; self < w.size(); ++self) {
      auto left = positive(w) - (w[self] > 0.0 ? 1u : 0u);
      if (left < m.communication.fanout) {
        throw ValidationError("communication.comm_probabilities",
                              "microservice " + std::to_string(self) +
                                  " has too few callees for the fanout");
      }
    }
  }
  if (m.sla.micros == 0) throw ValidationError("sla", "must be > 0");
}

// Exponential inter-arrival gap (a Poisson arrival process), at least 1 us.
inline SimTime sample_interarrival(const ArrivalModel& model, RngStream& rng) {
  const double u = rng.draw_uniform();
  const double gap =
      -static_cast<double>(model.mean_interarrival.micros) * std::log1p(-u);
  return round_micros(gap, 1);
}

// Standard normal via Box-Muller; consumes two uniforms.
inline double sample_standard_normal(RngStream& rng) {
  const double u1 = 1.0 - rng.draw_uniform();  // (0, 1]
  const double u2 = rng.draw_uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

inline SimTime sample_exec_time(const ExecModel& model, RngStream& rng) {
  const double z = sample_standard_normal(rng);
  const double value = std::exp(model.mu + model.sigma * z);
  return round_micros(value * unit_scale(model.unit), 1);
}

inline std::uint32_t sample_depth(const DepthModel& model, RngStream& rng) {
  const double u = rng.draw_uniform();
  double acc = 0.0;
  for (const auto& o : model.outcomes) {
    acc += o.probability;
    if (u < acc) return o.depth;
  }
  return model.outcomes.back().depth;
}

namespace detail {

inline void grow(CallNode& node, std::uint32_t max_depth,
                 const WorkloadModel& model, WorkloadStreams& streams) {
  if (node.stage.depth >= max_depth) return;
  const auto targets = pick_distinct(
      model.communication.comm_probabilities, model.communication.fanout,
      streams.communication, node.stage.target.index, "communication");
  node.children.reserve(targets.size());
  for (auto t : targets) {
    CallNode child;
    child.stage = make_stage(node.stage.request_id, MicroserviceId{t},
                             sample_exec_time(model.exec, streams.exec),
                             node.stage.depth + 1, node.stage.target);
    grow(child, max_depth, model, streams);
    node.children.push_back(std::move(child));
  }
}

}  // namespace detail

// Samples a full call tree: depth first, then root targets and the tree in
// pre-order. Every path reaches the sampled depth.
inline ClientRequest build_client_request(std::uint64_t id, SimTime now,
                                          const WorkloadModel& model,
                                          WorkloadStreams& streams) {
  ClientRequest req;
  req.request_id = id;
  req.created_at = now;
  req.sla = model.sla;
  req.max_depth = sample_depth(model.depth, streams.depth);
  if (req.max_depth > 0 && model.communication.comm_probabilities.size() < 2) {
    throw ConfigError("depth > 0 needs at least 2 microservices");
  }
  const auto roots =
      detail::pick_distinct(model.routing.call_probabilities,
                            model.routing.fanout, streams.routing,
                            std::nullopt, "routing");
  req.root_stages.reserve(roots.size());
  for (auto t : roots) {
    CallNode root;
    root.stage = make_stage(id, MicroserviceId{t},
                            sample_exec_time(model.exec, streams.exec), 0,
                            std::nullopt);
    detail::grow(root, req.max_depth, model, streams);
    req.root_stages.push_back(std::move(root));
  }
  return req;
}

// ---------------------------------------------------------------------------
// Traces

struct TraceRow {
  std::uint64_t request_id = 0;
  SimTime timestamp;
  MicroserviceId called_ms;
  SimTime exetime;
  std::uint32_t hops_done = 0;
  std::optional<MicroserviceId> called_by;

  bool operator==(const TraceRow&) const = default;
};

inline TraceRow trace_row(const StageRequest& s, SimTime timestamp) {
  return TraceRow{s.request_id, timestamp, s.target, s.exec_time, s.depth,
                  s.called_by};
}

// Stable sort into trace order.
inline void sort_trace(std::vector<TraceRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const TraceRow& a, const TraceRow& b) {
                     if (a.timestamp != b.timestamp) {
                       return a.timestamp < b.timestamp;
                     }
                     if (a.request_id != b.request_id) {
                       return a.request_id < b.request_id;
                     }
                     return a.hops_done < b.hops_done;
                   });
}

// Pre-simulation export: every row is stamped with its request's creation
// time. Siblings keep tree order.
inline std::vector<TraceRow> export_trace(
    const std::vector<ClientRequest>& requests) {
  std::vector<TraceRow> rows;
  for (const auto& req : requests) {
    for_each_node(req, [&](const CallNode& n) {
      rows.push_back(trace_row(n.stage, req.created_at));
    });
  }
  sort_trace(rows);
  return rows;
}

// Rebuilds client requests from trace rows. Each non-root row is attached to
// the unique earlier-depth node of the same request whose microservice is
// the row's caller. Requests come back ordered by (created_at, request_id).
inline std::vector<ClientRequest> replay_trace(const std::vector<TraceRow>& rows,
                                               SimTime sla) {
  struct Pending {
    ClientRequest req;
    // Per depth: (path to node as child indices, microservice).
    std::vector<std::vector<std::pair<std::vector<std::size_t>,
                                      MicroserviceId>>> levels;
    std::size_t first_row = 0;
  };
  std::map<std::uint64_t, Pending> by_id;

  auto node_at = [](ClientRequest& req,
                    const std::vector<std::size_t>& path) -> CallNode& {
    CallNode* n = &req.root_stages[path[0]];
    for (std::size_t i = 1; i < path.size(); ++i) n = &n->children[path[i]];
    return *n;
  };

  // Ambiguity has to be judged against all rows, so count candidate
  // parents per (request, depth, microservice) up front.
  std::map<std::tuple<std::uint64_t, std::uint32_t, std::uint32_t>,
           std::size_t>
      multiplicity;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.exetime.micros == 0) throw MalformedTrace(i, "exetime must be > 0");
    if (r.hops_done == 0 && r.called_by) {
      throw MalformedTrace(i, "depth-0 row has a caller");
    }
    if (r.hops_done > 0 && !r.called_by) {
      throw MalformedTrace(i, "row at hops_done " +
                                  std::to_string(r.hops_done) +
                                  " has no caller");
    }
    if (r.called_by && *r.called_by == r.called_ms) {
      throw MalformedTrace(i, "microservice calls itself");
    }
    ++multiplicity[{r.request_id, r.hops_done, r.called_ms.index}];
  }

  // Parents must be placed before their children: process by depth.
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                   std::size_t b) {
    return rows[a].hops_done < rows[b].hops_done;
  });

  for (std::size_t i : order) {
    const auto& r = rows[i];
    auto [it, inserted] = by_id.try_emplace(r.request_id);
    Pending& p = it->second;
    if (inserted) {
      p.req.request_id = r.request_id;
      p.req.created_at = r.timestamp;
      p.req.sla = sla;
      p.first_row = i;
    }
    p.req.created_at = std::min(p.req.created_at, r.timestamp);
    p.first_row = std::min(p.first_row, i);
    p.req.max_depth = std::max(p.req.max_depth, r.hops_done);

    CallNode node;
    node.stage = make_stage(r.request_id, r.called_ms, r.exetime, r.hops_done,
                            r.called_by);
    if (p.levels.size() <= r.hops_done) p.levels.resize(r.hops_done + 1);

    std::vector<std::size_t> path;
    if (r.hops_done == 0) {
      path.push_back(p.req.root_stages.size());
      p.req.root_stages.push_back(std::move(node));
    } else {
      const auto& parents = p.levels[r.hops_done - 1];
      const std::vector<std::size_t>* parent_path = nullptr;
      for (const auto& [pp, ms] : parents) {
        if (ms == *r.called_by) parent_path = &pp;
      }
      if (parent_path == nullptr) {
        throw MalformedTrace(i, "no caller M" +
                                    std::to_string(r.called_by->index) +
                                    " at hops_done " +
                                    std::to_string(r.hops_done - 1));
      }
      if (multiplicity[{r.request_id, r.hops_done - 1,
                        r.called_by->index}] > 1) {
        throw MalformedTrace(i, "ambiguous caller M" +
                                    std::to_string(r.called_by->index) +
                                    " at hops_done " +
                                    std::to_string(r.hops_done - 1));
      }
      path = *parent_path;
      CallNode& parent = node_at(p.req, path);
      path.push_back(parent.children.size());
      parent.children.push_back(std::move(node));
    }
    p.levels[r.hops_done].emplace_back(std::move(path), r.called_ms);
  }

  std::vector<std::pair<std::size_t, ClientRequest>> out;
  out.reserve(by_id.size());
  for (auto& [id, p] : by_id) out.emplace_back(p.first_row, std::move(p.req));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second.created_at != b.second.created_at) {
      return a.second.created_at < b.second.created_at;
    }
    return a.second.request_id < b.second.request_id;
  });
  std::vector<ClientRequest> result;
  result.reserve(out.size());
  for (auto& [row, req] : out) result.push_back(std::move(req));
  return result;
}

inline constexpr std::string_view kTraceHeader =
    "request_id,timestamp,called_ms,exetime,hops_done,called_by";

inline void write_trace_csv(std::ostream& out,
                            const std::vector<TraceRow>& rows) {
  out << kTraceHeader << '\n';
  for (const auto& r : rows) {
    out << r.request_id << ',' << r.timestamp.micros << ','
        << r.called_ms.index << ',' << r.exetime.micros << ',' << r.hops_done
        << ',';
    if (r.called_by) out << r.called_by->index;
    out << '\n';
  }
}

namespace detail {

template <typename T>
bool parse_uint(std::string_view text, T& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

// Parses a trace CSV. MalformedTrace::row() is the 0-based data row; the
// file line is row + 2.
inline std::vector<TraceRow> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw MalformedTrace::header("missing");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw MalformedTrace::header("unexpected column names");
  std::vector<TraceRow> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto f = detail::split_csv_line(line);
    if (f.size() != 6) throw MalformedTrace(row, "expected 6 fields");
    TraceRow r;
    std::uint64_t ts = 0, exe = 0;
    if (!detail::parse_uint(f[0], r.request_id)) {
      throw MalformedTrace(row, "bad request_id");
    }
    if (!detail::parse_uint(f[1], ts)) throw MalformedTrace(row, "bad timestamp");
    if (!detail::parse_uint(f[2], r.called_ms.index)) {
      throw MalformedTrace(row, "bad called_ms");
    }
    if (!detail::parse_uint(f[3], exe)) throw MalformedTrace(row, "bad exetime");
    if (!detail::parse_uint(f[4], r.hops_done)) {
      throw MalformedTrace(row, "bad hops_done");
    }
    if (!f[5].empty()) {
      MicroserviceId by;
      if (!detail::parse_uint(f[5], by.index)) {
        throw MalformedTrace(row, "bad called_by");
      }
      r.called_by = by;
    }
    r.timestamp = SimTime{ts};
    r.exetime = SimTime{exe};
    rows.push_back(r);
    ++row;
  }
  return rows;
}

}  // namespace msim
