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

// Usage monitor: request records, utilization sampling, and the final
// report.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "msim/model.hpp"
#include "msim/sim_core.hpp"

namespace msim {

class InvalidMetric : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

inline double slowdown(SimTime total, SimTime exec) {
  if (exec.micros == 0) throw InvalidMetric("slowdown: execution time is zero");
  if (total < exec) {
    throw InvalidMetric("slowdown: total time " + std::to_string(total.micros) +
                        "us is below execution time " +
                        std::to_string(exec.micros) + "us");
  }
  return static_cast<double>(total.micros) / static_cast<double>(exec.micros);
}

enum class RecordScope : std::uint8_t { kClient, kStage };

inline std::string_view to_string(RecordScope s) {
  return s == RecordScope::kClient ? "client" : "stage";
}

// One finished client request (created_at = creation, exec = critical path)
// or one finished stage (created_at = arrival at its instance).
struct RequestRecord {
  std::uint64_t request_id = 0;
  RecordScope scope = RecordScope::kClient;
  SimTime created_at;
  SimTime completed_at;
  SimTime exec_time;
  std::optional<SimTime> deadline;

  SimTime total_time() const { return completed_at - created_at; }
  SimTime wait_time() const { return total_time() - exec_time; }
  double slowdown() const { return msim::slowdown(total_time(), exec_time); }
};

// Busy fraction of a set of instances over a window of `window` length.
inline double utilization(SimTime busy_total, SimTime window,
                          std::size_t instances) {
  if (window.micros == 0 || instances == 0) {
    throw InvalidMetric("utilization: empty window or instance set");
  }
  return static_cast<double>(busy_total.micros) /
         (static_cast<double>(window.micros) * static_cast<double>(instances));
}

// Computed on values shifted by the first one, so identical inputs give
// exactly zero.
inline double population_stddev(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  const double n = static_cast<double>(xs.size());
  double sum = 0.0, sum_sq = 0.0;
  for (double x : xs) {
    const double d = x - xs[0];
    sum += d;
    sum_sq += d * d;
  }
  const double var = sum_sq / n - (sum / n) * (sum / n);
  return var > 0.0 ? std::sqrt(var) : 0.0;
}

// Mean over sampling intervals of the population standard deviation of the
// instances' utilizations. `intervals[k][i]` is instance i in interval k.
inline double imbalance(const std::vector<std::vector<double>>& intervals) {
  if (intervals.empty()) throw InvalidMetric("imbalance: no intervals");
  double sum = 0.0;
  for (const auto& per_instance : intervals) {
    if (per_instance.size() < 2) {
      throw InvalidMetric("imbalance: needs at least 2 instances");
    }
    sum += population_stddev(per_instance);
  }
  return sum / static_cast<double>(intervals.size());
}

struct EcdfPoint {
  double x = 0.0;
  double f = 0.0;
  bool operator==(const EcdfPoint&) const = default;
};

// Sorted distinct values with the fraction of inputs <= each value.
inline std::vector<EcdfPoint> ecdf(std::vector<double> values) {
  if (values.empty()) throw EmptyInput("ecdf: no values");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  std::vector<EcdfPoint> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    out.push_back({values[i], static_cast<double>(i + 1) / n});
  }
  out.back().f = 1.0;
  return out;
}

// Smallest x with F(x) >= p.
inline double percentile(const std::vector<EcdfPoint>& cdf, double p) {
  if (cdf.empty()) throw EmptyInput("percentile: empty ecdf");
  auto it = std::lower_bound(
      cdf.begin(), cdf.end(), p,
      [](const EcdfPoint& pt, double q) { return pt.f < q; });
  return it == cdf.end() ? cdf.back().x : it->x;
}

// Kolmogorov distance sup |F - G| between two step ECDFs.
inline double ks_distance(const std::vector<EcdfPoint>& a,
                          const std::vector<EcdfPoint>& b) {
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, best = 0.0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j >= b.size() || (i < a.size() && a[i].x <= b[j].x)) {
      x = a[i].x;
    } else {
      x = b[j].x;
    }
    while (i < a.size() && a[i].x <= x) fa = a[i++].f;
    while (j < b.size() && b[j].x <= x) fb = b[j++].f;
    best = std::max(best, std::fabs(fa - fb));
  }
  return best;
}

// Per-instance utilization in consecutive windows of fixed length.
class UtilizationSeries {
 public:
  struct Window {
    SimTime start;
    SimTime end;
    std::vector<double> per_instance;
  };

  UtilizationSeries(SimTime interval, std::size_t instances)
      : interval_(interval), checkpoint_(instances) {}

  SimTime interval() const { return interval_; }
  const std::vector<Window>& windows() const { return windows_; }

  // Closes the window ending at `at` given each instance's busy time so far.
  void close_window(SimTime at, std::span<const SimTime> busy_now) {
    Window w{last_, at, {}};
    const SimTime len = at - last_;
    w.per_instance.reserve(busy_now.size());
    for (std::size_t i = 0; i < busy_now.size(); ++i) {
      const SimTime busy = busy_now[i] - checkpoint_[i];
      w.per_instance.push_back(len.micros == 0 ? 0.0 : utilization(busy, len, 1));
      checkpoint_[i] = busy_now[i];
    }
    last_ = at;
    windows_.push_back(std::move(w));
  }

 private:
  SimTime interval_;
  SimTime last_;
  std::vector<SimTime> checkpoint_;
  std::vector<Window> windows_;
};

// Window end times covering [0, end): full intervals, then the remainder.
inline std::vector<SimTime> window_ends(SimTime interval, SimTime end) {
  std::vector<SimTime> ends;
  if (interval.micros == 0 || end.micros == 0) return ends;
  for (SimTime t = interval; t <= end; t += interval) ends.push_back(t);
  if (ends.empty() || ends.back() < end) ends.push_back(end);
  return ends;
}

struct Summary {
  double mean = 0.0;
  double p50 = 0.0;
  double p99 = 0.0;
  double max = 0.0;
};

inline std::optional<Summary> summarize(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  const auto cdf = ecdf(values);
  Summary s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.p50 = percentile(cdf, 0.50);
  s.p99 = percentile(cdf, 0.99);
  s.max = cdf.back().x;
  return s;
}

struct MicroserviceReport {
  std::uint32_t id = 0;
  std::uint32_t instances = 0;
  std::optional<double> mean_utilization;
  std::optional<double> imbalance;
};

struct ScopeReport {
  std::optional<Summary> slowdown;
  std::optional<Summary> wait_us;
  std::optional<Summary> total_us;
};

// Context copied into the report so it is self-describing.
struct ReportContext {
  std::string lb_policy;
  std::string queue_policy;
  std::uint64_t seed = 0;
  SimTime end_time;
  SimTime drain_end;
  std::vector<std::uint32_t> instance_counts;
};

struct SimReport {
  ReportContext context;
  std::uint64_t client_requests = 0;
  std::uint64_t stage_requests = 0;
  ScopeReport client;
  ScopeReport stage;
  std::vector<EcdfPoint> client_slowdown_ecdf;
  std::vector<MicroserviceReport> microservices;
};

struct Recorder {
  std::vector<RequestRecord> client;
  std::vector<RequestRecord> stage;
  // Completed stages, including ones whose records were not kept.
  std::uint64_t stages_completed = 0;
};

namespace detail {

inline ScopeReport scope_report(const std::vector<RequestRecord>& records) {
  ScopeReport r;
  if (records.empty()) return r;
  std::vector<double> sd, wait, total;
  sd.reserve(records.size());
  wait.reserve(records.size());
  total.reserve(records.size());
  for (const auto& rec : records) {
    sd.push_back(rec.slowdown());
    wait.push_back(static_cast<double>(rec.wait_time().micros));
    total.push_back(static_cast<double>(rec.total_time().micros));
  }
  r.slowdown = summarize(sd);
  r.wait_us = summarize(wait);
  r.total_us = summarize(total);
  return r;
}

inline std::vector<double> slowdowns(const std::vector<RequestRecord>& recs) {
  std::vector<double> out;
  out.reserve(recs.size());
  for (const auto& r : recs) out.push_back(r.slowdown());
  return out;
}

}  // namespace detail

// Builds the aggregate report. Both series list instances microservice by
// microservice, in the order of `context.instance_counts`.
inline SimReport finalize_report(const Recorder& records,
                                 const UtilizationSeries& utilization_series,
                                 const UtilizationSeries& imbalance_series,
                                 ReportContext context) {
  SimReport rep;
  rep.client_requests = records.client.size();
  rep.stage_requests =
      std::max<std::uint64_t>(records.stages_completed, records.stage.size());
  rep.client = detail::scope_report(records.client);
  rep.stage = detail::scope_report(records.stage);
  if (!records.client.empty()) {
    rep.client_slowdown_ecdf = ecdf(detail::slowdowns(records.client));
  }

  std::size_t first = 0;
  for (std::uint32_t m = 0; m < context.instance_counts.size(); ++m) {
    const std::size_t count = context.instance_counts[m];
    MicroserviceReport ms{m, static_cast<std::uint32_t>(count), {}, {}};
    const auto& uw = utilization_series.windows();
    if (!uw.empty() && count > 0) {
      double sum = 0.0;
      for (const auto& w : uw) {
        double busy = 0.0;
        for (std::size_t i = 0; i < count; ++i) busy += w.per_instance[first + i];
        sum += busy / static_cast<double>(count);
      }
      ms.mean_utilization = sum / static_cast<double>(uw.size());
    }
    const auto& iw = imbalance_series.windows();
    if (!iw.empty() && count >= 2) {
      std::vector<std::vector<double>> intervals;
      intervals.reserve(iw.size());
      for (const auto& w : iw) {
        intervals.emplace_back(w.per_instance.begin() + first,
                               w.per_instance.begin() + first + count);
      }
      ms.imbalance = imbalance(intervals);
    }
    rep.microservices.push_back(ms);
    first += count;
  }
  rep.context = std::move(context);
  return rep;
}

namespace detail {

inline nlohmann::ordered_json to_json(const std::optional<Summary>& s) {
  if (!s) return nullptr;
  nlohmann::ordered_json j;
  j["mean"] = s->mean;
  j["p50"] = s->p50;
  j["p99"] = s->p99;
  j["max"] = s->max;
  return j;
}

inline nlohmann::ordered_json to_json(const ScopeReport& r) {
  nlohmann::ordered_json j;
  j["slowdown"] = to_json(r.slowdown);
  j["wait_us"] = to_json(r.wait_us);
  j["total_us"] = to_json(r.total_us);
  return j;
}

template <typename T>
nlohmann::ordered_json opt(const std::optional<T>& v) {
  if (!v) return nullptr;
  return *v;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const SimReport& rep) {
  nlohmann::ordered_json j;
  j["policies"]["lb"] = rep.context.lb_policy;
  j["policies"]["queue"] = rep.context.queue_policy;
  j["seed"] = rep.context.seed;
  j["end_time_us"] = rep.context.end_time.micros;
  j["drain_end_us"] = rep.context.drain_end.micros;
  j["counts"]["client_requests"] = rep.client_requests;
  j["counts"]["stage_requests"] = rep.stage_requests;
  j["client"] = detail::to_json(rep.client);
  j["stage"] = detail::to_json(rep.stage);
  auto ms = nlohmann::ordered_json::array();
  for (const auto& m : rep.microservices) {
    nlohmann::ordered_json e;
    e["id"] = m.id;
    e["instances"] = m.instances;
    e["mean_utilization"] = detail::opt(m.mean_utilization);
    e["imbalance"] = detail::opt(m.imbalance);
    ms.push_back(std::move(e));
  }
  j["microservices"] = std::move(ms);
  return j;
}

inline void write_report_json(std::ostream& out, const SimReport& rep) {
  out << to_json(rep).dump(2) << '\n';
}

inline constexpr std::string_view kRequestsHeader =
    "request_id,scope,created_at,completed_at,total_us,exec_us,wait_us,"
    "slowdown,deadline_us";

inline void write_requests_csv(std::ostream& out,
                               const std::vector<RequestRecord>& records) {
  out << kRequestsHeader << '\n';
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.6f", r.slowdown());
    out << r.request_id << ',' << to_string(r.scope) << ','
        << r.created_at.micros << ',' << r.completed_at.micros << ','
        << r.total_time().micros << ',' << r.exec_time.micros << ','
        << r.wait_time().micros << ',' << buf << ',';
    if (r.deadline) out << r.deadline->micros;
    out << '\n';
  }
}

inline void write_ecdf_csv(std::ostream& out,
                           const std::vector<EcdfPoint>& points) {
  out << "x,f\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.x, p.f);
    out << buf;
  }
}

}  // namespace msim
