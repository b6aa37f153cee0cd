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
#include <cstdint>
#include <limits>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "msim/gateway.hpp"
#include "msim/instance.hpp"
#include "msim/sim_core.hpp"
#include "msim/workload.hpp"

namespace msim {

class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

constexpr SimTime hours(std::uint64_t v) { return seconds(v * 3600); }

struct SimConfig {
  SimTime end_time = hours(24);
  WorkloadModel workload;
  LbPolicy lb_policy = LbPolicy::kRoundRobin;
  QueuePolicy queue_policy = QueuePolicy::fcfs();
  std::vector<std::uint32_t> microservices{4, 2, 1, 1};
  std::uint64_t seed = 1;
  SimTime utilization_interval = seconds(3600);
  SimTime imbalance_interval = seconds(300);
  std::optional<std::string> trace_in;
  std::optional<std::string> trace_out;
  // Stage-level records are kept unless turned off for very long runs.
  bool record_stages = true;
};

// Parses "<integer>[us|ms|s|h]"; a bare integer is microseconds.
inline std::optional<SimTime> parse_duration(std::string_view text) {
  std::size_t digits = 0;
  while (digits < text.size() && text[digits] >= '0' && text[digits] <= '9') {
    ++digits;
  }
  if (digits == 0) return std::nullopt;
  std::uint64_t value = 0;
  if (!detail::parse_uint(text.substr(0, digits), value)) return std::nullopt;
  const auto suffix = text.substr(digits);
  std::uint64_t scale;
  if (suffix.empty() || suffix == "us") {
    scale = 1;
  } else if (suffix == "ms") {
    scale = 1000;
  } else if (suffix == "s") {
    scale = 1000000;
  } else if (suffix == "h") {
    scale = 3600000000ULL;
  } else {
    return std::nullopt;
  }
  if (value > SimTime::max().micros / scale) return std::nullopt;
  return SimTime{value * scale};
}

// Human-readable duration using the largest unit that divides exactly.
inline std::string format_duration(SimTime t) {
  const std::uint64_t us = t.micros;
  if (us != 0 && us % 3600000000ULL == 0) {
    return std::to_string(us / 3600000000ULL) + "h";
  }
  if (us != 0 && us % 1000000 == 0) return std::to_string(us / 1000000) + "s";
  if (us != 0 && us % 1000 == 0) return std::to_string(us / 1000) + "ms";
  return std::to_string(us) + "us";
}

namespace detail {

using Json = nlohmann::json;

inline void reject_unknown(const Json& obj, const std::string& path,
                           std::initializer_list<std::string_view> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) {
      throw ValidationError(path.empty() ? key : path + "." + key,
                            "unknown key");
    }
  }
}

inline SimTime json_duration(const Json& v, const std::string& field) {
  if (v.is_number_unsigned()) return SimTime{v.get<std::uint64_t>()};
  if (v.is_string()) {
    if (auto d = parse_duration(v.get<std::string>())) return *d;
  }
  throw ValidationError(field, "expected a duration like 500us, 4s or 24h");
}

inline double json_real(const Json& v, const std::string& field) {
  if (!v.is_number()) throw ValidationError(field, "expected a number");
  return v.get<double>();
}

inline std::uint32_t json_count(const Json& v, const std::string& field) {
  if (!v.is_number_unsigned() ||
      v.get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError(field, "expected a non-negative integer");
  }
  return v.get<std::uint32_t>();
}

inline std::vector<double> json_weights(const Json& v,
                                        const std::string& field) {
  if (!v.is_array()) throw ValidationError(field, "expected an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(json_real(v[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline TimeUnit json_unit(const Json& v, const std::string& field) {
  if (v == "us") return TimeUnit::kMicros;
  if (v == "ms") return TimeUnit::kMillis;
  throw ValidationError(field, "expected \"us\" or \"ms\"");
}

inline ExecModel parse_exec_model(const Json& j) {
  const std::string p = "exec_model";
  if (!j.is_object()) throw ValidationError(p, "expected an object");
  reject_unknown(j, p, {"mu", "sigma", "mean", "stddev", "unit"});
  ExecModel m;
  if (j.contains("unit")) m.unit = json_unit(j["unit"], p + ".unit");
  const bool log_form = j.contains("mu") || j.contains("sigma");
  const bool moment_form = j.contains("mean") || j.contains("stddev");
  if (log_form && moment_form) {
    throw ValidationError(p, "give either mu/sigma or mean/stddev");
  }
  if (moment_form) {
    if (!j.contains("mean") || !j.contains("stddev")) {
      throw ValidationError(p, "mean and stddev go together");
    }
    const double mean = json_real(j["mean"], p + ".mean");
    const double sd = json_real(j["stddev"], p + ".stddev");
    if (!(mean > 0.0)) throw ValidationError(p + ".mean", "must be > 0");
    if (!(sd >= 0.0)) throw ValidationError(p + ".stddev", "must be >= 0");
    return ExecModel::from_moments(mean, sd, m.unit);
  }
  if (j.contains("mu")) m.mu = json_real(j["mu"], p + ".mu");
  if (j.contains("sigma")) m.sigma = json_real(j["sigma"], p + ".sigma");
  return m;
}

inline DepthModel parse_depth_model(const Json& j) {
  const std::string p = "depth_model";
  DepthModel m;
  m.outcomes.clear();
  if (j.is_object()) {
    // {"0": 0.5, "2": 0.5}
    for (const auto& [key, value] : j.items()) {
      std::uint32_t depth = 0;
      if (!parse_uint(std::string_view(key), depth)) {
        throw ValidationError(p + "." + key, "depth keys must be integers");
      }
      m.outcomes.push_back({depth, json_real(value, p + "." + key)});
    }
    std::sort(m.outcomes.begin(), m.outcomes.end(),
              [](const DepthOutcome& a, const DepthOutcome& b) {
                return a.depth < b.depth;
              });
  } else if (j.is_array()) {
    // [{"depth": 0, "probability": 0.5}, ...]
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string q = p + "[" + std::to_string(i) + "]";
      if (!j[i].is_object() || !j[i].contains("depth") ||
          !j[i].contains("probability")) {
        throw ValidationError(q, "expected {\"depth\", \"probability\"}");
      }
      reject_unknown(j[i], q, {"depth", "probability"});
      m.outcomes.push_back({json_count(j[i]["depth"], q + ".depth"),
                            json_real(j[i]["probability"], q + ".probability")});
    }
  } else {
    throw ValidationError(p, "expected an object or an array");
  }
  return m;
}

inline QueuePolicy parse_queue_json(const Json& j) {
  const std::string p = "queue_policy";
  if (j.is_string()) {
    if (auto q = parse_queue_policy(j.get<std::string>())) return *q;
    throw ValidationError(p, "unknown policy " + j.dump());
  }
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw ValidationError(p, "expected a policy name or {\"kind\": ...}");
  }
  reject_unknown(j, p, {"kind", "quantum"});
  auto q = parse_queue_policy(j["kind"].get<std::string>());
  if (!q) throw ValidationError(p + ".kind", "unknown policy");
  if (j.contains("quantum")) {
    if (q->kind != QueuePolicy::Kind::kFairShare) {
      throw ValidationError(p + ".quantum", "only fair share takes a quantum");
    }
    q->quantum = json_duration(j["quantum"], p + ".quantum");
  }
  return *q;
}

inline std::vector<double> uniform_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

}  // namespace detail

// Checks every invariant; throws ValidationError naming the field.
inline void validate(const SimConfig& cfg) {
  if (cfg.end_time.micros == 0) throw ValidationError("end_time", "must be > 0");
  if (cfg.microservices.empty()) {
    throw ValidationError("microservices", "at least one microservice");
  }
  for (std::size_t i = 0; i < cfg.microservices.size(); ++i) {
    if (cfg.microservices[i] == 0) {
      throw ValidationError("microservices[" + std::to_string(i) + "]",
                            "instance count must be >= 1");
    }
  }
  if (cfg.queue_policy.kind == QueuePolicy::Kind::kFairShare &&
      cfg.queue_policy.quantum.micros == 0) {
    throw ValidationError("queue_policy.quantum", "must be > 0");
  }
  if (cfg.utilization_interval.micros == 0) {
    throw ValidationError("utilization_interval", "must be > 0");
  }
  if (cfg.imbalance_interval.micros == 0) {
    throw ValidationError("imbalance_interval", "must be > 0");
  }
  validate(cfg.workload, cfg.microservices.size());
}

// Builds a config from JSON text: absent keys keep their defaults. Weights
// left unspecified default to the four-service mix when there are four
// microservices and to a uniform mix otherwise.
inline SimConfig parse_config(std::string_view text) {
  detail::Json j = detail::Json::object();
  const bool blank = text.find_first_not_of(" \t\r\n") == std::string_view::npos;
  if (!blank) {
    try {
      j = detail::Json::parse(text.begin(), text.end(), nullptr, true,
                              /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("config: ") + e.what());
    }
  }
  if (j.is_null()) j = detail::Json::object();
  if (!j.is_object()) throw ParseError("config: top level must be an object");
  detail::reject_unknown(
      j, "",
      {"end_time", "exec_model", "arrival_model", "depth_model", "sla",
       "routing", "communication", "lb_policy", "queue_policy",
       "microservices", "seed", "utilization_interval", "imbalance_interval",
       "trace_in", "trace_out"});

  SimConfig cfg;
  auto& w = cfg.workload;
  if (j.contains("end_time")) {
    cfg.end_time = detail::json_duration(j["end_time"], "end_time");
  }
  if (j.contains("exec_model")) w.exec = detail::parse_exec_model(j["exec_model"]);
  if (j.contains("arrival_model")) {
    const auto& a = j["arrival_model"];
    if (!a.is_object()) throw ValidationError("arrival_model", "expected an object");
    detail::reject_unknown(a, "arrival_model", {"mean_interarrival"});
    if (a.contains("mean_interarrival")) {
      w.arrival.mean_interarrival = detail::json_duration(
          a["mean_interarrival"], "arrival_model.mean_interarrival");
    }
  }
  if (j.contains("depth_model")) w.depth = detail::parse_depth_model(j["depth_model"]);
  if (j.contains("sla")) w.sla = detail::json_duration(j["sla"], "sla");
  if (j.contains("microservices")) {
    const auto& m = j["microservices"];
    if (!m.is_array()) throw ValidationError("microservices", "expected an array");
    cfg.microservices.clear();
    for (std::size_t i = 0; i < m.size(); ++i) {
      cfg.microservices.push_back(detail::json_count(
          m[i], "microservices[" + std::to_string(i) + "]"));
    }
  }
  const bool paper_mix = cfg.microservices.size() == 4;
  bool routing_weights = false, comm_weights = false;
  if (j.contains("routing")) {
    const auto& r = j["routing"];
    if (!r.is_object()) throw ValidationError("routing", "expected an object");
    detail::reject_unknown(r, "routing", {"call_probabilities", "fanout"});
    if (r.contains("call_probabilities")) {
      w.routing.call_probabilities = detail::json_weights(
          r["call_probabilities"], "routing.call_probabilities");
      routing_weights = true;
    }
    if (r.contains("fanout")) {
      w.routing.fanout = detail::json_count(r["fanout"], "routing.fanout");
    }
  }
  if (j.contains("communication")) {
    const auto& c = j["communication"];
    if (!c.is_object()) throw ValidationError("communication", "expected an object");
    detail::reject_unknown(c, "communication", {"comm_probabilities", "fanout"});
    if (c.contains("comm_probabilities")) {
      w.communication.comm_probabilities = detail::json_weights(
          c["comm_probabilities"], "communication.comm_probabilities");
      comm_weights = true;
    }
    if (c.contains("fanout")) {
      w.communication.fanout =
          detail::json_count(c["fanout"], "communication.fanout");
    }
  }
  if (!paper_mix) {
    if (!routing_weights) {
      w.routing.call_probabilities = detail::uniform_weights(cfg.microservices.size());
    }
    if (!comm_weights) {
      w.communication.comm_probabilities =
          detail::uniform_weights(cfg.microservices.size());
    }
  }
  if (j.contains("lb_policy")) {
    const auto& v = j["lb_policy"];
    std::optional<LbPolicy> lb;
    if (v.is_string()) lb = parse_lb_policy(v.get<std::string>());
    if (!lb) throw ValidationError("lb_policy", "expected rr, lc or greedy");
    cfg.lb_policy = *lb;
  }
  if (j.contains("queue_policy")) {
    cfg.queue_policy = detail::parse_queue_json(j["queue_policy"]);
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) {
      throw ValidationError("seed", "expected a non-negative integer");
    }
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("utilization_interval")) {
    cfg.utilization_interval =
        detail::json_duration(j["utilization_interval"], "utilization_interval");
  }
  if (j.contains("imbalance_interval")) {
    cfg.imbalance_interval =
        detail::json_duration(j["imbalance_interval"], "imbalance_interval");
  }
  for (const char* key : {"trace_in", "trace_out"}) {
    if (!j.contains(key) || j[key].is_null()) continue;
    if (!j[key].is_string()) throw ValidationError(key, "expected a path");
    (std::string_view(key) == "trace_in" ? cfg.trace_in : cfg.trace_out) =
        j[key].get<std::string>();
  }
  validate(cfg);
  return cfg;
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace msim
