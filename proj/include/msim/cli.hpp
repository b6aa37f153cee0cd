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

#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msim/config.hpp"
#include "msim/simulation.hpp"

namespace msim {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2 };

struct CliOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> end_time;
  std::optional<std::string> lb;
  std::optional<std::string> queue;
  std::string out = "msim-out";
  std::optional<std::string> trace_in;
  std::optional<std::string> trace_out;
  bool emit_ecdf = false;
  unsigned runs = 1;
};

// Defaults, then the config file, then command-line flags.
inline SimConfig resolve_config(const CliOptions& opts) {
  SimConfig cfg = opts.config ? load_config(*opts.config) : SimConfig{};
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.end_time) {
    auto d = parse_duration(*opts.end_time);
    if (!d) throw ValidationError("--end-time", "expected a duration like 60s");
    cfg.end_time = *d;
  }
  if (opts.lb) {
    auto lb = parse_lb_policy(*opts.lb);
    if (!lb) throw ValidationError("--lb", "expected rr, lc or greedy");
    cfg.lb_policy = *lb;
  }
  if (opts.queue) {
    auto q = parse_queue_policy(*opts.queue);
    if (!q) {
      throw ValidationError("--queue", "expected fcfs, sf, fs, ed-eds or ed-exds");
    }
    // Keep a configured quantum when only the policy name is overridden.
    if (q->kind == QueuePolicy::Kind::kFairShare &&
        cfg.queue_policy.kind == QueuePolicy::Kind::kFairShare) {
      q->quantum = cfg.queue_policy.quantum;
    }
    cfg.queue_policy = *q;
  }
  if (opts.trace_in) cfg.trace_in = *opts.trace_in;
  if (opts.trace_out) cfg.trace_out = *opts.trace_out;
  validate(cfg);
  return cfg;
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out,
                    std::ostream& err) {
  CliOptions opts;
  CLI::App app{"Discrete-event simulator for microservice applications", "msim"};
  app.add_option("--config", opts.config, "JSON config file");
  app.add_option("--seed", opts.seed, "Master random seed (overrides config)");
  app.add_option("--end-time", opts.end_time,
                 "Simulation time limit, e.g. 60s or 1h");
  app.add_option("--lb", opts.lb, "Load balancer: rr, lc or greedy");
  app.add_option("--queue", opts.queue,
                 "Queue policy: fcfs, sf, fs, ed-eds or ed-exds");
  app.add_option("--out", opts.out, "Output directory")->capture_default_str();
  app.add_option("--trace-in", opts.trace_in, "Replay this trace CSV");
  app.add_option("--trace-out", opts.trace_out, "Write the run's trace CSV");
  app.add_flag("--emit-ecdf", opts.emit_ecdf,
               "Also write stage-slowdown and wait ECDFs");
  app.add_option("--runs", opts.runs,
                 "Independent runs with seeds seed..seed+N-1")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  SimConfig cfg;
  try {
    cfg = resolve_config(opts);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  auto run_one = [&](SimConfig c, const std::filesystem::path& dir) {
    SimResult result = run_simulation(c);
    write_outputs(result, c, dir, OutputOptions{opts.emit_ecdf});
    return result.report.client_requests;
  };

  try {
    if (opts.runs == 1) {
      const auto n = run_one(cfg, opts.out);
      out << "completed " << n << " client requests; results in " << opts.out
          << '\n';
      return kExitOk;
    }
    std::vector<std::future<std::uint64_t>> runs;
    for (unsigned r = 0; r < opts.runs; ++r) {
      SimConfig c = cfg;
      c.seed = cfg.seed + r;
      const auto dir = std::filesystem::path(opts.out) / ("run_" + std::to_string(r));
      if (c.trace_out) c.trace_out = (dir / "trace.csv").string();
      runs.push_back(std::async(std::launch::async, run_one, c, dir));
    }
    for (unsigned r = 0; r < opts.runs; ++r) {
      const auto n = runs[r].get();
      out << "run " << r << " (seed " << cfg.seed + r << "): completed " << n
          << " client requests\n";
    }
    return kExitOk;
  } catch (const MalformedTrace& e) {
    err << "malformed trace: line " << e.line() << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace msim
