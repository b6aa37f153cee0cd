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

#include <compare>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace msim {

// Base class of every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchedulingInPast : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A configuration value that breaks an invariant. `field()` is the dotted
// path of the offending key.
class ValidationError : public ConfigError {
 public:
  ValidationError(std::string field, const std::string& reason)
      : ConfigError(field + ": " + reason), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Simulated time in whole microseconds. Used both for instants (measured
// from simulation start) and for durations.
struct SimTime {
  std::uint64_t micros = 0;

  constexpr SimTime() = default;
  constexpr explicit SimTime(std::uint64_t us) : micros(us) {}

  static constexpr SimTime max() {
    return SimTime{std::numeric_limits<std::uint64_t>::max()};
  }

  constexpr auto operator<=>(const SimTime&) const = default;

  constexpr SimTime& operator+=(SimTime other) {
    micros += other.micros;
    return *this;
  }
  constexpr SimTime& operator-=(SimTime other) {
    micros -= other.micros;
    return *this;
  }
  friend constexpr SimTime operator+(SimTime a, SimTime b) {
    return SimTime{a.micros + b.micros};
  }
  friend constexpr SimTime operator-(SimTime a, SimTime b) {
    return SimTime{a.micros - b.micros};
  }
};

constexpr SimTime micros(std::uint64_t v) { return SimTime{v}; }
constexpr SimTime millis(std::uint64_t v) { return SimTime{v * 1000}; }
constexpr SimTime seconds(std::uint64_t v) { return SimTime{v * 1000000}; }

// Rounds a non-negative real number of microseconds half-up to a whole
// SimTime, never below `floor_us`.
inline SimTime round_micros(double value, std::uint64_t floor_us = 0) {
  constexpr double kCeiling = 1e15;
  if (!(value >= 0.0)) value = 0.0;
  if (value > kCeiling) value = kCeiling;
  auto us = static_cast<std::uint64_t>(value + 0.5);
  if (us < floor_us) us = floor_us;
  return SimTime{us};
}

// Default ordering: every payload has the same rank, so events at the same
// instant are delivered in insertion order.
struct UniformRank {
  template <typename Payload>
  constexpr std::uint32_t operator()(const Payload&) const {
    return 0;
  }
};

// Time-ordered event queue with a virtual clock.
//
// Events are delivered in (fire_at, rank(payload), seq) order, where seq is
// the insertion counter. With the default UniformRank this is plain
// (fire_at, seq) order.
template <typename Payload, typename Rank = UniformRank>
class EventQueue {
 public:
  struct Event {
    SimTime fire_at;
    std::uint64_t seq = 0;
    Payload payload;
  };

  explicit EventQueue(Rank rank = Rank{}) : heap_(Later{rank}) {}

  SimTime now() const { return now_; }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  std::uint64_t delivered() const { return delivered_; }

  // Time of the next pending event; SimTime::max() when the queue is empty.
  SimTime next_time() const {
    return heap_.empty() ? SimTime::max() : heap_.top().fire_at;
  }

  void schedule(SimTime fire_at, Payload payload) {
    if (fire_at < now_) {
      throw SchedulingInPast("event scheduled at " +
                             std::to_string(fire_at.micros) +
                             "us but the clock is at " +
                             std::to_string(now_.micros) + "us");
    }
    heap_.push(Event{fire_at, next_seq_++, std::move(payload)});
  }

  // Delivers every event with fire_at <= end to `handler(const Event&)`.
  // Handlers may schedule further events, including at the current instant.
  // The clock is left at `end` whether or not events remain.
  template <typename Handler>
  SimTime run_until(SimTime end, Handler&& handler) {
    while (!heap_.empty() && heap_.top().fire_at <= end) {
      deliver_next(handler);
    }
    if (now_ < end) now_ = end;
    return now_;
  }

  // Delivers events until the queue is exhausted; returns the time of the
  // last delivered event (or the current clock if none were pending).
  template <typename Handler>
  SimTime run(Handler&& handler) {
    while (!heap_.empty()) deliver_next(handler);
    return now_;
  }

  // Delivers exactly one event. Returns false when the queue is empty.
  template <typename Handler>
  bool step(Handler&& handler) {
    if (heap_.empty()) return false;
    deliver_next(handler);
    return true;
  }

 private:
  struct Later {
    Rank rank;
    bool operator()(const Event& a, const Event& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      const auto ra = rank(a.payload);
      const auto rb = rank(b.payload);
      if (ra != rb) return ra > rb;
      return a.seq > b.seq;
    }
  };

  template <typename Handler>
  void deliver_next(Handler& handler) {
    Event ev = heap_.top();
    heap_.pop();
    now_ = ev.fire_at;
    ++delivered_;
    handler(static_cast<const Event&>(ev));
  }

  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  SimTime now_{};
  std::uint64_t next_seq_ = 0;
  std::uint64_t delivered_ = 0;
};

// Identifies the consumer of a random stream. One stream per stochastic
// component keeps the components' draws independent of each other.
enum class StreamId : std::uint32_t {
  kArrival = 1,
  kExec = 2,
  kDepth = 3,
  kRouting = 4,
  kCommunication = 5,
};

inline std::string_view to_string(StreamId id) {
  switch (id) {
    case StreamId::kArrival: return "arrival";
    case StreamId::kExec: return "exec";
    case StreamId::kDepth: return "depth";
    case StreamId::kRouting: return "routing";
    case StreamId::kCommunication: return "communication";
  }
  return "unknown";
}

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// Deterministic random stream (xoshiro256** seeded through splitmix64 from
// the master seed and the stream id). The generator and the conversion to
// reals are spelled out here so the sequence does not depend on the
// standard library's distribution implementations.
class RngStream {
 public:
  RngStream(std::uint64_t seed, StreamId stream) : seed_(seed), stream_(stream) {
    std::uint64_t sm =
        seed ^ (0xd1b54a32d192ed03ULL * static_cast<std::uint64_t>(stream));
    for (auto& word : state_) word = detail::splitmix64(sm);
  }

  std::uint64_t seed() const { return seed_; }
  StreamId stream() const { return stream_; }
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next_u64() {
    ++draws_;
    const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  // Uniform real in [0, 1) with 53 random bits.
  double draw_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t seed_;
  StreamId stream_;
  std::uint64_t state_[4]{};
  std::uint64_t draws_ = 0;
};

inline double draw_uniform(RngStream& stream) { return stream.draw_uniform(); }

}  // namespace msim
