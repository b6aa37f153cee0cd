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

#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "msim/oracle.hpp"
#include "scenario.hpp"

namespace msim {
namespace {

using oracle::ScheduledStage;

TEST(Mg1, DeterministicServiceAtHalfLoad) {
  EXPECT_DOUBLE_EQ(oracle::mg1_fcfs_mean_wait({0.0005, 1000, 1e6}), 500.0);
}

TEST(Mg1, VanishingLoadHasNoWait) {
  EXPECT_LT(oracle::mg1_fcfs_mean_wait({1e-12, 1000, 1e6}), 1e-5);
}

TEST(Mg1, SaturatedIsUnstable) {
  EXPECT_THROW(oracle::mg1_fcfs_mean_wait({0.001, 1000, 1e6}),
               oracle::UnstableSystem);
}

std::vector<std::uint64_t> completions(const std::vector<ScheduledStage>& s,
                                       const QueuePolicy& p) {
  std::vector<std::uint64_t> out;
  for (const auto& t : oracle::brute_force_schedule(s, p)) {
    out.push_back(t.completion.micros);
  }
  return out;
}

TEST(BruteForce, FcfsHandSchedule) {
  const std::vector<ScheduledStage> s{{0, micros(0), micros(100), {}},
                                      {1, micros(10), micros(100), {}},
                                      {2, micros(20), micros(100), {}}};
  EXPECT_EQ(completions(s, QueuePolicy::fcfs()),
            (std::vector<std::uint64_t>{100, 200, 300}));
}

TEST(BruteForce, ShortestFirstIsNonPreemptive) {
  const std::vector<ScheduledStage> s{{0, micros(0), micros(1000), {}},
                                      {1, micros(1), micros(10), {}}};
  const auto t = oracle::brute_force_schedule(s, QueuePolicy::shortest_first());
  EXPECT_EQ(t[0], (oracle::StageTiming{micros(0), micros(1000)}));
  EXPECT_EQ(t[1], (oracle::StageTiming{micros(1000), micros(1010)}));
}

// Slices A500, B300, A500, A200 on one server: B ends at 800, A at 1500.
TEST(BruteForce, FairShareInterleaves) {
  const std::vector<ScheduledStage> s{{0, micros(0), micros(1200), {}},
                                      {1, micros(0), micros(300), {}}};
  const auto t = oracle::brute_force_schedule(s, QueuePolicy::fair_share(micros(500)));
  EXPECT_EQ(t[0], (oracle::StageTiming{micros(0), micros(1500)}));
  EXPECT_EQ(t[1], (oracle::StageTiming{micros(500), micros(800)}));
}

TEST(BruteForce, EarlyDeadlineOrdersByDeadline) {
  const std::vector<ScheduledStage> s{{0, micros(0), micros(10), micros(100)},
                                      {1, micros(1), micros(10), micros(900)},
                                      {2, micros(2), micros(10), micros(50)}};
  EXPECT_EQ(completions(s, QueuePolicy::early_deadline(DeadlineVariant::kEds)),
            (std::vector<std::uint64_t>{10, 30, 20}));
}

TEST(BruteForce, IdleGapsAreSkippedCorrectly) {
  const std::vector<ScheduledStage> s{{0, micros(5), micros(3), {}},
                                      {1, micros(100), micros(4), {}}};
  const auto t = oracle::brute_force_schedule(s, QueuePolicy::fcfs());
  EXPECT_EQ(t[0], (oracle::StageTiming{micros(5), micros(8)}));
  EXPECT_EQ(t[1], (oracle::StageTiming{micros(100), micros(104)}));
}

// Hand examples through the event engine as well.
TEST(EngineVsOracle, HandExamples) {
  testing::Scenario fcfs;
  for (std::uint64_t i = 0; i < 3; ++i) {
    fcfs.stages.push_back({i, micros(10 * i), micros(100), {}});
    fcfs.slas.push_back(seconds(1));
  }
  EXPECT_EQ(testing::engine_completions(fcfs, QueuePolicy::fcfs()),
            (std::vector<SimTime>{micros(100), micros(200), micros(300)}));

  testing::Scenario fs;
  fs.stages = {{0, micros(0), micros(1200), {}}, {1, micros(0), micros(300), {}}};
  fs.slas = {seconds(1), seconds(1)};
  EXPECT_EQ(testing::engine_completions(fs, QueuePolicy::fair_share(micros(500))),
            (std::vector<SimTime>{micros(1500), micros(800)}));
}

class EngineVsOracleProperty : public ::testing::TestWithParam<QueuePolicy> {};

TEST_P(EngineVsOracleProperty, RandomScenariosAgree) {
  std::mt19937_64 gen(1000 + static_cast<int>(GetParam().kind));
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = testing::random_scenario(gen, 20);
    ASSERT_EQ(testing::engine_completions(s, GetParam()),
              testing::oracle_completions(s, GetParam()))
        << "trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllPolicies, EngineVsOracleProperty,
    ::testing::Values(QueuePolicy::fcfs(), QueuePolicy::shortest_first(),
                      QueuePolicy::fair_share(micros(500)),
                      QueuePolicy::fair_share(micros(37)),
                      QueuePolicy::early_deadline(DeadlineVariant::kEds),
                      QueuePolicy::early_deadline(DeadlineVariant::kExds)));

}  // namespace
}  // namespace msim
