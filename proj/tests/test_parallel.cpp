/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The shbrate Authors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <atomic>
#include <set>
#include <stdexcept>

#include <gtest/gtest.h>

#include "shb/parallel.hpp"

// Reference SplitMix64 outputs for state 0 (first three draws).
TEST(Seeds, SplitMixMatchesReferenceStream) {
  std::uint64_t state = 0;
  auto next = [&] {
    const std::uint64_t out = shb::splitmix64(state);
    state += 0x9E3779B97F4A7C15ULL;
    return out;
  };
  EXPECT_EQ(next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(next(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(next(), 0x06C45D188009454FULL);
}

TEST(Seeds, StreamsAreDistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t k = 0; k < 1000; ++k) seen.insert(shb::seed_for(7, k));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(shb::seed_for(7, 3), shb::seed_for(7, 3));
  EXPECT_NE(shb::seed_for(7, 3), shb::seed_for(8, 3));
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (int jobs : {1, 2, 4, 16}) {
    std::vector<std::atomic<int>> hits(257);
    shb::parallel_for(257, jobs, [&](long k) { hits[static_cast<std::size_t>(k)]++; });
    for (const auto& h : hits) ASSERT_EQ(h.load(), 1);
  }
}

TEST(ParallelFor, RethrowsTaskException) {
  EXPECT_THROW(shb::parallel_for(50, 3,
                                 [](long k) {
                                   if (k == 17) throw std::runtime_error("boom");
                                 }),
               std::runtime_error);
}

namespace {
shb::Ensemble small_ensemble(long seeds, int jobs) {
  auto [X, y] = shb::graded_dataset();
  const auto orc = shb::StochasticOracle::least_squares(X, y);
  const auto k = shb::compute_shb_constants(orc, 0.5);
  shb::EnsembleSpec sp;
  sp.schedule = {k.K0, 2.0 / 3.0, k.K0, shb::ScheduleMode::as_rate};
  sp.beta = 0.5;
  sp.T = 500;
  sp.w0 = shb::graded_initial_point();
  sp.n_seeds = seeds;
  sp.master_seed = 99;
  sp.run.record_every = 50;
  sp.jobs = jobs;
  return shb::run_ensemble(orc, sp);
}

void expect_same_path(const shb::Trajectory& a, const shb::Trajectory& b) {
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) ASSERT_EQ(a.records[i].values(), b.records[i].values());
}
}  // namespace

TEST(Ensemble, IndependentOfThreadCount) {
  const auto a = small_ensemble(6, 1);
  const auto b = small_ensemble(6, 4);
  for (std::size_t k = 0; k < 6; ++k) expect_same_path(a.trajectories[k], b.trajectories[k]);
}

TEST(Ensemble, AddingSeedsKeepsExistingStreams) {
  const auto a = small_ensemble(3, 1);
  const auto b = small_ensemble(5, 2);
  for (std::size_t k = 0; k < 3; ++k) expect_same_path(a.trajectories[k], b.trajectories[k]);
  EXPECT_NE(b.trajectories[3].records.back().F_gap, b.trajectories[4].records.back().F_gap);
}

TEST(Ensemble, CarriesGateVerdict) {
  const auto a = small_ensemble(2, 1);
  ASSERT_TRUE(a.gate.has_value());
  EXPECT_TRUE(a.gate->pass);
}
