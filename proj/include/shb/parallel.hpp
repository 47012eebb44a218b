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

// Reproducible seed streams and the seed-parallel ensemble runner.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "shb/optim.hpp"
#include "shb/rates.hpp"

namespace shb {

/// SplitMix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of stream k: splitmix64(master + (k + 1) * golden). Streams depend only
/// on (master, k), so adding seeds never changes existing ones.
inline std::uint64_t seed_for(std::uint64_t master, std::uint64_t k) {
  return splitmix64(master + (k + 1) * 0x9E3779B97F4A7C15ULL);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t k) { return Rng(seed_for(master, k)); }

/// Runs fn(k) for k in [0, n) on up to `jobs` threads; results land in slot k.
/// The first exception thrown by any task is rethrown after all threads join.
template <class Fn>
void parallel_for(long n, int jobs, Fn&& fn) {
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(std::max(1L, n))));
  if (jobs == 1) {
    for (long k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (long k = next++; k < n; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

struct EnsembleSpec {
  StepSchedule schedule;
  double beta = 0.0;
  long T = 1000;
  Vector w0;
  long n_seeds = 10;
  std::uint64_t master_seed = 0;
  RunOptions run;
  int jobs = 1;
  /// Bypass validate_schedule; the ensemble then carries no gate verdict.
  bool unsafe = false;
  std::optional<double> K5_override;
  std::string config_hash;
};

/// Builds an ensemble of independent runs, one per seed stream, in seed order.
inline Ensemble run_ensemble(const StochasticOracle& oracle, const EnsembleSpec& spec) {
  require(spec.n_seeds >= 1, "run_ensemble: need at least one seed");
  Ensemble ens;
  ens.master_seed = spec.master_seed;
  ens.config_hash = spec.config_hash;
  ens.objective_name = oracle.base().name();
  ens.gamma = oracle.base().gamma();
  ens.convex = oracle.base().convex();
  if (!spec.unsafe) {
    const ShbConstants k = compute_shb_constants(oracle, spec.beta, spec.K5_override);
    ens.gate = validate_schedule(spec.schedule, k, ens.gamma, spec.T);
  }
  ens.trajectories.resize(static_cast<std::size_t>(spec.n_seeds));
  parallel_for(spec.n_seeds, spec.jobs, [&](long k) {
    Rng rng = make_rng(spec.master_seed, static_cast<std::uint64_t>(k));
    ens.trajectories[static_cast<std::size_t>(k)] = run(oracle, spec.schedule, spec.beta, spec.T, spec.w0, rng, spec.run);
  });
  return ens;
}

}  // namespace shb
