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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "shb/parallel.hpp"
#include "shb/rates.hpp"

using shb::Algo;
using shb::Ensemble;
using shb::EnsembleSpec;
using shb::Matrix;
using shb::ScheduleMode;
using shb::StepSchedule;
using shb::StochasticOracle;
using shb::Target;
using shb::Vector;

namespace {

StochasticOracle graded() {
  auto [X, y] = shb::graded_dataset();
  return StochasticOracle::least_squares(X, y);
}

EnsembleSpec capped_spec(const StochasticOracle& orc, double beta, double p, ScheduleMode mode, long T, long seeds,
                         const Vector& w0, std::uint64_t master = 1) {
  const auto k = shb::compute_shb_constants(orc, beta);
  EnsembleSpec sp;
  sp.schedule = {k.K0, p, k.K0, mode};
  sp.beta = beta;
  sp.T = T;
  sp.w0 = w0;
  sp.n_seeds = seeds;
  sp.master_seed = master;
  sp.run.record_every = T + 1;
  sp.run.log_points_per_decade = 20;
  return sp;
}

}  // namespace

TEST(PredictedExponent, ClosedFormEntries) {
  EXPECT_NEAR(shb::predicted_exponent(Algo::sgd, true, 1.0, 0.0, 0.8, Target::last_iterate), -0.2, 1e-15);
  EXPECT_NEAR(shb::predicted_exponent(Algo::shb, true, 0.5, 0.5, 0.8, Target::last_iterate), -2.0 / 15.0, 1e-15);
  EXPECT_NEAR(shb::predicted_exponent(Algo::sgd, false, 1.0, 0.0, 0.75, Target::min_grad), -0.25, 1e-15);
  EXPECT_NEAR(shb::predicted_exponent(Algo::shb, false, 0.5, 0.9, 0.75, Target::min_grad), -0.25, 1e-15);
}

// Rate table rows: SGD max(p-1, 1-(1+g)p); SHB scales it by 2g/(1+g); at g = 1 and
// p in (2/3, 1) both reduce to p - 1; non-convex min-gradient rows are p - 1.
TEST(PredictedExponent, RateTableRows) {
  for (double g : {0.25, 0.5, 0.75, 1.0}) {
    for (double p = 1.0 / (1.0 + g) + 0.01; p < 1.0; p += 0.02) {
      const double sgd = std::max(p - 1.0, 1.0 - (g + 1.0) * p);
      EXPECT_NEAR(shb::predicted_exponent(Algo::sgd, true, g, 0.0, p, Target::last_iterate), sgd, 1e-15);
      EXPECT_NEAR(shb::predicted_exponent(Algo::shb, true, g, 0.5, p, Target::last_iterate),
                  2.0 * g / (1.0 + g) * sgd, 1e-15);
      EXPECT_NEAR(shb::predicted_exponent(Algo::shb, false, g, 0.5, p, Target::min_grad), p - 1.0, 1e-15);
    }
  }
  for (double p = 0.67; p < 1.0; p += 0.01) {
    EXPECT_NEAR(shb::predicted_exponent(Algo::sgd, true, 1.0, 0.0, p, Target::last_iterate), p - 1.0, 1e-15);
    EXPECT_NEAR(shb::predicted_exponent(Algo::shb, true, 1.0, 0.5, p, Target::last_iterate), p - 1.0, 1e-15);
  }
  EXPECT_NEAR(shb::hp_exponent(0.6), -0.2, 1e-15);
  EXPECT_NEAR(shb::hp_exponent(0.8), -0.2, 1e-15);
  EXPECT_NEAR(shb::hp_exponent(2.0 / 3.0), -1.0 / 3.0, 1e-15);
}

TEST(PredictedExponent, ContinuousInsideWindow) {
  for (double g : {0.5, 1.0}) {
    const double lo = 1.0 / (1.0 + g);
    double prev = shb::predicted_exponent(Algo::shb, true, g, 0.5, lo + 1e-4, Target::last_iterate);
    for (double p = lo + 2e-4; p < 1.0 - 1e-4; p += 1e-4) {
      const double cur = shb::predicted_exponent(Algo::shb, true, g, 0.5, p, Target::last_iterate);
      ASSERT_LE(std::abs(cur - prev), 2.0 * (1.0 + g) * 1e-4 + 1e-12);
      prev = cur;
    }
  }
}

TEST(PredictedExponent, RejectsOutsideWindows) {
  EXPECT_THROW(shb::predicted_exponent(Algo::sgd, true, 1.0, 0.0, 0.5, Target::last_iterate), shb::InvalidInput);
  EXPECT_THROW(shb::predicted_exponent(Algo::sgd, true, 0.5, 0.0, 0.6, Target::last_iterate), shb::InvalidInput);
  EXPECT_THROW(shb::predicted_exponent(Algo::sgd, true, 1.0, 0.5, 0.8, Target::last_iterate), shb::InvalidInput);
  EXPECT_THROW(shb::predicted_exponent(Algo::shb, false, 1.0, 0.5, 0.8, Target::last_iterate), shb::InvalidInput);
  EXPECT_THROW(shb::predicted_exponent(Algo::shb, true, 1.5, 0.5, 0.8, Target::last_iterate), shb::InvalidInput);
  EXPECT_THROW(shb::hp_exponent(0.5), shb::InvalidInput);
}

TEST(FitRate, RecoversExactPowerLaws) {
  for (double e : {-1.0 / 3.0, -1.2, 0.4}) {
    std::vector<double> t, v;
    for (int k = 0; k <= 100; ++k) {
      const double x = std::pow(10.0, k / 20.0);
      t.push_back(x);
      v.push_back(5.0 * std::pow(x, e));
    }
    const auto f = shb::fit_rate(t, v);
    EXPECT_NEAR(f.slope, e, 1e-6);
    EXPECT_NEAR(std::exp(f.intercept), 5.0, 1e-6);
    EXPECT_LT(f.stderr_slope, 1e-8);
  }
  std::vector<double> series;
  for (int k = 1; k <= 1000; ++k) series.push_back(5.0 * std::pow(k, -1.0 / 3.0));
  EXPECT_NEAR(shb::fit_rate(shb::seqkit::SequencePrefix(series, 1)).slope, -1.0 / 3.0, 1e-6);
}

TEST(FitRate, ConstantSeriesHasZeroSlope) {
  std::vector<double> series(500, 2.5);
  EXPECT_NEAR(shb::fit_rate(shb::seqkit::SequencePrefix(series, 1)).slope, 0.0, 1e-12);
}

TEST(FitRate, UsesOnlyTheFinalWindow) {
  // Slope -2 early, -1/2 over the final 30% of log t.
  std::vector<double> t, v;
  for (int k = 0; k <= 100; ++k) {
    const double x = std::pow(10.0, k / 20.0);
    t.push_back(x);
    v.push_back(x < 1000.0 ? 1e6 * std::pow(x, -2.0) : std::pow(x, -0.5) * 1e6 / std::pow(1000.0, 1.5));
  }
  EXPECT_NEAR(shb::fit_rate(t, v, 0.3).slope, -0.5, 1e-9);
}

TEST(FitRate, RejectsNonPositiveValues) {
  std::vector<double> t = {1, 10, 100}, v = {1, 0, 1};
  EXPECT_THROW(shb::fit_rate(t, v, 1.0), shb::InvalidInput);
}

TEST(Quantile, OrderStatisticWithoutInterpolation) {
  std::vector<double> v;
  for (int k = 100; k >= 1; --k) v.push_back(k);
  EXPECT_EQ(shb::quantile(v, 0.05), 95.0);
  EXPECT_EQ(shb::quantile(v, 0.5), 50.0);
  EXPECT_EQ(shb::quantile(v, 0.001), 100.0);
  EXPECT_EQ(shb::median(v), 50.5);
  EXPECT_THROW(shb::quantile(v, 0.0), shb::InvalidInput);
}

// Smaller delta never gives a smaller quantile, for every recorded statistic.
TEST(Property, QuantilesMonotoneInDelta) {
  const auto orc = graded();
  const auto ens = shb::run_ensemble(
      orc, capped_spec(orc, 0.5, 2.0 / 3.0, ScheduleMode::as_rate, 2000, 100, shb::graded_initial_point()));
  const auto& last = ens.front().records.back();
  for (std::size_t col = 1; col < last.values().size(); ++col) {
    std::vector<double> vals;
    for (const auto& tr : ens.trajectories) vals.push_back(tr.records.back().values()[col]);
    double prev = -INFINITY;
    for (double d : {0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01}) {
      const double q = shb::quantile(vals, d);
      ASSERT_GE(q, prev) << shb::kTrajectoryColumns[col];
      prev = q;
    }
  }
}

TEST(AsRate, EpsilonIsCappedAtHalfTheExponent) {
  const auto orc = StochasticOracle::identical(shb::make_quadratic(Matrix::Identity(2, 2)), 1);
  auto sp = capped_spec(orc, 0.0, 0.75, ScheduleMode::as_rate, 200, 2, Vector::Constant(2, 1.0));
  const auto ens = shb::run_ensemble(orc, sp);
  const auto rep = shb::as_rate_check(ens, Target::last_iterate, 0.5);
  EXPECT_NE(rep.per_check_verdicts.front().detail.find("exponent 0.125"), std::string::npos)
      << rep.per_check_verdicts.front().detail;
  EXPECT_THROW(shb::as_rate_check(ens, Target::last_iterate, 0.0), shb::InvalidInput);
}

TEST(AsRate, ZeroNoiseGeometricDecayPasses) {
  const auto orc = StochasticOracle::identical(shb::make_quadratic(Matrix::Identity(2, 2)), 1);
  auto sp = capped_spec(orc, 0.0, 0.75, ScheduleMode::as_rate, 200, 3, Vector::Constant(2, 1.0));
  const auto rep = shb::as_rate_check(shb::run_ensemble(orc, sp), Target::last_iterate, 0.05);
  EXPECT_TRUE(rep.pass);
  EXPECT_TRUE(rep.one_sided);
  EXPECT_LT(rep.fitted_slope, rep.predicted_slope);
}

TEST(AsRate, SgdMinGradientOnLeastSquares) {
  const auto orc = graded();
  const auto ens = shb::run_ensemble(
      orc, capped_spec(orc, 0.0, 2.0 / 3.0, ScheduleMode::as_rate, 10000, 100, shb::graded_initial_point()));
  shb::AsRateOptions o;
  o.algo = Algo::sgd;
  const auto rep = shb::as_rate_check(ens, Target::min_grad, 0.05, o);
  EXPECT_TRUE(rep.pass) << rep.per_check_verdicts.front().detail << " slope " << rep.fitted_slope;
  EXPECT_NEAR(rep.predicted_slope, -1.0 / 3.0, 1e-15);
}

TEST(AsRate, OverstatedExponentFails) {
  const auto orc = graded();
  const auto ens = shb::run_ensemble(
      orc, capped_spec(orc, 0.0, 2.0 / 3.0, ScheduleMode::as_rate, 10000, 100, shb::graded_initial_point()));
  shb::AsRateOptions o;
  o.algo = Algo::sgd;
  o.exponent_override = -1.0 / 3.0 - 0.5;
  const auto rep = shb::as_rate_check(ens, Target::min_grad, 0.05, o);
  EXPECT_FALSE(rep.pass);
  EXPECT_FALSE(rep.per_check_verdicts.front().pass);
}

TEST(HpEnvelope, ZeroNoiseQuantileIsTheDeterministicPath) {
  const auto orc = StochasticOracle::identical(shb::make_quadratic_diag(Vector::LinSpaced(3, 1.0, 2.0)), 1);
  const auto sp = capped_spec(orc, 0.5, 2.0 / 3.0, ScheduleMode::hp_rate, 400, 100, Vector::Constant(3, 1.0));
  auto spec = sp;
  spec.run.extra_records = {101, 201, 401};
  const auto ens = shb::run_ensemble(orc, spec);
  const auto rep = shb::hp_envelope_check(ens, 0.1, {100, 200, 400});
  EXPECT_TRUE(rep.per_check_verdicts.front().pass);
  ASSERT_EQ(rep.plot.size(), 6u);
  EXPECT_EQ(rep.plot[0].y, ens.front().at(101).F_gap);
  EXPECT_EQ(rep.plot[4].y, ens.front().at(401).F_gap);
}

TEST(HpEnvelope, GatePropagation) {
  const auto orc = graded();
  auto sp = capped_spec(orc, 0.5, 2.0 / 3.0, ScheduleMode::hp_rate, 100, 20, shb::graded_initial_point());
  sp.run.extra_records = {11, 51, 101};
  sp.unsafe = true;
  const auto bypassed = shb::run_ensemble(orc, sp);
  EXPECT_THROW(shb::hp_envelope_check(bypassed, 0.5, {10, 50, 100}), shb::PreconditionFailed);
  EXPECT_THROW(shb::hp_sums_check(bypassed, 0.5, {10}, {50, 100}), shb::PreconditionFailed);
  sp.unsafe = false;
  sp.schedule.p = 0.45;  // outside the hp window
  const auto rejected = shb::run_ensemble(orc, sp);
  ASSERT_TRUE(rejected.gate.has_value());
  EXPECT_FALSE(rejected.gate->pass);
  EXPECT_THROW(shb::hp_envelope_check(rejected, 0.5, {10, 50, 100}), shb::PreconditionFailed);
  EXPECT_THROW(shb::hp_sums_check(rejected, 0.5, {10}, {50, 100}), shb::PreconditionFailed);
}

TEST(HpEnvelope, NeedsTenOverDeltaSeeds) {
  const auto orc = graded();
  auto sp = capped_spec(orc, 0.5, 2.0 / 3.0, ScheduleMode::hp_rate, 100, 19, shb::graded_initial_point());
  sp.run.extra_records = {11, 51, 101};
  const auto ens = shb::run_ensemble(orc, sp);
  EXPECT_THROW(shb::hp_envelope_check(ens, 0.5, {10, 50, 100}), shb::InsufficientSamples);
}

TEST(HpEnvelope, RequiresGammaOne) {
  const auto orc = StochasticOracle::additive_noise(shb::make_power(0.5, 2), 0.1);
  auto sp = capped_spec(orc, 0.5, 0.8, ScheduleMode::as_rate, 10000, 20, Vector::Ones(2));
  sp.run.extra_records = {101, 1001, 10001};
  const auto ens = shb::run_ensemble(orc, sp);
  ASSERT_TRUE(ens.gate->pass);
  EXPECT_THROW(shb::hp_envelope_check(ens, 0.5, {100, 1000, 10000}), shb::InvalidInput);
}

TEST(HpSums, ZeroNoiseMartingaleSumsVanish) {
  const auto orc = StochasticOracle::identical(shb::make_quadratic_diag(Vector::LinSpaced(3, 1.0, 2.0)), 1);
  auto sp = capped_spec(orc, 0.5, 2.0 / 3.0, ScheduleMode::hp_rate, 1000, 20, Vector::Constant(3, 1.0));
  sp.run.extra_records = shb::hp_sums_required_records({10, 100}, {100, 1000});
  const auto ens = shb::run_ensemble(orc, sp);
  for (const auto& tr : ens.trajectories)
    EXPECT_EQ(shb::hp_sum_value(tr, shb::HpSum::noise_dot_v, 10, 1000), 0.0);
  for (const auto& v : shb::hp_sums_check(ens, 0.1, {10, 100}, {100, 1000})) EXPECT_TRUE(v.pass) << v.name;
}

TEST(HpSums, WindowDifferencesMatchDirectSums) {
  const auto orc = graded();
  auto sp = capped_spec(orc, 0.5, 2.0 / 3.0, ScheduleMode::hp_rate, 300, 1, shb::graded_initial_point());
  sp.run.record_every = 1;
  const auto ens = shb::run_ensemble(orc, sp);
  const auto& tr = ens.front();
  double direct = 0.0;
  for (long t = 20; t <= 200; ++t) direct += tr.at(t).alpha * tr.at(t).F_gap;
  EXPECT_NEAR(shb::hp_sum_value(tr, shb::HpSum::weighted_risk, 20, 200), direct, 1e-10 * direct);
  double vsq = 0.0;
  for (long t = 21; t <= 200; ++t) vsq += tr.at(t).alpha * tr.at(t).v_sq;
  EXPECT_NEAR(shb::hp_sum_value(tr, shb::HpSum::alpha_v_sq, 20, 200), vsq, 1e-10 * vsq);
}

namespace {
/// Noisy least squares started at the minimizer: no transient, so the tail
/// sums scale with the stationary tau^{1-2p} shape.
const Ensemble& stationary_ensemble() {
  static const Ensemble ens = [] {
    const auto orc = graded();
    auto sp = capped_spec(orc, 0.5, 2.0 / 3.0, ScheduleMode::hp_rate, 10000, 200, orc.base().w_star(), 5);
    sp.run.extra_records = shb::hp_sums_required_records({10, 100, 1000}, {2000, 10000});
    return shb::run_ensemble(orc, sp);
  }();
  return ens;
}
}  // namespace

TEST(HpSums, StationaryEnsembleIsDominated) {
  for (const auto& v : shb::hp_sums_check(stationary_ensemble(), 0.05, {10, 100, 1000}, {2000, 10000}))
    EXPECT_TRUE(v.pass) << v.name << " " << v.detail;
}

TEST(HpSums, SteepenedTailEnvelopeFails) {
  shb::HpSumsOptions o;
  o.tail_exponent_override = (1.0 - 2.0 * 2.0 / 3.0) - 1.0;
  bool v_next_failed = false;
  for (const auto& v : shb::hp_sums_check(stationary_ensemble(), 0.05, {10, 100, 1000}, {2000, 10000}, o)) {
    if (v.name == "sum_v_next_sq") v_next_failed = !v.pass;
  }
  EXPECT_TRUE(v_next_failed);
}

TEST(HpSums, PlotPointsPairQuantileAndEnvelope) {
  std::vector<shb::PlotPoint> plot;
  shb::hp_sums_check(stationary_ensemble(), 0.05, {10, 100}, {2000, 10000}, {}, &plot);
  ASSERT_FALSE(plot.empty());
  EXPECT_EQ(plot.size() % 2, 0u);
}

TEST(BetaInvariance, SkippedBelowGammaOne) {
  const auto orc = StochasticOracle::additive_noise(shb::make_power(0.5, 2), 0.1);
  std::map<double, Ensemble> store;
  for (double b : {0.0, 0.5}) {
    auto sp = capped_spec(orc, b, 0.8, ScheduleMode::as_rate, 100, 3, Vector::Ones(2));
    store[b] = shb::run_ensemble(orc, sp);
  }
  std::map<double, const Ensemble*> m;
  for (auto& [b, e] : store) m[b] = &e;
  const auto v = shb::beta_invariance_check(m);
  EXPECT_TRUE(v.skipped);
  EXPECT_NE(v.note.find("r_gamma slowdown regime"), std::string::npos);
}

TEST(BetaInvariance, RejectsMismatchedEnsembles) {
  const auto orc = graded();
  std::map<double, Ensemble> store;
  store[0.0] = shb::run_ensemble(orc, capped_spec(orc, 0.0, 2.0 / 3.0, ScheduleMode::as_rate, 1000, 3,
                                                  shb::graded_initial_point()));
  store[0.5] = shb::run_ensemble(orc, capped_spec(orc, 0.5, 0.8, ScheduleMode::as_rate, 1000, 3,
                                                  shb::graded_initial_point()));
  std::map<double, const Ensemble*> m;
  for (auto& [b, e] : store) m[b] = &e;
  EXPECT_THROW(shb::beta_invariance_check(m), shb::InvalidInput);
}

TEST(BetaInvariance, ModerateScaleSlopesAgree) {
  const auto orc = graded();
  std::map<double, Ensemble> store;
  for (double b : {0.0, 0.5, 0.9})
    store[b] = shb::run_ensemble(orc, capped_spec(orc, b, 2.0 / 3.0, ScheduleMode::as_rate, 20000, 30,
                                                  shb::graded_initial_point(), 9));
  std::map<double, const Ensemble*> m;
  for (auto& [b, e] : store) m[b] = &e;
  const auto v = shb::beta_invariance_check(m);
  EXPECT_FALSE(v.skipped);
  EXPECT_TRUE(v.pass) << "spread " << v.spread << " band " << v.band;
}
