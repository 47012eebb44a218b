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

#include "shb/oracle.hpp"
#include "shb/optim.hpp"

using shb::GradientSample;
using shb::Matrix;
using shb::Rng;
using shb::StochasticOracle;
using shb::Vector;

namespace {

StochasticOracle graded() {
  auto [X, y] = shb::graded_dataset();
  return StochasticOracle::least_squares(X, y);
}

/// Test fixture: every sampled gradient is shifted by a constant vector.
struct BiasedOracle {
  const StochasticOracle& inner;
  double shift = 1.0;
  GradientSample sample(const Vector& w, Rng& rng) const {
    GradientSample s = inner.sample(w, rng);
    s.grad.array() += shift;
    s.noise.array() -= shift;
    return s;
  }
};

/// Test fixture: AR(1) noise, so consecutive draws are correlated.
struct CorrelatedOracle {
  shb::Objective base;
  double rho = 0.9;
  mutable Vector state;
  GradientSample sample(const Vector& w, Rng& rng) const {
    std::normal_distribution<double> nd;
    if (state.size() != w.size()) state = Vector::Zero(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) state[i] = rho * state[i] + nd(rng);
    GradientSample s;
    s.grad = base.grad(w) + state;
    s.noise = -state;
    s.loss = base.eval(w);
    return s;
  }
};

std::vector<Vector> trajectory_points(const StochasticOracle& orc, double beta, long T, long every, Rng& rng) {
  const shb::ShbConstants k = shb::compute_shb_constants(orc, beta);
  const shb::StepSchedule s{k.K0, 2.0 / 3.0, k.K0, shb::ScheduleMode::as_rate};
  std::vector<Vector> pts;
  shb::ShbState st = shb::initial_state(shb::graded_initial_point());
  for (long t = 1; t <= T; ++t) {
    if (t % every == 0) pts.push_back(st.w);
    st = shb::shb_step_onestep(st, orc.sample(st.w, rng).grad, s.alpha(t), beta);
  }
  return pts;
}

}  // namespace

TEST(Oracle, IdenticalComponentsHaveZeroNoise) {
  const auto orc = StochasticOracle::identical(shb::make_quadratic(Matrix::Identity(3, 3)), 5);
  Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    const Vector w = Vector::Random(3);
    EXPECT_EQ(orc.sample(w, rng).noise.norm(), 0.0);
  }
}

TEST(Oracle, SingleComponentIsDeterministic) {
  Matrix X(1, 2);
  X << 1.0, 2.0;
  const auto orc = StochasticOracle::least_squares(X, Vector::Constant(1, 3.0));
  Rng rng(2);
  const Vector w = Vector::Constant(2, 0.3);
  const GradientSample s = orc.sample(w, rng);
  EXPECT_EQ(s.grad, orc.base().grad(w));
  EXPECT_EQ(s.noise.norm(), 0.0);
}

TEST(Oracle, EnumeratedMeanEqualsFullGradientExactly) {
  const auto orc = graded();
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const Vector w = shb::sample_ball(orc.base().w_star(), 5.0, rng);
    EXPECT_EQ(orc.enumerated_mean_grad(w), orc.base().grad(w));
  }
}

TEST(Oracle, AdditiveNoiseShape) {
  const auto orc = StochasticOracle::additive_noise(shb::make_quadratic(Matrix::Identity(2, 2)), 0.5);
  Rng rng(4);
  const Vector w = Vector::Constant(2, 1.0);
  const GradientSample s = orc.sample(w, rng);
  EXPECT_LT((s.grad - orc.base().grad(w) + s.noise).norm(), 1e-15);
  EXPECT_FALSE(orc.certified());
  EXPECT_THROW(orc.sample(Vector::Zero(3), rng), shb::InvalidInput);
  EXPECT_THROW(StochasticOracle::additive_noise(shb::make_bump(1), -1.0), shb::InvalidInput);
}

TEST(Oracle, GradientMomentAtMinimum) {
  const auto orc = graded();
  // Each component gradient at w* = 0 is -0.05 x_i, so the mean squared norm is 0.0025 * trace(X^T X) / n.
  auto [X, y] = shb::graded_dataset();
  const double expected = 0.0025 * X.squaredNorm() / 10.0;
  EXPECT_NEAR(orc.grad_moment_at_min(1.0), expected, 1e-15);
  EXPECT_NEAR(orc.sup_loss_at_min(), 0.5 * 0.05 * 0.05, 1e-15);
}

// Monte Carlo oracle for E ||sigma xi||^{1+theta} under additive Gaussian noise.
TEST(Oracle, AdditiveNoiseMomentMatchesSampling) {
  const auto orc = StochasticOracle::additive_noise(shb::make_power(0.5, 3), 0.7);
  EXPECT_NEAR(orc.grad_moment_at_min(1.0), 0.49 * 3.0, 1e-14);
  Rng rng(11);
  const Vector ws = orc.base().w_star();
  for (double theta : {0.25, 0.5, 1.0}) {
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double m = std::pow(orc.sample(ws, rng).grad.norm(), 1.0 + theta);
      s += m;
      s2 += m * m;
    }
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    EXPECT_NEAR(orc.grad_moment_at_min(theta), mean, 5.0 * se) << "theta " << theta;
  }
  EXPECT_EQ(StochasticOracle::additive_noise(shb::make_power(0.5, 2), 0.0).grad_moment_at_min(0.5), 0.0);
}

TEST(Unbiased, IdenticalOracleHasExactZeroMean) {
  const auto orc = StochasticOracle::identical(shb::make_bump(2), 3);
  Rng rng(5);
  const auto v = shb::check_unbiased(orc, Vector::Constant(2, 0.7), 100, rng);
  EXPECT_TRUE(v.pass);
  EXPECT_EQ(v.max_z, 0.0);
  EXPECT_EQ(v.mean_noise.norm(), 0.0);
}

TEST(Unbiased, LeastSquaresPasses) {
  const auto orc = graded();
  Rng rng(6);
  EXPECT_TRUE(shb::check_unbiased(orc, shb::graded_initial_point(), 10000, rng).pass);
}

TEST(Unbiased, BiasedOracleFails) {
  const auto orc = graded();
  Rng rng(7);
  const auto v = shb::check_unbiased(BiasedOracle{orc}, shb::graded_initial_point(), 10000, rng);
  EXPECT_FALSE(v.pass);
  EXPECT_GT(v.max_z, 3.0);
}

TEST(Unbiased, NeedsEnoughSamples) {
  const auto orc = graded();
  Rng rng(8);
  EXPECT_THROW(shb::check_unbiased(orc, shb::graded_initial_point(), 99, rng), shb::InvalidInput);
}

TEST(NoiseConstants, GammaOneNoSupLoss) {
  const auto k = shb::compute_noise_constants(1.0, 1.0, 0.0, 0.0);
  EXPECT_EQ(k.a1, 2.0);
  EXPECT_EQ(k.a2, 0.0);
  EXPECT_EQ(k.a4, 0.0);
  EXPECT_EQ(k.a5, 0.0);
}

TEST(NoiseConstants, HalfGammaUnitSupLoss) {
  const auto k = shb::compute_noise_constants(1.0, 0.5, 1.0, 0.0);
  EXPECT_NEAR(k.a1, 2.0 / 3.0, 1e-15);
  // (1/3) * 3^2 + 2/3
  EXPECT_NEAR(k.a2, 11.0 / 3.0, 1e-13);
}

TEST(NoiseConstants, HalfGammaNoSupLoss) {
  EXPECT_NEAR(shb::compute_noise_constants(1.0, 0.5, 0.0, 0.0).a2, 3.0, 1e-13);
}

TEST(NoiseConstants, AbcTriple) {
  // A = 2^g L^{1/g} (1 + g), B = 0, C = 2^g (1 - g^2)/(1 + g) + 2^g m.
  const auto k = shb::compute_noise_constants(2.0, 0.5, 0.0, 0.0, 0.3);
  EXPECT_NEAR(k.A, std::sqrt(2.0) * 4.0 * 1.5, 1e-13);
  EXPECT_EQ(k.B, 0.0);
  EXPECT_NEAR(k.C, std::sqrt(2.0) * 0.75 / 1.5 + std::sqrt(2.0) * 0.3, 1e-13);
}

TEST(NoiseConstants, RejectsInvalidInput) {
  EXPECT_THROW(shb::compute_noise_constants(1.0, 0.0, 0.0, 0.0), shb::InvalidInput);
  EXPECT_THROW(shb::compute_noise_constants(1.0, 1.5, 0.0, 0.0), shb::InvalidInput);
  EXPECT_THROW(shb::compute_noise_constants(0.0, 1.0, 0.0, 0.0), shb::InvalidInput);
  EXPECT_THROW(shb::compute_noise_constants(1.0, 1.0, -1.0, 0.0), shb::InvalidInput);
}

TEST(NoiseBounds, IdenticalOracleAtMinimumIsAllZero) {
  const auto orc = StochasticOracle::identical(shb::make_quadratic(Matrix::Identity(2, 2)), 4);
  Rng rng(9);
  const auto rep = shb::check_noise_bounds(orc, shb::compute_noise_constants(orc), {Vector::Zero(2)}, 0, rng);
  EXPECT_TRUE(rep.pass());
  for (const auto& b : rep.bounds) EXPECT_LE(b.worst_excess, 0.0) << b.name;
}

TEST(NoiseBounds, LeastSquaresTrajectoryPasses) {
  const auto orc = graded();
  Rng rng(10);
  const auto pts = trajectory_points(orc, 0.5, 10000, 100, rng);
  ASSERT_EQ(pts.size(), 100u);
  const auto rep = shb::check_noise_bounds(orc, shb::compute_noise_constants(orc), pts, 0, rng);
  for (const auto& b : rep.bounds) EXPECT_TRUE(b.pass) << b.name;
}

TEST(NoiseBounds, RandomLeastSquaresAtRandomPoints) {
  Rng rng(11);
  std::normal_distribution<double> nd;
  Matrix X(15, 3);
  Vector y(15);
  for (int i = 0; i < 15; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = nd(rng);
    y[i] = nd(rng);
  }
  const auto orc = StochasticOracle::least_squares(X, y);
  std::vector<Vector> pts;
  for (int k = 0; k < 200; ++k) pts.push_back(shb::sample_ball(orc.base().w_star(), 10.0, rng));
  EXPECT_TRUE(shb::check_noise_bounds(orc, shb::compute_noise_constants(orc), pts, 0, rng).pass());
}

TEST(NoiseBounds, HalvedConstantsFailWithWitness) {
  const auto orc = graded();
  Rng rng(12);
  const auto pts = trajectory_points(orc, 0.5, 10000, 100, rng);
  auto k = shb::compute_noise_constants(orc);
  k.a1 /= 2.0;
  k.a2 /= 2.0;
  const auto rep = shb::check_noise_bounds(orc, k, pts, 0, rng);
  EXPECT_FALSE(rep['a'].pass);
  EXPECT_TRUE(rep['a'].witness_point.has_value());
  EXPECT_TRUE(rep['a'].witness_component.has_value());
}

TEST(Martingale, ZeroNoiseBothSidesZero) {
  const auto orc = StochasticOracle::identical(shb::make_quadratic(Matrix::Identity(2, 2)), 3);
  Rng rng(13);
  const auto v = shb::check_martingale_structure(orc, std::vector<double>(10, 0.1), Vector::Ones(2), 100, rng);
  EXPECT_TRUE(v.pass);
  EXPECT_EQ(v.mean_lhs, 0.0);
  EXPECT_EQ(v.mean_rhs, 0.0);
}

TEST(Martingale, FrozenAdditiveNoiseMatchesClosedForm) {
  const double sigma = 0.7;
  const auto orc = StochasticOracle::additive_noise(shb::make_quadratic(Matrix::Identity(3, 3)), sigma);
  Rng rng(14);
  std::vector<double> alpha;
  for (int t = 1; t <= 10; ++t) alpha.push_back(std::pow(t, -2.0 / 3.0));
  const auto v = shb::check_martingale_structure(orc, alpha, Vector::Ones(3), 1000, rng, true);
  EXPECT_TRUE(v.pass);
  // E||sum alpha dm||^2 = sigma^2 d sum alpha^2.
  double s2 = 0.0;
  for (double a : alpha) s2 += a * a;
  const double exact = sigma * sigma * 3.0 * s2;
  EXPECT_NEAR(v.mean_rhs, exact, 0.05 * exact);
}

TEST(Martingale, LeastSquaresTenThousandDraws) {
  const auto orc = graded();
  Rng rng(15);
  const auto k = shb::compute_shb_constants(orc, 0.0);
  const shb::StepSchedule s{k.K0, 2.0 / 3.0, k.K0, shb::ScheduleMode::as_rate};
  std::vector<double> alpha;
  for (int t = 1; t <= 10; ++t) alpha.push_back(s.alpha(t));
  EXPECT_TRUE(shb::check_martingale_structure(orc, alpha, shb::graded_initial_point(), 1000, rng).pass);
}

TEST(Martingale, CorrelatedNoiseFails) {
  CorrelatedOracle orc{shb::make_quadratic(Matrix::Identity(2, 2))};
  Rng rng(16);
  const auto v = shb::check_martingale_structure(orc, std::vector<double>(10, 0.1), Vector::Ones(2), 1000, rng, true);
  EXPECT_FALSE(v.pass);
  EXPECT_FALSE(v.correlation_ok);
}

TEST(Martingale, NeedsTenSteps) {
  const auto orc = graded();
  Rng rng(17);
  EXPECT_THROW(shb::check_martingale_structure(orc, std::vector<double>(9, 0.1), shb::graded_initial_point(), 10, rng),
               shb::InvalidInput);
}
