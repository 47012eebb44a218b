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

// Stochastic gradient oracles, the closed-form noise constants of the
// gradient-growth lemma, and empirical checks of the noise assumptions.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "shb/core.hpp"
#include "shb/objectives.hpp"

namespace shb {

/// One draw of the estimator; `noise` is grad F(w) - grad.
struct GradientSample {
  long z_id = -1;
  double loss = 0.0;
  Vector grad;
  Vector noise;
};

enum class OracleKind { finite_sum, additive_noise };

inline const char* to_string(OracleKind k) {
  return k == OracleKind::finite_sum ? "finite_sum" : "additive_noise";
}

/// Sampler for l(Z, w). finite_sum draws a component uniformly; additive_noise
/// returns grad F(w) + sigma * xi with xi standard normal.
class StochasticOracle {
 public:
  static StochasticOracle finite_sum(Objective base, std::vector<Objective> components) {
    require(!components.empty(), "finite_sum: at least one component is required");
    for (const auto& c : components) require(c.dim() == base.dim(), "finite_sum: component dimension mismatch");
    StochasticOracle o(std::move(base), OracleKind::finite_sum);
    double sup = 0.0;
    for (const auto& c : components) sup = std::max(sup, c.eval(o.base_.w_star()));
    o.components_ = std::move(components);
    o.sup_loss_at_min_ = sup;
    return o;
  }

  /// One component per data row, l_i(w) = 1/2 (<x_i, w> - y_i)^2.
  static StochasticOracle least_squares(const Matrix& X, const Vector& y) {
    Objective base = make_least_squares(X, y);
    std::vector<Objective> comps;
    comps.reserve(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      comps.push_back(make_least_squares(X.row(i), y.segment(i, 1)));
    }
    return finite_sum(std::move(base), std::move(comps));
  }

  /// n identical copies of `base`: a zero-noise oracle.
  static StochasticOracle identical(const Objective& base, long n) {
    require(n >= 1, "identical: n must be >= 1");
    return finite_sum(base, std::vector<Objective>(static_cast<std::size_t>(n), base));
  }

  static StochasticOracle additive_noise(Objective base, double sigma) {
    require(sigma >= 0.0 && std::isfinite(sigma), "additive_noise: sigma must be a finite nonnegative value");
    StochasticOracle o(std::move(base), OracleKind::additive_noise);
    o.sigma_ = sigma;
    o.sup_loss_at_min_ = o.base_.F_star();
    return o;
  }

  GradientSample sample(const Vector& w, Rng& rng) const {
    if (w.size() != base_.dim())
      throw InvalidInput("dimension mismatch: oracle expects dim " + std::to_string(base_.dim()));
    GradientSample s;
    const Vector gF = base_.grad(w);
    if (kind_ == OracleKind::finite_sum) {
      std::uniform_int_distribution<long> pick(0, size() - 1);
      s.z_id = pick(rng);
      const Objective& c = components_[static_cast<std::size_t>(s.z_id)];
      s.loss = c.eval(w);
      s.grad = c.grad(w);
    } else {
      std::normal_distribution<double> normal;
      Vector xi(w.size());
      for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
      s.loss = base_.eval(w) + sigma_ * xi.dot(w - base_.w_star());
      s.grad = gF + sigma_ * xi;
    }
    s.noise = gF - s.grad;
    return s;
  }

  /// Deterministic evaluation of component i (finite_sum only).
  GradientSample component(long i, const Vector& w) const {
    require(kind_ == OracleKind::finite_sum, "component: only finite_sum oracles enumerate components");
    require(i >= 0 && i < size(), "component: index out of range");
    const Objective& c = components_[static_cast<std::size_t>(i)];
    GradientSample s;
    s.z_id = i;
    s.loss = c.eval(w);
    s.grad = c.grad(w);
    s.noise = base_.grad(w) - s.grad;
    return s;
  }

  /// Mean of component gradients, accumulated in component order.
  Vector enumerated_mean_grad(const Vector& w) const {
    require(kind_ == OracleKind::finite_sum, "enumerated_mean_grad: finite_sum only");
    Vector acc = Vector::Zero(w.size());
    for (const auto& c : components_) {
      const Vector g = c.grad(w);
      acc += g;
    }
    return acc / static_cast<double>(components_.size());
  }

  /// E ||grad l(Z, w_star)||^{1+theta}, exact for finite_sum.
  double grad_moment_at_min(double theta) const {
    if (kind_ == OracleKind::additive_noise) {
      // Chi moment: E ||xi||^k = 2^{k/2} Gamma((d + k)/2) / Gamma(d/2), k = 1 + theta.
      const double k = 1.0 + theta, d = static_cast<double>(base_.dim());
      if (sigma_ == 0.0) return 0.0;
      return std::pow(sigma_, k) * std::exp(0.5 * k * std::log(2.0) + std::lgamma(0.5 * (d + k)) - std::lgamma(0.5 * d));
    }
    double s = 0.0;
    for (const auto& c : components_) s += std::pow(c.grad(base_.w_star()).norm(), 1.0 + theta);
    return s / static_cast<double>(components_.size());
  }

  const Objective& base() const { return base_; }
  OracleKind kind() const { return kind_; }
  long size() const { return static_cast<long>(components_.size()); }
  long dim() const { return base_.dim(); }
  double sigma() const { return sigma_; }
  double sup_loss_at_min() const { return sup_loss_at_min_; }
  /// False for additive noise: nonnegativity and convexity of l(z, .) are not guaranteed.
  bool certified() const { return kind_ == OracleKind::finite_sum; }

 private:
  StochasticOracle(Objective base, OracleKind kind) : base_(std::move(base)), kind_(kind) {}

  Objective base_;
  OracleKind kind_;
  std::vector<Objective> components_;
  double sigma_ = 0.0;
  double sup_loss_at_min_ = 0.0;
};

// ---------------------------------------------------------------------------

struct UnbiasedVerdict {
  bool pass = false;
  Vector mean_noise;
  Vector stderr_noise;
  /// Largest |mean| / stderr over components (0 when every component is exactly zero).
  double max_z = 0.0;
};

/// Componentwise test that the sample mean of the noise is within
/// `z_crit` standard errors of zero.
template <class Oracle>
UnbiasedVerdict check_unbiased(const Oracle& oracle, const Vector& w, long n_samples, Rng& rng,
                               double z_crit = 3.0) {
  require(n_samples >= 100, "check_unbiased: n_samples must be >= 100");
  const Eigen::Index d = w.size();
  Vector sum = Vector::Zero(d), sumsq = Vector::Zero(d);
  for (long k = 0; k < n_samples; ++k) {
    const GradientSample s = oracle.sample(w, rng);
    sum += s.noise;
    sumsq += s.noise.cwiseProduct(s.noise);
  }
  const double n = static_cast<double>(n_samples);
  UnbiasedVerdict v;
  v.mean_noise = sum / n;
  v.stderr_noise.resize(d);
  v.pass = true;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = std::max(0.0, (sumsq[j] - n * v.mean_noise[j] * v.mean_noise[j]) / (n - 1.0));
    v.stderr_noise[j] = std::sqrt(var / n);
    const double m = std::abs(v.mean_noise[j]);
    if (v.stderr_noise[j] == 0.0) {
      if (m > 0.0) {
        v.pass = false;
        v.max_z = std::numeric_limits<double>::infinity();
      }
      continue;
    }
    const double z = m / v.stderr_noise[j];
    v.max_z = std::max(v.max_z, z);
    if (z > z_crit) v.pass = false;
  }
  return v;
}

// ---------------------------------------------------------------------------

struct NoiseConstants {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a4 = 0.0, a5 = 0.0, a6 = 0.0, a7 = 0.0;
  double A = 0.0, B = 0.0, C = 0.0;
};

namespace detail {
/// Young-inequality remainder ((1-g)/(1+g)) ((1+g)/g L^{1/g})^{2g/(1-g)} + (2g/(1+g)) s.
inline double young_constant(double L, double gamma, double s) {
  const double g = gamma;
  return (1.0 - g) / (1.0 + g) * std::pow((1.0 + g) / g * std::pow(L, 1.0 / g), 2.0 * g / (1.0 - g)) +
         2.0 * g / (1.0 + g) * s;
}
}  // namespace detail

/// Constants of the gradient-growth lemma and the ABC triple with theta = gamma.
/// `grad_moment_at_min` is E ||grad l(Z, w_star)||^{1+gamma}.
inline NoiseConstants compute_noise_constants(double L, double gamma, double sup_loss_at_min, double F_star,
                                              double grad_moment_at_min = 0.0) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidInput("compute_noise_constants: gamma must lie in (0, 1]");
  require(L > 0.0 && std::isfinite(L), "compute_noise_constants: L must be positive");
  require(sup_loss_at_min >= 0.0, "compute_noise_constants: sup_loss_at_min must be nonnegative");
  require(grad_moment_at_min >= 0.0, "compute_noise_constants: gradient moment must be nonnegative");
  NoiseConstants k;
  if (gamma < 1.0) {
    k.a1 = 2.0 * gamma / (1.0 + gamma);
    k.a2 = detail::young_constant(L, gamma, sup_loss_at_min);
    k.a0 = detail::young_constant(L, gamma, F_star);
  } else {
    // The Young exponent degenerates; ||grad l||^2 <= 2 L l directly.
    k.a1 = 2.0 * L;
    k.a2 = 0.0;
    k.a0 = 0.0;
  }
  k.a4 = 4.0 * k.a1 * sup_loss_at_min + 4.0 * k.a2;
  k.a5 = 2.0 * k.a1 * sup_loss_at_min + 2.0 * k.a2;
  k.a6 = 4.0 * k.a1;
  k.a7 = 2.0 * (k.a0 + k.a2 + k.a1 * F_star);
  const double two_g = std::pow(2.0, gamma);
  k.A = two_g * std::pow(L, 1.0 / gamma) * (1.0 + gamma);
  k.B = 0.0;
  k.C = two_g * (1.0 - gamma * gamma) / (1.0 + gamma) + two_g * grad_moment_at_min;
  return k;
}

inline NoiseConstants compute_noise_constants(const StochasticOracle& oracle) {
  const Objective& b = oracle.base();
  return compute_noise_constants(b.L(), b.gamma(), oracle.sup_loss_at_min(), b.F_star(),
                                 oracle.grad_moment_at_min(b.gamma()));
}

struct BoundVerdict {
  std::string name;
  bool pass = true;
  /// Largest lhs - rhs seen (negative when every point has slack).
  double worst_excess = -std::numeric_limits<double>::infinity();
  std::optional<long> witness_point;
  std::optional<long> witness_component;
};

struct NoiseBoundsReport {
  std::vector<BoundVerdict> bounds;  // (a) .. (e), in order
  bool pass() const {
    return std::all_of(bounds.begin(), bounds.end(), [](const BoundVerdict& b) { return b.pass; });
  }
  const BoundVerdict& operator[](char item) const { return bounds.at(static_cast<std::size_t>(item - 'a')); }
};

/// Verifies at each point w:
///   (a) ||grad l||^2 <= a1 l + a2
///   (b) ||dm||^2 <= 6 L^2 ||w - w*||^{2g} + a4
///   (c) ||grad l||^2 <= 2 L^2 ||w - w*||^{2g} + a5
///   (d) E ||dm||^2 <= a6 (F - F*) + a7
///   (e) E ||grad l||^{1+g} <= A (F - F*) + B ||grad F||^{1+g} + C
/// by full enumeration for finite_sum oracles, else over `n_samples` draws.
inline NoiseBoundsReport check_noise_bounds(const StochasticOracle& oracle, const NoiseConstants& k,
                                            const std::vector<Vector>& points, long n_samples, Rng& rng) {
  require(!points.empty(), "check_noise_bounds: no points");
  const Objective& F = oracle.base();
  const double g = F.gamma(), L = F.L();
  NoiseBoundsReport rep;
  for (const char* name : {"(a) grad_sq <= a1*loss + a2", "(b) noise_sq <= 6L^2 dist^2g + a4",
                           "(c) grad_sq <= 2L^2 dist^2g + a5", "(d) E noise_sq <= a6*gap + a7",
                           "(e) E |grad|^(1+g) <= A*gap + B*|gradF|^(1+g) + C"}) {
    rep.bounds.push_back(BoundVerdict{name});
  }
  auto record = [](BoundVerdict& b, double lhs, double rhs, long point, std::optional<long> comp) {
    const double excess = lhs - rhs;
    if (excess > b.worst_excess) b.worst_excess = excess;
    const double tol = 1e-10 * std::max({1.0, std::abs(lhs), std::abs(rhs)});
    if (excess > tol && b.pass) {
      b.pass = false;
      b.witness_point = point;
      b.witness_component = comp;
    }
  };
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    const Vector& w = points[pi];
    const long p = static_cast<long>(pi);
    const double dist2g = std::pow((w - F.w_star()).norm(), 2.0 * g);
    const double gap = F.eval(w) - F.F_star();
    const double gradF_pow = std::pow(F.grad(w).norm(), 1.0 + g);
    double mean_noise_sq = 0.0, mean_grad_pow = 0.0;
    const long n = oracle.kind() == OracleKind::finite_sum ? oracle.size() : n_samples;
    require(n >= 1, "check_noise_bounds: n_samples must be >= 1");
    for (long i = 0; i < n; ++i) {
      const GradientSample s =
          oracle.kind() == OracleKind::finite_sum ? oracle.component(i, w) : oracle.sample(w, rng);
      const double gsq = s.grad.squaredNorm();
      const double nsq = s.noise.squaredNorm();
      const std::optional<long> comp = oracle.kind() == OracleKind::finite_sum ? std::optional<long>(i) : std::nullopt;
      record(rep.bounds[0], gsq, k.a1 * s.loss + k.a2, p, comp);
      record(rep.bounds[1], nsq, 6.0 * L * L * dist2g + k.a4, p, comp);
      record(rep.bounds[2], gsq, 2.0 * L * L * dist2g + k.a5, p, comp);
      mean_noise_sq += nsq;
      mean_grad_pow += std::pow(s.grad.norm(), 1.0 + g);
    }
    mean_noise_sq /= static_cast<double>(n);
    mean_grad_pow /= static_cast<double>(n);
    record(rep.bounds[3], mean_noise_sq, k.a6 * gap + k.a7, p, std::nullopt);
    record(rep.bounds[4], mean_grad_pow, k.A * gap + k.B * gradF_pow + k.C, p, std::nullopt);
  }
  return rep;
}

// ---------------------------------------------------------------------------

struct MartingaleVerdict {
  bool pass = false;
  double mean_lhs = 0.0;        ///< mean of ||sum alpha_s dm_s||^2
  double mean_rhs = 0.0;        ///< mean of sum alpha_s^2 ||dm_s||^2
  double diff_stderr = 0.0;     ///< standard error of lhs - rhs
  double lag1_mean = 0.0;       ///< mean per-path average of <dm_t, dm_{t+1}>
  double lag1_stderr = 0.0;
  bool variance_ok = false;
  bool correlation_ok = false;
};

/// Monte Carlo check that the noise is a martingale-difference sequence:
/// E||sum alpha_s dm_s||^2 = sum alpha_s^2 E||dm_s||^2 within `var_z` standard
/// errors and lag-one cross-time products within `corr_z` standard errors of 0.
/// Iterates follow SGD from w0 unless `frozen`.
template <class Oracle>
MartingaleVerdict check_martingale_structure(const Oracle& oracle, const std::vector<double>& alpha,
                                             const Vector& w0, long n_reps, Rng& rng, bool frozen = false,
                                             double var_z = 5.0, double corr_z = 3.0) {
  const long T = static_cast<long>(alpha.size());
  require(T >= 10, "check_martingale_structure: T must be >= 10");
  require(n_reps >= 2, "check_martingale_structure: n_reps must be >= 2");
  std::vector<double> diff(static_cast<std::size_t>(n_reps)), lag(static_cast<std::size_t>(n_reps));
  double sum_lhs = 0.0, sum_rhs = 0.0;
  for (long r = 0; r < n_reps; ++r) {
    Vector w = w0;
    Vector acc = Vector::Zero(w0.size());
    Vector prev;
    double rhs = 0.0, lag_sum = 0.0;
    for (long t = 0; t < T; ++t) {
      const double a = alpha[static_cast<std::size_t>(t)];
      const GradientSample s = oracle.sample(w, rng);
      acc += a * s.noise;
      rhs += a * a * s.noise.squaredNorm();
      if (t > 0) lag_sum += prev.dot(s.noise);
      prev = s.noise;
      if (!frozen) w -= a * s.grad;
    }
    const double lhs = acc.squaredNorm();
    sum_lhs += lhs;
    sum_rhs += rhs;
    diff[static_cast<std::size_t>(r)] = lhs - rhs;
    lag[static_cast<std::size_t>(r)] = lag_sum / static_cast<double>(T - 1);
  }
  auto mean_se = [](const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double m = 0.0;
    for (double v : x) m += v;
    m /= n;
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::pair<double, double>{m, std::sqrt(ss / (n - 1.0) / n)};
  };
  MartingaleVerdict v;
  v.mean_lhs = sum_lhs / static_cast<double>(n_reps);
  v.mean_rhs = sum_rhs / static_cast<double>(n_reps);
  const auto [dm, dse] = mean_se(diff);
  const auto [lm, lse] = mean_se(lag);
  v.diff_stderr = dse;
  v.lag1_mean = lm;
  v.lag1_stderr = lse;
  v.variance_ok = dse == 0.0 ? dm == 0.0 : std::abs(dm) <= var_z * dse;
  v.correlation_ok = lse == 0.0 ? lm == 0.0 : std::abs(lm) <= corr_z * lse;
  v.pass = v.variance_ok && v.correlation_ok;
  return v;
}

}  // namespace shb
