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

// SGD and stochastic heavy ball in two-term and one-step (z, v) forms, step
// schedules with their validity gates, the shared analysis constants, and
// the trajectory recorder.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "shb/core.hpp"
#include "shb/oracle.hpp"
#include "shb/seqkit.hpp"

namespace shb {

enum class ScheduleMode { as_rate, hp_rate };

inline const char* to_string(ScheduleMode m) { return m == ScheduleMode::as_rate ? "as_rate" : "hp_rate"; }

/// alpha_t = min(alpha0, c t^{-p}) for t >= 1 and alpha_0 = alpha0.
struct StepSchedule {
  double c = 0.1;
  double p = 2.0 / 3.0;
  double alpha0 = 0.1;
  ScheduleMode mode = ScheduleMode::as_rate;

  double alpha(long t) const {
    if (t <= 0) return alpha0;
    return std::min(alpha0, c * std::pow(static_cast<double>(t), -p));
  }
};

struct ShbConstants {
  double beta = 0.0;
  double k0 = 0.0, k1 = 0.0, k2 = 0.0, k3 = 0.0, k4 = 0.0, k5 = 0.0;
  double K0 = 0.0;
  /// Bernstein ingredients: almost-sure bound b, variance scale c, chosen q.
  double bern_b = 0.0, bern_c = 0.0, bern_q = 0.0;
  double K5_derived = 0.0;
  /// Operative value for the alpha0 gate: override when supplied, else derived.
  double K5_estimate = 0.0;
  NoiseConstants noise;
};

namespace detail {
/// (e^q - q - 1) / q without cancellation for small q.
inline double bernstein_phi(double q) { return (std::expm1(q) - q) / q; }
}  // namespace detail

/// Target value of (e^q - q - 1)/q * c/b when choosing q; any value below one
/// is admissible, one half leaves room on both sides.
inline constexpr double kBernsteinTarget = 0.5;

inline ShbConstants compute_shb_constants(double L, double gamma, double beta, double sup_loss_at_min,
                                          const NoiseConstants& nc, std::optional<double> K5_override = {}) {
  if (!(beta >= 0.0 && beta < 1.0)) throw InvalidInput("compute_shb_constants: beta must lie in [0, 1)");
  require(L > 0.0 && gamma > 0.0 && gamma <= 1.0, "compute_shb_constants: need L > 0 and gamma in (0, 1]");
  require(sup_loss_at_min >= 0.0, "compute_shb_constants: sup_loss_at_min must be nonnegative");
  ShbConstants k;
  k.beta = beta;
  k.noise = nc;
  const double ob = 1.0 - beta;
  k.k0 = beta / ob;
  k.k1 = nc.a1 / (ob * ob);
  k.k2 = nc.a2 / (ob * ob);
  k.k3 = 2.0 / ob * sup_loss_at_min;
  k.k4 = k.k0 + beta * k.k0 * k.k0;
  k.k5 = k.k2 + k.k3 + nc.a2 * k.k0 * k.k0;
  k.K0 = std::min(1.0, 1.0 / ((nc.a1 * k.k0 * k.k0 + nc.a1 * k.k0 + nc.a1 + k.k1) * ob));

  k.bern_b = (k.k4 + 1.0) * (6.0 * L * L * std::sqrt(std::pow(k.K0, 1.0 + gamma)) + nc.a4 * std::sqrt(k.K0));
  const double k11 = 2.0 * (k.k4 * k.k4 + 1.0);
  k.bern_c = std::max({2.0 * k11 * nc.a6 * k.K0, k11 * k.K0 * nc.a7, k11 * nc.a7});
  const double ratio = k.bern_c / k.bern_b;
  auto g = [&](double q) { return detail::bernstein_phi(q) * ratio; };
  if (g(1.0) <= kBernsteinTarget) {
    k.bern_q = 1.0;
  } else {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) < kBernsteinTarget ? lo : hi) = mid;
    }
    k.bern_q = lo > 0.0 ? lo : hi;
  }
  k.K5_derived = 2.0 / ob * g(k.bern_q);
  if (K5_override) require(*K5_override > 0.0, "compute_shb_constants: K5 override must be positive");
  k.K5_estimate = K5_override.value_or(k.K5_derived);
  return k;
}

inline ShbConstants compute_shb_constants(const StochasticOracle& oracle, double beta,
                                          std::optional<double> K5_override = {}) {
  const Objective& b = oracle.base();
  return compute_shb_constants(b.L(), b.gamma(), beta, oracle.sup_loss_at_min(), compute_noise_constants(oracle),
                               K5_override);
}

// ---------------------------------------------------------------------------

/// w_t, w_{t-1}, v_t = w_t - w_{t-1}, z_t = w_t + beta/(1-beta) v_t.
struct ShbState {
  Vector w, w_prev, v, z;
  long t = 1;
};

inline ShbState initial_state(const Vector& w0) {
  return ShbState{w0, w0, Vector::Zero(w0.size()), w0, 1};
}

namespace detail {
inline void check_step_inputs(const ShbState& s, const Vector& g, double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) throw InvalidInput("beta must lie in [0, 1)");
  require(g.size() == s.w.size(), "gradient dimension mismatch");
  if (!g.allFinite()) throw NumericalBlowup("non-finite stochastic gradient", s.t);
}
inline void check_state(const ShbState& s) {
  if (!s.w.allFinite() || !s.z.allFinite() || !s.v.allFinite()) throw NumericalBlowup("non-finite iterate", s.t);
}
}  // namespace detail

/// w_{t+1} = w_t - alpha g + beta (w_t - w_{t-1}).
inline ShbState shb_step_twoterm(const ShbState& s, const Vector& g, double alpha, double beta) {
  detail::check_step_inputs(s, g, beta);
  ShbState n;
  n.w = s.w - alpha * g + beta * (s.w - s.w_prev);
  n.w_prev = s.w;
  n.v = n.w - n.w_prev;
  n.z = n.w + (beta / (1.0 - beta)) * n.v;
  n.t = s.t + 1;
  detail::check_state(n);
  return n;
}

/// v_{t+1} = beta v_t - alpha g, z_{t+1} = z_t - alpha/(1-beta) g, w = z - beta/(1-beta) v.
inline ShbState shb_step_onestep(const ShbState& s, const Vector& g, double alpha, double beta) {
  detail::check_step_inputs(s, g, beta);
  ShbState n;
  n.v = beta * s.v - alpha * g;
  n.z = s.z - (alpha / (1.0 - beta)) * g;
  n.w_prev = s.w;
  n.w = n.z - (beta / (1.0 - beta)) * n.v;
  n.t = s.t + 1;
  detail::check_state(n);
  return n;
}

/// Plain SGD step.
inline Vector sgd_step(const Vector& w, const Vector& g, double alpha) { return w - alpha * g; }

// ---------------------------------------------------------------------------

struct ScheduleVerdict {
  bool pass = true;
  std::vector<std::string> failures;
  void fail(std::string gate) {
    pass = false;
    failures.push_back(std::move(gate));
  }
};

/// Gates: monotone steps, exponent window for the mode, alpha0 caps, the
/// product bound alpha_t sum_{s<t} alpha_s <= K0 (gamma = 1), and a plateau
/// of sum alpha_t^{1+gamma} over the horizon.
inline ScheduleVerdict validate_schedule(const StepSchedule& s, const ShbConstants& k, double gamma, long horizon) {
  require(horizon >= 10, "validate_schedule: horizon must be >= 10");
  require(s.c > 0.0 && s.alpha0 > 0.0, "validate_schedule: c and alpha0 must be positive");
  ScheduleVerdict v;
  bool mono = true;
  for (long t = 0; t < horizon && mono; ++t) mono = s.alpha(t + 1) <= s.alpha(t);
  if (!mono) v.fail("monotone: alpha_{t+1} <= alpha_t violated");

  if (s.mode == ScheduleMode::as_rate) {
    if (!(s.p > 1.0 / (1.0 + gamma) && s.p < 1.0)) v.fail("exponent_window: as_rate needs p in (1/(1+gamma), 1)");
  } else {
    if (gamma != 1.0) v.fail("exponent_window: hp_rate needs gamma = 1");
    if (!(s.p > 0.5 && s.p < 1.0)) v.fail("exponent_window: hp_rate needs p in (1/2, 1)");
  }

  const double tol = 1e-12;
  if (s.alpha0 > k.K0 * (1.0 + tol)) v.fail("alpha0_cap: alpha0 <= K0");
  if (s.mode == ScheduleMode::hp_rate) {
    const double cap = std::min({1.0, 1.0 / (2.0 * std::sqrt(k.K5_estimate)), k.K0});
    if (s.alpha0 > cap * (1.0 + tol)) v.fail("alpha0_cap: alpha0 <= min(1, 1/(2 sqrt(K5)), K0)");
  }

  if (gamma == 1.0) {
    double acc = s.alpha(0);
    for (long t = 1; t <= horizon; ++t) {
      const double a = s.alpha(t);
      if (a * acc > k.K0 * (1.0 + tol)) {
        v.fail("stepsize_product: alpha_t sum_{s<t} alpha_s <= K0 fails at t=" + std::to_string(t));
        break;
      }
      acc += a;
    }
  }

  std::vector<double> ts(static_cast<std::size_t>(horizon)), partial(static_cast<std::size_t>(horizon));
  double acc = 0.0;
  for (long t = 1; t <= horizon; ++t) {
    acc += std::pow(s.alpha(t), 1.0 + gamma);
    ts[static_cast<std::size_t>(t - 1)] = static_cast<double>(t);
    partial[static_cast<std::size_t>(t - 1)] = acc;
  }
  if (!seqkit::plateau(ts, partial)) v.fail("summability: sum alpha_t^{1+gamma} does not plateau");
  return v;
}

// ---------------------------------------------------------------------------

/// CSV column names of a trajectory record, in storage order.
inline constexpr std::array<const char*, 22> kTrajectoryColumns = {
    "t",
    "alpha",
    "F_gap",
    "grad_sq",
    "min_grad_sq",
    "min_F_gap",
    "v_sq",
    "z_dist_sq",
    "w_dist_sq",
    "loss_sample",
    "noise_sq",
    "sum_alpha_F_gap",
    "sum_alpha_sq_loss",
    "sum_alpha_grad_sq",
    "sum_alpha_noise_dot_v",
    "sum_gradF_dot_step",
    "sum_alpha_v_sq",
    "sum_gradF_dot_v",
    "sum_v_next_sq",
    "sum_alpha",
    "sum_alpha_sq",
    "sum_alpha_min_grad_sq",
};

/// Snapshot at iteration t. Running sums cover s = 1..min(t, T); the final
/// record at t = T+1 carries them unchanged since no step is taken there.
struct TrajectoryRecord {
  long t = 0;
  double alpha = 0, F_gap = 0, grad_sq = 0, min_grad_sq = 0, min_F_gap = 0, v_sq = 0, z_dist_sq = 0,
         w_dist_sq = 0, loss_sample = 0, noise_sq = 0;
  double sum_alpha_F_gap = 0, sum_alpha_sq_loss = 0, sum_alpha_grad_sq = 0, sum_alpha_noise_dot_v = 0,
         sum_gradF_dot_step = 0, sum_alpha_v_sq = 0, sum_gradF_dot_v = 0, sum_v_next_sq = 0, sum_alpha = 0,
         sum_alpha_sq = 0, sum_alpha_min_grad_sq = 0;

  std::array<double, kTrajectoryColumns.size()> values() const {
    return {static_cast<double>(t), alpha, F_gap, grad_sq, min_grad_sq, min_F_gap, v_sq, z_dist_sq, w_dist_sq,
            loss_sample, noise_sq, sum_alpha_F_gap, sum_alpha_sq_loss, sum_alpha_grad_sq, sum_alpha_noise_dot_v,
            sum_gradF_dot_step, sum_alpha_v_sq, sum_gradF_dot_v, sum_v_next_sq, sum_alpha, sum_alpha_sq,
            sum_alpha_min_grad_sq};
  }
};

struct RunOptions {
  long record_every = 1;
  /// Additional log-spaced snapshots, this many per decade (0 disables).
  int log_points_per_decade = 0;
  /// Additional explicit snapshot indices.
  std::vector<long> extra_records;
  /// Use the two-term recursion instead of the (z, v) form.
  bool two_term = false;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  StepSchedule schedule;
  double beta = 0.0;
  long T = 0;
  double w0_dist_sq = 0.0;
  Vector w_final;
  /// Set when an iterate or gradient became non-finite; records stop at the last valid index.
  std::optional<long> blowup_index;
  std::string error;

  bool ok() const { return !blowup_index.has_value(); }
  const TrajectoryRecord& at(long t) const {
    auto it = std::lower_bound(records.begin(), records.end(), t,
                               [](const TrajectoryRecord& r, long v) { return r.t < v; });
    if (it == records.end() || it->t != t) throw InvalidInput("trajectory has no record at t=" + std::to_string(t));
    return *it;
  }
  bool has(long t) const {
    auto it = std::lower_bound(records.begin(), records.end(), t,
                               [](const TrajectoryRecord& r, long v) { return r.t < v; });
    return it != records.end() && it->t == t;
  }
};

/// Snapshot mask for t = 1..T+1.
inline std::vector<char> record_mask(long T, const RunOptions& opt) {
  require(opt.record_every >= 1, "record_every must be >= 1");
  std::vector<char> mask(static_cast<std::size_t>(T + 2), 0);
  for (long t = 1; t <= T + 1; t += opt.record_every) mask[static_cast<std::size_t>(t)] = 1;
  if (opt.log_points_per_decade > 0) {
    const double top = std::log10(static_cast<double>(T + 1));
    for (int j = 0;; ++j) {
      const double e = static_cast<double>(j) / opt.log_points_per_decade;
      if (e > top + 1e-12) break;
      const long t = std::lround(std::pow(10.0, e));
      if (t >= 1 && t <= T + 1) mask[static_cast<std::size_t>(t)] = 1;
    }
  }
  for (long t : opt.extra_records)
    if (t >= 1 && t <= T + 1) mask[static_cast<std::size_t>(t)] = 1;
  mask[static_cast<std::size_t>(T + 1)] = 1;
  return mask;
}

/// Runs T steps of SHB (SGD when beta = 0) from w0 and records diagnostics at
/// t = 1..T+1 according to `opt`. Deterministic given the rng state.
inline Trajectory run(const StochasticOracle& oracle, const StepSchedule& schedule, double beta, long T,
                      const Vector& w0, Rng& rng, const RunOptions& opt = {}) {
  if (!(beta >= 0.0 && beta < 1.0)) throw InvalidInput("run: beta must lie in [0, 1)");
  require(T >= 1, "run: T must be >= 1");
  const Objective& F = oracle.base();
  require(w0.size() == F.dim(), "run: w0 dimension mismatch");
  const std::vector<char> mask = record_mask(T, opt);

  Trajectory tr;
  tr.schedule = schedule;
  tr.beta = beta;
  tr.T = T;
  tr.w0_dist_sq = (w0 - F.w_star()).squaredNorm();

  ShbState s = initial_state(w0);
  TrajectoryRecord acc;
  acc.min_grad_sq = std::numeric_limits<double>::infinity();
  acc.min_F_gap = std::numeric_limits<double>::infinity();
  for (long t = 1; t <= T + 1; ++t) {
    const Vector gF = F.grad(s.w);
    const GradientSample smp = oracle.sample(s.w, rng);
    TrajectoryRecord& r = acc;
    r.t = t;
    r.alpha = schedule.alpha(t);
    r.F_gap = F.eval(s.w) - F.F_star();
    r.grad_sq = gF.squaredNorm();
    r.min_grad_sq = std::min(r.min_grad_sq, r.grad_sq);
    r.min_F_gap = std::min(r.min_F_gap, r.F_gap);
    r.v_sq = s.v.squaredNorm();
    r.z_dist_sq = (s.z - F.w_star()).squaredNorm();
    r.w_dist_sq = (s.w - F.w_star()).squaredNorm();
    r.loss_sample = smp.loss;
    r.noise_sq = smp.noise.squaredNorm();
    if (!std::isfinite(r.F_gap) || !std::isfinite(r.grad_sq)) {
      tr.blowup_index = t;
      tr.error = "non-finite objective value at iteration " + std::to_string(t);
      break;
    }
    if (t <= T) {
      const double a = r.alpha;
      ShbState next;
      try {
        next = opt.two_term ? shb_step_twoterm(s, smp.grad, a, beta) : shb_step_onestep(s, smp.grad, a, beta);
      } catch (const NumericalBlowup& e) {
        tr.blowup_index = t;
        tr.error = e.what();
        if (mask[static_cast<std::size_t>(t)]) tr.records.push_back(r);
        break;
      }
      r.sum_alpha_F_gap += a * r.F_gap;
      r.sum_alpha_sq_loss += a * a * smp.loss;
      r.sum_alpha_grad_sq += a * r.grad_sq;
      r.sum_alpha_noise_dot_v += a * smp.noise.dot(s.v);
      r.sum_gradF_dot_step += -a * gF.dot(smp.grad);
      r.sum_alpha_v_sq += a * r.v_sq;
      r.sum_gradF_dot_v += gF.dot(s.v);
      r.sum_v_next_sq += next.v.squaredNorm();
      r.sum_alpha += a;
      r.sum_alpha_sq += a * a;
      r.sum_alpha_min_grad_sq += a * r.min_grad_sq;
      if (mask[static_cast<std::size_t>(t)]) tr.records.push_back(r);
      s = std::move(next);
    } else {
      tr.records.push_back(r);
    }
  }
  tr.w_final = s.w;
  return tr;
}

// ---------------------------------------------------------------------------

struct PathwiseVerdict {
  bool pass = true;
  std::optional<long> first_violation_t;
  std::string violated;  ///< which bound failed first
  double max_ratio_w = 0.0;     ///< max ||w - w*||^2 / B_t
  double max_ratio_loss = 0.0;  ///< max sum alpha^2 loss / K2_t
};

/// Per-path distance bounds with explicit constants:
///   ||w_t - w*||^2 <= B_t := (1 + k0/2) ||w0 - w*||^2 + k5 sum_{s<t} alpha_s,
///   ||v_t||^2 <= 4 B_t,  ||z_t - w*||^2 <= (2 + 8 k0^2) B_t,
/// and sum_{s<t} alpha_s^2 l(Z_s, w_s) <= (1-beta) ((k3 + a2) sum_{s<t} alpha_s^2 + alpha_1 ||w0 - w*||^2).
/// Checked at every recorded index.
inline PathwiseVerdict pathwise_bound_check(const Trajectory& tr, const ShbConstants& k, double w0_dist_sq) {
  if (tr.schedule.alpha0 > k.K0 * (1.0 + 1e-12))
    throw PreconditionFailed("pathwise_bound_check: schedule violates alpha0 <= K0");
  PathwiseVerdict v;
  const double alpha1 = tr.schedule.alpha(1);
  const double rel = 1e-12;
  auto check = [&](double lhs, double rhs, long t, const char* what) {
    if (lhs > rhs * (1.0 + rel) + 1e-300 && v.pass) {
      v.pass = false;
      v.first_violation_t = t;
      v.violated = what;
    }
  };
  for (const auto& r : tr.records) {
    const long t = r.t;
    // Running sums at record t include s = t when t <= T.
    const bool stepped = t <= tr.T;
    const double A_prev = r.sum_alpha - (stepped ? r.alpha : 0.0);
    const double A2_prev = r.sum_alpha_sq - (stepped ? r.alpha * r.alpha : 0.0);
    const double loss_prev = r.sum_alpha_sq_loss - (stepped ? r.alpha * r.alpha * r.loss_sample : 0.0);
    const double B = (1.0 + k.k0 / 2.0) * w0_dist_sq + k.k5 * A_prev;
    const double K2 = (1.0 - k.beta) * ((k.k3 + k.noise.a2) * A2_prev + alpha1 * w0_dist_sq);
    if (B > 0.0) v.max_ratio_w = std::max(v.max_ratio_w, r.w_dist_sq / B);
    if (K2 > 0.0) v.max_ratio_loss = std::max(v.max_ratio_loss, loss_prev / K2);
    check(r.w_dist_sq, B, t, "w_dist");
    check(r.v_sq, 4.0 * B, t, "v_norm");
    check(r.z_dist_sq, (2.0 + 8.0 * k.k0 * k.k0) * B, t, "z_dist");
    check(loss_prev, K2, t, "sum_alpha_sq_loss");
  }
  return v;
}

}  // namespace shb
