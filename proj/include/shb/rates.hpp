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

// Empirical rate verification: predicted exponents, log-log fits, quantile
// envelopes, and the high-probability partial-sum shapes.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shb/core.hpp"
#include "shb/optim.hpp"
#include "shb/seqkit.hpp"

namespace shb {

/// Trajectories sharing one configuration; the Monte Carlo stand-in for the
/// underlying probability space.
struct Ensemble {
  std::vector<Trajectory> trajectories;
  std::uint64_t master_seed = 0;
  std::string config_hash;
  std::string objective_name;
  double gamma = 1.0;
  bool convex = true;
  /// Outcome of validate_schedule at build time; empty when gates were bypassed.
  std::optional<ScheduleVerdict> gate;

  std::size_t size() const { return trajectories.size(); }
  const Trajectory& front() const {
    require(!trajectories.empty(), "ensemble is empty");
    return trajectories.front();
  }
  double beta() const { return front().beta; }
  long T() const { return front().T; }
  const StepSchedule& schedule() const { return front().schedule; }

  /// Throws InvalidInput unless every trajectory shares (schedule, beta, T) and completed.
  void validate() const {
    const Trajectory& f = front();
    for (const auto& tr : trajectories) {
      require(tr.ok(), "ensemble contains a diverged trajectory: " + tr.error);
      require(tr.T == f.T && tr.beta == f.beta && tr.schedule.c == f.schedule.c && tr.schedule.p == f.schedule.p &&
                  tr.schedule.alpha0 == f.schedule.alpha0 && tr.records.size() == f.records.size(),
              "ensemble trajectories do not share one configuration");
    }
  }
};

enum class Algo { sgd, shb };
enum class Target { last_iterate, min_grad, min_gap };

inline const char* to_string(Target t) {
  switch (t) {
    case Target::last_iterate: return "last_iterate";
    case Target::min_grad: return "min_grad";
    default: return "min_gap";
  }
}

/// r_gamma = 2 gamma / (1 + gamma) for momentum runs, 1 otherwise.
inline double slowdown_factor(Algo algo, double gamma, double beta) {
  return (algo == Algo::shb && beta > 0.0) ? 2.0 * gamma / (1.0 + gamma) : 1.0;
}

/// Almost-sure exponent r in q_t = o(t^r).
inline double predicted_exponent(Algo algo, bool convex, double gamma, double beta, double p, Target target) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidInput("predicted_exponent: gamma must lie in (0, 1]");
  if (!(beta >= 0.0 && beta < 1.0)) throw InvalidInput("predicted_exponent: beta must lie in [0, 1)");
  if (algo == Algo::sgd && beta != 0.0) throw InvalidInput("predicted_exponent: sgd requires beta = 0");
  if (!(p > 1.0 / (1.0 + gamma) && p < 1.0))
    throw InvalidInput("predicted_exponent: p must lie in (1/(1+gamma), 1)");
  if (target != Target::last_iterate) return p - 1.0;
  if (!convex) throw InvalidInput("predicted_exponent: last-iterate rates need a convex objective");
  return slowdown_factor(algo, gamma, beta) * std::max(p - 1.0, 1.0 - (1.0 + gamma) * p);
}

/// Exponent of the high-probability last-iterate envelope (gamma = 1).
inline double hp_exponent(double p) {
  if (!(p > 0.5 && p < 1.0)) throw InvalidInput("hp_exponent: p must lie in (1/2, 1)");
  return std::max(p - 1.0, 1.0 - 2.0 * p);
}

// ---------------------------------------------------------------------------

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  std::size_t n = 0;
};

/// OLS of log(value) on log(t) over the final `window_fraction` of the log-t range.
inline FitResult fit_rate(std::span<const double> t, std::span<const double> values, double window_fraction = 0.3) {
  require(t.size() == values.size() && !t.empty(), "fit_rate: index and value spans must match");
  require(window_fraction > 0.0 && window_fraction <= 1.0, "fit_rate: window fraction must lie in (0, 1]");
  require(t.front() > 0.0, "fit_rate: indices must be positive");
  const double l0 = std::log(t.front()), l1 = std::log(t.back());
  const double cut = l1 - window_fraction * (l1 - l0) - 1e-12;
  std::vector<double> x, y;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double lt = std::log(t[k]);
    if (lt < cut) continue;
    if (!(values[k] > 0.0)) throw InvalidInput("fit_rate: nonpositive value in fit window at t=" + std::to_string(t[k]));
    x.push_back(lt);
    y.push_back(std::log(values[k]));
  }
  require(x.size() >= 2, "fit_rate: fewer than two points in the fit window");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  require(sxx > 0.0, "fit_rate: degenerate fit window");
  FitResult f;
  f.n = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double ssr = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double e = y[k] - f.intercept - f.slope * x[k];
      ssr += e * e;
    }
    f.stderr_slope = std::sqrt(ssr / (n - 2.0) / sxx);
  }
  return f;
}

inline FitResult fit_rate(const seqkit::SequencePrefix& series, double window_fraction = 0.3) {
  std::vector<double> t(series.size());
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(series.start_index() + static_cast<long>(k));
  return fit_rate(t, series.values(), window_fraction);
}

/// Empirical (1 - delta)-quantile: order statistic ceil((1 - delta) n), no interpolation.
inline double quantile(std::vector<double> values, double delta) {
  require(!values.empty(), "quantile: empty sample");
  require(delta > 0.0 && delta < 1.0, "quantile: delta must lie in (0, 1)");
  const auto n = static_cast<double>(values.size());
  auto k = static_cast<std::size_t>(std::ceil((1.0 - delta) * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
  return values[k - 1];
}

inline double median(std::vector<double> values) {
  require(!values.empty(), "median: empty sample");
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---------------------------------------------------------------------------

struct CheckVerdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Envelope {
  double C = 0.0;
  double exponent = 0.0;
  double log_power = 0.0;
};

/// One row of plot data: (x, y, series).
struct PlotPoint {
  double x = 0.0;
  double y = 0.0;
  std::string series;
};

struct RateReport {
  double fitted_slope = 0.0;
  double fitted_stderr = 0.0;
  double predicted_slope = 0.0;
  double tolerance = 0.0;
  /// One-sided reports accept any slope <= predicted + tolerance.
  bool one_sided = false;
  bool pass = false;
  std::optional<Envelope> quantile_envelope;
  std::vector<CheckVerdict> per_check_verdicts;
  std::vector<PlotPoint> plot;

  bool slope_ok() const {
    return one_sided ? fitted_slope <= predicted_slope + tolerance
                     : std::abs(fitted_slope - predicted_slope) <= tolerance;
  }
  void finalize() {
    pass = slope_ok() && std::all_of(per_check_verdicts.begin(), per_check_verdicts.end(),
                                     [](const CheckVerdict& v) { return v.pass; });
  }
};

namespace detail {
inline double target_value(const TrajectoryRecord& r, Target target) {
  switch (target) {
    case Target::last_iterate: return r.F_gap;
    case Target::min_grad: return r.min_grad_sq;
    default: return r.min_F_gap;
  }
}

inline std::vector<double> record_times(const Trajectory& tr) {
  std::vector<double> t;
  t.reserve(tr.records.size());
  for (const auto& r : tr.records) t.push_back(static_cast<double>(r.t));
  return t;
}

/// Pointwise ensemble median of a record statistic.
inline std::vector<double> median_path(const Ensemble& ens, const std::function<double(const TrajectoryRecord&)>& f) {
  const std::size_t n = ens.front().records.size();
  std::vector<double> out(n), col(ens.size());
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < ens.size(); ++i) col[i] = f(ens.trajectories[i].records[k]);
    out[k] = median(col);
  }
  return out;
}
}  // namespace detail

struct AsRateOptions {
  Algo algo = Algo::shb;
  double trend_factor = 0.5;
  double fit_window = 0.3;
  double tolerance = 0.15;
  double required_fraction = 0.95;
  bool one_sided = true;
  /// Replaces the predicted exponent (counterfactual checks).
  std::optional<double> exponent_override;
};

/// Almost-sure rate check: each path must show a decade trend of
/// t^{|r| - epsilon} q_t toward zero, and the ensemble-median slope must be
/// consistent with r. epsilon is capped at |r|/2 so the trend exponent stays
/// positive when r is close to zero.
inline RateReport as_rate_check(const Ensemble& ens, Target target, double epsilon, const AsRateOptions& opt = {}) {
  ens.validate();
  const double beta = ens.beta();
  const Algo algo = beta > 0.0 ? Algo::shb : opt.algo;
  const double r = opt.exponent_override.value_or(
      predicted_exponent(algo, ens.convex, ens.gamma, beta, ens.schedule().p, target));
  RateReport rep;
  rep.predicted_slope = r;
  rep.tolerance = opt.tolerance;
  rep.one_sided = opt.one_sided;

  const std::vector<double> t = detail::record_times(ens.front());
  require(epsilon > 0.0, "as_rate_check: epsilon must be positive");
  const double power = std::abs(r) - std::min(epsilon, 0.5 * std::abs(r));
  std::size_t passed = 0;
  std::vector<double> m(t.size());
  for (const auto& tr : ens.trajectories) {
    for (std::size_t k = 0; k < t.size(); ++k) m[k] = std::pow(t[k], power) * detail::target_value(tr.records[k], target);
    if (seqkit::decade_trend(t, m, opt.trend_factor).pass) ++passed;
  }
  const double frac = static_cast<double>(passed) / static_cast<double>(ens.size());
  rep.per_check_verdicts.push_back(CheckVerdict{
      "path_trend", frac >= opt.required_fraction,
      std::to_string(passed) + "/" + std::to_string(ens.size()) + " paths trend to zero at exponent " +
          std::to_string(power)});

  const std::vector<double> med =
      detail::median_path(ens, [target](const TrajectoryRecord& rec) { return detail::target_value(rec, target); });
  const FitResult fit = fit_rate(t, med, opt.fit_window);
  rep.fitted_slope = fit.slope;
  rep.fitted_stderr = fit.stderr_slope;
  for (std::size_t k = 0; k < t.size(); ++k) rep.plot.push_back({t[k], med[k], "median"});
  rep.finalize();
  return rep;
}

namespace detail {
inline void require_gate(const Ensemble& ens, const char* who) {
  if (!ens.gate) throw PreconditionFailed(std::string(who) + ": schedule gates were bypassed");
  if (!ens.gate->pass) {
    std::string msg = std::string(who) + ": schedule failed validation:";
    for (const auto& f : ens.gate->failures) msg += " [" + f + "]";
    throw PreconditionFailed(msg);
  }
}

inline std::vector<double> column_at(const Ensemble& ens, long t,
                                     const std::function<double(const TrajectoryRecord&)>& f) {
  std::vector<double> out;
  out.reserve(ens.size());
  for (const auto& tr : ens.trajectories) out.push_back(f(tr.at(t)));
  return out;
}
}  // namespace detail

struct HpOptions {
  double tolerance = 0.15;
  double dominance_factor = 2.0;
};

/// High-probability last-iterate envelope C T^e ln^2(T/delta), e = max(p-1, 1-2p).
/// Needs records at t = T+1 for every horizon T.
inline RateReport hp_envelope_check(const Ensemble& ens, double delta, const std::vector<long>& horizons,
                                    const HpOptions& opt = {}) {
  ens.validate();
  detail::require_gate(ens, "hp_envelope_check");
  if (ens.gamma != 1.0) throw InvalidInput("hp_envelope_check: requires gamma = 1");
  require(horizons.size() >= 3, "hp_envelope_check: need at least three horizons");
  require(delta > 0.0 && delta < 1.0, "hp_envelope_check: delta must lie in (0, 1)");
  if (static_cast<double>(ens.size()) < 10.0 / delta - 1e-9)
    throw InsufficientSamples("hp_envelope_check: need at least 10/delta seeds, have " + std::to_string(ens.size()));
  std::vector<long> H = horizons;
  std::sort(H.begin(), H.end());
  const double e = hp_exponent(ens.schedule().p);
  RateReport rep;
  rep.predicted_slope = e;
  rep.tolerance = opt.tolerance;

  std::vector<double> q(H.size()), lg(H.size()), x(H.size()), y(H.size());
  for (std::size_t i = 0; i < H.size(); ++i) {
    q[i] = quantile(detail::column_at(ens, H[i] + 1, [](const TrajectoryRecord& r) { return r.F_gap; }), delta);
    const double T = static_cast<double>(H[i]);
    lg[i] = std::pow(std::log(T / delta), 2.0);
  }
  const double T0 = static_cast<double>(H[0]);
  const double C = std::max(q[0], 0.0) / (std::pow(T0, e) * lg[0]);
  rep.quantile_envelope = Envelope{C, e, 2.0};
  bool dominated = true;
  std::string detail;
  for (std::size_t i = 0; i < H.size(); ++i) {
    const double env = C * std::pow(static_cast<double>(H[i]), e) * lg[i];
    rep.plot.push_back({static_cast<double>(H[i]), q[i], "quantile"});
    rep.plot.push_back({static_cast<double>(H[i]), env, "envelope"});
    if (i > 0 && q[i] > opt.dominance_factor * env) {
      dominated = false;
      detail += "T=" + std::to_string(H[i]) + " exceeds; ";
    }
  }
  rep.per_check_verdicts.push_back({"envelope_dominance", dominated, detail.empty() ? "all horizons within factor" : detail});

  bool positive = std::all_of(q.begin(), q.end(), [](double v) { return v > 0.0; });
  if (positive) {
    for (std::size_t i = 0; i < H.size(); ++i) {
      x[i] = static_cast<double>(H[i]);
      y[i] = q[i] / lg[i];
    }
    const FitResult fit = fit_rate(x, y, 1.0);
    rep.fitted_slope = fit.slope;
    rep.fitted_stderr = fit.stderr_slope;
  } else {
    rep.fitted_slope = -std::numeric_limits<double>::infinity();
    rep.per_check_verdicts.push_back({"positive_quantiles", false, "a quantile is zero; slope undefined"});
  }
  rep.finalize();
  return rep;
}

// ---------------------------------------------------------------------------

enum class HpSum {
  weighted_risk,   ///< sum_{t=tau}^T alpha_t (F(w_t) - F*)
  alpha_v_sq,      ///< sum_{t=tau+1}^T alpha_t ||v_t||^2
  noise_dot_v,     ///< sum_{t=tau}^T alpha_t <dm_t, v_t>
  gradF_dot_step,  ///< sum_{t=tau}^T <grad F(w_t), -alpha_t grad l(Z_t, w_t)>
  v_next_sq,       ///< sum_{t=tau}^T ||v_{t+1}||^2
  gradF_dot_v,     ///< sum_{t=tau}^T <grad F(w_t), v_t>
};

inline constexpr std::array<HpSum, 6> kHpSums = {HpSum::weighted_risk, HpSum::alpha_v_sq,  HpSum::noise_dot_v,
                                                 HpSum::gradF_dot_step, HpSum::v_next_sq, HpSum::gradF_dot_v};

inline const char* to_string(HpSum s) {
  switch (s) {
    case HpSum::weighted_risk: return "sum_alpha_F_gap";
    case HpSum::alpha_v_sq: return "sum_alpha_v_sq";
    case HpSum::noise_dot_v: return "sum_alpha_noise_dot_v";
    case HpSum::gradF_dot_step: return "sum_gradF_dot_step";
    case HpSum::v_next_sq: return "sum_v_next_sq";
    default: return "sum_gradF_dot_v";
  }
}

struct HpSumsOptions {
  double dominance_factor = 2.0;
  /// Exponent of tau in the max(tau^e, beta^{2 tau}) tails; defaults to 1 - 2p.
  std::optional<double> tail_exponent_override;
};

/// Envelope shape for the sum over [tau, T] (up to its constant).
inline double hp_sum_shape(HpSum which, const StepSchedule& s, double gamma, double beta, long tau, long T,
                           double delta, std::optional<double> tail_exponent = {}) {
  const double Td = static_cast<double>(T);
  auto powsum = [&](long from, double k) {
    double acc = 0.0;
    for (long t = std::max(from, 0L); t <= T; ++t) acc += std::pow(s.alpha(t), k);
    return acc;
  };
  auto mixed = [&](long from) { return std::max({s.alpha(from), std::sqrt(powsum(from, 4.0)), powsum(from, 3.0)}); };
  const double tail_e = tail_exponent.value_or(1.0 - 2.0 * s.p);
  const double tail = std::max(std::pow(static_cast<double>(tau), tail_e), std::pow(beta, 2.0 * static_cast<double>(tau)));
  switch (which) {
    case HpSum::weighted_risk: return std::pow(std::log(2.0 * Td / delta), 1.5);
    case HpSum::alpha_v_sq: return mixed(tau) * std::pow(std::log(2.0 * Td / delta), 2.0);
    case HpSum::noise_dot_v: return mixed(tau - 1) * std::pow(std::log(3.0 * Td / delta), 2.0);
    case HpSum::gradF_dot_step: return s.alpha(tau) * std::pow(std::log(2.0 * Td / delta), 1.0 + gamma);
    default: return tail * std::pow(std::log(3.0 * Td / delta), 2.0);
  }
}

/// Per-path value of a sum over its index window ending at T.
inline double hp_sum_value(const Trajectory& tr, HpSum which, long tau, long T) {
  auto diff = [&](long from, auto field) {
    const double hi = field(tr.at(T));
    const double lo = from - 1 >= 1 ? field(tr.at(from - 1)) : 0.0;
    return hi - lo;
  };
  switch (which) {
    case HpSum::weighted_risk: return diff(tau, [](const TrajectoryRecord& r) { return r.sum_alpha_F_gap; });
    case HpSum::alpha_v_sq: return diff(tau + 1, [](const TrajectoryRecord& r) { return r.sum_alpha_v_sq; });
    case HpSum::noise_dot_v: return diff(tau, [](const TrajectoryRecord& r) { return r.sum_alpha_noise_dot_v; });
    case HpSum::gradF_dot_step: return diff(tau, [](const TrajectoryRecord& r) { return r.sum_gradF_dot_step; });
    case HpSum::v_next_sq: return diff(tau, [](const TrajectoryRecord& r) { return r.sum_v_next_sq; });
    default: return diff(tau, [](const TrajectoryRecord& r) { return r.sum_gradF_dot_v; });
  }
}

/// Record indices needed by hp_sums_check for the given grids.
inline std::vector<long> hp_sums_required_records(const std::vector<long>& tau_grid, const std::vector<long>& T_grid) {
  std::vector<long> out;
  for (long tau : tau_grid) {
    for (long d : {-1L, 0L}) {
      if (tau + d >= 1) out.push_back(tau + d);
    }
  }
  for (long T : T_grid) out.push_back(T);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// For each of the six sums, fits the constant from the (1-delta)-quantile at
/// the reference point (smallest tau, smallest T > tau) and requires the
/// quantile at every other (tau < T) grid point to stay within the dominance
/// factor of the fitted envelope, so an envelope that decays faster than the
/// data is caught. Nonpositive quantiles are trivially dominated. The
/// weighted-risk sum always starts at tau = 1.
inline std::vector<CheckVerdict> hp_sums_check(const Ensemble& ens, double delta, const std::vector<long>& tau_grid,
                                               const std::vector<long>& T_grid, const HpSumsOptions& opt = {},
                                               std::vector<PlotPoint>* plot = nullptr) {
  ens.validate();
  detail::require_gate(ens, "hp_sums_check");
  require(!tau_grid.empty() && !T_grid.empty(), "hp_sums_check: empty grid");
  require(delta > 0.0 && delta < 1.0, "hp_sums_check: delta must lie in (0, 1)");
  const long tau_ref = *std::min_element(tau_grid.begin(), tau_grid.end());
  const long T_max = *std::max_element(T_grid.begin(), T_grid.end());
  require(tau_ref >= 1 && tau_ref < T_max && T_max <= ens.T(), "hp_sums_check: grid outside the run horizon");
  const StepSchedule& s = ens.schedule();
  std::vector<CheckVerdict> out;
  for (HpSum which : kHpSums) {
    const std::optional<double> te = (which == HpSum::v_next_sq || which == HpSum::gradF_dot_v)
                                         ? opt.tail_exponent_override
                                         : std::nullopt;
    auto q_at = [&](long tau, long T) {
      std::vector<double> vals;
      vals.reserve(ens.size());
      for (const auto& tr : ens.trajectories) vals.push_back(hp_sum_value(tr, which, tau, T));
      return quantile(std::move(vals), delta);
    };
    // The weighted-risk bound is stated over the full window [1, T].
    const std::vector<long> taus = which == HpSum::weighted_risk ? std::vector<long>{1} : tau_grid;
    const long t_ref = which == HpSum::weighted_risk ? 1 : tau_ref;
    long T_fit = T_max;
    for (long T : T_grid)
      if (T > t_ref) T_fit = std::min(T_fit, T);
    const double q_ref = q_at(t_ref, T_fit);
    const double C = std::max(q_ref / hp_sum_shape(which, s, ens.gamma, ens.beta(), t_ref, T_fit, delta, te), 0.0);
    CheckVerdict v{to_string(which), true, "C=" + std::to_string(C)};
    for (long tau : taus) {
      for (long T : T_grid) {
        if (tau >= T) continue;
        const double q = q_at(tau, T);
        const double env = C * hp_sum_shape(which, s, ens.gamma, ens.beta(), tau, T, delta, te);
        if (plot) {
          const std::string series = std::string(to_string(which)) + "@tau=" + std::to_string(tau);
          plot->push_back({static_cast<double>(T), q, series + ":quantile"});
          plot->push_back({static_cast<double>(T), env, series + ":envelope"});
        }
        if (q > 0.0 && q > opt.dominance_factor * env) {
          v.pass = false;
          v.detail += "; exceeds at tau=" + std::to_string(tau) + " T=" + std::to_string(T) + " (q=" +
                      std::to_string(q) + ", envelope=" + std::to_string(env) + ")";
        }
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct BetaInvarianceVerdict {
  bool pass = false;
  bool skipped = false;
  std::string note;
  std::map<double, FitResult> fits;
  double spread = 0.0;
  double band = 0.0;
};

/// Last-iterate slopes of the ensemble-median F gap must agree across beta
/// within 2 max(stderr) + 0.1.
inline BetaInvarianceVerdict beta_invariance_check(const std::map<double, const Ensemble*>& by_beta,
                                                   double fit_window = 0.3) {
  require(by_beta.size() >= 2, "beta_invariance_check: need at least two ensembles");
  const Ensemble& ref = *by_beta.begin()->second;
  BetaInvarianceVerdict v;
  for (const auto& [beta, e] : by_beta) {
    e->validate();
    require(e->beta() == beta, "beta_invariance_check: ensemble key does not match its beta");
    const StepSchedule& a = e->schedule();
    const StepSchedule& b = ref.schedule();
    // c and alpha0 may differ: each beta runs at its own K0 cap.
    require(e->objective_name == ref.objective_name && e->gamma == ref.gamma && e->T() == ref.T() && a.p == b.p &&
                a.mode == b.mode && e->size() == ref.size() &&
                e->front().records.size() == ref.front().records.size(),
            "beta_invariance_check: ensembles differ beyond beta and the beta-dependent step cap");
  }
  if (ref.gamma != 1.0) {
    v.skipped = true;
    v.pass = true;
    v.note = "skipped: gamma < 1 is the r_gamma slowdown regime";
    return v;
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, se = 0.0;
  for (const auto& [beta, e] : by_beta) {
    const std::vector<double> t = detail::record_times(e->front());
    const std::vector<double> med = detail::median_path(*e, [](const TrajectoryRecord& r) { return r.F_gap; });
    const FitResult f = fit_rate(t, med, fit_window);
    v.fits[beta] = f;
    lo = std::min(lo, f.slope);
    hi = std::max(hi, f.slope);
    se = std::max(se, f.stderr_slope);
  }
  v.spread = hi - lo;
  v.band = 2.0 * se + 0.1;
  v.pass = v.spread <= v.band;
  return v;
}

}  // namespace shb
