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

// Deterministic sequence toolkit: discrete Gronwall envelopes, the geometric
// recursion solver, the weak Robbins-Siegmund recursion check and finite
// horizon trend/plateau proxies for o(.) and l^1 statements.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shb/core.hpp"

namespace shb::seqkit {

/// A finite, finite-valued prefix x_{start}, x_{start+1}, ... of a real sequence.
class SequencePrefix {
 public:
  SequencePrefix() = default;
  explicit SequencePrefix(std::vector<double> values, long start_index = 0)
      : values_(std::move(values)), start_(start_index) {
    require(!values_.empty(), "sequence prefix must have length >= 1");
    require(start_ >= 0, "sequence start index must be nonnegative");
    for (double v : values_) require(std::isfinite(v), "sequence prefix contains a non-finite value");
  }

  std::size_t size() const { return values_.size(); }
  long start_index() const { return start_; }
  long last_index() const { return start_ + static_cast<long>(values_.size()) - 1; }
  double operator[](std::size_t k) const { return values_[k]; }
  /// Value at absolute index t.
  double at(long t) const { return values_.at(static_cast<std::size_t>(t - start_)); }
  const std::vector<double>& values() const { return values_; }
  std::span<const double> span() const { return values_; }

 private:
  std::vector<double> values_;
  long start_ = 0;
};

struct RecursionVerdict {
  bool holds = true;
  std::optional<long> first_violation_index;
  double sup_Y = 0.0;
  double partial_sum_X = 0.0;
  /// Explicit bound (Y_0 + sum_{s<t} Z_s) * prod_{s<t} (1 + a_s).
  SequencePrefix envelope;
  bool explicit_bound_holds = true;
};

namespace detail {
inline void require_nonneg(std::span<const double> xs, const char* what) {
  for (double x : xs) require(x >= 0.0, std::string(what) + " must be nonnegative");
}
}  // namespace detail

/// E_0 = A, E_n = A * prod_{k=1..n} (1 + c_{k-1}). Dominates every X with
/// X_0 <= A and X_n <= A + sum_{k=1..n} c_{k-1} X_{k-1}.
inline SequencePrefix gronwall_envelope(double A, const SequencePrefix& c) {
  require(std::isfinite(A) && A >= 0.0, "gronwall_envelope: A must be nonnegative");
  detail::require_nonneg(c.span(), "gronwall_envelope: c");
  std::vector<double> e;
  e.reserve(c.size() + 1);
  e.push_back(A);
  double prod = A;
  for (double ck : c.values()) {
    prod *= (1.0 + ck);
    e.push_back(prod);
  }
  return SequencePrefix(std::move(e), 0);
}

/// Closed-form solution of Y_{n+1} = beta^2 Y_n + X_n started from Y_{n0} = y:
///   Y_{n0+n} = beta^{2n} y + sum_{k=0}^{n-1} beta^{2k} X_{n0+n-1-k}.
/// X is indexed from n0. The result has length |X| + 1 and starts at n0.
inline SequencePrefix solve_geometric_recursion(double beta, double y, const SequencePrefix& X, long n0) {
  require(beta >= 0.0 && beta < 1.0, "solve_geometric_recursion: beta must lie in [0, 1)");
  require(std::isfinite(y), "solve_geometric_recursion: y must be finite");
  require(n0 >= 0, "solve_geometric_recursion: n0 must be nonnegative");
  const std::size_t n = X.size();
  const double b2 = beta * beta;
  // pow2k[k] = beta^{2k}; beta^0 = 1 also for beta = 0.
  std::vector<double> pow2k(n + 1, 1.0);
  for (std::size_t k = 1; k <= n; ++k) pow2k[k] = pow2k[k - 1] * b2;

  std::vector<double> Y(n + 1);
  for (std::size_t m = 0; m <= n; ++m) {
    double acc = pow2k[m] * y;
    for (std::size_t k = 0; k < m; ++k) {
      if (pow2k[k] == 0.0) break;
      acc += pow2k[k] * X[m - 1 - k];
    }
    Y[m] = acc;
  }
  return SequencePrefix(std::move(Y), n0);
}

/// Checks Y_t <= (1 + a_{t-1}) Y_{t-1} - X_{t-1} + Z_{t-1} pointwise and the
/// resulting explicit bound Y_t <= (Y_0 + sum_{s<t} Z_s) prod_{s<t} (1 + a_s).
inline RecursionVerdict check_weak_rs(const SequencePrefix& Y, const SequencePrefix& X, const SequencePrefix& Z,
                                      const SequencePrefix& a, double rel_tol = 1e-10) {
  require(Y.size() == X.size() && Y.size() == Z.size() && Y.size() == a.size(),
          "check_weak_rs: sequences must have equal lengths");
  detail::require_nonneg(Y.span(), "check_weak_rs: Y");
  detail::require_nonneg(X.span(), "check_weak_rs: X");
  detail::require_nonneg(Z.span(), "check_weak_rs: Z");
  detail::require_nonneg(a.span(), "check_weak_rs: a");

  RecursionVerdict v;
  const std::size_t n = Y.size();
  v.sup_Y = *std::max_element(Y.values().begin(), Y.values().end());
  for (std::size_t t = 0; t < n; ++t) v.partial_sum_X += X[t];

  for (std::size_t t = 1; t < n; ++t) {
    const double rhs = (1.0 + a[t - 1]) * Y[t - 1] - X[t - 1] + Z[t - 1];
    const double scale = std::max({std::abs(Y[t]), (1.0 + a[t - 1]) * Y[t - 1], X[t - 1], Z[t - 1], 1e-300});
    if (Y[t] > rhs + rel_tol * scale) {
      v.holds = false;
      v.first_violation_index = Y.start_index() + static_cast<long>(t);
      break;
    }
  }

  std::vector<double> env(n);
  double zsum = 0.0;
  double prod = 1.0;
  env[0] = Y[0];
  for (std::size_t t = 1; t < n; ++t) {
    zsum += Z[t - 1];
    prod *= (1.0 + a[t - 1]);
    env[t] = (Y[0] + zsum) * prod;
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (Y[t] > env[t] * (1.0 + rel_tol)) {
      v.explicit_bound_holds = false;
      break;
    }
  }
  v.envelope = SequencePrefix(std::move(env), Y.start_index());
  return v;
}

struct TrendVerdict {
  bool pass = false;
  double first_decade_mean = 0.0;
  double last_decade_mean = 0.0;
};

/// Finite-horizon proxy for m_t -> 0: the mean over the final decade
/// (t_last/10, t_last] must be below `factor` times the mean over the first
/// decade [t_first, 10 t_first). Indices must be positive and increasing.
inline TrendVerdict decade_trend(std::span<const double> t, std::span<const double> m, double factor = 0.5) {
  require(t.size() == m.size() && !t.empty(), "decade_trend: index and value spans must match");
  const double t0 = t.front();
  const double t1 = t.back();
  require(t0 > 0.0, "decade_trend: indices must be positive");
  if (t1 < 10.0 * t0) throw PreconditionFailed("decade_trend: window spans less than one decade");
  double s_first = 0.0, s_last = 0.0;
  std::size_t n_first = 0, n_last = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < 10.0 * t0) {
      s_first += m[k];
      ++n_first;
    }
    if (t[k] > t1 / 10.0) {
      s_last += m[k];
      ++n_last;
    }
  }
  TrendVerdict v;
  v.first_decade_mean = s_first / static_cast<double>(n_first);
  v.last_decade_mean = s_last / static_cast<double>(n_last);
  v.pass = v.last_decade_mean < factor * v.first_decade_mean;
  return v;
}

/// Plateau proxy for convergence of a nondecreasing partial-sum sequence: the
/// change over the last `tail_fraction` of the index range is below `rel_tol`
/// relative to the final value.
inline bool plateau(std::span<const double> t, std::span<const double> partial, double tail_fraction = 0.1,
                    double rel_tol = 0.01) {
  require(t.size() == partial.size() && !t.empty(), "plateau: index and value spans must match");
  const double t_end = t.back();
  const double t_cut = t.front() + (1.0 - tail_fraction) * (t_end - t.front());
  std::size_t k = 0;
  while (k + 1 < t.size() && t[k] < t_cut) ++k;
  const double end = partial.back();
  if (end == 0.0) return true;
  return std::abs(end - partial[k]) < rel_tol * std::abs(end);
}

struct KnoppReport {
  bool pass = false;
  /// m_t = t^r * min_{s<=t} x_s at the monitored indices.
  std::vector<double> t;
  std::vector<double> m;
  TrendVerdict trend;
};

/// Knopp-style rate check on sampled data. `t` are the monitored indices,
/// `running_min` is min_{s<=t} x_s, and `weighted_partial` is
/// sum_{s<=t} alpha_s min_{u<=s} x_u accumulated at every step.
inline KnoppReport knopp_min_rate_check_sampled(std::span<const double> t, std::span<const double> running_min,
                                                std::span<const double> weighted_partial, double r,
                                                double factor = 0.5) {
  require(t.size() == running_min.size() && t.size() == weighted_partial.size(),
          "knopp_min_rate_check: spans must match");
  if (!plateau(t, weighted_partial))
    throw PreconditionFailed("knopp_min_rate_check: weighted partial sums do not plateau");
  KnoppReport rep;
  rep.t.assign(t.begin(), t.end());
  rep.m.resize(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) rep.m[k] = std::pow(t[k], r) * running_min[k];
  rep.trend = decade_trend(rep.t, rep.m, factor);
  rep.pass = rep.trend.pass;
  return rep;
}

/// Dense variant: alpha and x share an index range starting at x.start_index() >= 1.
inline KnoppReport knopp_min_rate_check(const SequencePrefix& alpha, const SequencePrefix& x, double r,
                                        double factor = 0.5) {
  require(alpha.size() == x.size(), "knopp_min_rate_check: alpha and x must have equal lengths");
  require(x.start_index() >= 1, "knopp_min_rate_check: indices must start at 1 or later");
  detail::require_nonneg(x.span(), "knopp_min_rate_check: x");
  for (double a : alpha.values()) require(a > 0.0, "knopp_min_rate_check: alpha must be positive");
  const std::size_t n = x.size();
  std::vector<double> t(n), mins(n), partial(n);
  double mn = x[0];
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mn = std::min(mn, x[k]);
    acc += alpha[k] * mn;
    t[k] = static_cast<double>(x.start_index() + static_cast<long>(k));
    mins[k] = mn;
    partial[k] = acc;
  }
  return knopp_min_rate_check_sampled(t, mins, partial, r, factor);
}

}  // namespace shb::seqkit
