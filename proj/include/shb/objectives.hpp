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

// Synthetic objectives with certified (gamma, L)-Hoelder gradients, known
// minimizers, and sampled property checks for the analytic lemmas used in the
// convergence analysis.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "shb/core.hpp"

namespace shb {

using Rng = std::mt19937_64;

namespace detail {
/// Left-to-right dot product; keeps component and full-sum gradients bitwise consistent.
inline double dot_seq(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
}  // namespace detail

namespace objectives {

/// F(w) = 1/2 w^T A w with A symmetric positive definite.
struct Quadratic {
  Matrix A;
  double eval(const Vector& w) const { return 0.5 * w.dot(A * w); }
  Vector grad(const Vector& w) const { return A * w; }
};

/// F(w) = 1/(1+gamma) sum_i |w_i|^{1+gamma}.
struct Power {
  double gamma = 0.5;
  double eval(const Vector& w) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) s += std::pow(std::abs(w[i]), 1.0 + gamma);
    return s / (1.0 + gamma);
  }
  Vector grad(const Vector& w) const {
    Vector g(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double a = std::abs(w[i]);
      g[i] = a == 0.0 ? 0.0 : std::copysign(std::pow(a, gamma), w[i]);
    }
    return g;
  }
};

/// F(w) = 1/n sum_i 1/2 (<x_i, w> - y_i)^2 with rows x_i stored row-major.
struct LeastSquares {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> X;
  Vector y;

  double residual(Eigen::Index i, const Vector& w) const {
    return detail::dot_seq(X.row(i).data(), w.data(), w.size()) - y[i];
  }
  double eval(const Vector& w) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double r = residual(i, w);
      s += 0.5 * r * r;
    }
    return s / static_cast<double>(X.rows());
  }
  Vector grad(const Vector& w) const {
    Vector acc = Vector::Zero(w.size());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const Vector gi = residual(i, w) * X.row(i).transpose();
      acc += gi;
    }
    return acc / static_cast<double>(X.rows());
  }
};

/// Non-convex F(w) = sum_i w_i^2 / (1 + w_i^2); bounded below by 0, 2-Lipschitz gradient.
struct Bump {
  double eval(const Vector& w) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) s += w[i] * w[i] / (1.0 + w[i] * w[i]);
    return s;
  }
  Vector grad(const Vector& w) const {
    Vector g(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double d = 1.0 + w[i] * w[i];
      g[i] = 2.0 * w[i] / (d * d);
    }
    return g;
  }
};

using Model = std::variant<Quadratic, Power, LeastSquares, Bump>;

}  // namespace objectives

/// Immutable objective with its smoothness and minimizer certificate.
class Objective {
 public:
  Objective(objectives::Model model, std::string name, long dim, double gamma, double L, bool convex,
            double F_star, Vector w_star)
      : model_(std::move(model)),
        name_(std::move(name)),
        dim_(dim),
        gamma_(gamma),
        L_(L),
        convex_(convex),
        F_star_(F_star),
        w_star_(std::move(w_star)) {
    require(dim_ > 0, "objective dimension must be positive");
    require(gamma_ > 0.0 && gamma_ <= 1.0, "objective gamma must lie in (0, 1]");
    require(L_ > 0.0 && std::isfinite(L_), "objective L must be positive");
    require(w_star_.size() == dim_, "objective w_star has the wrong dimension");
  }

  double eval(const Vector& w) const {
    check_dim(w);
    return std::visit([&](const auto& m) { return m.eval(w); }, model_);
  }
  Vector grad(const Vector& w) const {
    check_dim(w);
    return std::visit([&](const auto& m) { return m.grad(w); }, model_);
  }

  long dim() const { return dim_; }
  double gamma() const { return gamma_; }
  double L() const { return L_; }
  bool convex() const { return convex_; }
  double F_star() const { return F_star_; }
  const Vector& w_star() const { return w_star_; }
  const std::string& name() const { return name_; }
  const objectives::Model& model() const { return model_; }

  /// Same function with a different declared Hoelder constant.
  Objective with_L(double L) const {
    Objective o = *this;
    require(L > 0.0, "declared L must be positive");
    o.L_ = L;
    return o;
  }

 private:
  void check_dim(const Vector& w) const {
    if (w.size() != dim_)
      throw InvalidInput("dimension mismatch: objective '" + name_ + "' has dim " + std::to_string(dim_) +
                         ", got " + std::to_string(w.size()));
  }

  objectives::Model model_;
  std::string name_;
  long dim_;
  double gamma_;
  double L_;
  bool convex_;
  double F_star_;
  Vector w_star_;
};

inline Objective make_quadratic(const Matrix& A) {
  require(A.rows() == A.cols() && A.rows() > 0, "quadratic: A must be square");
  require((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()),
          "quadratic: A must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
  require(es.eigenvalues().minCoeff() > 0.0, "quadratic: A must be positive definite");
  const long d = A.rows();
  return Objective(objectives::Quadratic{A}, "quadratic", d, 1.0, es.eigenvalues().maxCoeff(), true, 0.0,
                   Vector::Zero(d));
}

inline Objective make_quadratic_diag(const Vector& eigenvalues) {
  return make_quadratic(eigenvalues.asDiagonal().toDenseMatrix());
}

/// Vector Hoelder constant 2^{1-gamma} d^{(1-gamma)/2} composes the scalar
/// bound |sgn(a)|a|^g - sgn(b)|b|^g| <= 2^{1-g}|a-b|^g over coordinates.
inline double power_holder_constant(double gamma, long dim) {
  return std::pow(2.0, 1.0 - gamma) * std::pow(static_cast<double>(dim), (1.0 - gamma) / 2.0);
}

inline Objective make_power(double gamma, long dim) {
  require(gamma > 0.0 && gamma <= 1.0, "power: gamma must lie in (0, 1]");
  require(dim > 0, "power: dim must be positive");
  return Objective(objectives::Power{gamma}, "power", dim, gamma, power_holder_constant(gamma, dim), true, 0.0,
                   Vector::Zero(dim));
}

/// Least squares over rows of X; w_star is the minimum-norm normal-equation solution.
inline Objective make_least_squares(const Matrix& X, const Vector& y) {
  require(X.rows() > 0 && X.cols() > 0, "least_squares: empty design matrix");
  require(X.rows() == y.size(), "least_squares: X and y row counts differ");
  require(X.allFinite() && y.allFinite(), "least_squares: non-finite data");
  objectives::LeastSquares ls{X, y};
  const Vector w_star = X.completeOrthogonalDecomposition().solve(y);
  const double F_star = ls.eval(w_star);
  const double L = X.rowwise().squaredNorm().maxCoeff();
  require(L > 0.0, "least_squares: all rows are zero");
  return Objective(std::move(ls), "least_squares", X.cols(), 1.0, L, true, F_star, w_star);
}

inline Objective make_bump(long dim) {
  require(dim > 0, "bump: dim must be positive");
  return Objective(objectives::Bump{}, "bump", dim, 1.0, 2.0, false, 0.0, Vector::Zero(dim));
}

/// Orthonormal DCT-II basis of R^n; column 0 is constant.
inline Matrix dct_basis(long n) {
  Matrix B(n, n);
  for (long k = 0; k < n; ++k) {
    for (long i = 0; i < n; ++i) B(i, k) = std::cos(std::numbers::pi * (i + 0.5) * k / static_cast<double>(n));
    B.col(k).normalize();
  }
  return B;
}

/// Eigenvalues of the empirical Hessian of the graded dataset: one stiff
/// direction followed by eight log-spaced values in [3e-3, 0.15].
inline Vector graded_spectrum() {
  Vector lam(9);
  lam[0] = 1.0;
  const double hi = std::log10(0.15), lo = std::log10(3e-3);
  for (int j = 0; j < 8; ++j) lam[j + 1] = std::pow(10.0, hi + (lo - hi) * j / 7.0);
  return lam;
}

/// Ten-sample, nine-feature least-squares dataset with orthogonal feature
/// columns (empirical Hessian diag(graded_spectrum())) and a constant
/// residual 0.05 orthogonal to them, so w_star = 0 and F_star = 1.25e-3.
inline std::pair<Matrix, Vector> graded_dataset() {
  const long n = 10;
  const Matrix B = dct_basis(n);
  const Vector lam = graded_spectrum();
  Matrix X(n, lam.size());
  for (long j = 0; j < lam.size(); ++j) X.col(j) = B.col(j + 1) * std::sqrt(n * lam[j]);
  Vector y = Vector::Constant(n, 0.05);
  return {X, y};
}

/// Starting point for the graded dataset: amplitude 6 on the stiff direction
/// and lambda_j^{-1/5} on the rest.
inline Vector graded_initial_point() {
  const Vector lam = graded_spectrum();
  Vector w0(lam.size());
  w0[0] = 6.0;
  for (long j = 1; j < lam.size(); ++j) w0[j] = std::pow(lam[j], -0.2);
  return w0;
}

inline Objective make_graded_least_squares() {
  auto [X, y] = graded_dataset();
  return make_least_squares(X, y);
}

// ---------------------------------------------------------------------------
// Sampled property checks.

/// Uniform point in the ball of the given radius around `center`.
inline Vector sample_ball(const Vector& center, double radius, Rng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Vector u(center.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = normal(rng);
  const double nu = u.norm();
  if (nu == 0.0) return center;
  const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(center.size()));
  return center + (r / nu) * u;
}

struct HolderReport {
  double max_ratio = 0.0;
  bool pass = false;
};

/// max ||grad F(u) - grad F(v)|| / ||u - v||^gamma over sampled pairs.
inline HolderReport check_holder(const Objective& obj, long n_pairs, double radius, Rng& rng) {
  require(n_pairs >= 1, "check_holder: n_pairs must be >= 1");
  HolderReport rep;
  for (long k = 0; k < n_pairs; ++k) {
    const Vector u = sample_ball(obj.w_star(), radius, rng);
    const Vector v = sample_ball(obj.w_star(), radius, rng);
    const double d = (u - v).norm();
    if (d == 0.0) continue;
    const double ratio = (obj.grad(u) - obj.grad(v)).norm() / std::pow(d, obj.gamma());
    rep.max_ratio = std::max(rep.max_ratio, ratio);
  }
  rep.pass = rep.max_ratio <= obj.L() * (1.0 + 1e-6);
  return rep;
}

struct DescentReport {
  /// max over pairs of F(y) - [F(x) + <grad F(x), y-x> + L/(1+g) ||y-x||^{1+g}], floored at 0.
  double max_violation = 0.0;
  /// max over pairs of |F(y) - upper| / scale; zero means equality everywhere.
  double max_rel_gap = 0.0;
  bool pass = false;
};

/// Upper quadratic-type bound implied by a (gamma, L)-Hoelder gradient.
inline DescentReport check_descent_lemma(const Objective& obj, long n_pairs, Rng& rng, double radius = 10.0) {
  require(n_pairs >= 1, "check_descent_lemma: n_pairs must be >= 1");
  DescentReport rep;
  bool ok = true;
  const double g = obj.gamma();
  for (long k = 0; k < n_pairs; ++k) {
    const Vector x = sample_ball(obj.w_star(), radius, rng);
    const Vector y = sample_ball(obj.w_star(), radius, rng);
    const double Fx = obj.eval(x), Fy = obj.eval(y);
    const double tail = obj.L() / (1.0 + g) * std::pow((y - x).norm(), 1.0 + g);
    const double upper = Fx + obj.grad(x).dot(y - x) + tail;
    const double scale = std::max({1.0, std::abs(Fx), std::abs(Fy), tail});
    const double viol = std::max(0.0, Fy - upper);
    rep.max_violation = std::max(rep.max_violation, viol);
    rep.max_rel_gap = std::max(rep.max_rel_gap, std::abs(Fy - upper) / scale);
    if (viol > 1e-8 * scale) ok = false;
  }
  rep.pass = ok;
  return rep;
}

struct SandwichReport {
  double max_lower_violation = 0.0;
  double max_upper_violation = 0.0;
  double max_rel_gap_lower = 0.0;
  double max_rel_gap_upper = 0.0;
  bool lower_ok = false;
  bool upper_ok = false;
  bool pass() const { return lower_ok && upper_ok; }
};

/// Two-sided Bregman sandwich for convex (gamma, L)-smooth objectives:
///   g ||grad F(y) - grad F(x)||^{(1+g)/g} / ((1+g) L^{1/g})
///     <= F(y) - F(x) - <grad F(x), y - x> <= L ||y - x||^{1+g} / (1+g).
inline SandwichReport check_lsg13(const Objective& obj, long n_pairs, Rng& rng, double radius = 10.0) {
  if (!obj.convex()) throw InvalidInput("check_lsg13: objective '" + obj.name() + "' is not convex");
  require(n_pairs >= 1, "check_lsg13: n_pairs must be >= 1");
  SandwichReport rep;
  rep.lower_ok = rep.upper_ok = true;
  const double g = obj.gamma();
  const double L = obj.L();
  for (long k = 0; k < n_pairs; ++k) {
    const Vector x = sample_ball(obj.w_star(), radius, rng);
    const Vector y = sample_ball(obj.w_star(), radius, rng);
    const Vector gx = obj.grad(x);
    const double bregman = obj.eval(y) - obj.eval(x) - gx.dot(y - x);
    const double lower =
        g * std::pow((obj.grad(y) - gx).norm(), (1.0 + g) / g) / ((1.0 + g) * std::pow(L, 1.0 / g));
    const double upper = L * std::pow((y - x).norm(), 1.0 + g) / (1.0 + g);
    const double scale = std::max({1.0, std::abs(obj.eval(y)), std::abs(obj.eval(x)), upper});
    const double lv = std::max(0.0, lower - bregman);
    const double uv = std::max(0.0, bregman - upper);
    rep.max_lower_violation = std::max(rep.max_lower_violation, lv);
    rep.max_upper_violation = std::max(rep.max_upper_violation, uv);
    rep.max_rel_gap_lower = std::max(rep.max_rel_gap_lower, std::abs(bregman - lower) / scale);
    rep.max_rel_gap_upper = std::max(rep.max_rel_gap_upper, std::abs(upper - bregman) / scale);
    if (lv > 1e-8 * scale) rep.lower_ok = false;
    if (uv > 1e-8 * scale) rep.upper_ok = false;
  }
  return rep;
}

}  // namespace shb
