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

// Experiment configuration: a flat key = value file with sections, lossless
// round-tripping, a deterministic hash, and construction of the objects it
// describes.

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "shb/io.hpp"
#include "shb/objectives.hpp"
#include "shb/optim.hpp"
#include "shb/oracle.hpp"
#include "shb/parallel.hpp"

namespace shb {

/// A step constant given either as a number or as the K0 cap of the run's beta.
struct StepValue {
  bool use_K0 = true;
  double value = 0.0;
  double resolve(double K0) const { return use_K0 ? K0 : value; }
  bool operator==(const StepValue&) const = default;
};

struct ExperimentConfig {
  // [objective]
  std::string objective = "graded";  ///< quadratic | power | least_squares | bump | graded
  long dim = 2;
  double gamma = 0.5;                ///< power objective only
  std::vector<double> eigenvalues;   ///< quadratic: diagonal of A (empty: identity)
  std::string dataset;               ///< least_squares: CSV path

  // [oracle]
  std::string oracle = "finite_sum";  ///< finite_sum | additive_noise | zero_noise
  double sigma = 0.0;

  // [schedule]
  StepValue c;
  StepValue alpha0;
  double p = 2.0 / 3.0;
  std::string mode = "as_rate";

  // [algorithm]
  double beta = 0.0;
  std::optional<double> K5;

  // [init]
  std::vector<double> w0;  ///< empty: objective default

  // [run]
  long T = 10000;
  long record_every = 1;
  int log_points_per_decade = 0;
  long seeds = 1;
  std::uint64_t master_seed = 0;
  std::string output = "out";

  // [hp]
  double delta = 0.05;
  std::vector<long> horizons;
  std::vector<long> tau_grid;

  // [sweep]
  std::vector<double> sweep_p;
  std::vector<double> sweep_beta;
  std::vector<double> sweep_gamma;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {
template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>)
      out += io::format_double(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

inline std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (cell.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(io::parse_double(cell));
  }
  return out;
}

inline std::vector<long> split_longs(const std::string& s) {
  std::vector<long> out;
  for (double x : split_doubles(s)) {
    if (x != std::floor(x)) throw InvalidInput("expected an integer list: '" + s + "'");
    out.push_back(static_cast<long>(x));
  }
  return out;
}

inline StepValue parse_step(const std::string& s) {
  std::string t = s;
  t.erase(0, t.find_first_not_of(" \t"));
  t.erase(t.find_last_not_of(" \t\r") + 1);
  if (t == "K0") return StepValue{true, 0.0};
  return StepValue{false, io::parse_double(t)};
}

inline std::string format_step(const StepValue& v) { return v.use_K0 ? "K0" : io::format_double(v.value); }
}  // namespace detail

inline std::string serialize(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[objective]\n"
    << "name = " << c.objective << "\n"
    << "dim = " << c.dim << "\n"
    << "gamma = " << io::format_double(c.gamma) << "\n"
    << "eigenvalues = " << detail::join(c.eigenvalues) << "\n"
    << "dataset = " << c.dataset << "\n\n"
    << "[oracle]\n"
    << "kind = " << c.oracle << "\n"
    << "sigma = " << io::format_double(c.sigma) << "\n\n"
    << "[schedule]\n"
    << "c = " << detail::format_step(c.c) << "\n"
    << "p = " << io::format_double(c.p) << "\n"
    << "alpha0 = " << detail::format_step(c.alpha0) << "\n"
    << "mode = " << c.mode << "\n\n"
    << "[algorithm]\n"
    << "beta = " << io::format_double(c.beta) << "\n"
    << "K5 = " << (c.K5 ? io::format_double(*c.K5) : std::string()) << "\n\n"
    << "[init]\n"
    << "w0 = " << detail::join(c.w0) << "\n\n"
    << "[run]\n"
    << "T = " << c.T << "\n"
    << "record_every = " << c.record_every << "\n"
    << "log_points_per_decade = " << c.log_points_per_decade << "\n"
    << "seeds = " << c.seeds << "\n"
    << "master_seed = " << c.master_seed << "\n"
    << "output = " << c.output << "\n\n"
    << "[hp]\n"
    << "delta = " << io::format_double(c.delta) << "\n"
    << "horizons = " << detail::join(c.horizons) << "\n"
    << "tau_grid = " << detail::join(c.tau_grid) << "\n\n"
    << "[sweep]\n"
    << "p = " << detail::join(c.sweep_p) << "\n"
    << "beta = " << detail::join(c.sweep_beta) << "\n"
    << "gamma = " << detail::join(c.sweep_gamma) << "\n";
  return o.str();
}

inline ScheduleMode parse_mode(const std::string& m) {
  if (m == "as_rate") return ScheduleMode::as_rate;
  if (m == "hp_rate") return ScheduleMode::hp_rate;
  throw InvalidInput("config: schedule.mode must be as_rate or hp_rate, got '" + m + "'");
}

inline void validate_config(const ExperimentConfig& c) {
  require(c.T >= 1, "config: run.T must be >= 1");
  require(c.seeds >= 1, "config: run.seeds must be >= 1");
  require(c.record_every >= 1, "config: run.record_every must be >= 1");
  require(c.beta >= 0.0 && c.beta < 1.0, "config: algorithm.beta must lie in [0, 1)");
  require(c.delta > 0.0 && c.delta < 1.0, "config: hp.delta must lie in (0, 1)");
  require(c.c.use_K0 || c.c.value > 0.0, "config: schedule.c must be positive");
  require(c.alpha0.use_K0 || c.alpha0.value > 0.0, "config: schedule.alpha0 must be positive");
  parse_mode(c.mode);
  for (long h : c.horizons) require(h >= 1 && h <= c.T, "config: hp.horizons must lie in [1, T]");
}

/// Parses the key = value format; unknown sections or keys are rejected.
inline ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  auto str = [](const pt::ptree& sec, const std::string& k) {
    std::string v = sec.get_value<std::string>();
    (void)k;
    v.erase(0, v.find_first_not_of(" \t"));
    v.erase(v.find_last_not_of(" \t\r") + 1);
    return v;
  };
  auto num = [&](const pt::ptree& sec, const std::string& k) { return io::parse_double(str(sec, k)); };
  auto integer = [&](const pt::ptree& sec, const std::string& k) {
    const double x = num(sec, k);
    if (x != std::floor(x)) throw InvalidInput("config: " + k + " must be an integer");
    return static_cast<long>(x);
  };
  for (const auto& [section, body] : tree) {
    for (const auto& [key, node] : body) {
      const std::string id = section + "." + key;
      const std::string v = str(node, id);
      try {
        if (id == "objective.name") c.objective = v;
        else if (id == "objective.dim") c.dim = integer(node, id);
        else if (id == "objective.gamma") c.gamma = num(node, id);
        else if (id == "objective.eigenvalues") c.eigenvalues = detail::split_doubles(v);
        else if (id == "objective.dataset") c.dataset = v;
        else if (id == "oracle.kind") c.oracle = v;
        else if (id == "oracle.sigma") c.sigma = num(node, id);
        else if (id == "schedule.c") c.c = detail::parse_step(v);
        else if (id == "schedule.p") c.p = num(node, id);
        else if (id == "schedule.alpha0") c.alpha0 = detail::parse_step(v);
        else if (id == "schedule.mode") c.mode = v;
        else if (id == "algorithm.beta") c.beta = num(node, id);
        else if (id == "algorithm.K5") c.K5 = v.empty() ? std::nullopt : std::optional<double>(num(node, id));
        else if (id == "init.w0") c.w0 = detail::split_doubles(v);
        else if (id == "run.T") c.T = integer(node, id);
        else if (id == "run.record_every") c.record_every = integer(node, id);
        else if (id == "run.log_points_per_decade") c.log_points_per_decade = static_cast<int>(integer(node, id));
        else if (id == "run.seeds") c.seeds = integer(node, id);
        else if (id == "run.master_seed") c.master_seed = std::stoull(v);
        else if (id == "run.output") c.output = v;
        else if (id == "hp.delta") c.delta = num(node, id);
        else if (id == "hp.horizons") c.horizons = detail::split_longs(v);
        else if (id == "hp.tau_grid") c.tau_grid = detail::split_longs(v);
        else if (id == "sweep.p") c.sweep_p = detail::split_doubles(v);
        else if (id == "sweep.beta") c.sweep_beta = detail::split_doubles(v);
        else if (id == "sweep.gamma") c.sweep_gamma = detail::split_doubles(v);
        else throw InvalidInput("config: unknown key '" + id + "'");
      } catch (const std::logic_error& e) {
        if (dynamic_cast<const InvalidInput*>(&e)) throw;
        throw InvalidInput("config: bad value for '" + id + "': " + v);
      }
    }
  }
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_file(path)); }

/// FNV-1a 64 of the canonical serialization, as 16 hex digits. The output
/// directory is not part of the experiment and is left out.
inline std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig key = c;
  key.output.clear();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize(key)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline Objective build_objective(const ExperimentConfig& c) {
  if (c.objective == "quadratic") {
    if (c.eigenvalues.empty()) return make_quadratic(Matrix::Identity(c.dim, c.dim));
    return make_quadratic_diag(Eigen::Map<const Vector>(c.eigenvalues.data(), static_cast<Eigen::Index>(c.eigenvalues.size())));
  }
  if (c.objective == "power") return make_power(c.gamma, c.dim);
  if (c.objective == "bump") return make_bump(c.dim);
  if (c.objective == "graded") return make_graded_least_squares();
  if (c.objective == "least_squares") {
    if (c.dataset.empty()) throw InvalidInput("config: least_squares needs objective.dataset");
    auto [X, y] = io::load_dataset_csv(c.dataset);
    return make_least_squares(X, y);
  }
  throw InvalidInput("config: unknown objective '" + c.objective + "'");
}

inline StochasticOracle build_oracle(const ExperimentConfig& c) {
  if (c.oracle == "zero_noise") return StochasticOracle::identical(build_objective(c), 1);
  if (c.oracle == "additive_noise") return StochasticOracle::additive_noise(build_objective(c), c.sigma);
  if (c.oracle != "finite_sum") throw InvalidInput("config: unknown oracle kind '" + c.oracle + "'");
  if (c.objective == "graded") {
    auto [X, y] = graded_dataset();
    return StochasticOracle::least_squares(X, y);
  }
  if (c.objective == "least_squares") {
    if (c.dataset.empty()) throw InvalidInput("config: least_squares needs objective.dataset");
    auto [X, y] = io::load_dataset_csv(c.dataset);
    return StochasticOracle::least_squares(X, y);
  }
  throw InvalidInput("config: finite_sum needs a least_squares or graded objective; use zero_noise or additive_noise");
}

inline Vector build_w0(const ExperimentConfig& c, const Objective& obj) {
  if (!c.w0.empty()) {
    if (static_cast<long>(c.w0.size()) != obj.dim())
      throw InvalidInput("config: init.w0 has " + std::to_string(c.w0.size()) + " entries, objective dim is " +
                         std::to_string(obj.dim()));
    return Eigen::Map<const Vector>(c.w0.data(), static_cast<Eigen::Index>(c.w0.size()));
  }
  if (c.objective == "graded") return graded_initial_point();
  return obj.w_star() + Vector::Ones(obj.dim());
}

/// Schedule with any K0 placeholders resolved against the constants of `beta`.
inline StepSchedule build_schedule(const ExperimentConfig& c, const ShbConstants& k) {
  StepSchedule s;
  s.c = c.c.resolve(k.K0);
  s.alpha0 = c.alpha0.resolve(k.K0);
  s.p = c.p;
  s.mode = parse_mode(c.mode);
  return s;
}

/// Run options: stride, log points, and the records needed by the hp checks.
inline RunOptions build_run_options(const ExperimentConfig& c) {
  RunOptions o;
  o.record_every = c.record_every;
  o.log_points_per_decade = c.log_points_per_decade;
  for (long h : c.horizons) o.extra_records.push_back(h + 1);
  if (!c.tau_grid.empty()) {
    std::vector<long> Ts = c.horizons;
    if (Ts.empty()) Ts.push_back(c.T);
    for (long t : hp_sums_required_records(c.tau_grid, Ts)) o.extra_records.push_back(t);
  }
  return o;
}


}  // namespace shb
