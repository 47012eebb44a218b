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

// Output formats: CSV with shortest round-trip numbers, JSON summaries,
// atomic file writes, and the dataset loader.

#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "shb/core.hpp"
#include "shb/optim.hpp"
#include "shb/rates.hpp"

namespace shb::io {

using json = nlohmann::ordered_json;

/// Shortest decimal string that parses back to exactly `x`.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double x = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
  auto res = std::from_chars(b, e, x);
  if (res.ec != std::errc() || res.ptr != e) throw InvalidInput("not a number: '" + s + "'");
  return x;
}

/// Writes to a sibling temporary file, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string trajectory_csv(const Trajectory& tr) {
  std::string out;
  for (std::size_t i = 0; i < kTrajectoryColumns.size(); ++i) {
    if (i) out += ',';
    out += kTrajectoryColumns[i];
  }
  out += '\n';
  for (const auto& r : tr.records) {
    const auto vals = r.values();
    out += std::to_string(r.t);
    for (std::size_t i = 1; i < vals.size(); ++i) {
      out += ',';
      out += format_double(vals[i]);
    }
    out += '\n';
  }
  return out;
}

inline std::string plot_csv(const std::vector<PlotPoint>& pts) {
  std::string out = "x,y,series\n";
  for (const auto& p : pts) out += format_double(p.x) + "," + format_double(p.y) + "," + p.series + "\n";
  return out;
}

inline json to_json(const NoiseConstants& k) {
  return json{{"a0", k.a0}, {"a1", k.a1}, {"a2", k.a2}, {"a4", k.a4}, {"a5", k.a5}, {"a6", k.a6},
              {"a7", k.a7}, {"A", k.A},   {"B", k.B},   {"C", k.C}};
}

inline json to_json(const ShbConstants& k) {
  return json{{"beta", k.beta},         {"k0", k.k0},         {"k1", k.k1},
              {"k2", k.k2},             {"k3", k.k3},         {"k4", k.k4},
              {"k5", k.k5},             {"K0", k.K0},         {"bernstein_b", k.bern_b},
              {"bernstein_c", k.bern_c}, {"bernstein_q", k.bern_q}, {"K5_derived", k.K5_derived},
              {"K5_estimate", k.K5_estimate}, {"noise", to_json(k.noise)}};
}

inline json to_json(const RateReport& r) {
  json j{{"fitted_slope", r.fitted_slope},
         {"fitted_stderr", r.fitted_stderr},
         {"predicted_slope", r.predicted_slope},
         {"tolerance", r.tolerance},
         {"one_sided", r.one_sided},
         {"pass", r.pass}};
  if (r.quantile_envelope)
    j["quantile_envelope"] = {{"C", r.quantile_envelope->C},
                              {"exponent", r.quantile_envelope->exponent},
                              {"log_power", r.quantile_envelope->log_power}};
  json v = json::array();
  for (const auto& c : r.per_check_verdicts) v.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  j["per_check_verdicts"] = v;
  return j;
}

inline json to_json(const TrajectoryRecord& r) {
  json j;
  const auto vals = r.values();
  for (std::size_t i = 0; i < vals.size(); ++i) j[kTrajectoryColumns[i]] = vals[i];
  j["t"] = r.t;
  return j;
}

/// Least-squares dataset: one row per sample, features then target; an
/// optional non-numeric first line is treated as a header.
inline std::pair<Matrix, Vector> load_dataset_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    bool numeric = true;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    for (const auto& c : cells) {
      try {
        row.push_back(parse_double(c));
      } catch (const InvalidInput&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw InvalidInput("dataset " + path.string() + ": non-numeric row '" + line + "'");
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw InvalidInput("dataset " + path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInput("dataset " + path.string() + " has no rows");
  if (rows.front().size() < 2) throw InvalidInput("dataset " + path.string() + " needs features and a target");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size() - 1);
  Matrix X(n, d);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    y[i] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
  }
  return {X, y};
}

}  // namespace shb::io
