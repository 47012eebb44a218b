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

// shbrate: configuration-driven runs, rate sweeps and the verification suites.
//
// Exit codes: 0 pass, 1 check failure, 2 invalid input.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shb/shb.hpp"

namespace fs = std::filesystem;
using shb::io::json;

namespace {

constexpr int kPass = 0;
constexpr int kCheckFailure = 1;
constexpr int kInvalidInput = 2;

struct CommonFlags {
  std::string config;
  std::string out;
  int jobs = 1;
  long seeds = 0;
  std::optional<std::uint64_t> master_seed;
  bool unsafe = false;
  bool plot_data = false;
};

shb::ExperimentConfig load_with_overrides(const CommonFlags& f) {
  shb::ExperimentConfig c = shb::load_config(f.config);
  if (f.seeds > 0) c.seeds = f.seeds;
  if (f.master_seed) c.master_seed = *f.master_seed;
  if (!f.out.empty()) c.output = f.out;
  shb::validate_config(c);
  return c;
}

std::string seed_file(long k) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "trajectory_seed%04ld.csv", k);
  return buf;
}

/// Median-path slope of the last-iterate gap over the final 30% of log t.
std::optional<shb::FitResult> median_slope(const shb::Ensemble& ens) {
  const auto& recs = ens.front().records;
  std::vector<double> t, m;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    std::vector<double> col;
    for (const auto& tr : ens.trajectories) col.push_back(tr.records[k].F_gap);
    const double med = shb::median(col);
    if (!(med > 0.0)) continue;
    t.push_back(static_cast<double>(recs[k].t));
    m.push_back(med);
  }
  if (t.size() < 3 || t.back() / t.front() < 10.0) return std::nullopt;
  return shb::fit_rate(t, m, 0.3);
}

int cmd_run(const CommonFlags& f) {
  const shb::ExperimentConfig c = load_with_overrides(f);
  const shb::StochasticOracle orc = shb::build_oracle(c);
  const shb::ShbConstants k = shb::compute_shb_constants(orc, c.beta, c.K5);
  const shb::StepSchedule s = shb::build_schedule(c, k);
  const double gamma = orc.base().gamma();

  std::optional<shb::ScheduleVerdict> gate;
  if (!f.unsafe) {
    gate = shb::validate_schedule(s, k, gamma, std::max(10L, c.T));
    if (!gate->pass) {
      std::cerr << "schedule rejected:";
      for (const auto& g : gate->failures) std::cerr << " [" << g << "]";
      std::cerr << "\n";
      return kInvalidInput;
    }
  }

  shb::EnsembleSpec sp;
  sp.schedule = s;
  sp.beta = c.beta;
  sp.T = c.T;
  sp.w0 = shb::build_w0(c, orc.base());
  sp.n_seeds = c.seeds;
  sp.master_seed = c.master_seed;
  sp.run = shb::build_run_options(c);
  sp.jobs = f.jobs;
  sp.unsafe = true;
  sp.K5_override = c.K5;
  sp.config_hash = shb::config_hash(c);
  shb::Ensemble ens = shb::run_ensemble(orc, sp);
  ens.gate = gate;

  const fs::path out = c.output;
  for (std::size_t i = 0; i < ens.size(); ++i)
    shb::io::write_atomic(out / seed_file(static_cast<long>(i)), shb::io::trajectory_csv(ens.trajectories[i]));

  json summary;
  summary["config_hash"] = sp.config_hash;
  summary["unsafe"] = f.unsafe;
  if (f.unsafe) summary["warning"] = "UNSAFE: schedule gates bypassed; rate claims do not apply";
  summary["objective"] = orc.base().name();
  summary["oracle"] = shb::to_string(orc.kind());
  summary["gamma"] = gamma;
  summary["L"] = orc.base().L();
  summary["schedule"] = {{"c", s.c}, {"p", s.p}, {"alpha0", s.alpha0}, {"mode", shb::to_string(s.mode)}};
  summary["beta"] = c.beta;
  summary["T"] = c.T;
  summary["master_seed"] = c.master_seed;
  summary["constants"] = shb::io::to_json(k);

  bool blowup = false;
  json seeds = json::array();
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const auto& tr = ens.trajectories[i];
    json j{{"seed_index", i}, {"seed", shb::seed_for(c.master_seed, i)}, {"file", seed_file(static_cast<long>(i))}};
    if (!tr.records.empty()) j["final"] = shb::io::to_json(tr.records.back());
    if (!tr.ok()) {
      blowup = true;
      j["error"] = tr.error;
      j["blowup_index"] = *tr.blowup_index;
    }
    seeds.push_back(j);
  }
  summary["seeds"] = seeds;

  bool checks_ok = !blowup;
  std::vector<shb::PlotPoint> plot;
  if (!blowup) {
    if (const auto fit = median_slope(ens)) summary["slope"] = {{"value", fit->slope}, {"stderr", fit->stderr_slope}};
    try {
      shb::AsRateOptions o;
      o.algo = c.beta > 0.0 ? shb::Algo::shb : shb::Algo::sgd;
      const shb::Target target = orc.base().convex() ? shb::Target::last_iterate : shb::Target::min_grad;
      const shb::RateReport rep = shb::as_rate_check(ens, target, 0.05, o);
      summary["as_rate"] = shb::io::to_json(rep);
      summary["as_rate"]["target"] = shb::to_string(target);
      checks_ok = checks_ok && rep.pass;
      for (auto p : rep.plot) {
        p.series = "as_rate:" + p.series;
        plot.push_back(p);
      }
    } catch (const std::exception& e) {
      summary["as_rate"] = {{"skipped", e.what()}};
    }
    if (s.mode == shb::ScheduleMode::hp_rate && c.horizons.size() >= 3) {
      try {
        const shb::RateReport rep = shb::hp_envelope_check(ens, c.delta, c.horizons);
        summary["hp_envelope"] = shb::io::to_json(rep);
        checks_ok = checks_ok && rep.pass;
        for (auto p : rep.plot) {
          p.series = "hp_envelope:" + p.series;
          plot.push_back(p);
        }
        if (!c.tau_grid.empty()) {
          json sums = json::array();
          for (const auto& v : shb::hp_sums_check(ens, c.delta, c.tau_grid, c.horizons, {}, &plot)) {
            sums.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
            checks_ok = checks_ok && v.pass;
          }
          summary["hp_sums"] = sums;
        }
      } catch (const std::exception& e) {
        summary["hp_envelope"] = {{"skipped", e.what()}};
      }
    }
  }
  summary["status"] = blowup ? "blowup" : (checks_ok ? "pass" : "fail");
  shb::io::write_atomic(out / "summary.json", summary.dump(2) + "\n");
  if (f.plot_data) shb::io::write_atomic(out / "plot.csv", shb::io::plot_csv(plot));
  std::cout << "run: " << ens.size() << " seed(s), status " << summary["status"].get<std::string>() << ", output in "
            << out.string() << "\n";
  return checks_ok ? kPass : kCheckFailure;
}

int cmd_sweep(const CommonFlags& f) {
  const shb::ExperimentConfig base = load_with_overrides(f);
  if (base.sweep_p.empty() || base.sweep_beta.empty())
    throw shb::InvalidInput("sweep: sweep.p and sweep.beta must be non-empty");
  std::vector<double> gammas = base.sweep_gamma;
  if (gammas.empty()) gammas.push_back(shb::build_objective(base).gamma());

  std::string csv = "algo,beta,gamma,p,predicted_exponent,fitted_exponent,fitted_stderr,path_trend,pass,status,reason\n";
  std::vector<shb::PlotPoint> plot;
  int valid = 0, passed = 0;
  const auto fmt = shb::io::format_double;
  for (double beta : base.sweep_beta) {
    for (double gamma : gammas) {
      for (double p : base.sweep_p) {
        shb::ExperimentConfig c = base;
        c.beta = beta;
        c.p = p;
        const std::string algo = beta > 0.0 ? "shb" : "sgd";
        std::string row = algo + "," + fmt(beta) + "," + fmt(gamma) + "," + fmt(p) + ",";
        auto skip = [&](const std::string& why) { csv += row + ",,,,false,skipped," + why + "\n"; };
        if (c.objective == "power") {
          c.gamma = gamma;
        } else if (gamma != shb::build_objective(c).gamma()) {
          skip("objective gamma differs; use the power objective for gamma < 1");
          continue;
        }
        const shb::StochasticOracle orc = shb::build_oracle(c);
        const shb::ShbConstants k = shb::compute_shb_constants(orc, beta, c.K5);
        const shb::StepSchedule s = shb::build_schedule(c, k);
        const shb::ScheduleVerdict gate = shb::validate_schedule(s, k, gamma, std::max(10L, c.T));
        if (!gate.pass && !f.unsafe) {
          std::string why;
          for (const auto& g : gate.failures) why += (why.empty() ? "" : "; ") + g;
          skip("\"" + why + "\"");
          continue;
        }
        shb::EnsembleSpec sp;
        sp.schedule = s;
        sp.beta = beta;
        sp.T = c.T;
        sp.w0 = shb::build_w0(c, orc.base());
        sp.n_seeds = c.seeds;
        sp.master_seed = c.master_seed;
        sp.run = shb::build_run_options(c);
        sp.jobs = f.jobs;
        sp.unsafe = true;
        const shb::Ensemble ens = shb::run_ensemble(orc, sp);
        shb::AsRateOptions o;
        o.algo = beta > 0.0 ? shb::Algo::shb : shb::Algo::sgd;
        const shb::Target target = orc.base().convex() ? shb::Target::last_iterate : shb::Target::min_grad;
        try {
          const shb::RateReport rep = shb::as_rate_check(ens, target, 0.05, o);
          ++valid;
          passed += rep.pass;
          csv += row + fmt(rep.predicted_slope) + "," + fmt(rep.fitted_slope) + "," + fmt(rep.fitted_stderr) + ",\"" +
                 rep.per_check_verdicts.front().detail + "\"," + (rep.pass ? "true" : "false") + "," +
                 (f.unsafe ? "unsafe" : "ok") + ",\n";
          for (auto pt : rep.plot) {
            pt.series = algo + "(beta=" + fmt(beta) + ",gamma=" + fmt(gamma) + ",p=" + fmt(p) + ")";
            plot.push_back(pt);
          }
        } catch (const std::exception& e) {
          ++valid;
          csv += row + ",,,,false,error,\"" + std::string(e.what()) + "\"\n";
        }
      }
    }
  }
  const fs::path out = base.output;
  shb::io::write_atomic(out / "sweep.csv", csv);
  if (f.plot_data) shb::io::write_atomic(out / "plot.csv", shb::io::plot_csv(plot));
  std::cout << "sweep: " << passed << "/" << valid << " valid cells pass, table in " << (out / "sweep.csv").string()
            << "\n";
  if (valid == 0) return kCheckFailure;
  return static_cast<double>(passed) >= 0.9 * static_cast<double>(valid) ? kPass : kCheckFailure;
}

int cmd_verify(const std::string& suite, const CommonFlags& f, const std::vector<int>& only, double tamper_K0,
               double tamper_k5) {
  shb::acceptance::SuiteOptions o;
  o.jobs = f.jobs;
  if (f.master_seed) o.master_seed = *f.master_seed;
  o.tamper.K0_scale = tamper_K0;
  o.tamper.k5_scale = tamper_k5;
  if (suite == "unit") {
    o.only = {1, 2, 3, 4, 8};
  } else if (suite != "paper") {
    throw shb::InvalidInput("verify: suite must be unit or paper");
  }
  if (!only.empty()) o.only = std::set<int>(only.begin(), only.end());
  shb::acceptance::Suite s(o);
  json report = json::array();
  const auto results = s.run_all([&](const shb::acceptance::CriterionResult& r) {
    std::printf("[%s] criterion %d %s (%.1fs): %s\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds,
                r.detail.c_str());
    std::fflush(stdout);
    report.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  });
  bool ok = !results.empty();
  for (const auto& r : results) ok = ok && r.pass;
  if (o.tamper.active()) std::printf("note: constant table tampered (K0 x%g, k5 x%g)\n", tamper_K0, tamper_k5);
  std::printf("%s suite: %s\n", suite.c_str(), ok ? "PASS" : "FAIL");
  if (!f.out.empty())
    shb::io::write_atomic(fs::path(f.out) / ("verify_" + suite + ".json"),
                          json{{"suite", suite}, {"pass", ok}, {"criteria", report}}.dump(2) + "\n");
  return ok ? kPass : kCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shbrate: stochastic heavy-ball rate experiments"};
  app.require_subcommand(1);
  CommonFlags f;
  std::uint64_t master = 0;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", f.config, "experiment file (key = value sections)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--master-seed", master, "master seed for the per-seed streams");
  };

  auto* run = app.add_subcommand("run", "run an ensemble and write trajectories plus a summary");
  add_common(run, true);
  run->add_option("--seeds", f.seeds, "number of seeds (overrides the config)")->check(CLI::PositiveNumber);
  run->add_flag("--unsafe", f.unsafe, "bypass schedule gates (labelled in outputs)");
  run->add_flag("--plot-data", f.plot_data, "also write plot.csv with (x, y, series) rows");

  auto* sweep = app.add_subcommand("sweep", "rate table over the sweep grid of a config");
  add_common(sweep, true);
  sweep->add_option("--seeds", f.seeds, "seeds per cell (overrides the config)")->check(CLI::PositiveNumber);
  sweep->add_flag("--unsafe", f.unsafe, "run cells that fail the gates (labelled in outputs)");
  sweep->add_flag("--plot-data", f.plot_data, "also write plot.csv with (x, y, series) rows");

  auto* verify = app.add_subcommand("verify", "property suite (unit) or acceptance ensembles (paper)");
  std::string suite;
  std::vector<int> only;
  double tamper_K0 = 1.0, tamper_k5 = 1.0;
  verify->add_option("suite", suite, "unit | paper")->required()->check(CLI::IsMember({"unit", "paper"}));
  add_common(verify, false);
  verify->add_option("--only", only, "restrict to these criterion ids")->delimiter(',');
  verify->add_option("--tamper-K0", tamper_K0, "fault injection: scale every K0 by this factor");
  verify->add_option("--tamper-k5", tamper_k5, "fault injection: scale every k5 by this factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kInvalidInput;
  }
  for (auto* sub : {run, sweep, verify})
    if (sub->count("--master-seed")) f.master_seed = master;

  try {
    if (*run) return cmd_run(f);
    if (*sweep) return cmd_sweep(f);
    return cmd_verify(suite, f, only, tamper_K0, tamper_k5);
  } catch (const shb::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const shb::PreconditionFailed& e) {
    std::cerr << "precondition failed: " << e.what() << "\n";
    return kCheckFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailure;
  }
}
