// Copyright 2026 The MPO Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpo/pipeline.hpp"

namespace {

using mpo::pipeline::Config;
namespace fs = std::filesystem;

void emit_error(const std::string& kind, int code, const std::string& message) {
  std::cerr << mpo::json{{"error", kind}, {"code", code}, {"message", message}}.dump() << std::endl;
}

// Flags shared by every stage; unset flags leave the config value alone.
struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<int> m;
  std::optional<int> n;
  std::optional<double> temperature;
  std::optional<int> step_limit;
  std::optional<std::string> position;
  std::optional<double> beta;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<std::string> model;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file (flags override it)");
    app->add_option("--seed", seed, "base seed");
    app->add_option("--workers", workers, "rollout worker threads");
  }

  Config resolve(const std::string& command) const {
    Config c = mpo::pipeline::load_config(config ? std::optional<fs::path>(*config) : std::nullopt);
    if (seed) c.sampling.base_seed = *seed;
    if (workers) c.workers = *workers;
    if (m) c.sampling.m_plans = *m;
    if (n) c.sampling.n_rollouts = *n;
    if (temperature) {
      if (command == "sample-plans") c.sampling.plan_temperature = *temperature;
      else if (command == "eval-agent") c.sampling.eval_temperature = *temperature;
      else c.sampling.agent_temperature = *temperature;
    }
    if (step_limit) c.sampling.step_limit = *step_limit;
    if (position) c.position = mpo::agent::parse_position(*position);
    if (beta) c.train.beta = *beta;
    if (lr) c.train.learning_rate = *lr;
    if (epochs) c.train.epochs = *epochs;
    if (model) c.endpoint.model = *model;
    c.sampling.validate();
    if (workers && *workers == 0) throw mpo::UsageError("--workers must be >= 1");
    return c;
  }
};

std::optional<fs::path> opt_path(const std::optional<std::string>& s) {
  return s ? std::optional<fs::path>(*s) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta plan optimization pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", mpo::pipeline::kVersion);
  Common common;
  std::function<void(const Config&)> run;
  std::string command;

  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    common.attach(s);
    s->callback([&command, name] { command = name; });
    return s;
  };

  // export-tasks
  std::string tasks_out;
  {
    auto* s = sub("export-tasks", "write the builtin gridhouse task catalog");
    s->add_option("--out", tasks_out, "tasks JSONL")->required();
  }

  // collect-seed
  mpo::pipeline::CollectOptions collect;
  std::string collect_tasks, collect_out;
  std::optional<std::string> collect_traj, collect_overrides;
  {
    auto* s = sub("collect-seed", "summarize expert trajectories into seed meta plans");
    s->add_option("--tasks", collect_tasks, "tasks JSONL")->required();
    s->add_option("--env", collect.env, "environment: gridhouse | cmd:<command>");
    s->add_option("--backend", collect.backend, "planner: template | fixture:<file> | remote[:<url>]");
    s->add_option("--trajectories", collect_traj, "expert trajectories JSONL (default: builtin expert)");
    s->add_option("--overrides", collect_overrides, "manual plans superseding generated ones by plan_id");
    s->add_option("--split", collect.split, "seen | unseen | all");
    s->add_option("--model", common.model, "remote model name");
    s->add_option("--out", collect_out, "output directory")->required();
  }

  // sft-export
  std::string sft_plans, sft_tasks, sft_out;
  {
    auto* s = sub("sft-export", "build the SFT dataset from seed plans");
    s->add_option("--plans", sft_plans, "seed plans JSONL")->required();
    s->add_option("--tasks", sft_tasks, "tasks JSONL")->required();
    s->add_option("--out", sft_out, "output directory")->required();
  }

  // sample-plans
  mpo::pipeline::SampleOptions sample;
  std::string sample_tasks, sample_out;
  {
    auto* s = sub("sample-plans", "sample M candidate meta plans per task");
    s->add_option("--tasks", sample_tasks, "tasks JSONL")->required();
    s->add_option("--backend", sample.backend, "planner: template | fixture:<file> | remote[:<url>]");
    s->add_option("--m", common.m, "plans per task (default 5)");
    s->add_option("--temperature", common.temperature, "sampling temperature (default 0.7)");
    s->add_option("--split", sample.split, "seen | unseen | all");
    s->add_option("--model", common.model, "remote model name");
    s->add_option("--out", sample_out, "output directory")->required();
  }

  // mc-eval
  mpo::pipeline::McEvalOptions mc;
  std::string mc_plans, mc_tasks, mc_out;
  std::optional<std::string> mc_example;
  {
    auto* s = sub("mc-eval", "estimate plan quality by Monte-Carlo rollouts");
    s->add_option("--plans", mc_plans, "plans JSONL")->required();
    s->add_option("--tasks", mc_tasks, "tasks JSONL")->required();
    s->add_option("--agent", mc.agent, "plan_follower[:eps] | fixture:<file> | remote[:<url>]");
    s->add_option("--env", mc.env, "gridhouse | cmd:<command>");
    s->add_option("--n", common.n, "rollouts per plan (default 5)");
    s->add_option("--temperature", common.temperature, "agent temperature (default 0.7)");
    s->add_option("--step-limit", common.step_limit, "max actions per rollout (default 40)");
    s->add_option("--example", mc_example, "one-shot example for remote agents");
    s->add_option("--position", common.position, "instruction | thought | observation");
    s->add_option("--model", common.model, "remote model name");
    s->add_option("--out", mc_out, "output directory")->required();
  }

  // build-pairs
  mpo::pipeline::BuildPairsOptions bp;
  std::string bp_est, bp_out;
  std::optional<std::string> bp_plans, bp_tasks;
  {
    auto* s = sub("build-pairs", "select chosen/rejected plans and export the DPO dataset");
    s->add_option("--estimates", bp_est, "estimates JSONL")->required();
    s->add_option("--plans", bp_plans, "plans JSONL (default: next to estimates)");
    s->add_option("--tasks", bp_tasks, "tasks JSONL (default: next to estimates)");
    s->add_option("--out", bp_out, "output directory")->required();
  }

  // ref-train
  mpo::pipeline::RefTrainOptions rt;
  std::string rt_mode = "dpo", rt_data, rt_out;
  std::optional<std::string> rt_cand, rt_init;
  {
    auto* s = sub("ref-train", "train the reference plan policy");
    s->add_option("--mode", rt_mode, "sft | dpo")->check(CLI::IsMember({"sft", "dpo"}));
    s->add_option("--data", rt_data, "SFT or DPO dataset JSONL")->required();
    s->add_option("--candidates", rt_cand, "sampled plans JSONL (sft candidate sets)");
    s->add_option("--init", rt_init, "initial weights JSON (default zeros)");
    s->add_option("--beta", common.beta, "DPO beta (default 0.1)");
    s->add_option("--lr", common.lr, "learning rate (default 1e-3)");
    s->add_option("--epochs", common.epochs, "epochs (default 3)");
    s->add_option("--out", rt_out, "weights JSON")->required();
  }

  // select-plans
  mpo::pipeline::SelectOptions sel;
  std::string sel_w, sel_plans, sel_tasks, sel_out;
  {
    auto* s = sub("select-plans", "pick the reference policy's most probable plan per task");
    s->add_option("--weights", sel_w, "weights JSON")->required();
    s->add_option("--plans", sel_plans, "candidate plans JSONL")->required();
    s->add_option("--tasks", sel_tasks, "tasks JSONL")->required();
    s->add_option("--out", sel_out, "selected plans JSONL")->required();
  }

  // eval-agent
  mpo::pipeline::EvalOptions ev;
  std::string ev_tasks, ev_out;
  std::optional<std::string> ev_plans, ev_example;
  {
    auto* s = sub("eval-agent", "one greedy rollout per task");
    s->add_option("--tasks", ev_tasks, "tasks JSONL")->required();
    s->add_option("--plans", ev_plans, "plans JSONL, one per task (optional)");
    s->add_option("--position", common.position, "instruction | thought | observation");
    s->add_option("--agent", ev.agent, "plan_follower[:eps] | fixture:<file> | remote[:<url>]");
    s->add_option("--env", ev.env, "gridhouse | cmd:<command>");
    s->add_option("--split", ev.split, "seen | unseen | all");
    s->add_option("--label", ev.label, "plan source label in reports");
    s->add_option("--temperature", common.temperature, "decoding temperature (default 0)");
    s->add_option("--step-limit", common.step_limit, "max actions per rollout (default 40)");
    s->add_option("--example", ev_example, "one-shot example for remote agents");
    s->add_option("--model", common.model, "remote model name");
    s->add_option("--out", ev_out, "output directory")->required();
  }

  // report
  mpo::pipeline::ReportOptions rep;
  std::vector<std::string> rep_runs;
  std::string rep_out;
  {
    auto* s = sub("report", "metrics tables over eval-agent runs");
    s->add_option("--runs", rep_runs, "eval-agent output directories")->required();
    s->add_option("--out", rep_out, "output directory")->required();
  }

  // env-check
  std::string check_endpoint, check_task = "gh-seen-00";
  std::optional<std::string> check_tasks;
  {
    auto* s = sub("env-check", "run the protocol conformance suite against an environment command");
    s->add_option("--endpoint", check_endpoint, "command line, or cmd:<command>, or gridhouse")->required();
    s->add_option("--tasks", check_tasks, "tasks JSONL for builtin endpoints");
    s->add_option("--task-id", check_task, "task used for the probe episode");
  }

  // judge
  mpo::pipeline::JudgeOptions jd;
  std::string jd_in, jd_out;
  {
    auto* s = sub("judge", "compare DPO and SFT plans with a remote judge model");
    s->add_option("--pairs-of-plans", jd_in, "JSONL {task_id, task, dpo, sft}")->required();
    s->add_option("--endpoint", jd.endpoint, "chat endpoint base url");
    s->add_option("--model", common.model, "judge model name");
    s->add_option("--out", jd_out, "output directory")->required();
  }

  // serve-gridhouse
  std::optional<std::string> serve_tasks;
  {
    auto* s = sub("serve-gridhouse", "serve gridhouse over the stdio protocol");
    s->add_option("--tasks", serve_tasks, "tasks JSONL (default: builtin catalog)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", 2, e.what());
    return 2;
  }

  try {
    const Config cfg = common.resolve(command);
    namespace pl = mpo::pipeline;
    auto tasks_or_catalog = [](const std::optional<std::string>& p) {
      return p ? pl::load_tasks(*p) : mpo::gridhouse::task_catalog();
    };
    if (command == "export-tasks") {
      mpo::jsonl::write_file(tasks_out, mpo::gridhouse::task_catalog());
    } else if (command == "collect-seed") {
      collect.tasks = collect_tasks;
      collect.out = collect_out;
      collect.trajectories = opt_path(collect_traj);
      collect.overrides = opt_path(collect_overrides);
      const auto r = pl::collect_seed(collect, cfg);
      std::cout << "seed plans: " << r.plans.size() << ", errors: " << r.errors.size() << "\n";
    } else if (command == "sft-export") {
      const auto r = pl::sft_export({sft_plans, sft_tasks, sft_out}, cfg);
      std::cout << "sft records: " << r.records.size() << ", rejected: " << r.rejected.size() << "\n";
    } else if (command == "sample-plans") {
      sample.tasks = sample_tasks;
      sample.out = sample_out;
      const auto r = pl::sample_plans(sample, cfg);
      std::cout << "plans: " << r.plans.size() << ", errors: " << r.errors.size() << "\n";
    } else if (command == "mc-eval") {
      mc.plans = mc_plans;
      mc.tasks = mc_tasks;
      mc.out = mc_out;
      mc.example = opt_path(mc_example);
      const auto r = pl::mc_eval(mc, cfg);
      std::cout << "estimates: " << r.size() << "\n";
    } else if (command == "build-pairs") {
      bp.estimates = bp_est;
      bp.plans = opt_path(bp_plans);
      bp.tasks = opt_path(bp_tasks);
      bp.out = bp_out;
      const auto r = pl::build_pairs(bp, cfg);
      std::cout << "pairs: " << r.pairs.size() << ", skipped: " << r.skips.size() << "\n";
      for (const auto& s : r.skips)
        std::cerr << "skip " << s.task_id << ": " << mpo::json(s.reason).get<std::string>() << " (" << s.detail
                  << ")\n";
    } else if (command == "ref-train") {
      rt.mode = rt_mode == "sft" ? mpo::refopt::Mode::sft : mpo::refopt::Mode::dpo;
      rt.data = rt_data;
      rt.candidates = opt_path(rt_cand);
      rt.init = opt_path(rt_init);
      rt.out = rt_out;
      const auto r = pl::ref_train(rt, cfg);
      std::cout << "final loss: " << (r.loss_curve.empty() ? 0.0 : r.loss_curve.back()) << "\n";
    } else if (command == "select-plans") {
      const auto r = pl::select_plans({sel_w, sel_plans, sel_tasks, sel_out}, cfg);
      std::cout << "selected: " << r.size() << "\n";
    } else if (command == "eval-agent") {
      ev.tasks = ev_tasks;
      ev.plans = opt_path(ev_plans);
      ev.example = opt_path(ev_example);
      ev.out = ev_out;
      const auto r = pl::eval_agent(ev, cfg);
      std::cout << "average reward: " << mpo::metrics::average_reward(r) << "\n";
    } else if (command == "report") {
      for (const auto& r : rep_runs) rep.runs.emplace_back(r);
      rep.out = rep_out;
      std::cout << mpo::metrics::report_table(pl::report(rep, cfg));
    } else if (command == "env-check") {
      const std::string spec = mpo::text::starts_with(check_endpoint, "cmd:") || check_endpoint == "gridhouse"
                                   ? check_endpoint
                                   : "cmd:" + check_endpoint;
      const auto tasks = tasks_or_catalog(check_tasks);
      mpo::envproto::ConformanceOptions opt;
      opt.task_id = check_task;
      opt.seed = cfg.sampling.base_seed;
      const auto r = mpo::envproto::conformance_check(mpo::envproto::EnvEndpoint::parse(spec, pl::env_of(tasks)), tasks, opt);
      std::cout << mpo::json(r.checks).dump(2) << "\n";
      if (!r.all_passed()) {
        for (const auto& c : r.checks)
          if (!c.passed) throw mpo::BackendError("conformance check '" + c.name + "' failed: " + c.detail, "conformance");
      }
    } else if (command == "judge") {
      jd.pairs_of_plans = jd_in;
      jd.out = jd_out;
      const auto r = pl::judge(jd, cfg);
      std::cout << "verdicts: " << r.size() << "\n";
    } else if (command == "serve-gridhouse") {
      return mpo::envproto::serve_gridhouse(std::cin, std::cout, tasks_or_catalog(serve_tasks));
    }
  } catch (const mpo::Error& e) {
    emit_error(e.kind(), e.exit_code(), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    emit_error("internal", 3, e.what());
    return 3;
  }
  return 0;
}
