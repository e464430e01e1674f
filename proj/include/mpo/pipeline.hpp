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

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mpo/agent.hpp"
#include "mpo/domain.hpp"
#include "mpo/envproto.hpp"
#include "mpo/gridhouse.hpp"
#include "mpo/jsonl.hpp"
#include "mpo/metrics.hpp"
#include "mpo/pairs.hpp"
#include "mpo/planner.hpp"
#include "mpo/refopt.hpp"
#include "mpo/rollout.hpp"

/// Pipeline stages behind the command line tool. Every stage reads and writes
/// the JSONL schemas of the domain module plus a manifest.json per output.
namespace mpo::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

struct Config {
  SamplingConfig sampling;
  refopt::TrainConfig train;
  double epsilon = 0.15;
  agent::PlanPosition position = agent::PlanPosition::instruction;
  llm::ChatEndpoint endpoint{"", "", "MPO_API_KEY", 60.0, 2};
  // 0 picks one worker per hardware thread.
  std::size_t workers = 0;

  std::size_t resolved_workers() const {
    if (workers) return workers;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }
};

inline json config_json(const Config& c) {
  return json{{"sampling", c.sampling}, {"train", c.train},           {"epsilon", c.epsilon},
              {"position", c.position}, {"endpoint", c.endpoint}};
}

inline Config config_from_json(const json& j) {
  Config c;
  try {
    if (j.contains("sampling")) c.sampling = j["sampling"].get<SamplingConfig>();
    if (j.contains("train")) c.train = j["train"].get<refopt::TrainConfig>();
    c.epsilon = j.value("epsilon", c.epsilon);
    if (j.contains("position")) c.position = agent::parse_position(j["position"].get<std::string>());
    if (j.contains("endpoint")) c.endpoint = j["endpoint"].get<llm::ChatEndpoint>();
    c.workers = j.value("workers", std::size_t{0});
  } catch (const json::exception& e) {
    throw DataError(std::string("bad config: ") + e.what(), "config");
  }
  c.sampling.validate();
  return c;
}

inline Config load_config(const std::optional<fs::path>& path) {
  if (!path) return Config{};
  json j;
  try {
    j = json::parse(jsonl::read_text(*path));
  } catch (const json::parse_error& e) {
    throw DataError(path->string() + ": " + e.what(), "config");
  }
  return config_from_json(j);
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// Hash of the resolved configuration; worker count is excluded because it never changes results.
inline std::string config_hash(const Config& c) { return hex64(stable_hash(std::string_view(config_json(c).dump()))); }

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json manifest(const std::string& command, const Config& cfg, json extra = json::object()) {
  json m = {{"command", command},
            {"config", config_json(cfg)},
            {"config_hash", config_hash(cfg)},
            {"base_seed", cfg.sampling.base_seed},
            {"versions",
             {{"mpo", kVersion}, {"schema", pairs::kSchemaVersion}, {"grounding", agent::gridhouse_grounding().version}}},
            {"created_at", utc_timestamp()}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  return m;
}

inline void write_manifest(const fs::path& dir, const json& m) { jsonl::write_text(dir / "manifest.json", m.dump(2) + "\n"); }

inline std::vector<TaskInstruction> load_tasks(const fs::path& path) {
  auto tasks = jsonl::read_records<TaskInstruction>(path);
  const auto violations = validate_dataset(tasks);
  if (!violations.empty())
    throw DataError(path.string() + ": record " + std::to_string(violations.front().record + 1) + ": " +
                        violations.front().message,
                    "invalid_tasks");
  return tasks;
}

inline std::vector<TaskInstruction> filter_split(const std::vector<TaskInstruction>& tasks, const std::string& split) {
  if (split == "all" || split.empty()) return tasks;
  if (split != "seen" && split != "unseen") throw UsageError("split must be seen, unseen or all");
  std::vector<TaskInstruction> out;
  for (const auto& t : tasks)
    if (to_string(t.split) == split) out.push_back(t);
  return out;
}

inline std::vector<MetaPlan> load_plans(const fs::path& path) { return jsonl::read_records<MetaPlan>(path); }

inline std::string env_of(const std::vector<TaskInstruction>& tasks, const std::string& fallback = gridhouse::kEnvId) {
  return tasks.empty() ? fallback : tasks.front().env_id;
}

// "template" | "fixture:<file>" | "remote" | "remote:<base_url>"
inline std::unique_ptr<planner::PlannerBackend> make_planner(const std::string& spec, const Config& cfg) {
  if (spec == "template") return std::make_unique<planner::TemplateBackend>();
  if (text::starts_with(spec, "fixture:")) return std::make_unique<planner::FixtureBackend>(spec.substr(8));
  if (spec == "remote" || text::starts_with(spec, "remote:")) {
    auto ep = cfg.endpoint;
    if (spec.size() > 7) ep.base_url = spec.substr(7);
    if (ep.base_url.empty()) throw UsageError("remote backend needs a base url (remote:<url> or config endpoint)");
    return std::make_unique<planner::RemoteBackend>(ep);
  }
  throw UsageError("unknown planner backend '" + spec + "'");
}

inline std::string render_example(const Trajectory& t) {
  std::string out = t.initial_observation;
  for (const auto& s : t.steps) out += "\nAction: " + s.action.raw + "\nObservation: " + s.observation.text;
  return out;
}

// One-shot demonstration for the agent prompt. Gridhouse builds it from the
// expert policy on a task outside the catalog.
inline std::string default_example(const std::string& env_id) {
  if (prompts::env_family(env_id) != prompts::EnvFamily::gridhouse)
    throw UsageError("no builtin one-shot example for " + env_id + "; pass --example");
  gridhouse::GridTask g{"example", gridhouse::Template::put_one, "book", "table 1", gridhouse::RewardMode::binary};
  return render_example(gridhouse::oracle_trajectory(g, 7));
}

// "plan_follower[:eps]" | "fixture:<file>" | "remote[:<base_url>]"
inline std::unique_ptr<agent::AgentBackend> make_agent(const std::string& spec, const Config& cfg,
                                                       const std::string& env_id,
                                                       const std::optional<fs::path>& example) {
  if (spec == "plan_follower" || text::starts_with(spec, "plan_follower:")) {
    double eps = cfg.epsilon;
    if (spec.size() > 14) {
      try {
        std::size_t used = 0;
        eps = std::stod(spec.substr(14), &used);
        if (used != spec.size() - 14) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw UsageError("bad epsilon in agent spec '" + spec + "'");
      }
    }
    return std::make_unique<agent::PlanFollower>(eps);
  }
  if (text::starts_with(spec, "fixture:")) return std::make_unique<agent::FixtureAgent>(spec.substr(8));
  if (spec == "remote" || text::starts_with(spec, "remote:")) {
    auto ep = cfg.endpoint;
    if (spec.size() > 7) ep.base_url = spec.substr(7);
    if (ep.base_url.empty()) throw UsageError("remote agent needs a base url (remote:<url> or config endpoint)");
    const std::string ex = example ? jsonl::read_text(*example) : default_example(env_id);
    return std::make_unique<agent::RemoteAgent>(ep, ex, cfg.position);
  }
  throw UsageError("unknown agent '" + spec + "'");
}

inline envproto::EnvEndpoint make_endpoint(const std::string& spec, const std::vector<TaskInstruction>& tasks) {
  return envproto::EnvEndpoint::parse(spec, env_of(tasks));
}

// ---- collect-seed ---------------------------------------------------------

struct CollectOptions {
  fs::path tasks;
  std::string split = "all";
  std::string env = "gridhouse";
  std::string backend = "template";
  std::optional<fs::path> trajectories;
  std::optional<fs::path> overrides;
  fs::path out;
};

struct CollectResult {
  std::vector<MetaPlan> plans;
  std::vector<planner::PlanLintReport> lint;
  std::vector<json> errors;
};

inline CollectResult collect_seed(const CollectOptions& o, const Config& cfg) {
  const auto tasks = filter_split(load_tasks(o.tasks), o.split);
  const auto endpoint = make_endpoint(o.env, tasks);
  std::map<std::string, Trajectory> provided;
  if (o.trajectories)
    for (auto& t : jsonl::read_records<Trajectory>(*o.trajectories)) provided.emplace(t.task_id, std::move(t));
  const auto backend = make_planner(o.backend, cfg);
  CollectResult r;
  std::vector<json> prompts;
  for (const auto& task : tasks) {
    Trajectory traj;
    if (auto it = provided.find(task.task_id); it != provided.end()) {
      traj = it->second;
    } else if (endpoint.kind == envproto::EndpointKind::builtin && task.env_id == gridhouse::kEnvId) {
      traj = gridhouse::oracle_trajectory(gridhouse::GridTask::from_instruction(task), cfg.sampling.base_seed);
    } else {
      r.errors.push_back({{"task_id", task.task_id}, {"error", "no trajectory provided and no builtin expert"}});
      continue;
    }
    const std::string prompt = planner::render_collection_prompt(task, traj, task.env_id);
    prompts.push_back({{"task_id", task.task_id}, {"prompt", prompt}});
    try {
      auto parsed = planner::parse_meta_plan_with_notes(backend->collect(task, prompt));
      auto plan = planner::finalize(std::move(parsed), task.task_id, 0, PlanSource::seed);
      plan.plan_id = task.task_id + "#seed";
      r.plans.push_back(std::move(plan));
    } catch (const Error& e) {
      r.errors.push_back({{"task_id", task.task_id}, {"error", e.what()}});
    }
  }
  if (o.overrides) r.plans = planner::apply_overrides(std::move(r.plans), load_plans(*o.overrides));
  for (const auto& p : r.plans) r.lint.push_back(planner::lint_meta_plan(p, find_task(tasks, p.task_id).env_id));
  jsonl::write_file(o.out / "seed_plans.jsonl", r.plans);
  jsonl::write_file(o.out / "lint.jsonl", r.lint);
  jsonl::write_file(o.out / "collect_errors.jsonl", r.errors);
  jsonl::write_file(o.out / "prompts.jsonl", prompts);
  write_manifest(o.out, manifest("collect-seed", cfg,
                                 {{"backend", backend->describe()}, {"env", o.env}, {"split", o.split},
                                  {"plans", r.plans.size()}, {"errors", r.errors.size()}}));
  return r;
}

// ---- sft-export -------------------------------------------------------------

struct SftExportOptions {
  fs::path plans;
  fs::path tasks;
  fs::path out;
};

inline pairs::SftBuild sft_export(const SftExportOptions& o, const Config& cfg) {
  const auto tasks = load_tasks(o.tasks);
  std::vector<std::pair<TaskInstruction, MetaPlan>> seeds;
  for (const auto& p : load_plans(o.plans)) seeds.emplace_back(find_task(tasks, p.task_id), p);
  auto build = pairs::build_sft_dataset(seeds);
  jsonl::write_file(o.out / "sft.jsonl", build.records);
  jsonl::write_file(o.out / "rejected.jsonl", build.rejected);
  write_manifest(o.out, manifest("sft-export", cfg,
                                 {{"records", build.records.size()}, {"rejected", build.rejected.size()}}));
  return build;
}

// ---- sample-plans -----------------------------------------------------------

struct SampleOptions {
  fs::path tasks;
  std::string split = "all";
  std::string backend = "template";
  fs::path out;
};

struct SampleRun {
  std::vector<MetaPlan> plans;
  std::vector<json> errors;
};

inline SampleRun sample_plans(const SampleOptions& o, const Config& cfg) {
  const auto tasks = filter_split(load_tasks(o.tasks), o.split);
  const auto backend = make_planner(o.backend, cfg);
  SampleRun r;
  std::vector<planner::PlanLintReport> lint;
  for (const auto& task : tasks) {
    auto res = planner::sample_plans(*backend, task, cfg.sampling.m_plans, cfg.sampling.plan_temperature,
                                     stable_hash(cfg.sampling.base_seed, std::string_view(task.task_id)));
    for (auto& p : res.plans) {
      lint.push_back(planner::lint_meta_plan(p, task.env_id));
      r.plans.push_back(std::move(p));
    }
    for (const auto& e : res.errors)
      r.errors.push_back({{"task_id", task.task_id}, {"index", e.index}, {"error", e.message}});
  }
  jsonl::write_file(o.out / "plans.jsonl", r.plans);
  jsonl::write_file(o.out / "lint.jsonl", lint);
  jsonl::write_file(o.out / "sample_errors.jsonl", r.errors);
  write_manifest(o.out, manifest("sample-plans", cfg,
                                 {{"backend", backend->describe()}, {"split", o.split}, {"plans", r.plans.size()},
                                  {"errors", r.errors.size()}}));
  return r;
}

// ---- mc-eval ----------------------------------------------------------------

struct McEvalOptions {
  fs::path plans;
  fs::path tasks;
  std::string agent = "plan_follower";
  std::string env = "gridhouse";
  std::optional<fs::path> example;
  fs::path out;
};

inline std::vector<QualityEstimate> mc_eval(const McEvalOptions& o, const Config& cfg) {
  const auto tasks = load_tasks(o.tasks);
  const auto plans = load_plans(o.plans);
  const auto backend = make_agent(o.agent, cfg, env_of(tasks), o.example);
  const auto factory = envproto::make_factory(make_endpoint(o.env, tasks), tasks);
  rollout::QualityOptions q{cfg.sampling.n_rollouts, cfg.sampling.base_seed, cfg.sampling.step_limit,
                            cfg.sampling.agent_temperature, cfg.resolved_workers()};
  const auto runs = rollout::estimate_many(tasks, plans, *backend, factory, q);
  std::vector<QualityEstimate> estimates;
  std::vector<Trajectory> trajectories;
  for (const auto& r : runs) {
    estimates.push_back(r.estimate);
    trajectories.insert(trajectories.end(), r.trajectories.begin(), r.trajectories.end());
  }
  std::set<std::string> used;
  for (const auto& p : plans) used.insert(p.task_id);
  std::vector<TaskInstruction> task_subset;
  for (const auto& t : tasks)
    if (used.count(t.task_id)) task_subset.push_back(t);
  jsonl::write_file(o.out / "estimates.jsonl", estimates);
  jsonl::write_file(o.out / "trajectories.jsonl", trajectories);
  jsonl::write_file(o.out / "plans.jsonl", plans);
  jsonl::write_file(o.out / "tasks.jsonl", task_subset);
  write_manifest(o.out, manifest("mc-eval", cfg,
                                 {{"agent", backend->describe()}, {"env", o.env}, {"plans", plans.size()},
                                  {"n", cfg.sampling.n_rollouts}}));
  return estimates;
}

// ---- build-pairs ------------------------------------------------------------

struct BuildPairsOptions {
  fs::path estimates;
  // Default to plans.jsonl / tasks.jsonl next to the estimates file.
  std::optional<fs::path> plans;
  std::optional<fs::path> tasks;
  fs::path out;
};

struct PairsRun {
  std::vector<pairs::ScoredPair> pairs;
  std::vector<pairs::Skip> skips;
};

inline PairsRun build_pairs(const BuildPairsOptions& o, const Config& cfg) {
  const fs::path dir = o.estimates.parent_path();
  const auto tasks = load_tasks(o.tasks.value_or(dir / "tasks.jsonl"));
  const auto plans = load_plans(o.plans.value_or(dir / "plans.jsonl"));
  const auto estimates = jsonl::read_records<QualityEstimate>(o.estimates);
  std::map<std::string, std::vector<MetaPlan>> by_task;
  std::vector<std::string> order;
  for (const auto& p : plans) {
    if (!by_task.count(p.task_id)) order.push_back(p.task_id);
    by_task[p.task_id].push_back(p);
  }
  std::map<std::string, std::string> task_of_plan;
  for (const auto& p : plans) task_of_plan[p.plan_id] = p.task_id;
  std::map<std::string, std::vector<QualityEstimate>> est_by_task;
  for (const auto& e : estimates) {
    auto it = task_of_plan.find(e.plan_id);
    if (it == task_of_plan.end()) throw DataError("estimate for unknown plan " + e.plan_id, "mismatch");
    est_by_task[it->second].push_back(e);
  }
  PairsRun r;
  for (const auto& task_id : order) {
    const auto& task = find_task(tasks, task_id);
    const auto& ps = by_task[task_id];
    if (ps.size() < 2) {
      r.skips.push_back({task_id, pairs::SkipReason::too_few_plans, std::to_string(ps.size()) + " plan(s)"});
      continue;
    }
    auto outcome = pairs::build_pair(task, est_by_task[task_id], ps);
    if (auto* sp = std::get_if<pairs::ScoredPair>(&outcome)) r.pairs.push_back(std::move(*sp));
    else r.skips.push_back(std::get<pairs::Skip>(outcome));
  }
  pairs::export_dpo(r.pairs, o.out / "pairs.jsonl", {cfg.sampling.base_seed, config_hash(cfg)});
  jsonl::write_file(o.out / "skips.jsonl", r.skips);
  write_manifest(o.out, manifest("build-pairs", cfg, {{"pairs", r.pairs.size()}, {"skips", r.skips.size()}}));
  return r;
}

// ---- ref-train --------------------------------------------------------------

struct RefTrainOptions {
  refopt::Mode mode = refopt::Mode::dpo;
  fs::path data;
  std::optional<fs::path> candidates;
  std::optional<fs::path> init;
  fs::path out;
};

inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> n = {"steps_over_10", "abstractness", "mean_len_over_50",
                                             "has_locate",    "has_process",  "bias"};
  return n;
}

inline refopt::Vec load_weights(const fs::path& path) {
  try {
    const auto j = json::parse(jsonl::read_text(path));
    auto w = j.at("w").get<refopt::Vec>();
    if (w.size() != refopt::kFeatureDim) throw DataError(path.string() + ": expected 6 weights", "schema");
    return w;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what(), "schema");
  }
}

inline refopt::Vec features_of_text(const std::string& text, const std::string& env_id) {
  return refopt::plan_features(planner::parse_meta_plan(text), env_id);
}

inline std::vector<refopt::DpoExample> load_dpo_examples(const fs::path& path) {
  std::vector<refopt::DpoExample> out;
  for (const auto& j : jsonl::read_file(path)) {
    if (const auto problems = pairs::dpo_record_problems(j); !problems.empty())
      throw DataError(path.string() + ": " + j.value("task_id", "?") + ": " + problems.front(), "schema");
    const auto& meta = j["meta"];
    const std::string env = meta.value("env_id", std::string(gridhouse::kEnvId));
    refopt::DpoExample ex;
    for (const auto& c : meta["candidates"]) ex.candidates.push_back(features_of_text(c.at("text"), env));
    ex.chosen = meta.at("chosen_index").get<std::size_t>();
    ex.rejected = meta.at("rejected_index").get<std::size_t>();
    out.push_back(std::move(ex));
  }
  return out;
}

// Candidates for one SFT record: the record's own plan (the target, index 0)
// followed by the task's sampled plans; without sampled plans, every output in
// the dataset.
inline std::vector<refopt::SftExample> load_sft_examples(const fs::path& path, const std::optional<fs::path>& candidates,
                                                         const std::string& env_id = gridhouse::kEnvId) {
  const auto records = jsonl::read_records<pairs::SftRecord>(path);
  std::map<std::string, std::vector<refopt::Vec>> sampled;
  if (candidates)
    for (const auto& p : load_plans(*candidates)) sampled[p.task_id].push_back(refopt::plan_features(p, env_id));
  std::vector<refopt::Vec> pool;
  for (const auto& r : records) pool.push_back(features_of_text(r.output, env_id));
  std::vector<refopt::SftExample> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    refopt::SftExample ex;
    if (candidates) {
      ex.candidates.push_back(pool[i]);
      for (const auto& f : sampled[records[i].task_id]) ex.candidates.push_back(f);
      ex.target = 0;
    } else {
      ex.candidates = pool;
      ex.target = i;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline refopt::TrainResult ref_train(const RefTrainOptions& o, const Config& cfg) {
  refopt::Vec w0 = o.init ? load_weights(*o.init) : refopt::Vec(refopt::kFeatureDim, 0.0);
  refopt::TrainResult res;
  std::size_t n = 0;
  if (o.mode == refopt::Mode::dpo) {
    const auto data = load_dpo_examples(o.data);
    n = data.size();
    if (data.empty()) {
      // No pairs: nothing to learn, the policy stays at its reference.
      res.w = res.w_ref = w0;
    } else {
      res = refopt::train_dpo(cfg.train, w0, data);
    }
  } else {
    const auto data = load_sft_examples(o.data, o.candidates);
    n = data.size();
    res = refopt::train_sft(cfg.train, w0, data);
  }
  json out = {{"mode", o.mode},         {"features", feature_names()}, {"w", res.w},
              {"w_ref", res.w_ref},     {"loss_curve", res.loss_curve}, {"train", cfg.train},
              {"examples", n},          {"config_hash", config_hash(cfg)}};
  jsonl::write_text(o.out, out.dump(2) + "\n");
  return res;
}

// ---- select-plans -----------------------------------------------------------

struct SelectOptions {
  fs::path weights;
  fs::path plans;
  fs::path tasks;
  fs::path out;
};

// The reference policy's most probable plan per task.
inline std::vector<MetaPlan> select_plans(const SelectOptions& o, const Config&) {
  const auto w = load_weights(o.weights);
  const auto tasks = load_tasks(o.tasks);
  std::map<std::string, std::vector<MetaPlan>> by_task;
  std::vector<std::string> order;
  for (auto& p : load_plans(o.plans)) {
    if (!by_task.count(p.task_id)) order.push_back(p.task_id);
    by_task[p.task_id].push_back(std::move(p));
  }
  std::vector<MetaPlan> out;
  for (const auto& id : order) {
    const auto& env = find_task(tasks, id).env_id;
    std::vector<refopt::Vec> feats;
    for (const auto& p : by_task[id]) feats.push_back(refopt::plan_features(p, env));
    out.push_back(by_task[id][refopt::argmax_plan(w, feats)]);
  }
  jsonl::write_file(o.out, out);
  return out;
}

// ---- eval-agent -------------------------------------------------------------

struct EvalOptions {
  fs::path tasks;
  std::string split = "all";
  std::optional<fs::path> plans;
  std::string agent = "plan_follower";
  std::string env = "gridhouse";
  std::optional<fs::path> example;
  std::string label;
  fs::path out;
};

inline std::vector<Trajectory> eval_agent(const EvalOptions& o, const Config& cfg) {
  const auto tasks = filter_split(load_tasks(o.tasks), o.split);
  if (tasks.empty()) throw DataError("no tasks in split " + o.split, "empty_set");
  std::optional<std::map<std::string, MetaPlan>> plan_map;
  if (o.plans) {
    plan_map.emplace();
    for (auto& p : load_plans(*o.plans)) plan_map->emplace(p.task_id, std::move(p));
  }
  const auto backend = make_agent(o.agent, cfg, env_of(tasks), o.example);
  const auto factory = envproto::make_factory(make_endpoint(o.env, tasks), tasks);
  rollout::EvalOptions eo{cfg.sampling.base_seed, cfg.sampling.step_limit, cfg.sampling.eval_temperature,
                          cfg.resolved_workers()};
  const auto trajectories = rollout::evaluate_agent(tasks, plan_map ? &*plan_map : nullptr, *backend, factory, eo);
  json splits = json::object();
  for (const auto& t : tasks) splits[t.task_id] = to_string(t.split);
  const std::string plan_source = o.label.empty() ? (o.plans ? o.plans->stem().string() : "none") : o.label;
  jsonl::write_file(o.out / "trajectories.jsonl", trajectories);
  json summary = {{"agent", backend->describe()},
                  {"plan_source", plan_source},
                  {"position", cfg.position},
                  {"average_reward", metrics::average_reward(trajectories)},
                  {"reward_per_step", metrics::reward_per_step(trajectories)},
                  {"task_splits", splits}};
  jsonl::write_text(o.out / "summary.json", summary.dump(2) + "\n");
  write_manifest(o.out, manifest("eval-agent", cfg, summary));
  return trajectories;
}

// ---- report -----------------------------------------------------------------

struct ReportOptions {
  std::vector<fs::path> runs;
  fs::path out;
};

inline metrics::Report report(const ReportOptions& o, const Config& cfg) {
  std::vector<metrics::RunTable> tables;
  for (const auto& dir : o.runs) {
    json summary;
    try {
      summary = json::parse(jsonl::read_text(dir / "summary.json"));
    } catch (const json::parse_error& e) {
      throw DataError((dir / "summary.json").string() + ": " + e.what(), "schema");
    }
    const auto trajectories = jsonl::read_records<Trajectory>(dir / "trajectories.jsonl");
    const auto splits = summary.value("task_splits", json::object());
    for (const std::string split : {"seen", "unseen"}) {
      metrics::RunTable t{summary.value("agent", "?"), summary.value("plan_source", "?"), split, {}, metrics::SuccessMode::binary};
      for (const auto& tr : trajectories)
        if (splits.value(tr.task_id, std::string()) == split) t.trajectories.push_back(tr);
      tables.push_back(std::move(t));
    }
  }
  json m = manifest("report", cfg);
  m.erase("created_at");
  auto rep = metrics::build_report(tables, {"seen", "unseen"}, m);
  jsonl::write_text(o.out / "report.json", metrics::report_json(rep).dump(2) + "\n");
  jsonl::write_text(o.out / "report.txt", metrics::report_table(rep));
  jsonl::write_text(o.out / "report.csv", metrics::report_csv(rep));
  return rep;
}

// ---- judge ------------------------------------------------------------------

inline std::string render_judge_prompt(const std::string& task, const std::string& dpo, const std::string& sft) {
  return text::substitute(prompts::kJudge, {{"task", task}, {"dpo", dpo}, {"sft", sft}});
}

inline json parse_verdict(const std::string& reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw DataError("judge reply has no JSON object", "unparseable_response");
  json j;
  try {
    j = json::parse(reply.substr(open, close - open + 1));
  } catch (const json::parse_error& e) {
    throw DataError(std::string("judge reply is not valid JSON: ") + e.what(), "unparseable_response");
  }
  json out = json::object();
  for (const char* k : {"correctness_better", "followability_better", "standardization_better", "overall_better"}) {
    const std::string v = j.value(k, "");
    if (v != "dpo" && v != "sft" && v != "tie")
      throw DataError(std::string("judge verdict field ") + k + " must be dpo, sft or tie", "unparseable_response");
    out[k] = v;
  }
  return out;
}

struct JudgeOptions {
  fs::path pairs_of_plans;
  std::string endpoint;
  fs::path out;
};

// Input records: {"task_id", "task", "dpo", "sft"}.
inline std::vector<json> judge(const JudgeOptions& o, const Config& cfg) {
  auto ep = cfg.endpoint;
  if (!o.endpoint.empty()) ep.base_url = o.endpoint;
  llm::ChatClient client(ep);
  std::vector<json> verdicts;
  for (const auto& j : jsonl::read_file(o.pairs_of_plans)) {
    for (const char* k : {"task", "dpo", "sft"})
      if (!j.contains(k) || !j[k].is_string())
        throw DataError(o.pairs_of_plans.string() + ": record needs string field " + k, "schema");
    const auto prompt = render_judge_prompt(j["task"], j["dpo"], j["sft"]);
    auto v = parse_verdict(client.complete({{"user", prompt}}, 0.0, 1).front());
    v["task_id"] = j.value("task_id", "");
    verdicts.push_back(std::move(v));
  }
  jsonl::write_file(o.out / "verdicts.jsonl", verdicts);
  write_manifest(o.out, manifest("judge", cfg, {{"records", verdicts.size()}}));
  return verdicts;
}

}  // namespace mpo::pipeline
