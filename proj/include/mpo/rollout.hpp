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

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mpo/agent.hpp"
#include "mpo/domain.hpp"
#include "mpo/envproto.hpp"
#include "mpo/hash.hpp"

/// Monte-Carlo rollout engine.
namespace mpo::rollout {

enum class RewardStyle { binary, dense };

struct RolloutJob {
  const TaskInstruction* task = nullptr;
  const MetaPlan* plan = nullptr;
  std::size_t rollout_index = 0;
  std::uint64_t seed = 0;
  int step_limit = 40;
  double temperature = 0.0;
};

inline RewardStyle reward_style(const TaskInstruction& task) {
  return task.param("reward_mode", "binary") == "dense" ? RewardStyle::dense : RewardStyle::binary;
}

inline std::uint64_t job_seed(std::uint64_t base_seed, const std::string& task_id, const MetaPlan* plan,
                              std::size_t index) {
  return rollout_seed(base_seed, task_id, plan ? plan->plan_id : std::string("none"), index);
}

// reset, then (act, step) until done or the step limit. Errors end the episode
// with reward 0 and a note rather than propagating.
inline Trajectory run_rollout(envproto::Environment& env, const agent::AgentBackend& agent, const RolloutJob& job) {
  if (!job.task) throw UsageError("rollout job has no task");
  const TaskInstruction& task = *job.task;
  Trajectory traj;
  traj.task_id = task.task_id;
  if (job.plan) traj.plan_id = job.plan->plan_id;
  traj.seed = job.seed;
  try {
    traj.initial_observation = env.reset(task.task_id, job.seed).text;
    double reward = 0.0;
    bool done = false;
    std::optional<bool> success;
    while (!done && static_cast<int>(traj.steps.size()) < job.step_limit) {
      agent::AgentContext ctx{task, job.plan, traj.initial_observation, traj.steps, job.seed, job.temperature};
      auto turn = agent.act(ctx);
      auto r = env.step(turn.action);
      traj.steps.push_back(TrajectoryStep{std::move(turn.thought), std::move(turn.action), r.observation});
      reward = r.reward;
      done = r.done;
      success = r.success;
    }
    traj.truncated = !done;
    traj.success = done ? success.value_or(reward >= 1.0) : success;
    if (!done && reward_style(task) == RewardStyle::binary) reward = 0.0;
    traj.final_reward = reward;
  } catch (const Error& e) {
    traj.truncated = true;
    traj.final_reward = 0.0;
    traj.success = false;
    traj.note = std::string(e.kind()) + ": " + e.what();
  }
  return traj;
}

// Runs jobs on `workers` threads, each with its own environment from the
// factory. Results come back in job order regardless of completion order.
inline std::vector<Trajectory> run_jobs(const envproto::EnvFactory& factory, const agent::AgentBackend& agent,
                                        const std::vector<RolloutJob>& jobs, std::size_t workers = 1) {
  std::vector<Trajectory> out(jobs.size());
  if (jobs.empty()) return out;
  workers = std::clamp<std::size_t>(workers, 1, jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::optional<std::string> fatal;
  auto work = [&] {
    std::unique_ptr<envproto::Environment> env;
    try {
      env = factory();
    } catch (const Error& e) {
      std::lock_guard lock(err_mu);
      fatal = e.what();
    }
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      if (!env) {
        // Factory failure: every job this worker picks up fails alike.
        Trajectory t;
        t.task_id = jobs[i].task->task_id;
        if (jobs[i].plan) t.plan_id = jobs[i].plan->plan_id;
        t.seed = jobs[i].seed;
        t.truncated = true;
        t.success = false;
        t.note = "environment unavailable: " + fatal.value_or("unknown");
        out[i] = std::move(t);
        continue;
      }
      out[i] = run_rollout(*env, agent, jobs[i]);
    }
  };
  if (workers == 1) {
    work();
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return out;
}

struct QualityRun {
  QualityEstimate estimate;
  std::vector<Trajectory> trajectories;
};

inline std::vector<RolloutJob> quality_jobs(const TaskInstruction& task, const MetaPlan& plan, int n,
                                            std::uint64_t base_seed, int step_limit, double temperature) {
  if (n < 1) throw UsageError("n must be >= 1");
  std::vector<RolloutJob> jobs;
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    jobs.push_back({&task, &plan, idx, job_seed(base_seed, task.task_id, &plan, idx), step_limit, temperature});
  }
  return jobs;
}

inline QualityEstimate aggregate(const std::string& plan_id, const std::vector<Trajectory>& trajectories) {
  std::vector<double> rewards;
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    rewards.push_back(trajectories[i].final_reward);
    if (trajectories[i].note) failed.push_back(i);
  }
  return QualityEstimate::from_rewards(plan_id, std::move(rewards), std::move(failed));
}

struct QualityOptions {
  int n = 5;
  std::uint64_t base_seed = 0;
  int step_limit = 40;
  double temperature = 0.7;
  std::size_t workers = 1;
};

// Q(p): mean final reward over n seeded rollouts of one plan.
inline QualityRun estimate_quality(const TaskInstruction& task, const MetaPlan& plan, const agent::AgentBackend& agent,
                                   const envproto::EnvFactory& factory, const QualityOptions& opt) {
  const auto jobs = quality_jobs(task, plan, opt.n, opt.base_seed, opt.step_limit, opt.temperature);
  auto trajectories = run_jobs(factory, agent, jobs, opt.workers);
  auto estimate = aggregate(plan.plan_id, trajectories);
  return {std::move(estimate), std::move(trajectories)};
}

// Scores many plans with one pool; the result order follows `plans`.
inline std::vector<QualityRun> estimate_many(const std::vector<TaskInstruction>& tasks,
                                             const std::vector<MetaPlan>& plans, const agent::AgentBackend& agent,
                                             const envproto::EnvFactory& factory, const QualityOptions& opt) {
  std::vector<RolloutJob> jobs;
  for (const auto& p : plans) {
    const auto& task = find_task(tasks, p.task_id);
    auto js = quality_jobs(task, p, opt.n, opt.base_seed, opt.step_limit, opt.temperature);
    jobs.insert(jobs.end(), js.begin(), js.end());
  }
  auto all = run_jobs(factory, agent, jobs, opt.workers);
  std::vector<QualityRun> out;
  const auto n = static_cast<std::size_t>(opt.n);
  for (std::size_t k = 0; k < plans.size(); ++k) {
    std::vector<Trajectory> ts(std::make_move_iterator(all.begin() + static_cast<long>(k * n)),
                               std::make_move_iterator(all.begin() + static_cast<long>((k + 1) * n)));
    auto est = aggregate(plans[k].plan_id, ts);
    out.push_back({std::move(est), std::move(ts)});
  }
  return out;
}

struct EvalOptions {
  std::uint64_t base_seed = 0;
  int step_limit = 40;
  double temperature = 0.0;
  std::size_t workers = 1;
};

// One rollout per task. A task missing from plan_map runs planless and is noted.
inline std::vector<Trajectory> evaluate_agent(const std::vector<TaskInstruction>& tasks,
                                              const std::map<std::string, MetaPlan>* plan_map,
                                              const agent::AgentBackend& agent,
                                              const envproto::EnvFactory& factory, const EvalOptions& opt) {
  std::vector<RolloutJob> jobs;
  std::vector<bool> missing;
  for (const auto& t : tasks) {
    const MetaPlan* plan = nullptr;
    if (plan_map) {
      auto it = plan_map->find(t.task_id);
      if (it != plan_map->end()) plan = &it->second;
    }
    missing.push_back(plan_map && !plan);
    jobs.push_back({&t, plan, 0, job_seed(opt.base_seed, t.task_id, plan, 0), opt.step_limit, opt.temperature});
  }
  auto out = run_jobs(factory, agent, jobs, opt.workers);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!missing[i]) continue;
    const std::string flag = "no plan for task; ran planless";
    out[i].note = out[i].note ? flag + "; " + *out[i].note : flag;
  }
  return out;
}

}  // namespace mpo::rollout
