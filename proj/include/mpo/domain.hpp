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

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mpo/error.hpp"
#include "mpo/jsonl.hpp"
#include "mpo/text.hpp"

/// Core records shared by every pipeline stage, with their JSONL schemas.
namespace mpo {

enum class Split { seen, unseen };

NLOHMANN_JSON_SERIALIZE_ENUM(Split, {{Split::seen, "seen"}, {Split::unseen, "unseen"}})

inline std::string to_string(Split s) { return s == Split::seen ? "seen" : "unseen"; }

/// A task u bound to an environment.
struct TaskInstruction {
  std::string task_id;
  std::string text;
  std::string env_id;
  Split split = Split::seen;
  std::map<std::string, std::string> params;

  std::string param(const std::string& key, const std::string& fallback = "") const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }

  bool operator==(const TaskInstruction&) const = default;
};

inline void to_json(json& j, const TaskInstruction& t) {
  j = json{{"task_id", t.task_id}, {"text", t.text}, {"env_id", t.env_id},
           {"split", t.split}, {"params", t.params}};
}

inline void from_json(const json& j, TaskInstruction& t) {
  j.at("task_id").get_to(t.task_id);
  j.at("text").get_to(t.text);
  j.at("env_id").get_to(t.env_id);
  j.at("split").get_to(t.split);
  t.params = j.value("params", std::map<std::string, std::string>{});
}

// Household action grammar shared by gridhouse and ALFWorld-style environments.
enum class ActionKind {
  go_to, take, put, open, close, toggle, clean, heat, cool, look, inventory, examine, unparsed
};

NLOHMANN_JSON_SERIALIZE_ENUM(ActionKind, {{ActionKind::go_to, "go_to"},
                                          {ActionKind::take, "take"},
                                          {ActionKind::put, "put"},
                                          {ActionKind::open, "open"},
                                          {ActionKind::close, "close"},
                                          {ActionKind::toggle, "toggle"},
                                          {ActionKind::clean, "clean"},
                                          {ActionKind::heat, "heat"},
                                          {ActionKind::cool, "cool"},
                                          {ActionKind::look, "look"},
                                          {ActionKind::inventory, "inventory"},
                                          {ActionKind::examine, "examine"},
                                          {ActionKind::unparsed, "unparsed"}})

inline ActionKind classify_household_action(const std::string& raw) {
  const std::string s = text::lower(text::trim(raw));
  const auto words = text::split_words(s);
  if (words.empty()) return ActionKind::unparsed;
  const std::string& v = words[0];
  if (v == "go" && words.size() >= 3 && words[1] == "to") return ActionKind::go_to;
  if (v == "take" && s.find(" from ") != std::string::npos) return ActionKind::take;
  if (v == "put" && s.find(" in/on ") != std::string::npos) return ActionKind::put;
  if (v == "open" && words.size() >= 2) return ActionKind::open;
  if (v == "close" && words.size() >= 2) return ActionKind::close;
  if (v == "toggle" && words.size() >= 2) return ActionKind::toggle;
  if (v == "clean" && s.find(" with ") != std::string::npos) return ActionKind::clean;
  if (v == "heat" && s.find(" with ") != std::string::npos) return ActionKind::heat;
  if (v == "cool" && s.find(" with ") != std::string::npos) return ActionKind::cool;
  if (s == "look") return ActionKind::look;
  if (s == "inventory") return ActionKind::inventory;
  if (v == "examine" && words.size() >= 2) return ActionKind::examine;
  return ActionKind::unparsed;
}

struct Action {
  std::string raw;
  ActionKind kind = ActionKind::unparsed;

  Action() = default;
  explicit Action(std::string text) : raw(std::move(text)), kind(classify_household_action(raw)) {
    if (raw.empty()) throw DataError("action text must be non-empty", "invalid_action");
  }
  Action(std::string text, ActionKind k) : raw(std::move(text)), kind(k) {
    if (raw.empty()) throw DataError("action text must be non-empty", "invalid_action");
  }

  bool operator==(const Action&) const = default;
};

inline void to_json(json& j, const Action& a) { j = json{{"raw", a.raw}, {"kind", a.kind}}; }
inline void from_json(const json& j, Action& a) {
  a = Action(j.at("raw").get<std::string>(), j.value("kind", ActionKind::unparsed));
}

struct Observation {
  std::string text;
  bool terminal = false;
  bool operator==(const Observation&) const = default;
};

inline void to_json(json& j, const Observation& o) {
  j = json{{"text", o.text}, {"terminal", o.terminal}};
}
inline void from_json(const json& j, Observation& o) {
  j.at("text").get_to(o.text);
  o.terminal = j.value("terminal", false);
}

struct TrajectoryStep {
  std::optional<std::string> thought;
  Action action;
  Observation observation;
  bool operator==(const TrajectoryStep&) const = default;
};

inline void to_json(json& j, const TrajectoryStep& s) {
  j = json{{"action", s.action}, {"observation", s.observation}};
  j["thought"] = s.thought ? json(*s.thought) : json(nullptr);
}
inline void from_json(const json& j, TrajectoryStep& s) {
  s.thought = j.contains("thought") && !j["thought"].is_null()
                  ? std::optional<std::string>(j["thought"].get<std::string>())
                  : std::nullopt;
  j.at("action").get_to(s.action);
  j.at("observation").get_to(s.observation);
}

/// One rollout e = (u, a1, o1, ..., an) with its final reward r(u, e).
struct Trajectory {
  std::string task_id;
  std::optional<std::string> plan_id;
  std::string initial_observation;
  std::vector<TrajectoryStep> steps;
  double final_reward = 0.0;
  std::uint64_t seed = 0;
  bool truncated = false;
  // Environment-reported success flag, when the environment provides one.
  std::optional<bool> success;
  // Free-form annotation: transport errors, missing-plan fallbacks.
  std::optional<std::string> note;

  std::size_t step_count() const noexcept { return steps.size(); }

  bool operator==(const Trajectory&) const = default;
};

inline std::vector<std::string> trajectory_violations(const Trajectory& t) {
  std::vector<std::string> v;
  if (!(t.final_reward >= 0.0 && t.final_reward <= 1.0)) v.push_back("final_reward outside [0,1]");
  for (std::size_t i = 0; i + 1 < t.steps.size(); ++i)
    if (t.steps[i].observation.terminal) v.push_back("terminal observation before last step");
  return v;
}

inline void to_json(json& j, const Trajectory& t) {
  j = json{{"task_id", t.task_id},
           {"plan_id", t.plan_id ? json(*t.plan_id) : json(nullptr)},
           {"initial_observation", t.initial_observation},
           {"steps", t.steps},
           {"step_count", t.step_count()},
           {"final_reward", t.final_reward},
           {"seed", t.seed},
           {"truncated", t.truncated},
           {"success", t.success ? json(*t.success) : json(nullptr)},
           {"note", t.note ? json(*t.note) : json(nullptr)}};
}

inline void from_json(const json& j, Trajectory& t) {
  j.at("task_id").get_to(t.task_id);
  t.plan_id = j.contains("plan_id") && !j["plan_id"].is_null()
                  ? std::optional<std::string>(j["plan_id"].get<std::string>())
                  : std::nullopt;
  t.initial_observation = j.value("initial_observation", "");
  j.at("steps").get_to(t.steps);
  j.at("final_reward").get_to(t.final_reward);
  t.seed = j.value("seed", std::uint64_t{0});
  t.truncated = j.value("truncated", false);
  t.success = j.contains("success") && !j["success"].is_null()
                  ? std::optional<bool>(j["success"].get<bool>())
                  : std::nullopt;
  t.note = j.contains("note") && !j["note"].is_null()
               ? std::optional<std::string>(j["note"].get<std::string>())
               : std::nullopt;
  if (j.contains("step_count") && j["step_count"].get<std::size_t>() != t.steps.size())
    throw DataError("trajectory " + t.task_id + ": step_count does not match steps", "schema");
  if (!(t.final_reward >= 0.0 && t.final_reward <= 1.0))
    throw DataError("trajectory " + t.task_id + ": final_reward outside [0,1]", "schema");
}

enum class PlanSource { seed, sampled, manual };

NLOHMANN_JSON_SERIALIZE_ENUM(PlanSource, {{PlanSource::seed, "seed"},
                                          {PlanSource::sampled, "sampled"},
                                          {PlanSource::manual, "manual"}})

/// An ordered list of abstract step texts p.
struct MetaPlan {
  std::string plan_id;
  std::string task_id;
  std::vector<std::string> steps;
  std::string raw;
  PlanSource source = PlanSource::sampled;

  // "Step 1: ...\nStep 2: ..." without the surrounding tags.
  std::string steps_text() const {
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (i) out += '\n';
      out += "Step " + std::to_string(i + 1) + ": " + steps[i];
    }
    return out;
  }

  // Wire format understood by parse_meta_plan.
  std::string render() const { return "<meta_plan>\n" + steps_text() + "\n</meta_plan>"; }

  bool operator==(const MetaPlan&) const = default;
};

inline void to_json(json& j, const MetaPlan& p) {
  j = json{{"plan_id", p.plan_id}, {"task_id", p.task_id}, {"steps", p.steps},
           {"raw", p.raw},         {"source", p.source}};
}
inline void from_json(const json& j, MetaPlan& p) {
  j.at("plan_id").get_to(p.plan_id);
  j.at("task_id").get_to(p.task_id);
  j.at("steps").get_to(p.steps);
  p.raw = j.value("raw", "");
  p.source = j.value("source", PlanSource::sampled);
  if (p.steps.empty()) throw DataError("plan " + p.plan_id + " has no steps", "schema");
}

inline std::string plan_id_for(const std::string& task_id, std::size_t index) {
  return task_id + "#p" + std::to_string(index);
}

/// Monte-Carlo plan quality Q(p): the mean of N rollout rewards.
struct QualityEstimate {
  std::string plan_id;
  std::vector<double> rewards;
  double q = 0.0;
  // Indices of rollouts that ended in an environment or agent error.
  std::vector<std::size_t> failed;

  static QualityEstimate from_rewards(std::string plan_id, std::vector<double> rewards,
                                      std::vector<std::size_t> failed = {}) {
    if (rewards.empty()) throw DataError("quality estimate needs at least one reward", "schema");
    double sum = 0.0;
    for (double r : rewards) {
      if (!(r >= 0.0 && r <= 1.0)) throw DataError("reward outside [0,1]", "schema");
      sum += r;
    }
    const double q = sum / static_cast<double>(rewards.size());
    return QualityEstimate{std::move(plan_id), std::move(rewards), q, std::move(failed)};
  }

  bool operator==(const QualityEstimate&) const = default;
};

inline void to_json(json& j, const QualityEstimate& e) {
  j = json{{"plan_id", e.plan_id}, {"rewards", e.rewards}, {"q", e.q}, {"failed", e.failed}};
}
inline void from_json(const json& j, QualityEstimate& e) {
  auto rebuilt = QualityEstimate::from_rewards(j.at("plan_id").get<std::string>(),
                                               j.at("rewards").get<std::vector<double>>(),
                                               j.value("failed", std::vector<std::size_t>{}));
  const double stored = j.at("q").get<double>();
  if (std::abs(stored - rebuilt.q) > 1e-12)
    throw DataError("estimate " + rebuilt.plan_id + ": stored q disagrees with rewards", "schema");
  rebuilt.q = stored;
  e = std::move(rebuilt);
}

struct PreferencePair {
  std::string task_id;
  std::string instruction;
  MetaPlan chosen;
  MetaPlan rejected;
  double q_chosen = 0.0;
  double q_rejected = 0.0;
  bool operator==(const PreferencePair&) const = default;
};

struct SamplingConfig {
  int m_plans = 5;
  int n_rollouts = 5;
  double plan_temperature = 0.7;
  double agent_temperature = 0.7;
  double eval_temperature = 0.0;
  int step_limit = 40;
  std::uint64_t base_seed = 0;

  void validate() const {
    if (m_plans < 1) throw UsageError("m_plans must be >= 1");
    if (n_rollouts < 1) throw UsageError("n_rollouts must be >= 1");
    if (step_limit < 1) throw UsageError("step_limit must be >= 1");
  }
  bool operator==(const SamplingConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SamplingConfig, m_plans, n_rollouts,
                                                plan_temperature, agent_temperature,
                                                eval_temperature, step_limit, base_seed)

enum class ViolationCode { duplicate_id, empty_field };

NLOHMANN_JSON_SERIALIZE_ENUM(ViolationCode, {{ViolationCode::duplicate_id, "duplicate_id"},
                                             {ViolationCode::empty_field, "empty_field"}})

struct Violation {
  std::size_t record = 0;
  std::string task_id;
  ViolationCode code = ViolationCode::empty_field;
  std::string message;
};

inline void to_json(json& j, const Violation& v) {
  j = json{{"record", v.record}, {"task_id", v.task_id}, {"code", v.code}, {"message", v.message}};
}

inline std::vector<Violation> validate_dataset(const std::vector<TaskInstruction>& records) {
  std::vector<Violation> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.task_id.empty())
      out.push_back({i, r.task_id, ViolationCode::empty_field, "task_id is empty"});
    if (r.text.empty())
      out.push_back({i, r.task_id, ViolationCode::empty_field, "text is empty"});
    if (!r.task_id.empty() && !seen.insert(r.task_id).second)
      out.push_back({i, r.task_id, ViolationCode::duplicate_id, "duplicate task_id " + r.task_id});
  }
  return out;
}

inline const TaskInstruction& find_task(const std::vector<TaskInstruction>& tasks,
                                        const std::string& task_id) {
  for (const auto& t : tasks)
    if (t.task_id == task_id) return t;
  throw DataError("unknown task_id " + task_id, "unknown_task");
}

}  // namespace mpo
