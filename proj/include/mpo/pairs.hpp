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

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mpo/domain.hpp"
#include "mpo/jsonl.hpp"
#include "mpo/planner.hpp"

/// SFT records from seed plans and preference pairs from scored plans.
namespace mpo::pairs {

inline constexpr int kSchemaVersion = 1;

struct SftRecord {
  int schema_version = kSchemaVersion;
  std::string task_id;
  std::string plan_id;
  std::string instruction;
  std::string output;
  bool operator==(const SftRecord&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SftRecord, schema_version, task_id, plan_id, instruction, output)

struct Rejection {
  std::string task_id;
  std::string plan_id;
  std::string reason;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Rejection, task_id, plan_id, reason)

struct SftBuild {
  std::vector<SftRecord> records;
  std::vector<Rejection> rejected;
};

// The <meta_plan> block as the planner wrote it; falls back to the canonical
// rendering when the raw text is missing or unparseable.
inline std::string plan_block(const MetaPlan& plan) {
  const auto open = plan.raw.find(planner::kOpenTag);
  const auto close = open == std::string::npos ? open : plan.raw.find(planner::kCloseTag, open);
  if (close == std::string::npos) return plan.render();
  return plan.raw.substr(open, close + planner::kCloseTag.size() - open);
}

// Only the task text and the plan enter a record; trajectories never do.
inline SftBuild build_sft_dataset(const std::vector<std::pair<TaskInstruction, MetaPlan>>& seeds) {
  SftBuild out;
  for (const auto& [task, plan] : seeds) {
    if (plan.source != PlanSource::manual) {
      const auto report = planner::lint_meta_plan(plan, task.env_id);
      if (!report.clean()) {
        std::vector<std::string> why;
        for (const auto& i : report.issues)
          why.push_back(json(i.code).get<std::string>() + " at step " + std::to_string(i.step) + ": " + i.message);
        out.rejected.push_back({task.task_id, plan.plan_id, text::join(why, "; ")});
        continue;
      }
    }
    out.records.push_back({kSchemaVersion, task.task_id, plan.plan_id, task.text, plan_block(plan)});
  }
  return out;
}

enum class SkipReason { all_equal, too_few_plans };

NLOHMANN_JSON_SERIALIZE_ENUM(SkipReason, {{SkipReason::all_equal, "all_equal"},
                                          {SkipReason::too_few_plans, "too_few_plans"}})

struct Skip {
  std::string task_id;
  SkipReason reason = SkipReason::all_equal;
  std::string detail;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Skip, task_id, reason, detail)

struct Selection {
  std::size_t chosen = 0;
  std::size_t rejected = 0;
};

// Argmax/argmin with the lowest index winning ties; nullopt when all scores are equal.
inline std::optional<Selection> select_extremes(const std::vector<double>& q) {
  if (q.size() < 2) throw DataError("pair selection needs at least 2 plans", "too_few_plans");
  Selection s;
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (q[i] > q[s.chosen]) s.chosen = i;
    if (q[i] < q[s.rejected]) s.rejected = i;
  }
  if (q[s.chosen] == q[s.rejected]) return std::nullopt;
  return s;
}

struct Candidate {
  std::size_t index = 0;
  std::string plan_id;
  std::string text;
  double q = 0.0;
  std::vector<double> rewards;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Candidate, index, plan_id, text, q, rewards)

struct ScoredPair {
  PreferencePair pair;
  std::string env_id;
  std::vector<Candidate> candidates;
  std::size_t chosen_index = 0;
  std::size_t rejected_index = 0;
};

using PairOutcome = std::variant<ScoredPair, Skip>;

// Plan index is the position in `plans`; estimates are matched by plan_id so
// their order does not matter.
inline PairOutcome build_pair(const TaskInstruction& task, const std::vector<QualityEstimate>& estimates,
                              const std::vector<MetaPlan>& plans) {
  if (plans.size() < 2)
    throw DataError("task " + task.task_id + ": pair construction needs at least 2 plans, got " +
                        std::to_string(plans.size()),
                    "too_few_plans");
  std::map<std::string, const QualityEstimate*> by_id;
  for (const auto& e : estimates) {
    if (!by_id.emplace(e.plan_id, &e).second)
      throw DataError("duplicate estimate for plan " + e.plan_id, "schema");
  }
  std::vector<double> q;
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    if (plans[i].task_id != task.task_id)
      throw DataError("plan " + plans[i].plan_id + " does not belong to task " + task.task_id, "mismatch");
    auto it = by_id.find(plans[i].plan_id);
    if (it == by_id.end()) throw DataError("no estimate for plan " + plans[i].plan_id, "missing_estimate");
    q.push_back(it->second->q);
    candidates.push_back({i, plans[i].plan_id, plan_block(plans[i]), it->second->q, it->second->rewards});
    by_id.erase(it);
  }
  if (!by_id.empty())
    throw DataError("estimate for unknown plan " + by_id.begin()->first + " in task " + task.task_id, "mismatch");
  const auto sel = select_extremes(q);
  if (!sel) return Skip{task.task_id, SkipReason::all_equal, "all " + std::to_string(q.size()) + " plans score " + json(q[0]).dump()};
  ScoredPair out;
  out.pair = PreferencePair{task.task_id, task.text, plans[sel->chosen], plans[sel->rejected], q[sel->chosen],
                            q[sel->rejected]};
  out.env_id = task.env_id;
  out.candidates = std::move(candidates);
  out.chosen_index = sel->chosen;
  out.rejected_index = sel->rejected;
  return out;
}

struct ExportMeta {
  std::uint64_t base_seed = 0;
  std::string config_hash;
};

inline json dpo_record(const ScoredPair& sp, const ExportMeta& meta) {
  const auto& p = sp.pair;
  json m = {{"base_seed", meta.base_seed},
            {"env_id", sp.env_id},
            {"config_hash", meta.config_hash},
            {"chosen_plan_id", p.chosen.plan_id},
            {"rejected_plan_id", p.rejected.plan_id},
            {"chosen_index", sp.chosen_index},
            {"rejected_index", sp.rejected_index},
            {"candidates", sp.candidates}};
  return json{{"schema_version", kSchemaVersion},
              {"task_id", p.task_id},
              {"instruction", p.instruction},
              {"chosen", plan_block(p.chosen)},
              {"rejected", plan_block(p.rejected)},
              {"q_chosen", p.q_chosen},
              {"q_rejected", p.q_rejected},
              {"meta", m}};
}

// Checks every pair before writing anything.
inline void export_dpo(const std::vector<ScoredPair>& pairs, const std::filesystem::path& path,
                       const ExportMeta& meta) {
  std::vector<json> records;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i].pair;
    if (!(p.q_chosen > p.q_rejected))
      throw DataError("pair " + std::to_string(i) + " (task " + p.task_id + "): q_chosen " + json(p.q_chosen).dump() +
                          " is not greater than q_rejected " + json(p.q_rejected).dump(),
                      "pair_invariant");
    records.push_back(dpo_record(pairs[i], meta));
  }
  jsonl::write_file(path, records);
}

// Schema check for one exported line; empty result means well-formed.
inline std::vector<std::string> dpo_record_problems(const json& j) {
  std::vector<std::string> out;
  auto need = [&](const char* key, json::value_t type) {
    if (!j.contains(key)) out.push_back(std::string("missing ") + key);
    else if (j[key].type() != type && !(type == json::value_t::number_float && j[key].is_number()) &&
             !(type == json::value_t::number_unsigned && j[key].is_number_integer()))
      out.push_back(std::string("wrong type for ") + key);
  };
  need("schema_version", json::value_t::number_unsigned);
  need("task_id", json::value_t::string);
  need("instruction", json::value_t::string);
  need("chosen", json::value_t::string);
  need("rejected", json::value_t::string);
  need("q_chosen", json::value_t::number_float);
  need("q_rejected", json::value_t::number_float);
  need("meta", json::value_t::object);
  if (!out.empty()) return out;
  if (!(j["q_chosen"].get<double>() > j["q_rejected"].get<double>())) out.push_back("q_chosen <= q_rejected");
  for (const char* k : {"base_seed", "config_hash", "chosen_plan_id", "rejected_plan_id", "candidates"})
    if (!j["meta"].contains(k)) out.push_back(std::string("meta missing ") + k);
  if (out.empty()) {
    std::vector<double> q;
    try {
      // Re-derive Q from the stored per-rollout rewards, not the stored q.
      for (const auto& c : j["meta"]["candidates"])
        q.push_back(QualityEstimate::from_rewards("", c.at("rewards").get<std::vector<double>>()).q);
      const auto sel = select_extremes(q);
      if (!sel || sel->chosen != j["meta"].value("chosen_index", std::size_t{0}) ||
          sel->rejected != j["meta"].value("rejected_index", std::size_t{0}))
        out.push_back("stored candidates do not reproduce the selection");
    } catch (const DataError& e) {
      out.push_back(e.what());
    }
  }
  return out;
}

}  // namespace mpo::pairs
