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

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpo/domain.hpp"
#include "mpo/jsonl.hpp"

/// Evaluation metrics and report tables.
namespace mpo::metrics {

inline constexpr int kReportSchemaVersion = 1;

enum class SuccessMode { binary, dense };

inline double average_reward(const std::vector<Trajectory>& ts) {
  if (ts.empty()) throw DataError("average_reward of an empty set", "empty_set");
  double sum = 0.0;
  for (const auto& t : ts) sum += t.final_reward;
  return sum / static_cast<double>(ts.size());
}

struct SuccessResult {
  double rate = 0.0;
  // True when some dense trajectory lacked a success flag and reward == 1 was used.
  bool used_fallback = false;
};

inline SuccessResult success_rate_detail(const std::vector<Trajectory>& ts, SuccessMode mode) {
  if (ts.empty()) throw DataError("success_rate of an empty set", "empty_set");
  SuccessResult out;
  double hits = 0.0;
  for (const auto& t : ts) {
    bool ok;
    if (mode == SuccessMode::binary) {
      ok = t.final_reward == 1.0;
    } else if (t.success) {
      ok = *t.success;
    } else {
      ok = t.final_reward >= 1.0;
      out.used_fallback = true;
    }
    hits += ok ? 1.0 : 0.0;
  }
  out.rate = hits / static_cast<double>(ts.size());
  return out;
}

inline double success_rate(const std::vector<Trajectory>& ts, SuccessMode mode) {
  return success_rate_detail(ts, mode).rate;
}

inline double reward_per_step(const Trajectory& t) {
  if (t.step_count() == 0) throw DataError("reward_per_step of a trajectory with no steps (" + t.task_id + ")", "empty_trajectory");
  return t.final_reward / static_cast<double>(t.step_count());
}

inline double reward_per_step(const std::vector<Trajectory>& ts) {
  if (ts.empty()) throw DataError("reward_per_step of an empty set", "empty_set");
  double sum = 0.0;
  for (const auto& t : ts) sum += reward_per_step(t);
  return sum / static_cast<double>(ts.size());
}

// One evaluated configuration: trajectories of an agent under a plan source on one split.
struct RunTable {
  std::string agent;
  std::string plan_source;
  std::string split;
  std::vector<Trajectory> trajectories;
  SuccessMode mode = SuccessMode::binary;
};

struct ReportRow {
  std::string agent;
  std::string plan_source;
  std::string split;
  std::size_t tasks = 0;
  double average_reward = 0.0;
  double success_rate = 0.0;
  double reward_per_step = 0.0;
  bool success_fallback = false;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ReportRow, agent, plan_source, split, tasks, average_reward, success_rate,
                                   reward_per_step, success_fallback)

struct Report {
  std::vector<ReportRow> rows;
  std::vector<std::string> notices;
  json manifest;
};

inline ReportRow row_for(const RunTable& run) {
  const auto sr = success_rate_detail(run.trajectories, run.mode);
  return {run.agent,
          run.plan_source,
          run.split,
          run.trajectories.size(),
          average_reward(run.trajectories),
          sr.rate,
          reward_per_step(run.trajectories),
          sr.used_fallback};
}

// Rows for every (agent, plan_source) x split; absent or empty splits are
// omitted with a notice.
inline Report build_report(const std::vector<RunTable>& runs, const std::vector<std::string>& splits,
                           json manifest = json::object()) {
  Report report;
  report.manifest = std::move(manifest);
  std::vector<std::pair<std::string, std::string>> configs;
  for (const auto& r : runs) {
    std::pair<std::string, std::string> key{r.agent, r.plan_source};
    if (std::find(configs.begin(), configs.end(), key) == configs.end()) configs.push_back(key);
  }
  for (const auto& [agent, source] : configs) {
    for (const auto& split : splits) {
      const RunTable* found = nullptr;
      for (const auto& r : runs)
        if (r.agent == agent && r.plan_source == source && r.split == split) found = &r;
      if (!found || found->trajectories.empty()) {
        report.notices.push_back("no trajectories for agent=" + agent + " plan_source=" + source + " split=" + split +
                                 "; row omitted");
        continue;
      }
      auto row = row_for(*found);
      if (row.success_fallback)
        report.notices.push_back("agent=" + agent + " plan_source=" + source + " split=" + split +
                                 ": success flags missing, used reward == 1.0 threshold");
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

inline json report_json(const Report& r) {
  return json{{"schema_version", kReportSchemaVersion},
              {"rows", r.rows},
              {"notices", r.notices},
              {"manifest", r.manifest}};
}

inline std::string fixed(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline std::string report_table(const Report& r) {
  std::vector<std::vector<std::string>> cells = {
      {"agent", "plan_source", "split", "tasks", "avg_reward", "success", "reward/step"}};
  for (const auto& row : r.rows)
    cells.push_back({row.agent, row.plan_source, row.split, std::to_string(row.tasks), fixed(row.average_reward),
                     fixed(row.success_rate), fixed(row.reward_per_step)});
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& c : cells)
    for (std::size_t i = 0; i < c.size(); ++i) width[i] = std::max(width[i], c[i].size());
  std::string out;
  for (const auto& c : cells) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      out += c[i];
      if (i + 1 < c.size()) out += std::string(width[i] - c[i].size() + 2, ' ');
    }
    out += '\n';
  }
  for (const auto& n : r.notices) out += "note: " + n + "\n";
  return out;
}

inline std::string report_csv(const Report& r) {
  std::string out = "agent,plan_source,split,tasks,average_reward,success_rate,reward_per_step\n";
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& row : r.rows)
    out += quote(row.agent) + "," + quote(row.plan_source) + "," + quote(row.split) + "," +
           std::to_string(row.tasks) + "," + json(row.average_reward).dump() + "," + json(row.success_rate).dump() +
           "," + json(row.reward_per_step).dump() + "\n";
  return out;
}

}  // namespace mpo::metrics
