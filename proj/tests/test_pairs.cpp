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

#include <gtest/gtest.h>

#include <algorithm>

#include "mpo/pairs.hpp"
#include "support/helpers.hpp"

namespace mpo::pairs {
namespace {

using test::catalog_task;

// Independent first-index scan.
std::optional<Selection> reference_select(const std::vector<double>& q) {
  const auto hi = std::max_element(q.begin(), q.end());
  const auto lo = std::min_element(q.begin(), q.end());
  if (*hi == *lo) return std::nullopt;
  return Selection{static_cast<std::size_t>(hi - q.begin()), static_cast<std::size_t>(lo - q.begin())};
}

std::vector<double> random_q(Rng& rng) {
  const std::size_t n = 2 + rng.below(7);
  // A coarse grid makes ties common.
  const std::size_t levels = 1 + rng.below(6);
  std::vector<double> q(n);
  for (auto& x : q) x = static_cast<double>(rng.below(levels)) / 5.0;
  return q;
}

TEST(SelectExtremes, Examples) {
  const auto s = select_extremes({0.2, 0.8, 0.4, 0.8, 0.0});
  ASSERT_TRUE(s);
  EXPECT_EQ(s->chosen, 1u);
  EXPECT_EQ(s->rejected, 4u);
  EXPECT_FALSE(select_extremes({0.6, 0.6, 0.6}));
  const auto two = select_extremes({0.0, 1.0});
  ASSERT_TRUE(two);
  EXPECT_EQ(two->chosen, 1u);
  EXPECT_EQ(two->rejected, 0u);
  EXPECT_THROW(select_extremes({1.0}), DataError);
  EXPECT_THROW(select_extremes({}), DataError);
}

TEST(SelectExtremes, MatchesFirstIndexScan) {
  Rng rng(404);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto q = random_q(rng);
    const auto got = select_extremes(q);
    const auto want = reference_select(q);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (!got) continue;
    EXPECT_EQ(got->chosen, want->chosen);
    EXPECT_EQ(got->rejected, want->rejected);
    EXPECT_GT(q[got->chosen], q[got->rejected]);
  }
}

TEST(SelectExtremes, ChosenAndRejectedScoresArePermutationInvariant) {
  Rng rng(405);
  for (int trial = 0; trial < 500; ++trial) {
    auto q = random_q(rng);
    const auto a = select_extremes(q);
    rng.shuffle(q);
    const auto b = select_extremes(q);
    ASSERT_EQ(a.has_value(), b.has_value());
  }
  for (int trial = 0; trial < 500; ++trial) {
    auto q = random_q(rng);
    const auto a = select_extremes(q);
    if (!a) continue;
    const double hi = q[a->chosen], lo = q[a->rejected];
    rng.shuffle(q);
    const auto b = select_extremes(q);
    EXPECT_EQ(q[b->chosen], hi);
    EXPECT_EQ(q[b->rejected], lo);
  }
}

struct Scored {
  std::vector<MetaPlan> plans;
  std::vector<QualityEstimate> estimates;
};

Scored scored(const std::string& task_id, const std::vector<std::vector<double>>& rewards) {
  Scored s;
  const auto lib = planner::template_library(catalog_task(task_id));
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    s.plans.push_back(test::plan_from_steps(task_id, lib[i % lib.size()], i));
    s.estimates.push_back(QualityEstimate::from_rewards(s.plans.back().plan_id, rewards[i]));
  }
  return s;
}

TEST(BuildPair, PicksExtremesAndKeepsCandidates) {
  auto s = scored("gh-seen-00", {{1, 0}, {1, 1}, {0, 0}, {1, 1}});
  std::reverse(s.estimates.begin(), s.estimates.end());
  const auto out = build_pair(catalog_task("gh-seen-00"), s.estimates, s.plans);
  const auto* sp = std::get_if<ScoredPair>(&out);
  ASSERT_TRUE(sp);
  EXPECT_EQ(sp->chosen_index, 1u);
  EXPECT_EQ(sp->rejected_index, 2u);
  EXPECT_EQ(sp->pair.chosen, s.plans[1]);
  EXPECT_EQ(sp->pair.rejected, s.plans[2]);
  EXPECT_EQ(sp->pair.q_chosen, 1.0);
  EXPECT_EQ(sp->pair.q_rejected, 0.0);
  EXPECT_EQ(sp->pair.instruction, catalog_task("gh-seen-00").text);
  ASSERT_EQ(sp->candidates.size(), 4u);
  EXPECT_EQ(sp->candidates[0].q, 0.5);
  EXPECT_EQ(sp->env_id, "gridhouse");
}

TEST(BuildPair, AllEqualIsSkipped) {
  const auto s = scored("gh-seen-01", {{1, 0}, {0, 1}, {0.5, 0.5}});
  const auto out = build_pair(catalog_task("gh-seen-01"), s.estimates, s.plans);
  const auto* skip = std::get_if<Skip>(&out);
  ASSERT_TRUE(skip);
  EXPECT_EQ(skip->reason, SkipReason::all_equal);
  EXPECT_EQ(skip->task_id, "gh-seen-01");
  EXPECT_NE(skip->detail.find("0.5"), std::string::npos);
}

TEST(BuildPair, InputErrors) {
  auto s = scored("gh-seen-00", {{1}, {0}});
  const auto& task = catalog_task("gh-seen-00");
  EXPECT_THROW(build_pair(task, s.estimates, {s.plans[0]}), DataError);
  auto missing = s.estimates;
  missing.pop_back();
  EXPECT_THROW(build_pair(task, missing, s.plans), DataError);
  auto dup = s.estimates;
  dup.push_back(dup[0]);
  EXPECT_THROW(build_pair(task, dup, s.plans), DataError);
  auto extra = s.estimates;
  extra.push_back(QualityEstimate::from_rewards("stray", {1.0}));
  EXPECT_THROW(build_pair(task, extra, s.plans), DataError);
  EXPECT_THROW(build_pair(catalog_task("gh-seen-01"), s.estimates, s.plans), DataError);
}

ScoredPair make_pair(const std::string& task_id, const std::vector<std::vector<double>>& rewards) {
  const auto s = scored(task_id, rewards);
  return std::get<ScoredPair>(build_pair(catalog_task(task_id), s.estimates, s.plans));
}

TEST(ExportDpo, EmptyAndValid) {
  test::TempDir dir;
  export_dpo({}, dir / "none.jsonl", {1, "h"});
  EXPECT_TRUE(jsonl::read_file(dir / "none.jsonl").empty());

  export_dpo({make_pair("gh-seen-02", {{1, 1, 0}, {0, 0, 0}, {1, 0, 0}})}, dir / "one.jsonl", {7, "abc"});
  const auto lines = jsonl::read_file(dir / "one.jsonl");
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_TRUE(dpo_record_problems(lines[0]).empty());
  EXPECT_EQ(lines[0]["meta"]["base_seed"], 7);
  EXPECT_EQ(lines[0]["meta"]["config_hash"], "abc");
  EXPECT_EQ(lines[0]["chosen"], plan_block(make_pair("gh-seen-02", {{1, 1, 0}, {0, 0, 0}}).pair.chosen));
  EXPECT_DOUBLE_EQ(lines[0]["q_chosen"].get<double>(), 2.0 / 3.0);
}

TEST(ExportDpo, InvariantViolationWritesNothing) {
  test::TempDir dir;
  auto good = make_pair("gh-seen-02", {{1}, {0}});
  auto bad = good;
  bad.pair.q_rejected = bad.pair.q_chosen;
  try {
    export_dpo({good, bad}, dir / "p.jsonl", {});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind(), "pair_invariant");
    EXPECT_NE(std::string(e.what()).find("pair 1"), std::string::npos);
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "p.jsonl"));
}

TEST(DpoRecordProblems, RederivesSelectionFromRewards) {
  const auto rec = dpo_record(make_pair("gh-seen-03", {{0, 1}, {1, 1}, {0, 0}}), {3, "h"});
  EXPECT_TRUE(dpo_record_problems(rec).empty());

  auto tampered = rec;
  tampered["meta"]["candidates"][2]["rewards"] = {1.0, 1.0, 1.0};
  EXPECT_FALSE(dpo_record_problems(tampered).empty());

  auto stale_q = rec;
  stale_q["meta"]["candidates"][0]["q"] = 0.99;  // stored q is not trusted
  EXPECT_TRUE(dpo_record_problems(stale_q).empty());

  auto flipped = rec;
  flipped["q_rejected"] = 1.0;
  EXPECT_EQ(dpo_record_problems(flipped), (std::vector<std::string>{"q_chosen <= q_rejected"}));

  auto missing = rec;
  missing.erase("chosen");
  EXPECT_EQ(dpo_record_problems(missing), (std::vector<std::string>{"missing chosen"}));

  auto wrong = rec;
  wrong["q_chosen"] = "high";
  EXPECT_EQ(dpo_record_problems(wrong), (std::vector<std::string>{"wrong type for q_chosen"}));

  auto bad_reward = rec;
  bad_reward["meta"]["candidates"][0]["rewards"] = {2.0};
  EXPECT_FALSE(dpo_record_problems(bad_reward).empty());
}

TEST(SftDataset, LintGateAndRecordShape) {
  const auto& task = catalog_task("gh-seen-00");
  const auto lib = planner::template_library(task);
  auto clean = test::plan_from_steps(task.task_id, lib[0], 0);
  auto flawed = test::plan_from_steps(task.task_id, lib[2], 1);
  auto manual = flawed;
  manual.plan_id = plan_id_for(task.task_id, 2);
  manual.source = PlanSource::manual;
  ASSERT_FALSE(planner::lint_meta_plan(flawed, task.env_id).clean());

  const auto build = build_sft_dataset({{task, clean}, {task, flawed}, {task, manual}});
  ASSERT_EQ(build.records.size(), 2u);
  EXPECT_EQ(build.records[0].plan_id, clean.plan_id);
  EXPECT_EQ(build.records[1].plan_id, manual.plan_id);
  ASSERT_EQ(build.rejected.size(), 1u);
  EXPECT_EQ(build.rejected[0].plan_id, flawed.plan_id);
  EXPECT_NE(build.rejected[0].reason.find("at step"), std::string::npos);

  const json j = build.records[0];
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"instruction", "output", "plan_id", "schema_version", "task_id"}));
  EXPECT_EQ(build.records[0].instruction, task.text);
  EXPECT_EQ(build.records[0].output, clean.render());
}

TEST(PlanBlock, KeepsRawTextAndFallsBack) {
  auto p = test::plan_from_steps("gh-seen-00", {"go to where the pillow may be located", "take pillow"});
  p.raw = "Sure!\n<meta_plan>\nStep 1: go to where the pillow may be located\nStep 2:   take pillow\n</meta_plan>\nDone";
  EXPECT_EQ(plan_block(p),
            "<meta_plan>\nStep 1: go to where the pillow may be located\nStep 2:   take pillow\n</meta_plan>");
  p.raw = "no block";
  EXPECT_EQ(plan_block(p), p.render());
}

}  // namespace
}  // namespace mpo::pairs
