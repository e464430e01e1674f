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

#include <cstdlib>

#include "mpo/agent.hpp"
#include "mpo/pipeline.hpp"
#include "mpo/rollout.hpp"
#include "support/fake_chat.hpp"
#include "support/helpers.hpp"

namespace mpo::agent {
namespace {

using test::catalog_task;

const std::vector<TaskInstruction>& catalog() {
  static const auto c = gridhouse::task_catalog();
  return c;
}

MetaPlan abstract_plan(const std::string& task_id, std::size_t variant = 0) {
  return test::plan_from_steps(task_id, planner::template_library(catalog_task(task_id))[variant]);
}

Trajectory roll(const AgentBackend& agent, const std::string& task_id, const MetaPlan* plan, std::uint64_t seed,
                int step_limit = 40) {

  envproto::GridhouseEnv env(catalog());
  return rollout::run_rollout(env, agent, rollout::RolloutJob{&catalog_task(task_id), plan, 0, seed, step_limit, 0.0});
}

std::string golden_path(const std::string& name) { return std::string(GOLDEN_DIR) + "/" + name; }

// Compares against a checked-in golden file; MPO_UPDATE_GOLDEN=1 rewrites it.
void expect_golden(const std::string& name, const std::string& actual) {
  if (std::getenv("MPO_UPDATE_GOLDEN")) jsonl::write_text(golden_path(name), actual);
  EXPECT_EQ(jsonl::read_text(golden_path(name)), actual) << "golden " << name;
}

struct PromptFixture {
  const TaskInstruction& task = catalog_task("gh-seen-03");
  MetaPlan plan = planner::parse_meta_plan(
      "<meta_plan>\nStep 1: go to where the first pillow may be located.\nStep 2: take first pillow.\nStep 3: go "
      "to where sofa is.\nStep 4: put first pillow in/on sofa.\nStep 5: go to where the second pillow may be "
      "located.\nStep 6: take second pillow.\nStep 7: go back to sofa.\nStep 8: put second pillow in/on "
      "sofa.\n</meta_plan>");
  std::string example = pipeline::default_example("gridhouse");
  std::string observation =
      gridhouse::GridHouse().reset(gridhouse::GridTask::from_instruction(task), 7).text;

  std::vector<llm::ChatMessage> render(const MetaPlan* p, PlanPosition pos) const {
    return render_task_prompt(task, p, pos, example, "gridhouse", observation);
  }
};

TEST(TaskPrompt, GoldenPerPosition) {
  PromptFixture f;
  expect_golden("prompt_instruction.txt", format_transcript(f.render(&f.plan, PlanPosition::instruction)));
  expect_golden("prompt_thought.txt", format_transcript(f.render(&f.plan, PlanPosition::thought)));
  expect_golden("prompt_observation.txt", format_transcript(f.render(&f.plan, PlanPosition::observation)));
  expect_golden("prompt_baseline.txt", format_transcript(f.render(nullptr, PlanPosition::instruction)));
}

TEST(TaskPrompt, InstructionPositionEndsWithPlanAfterSentence) {
  PromptFixture f;
  const auto m = f.render(&f.plan, PlanPosition::instruction);
  ASSERT_EQ(m.size(), 1u);
  const std::string tail =
      "This meta plan maybe helpful for you to complete the task:\n" + f.plan.steps_text();
  ASSERT_GE(m.back().content.size(), tail.size());
  EXPECT_EQ(m.back().content.substr(m.back().content.size() - tail.size()), tail);
  EXPECT_EQ(m.back().role, "user");
}

TEST(TaskPrompt, ThoughtPositionIsFirstAssistantTurn) {
  PromptFixture f;
  const auto m = f.render(&f.plan, PlanPosition::thought);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m[1].role, "assistant");
  EXPECT_TRUE(text::starts_with(m[1].content, "Thought: "));
  EXPECT_NE(m[1].content.find("Step 8: put second pillow in/on sofa"), std::string::npos);
  EXPECT_EQ(m[0].content.find("Step 1:"), std::string::npos);
  EXPECT_EQ(m[2], (llm::ChatMessage{"user", "OK."}));
}

TEST(TaskPrompt, ObservationPositionExtendsFirstObservation) {
  PromptFixture f;
  const auto m = f.render(&f.plan, PlanPosition::observation);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NE(m[0].content.find(f.observation + "\n\nMeta plan for this task:\n" + f.plan.steps_text()),
            std::string::npos);
  EXPECT_EQ(m[0].content.find("This meta plan maybe helpful"), std::string::npos);
}

TEST(TaskPrompt, PositionsAreDistinctAndBaselineHasNoPlan) {
  PromptFixture f;
  const auto a = format_transcript(f.render(&f.plan, PlanPosition::instruction));
  const auto b = format_transcript(f.render(&f.plan, PlanPosition::thought));
  const auto c = format_transcript(f.render(&f.plan, PlanPosition::observation));
  EXPECT_NE(a, b);
  EXPECT_NE(b, c);
  EXPECT_NE(a, c);
  const auto base = format_transcript(f.render(nullptr, PlanPosition::thought));
  for (const auto& s : f.plan.steps) EXPECT_EQ(base.find(s), std::string::npos) << s;
  EXPECT_EQ(base, format_transcript(f.render(nullptr, PlanPosition::observation)));
  EXPECT_EQ(pipeline::Config{}.position, PlanPosition::instruction);
}

TEST(TaskPrompt, UnknownEnvironment) {
  PromptFixture f;
  EXPECT_THROW(render_task_prompt(f.task, &f.plan, PlanPosition::instruction, "", "nethack"), UsageError);
  EXPECT_THROW(parse_position("middle"), UsageError);
}

TEST(ParseReact, Examples) {
  EXPECT_EQ(parse_react("Thought: x\nAction: go to sofa 1"), (ReactTurn{"x", "go to sofa 1"}));
  EXPECT_EQ(parse_react("Action: look"), (ReactTurn{std::nullopt, "look"}));
  EXPECT_EQ(parse_react("Thought: a\nb\nAction: look\nAction: inventory"), (ReactTurn{"a b", "look"}));
  try {
    parse_react("I think we should stop.");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind(), "unparseable_response");
  }
  EXPECT_THROW(parse_react("Thought: hmm\nAction:   "), DataError);
}

TEST(PlanFollower, AbstractPlanSolvesEveryTask) {
  PlanFollower follower(0.0);
  for (const auto& t : catalog()) {
    const auto plan = abstract_plan(t.task_id);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto tr = roll(follower, t.task_id, &plan, seed);
      EXPECT_EQ(tr.final_reward, 1.0) << t.task_id << " seed " << seed;
      EXPECT_FALSE(tr.truncated);
    }
  }
}

TEST(PlanFollower, CaseStudyPlanSolvesPutTwo) {
  PromptFixture f;
  PlanFollower follower(0.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_EQ(roll(follower, "gh-seen-03", &f.plan, seed).final_reward, 1.0);
}

TEST(PlanFollower, AbsentReceptacleLoopsOnNothingHappens) {
  PlanFollower follower(0.0);
  const auto plan = test::plan_from_steps(
      "gh-seen-03", {"go to sofa", "go to sidetable", "take pillow from sidetable", "go to sofa",
                     "put pillow in/on sofa", "go to sidetable", "take another pillow from sidetable", "go to sofa",
                     "put second pillow in/on sofa"});
  const auto tr = roll(follower, "gh-seen-03", &plan, 7);
  EXPECT_EQ(tr.final_reward, 0.0);
  std::size_t sidetable = 0;
  for (const auto& s : tr.steps) {
    if (s.action.raw != "go to sidetable") continue;
    ++sidetable;
    EXPECT_EQ(s.observation.text, gridhouse::kNothingHappens);
  }
  EXPECT_GE(sidetable, 2u);
}

TEST(PlanFollower, PureFunctionOfPlanAndHistory) {
  PlanFollower follower(0.15);
  const auto plan = abstract_plan("gh-seen-05", 1);
  const auto tr = roll(follower, "gh-seen-05", &plan, 3);
  for (std::size_t t = 0; t < tr.steps.size(); ++t) {
    AgentContext ctx{catalog_task("gh-seen-05"), &plan, tr.initial_observation,
                     std::span<const TrajectoryStep>(tr.steps.data(), t), 3, 0.0};
    const auto a = follower.act(ctx);
    const auto b = follower.act(ctx);
    EXPECT_EQ(a.action, b.action);
    EXPECT_EQ(a.action, tr.steps[t].action);
    EXPECT_EQ(a.thought, tr.steps[t].thought);
  }
}

TEST(PlanFollower, EpsilonBounds) {
  EXPECT_THROW(PlanFollower(-0.1), UsageError);
  EXPECT_THROW(PlanFollower(1.5), UsageError);
  EXPECT_NO_THROW(PlanFollower(1.0));
}

TEST(PlanFollower, EmptyGroundingNeverActsLegally) {
  PlanFollower follower(0.0, GroundingTable{});
  const auto tr = roll(follower, "gh-seen-00", nullptr, 1, 10);
  EXPECT_EQ(tr.final_reward, 0.0);
  for (const auto& s : tr.steps) EXPECT_EQ(s.observation.text, gridhouse::kNothingHappens);
}

TEST(PlanFollower, LocateIteratesReceptaclesInFixedOrder) {
  PlanFollower follower(0.0);
  const auto plan = test::plan_from_steps("gh-seen-00", {"go to where the pillow may be located"});
  const auto tr = roll(follower, "gh-seen-00", &plan, 7, 40);
  // Until the pillow is seen, visits follow the receptacle list.
  std::vector<std::string> gone;
  for (const auto& s : tr.steps)
    if (text::starts_with(s.action.raw, "go to ")) gone.push_back(s.action.raw.substr(6));
  const auto& order = gridhouse::receptacles();
  for (std::size_t i = 0; i < gone.size(); ++i) EXPECT_EQ(gone[i], order[i]);
  ASSERT_FALSE(gone.empty());
}

TEST(FixtureAgent, ReplaysRecordedActions) {
  test::TempDir dir;
  const auto oracle = gridhouse::oracle_trajectory(gridhouse::GridTask::from_instruction(catalog_task("gh-seen-00")), 4);
  std::vector<std::string> responses;
  for (const auto& s : oracle.steps) responses.push_back("Thought: next\nAction: " + s.action.raw);
  jsonl::write_file(dir / "t.jsonl",
                    std::vector<json>{{{"task_id", "gh-seen-00"}, {"plan_id", nullptr}, {"responses", responses}}});
  FixtureAgent fx(dir / "t.jsonl");
  const auto tr = roll(fx, "gh-seen-00", nullptr, 4);
  ASSERT_EQ(tr.steps.size(), oracle.steps.size());
  for (std::size_t i = 0; i < tr.steps.size(); ++i) {
    EXPECT_EQ(tr.steps[i].action.raw, oracle.steps[i].action.raw);
    EXPECT_EQ(tr.steps[i].thought, std::optional<std::string>("next"));
  }
  EXPECT_EQ(tr.final_reward, 1.0);
  const auto missing = roll(fx, "gh-seen-01", nullptr, 4);
  EXPECT_TRUE(missing.truncated);
  ASSERT_TRUE(missing.note.has_value());
  EXPECT_TRUE(text::starts_with(*missing.note, "fixture_missing"));
}

TEST(RemoteAgent, ReasksWithParseErrorThenFails) {
  test::FakeChat chat([](double, int) { return std::vector<std::string>{"I am not sure."}; });
  RemoteAgent agent(chat.endpoint(), "example", PlanPosition::instruction);
  const auto plan = abstract_plan("gh-seen-00");
  AgentContext ctx{catalog_task("gh-seen-00"), &plan, "", {}, 1, 0.0};
  try {
    agent.act(ctx);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.kind(), "unparseable_response");
  }
  const auto bodies = chat.bodies();
  ASSERT_EQ(bodies.size(), 3u);
  const auto& last = bodies[2]["messages"];
  ASSERT_EQ(last.size(), 5u);
  EXPECT_NE(last[4]["content"].get<std::string>().find("no 'Action:' line"), std::string::npos);
}

TEST(RemoteAgent, ConversationCarriesHistoryAndTruncatesOnFailure) {
  int calls = 0;
  test::FakeChat chat([&](double, int) {
    return std::vector<std::string>{++calls == 1 ? "Thought: start\nAction: look" : "garbage"};
  });
  RemoteAgent agent(chat.endpoint(), "example", PlanPosition::thought);
  const auto plan = abstract_plan("gh-seen-00");
  const auto tr = roll(agent, "gh-seen-00", &plan, 1);
  EXPECT_TRUE(tr.truncated);
  EXPECT_EQ(tr.final_reward, 0.0);
  ASSERT_EQ(tr.steps.size(), 1u);
  ASSERT_TRUE(tr.note.has_value());
  const auto bodies = chat.bodies();
  ASSERT_GE(bodies.size(), 2u);
  const auto& second = bodies[1]["messages"];
  // header, plan thought, OK, then the first turn and its observation.
  ASSERT_EQ(second.size(), 5u);
  EXPECT_EQ(second[3]["content"], "Thought: start\nAction: look");
  EXPECT_TRUE(text::starts_with(second[4]["content"].get<std::string>(), "Observation: "));
}

}  // namespace
}  // namespace mpo::agent
