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

#include <httplib.h>

#include <mutex>
#include <set>
#include <thread>

#include "mpo/planner.hpp"
#include "support/fake_chat.hpp"
#include "support/helpers.hpp"

namespace mpo::planner {
namespace {

using test::catalog_task;

// The eight-step pillow plan from the published case study, as one line.
constexpr const char* kCaseStudyPlan =
    "<meta_plan>Step 1: go to where the first pillow may be located. Step 2: take first pillow. Step 3: go to "
    "where sofa is. Step 4: put first pillow in/on sofa. Step 5: go to where the second pillow may be located. "
    "Step 6: take second pillow. Step 7: go back to sofa. Step 8: put second pillow in/on sofa.</meta_plan>";

TEST(ParseMetaPlan, TwoSteps) {
  const auto p = parse_meta_plan("<meta_plan>\nStep 1: go to sofa\nStep 2: take pillow\n</meta_plan>");
  EXPECT_EQ(p.steps, (std::vector<std::string>{"go to sofa", "take pillow"}));
}

TEST(ParseMetaPlan, CaseStudyPlanHasEightSteps) {
  const auto p = parse_meta_plan(kCaseStudyPlan);
  ASSERT_EQ(p.steps.size(), 8u);
  EXPECT_EQ(p.steps[0], "go to where the first pillow may be located.");
  EXPECT_EQ(p.steps[6], "go back to sofa.");
  EXPECT_EQ(p.raw, kCaseStudyPlan);
}

TEST(ParseMetaPlan, MissingOrUnclosedTagsAreBadFormat) {
  for (const char* bad : {"Step 1: go to sofa", "<meta_plan>\nStep 1: go to sofa\n", "<meta_plan></meta_plan>",
                          "<meta_plan>just words</meta_plan>"}) {
    try {
      parse_meta_plan(bad);
      ADD_FAILURE() << bad;
    } catch (const DataError& e) {
      EXPECT_EQ(e.kind(), "bad_format");
    }
  }
}

TEST(ParseMetaPlan, FirstBlockWinsAndRawIsVerbatim) {
  const std::string text = "preamble\n<meta_plan>\nStep 1: look\n</meta_plan>\n<meta_plan>\nStep 1: x\n</meta_plan>";
  const auto p = parse_meta_plan(text);
  EXPECT_EQ(p.steps, std::vector<std::string>{"look"});
  EXPECT_EQ(p.raw, text);
}

TEST(ParseMetaPlan, NonContiguousNumbersAreRenumberedWithNote) {
  const auto r = parse_meta_plan_with_notes("<meta_plan>\nStep 1: look\nStep 3: inventory\n</meta_plan>");
  EXPECT_EQ(r.plan.steps.size(), 2u);
  ASSERT_EQ(r.notes.size(), 1u);
  const auto lint = lint_meta_plan(r.plan, "gridhouse");
  EXPECT_EQ(lint.count(LintCode::bad_format), 1u);
}

TEST(ParseMetaPlan, MultiLineStepsCollapse) {
  const auto p = parse_meta_plan("<meta_plan>\nStep 1: go to\n   the sofa\nstep 2 : look\n</meta_plan>");
  EXPECT_EQ(p.steps, (std::vector<std::string>{"go to the sofa", "look"}));
}

// Property: parse(render(p)).steps == p.steps for generated step lists.
TEST(ParseMetaPlan, RenderParseIdentity) {
  const std::vector<std::string> words = {"go", "to", "where", "the", "pillow", "may", "be", "1", "steps", "Step",
                                          "in/on", "sofa.", "take", "it,", "2:", "(first)"};
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    MetaPlan p;
    for (std::uint64_t k = 0, n = 1 + rng.below(9); k < n; ++k) {
      std::vector<std::string> ws;
      for (std::uint64_t w = 0, m = 1 + rng.below(7); w < m; ++w) ws.push_back(words[rng.below(words.size())]);
      // "Step" followed by "2:" would be a marker; keep generated text marker-free.
      std::string s = text::join(ws, " ");
      while (std::regex_search(s, std::regex(R"((^|\s)[Ss]tep\s+\d+\s*:)"))) s = "look";
      p.steps.push_back(s);
    }
    EXPECT_EQ(parse_meta_plan(p.render()).steps, p.steps) << p.render();
  }
}

TEST(Lint, AbsentSidetableIsFlagged) {
  const auto p = test::plan_from_steps("gh-seen-03", {"go to sofa", "go to sidetable", "take pillow from sidetable"});
  const auto r = lint_meta_plan(p, "gridhouse");
  EXPECT_EQ(r.count(LintCode::over_detailed), 2u);
  for (const auto& i : r.issues) EXPECT_NE(i.step, 1u);
}

TEST(Lint, AbstractLocateStepIsClean) {
  const auto p = test::plan_from_steps("t", {"Go to where the CD may be placed."});
  EXPECT_TRUE(lint_meta_plan(p, "gridhouse").clean());
  EXPECT_TRUE(lint_meta_plan(p, "alfworld").clean());
}

TEST(Lint, IndexedTokensAndVerbs) {
  const auto p = test::plan_from_steps("t", {"go to cabinet 4", "find the pillow", "take pillow 2 from drawer 1"});
  const auto r = lint_meta_plan(p, "gridhouse");
  EXPECT_EQ(r.count(LintCode::over_detailed), 2u);
  EXPECT_EQ(r.count(LintCode::illegal_action_verb), 1u);
  // Open-world environments count any indexed pair.
  EXPECT_EQ(lint_meta_plan(test::plan_from_steps("t", {"go to armchair 1"}), "alfworld").count(LintCode::over_detailed),
            1u);
}

TEST(Lint, EmptyPlanIsBadFormat) {
  MetaPlan p;
  p.plan_id = "x";
  const auto r = lint_meta_plan(p, "gridhouse");
  ASSERT_EQ(r.issues.size(), 1u);
  EXPECT_EQ(r.issues[0].code, LintCode::bad_format);
}

TEST(Lint, UnknownEnvironment) {
  EXPECT_THROW(lint_meta_plan(test::plan_from_steps("t", {"look"}), "minecraft"), UsageError);
}

TEST(Lint, CaseStudyPlanIsClean) {
  auto p = parse_meta_plan(kCaseStudyPlan);
  EXPECT_TRUE(lint_meta_plan(p, "gridhouse").clean()) << json(lint_meta_plan(p, "gridhouse")).dump();
}

// Property: dropping the index from an indexed token never adds an over_detailed issue.
TEST(Lint, RemovingIndexedTokensIsMonotone) {
  std::vector<std::string> nouns;
  for (const auto& r : gridhouse::receptacles()) nouns.push_back(gridhouse::class_of(r));
  for (const auto& o : gridhouse::object_classes()) nouns.push_back(o);
  nouns.push_back("sidetable");
  const std::vector<std::string> frames = {"go to {}", "take {} from {}", "put {} in/on {}", "open {}",
                                           "heat {} with {}", "go to where the {} is"};
  Rng rng(22);
  for (int i = 0; i < 2000; ++i) {
    std::string step = frames[rng.below(frames.size())];
    for (auto pos = step.find("{}"); pos != std::string::npos; pos = step.find("{}")) {
      std::string noun = nouns[rng.below(nouns.size())];
      if (rng.below(2)) noun += " " + std::to_string(1 + rng.below(4));
      step.replace(pos, 2, noun);
    }
    const auto before = lint_meta_plan(test::plan_from_steps("t", {step}), "gridhouse").count(LintCode::over_detailed);
    const auto tokens = indexed_tokens(step, vocabulary("gridhouse"));
    for (const auto& tok : tokens) {
      std::string stripped = step;
      stripped.replace(stripped.find(tok), tok.size(), tok.substr(0, tok.rfind(' ')));
      const auto after =
          lint_meta_plan(test::plan_from_steps("t", {stripped}), "gridhouse").count(LintCode::over_detailed);
      EXPECT_LE(after, before) << step << " -> " << stripped;
    }
  }
}

TEST(CollectionPrompt, GridhouseHasConversationDelimiters) {
  const auto& task = catalog_task("gh-seen-00");
  const auto traj = gridhouse::oracle_trajectory(gridhouse::GridTask::from_instruction(task), 1);
  const auto prompt = render_collection_prompt(task, traj, "gridhouse");
  EXPECT_NE(prompt.find("<conversation>"), std::string::npos);
  EXPECT_NE(prompt.find("</conversation>"), std::string::npos);
  EXPECT_NE(prompt.find(task.text), std::string::npos);
  EXPECT_NE(prompt.find("Action: " + traj.steps[0].action.raw), std::string::npos);
  EXPECT_NE(prompt.find("<meta_plan>"), std::string::npos);
}

TEST(CollectionPrompt, AlfworldListsNineActions) {
  const auto& task = catalog_task("gh-seen-00");
  const auto traj = gridhouse::oracle_trajectory(gridhouse::GridTask::from_instruction(task), 1);
  const auto prompt = render_collection_prompt(task, traj, "alfworld");
  EXPECT_NE(prompt.find("1. go to {recep}"), std::string::npos);
  EXPECT_NE(prompt.find("9. cool {obj} with {recep}"), std::string::npos);
  EXPECT_EQ(prompt.find("10."), std::string::npos);
  EXPECT_NE(render_collection_prompt(task, traj, "sciworld").find("teleport to LOC"), std::string::npos);
  EXPECT_NE(render_collection_prompt(task, traj, "webshop").find("search[keywords]"), std::string::npos);
}

TEST(CollectionPrompt, Errors) {
  const auto& task = catalog_task("gh-seen-00");
  Trajectory empty;
  empty.task_id = task.task_id;
  EXPECT_THROW(render_collection_prompt(task, empty, "gridhouse"), DataError);
  auto other = gridhouse::oracle_trajectory(gridhouse::GridTask::from_instruction(catalog_task("gh-seen-01")), 1);
  EXPECT_THROW(render_collection_prompt(task, other, "gridhouse"), DataError);
  other.task_id = task.task_id;
  EXPECT_THROW(render_collection_prompt(task, other, "nethack"), UsageError);
}

TEST(TemplateBackend, FiveDistinctReplayablePlans) {
  TemplateBackend b;
  for (const auto& task : gridhouse::task_catalog()) {
    const auto r = sample_plans(b, task, 5, 0.7, 99);
    ASSERT_EQ(r.plans.size(), 5u);
    EXPECT_TRUE(r.errors.empty());
    std::set<std::string> keys;
    for (std::size_t i = 0; i < r.plans.size(); ++i) {
      EXPECT_EQ(r.plans[i].plan_id, plan_id_for(task.task_id, i));
      EXPECT_EQ(r.plans[i].source, PlanSource::sampled);
      keys.insert(plan_key(r.plans[i]));
    }
    EXPECT_EQ(keys.size(), 5u);
    const auto again = sample_plans(b, task, 5, 0.7, 99);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(again.plans[i], r.plans[i]);
  }
}

TEST(TemplateBackend, SeedChangesTheDraw) {
  TemplateBackend b;
  const auto& task = catalog_task("gh-seen-00");
  std::set<std::string> firsts;
  for (std::uint64_t seed = 0; seed < 20; ++seed) firsts.insert(plan_key(b.sample(task, 1, 0.7, seed).plans[0]));
  EXPECT_GE(firsts.size(), 2u);
  EXPECT_THROW(sample_plans(b, task, 0, 0.7, 1), UsageError);
}

TEST(TemplateBackend, LibraryHasCleanAndFlawedEntries) {
  for (const auto& task : gridhouse::task_catalog()) {
    const auto lib = template_library(task);
    ASSERT_EQ(lib.size(), 6u);
    EXPECT_TRUE(lint_meta_plan(test::plan_from_steps(task.task_id, lib[0]), "gridhouse").clean()) << task.task_id;
    EXPECT_TRUE(lint_meta_plan(test::plan_from_steps(task.task_id, lib[1]), "gridhouse").clean()) << task.task_id;
    for (std::size_t i = 2; i < 5; ++i)
      EXPECT_FALSE(lint_meta_plan(test::plan_from_steps(task.task_id, lib[i]), "gridhouse").clean())
          << task.task_id << " #" << i;
  }
}

TEST(FixtureBackend, ReplaysByteIdenticalAndReportsGaps) {
  test::TempDir dir;
  const std::string a = "<meta_plan>\nStep 1: look\n</meta_plan>";
  const std::string b = "<meta_plan>\nStep 1: go to where the pillow may be located\nStep 2: take it\n</meta_plan>";
  jsonl::write_file(dir / "f.jsonl", std::vector<json>{{{"task_id", "gh-seen-00"}, {"text", a}},
                                                       {{"task_id", "gh-seen-00"}, {"text", b}},
                                                       {{"task_id", "gh-seen-00"}, {"text", "no tags"}}});
  FixtureBackend fx(dir / "f.jsonl");
  const auto r = sample_plans(fx, catalog_task("gh-seen-00"), 4, 0.7, 1);
  ASSERT_EQ(r.plans.size(), 2u);
  EXPECT_EQ(r.plans[0].raw, a);
  EXPECT_EQ(r.plans[1].raw, b);
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_EQ(r.errors[0].index, 2u);
  EXPECT_EQ(r.errors[1].index, 3u);
  EXPECT_EQ(fx.collect(catalog_task("gh-seen-00"), ""), a);
  EXPECT_THROW(fx.collect(catalog_task("gh-seen-01"), ""), DataError);
}

TEST(Overrides, ManualPlansSupersedeById) {
  auto plans = TemplateBackend().sample(catalog_task("gh-seen-00"), 3, 0.0, 1).plans;
  auto manual = test::plan_from_steps("gh-seen-00", {"look"}, 1);
  const auto out = apply_overrides(plans, {manual});
  EXPECT_EQ(out[0], plans[0]);
  EXPECT_EQ(out[1].steps, manual.steps);
  EXPECT_EQ(out[1].source, PlanSource::manual);
}

std::string plan_text(const std::string& step) { return "<meta_plan>\nStep 1: " + step + "\n</meta_plan>"; }

TEST(RemoteBackend, DedupsAndPadsAtResampleTemperature) {
  int call = 0;
  test::FakeChat chat([&](double, int n) {
    std::vector<std::vector<std::string>> script = {
        {plan_text("a"), plan_text("A."), plan_text("b"), plan_text("a"), "garbage"},
        {plan_text("c"), plan_text("b"), plan_text("c")},
        {plan_text("d"), plan_text("c")}};
    auto out = script[static_cast<std::size_t>(std::min(call++, 2))];
    out.resize(static_cast<std::size_t>(n), plan_text("z"));
    return out;
  });
  RemoteBackend remote(chat.endpoint());
  const auto r = sample_plans(remote, catalog_task("gh-seen-00"), 5, 0.0, 1);
  const auto reqs = chat.requests();
  // Oracle for the rule: temperature-0 draw of n=m, then shortfall at 0.7.
  ASSERT_EQ(reqs.size(), 3u);
  EXPECT_EQ(reqs[0], (std::pair<double, int>{0.0, 5}));
  EXPECT_EQ(reqs[1], (std::pair<double, int>{0.7, 3}));
  EXPECT_EQ(reqs[2], (std::pair<double, int>{0.7, 2}));
  ASSERT_EQ(r.plans.size(), 4u);
  std::vector<std::string> firsts;
  for (const auto& p : r.plans) firsts.push_back(p.steps[0]);
  EXPECT_EQ(firsts, (std::vector<std::string>{"a", "b", "c", "d"}));
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].index, 4u);
  for (std::size_t i = 0; i < r.plans.size(); ++i) EXPECT_EQ(r.plans[i].plan_id, plan_id_for("gh-seen-00", i));
}

TEST(RemoteBackend, TransportFailureBecomesErrorEntries) {
  test::FakeChat chat([](double, int) { return std::vector<std::string>{}; }, 500);
  RemoteBackend remote(chat.endpoint());
  const auto r = remote.sample(catalog_task("gh-seen-00"), 3, 0.7, 1);
  EXPECT_TRUE(r.plans.empty());
  ASSERT_EQ(r.errors.size(), 3u);
  EXPECT_NE(r.errors[0].message.find("backend failure"), std::string::npos);
}

TEST(RemoteBackend, SendsOpenAiShapedRequest) {
  std::string seen_auth;
  httplib::Server server;
  json body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    body = json::parse(req.body);
    seen_auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"ok"}}]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  ::setenv("MPO_TEST_KEY", "sekret", 1);
  llm::ChatEndpoint e{"http://127.0.0.1:" + std::to_string(port), "m1", "MPO_TEST_KEY", 5.0, 0};
  const auto out = llm::ChatClient(e).complete({{"user", "hi"}}, 0.7, 2);
  server.stop();
  t.join();
  EXPECT_EQ(out, std::vector<std::string>{"ok"});
  EXPECT_EQ(seen_auth, "Bearer sekret");
  EXPECT_EQ(body["model"], "m1");
  EXPECT_EQ(body["n"], 2);
  EXPECT_EQ(body["temperature"], 0.7);
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["messages"][0]["content"], "hi");
}

}  // namespace
}  // namespace mpo::planner
