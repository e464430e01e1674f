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
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "mpo/domain.hpp"
#include "mpo/gridhouse.hpp"
#include "mpo/hash.hpp"
#include "mpo/llm_client.hpp"
#include "mpo/prompts.hpp"
#include "mpo/text.hpp"

/// Meta-planner backends plus parsing, linting and prompt rendering for the
/// `<meta_plan>` wire format.
namespace mpo::planner {

inline constexpr std::string_view kOpenTag = "<meta_plan>";
inline constexpr std::string_view kCloseTag = "</meta_plan>";

struct ParsedPlan {
  MetaPlan plan;
  // Non-fatal format findings, e.g. renumbered steps.
  std::vector<std::string> notes;
};

// Extracts the first <meta_plan> block and splits it on "Step k:" markers.
// Markers may start lines or follow whitespace, so single-line plans parse too.
inline ParsedPlan parse_meta_plan_with_notes(const std::string& text) {
  const auto open = text.find(kOpenTag);
  if (open == std::string::npos) throw DataError("missing <meta_plan> tag", "bad_format");
  const auto body_start = open + kOpenTag.size();
  const auto close = text.find(kCloseTag, body_start);
  if (close == std::string::npos) throw DataError("unclosed <meta_plan> block", "bad_format");
  const std::string body = text.substr(body_start, close - body_start);

  static const std::regex marker(R"((^|\s)[Ss]tep\s+(\d+)\s*:)");
  struct Mark {
    std::size_t begin, end;
    long number;
  };
  std::vector<Mark> marks;
  for (auto it = std::sregex_iterator(body.begin(), body.end(), marker); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const auto lead = static_cast<std::size_t>(m.length(1));
    marks.push_back({static_cast<std::size_t>(m.position(0)) + lead,
                     static_cast<std::size_t>(m.position(0) + m.length(0)), std::stol(m.str(2))});
  }

  ParsedPlan out;
  out.plan.raw = text;
  std::vector<long> numbers;
  for (std::size_t i = 0; i < marks.size(); ++i) {
    const auto stop = i + 1 < marks.size() ? marks[i + 1].begin : body.size();
    std::string step(text::trim(body.substr(marks[i].end, stop - marks[i].end)));
    std::replace(step.begin(), step.end(), '\n', ' ');
    std::replace(step.begin(), step.end(), '\r', ' ');
    if (step.empty()) {
      out.notes.push_back("empty step " + std::to_string(marks[i].number) + " dropped");
      continue;
    }
    // Collapse runs of spaces left by line joins.
    std::string collapsed;
    for (char c : step)
      if (!(c == ' ' && !collapsed.empty() && collapsed.back() == ' ')) collapsed.push_back(c);
    out.plan.steps.push_back(std::move(collapsed));
    numbers.push_back(marks[i].number);
  }
  if (out.plan.steps.empty()) throw DataError("meta plan has no steps", "bad_format");
  for (std::size_t i = 0; i < numbers.size(); ++i) {
    if (numbers[i] != static_cast<long>(i + 1)) {
      out.notes.push_back("non-contiguous step numbering renumbered from 1");
      break;
    }
  }
  return out;
}

inline MetaPlan parse_meta_plan(const std::string& text) { return parse_meta_plan_with_notes(text).plan; }

enum class LintCode { over_detailed, illegal_action_verb, bad_format };

NLOHMANN_JSON_SERIALIZE_ENUM(LintCode, {{LintCode::over_detailed, "over_detailed"},
                                        {LintCode::illegal_action_verb, "illegal_action_verb"},
                                        {LintCode::bad_format, "bad_format"}})

struct LintIssue {
  LintCode code = LintCode::bad_format;
  // 1-based step index; 0 for whole-plan findings.
  std::size_t step = 0;
  std::string message;
  bool operator==(const LintIssue&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LintIssue, code, step, message)

struct PlanLintReport {
  std::string plan_id;
  std::vector<LintIssue> issues;
  bool clean() const { return issues.empty(); }
  std::size_t count(LintCode code) const {
    return static_cast<std::size_t>(
        std::count_if(issues.begin(), issues.end(), [&](const LintIssue& i) { return i.code == code; }));
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PlanLintReport, plan_id, issues)

// What a plan step may mention in one environment.
struct EnvVocabulary {
  std::set<std::string> verbs;
  // Receptacle classes; non-empty only for closed-world environments where a
  // named receptacle can be checked for existence.
  std::set<std::string> receptacles;
  // Nouns whose indexed form ("cabinet 4") counts as environment detail. Empty
  // means any "<word> <number>" pair counts.
  std::set<std::string> indexed_nouns;
};

inline const EnvVocabulary& vocabulary(const std::string& env_id) {
  static const auto build = [] {
    std::map<prompts::EnvFamily, EnvVocabulary> v;
    EnvVocabulary gh;
    gh.verbs = {"go", "take", "put", "open", "close", "clean", "heat", "cool", "look", "inventory", "examine"};
    for (const auto& r : gridhouse::receptacles()) gh.receptacles.insert(gridhouse::class_of(r));
    gh.indexed_nouns = gh.receptacles;
    for (const auto& o : gridhouse::object_classes()) gh.indexed_nouns.insert(o);
    v[prompts::EnvFamily::gridhouse] = gh;

    EnvVocabulary alf;
    alf.verbs = {"go", "take", "put", "open", "close", "toggle", "clean", "heat", "cool", "use", "look",
                 "inventory", "examine"};
    v[prompts::EnvFamily::alfworld] = alf;

    EnvVocabulary sci;
    sci.verbs = {"open", "close", "activate", "deactivate", "connect", "disconnect", "use", "look",
                 "examine", "read", "move", "pick", "pour", "mix", "teleport", "focus", "wait", "wait1"};
    v[prompts::EnvFamily::sciworld] = sci;

    EnvVocabulary web;
    web.verbs = {"search", "click"};
    v[prompts::EnvFamily::webshop] = web;
    return v;
  };
  static const auto table = build();
  return table.at(prompts::env_family(env_id));
}

// Indexed environment tokens such as "cabinet 4" found in one step.
inline std::vector<std::string> indexed_tokens(const std::string& step, const EnvVocabulary& vocab) {
  static const std::regex pair(R"(\b([a-z]+) (\d+)\b)");
  const std::string s = text::lower(step);
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), pair); it != std::sregex_iterator(); ++it) {
    const std::string noun = (*it)[1].str();
    if (noun == "step") continue;
    if (vocab.indexed_nouns.empty() || vocab.indexed_nouns.count(noun)) out.push_back(it->str());
  }
  return out;
}

// Bare receptacle names after navigation/placement prepositions that the
// environment does not contain ("go to sidetable").
inline std::vector<std::string> absent_receptacles(const std::string& step, const EnvVocabulary& vocab) {
  if (vocab.receptacles.empty()) return {};
  static const std::regex ref(R"((?:^go (?:back )?to|\bfrom|\bin/on|\bin|\bon|\bwith) (?:the )?([a-z]+))");
  static const std::set<std::string> skip = {"where", "it", "them", "a", "an", "your", "its", "that", "this"};
  const std::string s = text::normalize_step(step);
  std::set<std::string> objects(gridhouse::object_classes().begin(), gridhouse::object_classes().end());
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), ref); it != std::sregex_iterator(); ++it) {
    const std::string noun = (*it)[1].str();
    if (skip.count(noun) || vocab.receptacles.count(noun) || objects.count(noun)) continue;
    out.push_back(noun);
  }
  return out;
}

inline std::string leading_verb(const std::string& step) {
  const auto words = text::split_words(text::normalize_step(step));
  if (words.empty()) return {};
  std::string v = words[0];
  v.erase(std::remove_if(v.begin(), v.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); }),
          v.end());
  return v;
}

inline PlanLintReport lint_meta_plan(const MetaPlan& plan, const std::string& env_id) {
  const auto& vocab = vocabulary(env_id);
  PlanLintReport report{plan.plan_id, {}};
  if (plan.steps.empty()) {
    report.issues.push_back({LintCode::bad_format, 0, "plan has no steps"});
    return report;
  }
  if (!plan.raw.empty()) {
    try {
      for (const auto& note : parse_meta_plan_with_notes(plan.raw).notes)
        report.issues.push_back({LintCode::bad_format, 0, note});
    } catch (const DataError& e) {
      report.issues.push_back({LintCode::bad_format, 0, e.what()});
    }
  }
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const std::string& step = plan.steps[i];
    const std::string verb = leading_verb(step);
    if (!vocab.verbs.count(verb))
      report.issues.push_back({LintCode::illegal_action_verb, i + 1,
                               "leading verb '" + verb + "' is not an action of " + env_id});
    std::vector<std::string> detail;
    for (const auto& t : indexed_tokens(step, vocab)) detail.push_back("indexed token '" + t + "'");
    for (const auto& r : absent_receptacles(step, vocab))
      detail.push_back("receptacle '" + r + "' does not exist in " + env_id);
    if (!detail.empty())
      report.issues.push_back({LintCode::over_detailed, i + 1, text::join(detail, "; ")});
  }
  return report;
}

inline std::string serialize_conversation(const Trajectory& trajectory) {
  std::string out;
  for (const auto& s : trajectory.steps) {
    if (!out.empty()) out += '\n';
    if (s.thought) out += "Thought: " + *s.thought + "\n";
    out += "Action: " + s.action.raw + "\nObservation: " + s.observation.text;
  }
  return out;
}

// Seed-collection prompt: task plus an expert trajectory, asking for a meta plan.
inline std::string render_collection_prompt(const TaskInstruction& task, const Trajectory& trajectory,
                                            const std::string& env_id) {
  const auto family = prompts::env_family(env_id);
  if (trajectory.steps.empty()) throw DataError("cannot render collection prompt from an empty trajectory", "empty_trajectory");
  if (trajectory.task_id != task.task_id)
    throw DataError("trajectory " + trajectory.task_id + " does not belong to task " + task.task_id, "mismatch");
  const std::string conversation = serialize_conversation(trajectory);
  std::vector<std::pair<std::string, std::string>> vars = {
      {"task", task.text}, {"conversation", conversation}, {"format", std::string(prompts::kMetaPlanFormat)}};
  switch (family) {
    case prompts::EnvFamily::sciworld:
      vars.emplace_back("actions", std::string(prompts::kSciworldActions));
      return text::substitute(prompts::kSciworldCollection, vars);
    case prompts::EnvFamily::alfworld:
      vars.emplace_back("actions", std::string(prompts::kAlfworldCollectionActions));
      return text::substitute(prompts::kHouseholdCollection, vars);
    case prompts::EnvFamily::gridhouse:
      vars.emplace_back("actions", std::string(prompts::kGridhouseActions));
      return text::substitute(prompts::kHouseholdCollection, vars);
    case prompts::EnvFamily::webshop:
      return text::substitute(prompts::kWebshopCollection, vars);
  }
  return {};
}

// Zero-shot planning prompt used when sampling from a remote planner.
inline std::string render_planning_prompt(const TaskInstruction& task) {
  return "Please generate a step-by-step meta plan for the following task:\n<task>\n" + task.text +
         "\n</task>\n\n" + std::string(prompts::kMetaPlanFormat);
}

// Sound entries come first in template_library.
inline constexpr std::size_t kSoundVariants = 2;

// Parameterized plan skeletons for gridhouse task templates. The first
// kSoundVariants entries are abstract plans that solve the task; the rest are
// deliberately flawed (concrete indices, a receptacle the room lacks, verbs
// outside the action set, a missing step) so Monte-Carlo scoring has signal.
inline std::vector<std::vector<std::string>> template_library(const TaskInstruction& task) {
  const auto g = gridhouse::GridTask::from_instruction(task);
  const std::string& o = g.object;
  const std::string t = g.target_phrase();
  const std::string& tr = g.target;
  using L = std::vector<std::vector<std::string>>;
  if (g.tmpl == gridhouse::Template::put_two) {
    return L{
        {"go to where the first " + o + " may be located", "take the first " + o + " from where you found it",
         "go to where the " + t + " is", "put the first " + o + " in/on the " + t,
         "go to where the second " + o + " may be located", "take the second " + o,
         "go back to the " + t, "put the second " + o + " in/on the " + t},
        {"go to where the first " + o + " may be placed", "take the first " + o,
         "go to where the " + t + " is located", "put the first " + o + " in/on the " + t,
         "go to where the second " + o + " may be placed", "take the second " + o + " from where you found it",
         "go to where the " + t + " is located", "put the second " + o + " in/on the " + t},
        {"go to cabinet 1", "open cabinet 1", "take " + o + " 1 from cabinet 1", "go to " + tr,
         "put " + o + " 1 in/on " + tr, "go to cabinet 1", "take " + o + " 2 from cabinet 1", "go to " + tr,
         "put " + o + " 2 in/on " + tr},
        {"go to " + t, "go to sidetable", "take " + o + " from sidetable", "go to " + t,
         "put " + o + " in/on " + t, "go to sidetable", "take another " + o + " from sidetable",
         "go to " + t, "put second " + o + " in/on " + t},
        {"find the first " + o, "pick up the first " + o, "go to where the " + t + " is",
         "put the first " + o + " in/on the " + t, "find the second " + o, "pick up the second " + o,
         "go back to the " + t, "put the second " + o + " in/on the " + t},
        {"take the first " + o, "go to where the " + t + " is", "put the first " + o + " in/on the " + t,
         "take the second " + o, "put the second " + o + " in/on the " + t},
    };
  }
  if (const auto proc = gridhouse::processing(g.tmpl)) {
    const std::string& verb = proc->first;
    const std::string& app = proc->second;
    const std::string ac = gridhouse::class_of(app);
    return L{
        {"go to where the " + o + " may be located", "take the " + o + " from where you found it",
         "go to where the " + ac + " is", verb + " the " + o + " with the " + ac, "go to where the " + t + " is",
         "put the " + o + " in/on the " + t},
        {"go to where the " + o + " may be placed", "take the " + o, "go to where the " + ac + " is located",
         verb + " the " + o + " with the " + ac, "go to where the " + t + " is located",
         "put the " + o + " in/on the " + t},
        {"go to cabinet 1", "open cabinet 1", "take " + o + " 1 from cabinet 1", "go to " + app,
         verb + " " + o + " 1 with " + app, "go to " + tr, "put " + o + " 1 in/on " + tr},
        {"go to sidetable", "take " + o + " from sidetable", "go to " + ac, verb + " " + o + " with " + ac,
         "go to " + t, "put " + o + " in/on " + t},
        {"find the " + o, "pick up the " + o, "use the " + ac + " to " + verb + " the " + o,
         "go to where the " + t + " is", "put the " + o + " in/on the " + t},
        {"go to where the " + o + " may be located", "take the " + o + " from where you found it",
         "go to where the " + t + " is", "put the " + o + " in/on the " + t},
    };
  }
  return L{
      {"go to where the " + o + " may be located", "take the " + o + " from where you found it",
       "go to where the " + t + " is", "put the " + o + " in/on the " + t},
      {"go to where the " + o + " may be placed", "take the " + o, "go to where the " + t + " is located",
       "put the " + o + " in/on the " + t},
      {"go to cabinet 1", "open cabinet 1", "take " + o + " 1 from cabinet 1", "go to " + tr,
       "put " + o + " 1 in/on " + tr},
      {"go to " + t, "go to sidetable", "take " + o + " from sidetable", "go to " + t, "put " + o + " in/on " + t},
      {"find the " + o, "pick up the " + o, "go to where the " + t + " is", "put the " + o + " in/on the " + t},
      {"take the " + o, "go to where the " + t + " is", "put the " + o + " in/on the " + t},
  };
}

inline std::string render_steps(const std::vector<std::string>& steps) {
  MetaPlan p;
  p.steps = steps;
  return p.render();
}

struct SampleError {
  std::size_t index = 0;
  std::string message;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SampleError, index, message)

struct SampleResult {
  std::vector<MetaPlan> plans;
  std::vector<SampleError> errors;
};

enum class BackendKind { template_library, remote_llm, fixture };

class PlannerBackend {
 public:
  virtual ~PlannerBackend() = default;
  virtual BackendKind kind() const = 0;
  virtual std::string describe() const = 0;
  // Up to m raw completions for the task; the caller parses and deduplicates.
  virtual SampleResult sample(const TaskInstruction& task, int m, double temperature, std::uint64_t seed) const = 0;
  // One plan summarizing an expert trajectory from a rendered collection prompt.
  virtual std::string collect(const TaskInstruction& task, const std::string& prompt) const = 0;
};

inline MetaPlan finalize(ParsedPlan parsed, const std::string& task_id, std::size_t index, PlanSource source) {
  parsed.plan.plan_id = plan_id_for(task_id, index);
  parsed.plan.task_id = task_id;
  parsed.plan.source = source;
  return std::move(parsed.plan);
}

class TemplateBackend final : public PlannerBackend {
 public:
  BackendKind kind() const override { return BackendKind::template_library; }
  std::string describe() const override { return "template"; }

  // Temperature 0 takes skeletons in library order; otherwise a seeded shuffle.
  SampleResult sample(const TaskInstruction& task, int m, double temperature, std::uint64_t seed) const override {
    if (m < 1) throw UsageError("m must be >= 1");
    const auto lib = template_library(task);
    std::vector<std::size_t> order(lib.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (temperature > 0.0) {
      Rng rng(stable_hash(seed, std::string_view(task.task_id), std::string_view("template-sample")));
      rng.shuffle(order);
    }
    SampleResult out;
    for (int i = 0; i < m; ++i) {
      const auto& steps = lib[order[static_cast<std::size_t>(i) % order.size()]];
      out.plans.push_back(finalize(parse_meta_plan_with_notes(render_steps(steps)), task.task_id,
                                   static_cast<std::size_t>(i), PlanSource::sampled));
    }
    return out;
  }

  std::string collect(const TaskInstruction& task, const std::string&) const override {
    return render_steps(template_library(task).front());
  }
};

// Replays recorded completions: JSONL records {"task_id", "text"} in order.
class FixtureBackend final : public PlannerBackend {
 public:
  explicit FixtureBackend(const std::filesystem::path& path) : path_(path.string()) {
    for (const auto& j : jsonl::read_file(path)) {
      if (!j.contains("task_id") || !j.contains("text"))
        throw DataError(path_ + ": fixture record needs task_id and text", "schema");
      texts_[j["task_id"].get<std::string>()].push_back(j["text"].get<std::string>());
    }
  }

  BackendKind kind() const override { return BackendKind::fixture; }
  std::string describe() const override { return "fixture:" + path_; }

  SampleResult sample(const TaskInstruction& task, int m, double, std::uint64_t) const override {
    if (m < 1) throw UsageError("m must be >= 1");
    SampleResult out;
    const auto it = texts_.find(task.task_id);
    for (int i = 0; i < m; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      if (it == texts_.end() || idx >= it->second.size()) {
        out.errors.push_back({idx, "fixture has no completion " + std::to_string(i) + " for " + task.task_id});
        continue;
      }
      try {
        out.plans.push_back(finalize(parse_meta_plan_with_notes(it->second[idx]), task.task_id, idx,
                                     PlanSource::sampled));
      } catch (const DataError& e) {
        out.errors.push_back({idx, e.what()});
      }
    }
    return out;
  }

  std::string collect(const TaskInstruction& task, const std::string&) const override {
    const auto it = texts_.find(task.task_id);
    if (it == texts_.end() || it->second.empty())
      throw DataError("fixture has no completion for " + task.task_id, "fixture_missing");
    return it->second.front();
  }

 private:
  std::string path_;
  std::map<std::string, std::vector<std::string>> texts_;
};

inline std::string plan_key(const MetaPlan& p) {
  std::string k;
  for (const auto& s : p.steps) k += text::normalize_step(s) + "\n";
  return k;
}

// OpenAI-compatible remote planner. Duplicates are removed and the shortfall
// is resampled at pad_temperature, at most max_retries times.
class RemoteBackend final : public PlannerBackend {
 public:
  explicit RemoteBackend(llm::ChatEndpoint endpoint, double pad_temperature = 0.7, int max_retries = 2)
      : client_(std::move(endpoint)), pad_temperature_(pad_temperature), max_retries_(max_retries) {}

  BackendKind kind() const override { return BackendKind::remote_llm; }
  std::string describe() const override { return "remote:" + client_.endpoint().model; }

  SampleResult sample(const TaskInstruction& task, int m, double temperature, std::uint64_t) const override {
    if (m < 1) throw UsageError("m must be >= 1");
    const std::vector<llm::ChatMessage> messages = {{"user", render_planning_prompt(task)}};
    SampleResult out;
    std::set<std::string> keys;
    std::vector<std::string> parse_errors;
    std::string transport_error;
    const auto want = static_cast<std::size_t>(m);
    for (int attempt = 0; attempt <= max_retries_ && out.plans.size() < want; ++attempt) {
      const double temp = attempt == 0 ? temperature : pad_temperature_;
      std::vector<std::string> texts;
      try {
        texts = client_.complete(messages, temp, static_cast<int>(want - out.plans.size()));
      } catch (const BackendError& e) {
        transport_error = e.what();
        break;
      }
      for (const auto& t : texts) {
        if (out.plans.size() >= want) break;
        try {
          auto parsed = parse_meta_plan_with_notes(t);
          if (!keys.insert(plan_key(parsed.plan)).second) continue;
          out.plans.push_back(finalize(std::move(parsed), task.task_id, out.plans.size(), PlanSource::sampled));
        } catch (const DataError& e) {
          parse_errors.push_back(e.what());
        }
      }
    }
    for (std::size_t i = out.plans.size(); i < want; ++i) {
      std::string why = !transport_error.empty() ? "backend failure: " + transport_error
                        : !parse_errors.empty() ? "unparseable completions after retries: " + parse_errors.back()
                                                : "too few unique plans after retries";
      out.errors.push_back({i, why});
    }
    return out;
  }

  std::string collect(const TaskInstruction&, const std::string& prompt) const override {
    return client_.complete({{"user", prompt}}, 0.0, 1).front();
  }

 private:
  llm::ChatClient client_;
  double pad_temperature_;
  int max_retries_;
};

inline SampleResult sample_plans(const PlannerBackend& backend, const TaskInstruction& task, int m,
                                 double temperature, std::uint64_t seed) {
  if (m < 1) throw UsageError("m must be >= 1");
  return backend.sample(task, m, temperature, seed);
}

// Manual plans supersede generated ones with the same plan_id.
inline std::vector<MetaPlan> apply_overrides(std::vector<MetaPlan> plans, const std::vector<MetaPlan>& overrides) {
  std::map<std::string, const MetaPlan*> by_id;
  for (const auto& o : overrides) by_id[o.plan_id] = &o;
  for (auto& p : plans) {
    if (auto it = by_id.find(p.plan_id); it != by_id.end()) {
      p = *it->second;
      p.source = PlanSource::manual;
    }
  }
  return plans;
}

}  // namespace mpo::planner
