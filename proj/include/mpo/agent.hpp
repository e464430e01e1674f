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
#include <mutex>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mpo/domain.hpp"
#include "mpo/gridhouse.hpp"
#include "mpo/hash.hpp"
#include "mpo/jsonl.hpp"
#include "mpo/llm_client.hpp"
#include "mpo/prompts.hpp"
#include "mpo/text.hpp"

/// Agent prompts, response parsing and agent backends.
namespace mpo::agent {

enum class PlanPosition { instruction, thought, observation };

NLOHMANN_JSON_SERIALIZE_ENUM(PlanPosition, {{PlanPosition::instruction, "instruction"},
                                            {PlanPosition::thought, "thought"},
                                            {PlanPosition::observation, "observation"}})

inline PlanPosition parse_position(const std::string& s) {
  if (s == "instruction") return PlanPosition::instruction;
  if (s == "thought") return PlanPosition::thought;
  if (s == "observation") return PlanPosition::observation;
  throw UsageError("unknown plan position '" + s + "'", "usage");
}

inline constexpr std::string_view kObservationPlanLead = "Meta plan for this task:";

inline std::string instruction_header(const std::string& env_id) {
  switch (prompts::env_family(env_id)) {
    case prompts::EnvFamily::sciworld:
      return text::substitute(prompts::kSciworldInstruction,
                              {{"react", std::string(prompts::kReactFormat)},
                               {"actions", std::string(prompts::kSciworldActions)}});
    case prompts::EnvFamily::alfworld:
      return text::substitute(prompts::kHouseholdInstruction,
                              {{"react", std::string(prompts::kReactFormat)},
                               {"actions", std::string(prompts::kAlfworldActions)}});
    case prompts::EnvFamily::gridhouse:
      return text::substitute(prompts::kHouseholdInstruction,
                              {{"react", std::string(prompts::kReactFormat)},
                               {"actions", std::string(prompts::kGridhouseActions)}});
    case prompts::EnvFamily::webshop:
      return std::string(prompts::kWebshopInstruction);
  }
  return {};
}

// Opening messages of an episode. The first observation (or the bare task text)
// is the task instruction; the plan is inserted at the requested position.
inline std::vector<llm::ChatMessage> render_task_prompt(const TaskInstruction& task, const MetaPlan* plan,
                                                        PlanPosition position, const std::string& example,
                                                        const std::string& env_id,
                                                        const std::string& initial_observation = "") {
  std::string task_instruction = initial_observation.empty() ? task.text : initial_observation;
  if (plan && position == PlanPosition::observation)
    task_instruction += "\n\n" + std::string(kObservationPlanLead) + "\n" + plan->steps_text();
  std::string first = instruction_header(env_id) +
                      text::substitute(prompts::kExampleBlock, {{"example", example},
                                                                {"task_instruction", task_instruction}});
  if (plan && position == PlanPosition::instruction)
    first += "\n\n" + std::string(prompts::kPlanSentence) + "\n" + plan->steps_text();
  std::vector<llm::ChatMessage> out = {{"user", first}};
  if (plan && position == PlanPosition::thought) {
    std::vector<std::string> inline_steps;
    for (std::size_t i = 0; i < plan->steps.size(); ++i)
      inline_steps.push_back("Step " + std::to_string(i + 1) + ": " + plan->steps[i]);
    out.push_back({"assistant", "Thought: I will solve the task by following this meta plan. " +
                                    text::join(inline_steps, "; ") + "."});
    out.push_back({"user", "OK."});
  }
  return out;
}

// "[role]\ncontent" blocks separated by blank lines; used for golden files.
inline std::string format_transcript(const std::vector<llm::ChatMessage>& messages) {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += "\n\n";
    out += "[" + m.role + "]\n" + m.content;
  }
  return out + "\n";
}

struct ReactTurn {
  std::optional<std::string> thought;
  std::string action;
  bool operator==(const ReactTurn&) const = default;
};

// First "Action:" line wins; the thought is everything after "Thought:" up to it.
inline ReactTurn parse_react(const std::string& response) {
  ReactTurn turn;
  const auto lines = text::split_lines(response);
  std::optional<std::size_t> action_line;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string l(text::trim(lines[i]));
    if (text::starts_with(l, "Action:")) {
      turn.action = std::string(text::trim(std::string_view(l).substr(7)));
      action_line = i;
      break;
    }
  }
  if (!action_line) throw DataError("response has no 'Action:' line", "unparseable_response");
  if (turn.action.empty()) throw DataError("response has an empty action", "unparseable_response");
  std::string thought;
  bool in_thought = false;
  for (std::size_t i = 0; i < *action_line; ++i) {
    const std::string l(text::trim(lines[i]));
    if (!in_thought && text::starts_with(l, "Thought:")) {
      in_thought = true;
      thought = std::string(text::trim(std::string_view(l).substr(8)));
    } else if (in_thought && !l.empty()) {
      thought += (thought.empty() ? "" : " ") + l;
    }
  }
  if (in_thought) turn.thought = thought;
  return turn;
}

struct AgentContext {
  const TaskInstruction& task;
  const MetaPlan* plan = nullptr;
  std::string initial_observation;
  std::span<const TrajectoryStep> history;
  std::uint64_t seed = 0;
  double temperature = 0.0;
};

struct AgentTurn {
  std::optional<std::string> thought;
  Action action;
};

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual std::string describe() const = 0;
  virtual AgentTurn act(const AgentContext& ctx) const = 0;
};

// How plan-step text maps onto gridhouse actions. Each rule is a regex with a
// fixed meaning per capture group, tried in order.
enum class StepKind { locate, goto_abstract, goto_literal, goto_bare, take, put, process, open, literal };

struct GroundingRule {
  StepKind kind;
  std::string pattern;
};

struct GroundingTable {
  std::string version;
  std::vector<std::string> receptacles;
  std::set<std::string> openable;
  std::map<std::string, std::string> appliances;  // verb -> receptacle
  std::vector<std::string> object_classes;
  std::vector<GroundingRule> rules;

  bool empty() const { return receptacles.empty() || rules.empty(); }
};

inline GroundingTable gridhouse_grounding() {
  GroundingTable t;
  t.version = "gridhouse-v1";
  t.receptacles = gridhouse::receptacles();
  for (const auto& r : t.receptacles)
    if (gridhouse::is_openable(r)) t.openable.insert(r);
  t.appliances = {{"heat", "microwave 1"}, {"cool", "fridge 1"}, {"clean", "sink 1"}};
  t.object_classes = gridhouse::object_classes();
  const std::string ord = R"((?:(?:first|second|another|next|other) )?)";
  t.rules = {
      // 1: the phrase after "where".
      {StepKind::locate, R"(^go to where (.+)$)"},
      // 1: class, 2: optional index.
      {StepKind::goto_abstract, R"(^go back to (?:the )?([a-z]+)(?: (\d+))?$)"},
      {StepKind::goto_literal, R"(^go to (?:the )?([a-z]+) (\d+)$)"},
      {StepKind::goto_bare, R"(^go to (?:the )?([a-z]+)$)"},
      // 1: object class, 2: optional index, 3: optional source phrase.
      {StepKind::take, "^take (?:the |a |an )?" + ord + R"(([a-z]+)(?: (\d+))?(?: from (.+))?$)"},
      // 1: object class, 2: optional index, 3: destination phrase.
      {StepKind::put, "^put (?:the |a |an )?" + ord + R"(([a-z]+)(?: (\d+))? (?:in/on|in|on|into) (.+)$)"},
      // 1: verb, 2: object class, 3: optional index, 4: optional appliance phrase.
      {StepKind::process,
       "^(heat|cool|clean) (?:the |a |an )?" + ord + R"(([a-z]+)(?: (\d+))?(?: with (.+))?$)"},
      // 1: receptacle phrase.
      {StepKind::open, R"(^open (.+)$)"},
      {StepKind::literal, R"(^(look|inventory)$)"},
  };
  return t;
}

// What the follower believes about the room, folded from its own history.
struct Belief {
  std::string at = "start";
  std::optional<std::string> holding;
  std::map<std::string, std::vector<std::string>> contents;  // known receptacle contents
  std::set<std::string> open;
  std::set<std::string> processed;
  std::set<std::string> placed;  // instances this agent has put down

  bool knows(const std::string& r) const { return contents.count(r) > 0; }
};

inline std::vector<std::string> parse_item_list(std::string s) {
  if (!s.empty() && s.back() == '.') s.pop_back();
  std::vector<std::string> out;
  if (s == "nothing") return out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(", ", pos);
    std::string item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    pos = comma == std::string::npos ? s.size() + 1 : comma + 2;
    if (text::starts_with(item, "and ")) item = item.substr(4);
    if (text::starts_with(item, "a ")) item = item.substr(2);
    if (auto a = item.find(" and a "); a != std::string::npos) {
      out.push_back(item.substr(0, a));
      item = item.substr(a + 7);
    }
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline void update_belief(Belief& b, const std::string& action, const std::string& obs) {
  if (obs == gridhouse::kNothingHappens) return;
  const std::string a = text::lower(text::trim(action));
  auto after = [](const std::string& s, const std::string& marker) -> std::optional<std::string> {
    const auto p = s.find(marker);
    if (p == std::string::npos) return std::nullopt;
    return s.substr(p + marker.size());
  };
  if (text::starts_with(a, "go to ")) {
    b.at = a.substr(6);
    if (auto list = after(obs, "In it, you see ")) {
      b.open.insert(b.at);
      b.contents[b.at] = parse_item_list(*list);
    } else if (auto on = after(obs, ", you see ")) {
      b.contents[b.at] = parse_item_list(*on);
    } else if (obs.find(" is closed.") != std::string::npos) {
      b.open.erase(b.at);
    }
    return;
  }
  if (text::starts_with(a, "open ")) {
    const std::string r = a.substr(5);
    b.open.insert(r);
    if (auto list = after(obs, "In it, you see ")) b.contents[r] = parse_item_list(*list);
    return;
  }
  if (text::starts_with(a, "close ")) {
    b.open.erase(a.substr(6));
    return;
  }
  if (text::starts_with(obs, "You pick up the ")) {
    const auto from = obs.find(" from the ");
    const std::string obj = obs.substr(16, from - 16);
    std::string r = obs.substr(from + 10);
    if (!r.empty() && r.back() == '.') r.pop_back();
    b.holding = obj;
    auto& c = b.contents[r];
    c.erase(std::remove(c.begin(), c.end(), obj), c.end());
    return;
  }
  if (text::starts_with(obs, "You put the ")) {
    const auto in = obs.find(" in/on the ");
    const std::string obj = obs.substr(12, in - 12);
    std::string r = obs.substr(in + 11);
    if (!r.empty() && r.back() == '.') r.pop_back();
    b.holding.reset();
    b.contents[r].push_back(obj);
    b.placed.insert(obj);
    return;
  }
  for (const char* verb : {"heat", "cool", "clean"}) {
    const std::string lead = std::string("You ") + verb + " the ";
    if (text::starts_with(obs, lead)) {
      const auto u = obs.find(" using the ");
      b.processed.insert(obs.substr(lead.size(), u - lead.size()));
      return;
    }
  }
}

struct GroundedStep {
  StepKind kind = StepKind::literal;
  bool matched = false;
  std::string verbatim;
  std::vector<std::string> groups;
};

// Rule patterns compiled once per process.
inline const std::regex& compiled_rule(const std::string& pattern) {
  static std::mutex mu;
  static std::map<std::string, std::regex> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(pattern);
  if (it == cache.end()) it = cache.emplace(pattern, std::regex(pattern)).first;
  return it->second;
}

inline GroundedStep classify_step(const GroundingTable& table, const std::string& step) {
  GroundedStep g;
  g.verbatim = text::normalize_step(step);
  for (const auto& rule : table.rules) {
    std::smatch m;
    if (std::regex_match(g.verbatim, m, compiled_rule(rule.pattern))) {
      g.kind = rule.kind;
      g.matched = true;
      for (std::size_t i = 1; i < m.size(); ++i) g.groups.push_back(m[i].matched ? m[i].str() : "");
      break;
    }
  }
  return g;
}

// A concrete action for one turn. `completes` means the step is done once the
// action succeeds; multi-action steps re-check the belief instead.
struct Decision {
  std::string action;
  bool completes = true;
  bool step_done = false;
  bool random = false;
};

class PlanFollower final : public AgentBackend {
 public:
  explicit PlanFollower(double epsilon = 0.0, GroundingTable table = gridhouse_grounding(), int retries = 2)
      : epsilon_(epsilon), table_(std::move(table)), retries_(retries) {
    if (!(epsilon_ >= 0.0 && epsilon_ <= 1.0)) throw UsageError("epsilon must be in [0,1]");
  }

  std::string describe() const override {
    return "plan_follower:" + table_.version + ":eps=" + json(epsilon_).dump();
  }
  const GroundingTable& table() const noexcept { return table_; }

  // Legal-looking actions given the belief, in a fixed order.
  std::vector<std::string> legal_actions(const Belief& b) const {
    std::vector<std::string> out;
    if (table_.empty()) return out;
    for (const auto& r : table_.receptacles) out.push_back("go to " + r);
    if (table_.openable.count(b.at)) out.push_back((b.open.count(b.at) ? "close " : "open ") + b.at);
    const bool reachable = b.at != "start" && (!table_.openable.count(b.at) || b.open.count(b.at));
    if (reachable && !b.holding && b.knows(b.at))
      for (const auto& o : b.contents.at(b.at)) out.push_back("take " + o + " from " + b.at);
    if (reachable && b.holding) out.push_back("put " + *b.holding + " in/on " + b.at);
    if (b.holding)
      for (const auto& [verb, app] : table_.appliances)
        if (b.at == app) out.push_back(verb + " " + *b.holding + " with " + app);
    out.push_back("look");
    out.push_back("inventory");
    return out;
  }

  AgentTurn act(const AgentContext& ctx) const override {
    std::vector<GroundedStep> steps;
    if (ctx.plan)
      for (const auto& s : ctx.plan->steps) steps.push_back(classify_step(table_, s));
    Belief belief;
    Cursor cursor;
    for (std::size_t t = 0; t < ctx.history.size(); ++t) {
      const auto d = decide(steps, belief, cursor, ctx.seed, t);
      const auto& h = ctx.history[t];
      // Replays must follow the same decisions; a foreign action still updates the belief.
      if (!d.random && h.action.raw == d.action) advance(cursor, d, h.observation.text);
      update_belief(belief, h.action.raw, h.observation.text);
    }
    const auto d = decide(steps, belief, cursor, ctx.seed, ctx.history.size());
    AgentTurn turn{std::nullopt, Action(d.action.empty() ? std::string("wait") : d.action)};
    if (!d.random && cursor.step < steps.size() && cursor.attempts == 0 && cursor.fresh)
      turn.thought = "Now I work on step " + std::to_string(cursor.step + 1) + ": " + ctx.plan->steps[cursor.step] + ".";
    return turn;
  }

 private:
  struct Cursor {
    std::size_t step = 0;
    int attempts = 0;
    bool fresh = true;
  };

  static std::optional<std::string> resolve_receptacle(const GroundingTable& table, std::string phrase) {
    if (text::starts_with(phrase, "the ")) phrase = phrase.substr(4);
    if (std::find(table.receptacles.begin(), table.receptacles.end(), phrase) != table.receptacles.end())
      return phrase;
    std::optional<std::string> only;
    for (const auto& r : table.receptacles) {
      if (gridhouse::class_of(r) != phrase) continue;
      if (only) return std::nullopt;  // ambiguous class
      only = r;
    }
    return only;
  }

  static bool accessible(const GroundingTable& table, const Belief& b, const std::string& r) {
    return !table.openable.count(r) || b.open.count(r);
  }

  // A known instance of the class that is not held and not already placed.
  static std::optional<std::pair<std::string, std::string>> free_instance(const Belief& b, const std::string& cls) {
    for (const auto& [r, items] : b.contents)
      for (const auto& o : items)
        if (gridhouse::class_of(o) == cls && !b.placed.count(o)) return std::pair{o, r};
    return std::nullopt;
  }

  std::optional<std::string> mentioned_class(const std::string& phrase, bool objects) const {
    for (const auto& w : text::split_words(phrase)) {
      if (objects && std::find(table_.object_classes.begin(), table_.object_classes.end(), w) !=
                         table_.object_classes.end())
        return w;
      if (!objects && resolve_receptacle(table_, w)) return w;
    }
    return std::nullopt;
  }

  Decision navigate_and_open(const Belief& b, const std::string& r) const {
    if (b.at != r) return {"go to " + r, false};
    if (!accessible(table_, b, r)) return {"open " + r, false};
    return {"", false, true};
  }

  Decision ground(const GroundedStep& s, const Belief& b, const Cursor&) const {
    const auto& g = s.groups;
    if (!s.matched) return {s.verbatim};
    switch (s.kind) {
      case StepKind::locate: {
        if (auto cls = mentioned_class(g[0], true)) {
          if (b.holding && gridhouse::class_of(*b.holding) == *cls) return {"", false, true};
          if (auto found = free_instance(b, *cls)) return navigate_and_open(b, found->second);
          for (const auto& r : table_.receptacles) {
            if (b.knows(r)) continue;
            if (b.at == r) return {"open " + r, false};
            return {"go to " + r, false};
          }
          return {"look"};  // searched everywhere
        }
        if (auto rc = mentioned_class(g[0], false)) {
          const auto r = resolve_receptacle(table_, *rc);
          return b.at == *r ? Decision{"", false, true} : Decision{"go to " + *r};
        }
        return {s.verbatim};
      }
      case StepKind::goto_abstract: {
        const auto r = resolve_receptacle(table_, g[1].empty() ? g[0] : g[0] + " " + g[1]);
        if (!r) return {s.verbatim};
        return b.at == *r ? Decision{"", false, true} : Decision{"go to " + *r};
      }
      case StepKind::goto_literal: return {"go to " + g[0] + " " + g[1]};
      case StepKind::goto_bare: return {"go to " + g[0]};
      case StepKind::take: {
        const std::string& cls = g[0];
        if (b.holding && gridhouse::class_of(*b.holding) == cls) return {"", false, true};
        const bool abstract = g[2].empty() || g[2].find("where") != std::string::npos;
        if (!g[1].empty() || !abstract) {
          // Literal: use what is visible at the named place, else say it as written.
          const std::string obj = g[1].empty() ? cls : cls + " " + g[1];
          const std::string from = g[2].empty() ? b.at : g[2];
          if (g[1].empty() && b.at == from && b.knows(from))
            for (const auto& o : b.contents.at(from))
              if (gridhouse::class_of(o) == cls && !b.placed.count(o)) return {"take " + o + " from " + from};
          return {"take " + obj + " from " + from};
        }
        if (auto found = free_instance(b, cls)) {
          auto nav = navigate_and_open(b, found->second);
          if (!nav.step_done) return nav;
          return {"take " + found->first + " from " + found->second};
        }
        return {"take " + cls};
      }
      case StepKind::put: {
        const std::string& cls = g[0];
        const auto r = resolve_receptacle(table_, g[2]);
        const bool holding = b.holding && gridhouse::class_of(*b.holding) == cls &&
                             (g[1].empty() || *b.holding == cls + " " + g[1]);
        if (!r || !holding) return {"put " + (g[1].empty() ? cls : cls + " " + g[1]) + " in/on " + g[2]};
        auto nav = navigate_and_open(b, *r);
        if (!nav.step_done) return nav;
        return {"put " + *b.holding + " in/on " + *r};
      }
      case StepKind::process: {
        const std::string& verb = g[0];
        const std::string& cls = g[1];
        const auto app = table_.appliances.find(verb);
        if (app == table_.appliances.end()) return {s.verbatim};
        if (!g[3].empty()) {
          const auto named = resolve_receptacle(table_, g[3]);
          if (!named || *named != app->second) return {s.verbatim};
        }
        if (!b.holding || gridhouse::class_of(*b.holding) != cls)
          return {verb + " " + cls + " with " + app->second};
        if (b.processed.count(*b.holding)) return {"", false, true};
        if (b.at != app->second) return {"go to " + app->second, false};
        return {verb + " " + *b.holding + " with " + app->second};
      }
      case StepKind::open: {
        const auto r = resolve_receptacle(table_, g[0]);
        if (!r) return {"open " + g[0]};
        if (b.at == *r && b.open.count(*r)) return {"", false, true};
        return {"open " + *r};
      }
      case StepKind::literal: return {g[0]};
    }
    return {s.verbatim};
  }

  Decision decide(const std::vector<GroundedStep>& steps, const Belief& b, Cursor& cursor, std::uint64_t seed,
                  std::size_t t) const {
    const auto legal = legal_actions(b);
    if (legal.empty()) return {"wait", true, false, true};
    Rng rng(stable_hash(seed, std::string_view("agent"), std::uint64_t{t}));
    const bool perturb = epsilon_ > 0.0 && rng.uniform() < epsilon_;
    if (perturb || steps.empty()) return {legal[rng.below(legal.size())], false, false, true};
    while (cursor.step < steps.size()) {
      auto d = ground(steps[cursor.step], b, cursor);
      if (!d.step_done) return d;
      cursor.step++;
      cursor.attempts = 0;
      cursor.fresh = true;
    }
    return {"look", false};
  }

  void advance(Cursor& cursor, const Decision& d, const std::string& observation) const {
    cursor.fresh = false;
    if (observation == gridhouse::kNothingHappens) {
      if (++cursor.attempts > retries_) {
        cursor.step++;
        cursor.attempts = 0;
        cursor.fresh = true;
      }
      return;
    }
    cursor.attempts = 0;
    if (d.completes) {
      cursor.step++;
      cursor.fresh = true;
    }
  }

  double epsilon_;
  GroundingTable table_;
  int retries_;
};

// Replays recorded responses: JSONL {"task_id", "plan_id" (null allowed), "responses": [...]}.
class FixtureAgent final : public AgentBackend {
 public:
  explicit FixtureAgent(const std::filesystem::path& path) : path_(path.string()) {
    for (const auto& j : jsonl::read_file(path)) {
      if (!j.contains("task_id") || !j.contains("responses"))
        throw DataError(path_ + ": transcript record needs task_id and responses", "schema");
      const std::string plan = j.contains("plan_id") && !j["plan_id"].is_null() ? j["plan_id"].get<std::string>() : "";
      responses_[{j["task_id"].get<std::string>(), plan}] = j["responses"].get<std::vector<std::string>>();
    }
  }

  std::string describe() const override { return "fixture:" + path_; }

  AgentTurn act(const AgentContext& ctx) const override {
    const std::string plan = ctx.plan ? ctx.plan->plan_id : "";
    auto it = responses_.find({ctx.task.task_id, plan});
    if (it == responses_.end()) it = responses_.find({ctx.task.task_id, ""});
    if (it == responses_.end())
      throw DataError("transcript has no responses for " + ctx.task.task_id, "fixture_missing");
    const auto t = ctx.history.size();
    if (t >= it->second.size())
      throw DataError("transcript for " + ctx.task.task_id + " ended at turn " + std::to_string(t), "fixture_exhausted");
    const auto turn = parse_react(it->second[t]);
    return {turn.thought, Action(turn.action)};
  }

 private:
  std::string path_;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> responses_;
};

// A chat model driven with the rendered prompt and the running conversation.
class RemoteAgent final : public AgentBackend {
 public:
  RemoteAgent(llm::ChatEndpoint endpoint, std::string example, PlanPosition position = PlanPosition::instruction,
              int reprompts = 2)
      : client_(std::move(endpoint)), example_(std::move(example)), position_(position), reprompts_(reprompts) {}

  std::string describe() const override { return "remote:" + client_.endpoint().model; }

  std::vector<llm::ChatMessage> conversation(const AgentContext& ctx) const {
    auto messages = render_task_prompt(ctx.task, ctx.plan, position_, example_, ctx.task.env_id,
                                       ctx.initial_observation);
    for (const auto& s : ctx.history) {
      std::string said = s.thought ? "Thought: " + *s.thought + "\nAction: " : "Action: ";
      messages.push_back({"assistant", said + s.action.raw});
      messages.push_back({"user", "Observation: " + s.observation.text});
    }
    return messages;
  }

  AgentTurn act(const AgentContext& ctx) const override {
    auto messages = conversation(ctx);
    std::string last_error;
    for (int attempt = 0; attempt <= reprompts_; ++attempt) {
      const std::string reply = client_.complete(messages, ctx.temperature, 1).front();
      try {
        const auto turn = parse_react(reply);
        return {turn.thought, Action(turn.action)};
      } catch (const DataError& e) {
        last_error = e.what();
        messages.push_back({"assistant", reply});
        messages.push_back({"user", "Your response could not be parsed (" + last_error +
                                        "). Reply with \"Action: your next action\"."});
      }
    }
    throw DataError("agent response unparseable after " + std::to_string(reprompts_) + " re-prompts: " + last_error,
                    "unparseable_response");
  }

 private:
  llm::ChatClient client_;
  std::string example_;
  PlanPosition position_;
  int reprompts_;
};

}  // namespace mpo::agent
