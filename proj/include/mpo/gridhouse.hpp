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
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mpo/domain.hpp"
#include "mpo/hash.hpp"

/// A single-room, fully deterministic household environment in the style of
/// ALFWorld. Everything the agent sees is a pure function of (task, seed,
/// action sequence).
namespace mpo::gridhouse {

inline constexpr const char* kEnvId = "gridhouse";
inline constexpr const char* kNothingHappens = "Nothing happens.";

inline const std::vector<std::string>& receptacles() {
  static const std::vector<std::string> r = {"cabinet 1", "cabinet 2", "drawer 1",  "drawer 2",
                                             "shelf 1",   "sofa 1",    "table 1",   "fridge 1",
                                             "microwave 1", "sink 1"};
  return r;
}

inline const std::vector<std::string>& object_classes() {
  static const std::vector<std::string> o = {"pillow", "book", "cd",     "mug",
                                             "apple",  "egg",  "potato", "plate"};
  return o;
}

// Receptacles objects can start in, and the valid task targets.
inline const std::vector<std::string>& storage_receptacles() {
  static const std::vector<std::string> s = {"cabinet 1", "cabinet 2", "drawer 1", "drawer 2",
                                             "shelf 1",   "sofa 1",    "table 1"};
  return s;
}

inline bool is_openable(const std::string& recep) {
  static const std::set<std::string> o = {"cabinet 1", "cabinet 2", "drawer 1",
                                          "drawer 2",  "fridge 1",  "microwave 1"};
  return o.count(recep) > 0;
}

inline bool is_receptacle(const std::string& name) {
  const auto& r = receptacles();
  return std::find(r.begin(), r.end(), name) != r.end();
}

inline bool is_object_class(const std::string& name) {
  const auto& o = object_classes();
  return std::find(o.begin(), o.end(), name) != o.end();
}

// "cabinet 2" -> "cabinet"; "egg 1" -> "egg".
inline std::string class_of(const std::string& name) {
  const auto sp = name.rfind(' ');
  return sp == std::string::npos ? name : name.substr(0, sp);
}

enum class Template { put_one, put_two, heat_put, cool_put, clean_put };
enum class RewardMode { binary, dense };

NLOHMANN_JSON_SERIALIZE_ENUM(Template, {{Template::put_one, "put_one"},
                                        {Template::put_two, "put_two"},
                                        {Template::heat_put, "heat_put"},
                                        {Template::cool_put, "cool_put"},
                                        {Template::clean_put, "clean_put"}})
NLOHMANN_JSON_SERIALIZE_ENUM(RewardMode, {{RewardMode::binary, "binary"},
                                          {RewardMode::dense, "dense"}})

inline std::string to_string(Template t) { return json(t).get<std::string>(); }
inline std::string to_string(RewardMode m) { return json(m).get<std::string>(); }

// Processing verb and appliance for the three process templates.
inline std::optional<std::pair<std::string, std::string>> processing(Template t) {
  switch (t) {
    case Template::heat_put: return std::pair<std::string, std::string>{"heat", "microwave 1"};
    case Template::cool_put: return std::pair<std::string, std::string>{"cool", "fridge 1"};
    case Template::clean_put: return std::pair<std::string, std::string>{"clean", "sink 1"};
    default: return std::nullopt;
  }
}

struct GridTask {
  std::string id;
  Template tmpl = Template::put_one;
  std::string object;
  std::string target;
  RewardMode reward_mode = RewardMode::binary;

  void validate() const {
    if (!is_object_class(object)) throw DataError("unknown object class '" + object + "'", "vocabulary");
    const auto& s = storage_receptacles();
    if (std::find(s.begin(), s.end(), target) == s.end())
      throw DataError("unknown target receptacle '" + target + "'", "vocabulary");
  }

  std::size_t instances_needed() const { return tmpl == Template::put_two ? 2 : 1; }

  // Target as named in the instruction: the bare class when it is unique in the room.
  std::string target_phrase() const {
    const std::string cls = class_of(target);
    int count = 0;
    for (const auto& r : receptacles()) count += class_of(r) == cls;
    return count == 1 ? cls : target;
  }

  std::string goal_text() const {
    const std::string t = target_phrase();
    switch (tmpl) {
      case Template::put_one: return "put a " + object + " in " + t + ".";
      case Template::put_two: return "find two " + object + " and put them in " + t + ".";
      case Template::heat_put: return "heat some " + object + " and put it in " + t + ".";
      case Template::cool_put: return "cool some " + object + " and put it in " + t + ".";
      case Template::clean_put: return "clean some " + object + " and put it in " + t + ".";
    }
    return {};
  }

  static GridTask from_instruction(const TaskInstruction& task) {
    GridTask g;
    g.id = task.task_id;
    auto tmpl = parse_template(task.param("template"));
    if (!tmpl)
      throw DataError("task " + task.task_id + ": unknown template '" + task.param("template") + "'",
                      "vocabulary");
    g.tmpl = *tmpl;
    const std::string mode = task.param("reward_mode", "binary");
    if (mode != "binary" && mode != "dense")
      throw DataError("task " + task.task_id + ": unknown reward_mode '" + mode + "'", "vocabulary");
    g.reward_mode = mode == "dense" ? RewardMode::dense : RewardMode::binary;
    g.object = task.param("object");
    g.target = task.param("target");
    g.validate();
    return g;
  }

  static std::optional<Template> parse_template(const std::string& name) {
    for (auto t : {Template::put_one, Template::put_two, Template::heat_put, Template::cool_put,
                   Template::clean_put})
      if (to_string(t) == name) return t;
    return std::nullopt;
  }
};

inline std::string room_description() {
  const auto& r = receptacles();
  std::string s = "You are in the middle of a room. Looking quickly around you, you see ";
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (i) s += i + 1 == r.size() ? ", and " : ", ";
    s += "a " + r[i];
  }
  return s + ".";
}

inline TaskInstruction make_instruction(const std::string& task_id, Split split, Template tmpl,
                                        const std::string& object, const std::string& target,
                                        RewardMode mode = RewardMode::binary) {
  GridTask g{task_id, tmpl, object, target, mode};
  g.validate();
  return TaskInstruction{task_id,
                         "Your task is to: " + g.goal_text(),
                         kEnvId,
                         split,
                         {{"template", to_string(tmpl)},
                          {"object", object},
                          {"target", target},
                          {"reward_mode", to_string(mode)}}};
}

// 12 seen and 6 held-out unseen (template, object, target) combinations.
inline std::vector<TaskInstruction> task_catalog() {
  using T = Template;
  std::vector<TaskInstruction> tasks;
  const std::vector<std::tuple<T, std::string, std::string>> seen = {
      {T::put_one, "pillow", "sofa 1"},   {T::put_one, "book", "shelf 1"},
      {T::put_one, "cd", "table 1"},      {T::put_two, "pillow", "sofa 1"},
      {T::put_two, "book", "shelf 1"},    {T::heat_put, "egg", "table 1"},
      {T::heat_put, "mug", "table 1"},    {T::cool_put, "apple", "table 1"},
      {T::cool_put, "mug", "shelf 1"},    {T::clean_put, "plate", "shelf 1"},
      {T::clean_put, "apple", "table 1"}, {T::put_one, "mug", "shelf 1"}};
  const std::vector<std::tuple<T, std::string, std::string>> unseen = {
      {T::put_one, "potato", "table 1"}, {T::put_two, "cd", "shelf 1"},
      {T::heat_put, "potato", "shelf 1"}, {T::cool_put, "egg", "table 1"},
      {T::clean_put, "mug", "sofa 1"},    {T::put_one, "plate", "sofa 1"}};
  auto id = [](const char* split, std::size_t i) {
    return std::string("gh-") + split + "-" + (i < 10 ? "0" : "") + std::to_string(i);
  };
  for (std::size_t i = 0; i < seen.size(); ++i) {
    const auto& [t, o, r] = seen[i];
    tasks.push_back(make_instruction(id("seen", i), Split::seen, t, o, r));
  }
  for (std::size_t i = 0; i < unseen.size(); ++i) {
    const auto& [t, o, r] = unseen[i];
    tasks.push_back(make_instruction(id("unseen", i), Split::unseen, t, o, r));
  }
  return tasks;
}

struct WorldState {
  std::map<std::string, std::string> object_locations;  // object -> receptacle
  std::string agent_at = "start";
  std::optional<std::string> holding;
  std::map<std::string, bool> open_state;
  std::map<std::string, std::set<std::string>> processed;  // object -> {heated, cooled, cleaned}

  bool operator==(const WorldState&) const = default;
};

struct StepResult {
  Observation observation;
  bool done = false;
  double reward = 0.0;
};

// Initial receptacle of instance k of the task object: stable_hash over
// (task id, seed, k) modulo the storage receptacles other than the target.
inline std::string initial_placement(const GridTask& task, std::uint64_t seed, std::uint64_t k) {
  std::vector<std::string> candidates;
  for (const auto& r : storage_receptacles())
    if (r != task.target) candidates.push_back(r);
  return candidates[stable_hash(std::string_view(task.id), seed, k) % candidates.size()];
}

class GridHouse {
 public:
  Observation reset(const GridTask& task, std::uint64_t seed) {
    task.validate();
    task_ = task;
    state_ = WorldState{};
    for (const auto& r : receptacles())
      if (is_openable(r)) state_.open_state[r] = false;
    for (std::uint64_t k = 0; k < task.instances_needed(); ++k)
      state_.object_locations[task.object + " " + std::to_string(k + 1)] =
          initial_placement(task, seed, k);
    // Two distractor objects from the classes following the task object.
    const auto& classes = object_classes();
    const auto pos = static_cast<std::size_t>(
        std::find(classes.begin(), classes.end(), task.object) - classes.begin());
    const auto& storage = storage_receptacles();
    for (std::size_t d = 1; d <= 2; ++d) {
      const std::string name = classes[(pos + d) % classes.size()] + " 1";
      state_.object_locations[name] =
          storage[stable_hash(std::string_view(task.id), seed, std::string_view("distractor"),
                              std::uint64_t{d}) %
                  storage.size()];
    }
    latched_.assign(subgoal_count(), false);
    done_ = false;
    reset_ = true;
    return Observation{room_description() + "\n" + "Your task is to: " + task.goal_text(), false};
  }

  StepResult step(const Action& action) {
    if (!reset_) throw UsageError("step before reset", "env_state");
    if (done_) throw UsageError("step after episode is done", "env_state");
    auto text = apply(text::lower(text::trim(action.raw)));
    if (!text) return StepResult{Observation{kNothingHappens, false}, false, current_reward()};
    update_subgoals();
    done_ = goal_satisfied();
    return StepResult{Observation{*text, done_}, done_, current_reward()};
  }

  const WorldState& state() const noexcept { return state_; }
  const GridTask& task() const noexcept { return task_; }
  bool done() const noexcept { return done_; }

  // Cumulative score: binary 1/0 on the goal, dense the latched subgoal fraction.
  double current_reward() const {
    if (task_.reward_mode == RewardMode::binary) return goal_satisfied() ? 1.0 : 0.0;
    const auto n = static_cast<double>(std::count(latched_.begin(), latched_.end(), true));
    return n / static_cast<double>(latched_.size());
  }

  std::string describe(const std::string& recep) const {
    if (is_openable(recep)) {
      if (!state_.open_state.at(recep)) return "The " + recep + " is closed.";
      return "The " + recep + " is open. In it, you see " + contents(recep) + ".";
    }
    return "On the " + recep + ", you see " + contents(recep) + ".";
  }

 private:
  std::size_t subgoal_count() const {
    // put_two: held one, placed one, held a second, placed both.
    if (task_.tmpl == Template::put_two) return 4;
    return processing(task_.tmpl) ? 3 : 2;
  }

  bool instance_of_task(const std::string& obj) const { return class_of(obj) == task_.object; }

  bool accessible(const std::string& recep) const {
    return !is_openable(recep) || state_.open_state.at(recep);
  }

  std::string contents(const std::string& recep) const {
    std::vector<std::string> here;
    for (const auto& [obj, loc] : state_.object_locations)
      if (loc == recep) here.push_back(obj);
    if (here.empty()) return "nothing";
    std::string s;
    for (std::size_t i = 0; i < here.size(); ++i) {
      if (i) s += i + 1 == here.size() ? ", and " : ", ";
      s += "a " + here[i];
    }
    return s;
  }

  std::size_t placed_count() const {
    const auto proc = processing(task_.tmpl);
    std::size_t n = 0;
    for (const auto& [obj, loc] : state_.object_locations) {
      if (loc != task_.target || !instance_of_task(obj)) continue;
      if (proc) {
        auto it = state_.processed.find(obj);
        if (it == state_.processed.end() || !it->second.count(proc->first + "ed")) continue;
      }
      ++n;
    }
    return n;
  }

  bool goal_satisfied() const { return placed_count() >= task_.instances_needed(); }

  void update_subgoals() {
    const bool holding_task_obj = state_.holding && instance_of_task(*state_.holding);
    if (task_.tmpl == Template::put_two) {
      const std::size_t placed = placed_count();
      if (holding_task_obj) {
        latched_[0] = true;
        if (latched_[1] || placed >= 1) latched_[2] = true;
      }
      if (placed >= 1) latched_[1] = true;
      if (placed >= 2) latched_[3] = true;
      return;
    }
    if (holding_task_obj) latched_[0] = true;
    if (auto proc = processing(task_.tmpl)) {
      for (const auto& [obj, marks] : state_.processed)
        if (instance_of_task(obj) && marks.count(proc->first + "ed")) latched_[1] = true;
    }
    if (goal_satisfied()) latched_.back() = true;
  }

  // Returns the observation text, or nullopt for "Nothing happens." (state untouched).
  std::optional<std::string> apply(const std::string& a) {
    const auto words = text::split_words(a);
    if (words.empty()) return std::nullopt;
    const std::string& verb = words[0];
    auto rest_after = [&](std::size_t n) {
      std::vector<std::string> tail(words.begin() + static_cast<long>(n), words.end());
      return text::join(tail, " ");
    };

    if (a == "look") {
      if (state_.agent_at == "start") return room_description();
      return "You are facing the " + state_.agent_at + ".";
    }
    if (a == "inventory") {
      if (!state_.holding) return std::string("You are not carrying anything.");
      return "You are carrying: a " + *state_.holding + ".";
    }
    if (verb == "go" && words.size() >= 3 && words[1] == "to") {
      const std::string r = rest_after(2);
      if (!is_receptacle(r)) return std::nullopt;
      state_.agent_at = r;
      return describe(r);
    }
    if (verb == "examine" && words.size() >= 2) {
      const std::string r = rest_after(1);
      if (r != state_.agent_at) return std::nullopt;
      return describe(r);
    }
    if ((verb == "open" || verb == "close") && words.size() >= 2) {
      const std::string r = rest_after(1);
      if (r != state_.agent_at || !is_openable(r)) return std::nullopt;
      const bool opening = verb == "open";
      if (state_.open_state[r] == opening) return std::nullopt;
      state_.open_state[r] = opening;
      if (!opening) return "You close the " + r + ".";
      return "You open the " + r + ". The " + r + " is open. In it, you see " + contents(r) + ".";
    }
    if (verb == "take") {
      const auto from = a.find(" from ");
      if (from == std::string::npos) return std::nullopt;
      const std::string obj(text::trim(a.substr(5, from - 5)));
      const std::string r(text::trim(a.substr(from + 6)));
      if (r != state_.agent_at || !accessible(r) || state_.holding) return std::nullopt;
      auto it = state_.object_locations.find(obj);
      if (it == state_.object_locations.end() || it->second != r) return std::nullopt;
      state_.object_locations.erase(it);
      state_.holding = obj;
      return "You pick up the " + obj + " from the " + r + ".";
    }
    if (verb == "put") {
      const auto in = a.find(" in/on ");
      if (in == std::string::npos) return std::nullopt;
      const std::string obj(text::trim(a.substr(4, in - 4)));
      const std::string r(text::trim(a.substr(in + 7)));
      if (r != state_.agent_at || !accessible(r) || state_.holding != obj) return std::nullopt;
      state_.object_locations[obj] = r;
      state_.holding.reset();
      return "You put the " + obj + " in/on the " + r + ".";
    }
    if (verb == "heat" || verb == "cool" || verb == "clean") {
      const auto with = a.find(" with ");
      if (with == std::string::npos) return std::nullopt;
      const std::string obj(text::trim(a.substr(verb.size() + 1, with - verb.size() - 1)));
      const std::string r(text::trim(a.substr(with + 6)));
      const std::string appliance =
          verb == "heat" ? "microwave 1" : verb == "cool" ? "fridge 1" : "sink 1";
      if (r != appliance || state_.agent_at != r || state_.holding != obj) return std::nullopt;
      state_.processed[obj].insert(verb + "ed");
      return "You " + verb + " the " + obj + " using the " + r + ".";
    }
    return std::nullopt;
  }

  GridTask task_;
  WorldState state_;
  std::vector<bool> latched_;
  bool done_ = false;
  bool reset_ = false;
};

// Expert policy with full state access; always reaches the goal.
inline Trajectory oracle_trajectory(const GridTask& task, std::uint64_t seed) {
  GridHouse env;
  Trajectory traj;
  traj.task_id = task.id;
  traj.seed = seed;
  traj.initial_observation = env.reset(task, seed).text;

  auto act = [&](const std::string& raw) {
    auto r = env.step(Action(raw));
    traj.steps.push_back(TrajectoryStep{std::nullopt, Action(raw), r.observation});
    traj.final_reward = r.reward;
  };
  auto go = [&](const std::string& recep) {
    if (env.state().agent_at != recep) act("go to " + recep);
    if (is_openable(recep) && !env.state().open_state.at(recep)) act("open " + recep);
  };

  for (std::size_t k = 1; k <= task.instances_needed(); ++k) {
    const std::string obj = task.object + " " + std::to_string(k);
    const std::string loc = env.state().object_locations.at(obj);
    go(loc);
    act("take " + obj + " from " + loc);
    if (auto proc = processing(task.tmpl)) {
      act("go to " + proc->second);
      act(proc->first + " " + obj + " with " + proc->second);
    }
    go(task.target);
    act("put " + obj + " in/on " + task.target);
  }
  traj.success = env.done();
  return traj;
}

}  // namespace mpo::gridhouse
