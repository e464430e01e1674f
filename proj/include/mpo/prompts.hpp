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

#include <string>
#include <string_view>

#include "mpo/error.hpp"

// Prompt templates. Placeholders use {name}; the action lists keep {obj} and
// {recep} verbatim because they are part of the text shown to the model.
namespace mpo::prompts {

inline constexpr std::string_view kMetaPlanFormat = R"(The generated meta plan should be written in the following format:
<meta_plan>
Step 1: ...
Step 2: ...
...
</meta_plan>)";

inline constexpr std::string_view kSciworldActions = R"(    open OBJ: open a container
    close OBJ: close a container
    activate OBJ: activate a device
    deactivate OBJ: deactivate a device
    connect OBJ to OBJ: connect electrical components
    disconnect OBJ: disconnect electrical components
    use OBJ [on OBJ]: use a device/item
    look around: describe the current room
    examine OBJ: describe an object in detail
    look at OBJ: describe a container's contents
    read OBJ: read a note or book
    move OBJ to OBJ: move an object to a container
    pick up OBJ: move an object to the inventory
    pour OBJ into OBJ: pour a liquid into a container
    mix OBJ: chemically mix a container
    teleport to LOC: teleport to a specific room
    focus on OBJ: signal intent on a task object
    wait: task no action for 10 steps
    wait1: task no action for a step)";

inline constexpr std::string_view kSciworldCollection = R"(Please generate a step-by-step meta plan for a scientific task:
<task>
You are a helpful assistant to do some scientific experiment in an environment.
In the environment, there are several rooms: kitchen, foundry, workshop, bathroom, outside, living room, bedroom, greenhouse, art studio, hallway.
{task}
</task>

You should explore the environment and find the items you need to complete the experiment. You can teleport to any room in one step.
All containers in the environment have already been opened, you can directly get items from the containers.

The available actions are:
{actions}

Below is the standard and detailed procedure for solving this task:
<conversation>
{conversation}
</conversation>

You need to conclude abstract steps as a meta plan, which can be used to solve similar tasks in the future.
The meta plan should be a commonly-reused routine of the tasks.
{format})";

// The ALFWorld collection list is reproduced as published, including "task {obj} from {recep}".
inline constexpr std::string_view kAlfworldCollectionActions = R"(    1. go to {recep}
    2. task {obj} from {recep}
    3. put {obj} in/on {recep}
    4. open {recep}
    5. close {recep}
    6. toggle {obj} {recep}
    7. clean {obj} with {recep}
    8. heat {obj} with {recep}
    9. cool {obj} with {recep})";

inline constexpr std::string_view kAlfworldActions = R"(    1. go to {recep}
    2. take {obj} from {recep}
    3. put {obj} in/on {recep}
    4. open {recep}
    5. close {recep}
    6. toggle {obj} {recep}
    7. clean {obj} with {recep}
    8. heat {obj} with {recep}
    9. cool {obj} with {recep})";

inline constexpr std::string_view kGridhouseActions = R"(    1. go to {recep}
    2. take {obj} from {recep}
    3. put {obj} in/on {recep}
    4. open {recep}
    5. close {recep}
    6. clean {obj} with {recep}
    7. heat {obj} with {recep}
    8. cool {obj} with {recep}
    9. look
    10. inventory)";

inline constexpr std::string_view kHouseholdCollection = R"(Please generate a step-by-step meta plan for a house holding task:
<task>
{task}
</task>

The action list you can take:
{actions}
where {obj} and {recep} correspond to objects and receptacles.

Below is the standard and detailed procedure for solving this task:
<conversation>
{conversation}
</conversation>

{format})";

inline constexpr std::string_view kWebshopCollection = R"(Please generate a step-by-step meta plan for a webshopping task:
You are web shopping. I will give you instructions about what to do. You have to follow the instructions.
<task>
{task}
</task>

Every round I will give you an observation and a list of available actions, you have to respond an action based on the state and instruction. You can use search action if search is available. You can click one of the buttons in clickables.

The available actions are:
    click[value]: click a button
    search[keywords]: search for a keyword

If the action is not valid, perform nothing. Keywords in search are up to you, but the value in click must be a value in the list of available actions. Remember that your keywords in search should be carefully designed.

Below is the standard and detailed procedure for solving this task:
<conversation>
{conversation}
</conversation>

{format})";

inline constexpr std::string_view kReactFormat =
    R"(For each of your turn, you will be given the observation of the last turn. You should choose from two actions: "Thought" or "Action". If you choose "Thought", you should first think about the current condition and plan for your future actions, and then output your action in this turn. Your output must strictly follow this format:"Thought: your thoughts.\n Action: your next action"; If you choose "Action", you should directly output the action in this turn. Your output must strictly follow this format:"Action: your next action".)";

inline constexpr std::string_view kSciworldInstruction = R"(You are a helpful assistant to do some scientific experiment in an environment.
In the environment, there are several rooms: kitchen, foundry, workshop, bathroom, outside, living room, bedroom, greenhouse, art studio, hallway.
You should explore the environment and find the items you need to complete the experiment. You can teleport to any room in one step.
All containers in the environment have already been opened, you can directly get items from the containers.
{react} Remember that you can only output one "Action:" in per response.

The available actions are:
{actions})";

inline constexpr std::string_view kHouseholdInstruction = R"(Interact with a household to solve a task. Imagine you are an intelligent agent in a household environment and your target is to perform actions to complete the task goal. At the beginning of your interactions, you will be given the detailed description of the current environment and your goal to accomplish.
{react}
The available actions are:
{actions}
where {obj} and {recep} correspond to objects and receptacles.
After your each turn, the environment will give you immediate feedback based on which you plan your next few steps. if the envrionment output "Nothing happened", that means the previous action is invalid and you should try more options.
Reminder:
1. The action must be chosen from the given available actions. Any actions except provided available actions will be regarded as illegal.
2. Think when necessary, try to act directly more in the process.)";

inline constexpr std::string_view kWebshopInstruction = R"(You are web shopping. I will give you instructions about what to do. You have to follow the instructions.
Every round I will give you an observation and a list of available actions, you have to respond an action based on the state and instruction. You can use search action if search is available. You can click one of the buttons in clickables.
An action should be of the following structure:
    search[keywords]
    click[value]
If the action is not valid, perform nothing. Keywords in search are up to you, but the value in click must be a value in the list of available actions. Remember that your keywords in search should be carefully designed.
Your response should use the following format:
Thought: I think ...
Action: click[something])";

inline constexpr std::string_view kExampleBlock = R"(

- - -
Here is an example.
{example}
- - -

Now, it's your turn and here is the task.
{task_instruction})";

inline constexpr std::string_view kPlanSentence =
    "This meta plan maybe helpful for you to complete the task:";

inline constexpr std::string_view kJudge = R"(Please act as a professional instruction evaluator and assess the following two sets of meta plans.

Task description: {task}

DPO Plan:
{dpo}

SFT Plan:
{sft}

Please compare these two sets of meta plans across the following three dimensions:
1. Correctness - Does the meta plan accurately fulfill the task requirements?
2. Followability - Is the meta plan clear, easy to understand, and are the steps reasonable?
3. Standardization - Does the meta plan follow a consistent and standardized format?

For each dimension, please indicate which meta plan is better and provide reasoning. Finally, provide an overall assessment.
Please output the result in JSON format, including the following fields:
{
    "correctness_better": "dpo"/"sft"/"tie",
    "correctness_reason": "reason",
    "followability_better": "dpo"/"sft"/"tie",
    "followability_reason": "reason",
    "standardization_better": "dpo"/"sft"/"tie",
    "standardization_reason": "reason",
    "overall_better": "dpo"/"sft"/"tie"
})";

enum class EnvFamily { gridhouse, alfworld, sciworld, webshop };

inline EnvFamily env_family(std::string_view env_id) {
  if (env_id == "gridhouse") return EnvFamily::gridhouse;
  if (env_id == "alfworld") return EnvFamily::alfworld;
  if (env_id == "sciworld" || env_id == "scienceworld") return EnvFamily::sciworld;
  if (env_id == "webshop") return EnvFamily::webshop;
  throw UsageError("unknown env_id '" + std::string(env_id) + "'", "unknown_env");
}

}  // namespace mpo::prompts
