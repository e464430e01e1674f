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

#include <chrono>
#include <cstdint>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mpo/domain.hpp"
#include "mpo/gridhouse.hpp"
#include "mpo/subprocess.hpp"

/// Uniform environment interface and the newline-delimited JSON protocol used
/// to attach external environments over a child process's stdin/stdout.
///
/// Requests (one compact JSON object per line, keys in this order):
///   {"op":"reset","task_id":"...","seed":N}
///   {"op":"step","action":"..."}
///   {"op":"shutdown"}
/// Replies:
///   {"observation":"...","done":false,"reward":0.0}
/// optionally carrying "success" (bool) and "episode" (integer, strictly
/// increasing across resets). Failures are reported as {"error":"...", "code":"..."}.
namespace mpo::envproto {

struct EnvStep {
  Observation observation;
  bool done = false;
  double reward = 0.0;
  std::optional<bool> success;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual Observation reset(const std::string& task_id, std::uint64_t seed) = 0;
  virtual EnvStep step(const Action& action) = 0;
  virtual const std::string& env_id() const = 0;
  // Episode id reported with the last reply, when the environment provides one.
  virtual std::optional<std::int64_t> episode() const { return std::nullopt; }
};

enum class EndpointKind { builtin, subprocess };

struct EnvEndpoint {
  EndpointKind kind = EndpointKind::builtin;
  // Shell command line for subprocess endpoints.
  std::string address;
  std::string env_id = gridhouse::kEnvId;
  double timeout_s = 60.0;

  // "gridhouse" | "builtin:gridhouse" | "cmd:<command line>"
  static EnvEndpoint parse(const std::string& spec, const std::string& env_id = "") {
    EnvEndpoint e;
    if (text::starts_with(spec, "cmd:")) {
      e.kind = EndpointKind::subprocess;
      e.address = spec.substr(4);
      e.env_id = env_id.empty() ? std::string(gridhouse::kEnvId) : env_id;
      if (e.address.empty()) throw UsageError("empty subprocess command in endpoint '" + spec + "'");
      return e;
    }
    const std::string name = text::starts_with(spec, "builtin:") ? spec.substr(8) : spec;
    if (name != gridhouse::kEnvId)
      throw UsageError("unknown builtin environment '" + name + "'", "unknown_env");
    e.kind = EndpointKind::builtin;
    e.env_id = name;
    return e;
  }
};

class GridhouseEnv final : public Environment {
 public:
  explicit GridhouseEnv(std::vector<TaskInstruction> tasks) : tasks_(std::move(tasks)) {}

  Observation reset(const std::string& task_id, std::uint64_t seed) override {
    const auto& task = find_task(tasks_, task_id);
    return env_.reset(gridhouse::GridTask::from_instruction(task), seed);
  }

  EnvStep step(const Action& action) override {
    auto r = env_.step(action);
    return EnvStep{r.observation, r.done, r.reward, r.done};
  }

  const std::string& env_id() const override { return env_id_; }
  const gridhouse::GridHouse& world() const noexcept { return env_; }

 private:
  std::vector<TaskInstruction> tasks_;
  gridhouse::GridHouse env_;
  std::string env_id_ = gridhouse::kEnvId;
};

// Schema checks shared by the client and the conformance suite.
struct ReplyCheck {
  std::optional<std::string> problem;
  ReplyCheck& require(bool ok, const std::string& what) {
    if (!ok && !problem) problem = what;
    return *this;
  }
};

inline std::string protocol_request_reset(const std::string& task_id, std::uint64_t seed) {
  ordered_json j;
  j["op"] = "reset";
  j["task_id"] = task_id;
  j["seed"] = seed;
  return j.dump();
}

inline std::string protocol_request_step(const std::string& action) {
  ordered_json j;
  j["op"] = "step";
  j["action"] = action;
  return j.dump();
}

inline std::string protocol_request_shutdown() { return R"({"op":"shutdown"})"; }

class SubprocessEnv final : public Environment {
 public:
  explicit SubprocessEnv(const EnvEndpoint& endpoint)
      : endpoint_(endpoint),
        timeout_(std::chrono::milliseconds(static_cast<long>(endpoint.timeout_s * 1000.0))),
        child_(std::make_unique<ChildProcess>(endpoint.address)) {}

  ~SubprocessEnv() override { shutdown(); }

  Observation reset(const std::string& task_id, std::uint64_t seed) override {
    const json reply = round_trip(protocol_request_reset(task_id, seed));
    ReplyCheck c;
    c.require(reply.contains("observation") && reply["observation"].is_string(),
              "reply lacks string field 'observation'");
    if (reply.contains("done")) c.require(reply["done"].is_boolean(), "field 'done' is not boolean");
    if (reply.contains("reward")) c.require(reply["reward"].is_number(), "field 'reward' is not a number");
    if (c.problem) throw violation(*c.problem, last_line_);
    track_episode(reply);
    done_ = false;
    return Observation{reply["observation"].get<std::string>(), false};
  }

  EnvStep step(const Action& action) override {
    if (done_) throw UsageError("step after episode is done", "env_state");
    const json reply = round_trip(protocol_request_step(action.raw));
    ReplyCheck c;
    c.require(reply.contains("observation") && reply["observation"].is_string(),
              "reply lacks string field 'observation'")
        .require(reply.contains("done") && reply["done"].is_boolean(),
                 "reply lacks boolean field 'done'")
        .require(reply.contains("reward") && reply["reward"].is_number(),
                 "reply lacks numeric field 'reward'");
    if (c.problem) throw violation(*c.problem, last_line_);
    const double reward = reply["reward"].get<double>();
    if (!(reward >= 0.0 && reward <= 1.0))
      throw BackendError("reward " + reply["reward"].dump() + " outside [0,1] in reply: " + last_line_,
                         "reward_out_of_range");
    track_episode(reply);
    EnvStep s;
    s.done = reply["done"].get<bool>();
    s.observation = Observation{reply["observation"].get<std::string>(), s.done};
    s.reward = reward;
    if (reply.contains("success") && reply["success"].is_boolean()) s.success = reply["success"].get<bool>();
    done_ = s.done;
    return s;
  }

  const std::string& env_id() const override { return endpoint_.env_id; }
  std::optional<std::int64_t> episode() const override { return episode_; }
  bool alive() { return child_ && child_->running(); }

  // Sends shutdown and waits up to 5 s before killing the child. Returns true
  // when the child exited on its own.
  bool shutdown() {
    if (!child_) return true;
    bool clean = false;
    try {
      if (child_->running()) child_->write_line(protocol_request_shutdown());
    } catch (const Error&) {
    }
    child_->close_stdin();
    clean = child_->wait_for_exit(std::chrono::seconds(5));
    if (!clean) child_->kill();
    child_.reset();
    return clean;
  }

 private:
  static BackendError violation(const std::string& what, const std::string& line) {
    return BackendError("protocol violation: " + what + "; offending line: " + line,
                        "protocol_violation");
  }

  json round_trip(const std::string& request) {
    if (!child_) throw BackendError("environment already shut down", "child_exited");
    child_->write_line(request);
    last_line_ = child_->read_line(timeout_);
    json reply;
    try {
      reply = json::parse(last_line_);
    } catch (const json::parse_error&) {
      throw violation("malformed reply line", last_line_);
    }
    if (!reply.is_object()) throw violation("reply is not a JSON object", last_line_);
    if (reply.contains("error")) {
      const std::string code = reply.value("code", "");
      const std::string msg = reply["error"].is_string() ? reply["error"].get<std::string>()
                                                         : reply["error"].dump();
      if (code == "unknown_task") throw DataError("environment: " + msg, "unknown_task");
      throw BackendError("environment error: " + msg, "env_error");
    }
    return reply;
  }

  void track_episode(const json& reply) {
    if (reply.contains("episode") && reply["episode"].is_number_integer())
      episode_ = reply["episode"].get<std::int64_t>();
  }

  EnvEndpoint endpoint_;
  std::chrono::milliseconds timeout_;
  std::unique_ptr<ChildProcess> child_;
  std::string last_line_;
  std::optional<std::int64_t> episode_;
  bool done_ = false;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

inline std::unique_ptr<Environment> open_environment(const EnvEndpoint& endpoint,
                                                     const std::vector<TaskInstruction>& tasks) {
  if (endpoint.kind == EndpointKind::subprocess) return std::make_unique<SubprocessEnv>(endpoint);
  if (endpoint.env_id != gridhouse::kEnvId)
    throw UsageError("builtin endpoint must name a registered environment, got '" + endpoint.env_id + "'",
                     "unknown_env");
  return std::make_unique<GridhouseEnv>(tasks);
}

inline EnvFactory make_factory(EnvEndpoint endpoint, std::vector<TaskInstruction> tasks) {
  return [endpoint = std::move(endpoint), tasks = std::move(tasks)] {
    return open_environment(endpoint, tasks);
  };
}

inline Observation env_reset(Environment& env, const std::string& task_id, std::uint64_t seed) {
  return env.reset(task_id, seed);
}

inline EnvStep env_step(Environment& env, const Action& action) { return env.step(action); }

// Serves gridhouse over the protocol until shutdown or end of input. This is
// the loopback bridge used to check that builtin and subprocess paths agree.
inline int serve_gridhouse(std::istream& in, std::ostream& out,
                           const std::vector<TaskInstruction>& tasks) {
  GridhouseEnv env(tasks);
  bool ready = false;
  std::int64_t episode = 0;
  std::string line;
  auto reply = [&](const ordered_json& j) { out << j.dump() << '\n' << std::flush; };
  auto error = [&](const std::string& msg, const std::string& code) {
    ordered_json j;
    j["error"] = msg;
    j["code"] = code;
    reply(j);
  };
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    json req;
    try {
      req = json::parse(line);
    } catch (const json::parse_error&) {
      error("malformed request line", "bad_request");
      continue;
    }
    const std::string op = req.value("op", "");
    if (op == "shutdown") return 0;
    try {
      if (op == "reset") {
        const auto obs = env.reset(req.at("task_id").get<std::string>(), req.at("seed").get<std::uint64_t>());
        ready = true;
        ordered_json j;
        j["observation"] = obs.text;
        j["done"] = false;
        j["reward"] = 0.0;
        j["episode"] = ++episode;
        reply(j);
      } else if (op == "step") {
        if (!ready) {
          error("step before reset", "bad_state");
          continue;
        }
        const auto s = env.step(Action(req.at("action").get<std::string>()));
        ordered_json j;
        j["observation"] = s.observation.text;
        j["done"] = s.done;
        j["reward"] = s.reward;
        j["success"] = s.done;
        j["episode"] = episode;
        if (s.done) ready = false;
        reply(j);
      } else {
        error("unknown op '" + op + "'", "bad_request");
      }
    } catch (const DataError& e) {
      error(e.what(), e.kind() == "unknown_task" ? "unknown_task" : "bad_request");
    } catch (const Error& e) {
      error(e.what(), "bad_request");
    } catch (const json::exception& e) {
      error(e.what(), "bad_request");
    }
  }
  return 0;
}

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ConformanceCheck, name, passed, detail)

struct ConformanceReport {
  std::vector<ConformanceCheck> checks;
  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }
};

struct ConformanceOptions {
  std::string task_id = "gh-seen-00";
  std::uint64_t seed = 0;
  std::vector<std::string> probe_actions = {"look", "inventory", "look"};
  std::string illegal_action = "xyzzy the frobnicator";
};

// Scripted handshake, reset, three steps, an illegal-action probe, a second
// reset for episode ordering, and shutdown. Failures are report content.
inline ConformanceReport conformance_check(const EnvEndpoint& endpoint,
                                           const std::vector<TaskInstruction>& tasks,
                                           const ConformanceOptions& opt = {}) {
  ConformanceReport report;
  auto add = [&](std::string name, bool ok, std::string detail) {
    report.checks.push_back({std::move(name), ok, std::move(detail)});
  };

  std::unique_ptr<Environment> env;
  try {
    env = open_environment(endpoint, tasks);
    bool alive = true;
    if (auto* sub = dynamic_cast<SubprocessEnv*>(env.get())) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      alive = sub->alive();
    }
    add("handshake", alive, alive ? "environment opened" : "child exited right after spawn");
    if (!alive) return report;
  } catch (const Error& e) {
    add("handshake", false, e.what());
    return report;
  }

  std::optional<std::int64_t> first_episode;
  try {
    const auto obs = env->reset(opt.task_id, opt.seed);
    add("reset", !obs.text.empty(), obs.text.empty() ? "empty observation" : "ok");
    first_episode = env->episode();
  } catch (const Error& e) {
    add("reset", false, e.what());
    add("shutdown", true, "skipped");
    return report;
  }

  bool schema_ok = true;
  bool range_ok = true;
  bool ended = false;
  std::string schema_detail = "ok";
  std::string range_detail = "ok";
  bool episode_consistent = true;
  for (std::size_t i = 0; i < opt.probe_actions.size() && !ended; ++i) {
    try {
      const auto s = env->step(Action(opt.probe_actions[i]));
      ended = s.done;
      if (first_episode && env->episode() != first_episode) episode_consistent = false;
    } catch (const Error& e) {
      if (e.kind() == "reward_out_of_range") {
        range_ok = false;
        range_detail = e.what();
      } else {
        schema_ok = false;
        schema_detail = e.what();
      }
      break;
    }
  }
  add("step_schema", schema_ok, schema_detail);
  add("reward_range", range_ok, range_detail);

  if (!ended && schema_ok && range_ok) {
    try {
      const auto s = env->step(Action(opt.illegal_action));
      add("illegal_action", !s.done, s.done ? "illegal action ended the episode" : s.observation.text);
    } catch (const Error& e) {
      add("illegal_action", false, e.what());
    }
  } else {
    add("illegal_action", ended, ended ? "episode ended before probe" : "skipped after step failure");
  }

  try {
    env->reset(opt.task_id, opt.seed + 1);
    const auto second = env->episode();
    bool ok = episode_consistent;
    std::string detail = "no episode ids reported";
    if (first_episode || second) {
      ok = ok && first_episode && second && *second > *first_episode;
      detail = "episode ids " + (first_episode ? std::to_string(*first_episode) : std::string("none")) +
               " -> " + (second ? std::to_string(*second) : std::string("none"));
      if (!episode_consistent) detail += "; step reply episode id differs from reset";
    }
    add("episode_ordering", ok, detail);
  } catch (const Error& e) {
    add("episode_ordering", false, e.what());
  }

  if (auto* sub = dynamic_cast<SubprocessEnv*>(env.get())) {
    const bool clean = sub->shutdown();
    add("shutdown", clean, clean ? "exited within 5 s" : "killed after 5 s");
  } else {
    add("shutdown", true, "builtin");
  }
  return report;
}

}  // namespace mpo::envproto
