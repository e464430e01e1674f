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

#include <array>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <sys/wait.h>

#include "mpo/pipeline.hpp"

namespace mpo::test {

namespace fs = std::filesystem;

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "mpo") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& p) const { return path_ / p; }

 private:
  fs::path path_;
};

struct CommandResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs a shell command, capturing stdout and stderr separately.
inline CommandResult run(const std::string& command) {
  TempDir scratch("mpo-cmd");
  const auto out_path = scratch / "out";
  const auto err_path = scratch / "err";
  const std::string full = command + " >" + out_path.string() + " 2>" + err_path.string();
  const int status = std::system(full.c_str());
  CommandResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = jsonl::read_text(out_path);
  r.err = jsonl::read_text(err_path);
  return r;
}

inline std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

inline const TaskInstruction& catalog_task(const std::string& id) {
  static const auto tasks = gridhouse::task_catalog();
  return find_task(tasks, id);
}

inline MetaPlan plan_from_steps(const std::string& task_id, std::vector<std::string> steps,
                                std::size_t index = 0) {
  MetaPlan p;
  p.plan_id = plan_id_for(task_id, index);
  p.task_id = task_id;
  p.steps = std::move(steps);
  p.raw = p.render();
  p.source = PlanSource::sampled;
  return p;
}

}  // namespace mpo::test
