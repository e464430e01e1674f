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

#include <stdexcept>
#include <string>

namespace mpo {

// Exit-code families used by the command line tool.
enum class ErrorCategory { usage = 2, data = 3, backend = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string kind, const std::string& message)
      : std::runtime_error(message), category_(category), kind_(std::move(kind)) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }
  // Short machine-readable tag, e.g. "protocol_violation".
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorCategory category_;
  std::string kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message, std::string kind = "usage")
      : Error(ErrorCategory::usage, std::move(kind), message) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message, std::string kind = "data_contract")
      : Error(ErrorCategory::data, std::move(kind), message) {}
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& message, std::string kind = "backend")
      : Error(ErrorCategory::backend, std::move(kind), message) {}
};

}  // namespace mpo
