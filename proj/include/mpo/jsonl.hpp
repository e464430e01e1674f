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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpo/error.hpp"

namespace mpo {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace jsonl {

// Reads one JSON value per non-blank line.
inline std::vector<json> read_lines(std::istream& in, const std::string& origin = "<stream>") {
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what(),
                      "invalid_jsonl");
    }
  }
  return out;
}

inline std::vector<json> read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string(), "io");
  return read_lines(in, path.string());
}

template <typename T>
std::vector<T> read_records(const std::filesystem::path& path) {
  std::vector<T> out;
  std::size_t lineno = 0;
  for (const auto& j : read_file(path)) {
    ++lineno;
    try {
      out.push_back(j.get<T>());
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": record " + std::to_string(lineno) + ": " + e.what(),
                      "schema");
    }
  }
  return out;
}

template <typename Json>
void write_line(std::ostream& out, const Json& j) {
  out << j.dump(-1, ' ', false, nlohmann::detail::error_handler_t::strict) << '\n';
}

template <typename Range>
void write_file(const std::filesystem::path& path, const Range& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string(), "io");
  for (const auto& r : records) write_line(out, json(r));
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string(), "io");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string(), "io");
  out << content;
}

}  // namespace jsonl
}  // namespace mpo
