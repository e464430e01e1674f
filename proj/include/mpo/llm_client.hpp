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
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "mpo/error.hpp"
#include "mpo/jsonl.hpp"

/// Minimal client for OpenAI-compatible chat completion servers.
namespace mpo::llm {

struct ChatMessage {
  std::string role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ChatMessage, role, content)

struct ChatEndpoint {
  std::string base_url;
  std::string model;
  // Name of the environment variable holding the bearer token.
  std::string api_key_env = "MPO_API_KEY";
  double timeout_s = 60.0;
  int retries = 2;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ChatEndpoint, base_url, model, api_key_env,
                                                timeout_s, retries)

class ChatClient {
 public:
  explicit ChatClient(ChatEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    if (endpoint_.base_url.empty()) throw UsageError("chat endpoint needs a base_url");
    split_url();
  }

  const ChatEndpoint& endpoint() const noexcept { return endpoint_; }

  // POST {base_url}/v1/chat/completions; returns the content of every choice.
  std::vector<std::string> complete(const std::vector<ChatMessage>& messages, double temperature,
                                    int n = 1) const {
    ordered_json body;
    body["model"] = endpoint_.model;
    body["messages"] = json(messages);
    body["temperature"] = temperature;
    body["n"] = n;
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string last_error;
    for (int attempt = 0; attempt <= endpoint_.retries; ++attempt) {
      if (attempt) std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
      httplib::Client cli(origin_);
      const auto timeout = std::chrono::duration<double>(endpoint_.timeout_s);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      auto res = cli.Post(path_prefix_ + "/v1/chat/completions", headers, payload,
                          "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw BackendError("chat endpoint returned HTTP " + std::to_string(res->status) + ": " +
                               res->body.substr(0, 200),
                           "http_status");
      return parse_choices(res->body);
    }
    throw BackendError("chat endpoint failed after " + std::to_string(endpoint_.retries + 1) +
                           " attempts: " + last_error,
                       "transport");
  }

  static std::vector<std::string> parse_choices(const std::string& body) {
    try {
      const auto j = json::parse(body);
      std::vector<std::string> out;
      for (const auto& c : j.at("choices")) out.push_back(c.at("message").at("content").get<std::string>());
      if (out.empty()) throw BackendError("chat response has no choices", "bad_response");
      return out;
    } catch (const json::exception& e) {
      throw BackendError(std::string("malformed chat response: ") + e.what(), "bad_response");
    }
  }

 private:
  void split_url() {
    const std::string& url = endpoint_.base_url;
    const auto scheme = url.find("://");
    const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = url.find('/', host_start);
    origin_ = slash == std::string::npos ? url : url.substr(0, slash);
    path_prefix_ = slash == std::string::npos ? "" : url.substr(slash);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }

  ChatEndpoint endpoint_;
  std::string origin_;
  std::string path_prefix_;
};

}  // namespace mpo::llm
