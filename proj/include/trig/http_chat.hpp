// Copyright 2026 The trig Authors. All Rights Reserved.
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

// Chat-completion client over HTTP. Requests follow the common
// chat-completions JSON shape:
//   POST <url>  {"model": ..., "temperature": 0, "messages": [{"role", "content"}, ...]}
// and the reply text is read from choices[0].message.content.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include <openssl/evp.h>

#include "trig/pipeline.hpp"

namespace trig {

inline constexpr const char* kTokenEnvVar = "TRIG_LLM_TOKEN";

struct HttpChatConfig {
  std::string url;  // full endpoint URL, e.g. http://localhost:8000/v1/chat/completions
  std::string model = "gpt-4o";
  std::string token;  // bearer token; empty sends no Authorization header
  int timeout_seconds = 120;
  int max_retries = 3;
  int backoff_ms = 500;  // doubled after every failed attempt
};

inline std::string token_from_env() {
  const char* t = std::getenv(kTokenEnvVar);
  return t ? std::string(t) : std::string{};
}

inline std::string base64_encode(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpChatConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme = cfg_.url.find("://");
    if (scheme == std::string::npos) throw ChatError("endpoint URL needs a scheme: " + cfg_.url);
    const auto path = cfg_.url.find('/', scheme + 3);
    origin_ = cfg_.url.substr(0, path);
    path_ = path == std::string::npos ? "/" : cfg_.url.substr(path);
  }

  std::string complete(const ChatRequest& request) override {
    const auto body = request_body(request).dump();
    std::string last_error;
    int delay = cfg_.backoff_ms;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        delay *= 2;
      }
      // One client per call keeps concurrent callers independent.
      httplib::Client cli(origin_);
      cli.set_connection_timeout(cfg_.timeout_seconds, 0);
      cli.set_read_timeout(cfg_.timeout_seconds, 0);
      cli.set_write_timeout(cfg_.timeout_seconds, 0);
      httplib::Headers headers;
      if (!cfg_.token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.token);
      const auto res = cli.Post(path_, headers, body, "application/json");
      if (!res) {
        last_error = "request failed: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) throw ChatError("HTTP " + std::to_string(res->status) + ": " + res->body);
      return extract_content(res->body);
    }
    throw ChatError("endpoint failed after " + std::to_string(cfg_.max_retries + 1) + " attempts: " + last_error);
  }

  nlohmann::json request_body(const ChatRequest& request) const {
    nlohmann::json user;
    user["role"] = "user";
    if (request.image_path) {
      std::ifstream in(*request.image_path, std::ios::binary);
      if (!in) throw ChatError("cannot read image " + *request.image_path);
      const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      user["content"] = nlohmann::json::array(
          {{{"type", "text"}, {"text", request.user}},
           {{"type", "image_url"},
            {"image_url", {{"url", "data:" + mime_type(*request.image_path) + ";base64," + base64_encode(bytes)}}}}});
    } else {
      user["content"] = request.user;
    }
    return {{"model", cfg_.model},
            {"temperature", 0},
            {"messages", nlohmann::json::array({{{"role", "system"}, {"content", request.system}}, user})}};
  }

 private:
  static std::string mime_type(const std::string& path) {
    auto ends_with = [&](const char* ext) {
      const std::string e(ext);
      return path.size() >= e.size() && path.compare(path.size() - e.size(), e.size(), e) == 0;
    };
    if (ends_with(".png")) return "image/png";
    if (ends_with(".webp")) return "image/webp";
    return "image/jpeg";
  }

  static std::string extract_content(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ChatError(std::string("malformed chat-completion response: ") + e.what());
    }
  }

  HttpChatConfig cfg_;
  std::string origin_;
  std::string path_;
};

}  // namespace trig
