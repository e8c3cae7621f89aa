#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "capeval/digest.hpp"
#include "capeval/error.hpp"
#include "capeval/llmclient.hpp"

namespace capeval::llm {

namespace {

std::atomic<std::size_t> g_network_attempts{0};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::kConfiguration, "base url lacks a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.origin = url.substr(0, path_start);
  p.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
  return p;
}

std::string image_url(const std::string& ref) {
  if (ref.starts_with("http://") || ref.starts_with("https://") ||
      ref.starts_with("data:")) {
    return ref;
  }
  std::ifstream in(ref, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot read keyframe " + ref);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string mime = "image/jpeg";
  if (ref.ends_with(".png")) mime = "image/png";
  if (ref.ends_with(".webp")) mime = "image/webp";
  return "data:" + mime + ";base64," + base64_encode(ss.str());
}

bool transient_status(int status) {
  return status == 408 || status == 429 || status >= 500;
}

}  // namespace

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  config_.validate();
}

std::size_t HttpBackend::network_attempts() noexcept {
  return g_network_attempts.load();
}

nlohmann::json HttpBackend::build_body(const ChatRequest& request) const {
  nlohmann::json messages = nlohmann::json::array();
  if (!request.system.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system}});
  }
  for (const auto& turn : request.turns) {
    const char* role = turn.role == Role::kUser ? "user" : "assistant";
    bool text_only = true;
    for (const auto& p : turn.parts) {
      text_only = text_only && p.kind == ContentPart::Kind::kText;
    }
    if (text_only) {
      messages.push_back({{"role", role}, {"content", turn.text()}});
      continue;
    }
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& p : turn.parts) {
      if (p.kind == ContentPart::Kind::kText) {
        parts.push_back({{"type", "text"}, {"text", p.value}});
      } else {
        parts.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", image_url(p.value)}}}});
      }
    }
    messages.push_back({{"role", role}, {"content", std::move(parts)}});
  }
  return {{"model", config_.model_name},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

std::string HttpBackend::parse_response(std::string_view body) {
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) {
      throw Error(Errc::kProtocol, "response content is not a string");
    }
    return content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kProtocol,
                std::string("unexpected chat response shape: ") + e.what());
  }
}

std::string HttpBackend::complete(const ChatRequest& request) {
  request.validate();
  const ParsedUrl url = split_url(config_.base_url);
  const std::string body = build_body(request).dump();
  const std::string endpoint = url.path + "/chat/completions";

  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config_.timeout_seconds));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }

  std::string last_error;
  const int attempts = config_.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(config_.initial_backoff *
                                  (1LL << std::min(attempt - 1, 16)));
    }
    g_network_attempts.fetch_add(1);
    auto res = client.Post(endpoint, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      return parse_response(res->body);
    }
    if (!transient_status(res->status)) {
      throw Error(Errc::kRequest, "chat endpoint returned HTTP " +
                                      std::to_string(res->status) + ": " +
                                      res->body.substr(0, 512));
    }
    last_error = "HTTP " + std::to_string(res->status);
  }
  throw Error(Errc::kTransport, "chat request failed after " +
                                    std::to_string(attempts) +
                                    " attempts: " + last_error);
}

}  // namespace capeval::llm
