#pragma once

// Chat-style LLM access: a backend interface with an HTTP implementation and
// an offline mock, wrapped by a client that adds a response cache and a
// global in-flight cap.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace capeval::llm {

enum class Role { kUser, kAssistant };

struct ContentPart {
  enum class Kind { kText, kImage };
  Kind kind = Kind::kText;
  std::string value;  // text, or an image path / URL

  static ContentPart text(std::string s) { return {Kind::kText, std::move(s)}; }
  static ContentPart image(std::string ref) {
    return {Kind::kImage, std::move(ref)};
  }
};

struct ChatTurn {
  Role role = Role::kUser;
  std::vector<ContentPart> parts;

  static ChatTurn user(std::string text);
  static ChatTurn assistant(std::string text);
  /// Concatenated text parts.
  std::string text() const;
};

struct ChatRequest {
  std::string system;
  std::vector<ChatTurn> turns;
  double temperature = 0.0;
  int max_tokens = 1024;

  /// Throws a request error unless turns start and end with a user turn and
  /// alternate user/assistant.
  void validate() const;
  nlohmann::json canonical_json() const;
};

/// Hex SHA-256 of the canonical request JSON. Backend credentials are not
/// part of a request and never enter the digest.
std::string request_digest(const ChatRequest& request);

struct BackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model_name = "gpt-4o";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  std::size_t max_concurrency = 4;
  std::chrono::milliseconds initial_backoff{500};

  /// Overrides defaults from CAPEVAL_API_BASE, CAPEVAL_API_KEY, CAPEVAL_MODEL.
  static BackendConfig from_env();
  void validate() const;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

/// Chat-completions JSON over HTTP(S), with exponential-backoff retries for
/// transport failures, 5xx, 408 and 429.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);
  std::string complete(const ChatRequest& request) override;
  std::string name() const override { return "http:" + config_.model_name; }

  nlohmann::json build_body(const ChatRequest& request) const;
  /// Extracts choices[0].message.content; throws a protocol error otherwise.
  static std::string parse_response(std::string_view body);

  /// Connection attempts made by every HttpBackend in this process.
  static std::size_t network_attempts() noexcept;

 private:
  BackendConfig config_;
};

/// Offline backend: looks requests up by digest in a fixture table, then
/// falls back to an optional responder. Never touches the network.
class MockBackend final : public Backend {
 public:
  using Responder =
      std::function<std::optional<std::string>(const ChatRequest&)>;

  MockBackend() = default;
  explicit MockBackend(Responder responder)
      : responder_(std::move(responder)) {}

  /// JSONL of {"digest": str, "response": str}.
  void load_fixtures(const std::filesystem::path& path);
  void add_fixture(std::string digest, std::string response);
  void set_responder(Responder responder) { responder_ = std::move(responder); }

  /// Throws a protocol error naming the digest when nothing matches.
  std::string complete(const ChatRequest& request) override;
  std::string name() const override { return "mock"; }

 private:
  std::unordered_map<std::string, std::string> fixtures_;
  Responder responder_;
};

/// Append-only JSONL cache {"digest", "response"}; many readers, one writer.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path path);

  std::optional<std::string> lookup(const std::string& digest) const;
  void store(const std::string& digest, const std::string& response);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
};

struct ClientStats {
  std::size_t backend_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t peak_in_flight = 0;
};

/// Thread-safe front end over a backend. Every call passes the cache, then a
/// counting gate that caps concurrent backend calls at max_concurrency.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<Backend> backend, std::size_t max_concurrency,
            std::shared_ptr<ResponseCache> cache = nullptr);

  std::string complete(const ChatRequest& request);
  /// Results are gathered by request index.
  std::vector<std::string> complete_all(const std::vector<ChatRequest>& reqs);

  std::size_t max_concurrency() const noexcept { return max_concurrency_; }
  ClientStats stats() const;
  const Backend& backend() const { return *backend_; }

 private:
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  std::size_t max_concurrency_;
  std::counting_semaphore<1 << 20> gate_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_{0};
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace capeval::llm
