#include "capeval/llmclient.hpp"

#include <cstdlib>
#include <fstream>

#include "capeval/digest.hpp"
#include "capeval/error.hpp"
#include "capeval/parallel.hpp"

namespace capeval::llm {

namespace {

std::string_view role_name(Role r) {
  return r == Role::kUser ? "user" : "assistant";
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : std::move(fallback);
}

}  // namespace

ChatTurn ChatTurn::user(std::string text) {
  return {Role::kUser, {ContentPart::text(std::move(text))}};
}

ChatTurn ChatTurn::assistant(std::string text) {
  return {Role::kAssistant, {ContentPart::text(std::move(text))}};
}

std::string ChatTurn::text() const {
  std::string out;
  for (const auto& p : parts) {
    if (p.kind == ContentPart::Kind::kText) out += p.value;
  }
  return out;
}

void ChatRequest::validate() const {
  if (turns.empty()) {
    throw Error(Errc::kRequest, "chat request needs at least one user turn");
  }
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const Role expected = i % 2 == 0 ? Role::kUser : Role::kAssistant;
    if (turns[i].role != expected) {
      throw Error(Errc::kRequest,
                  "chat turns must alternate starting with user (turn " +
                      std::to_string(i) + ")");
    }
  }
  if (turns.back().role != Role::kUser) {
    throw Error(Errc::kRequest, "last chat turn must come from the user");
  }
  if (!(temperature >= 0.0)) {
    throw Error(Errc::kRequest, "temperature must be >= 0");
  }
}

nlohmann::json ChatRequest::canonical_json() const {
  nlohmann::json turns_json = nlohmann::json::array();
  for (const auto& t : turns) {
    nlohmann::json parts_json = nlohmann::json::array();
    for (const auto& p : t.parts) {
      parts_json.push_back(
          {{"kind", p.kind == ContentPart::Kind::kText ? "text" : "image"},
           {"value", p.value}});
    }
    turns_json.push_back({{"role", role_name(t.role)}, {"parts", parts_json}});
  }
  return {{"system", system},
          {"turns", std::move(turns_json)},
          {"temperature", temperature},
          {"max_tokens", max_tokens}};
}

std::string request_digest(const ChatRequest& request) {
  return sha256_hex(request.canonical_json().dump());
}

BackendConfig BackendConfig::from_env() {
  BackendConfig c;
  c.base_url = env_or("CAPEVAL_API_BASE", c.base_url);
  c.api_key = env_or("CAPEVAL_API_KEY", c.api_key);
  c.model_name = env_or("CAPEVAL_MODEL", c.model_name);
  return c;
}

void BackendConfig::validate() const {
  if (!(timeout_seconds > 0.0)) {
    throw Error(Errc::kConfiguration, "timeout must be > 0");
  }
  if (max_concurrency < 1) {
    throw Error(Errc::kConfiguration, "max_concurrency must be >= 1");
  }
  if (max_retries < 0) {
    throw Error(Errc::kConfiguration, "max_retries must be >= 0");
  }
}

void MockBackend::load_fixtures(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open fixtures " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      add_fixture(j.at("digest").get<std::string>(),
                  j.at("response").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kValidation, path.string() + ":" +
                                         std::to_string(lineno) + ": " +
                                         e.what());
    }
  }
}

void MockBackend::add_fixture(std::string digest, std::string response) {
  fixtures_.insert_or_assign(std::move(digest), std::move(response));
}

std::string MockBackend::complete(const ChatRequest& request) {
  const std::string digest = request_digest(request);
  if (auto it = fixtures_.find(digest); it != fixtures_.end()) {
    return it->second;
  }
  if (responder_) {
    if (auto r = responder_(request)) return *r;
  }
  throw Error(Errc::kProtocol, "mock backend has no fixture for digest " +
                                   digest);
}

ResponseCache::ResponseCache(std::filesystem::path path)
    : path_(std::move(path)) {
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries_.insert_or_assign(j.at("digest").get<std::string>(),
                                j.at("response").get<std::string>());
    } catch (const nlohmann::json::exception&) {
      // A torn final line from an interrupted run is ignored.
    }
  }
}

std::optional<std::string> ResponseCache::lookup(
    const std::string& digest) const {
  std::shared_lock lock(mu_);
  if (auto it = entries_.find(digest); it != entries_.end()) return it->second;
  return std::nullopt;
}

void ResponseCache::store(const std::string& digest,
                          const std::string& response) {
  std::unique_lock lock(mu_);
  if (!entries_.emplace(digest, response).second) return;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error(Errc::kEnvironment, "cannot append to cache " + path_.string());
  out << nlohmann::json{{"digest", digest}, {"response", response}}.dump()
      << '\n';
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

LlmClient::LlmClient(std::shared_ptr<Backend> backend,
                     std::size_t max_concurrency,
                     std::shared_ptr<ResponseCache> cache)
    : backend_(std::move(backend)),
      cache_(std::move(cache)),
      max_concurrency_(max_concurrency),
      gate_(static_cast<std::ptrdiff_t>(max_concurrency)) {
  if (!backend_) throw Error(Errc::kConfiguration, "no backend");
  if (max_concurrency_ < 1) {
    throw Error(Errc::kConfiguration, "max_concurrency must be >= 1");
  }
}

std::string LlmClient::complete(const ChatRequest& request) {
  request.validate();
  const std::string digest = request_digest(request);
  if (cache_) {
    if (auto hit = cache_->lookup(digest)) {
      cache_hits_.fetch_add(1);
      return *hit;
    }
  }
  gate_.acquire();
  struct Release {
    LlmClient* self;
    ~Release() {
      self->in_flight_.fetch_sub(1);
      self->gate_.release();
    }
  };
  const std::size_t now = in_flight_.fetch_add(1) + 1;
  Release release{this};
  std::size_t prev = peak_.load();
  while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
  }
  backend_calls_.fetch_add(1);
  std::string response = backend_->complete(request);
  if (cache_) cache_->store(digest, response);
  return response;
}

std::vector<std::string> LlmClient::complete_all(
    const std::vector<ChatRequest>& reqs) {
  std::vector<std::string> out(reqs.size());
  parallel_for(reqs.size(), max_concurrency_,
               [&](std::size_t i) { out[i] = complete(reqs[i]); });
  return out;
}

ClientStats LlmClient::stats() const {
  return {backend_calls_.load(), cache_hits_.load(), peak_.load()};
}

}  // namespace capeval::llm
