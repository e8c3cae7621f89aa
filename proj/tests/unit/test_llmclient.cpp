#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "capeval/error.hpp"
#include "capeval/llmclient.hpp"
#include "testing.hpp"

using namespace capeval;
using namespace capeval::llm;
using testing_support::TempDir;
using testing_support::unused_port;

namespace {

ChatRequest simple(std::string text) {
  ChatRequest r;
  r.system = "sys";
  r.turns.push_back(ChatTurn::user(std::move(text)));
  return r;
}

std::string reply_body(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"content", content}}}}}}}.dump();
}

/// Local chat endpoint that answers with a scripted sequence of statuses.
class ScriptedServer {
 public:
  explicit ScriptedServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
      const std::size_t i = hits_.fetch_add(1);
      auth_ = req.get_header_value("Authorization");
      const int status = i < statuses_.size() ? statuses_[i] : 200;
      res.status = status;
      res.set_content(status == 200 ? reply_body("pong") : "{}", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ScriptedServer() {
    server_.stop();
    thread_.join();
  }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::size_t hits() const { return hits_.load(); }
  std::string auth() const { return auth_; }

 private:
  httplib::Server server_;
  std::vector<int> statuses_;
  std::atomic<std::size_t> hits_{0};
  std::string auth_;
  int port_ = 0;
  std::thread thread_;
};

BackendConfig local(const std::string& base, int retries) {
  BackendConfig c;
  c.base_url = base;
  c.api_key = "k1";
  c.model_name = "test-model";
  c.max_retries = retries;
  c.timeout_seconds = 2.0;
  c.initial_backoff = std::chrono::milliseconds(1);
  return c;
}

/// Counts concurrent calls and sleeps briefly.
class SlowBackend : public Backend {
 public:
  std::string complete(const ChatRequest& r) override {
    const int now = ++current_;
    int prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(15));
    --current_;
    ++calls_;
    return "echo:" + r.turns.back().text();
  }
  std::string name() const override { return "slow"; }
  std::atomic<int> current_{0}, peak_{0}, calls_{0};
};

}  // namespace

TEST_SUITE("llmclient") {
  TEST_CASE("digest contract") {
    const auto a = simple("hello");
    CHECK(request_digest(a) == request_digest(simple("hello")));
    auto warmer = a;
    warmer.temperature = 0.7;
    CHECK(request_digest(a) != request_digest(warmer));
    CHECK(request_digest(a).size() == 64);

    auto c1 = local("http://127.0.0.1:1/v1", 0);
    auto c2 = c1;
    c2.api_key = "rotated";
    CHECK(HttpBackend(c1).build_body(a) == HttpBackend(c2).build_body(a));
    CHECK(HttpBackend(c1).build_body(a).dump().find("k1") == std::string::npos);
  }

  TEST_CASE("request validation") {
    ChatRequest r;
    CHECK_THROWS_AS(r.validate(), Error);
    r.turns = {ChatTurn::user("a"), ChatTurn::user("b")};
    CHECK_THROWS_AS(r.validate(), Error);
    r.turns = {ChatTurn::user("a"), ChatTurn::assistant("b")};
    CHECK_THROWS_AS(r.validate(), Error);
    r.turns.push_back(ChatTurn::user("c"));
    CHECK_NOTHROW(r.validate());
  }

  TEST_CASE("mock fixtures, determinism and strictness") {
    const std::size_t before = HttpBackend::network_attempts();
    auto mock = std::make_shared<MockBackend>();
    const auto req = simple("q");
    mock->add_fixture(request_digest(req), "fixture text");
    LlmClient client(mock, 2);
    CHECK(client.complete(req) == "fixture text");
    CHECK(client.complete(req) == "fixture text");
    try {
      client.complete(simple("other"));
      FAIL("expected protocol error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kProtocol);
      CHECK(std::string(e.what()).find(request_digest(simple("other"))) !=
            std::string::npos);
    }
    CHECK(HttpBackend::network_attempts() == before);
  }

  TEST_CASE("fixture file loading") {
    TempDir dir;
    const auto req = simple("file");
    testing_support::write_file(
        dir / "fx.jsonl",
        nlohmann::json{{"digest", request_digest(req)}, {"response", "from file"}}
                .dump() + "\n");
    auto mock = std::make_shared<MockBackend>();
    mock->load_fixtures(dir / "fx.jsonl");
    CHECK(mock->complete(req) == "from file");
  }

  TEST_CASE("http success, auth header and response parsing") {
    ScriptedServer server({200});
    HttpBackend backend(local(server.base(), 0));
    CHECK(backend.complete(simple("ping")) == "pong");
    CHECK(server.auth() == "Bearer k1");
    CHECK_THROWS_AS(HttpBackend::parse_response("{\"choices\": []}"), Error);
    CHECK_THROWS_AS(HttpBackend::parse_response("not json"), Error);
  }

  TEST_CASE("transient statuses are retried") {
    ScriptedServer server({500, 429, 200});
    HttpBackend backend(local(server.base(), 3));
    CHECK(backend.complete(simple("x")) == "pong");
    CHECK(server.hits() == 3);
  }

  TEST_CASE("client errors are not retried") {
    ScriptedServer server({400});
    HttpBackend backend(local(server.base(), 3));
    try {
      backend.complete(simple("x"));
      FAIL("expected request error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kRequest);
    }
    CHECK(server.hits() == 1);
  }

  TEST_CASE("unreachable host fails after retries") {
    const int port = unused_port();
    HttpBackend backend(local("http://127.0.0.1:" + std::to_string(port) + "/v1", 2));
    const std::size_t before = HttpBackend::network_attempts();
    try {
      backend.complete(simple("x"));
      FAIL("expected transport error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kTransport);
    }
    CHECK(HttpBackend::network_attempts() - before == 3);
  }

  TEST_CASE("config validation") {
    BackendConfig c;
    c.max_retries = -1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = BackendConfig{};
    c.timeout_seconds = 0;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("in-flight cap and order-stable fan-out") {
    auto slow = std::make_shared<SlowBackend>();
    LlmClient client(slow, 3);
    std::vector<std::thread> threads;
    for (int t = 0; t < 12; ++t) {
      threads.emplace_back([&client, t] { client.complete(simple(std::to_string(t))); });
    }
    for (auto& t : threads) t.join();
    CHECK(slow->peak_.load() <= 3);
    CHECK(client.stats().peak_in_flight <= 3);
    CHECK(slow->calls_.load() == 12);

    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 20; ++i) reqs.push_back(simple("r" + std::to_string(i)));
    const auto out = client.complete_all(reqs);
    for (int i = 0; i < 20; ++i) CHECK(out[i] == "echo:r" + std::to_string(i));
  }

  TEST_CASE("cache persists and short-circuits the backend") {
    TempDir dir;
    auto slow = std::make_shared<SlowBackend>();
    {
      LlmClient client(slow, 2, std::make_shared<ResponseCache>(dir / "cache.jsonl"));
      client.complete(simple("a"));
      client.complete(simple("a"));
      CHECK(client.stats().backend_calls == 1);
      CHECK(client.stats().cache_hits == 1);
    }
    LlmClient warm(slow, 2, std::make_shared<ResponseCache>(dir / "cache.jsonl"));
    CHECK(warm.complete(simple("a")) == "echo:a");
    CHECK(warm.stats().backend_calls == 0);
    CHECK(slow->calls_.load() == 1);
  }
}
