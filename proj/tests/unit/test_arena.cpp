#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <map>
#include <thread>

#include "capeval/arena.hpp"
#include "capeval/digest.hpp"
#include "capeval/error.hpp"
#include "testing.hpp"

using namespace capeval;
using namespace capeval::elo;
using testing_support::TempDir;

namespace {

const std::vector<std::string> kModels = {"alpha", "beta", "gamma", "delta"};

std::vector<bench::BenchmarkEntry> entries(std::size_t n) {
  std::vector<bench::BenchmarkEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    bench::BenchmarkEntry e;
    e.video_id = "v" + std::to_string(i);
    e.duration = 1.0;
    e.keyframes = {e.video_id + "/k0.jpg", e.video_id + "/k1.jpg"};
    out.push_back(e);
  }
  return out;
}

PredictionSet predictions(std::size_t n) {
  PredictionSet p;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& m : kModels) {
      p["v" + std::to_string(i)][m] = "caption " + std::to_string(i) + " written by " + m;
    }
  }
  return p;
}

Arena::Options options(const TempDir& dir) {
  Arena::Options o;
  o.log_path = dir / "matches.jsonl";
  o.replay.shuffles = 10;
  o.replay.bootstrap_resamples = 50;
  o.clock = [] { return std::string("2024-01-01T00:00:00Z"); };
  return o;
}

/// Runs an ArenaServer on a free loopback port for the lifetime of the object.
class LiveServer {
 public:
  explicit LiveServer(Arena& arena) : server_(arena) {
    port_ = server_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_.listen(); });
    for (int i = 0; i < 200 && !server_.running(); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }
  int port() const { return port_; }

 private:
  ArenaServer server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_SUITE("arena") {
  TEST_CASE("eligibility") {
    TempDir dir;
    PredictionSet one_model{{"v0", {{"alpha", "x"}}}};
    CHECK_THROWS_AS(Arena(entries(1), one_model, options(dir)), Error);
    Arena arena(entries(3), predictions(2), options(dir));
    CHECK(arena.eligible_videos() == 2);
    CHECK(arena.models() == std::vector<std::string>{"alpha", "beta", "delta", "gamma"});
  }

  TEST_CASE("pair payload is blind") {
    TempDir dir;
    Arena arena(entries(2), predictions(2), options(dir));
    for (int i = 0; i < 50; ++i) {
      const auto view = arena.draw_pair().to_json();
      CHECK(view.size() == 5);
      for (const char* key : {"session_token", "video_id", "keyframe_urls",
                              "caption_a", "caption_b"}) {
        CHECK(view.contains(key));
      }
      CHECK(view.at("session_token").get<std::string>().size() == 32);
      CHECK(view.at("keyframe_urls")[0].get<std::string>().rfind("/assets/", 0) == 0);
      // Captions are the only free text; no other field may carry a name.
      auto stripped = view;
      stripped.erase("caption_a");
      stripped.erase("caption_b");
      for (const auto& m : kModels) {
        CHECK(stripped.dump().find(m) == std::string::npos);
      }
    }
  }

  TEST_CASE("vote bookkeeping and errors") {
    TempDir dir;
    Arena arena(entries(2), predictions(2), options(dir));
    auto board = arena.leaderboard();
    for (const auto& m : kModels) {
      CHECK(board.models.at(m).rating == 1000.0);
      CHECK(board.models.at(m).games == 0);
    }
    const auto view = arena.draw_pair();
    const auto receipt = arena.vote(view.session_token, Outcome::kA, "judge");
    CHECK(receipt.model_a != receipt.model_b);
    board = arena.leaderboard();
    CHECK(board.models.at(receipt.model_a).games == 1);
    CHECK(board.models.at(receipt.model_b).games == 1);
    CHECK(board.models.at(receipt.model_a).rating >
          board.models.at(receipt.model_b).rating);

    try {
      arena.vote(view.session_token, Outcome::kB, "judge");
      FAIL("expected conflict");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kConflict);
    }
    try {
      arena.vote("nope", Outcome::kB, "judge");
      FAIL("expected not found");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kNotFound);
    }
    const auto log = load_log(dir / "matches.jsonl");
    REQUIRE(log.size() == 1);
    CHECK(log[0].model_a == receipt.model_a);
    CHECK(log[0].judge_id == "judge");
  }

  TEST_CASE("existing log is continued") {
    TempDir dir;
    {
      Arena arena(entries(1), predictions(1), options(dir));
      arena.vote(arena.draw_pair().session_token, Outcome::kTie, "j");
    }
    Arena again(entries(1), predictions(1), options(dir));
    std::size_t games = 0;
    for (const auto& [_, r] : again.leaderboard().models) games += r.games;
    CHECK(games == 2);
  }

  TEST_CASE("pair sampling covers all pairs uniformly") {
    TempDir dir;
    Arena arena(entries(5), predictions(5), options(dir));
    std::map<std::pair<std::string, std::string>, int> counts;
    const int draws = 3000;
    for (int i = 0; i < draws; ++i) {
      const auto v = arena.draw_pair();
      const auto r = arena.vote(v.session_token, Outcome::kTie, "j");
      counts[std::minmax(r.model_a, r.model_b)]++;
    }
    REQUIRE(counts.size() == 6);
    const double expected = draws / 6.0;
    double chi2 = 0;
    for (const auto& [_, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 5 degrees of freedom, p = 0.001.
    CHECK(chi2 < 20.52);
  }

  TEST_CASE("http api") {
    TempDir dir;
    Arena arena(entries(1), predictions(1), options(dir));
    LiveServer live(arena);
    auto cli = live.client();

    auto res = cli.Get("/api/leaderboard");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto board = nlohmann::json::parse(res->body);
    CHECK(board.at("models").size() == 4);

    res = cli.Get("/api/pair");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto pair = nlohmann::json::parse(res->body);
    const std::string token = pair.at("session_token");

    nlohmann::json vote{{"session_token", token}, {"outcome", "b"}};
    res = cli.Post("/api/vote", vote.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto receipt = nlohmann::json::parse(res->body);
    CHECK(receipt.at("outcome") == "b");

    res = cli.Post("/api/vote", vote.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 409);
    res = cli.Post("/api/vote", R"({"session_token":"zz","outcome":"a"})",
                   "application/json");
    REQUIRE(res);
    CHECK(res->status == 404);
    res = cli.Post("/api/vote", "{not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    res = cli.Post("/api/vote", nlohmann::json{{"session_token", token}, {"outcome", "x"}}.dump(),
                   "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);

    res = cli.Get("/api/leaderboard");
    board = nlohmann::json::parse(res->body);
    int games = 0;
    for (const auto& row : board.at("models")) games += row.at("games").get<int>();
    CHECK(games == 2);
    CHECK(load_log(dir / "matches.jsonl")[0].judge_id == "anonymous");
  }

  TEST_CASE("assets are served") {
    TempDir dir;
    testing_support::write_file(dir / "assets" / "v0" / "k0.jpg", "JPEGDATA");
    Arena arena(entries(1), predictions(1), options(dir));
    ArenaServer server(arena);
    server.mount_assets(dir / "assets");
    const int port = server.bind("127.0.0.1", 0);
    std::thread t([&] { server.listen(); });
    httplib::Client cli("127.0.0.1", port);
    httplib::Result res;
    for (int i = 0; i < 100 && !(res = cli.Get("/assets/v0/k0.jpg")); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    REQUIRE(res);
    CHECK(res->body == "JPEGDATA");
    server.stop();
    t.join();
  }

  TEST_CASE("busy port is an environment error") {
    TempDir dir;
    Arena arena(entries(1), predictions(1), options(dir));
    ArenaServer first(arena);
    const int port = first.bind("127.0.0.1", 0);
    ArenaServer second(arena);
    try {
      second.bind("127.0.0.1", port);
      FAIL("expected bind failure");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::kEnvironment);
    }
  }

  TEST_CASE("concurrent double vote accepts exactly one") {
    TempDir dir;
    Arena arena(entries(2), predictions(2), options(dir));
    LiveServer live(arena);
    for (int round = 0; round < 10; ++round) {
      const std::string token = arena.draw_pair().session_token;
      std::atomic<int> ok{0}, conflict{0};
      std::vector<std::thread> voters;
      for (int i = 0; i < 8; ++i) {
        voters.emplace_back([&, i] {
          auto cli = live.client();
          const auto res = cli.Post(
              "/api/vote",
              nlohmann::json{{"session_token", token}, {"outcome", i % 2 ? "a" : "b"}}.dump(),
              "application/json");
          if (res && res->status == 200) ++ok;
          if (res && res->status == 409) ++conflict;
        });
      }
      for (auto& v : voters) v.join();
      CHECK(ok.load() == 1);
      CHECK(conflict.load() == 7);
    }
    CHECK(load_log(dir / "matches.jsonl").size() == 10);
  }

  TEST_CASE("serving only appends to the log") {
    TempDir dir;
    Arena arena(entries(2), predictions(2), options(dir));
    std::string prefix;
    for (int i = 0; i < 20; ++i) {
      arena.vote(arena.draw_pair().session_token, Outcome::kA, "j");
      const std::string now = testing_support::read_file(dir / "matches.jsonl");
      REQUIRE(now.size() > prefix.size());
      CHECK(sha256_hex(now.substr(0, prefix.size())) == sha256_hex(prefix));
      prefix = now;
    }
  }

  TEST_CASE("prediction loading") {
    TempDir dir;
    testing_support::write_file(
        dir / "p.jsonl",
        R"({"model":"a","video_id":"v0","caption":"x"})" "\n"
        R"({"model":"b","video_id":"v0","caption":"y"})" "\n");
    const auto p = load_predictions(dir / "p.jsonl");
    CHECK(p.at("v0").size() == 2);
    testing_support::write_file(dir / "dup.jsonl",
                                R"({"model":"a","video_id":"v0","caption":"x"})" "\n"
                                R"({"model":"a","video_id":"v0","caption":"z"})" "\n");
    CHECK_THROWS_AS(load_predictions(dir / "dup.jsonl"), Error);
  }
}
