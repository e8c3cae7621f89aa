#include <doctest.h>
#include <httplib.h>

#include <thread>

#include "capeval/bench.hpp"
#include "capeval/error.hpp"
#include "capeval/tokmerge.hpp"
#include "cli_runs.hpp"

using namespace capeval;
using namespace testing_support;

namespace {

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit code contract") {
    CHECK(cli::exit_code_for(Errc::kValidation) == 2);
    CHECK(cli::exit_code_for(Errc::kNotFound) == 3);
    CHECK(cli::exit_code_for(Errc::kProtocol) == 4);
    CHECK(cli::exit_code_for(Errc::kEnvironment) == 5);
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"no-such-command"}).code == 2);
    CHECK(run_cli({"--version"}).code == 0);
  }

  TEST_CASE("merge-sim") {
    TempDir dir;
    auto r = run_cli({"merge-sim", "--width", "378", "--height", "378", "--patch", "14",
                      "--layers", "32", "--keep-ratio", "0.1", "--out",
                      (dir / "a").string()});
    REQUIRE(r.code == 0);
    CHECK(read_json(dir / "a" / "summary.json").at("final_tokens") == 89);
    const auto trace = read_json(dir / "a" / "trace.json");
    CHECK(trace.at("final_count") == 89);
    CHECK(trace.at("source_map").size() == 729);

    r = run_cli({"merge-sim", "--width", "378", "--height", "378", "--layers", "32",
                 "--keep-ratio", "0.1", "--out", (dir / "b").string()});
    CHECK(r.code == 2);

    tokmerge::TokenMatrix m(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
    write_file(dir / "tokens.json", tokmerge::dump_token_file(m, {1, 1, 1, 1}));
    r = run_cli({"merge-sim", "--tokens", (dir / "tokens.json").string(), "--width", "28",
                 "--height", "28", "--patch", "14", "--layers", "2", "--keep-ratio", "1.0",
                 "--out", (dir / "c").string()});
    REQUIRE(r.code == 0);
    const auto merged =
        tokmerge::parse_token_file(read_file(dir / "c" / "merged.json"));
    CHECK(merged.tokens == m);
  }

  TEST_CASE("eval-rules") {
    TempDir dir;
    write_cli_inputs(dir / "in");
    const auto refs = (dir / "in" / "refs.jsonl").string();
    auto r = run_cli({"eval-rules", "--preds", refs, "--refs", refs, "--out",
                      (dir / "same").string()});
    REQUIRE(r.code == 0);
    const auto means = read_json(dir / "same" / "metrics.json").at("means");
    CHECK(means.at("bleu1").get<double>() == doctest::Approx(1.0));
    CHECK(means.at("bleu4").get<double>() == doctest::Approx(1.0));
    CHECK(means.at("rouge_l").get<double>() == doctest::Approx(1.0));
    CHECK(means.at("cider").get<double>() == doctest::Approx(10.0));

    r = run_cli({"eval-rules", "--preds", refs, "--refs", refs, "--metrics", "bleu1",
                 "--out", (dir / "one").string()});
    REQUIRE(r.code == 0);
    CHECK(read_json(dir / "one" / "metrics.json").at("means").size() == 1);

    write_file(dir / "stray.jsonl", R"({"video_id":"ghost","caption":"x"})" "\n");
    r = run_cli({"eval-rules", "--preds", (dir / "stray.jsonl").string(), "--refs", refs,
                 "--out", (dir / "bad").string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("ghost") != std::string::npos);
    const auto manifest = read_json(dir / "bad" / "manifest.json");
    CHECK(manifest.at("exit_code") == 3);
    CHECK(manifest.contains("error"));
  }

  TEST_CASE("vdcscore on the mock") {
    TempDir dir;
    write_cli_inputs(dir / "in");
    const auto refs = (dir / "in" / "refs.jsonl").string();
    const auto bench = (dir / "in" / "bench5.jsonl").string();
    auto r = run_cli({"vdcscore", "--preds", refs, "--gen-qa", "--bench", bench,
                      "--backend", "mock", "--out", (dir / "a").string()});
    REQUIRE(r.code == 0);
    const auto score = read_json(dir / "a" / "vdcscore.json");
    CHECK(score.at("accuracy") == 100.0);
    CHECK(score.at("score") == 5.0);
    CHECK(score.at("per_video").size() == 5);
    const std::string first = read_file(dir / "a" / "vdcscore.json");

    // Same output directory: every call is answered from the cache.
    r = run_cli({"vdcscore", "--preds", refs, "--gen-qa", "--bench", bench,
                 "--backend", "mock", "--out", (dir / "a").string()});
    REQUIRE(r.code == 0);
    CHECK(read_file(dir / "a" / "vdcscore.json") == first);
    CHECK(read_json(dir / "a" / "manifest.json").at("llm").at("backend_calls") == 0);

    write_file(dir / "empty_fx.jsonl", "");
    r = run_cli({"vdcscore", "--preds", refs, "--gen-qa", "--bench", bench,
                 "--backend", "mock", "--fixtures", (dir / "empty_fx.jsonl").string(),
                 "--no-cache", "--out", (dir / "b").string()});
    CHECK(r.code == 4);
    CHECK(r.err.find("digest") != std::string::npos);
    CHECK(fs::exists(dir / "b" / "manifest.json"));
  }

  TEST_CASE("elo rank on the single-match fixture") {
    TempDir dir;
    const auto log = (data_dir() / "single_match.jsonl").string();
    auto r = run_cli({"elo", "rank", "--log", log, "--shuffles", "1", "--out",
                      (dir / "a").string()});
    REQUIRE(r.code == 0);
    const auto rows = read_json(dir / "a" / "ratings.json").at("models");
    CHECK(rows[0].at("model") == "alpha");
    CHECK(rows[0].at("rating") == 1016.0);
    CHECK(rows[1].at("rating") == 984.0);
    r = run_cli({"elo", "rank", "--log", log, "--out", (dir / "b").string()});
    REQUIRE(r.code == 0);
    r = run_cli({"elo", "rank", "--log", log, "--out", (dir / "c").string()});
    CHECK(read_file(dir / "b" / "ratings.json") == read_file(dir / "c" / "ratings.json"));
  }

  TEST_CASE("serve, vote, rank") {
    TempDir dir;
    const auto bench = (data_dir() / "bench20.jsonl").string();
    std::string preds;
    for (const char* m : {"alpha", "beta", "gamma"}) {
      for (int i = 0; i < 3; ++i) {
        preds += nlohmann::json{{"model", m},
                                {"video_id", "v0" + std::to_string(i)},
                                {"caption", std::string("caption by ") + m}}
                     .dump() + "\n";
      }
    }
    write_file(dir / "preds.jsonl", preds);
    fs::create_directories(dir / "assets");
    const int port = unused_port();
    CliResult served;
    std::thread server([&] {
      served = run_cli({"elo", "serve", "--bench", bench, "--preds",
                        (dir / "preds.jsonl").string(), "--assets",
                        (dir / "assets").string(), "--port", std::to_string(port),
                        "--out", (dir / "serve").string()});
    });
    int vote_status = 0;
    {
      httplib::Client client("127.0.0.1", port);
      httplib::Result res;
      for (int i = 0; i < 400 && !(res = client.Get("/api/pair")); ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      if (res) {
        const std::string token = nlohmann::json::parse(res->body).at("session_token");
        res = client.Post("/api/vote",
                          nlohmann::json{{"session_token", token}, {"outcome", "a"}}.dump(),
                          "application/json");
        if (res) vote_status = res->status;
      }
    }
    cli::request_stop();
    server.join();
    CHECK(vote_status == 200);
    CHECK(served.code == 0);

    const auto r = run_cli({"elo", "rank", "--log", (dir / "serve" / "matches.jsonl").string(),
                            "--out", (dir / "rank").string()});
    REQUIRE(r.code == 0);
    int games = 0;
    const auto ratings = read_json(dir / "rank" / "ratings.json");
    for (const auto& row : ratings.at("models")) {
      games += row.at("games").get<int>();
    }
    CHECK(games == 2);
  }

  TEST_CASE("bench commands") {
    TempDir dir;
    auto r = run_cli({"bench", "stats", "--bench", (data_dir() / "stats3.jsonl").string(),
                      "--out", (dir / "stats").string()});
    REQUIRE(r.code == 0);
    const auto s = read_json(dir / "stats" / "stats.json");
    CHECK(s.at("total_words") == 44);
    CHECK(s.at("vocab_size") == 24);

    write_cli_inputs(dir / "in");
    r = run_cli({"bench", "build", "--input", (dir / "in" / "build_in.jsonl").string(),
                 "--backend", "mock", "--out", (dir / "build").string()});
    REQUIRE(r.code == 0);
    const auto built = bench::load(dir / "build" / "bench.jsonl");
    REQUIRE(built.size() == 5);
    for (const auto& e : built) {
      for (auto c : vdc::all_categories()) CHECK_FALSE(e.captions.get(c).empty());
    }

    const auto b5 = (dir / "in" / "bench5.jsonl").string();
    r = run_cli({"bench", "gen-qa", "--bench", b5, "--backend", "mock", "--out",
                 (dir / "qa").string()});
    REQUIRE(r.code == 0);
    CHECK(read_lines(dir / "qa" / "qa.jsonl").size() == 25);
    CHECK(read_json(dir / "qa" / "manifest.json").at("llm").at("backend_calls") > 0);
    r = run_cli({"bench", "gen-qa", "--bench", b5, "--backend", "mock", "--out",
                 (dir / "qa").string()});
    REQUIRE(r.code == 0);
    CHECK(read_json(dir / "qa" / "manifest.json").at("llm").at("backend_calls") == 0);

    r = run_cli({"bench", "review-import", "--bench", b5, "--review",
                 (dir / "in" / "review.jsonl").string(), "--out", (dir / "rev").string()});
    REQUIRE(r.code == 0);
    CHECK(bench::load(dir / "rev" / "bench.jsonl")[0].captions.camera ==
          "The camera is handheld.");
  }

  TEST_CASE("manifest contents") {
    TempDir dir;
    const auto r = run_cli({"bench", "stats", "--bench",
                            (data_dir() / "stats3.jsonl").string(), "--seed", "5",
                            "--out", (dir / "m").string()});
    REQUIRE(r.code == 0);
    const auto m = read_json(dir / "m" / "manifest.json");
    CHECK(m.at("command") == "bench stats");
    CHECK(m.at("seed") == 5);
    CHECK(m.at("exit_code") == 0);
    CHECK(m.at("inputs").size() == 1);
    CHECK(m.at("outputs").size() == 1);
    CHECK(m.contains("tool_version"));
    CHECK(m.contains("config"));
  }

  TEST_CASE("determinism across reruns") {
    TempDir dir;
    for (const auto& o : check_determinism(dir.path())) {
      INFO(o.name << ": " << o.detail);
      CHECK(o.ok);
    }
  }
}
