#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <thread>

#include "capeval/arena.hpp"
#include "capeval/bench.hpp"
#include "capeval/cli.hpp"
#include "capeval/elo.hpp"
#include "capeval/error.hpp"
#include "context.hpp"

namespace capeval::cli {

namespace {

struct RankOptions {
  std::string log;
  std::size_t shuffles = 100;
  std::size_t bootstrap = 1000;
};

int rank(const RankOptions& o, RunContext& ctx) {
  const auto log = elo::load_log(ctx.input(o.log));
  const auto table = elo::replay(log, elo::EloConfig{},
                                 {o.shuffles, ctx.seed, o.bootstrap});
  ctx.write_json("ratings.json", table.to_json());
  return 0;
}

struct SimulateOptions {
  std::vector<std::string> models;
  std::size_t matches = 2778;
};

int simulate(const SimulateOptions& o, RunContext& ctx) {
  const auto log =
      elo::simulate_matches(o.models, o.matches, elo::EloConfig{}, ctx.seed);
  std::vector<nlohmann::json> rows;
  rows.reserve(log.size());
  for (const auto& m : log) rows.push_back(m.to_json());
  ctx.write_jsonl("matches.jsonl", rows);
  return 0;
}

struct ServeOptions {
  std::string bench;
  std::string preds;
  std::string assets;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string log;
  std::size_t shuffles = 100;
};

extern "C" void on_signal(int) { request_stop(); }

int serve(const ServeOptions& o, RunContext& ctx) {
  const auto entries = bench::load(ctx.input(o.bench));
  auto preds = elo::load_predictions(ctx.input(o.preds));
  elo::Arena::Options opts;
  opts.replay.shuffles = o.shuffles;
  opts.replay.seed = ctx.seed;
  opts.log_path = o.log.empty() ? ctx.out_dir / "matches.jsonl" : fs::path(o.log);
  if (opts.log_path.has_parent_path()) {
    fs::create_directories(opts.log_path.parent_path());
  }
  ctx.outputs.push_back(opts.log_path);
  elo::Arena arena(entries, std::move(preds), opts);

  elo::ArenaServer server(arena);
  server.mount_assets(o.assets);
  const int port = server.bind(o.host, o.port);
  *ctx.out << "listening on http://" << o.host << ":" << port << "\n"
           << std::flush;

  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  std::jthread watcher([&server](std::stop_token st) {
    while (!st.stop_requested() && !stop_requested()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    server.stop();
  });
  server.listen();
  watcher.request_stop();
  watcher.join();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  ctx.extra["port"] = port;
  return 0;
}

}  // namespace

void register_elo(CLI::App& root, RunContext& ctx, std::vector<Command>& cmds) {
  auto* elo_app = root.add_subcommand("elo", "Elo ranking and voting arena");
  elo_app->require_subcommand(1);
  {
    auto o = std::make_shared<RankOptions>();
    auto* app = elo_app->add_subcommand(
        "rank", "Rank models by shuffled Elo replay of a match log");
    add_common(app, ctx);
    app->add_option("--log", o->log, "Match log JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--shuffles", o->shuffles, "Replay passes")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--bootstrap", o->bootstrap,
                    "Bootstrap resamples for the rating interval")
        ->capture_default_str();
    cmds.push_back({"elo rank", app, [o](RunContext& c) { return rank(*o, c); }});
  }
  {
    auto o = std::make_shared<SimulateOptions>();
    auto* app = elo_app->add_subcommand(
        "simulate", "Write a synthetic match log from sampled model strengths");
    add_common(app, ctx);
    app->add_option("--models", o->models, "Comma list of model names")
        ->required()
        ->delimiter(',');
    app->add_option("--matches", o->matches, "Number of matches")
        ->capture_default_str();
    cmds.push_back(
        {"elo simulate", app, [o](RunContext& c) { return simulate(*o, c); }});
  }
  {
    auto o = std::make_shared<ServeOptions>();
    auto* app = elo_app->add_subcommand(
        "serve", "Serve the blind pairwise voting API until interrupted");
    add_common(app, ctx);
    app->add_option("--bench", o->bench, "Bench JSONL (keyframes)")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--preds", o->preds,
                    "Model captions JSONL {model, video_id, caption}")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--assets", o->assets, "Keyframe directory served at /assets/")
        ->required()
        ->check(CLI::ExistingDirectory);
    app->add_option("--host", o->host, "Bind address")->capture_default_str();
    app->add_option("--port", o->port, "Port; 0 picks a free one")
        ->capture_default_str()
        ->check(CLI::Range(0, 65535));
    app->add_option("--log", o->log,
                    "Match log to append to (default <out>/matches.jsonl)");
    app->add_option("--shuffles", o->shuffles, "Leaderboard replay passes")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmds.push_back({"elo serve", app, [o](RunContext& c) { return serve(*o, c); }});
  }
}

}  // namespace capeval::cli
