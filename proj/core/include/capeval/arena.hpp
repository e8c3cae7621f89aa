#pragma once

// Blind pairwise voting service over model captions, backed by an
// append-only match log.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capeval/bench.hpp"
#include "capeval/elo.hpp"

namespace httplib {
class Server;
}

namespace capeval::elo {

/// video_id -> model -> caption.
using PredictionSet = std::map<std::string, std::map<std::string, std::string>>;

/// JSONL lines {"model", "video_id", "caption"}.
PredictionSet load_predictions(const std::filesystem::path& path);

struct PairView {
  std::string session_token;
  std::string video_id;
  std::vector<std::string> keyframe_urls;
  std::string caption_a;
  std::string caption_b;

  nlohmann::json to_json() const;
};

struct VoteReceipt {
  std::string model_a;
  std::string model_b;
  Outcome outcome = Outcome::kTie;

  nlohmann::json to_json() const;
};

std::string utc_timestamp();

class Arena {
 public:
  struct Options {
    EloConfig config;
    ReplayOptions replay;
    std::filesystem::path log_path;
    std::string asset_prefix = "/assets/";
    std::function<std::string()> clock = utc_timestamp;
  };

  /// Videos present in both `bench` and `predictions` with at least two
  /// captioning models are eligible for pairing. Existing log records are
  /// loaded so the leaderboard continues from them.
  Arena(const std::vector<bench::BenchmarkEntry>& bench,
        PredictionSet predictions, Options options);

  /// Uniform video, uniform unordered model pair, random side assignment.
  PairView draw_pair();
  /// Unknown token -> not-found error; second vote -> conflict error.
  VoteReceipt vote(const std::string& session_token, Outcome outcome,
                   const std::string& judge_id);
  /// Replay over a snapshot of the log; models without games sit at the
  /// initial mean.
  RatingTable leaderboard() const;

  std::vector<std::string> models() const;
  std::size_t eligible_videos() const { return videos_.size(); }

 private:
  struct Video {
    std::string id;
    std::vector<std::string> keyframe_urls;
    std::vector<std::pair<std::string, std::string>> captions;  // model, text
  };
  struct Session {
    std::size_t video;
    std::string model_a;
    std::string model_b;
    bool voted = false;
  };

  Options options_;
  std::vector<Video> videos_;
  std::vector<std::string> models_;

  std::mutex draw_mutex_;
  std::mt19937_64 rng_;
  std::map<std::string, Session> sessions_;

  mutable std::mutex log_mutex_;
  std::vector<MatchRecord> log_;
};

class ArenaServer {
 public:
  explicit ArenaServer(Arena& arena);
  ~ArenaServer();
  ArenaServer(const ArenaServer&) = delete;
  ArenaServer& operator=(const ArenaServer&) = delete;

  /// Serves files under `dir` at the arena's asset prefix.
  void mount_assets(const std::filesystem::path& dir,
                    const std::string& prefix = "/assets/");
  /// Returns the bound port; port 0 picks a free one. A busy port is an
  /// environment error.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  Arena& arena_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace capeval::elo
