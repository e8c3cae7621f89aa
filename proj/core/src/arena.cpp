#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "capeval/arena.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include "capeval/error.hpp"

namespace capeval::elo {

namespace {

std::uint64_t draw_index(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

std::string hex_token(std::mt19937_64& rng) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (int w = 0; w < 2; ++w) {
    std::uint64_t x = rng();
    for (int i = 0; i < 16; ++i, x >>= 4) s.push_back(kHex[x & 0xf]);
  }
  return s;
}

int status_for(Errc code) {
  switch (code) {
    case Errc::kNotFound: return 404;
    case Errc::kConflict: return 409;
    case Errc::kNoData: return 503;
    default: return 400;
  }
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

PredictionSet load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open predictions " + path.string());
  PredictionSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto& slot = out[j.at("video_id").get<std::string>()]
                      [j.at("model").get<std::string>()];
      if (!slot.empty()) {
        throw Error(Errc::kValidation, "duplicate model caption for a video");
      }
      slot = j.at("caption").get<std::string>();
    } catch (const std::exception& e) {
      throw Error(Errc::kValidation,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json PairView::to_json() const {
  return {{"session_token", session_token}, {"video_id", video_id},
          {"keyframe_urls", keyframe_urls}, {"caption_a", caption_a},
          {"caption_b", caption_b}};
}

nlohmann::json VoteReceipt::to_json() const {
  return {{"model_a", model_a},
          {"model_b", model_b},
          {"outcome", outcome_name(outcome)}};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Arena::Arena(const std::vector<bench::BenchmarkEntry>& bench,
             PredictionSet predictions, Options options)
    : options_(std::move(options)), rng_(options_.replay.seed) {
  options_.config.validate();
  std::set<std::string> models;
  for (const auto& e : bench) {
    const auto it = predictions.find(e.video_id);
    if (it == predictions.end() || it->second.size() < 2) continue;
    Video v;
    v.id = e.video_id;
    for (const auto& k : e.keyframes) {
      v.keyframe_urls.push_back(options_.asset_prefix + k);
    }
    for (const auto& [model, caption] : it->second) {
      v.captions.emplace_back(model, caption);
      models.insert(model);
    }
    videos_.push_back(std::move(v));
  }
  if (videos_.empty()) {
    throw Error(Errc::kNoData,
                "no bench video has captions from two or more models");
  }
  models_.assign(models.begin(), models.end());
  if (std::filesystem::exists(options_.log_path)) {
    log_ = load_log(options_.log_path);
  }
}

PairView Arena::draw_pair() {
  std::lock_guard lock(draw_mutex_);
  const auto vi = draw_index(rng_, videos_.size());
  const Video& v = videos_[vi];
  const auto n = v.captions.size();
  const auto i = draw_index(rng_, n);
  auto j = draw_index(rng_, n - 1);
  if (j >= i) ++j;
  // i != j and both orders are equally likely, so sides are randomized.
  PairView view;
  do {
    view.session_token = hex_token(rng_);
  } while (sessions_.contains(view.session_token));
  view.video_id = v.id;
  view.keyframe_urls = v.keyframe_urls;
  view.caption_a = v.captions[i].second;
  view.caption_b = v.captions[j].second;
  sessions_[view.session_token] =
      Session{vi, v.captions[i].first, v.captions[j].first, false};
  return view;
}

VoteReceipt Arena::vote(const std::string& session_token, Outcome outcome,
                        const std::string& judge_id) {
  MatchRecord rec;
  {
    std::lock_guard lock(draw_mutex_);
    const auto it = sessions_.find(session_token);
    if (it == sessions_.end()) {
      throw Error(Errc::kNotFound, "unknown session token");
    }
    if (it->second.voted) {
      throw Error(Errc::kConflict, "session already voted");
    }
    it->second.voted = true;
    rec.video_id = videos_[it->second.video].id;
    rec.model_a = it->second.model_a;
    rec.model_b = it->second.model_b;
  }
  rec.timestamp = options_.clock();
  rec.outcome = outcome;
  rec.judge_id = judge_id;
  {
    std::lock_guard lock(log_mutex_);
    append_record(options_.log_path, rec);
    log_.push_back(rec);
  }
  return {rec.model_a, rec.model_b, outcome};
}

RatingTable Arena::leaderboard() const {
  std::vector<MatchRecord> snapshot;
  {
    std::lock_guard lock(log_mutex_);
    snapshot = log_;
  }
  RatingTable table;
  if (!snapshot.empty()) {
    table = replay(snapshot, options_.config, options_.replay);
  } else {
    table.shuffles = options_.replay.shuffles;
    table.seed = options_.replay.seed;
  }
  for (const auto& m : models_) {
    if (!table.models.contains(m)) {
      const double r = options_.config.initial_mean;
      table.models[m] = ModelRating{r, r, r, 0};
    }
  }
  return table;
}

std::vector<std::string> Arena::models() const { return models_; }

ArenaServer::ArenaServer(Arena& arena)
    : arena_(arena), server_(std::make_unique<httplib::Server>()) {
  // The library default enables SO_REUSEPORT, which would let a second
  // instance silently share the port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  server_->Get("/api/pair", [this](const httplib::Request&,
                                   httplib::Response& res) {
    send_json(res, 200, arena_.draw_pair().to_json());
  });
  server_->Post("/api/vote", [this](const httplib::Request& req,
                                    httplib::Response& res) {
    try {
      const auto body = nlohmann::json::parse(req.body);
      const auto outcome = parse_outcome(body.at("outcome").get<std::string>());
      const auto receipt =
          arena_.vote(body.at("session_token").get<std::string>(), outcome,
                      body.value("judge_id", std::string("anonymous")));
      send_json(res, 200, receipt.to_json());
    } catch (const Error& e) {
      send_json(res, status_for(e.code()), {{"error", e.what()}});
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, {{"error", e.what()}});
    }
  });
  server_->Get("/api/leaderboard", [this](const httplib::Request&,
                                          httplib::Response& res) {
    send_json(res, 200, arena_.leaderboard().to_json());
  });
  server_->set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
          std::rethrow_exception(ep);
        } catch (const Error& e) {
          send_json(res, status_for(e.code()), {{"error", e.what()}});
        } catch (const std::exception& e) {
          send_json(res, 500, {{"error", e.what()}});
        }
      });
}

ArenaServer::~ArenaServer() { stop(); }

void ArenaServer::mount_assets(const std::filesystem::path& dir,
                               const std::string& prefix) {
  std::string mount = prefix;
  if (mount.size() > 1 && mount.back() == '/') mount.pop_back();
  if (!server_->set_mount_point(mount, dir.string())) {
    throw Error(Errc::kEnvironment, "asset directory not found: " + dir.string());
  }
}

int ArenaServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) throw Error(Errc::kEnvironment, "cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(Errc::kEnvironment,
                "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ArenaServer::listen() { server_->listen_after_bind(); }

void ArenaServer::stop() {
  if (server_) server_->stop();
}

bool ArenaServer::running() const { return server_->is_running(); }

}  // namespace capeval::elo
