#pragma once

// Elo ratings over pairwise human votes, order-averaged by shuffled replay.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace capeval::elo {

struct EloConfig {
  double initial_mean = 1000.0;
  double initial_std = 300.0;  // only used to draw synthetic ratings
  double log_base = 10.0;
  double scale = 400.0;
  double k_factor = 32.0;
  double rating_floor = 700.0;

  void validate() const;
};

enum class Outcome { kA, kB, kTie };

std::string_view outcome_name(Outcome o);
Outcome parse_outcome(std::string_view s);

struct MatchRecord {
  std::string timestamp;  // ISO-8601 UTC
  std::string video_id;
  std::string model_a;
  std::string model_b;
  Outcome outcome = Outcome::kTie;
  std::string judge_id;

  void validate() const;
  nlohmann::json to_json() const;
  static MatchRecord from_json(const nlohmann::json& j);

  friend bool operator==(const MatchRecord&, const MatchRecord&) = default;
};

/// E = 1 / (1 + base^((rb - ra) / scale)).
double expected_score(double ra, double rb, const EloConfig& cfg);

/// Both sides move by K * (S - E) from their pre-match ratings, then are
/// clamped to the rating floor.
std::pair<double, double> update(double ra, double rb, Outcome outcome,
                                 const EloConfig& cfg);

struct ModelRating {
  double rating = 0.0;  // mean final rating across passes
  double lower = 0.0;   // 95% interval for the mean
  double upper = 0.0;
  std::size_t games = 0;
};

struct RatingTable {
  std::map<std::string, ModelRating> models;
  std::size_t shuffles = 0;
  std::uint64_t seed = 0;

  /// Entries sorted by descending rating, ties by name.
  std::vector<std::pair<std::string, ModelRating>> ranked() const;
  nlohmann::json to_json() const;
};

/// Single chronological pass; every model starts at initial_mean.
std::map<std::string, double> run_pass(const std::vector<MatchRecord>& log,
                                       const EloConfig& cfg);

struct ReplayOptions {
  std::size_t shuffles = 100;
  std::uint64_t seed = 17;
  std::size_t bootstrap_resamples = 1000;
};

/// Runs `shuffles` passes over seeded permutations of the log. Each model's
/// rating is the mean across passes; the interval is a bootstrap percentile
/// 95% interval of that mean.
RatingTable replay(const std::vector<MatchRecord>& log, const EloConfig& cfg,
                   const ReplayOptions& options);

/// Pearson product-moment correlation.
double correlate(const std::vector<double>& xs, const std::vector<double>& ys);

/// Synthetic log: hidden strengths drawn from N(initial_mean, initial_std),
/// winners sampled from the Elo expectation, uniform pairings.
std::vector<MatchRecord> simulate_matches(const std::vector<std::string>& models,
                                          std::size_t matches,
                                          const EloConfig& cfg,
                                          std::uint64_t seed);

std::vector<MatchRecord> load_log(const std::filesystem::path& path);
void append_record(const std::filesystem::path& path, const MatchRecord& rec);

/// Seeded Fisher-Yates with a portable draw from mt19937_64, so a seed gives
/// the same permutation on every standard library.
template <typename T, typename Rng>
void portable_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    std::swap(v[i - 1], v[x % bound]);
  }
}

}  // namespace capeval::elo
