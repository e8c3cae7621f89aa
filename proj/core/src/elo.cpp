#include "capeval/elo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "capeval/error.hpp"

namespace capeval::elo {

namespace {

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v.front();
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

}  // namespace

void EloConfig::validate() const {
  if (!(initial_mean > 0 && initial_std > 0 && log_base > 0 && scale > 0 &&
        k_factor > 0 && rating_floor > 0)) {
    throw Error(Errc::kConfiguration, "elo parameters must be positive");
  }
  if (rating_floor > initial_mean) {
    throw Error(Errc::kConfiguration,
                "elo rating floor exceeds the initial mean");
  }
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kA: return "a";
    case Outcome::kB: return "b";
    case Outcome::kTie: return "tie";
  }
  return "";
}

Outcome parse_outcome(std::string_view s) {
  if (s == "a") return Outcome::kA;
  if (s == "b") return Outcome::kB;
  if (s == "tie") return Outcome::kTie;
  throw Error(Errc::kValidation,
              "outcome must be one of a, b, tie (got '" + std::string(s) + "')");
}

void MatchRecord::validate() const {
  if (model_a.empty() || model_b.empty()) {
    throw Error(Errc::kValidation, "match record needs two model names");
  }
  if (model_a == model_b) {
    throw Error(Errc::kValidation,
                "match record pits model '" + model_a + "' against itself");
  }
}

nlohmann::json MatchRecord::to_json() const {
  return {{"timestamp", timestamp}, {"video_id", video_id},
          {"model_a", model_a},     {"model_b", model_b},
          {"outcome", outcome_name(outcome)},
          {"judge_id", judge_id}};
}

MatchRecord MatchRecord::from_json(const nlohmann::json& j) {
  MatchRecord r;
  r.timestamp = j.value("timestamp", "");
  r.video_id = j.value("video_id", "");
  r.model_a = j.at("model_a").get<std::string>();
  r.model_b = j.at("model_b").get<std::string>();
  r.outcome = parse_outcome(j.at("outcome").get<std::string>());
  r.judge_id = j.value("judge_id", "");
  r.validate();
  return r;
}

double expected_score(double ra, double rb, const EloConfig& cfg) {
  return 1.0 / (1.0 + std::pow(cfg.log_base, (rb - ra) / cfg.scale));
}

std::pair<double, double> update(double ra, double rb, Outcome outcome,
                                 const EloConfig& cfg) {
  const double sa = outcome == Outcome::kA   ? 1.0
                    : outcome == Outcome::kB ? 0.0
                                             : 0.5;
  const double ea = expected_score(ra, rb, cfg);
  const double eb = expected_score(rb, ra, cfg);
  const double na = ra + cfg.k_factor * (sa - ea);
  const double nb = rb + cfg.k_factor * ((1.0 - sa) - eb);
  return {std::max(na, cfg.rating_floor), std::max(nb, cfg.rating_floor)};
}

std::vector<std::pair<std::string, ModelRating>> RatingTable::ranked() const {
  std::vector<std::pair<std::string, ModelRating>> v(models.begin(),
                                                     models.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& x, const auto& y) {
    return x.second.rating > y.second.rating;
  });
  return v;
}

nlohmann::json RatingTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [name, r] : ranked()) {
    rows.push_back({{"model", name},
                    {"rating", r.rating},
                    {"lower", r.lower},
                    {"upper", r.upper},
                    {"games", r.games}});
  }
  return {{"models", std::move(rows)}, {"shuffles", shuffles}, {"seed", seed}};
}

std::map<std::string, double> run_pass(const std::vector<MatchRecord>& log,
                                       const EloConfig& cfg) {
  std::map<std::string, double> ratings;
  for (const auto& m : log) {
    double& ra = ratings.try_emplace(m.model_a, cfg.initial_mean).first->second;
    double& rb = ratings.try_emplace(m.model_b, cfg.initial_mean).first->second;
    std::tie(ra, rb) = update(ra, rb, m.outcome, cfg);
  }
  return ratings;
}

RatingTable replay(const std::vector<MatchRecord>& log, const EloConfig& cfg,
                   const ReplayOptions& options) {
  if (log.empty()) throw Error(Errc::kNoData, "match log is empty");
  if (options.shuffles == 0) {
    throw Error(Errc::kConfiguration, "shuffles must be >= 1");
  }
  cfg.validate();

  RatingTable table;
  table.shuffles = options.shuffles;
  table.seed = options.seed;
  std::map<std::string, std::vector<double>> samples;
  for (const auto& m : log) {
    m.validate();
    ++table.models[m.model_a].games;
    ++table.models[m.model_b].games;
  }

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(log.size());
  std::vector<MatchRecord> permuted(log.size());
  for (std::size_t pass = 0; pass < options.shuffles; ++pass) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    portable_shuffle(order, rng);
    for (std::size_t i = 0; i < order.size(); ++i) permuted[i] = log[order[i]];
    for (const auto& [name, r] : run_pass(permuted, cfg)) {
      samples[name].push_back(r);
    }
  }

  std::mt19937_64 boot(options.seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& [name, xs] : samples) {
    ModelRating& out = table.models[name];
    out.rating = std::accumulate(xs.begin(), xs.end(), 0.0) /
                 static_cast<double>(xs.size());
    std::vector<double> means(options.bootstrap_resamples);
    for (double& m : means) {
      double s = 0.0;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        s += xs[uniform_index(boot, xs.size())];
      }
      m = s / static_cast<double>(xs.size());
    }
    out.lower = means.empty() ? out.rating : percentile(means, 0.025);
    out.upper = means.empty() ? out.rating : percentile(means, 0.975);
  }
  return table;
}

double correlate(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) {
    throw Error(Errc::kDimension, "correlate needs equal-length inputs");
  }
  if (xs.size() < 2) {
    throw Error(Errc::kUndefinedCorrelation,
                "correlate needs at least two points");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(Errc::kUndefinedCorrelation,
                "correlation is undefined for a constant series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<MatchRecord> simulate_matches(const std::vector<std::string>& models,
                                          std::size_t matches,
                                          const EloConfig& cfg,
                                          std::uint64_t seed) {
  if (models.size() < 2) {
    throw Error(Errc::kConfiguration, "simulation needs at least two models");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> strength(cfg.initial_mean, cfg.initial_std);
  std::vector<double> hidden;
  for (std::size_t i = 0; i < models.size(); ++i) {
    hidden.push_back(std::max(strength(rng), cfg.rating_floor));
  }
  std::vector<MatchRecord> log;
  log.reserve(matches);
  for (std::size_t m = 0; m < matches; ++m) {
    const auto a = uniform_index(rng, models.size());
    auto b = uniform_index(rng, models.size() - 1);
    if (b >= a) ++b;
    const double p = expected_score(hidden[a], hidden[b], cfg);
    MatchRecord r;
    r.timestamp = "1970-01-01T00:00:00Z";
    r.video_id = "sim-" + std::to_string(m);
    r.model_a = models[a];
    r.model_b = models[b];
    r.outcome = uniform01(rng) < p ? Outcome::kA : Outcome::kB;
    r.judge_id = "simulated";
    log.push_back(std::move(r));
  }
  return log;
}

std::vector<MatchRecord> load_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open match log " + path.string());
  std::vector<MatchRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(MatchRecord::from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(Errc::kValidation, path.string() + ":" +
                                         std::to_string(lineno) + ": " +
                                         e.what());
    }
  }
  return out;
}

void append_record(const std::filesystem::path& path, const MatchRecord& rec) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(Errc::kEnvironment, "cannot append to " + path.string());
  out << rec.to_json().dump() << '\n';
  out.flush();
  if (!out) throw Error(Errc::kEnvironment, "write failed on " + path.string());
}

}  // namespace capeval::elo
