#include <doctest.h>

#include <cmath>
#include <random>

#include "capeval/error.hpp"
#include "capeval/elo.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace capeval;
using namespace capeval::elo;

namespace {

MatchRecord match(std::string a, std::string b, Outcome o) {
  return {"2024-01-01T00:00:00Z", "v", std::move(a), std::move(b), o, "j"};
}

}  // namespace

TEST_SUITE("elo") {
  TEST_CASE("expected score") {
    const EloConfig cfg;
    CHECK(expected_score(1000, 1000, cfg) == 0.5);
    CHECK(expected_score(1400, 1000, cfg) == doctest::Approx(1.0 / 1.1).epsilon(1e-12));
    CHECK(expected_score(1000, 1400, cfg) == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(700, 2000);
    for (int i = 0; i < 1000; ++i) {
      const double a = u(rng), b = u(rng);
      CHECK(std::abs(expected_score(a, b, cfg) + expected_score(b, a, cfg) - 1.0) <=
            1e-12);
    }
  }

  TEST_CASE("update fixtures and invariants") {
    const EloConfig cfg;
    CHECK(update(1000, 1000, Outcome::kA, cfg) == std::pair{1016.0, 984.0});
    CHECK(update(1000, 1000, Outcome::kTie, cfg) == std::pair{1000.0, 1000.0});
    CHECK(update(706, 706, Outcome::kB, cfg).first == 700.0);
    CHECK(update(706, 706, Outcome::kB, cfg).second == 722.0);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(900, 1600);
    for (int i = 0; i < 500; ++i) {
      const double a = u(rng), b = u(rng);
      const Outcome o = static_cast<Outcome>(i % 3);
      const auto [na, nb] = update(a, b, o, cfg);
      CHECK(std::abs((na - a) + (nb - b)) <= 1e-9);
    }
  }

  TEST_CASE("single match replay") {
    const auto t = replay({match("alpha", "beta", Outcome::kA)}, {}, {1, 17, 100});
    CHECK(t.models.at("alpha").rating == 1016.0);
    CHECK(t.models.at("beta").rating == 984.0);
    CHECK(t.models.at("alpha").games == 1);
  }

  TEST_CASE("ties only keep everyone at the initial mean") {
    std::vector<MatchRecord> log;
    for (int i = 0; i < 30; ++i) {
      log.push_back(match("m" + std::to_string(i % 3), "m" + std::to_string((i + 1) % 3),
                          Outcome::kTie));
    }
    const auto t = replay(log, {}, {20, 5, 50});
    for (const auto& [_, r] : t.models) CHECK(r.rating == 1000.0);
  }

  TEST_CASE("replay determinism and floor") {
    const auto log = simulate_matches({"a", "b", "c", "d"}, 400, {}, 9);
    const auto t1 = replay(log, {}, {25, 3, 200});
    const auto t2 = replay(log, {}, {25, 3, 200});
    CHECK(t1.to_json() == t2.to_json());
    for (const auto& [_, r] : t1.models) {
      CHECK(r.rating >= 700.0);
      CHECK(r.lower <= r.rating);
      CHECK(r.rating <= r.upper);
    }
    for (const auto& [_, v] : run_pass(log, {})) CHECK(v >= 700.0);
    const auto ranked = t1.ranked();
    for (std::size_t i = 1; i < ranked.size(); ++i) {
      CHECK(ranked[i - 1].second.rating >= ranked[i].second.rating);
    }
  }

  TEST_CASE("simulation is seeded") {
    const auto a = simulate_matches({"x", "y", "z"}, 50, {}, 1);
    CHECK(a == simulate_matches({"x", "y", "z"}, 50, {}, 1));
    CHECK(a.size() == 50);
    for (const auto& m : a) CHECK(m.model_a != m.model_b);
  }

  TEST_CASE("pearson") {
    const std::vector<double> xs{1, 2, 3, 4, 5.5};
    std::vector<double> ys, neg;
    for (double x : xs) {
      ys.push_back(2 * x + 1);
      neg.push_back(-x);
    }
    CHECK(std::abs(correlate(xs, ys) - 1.0) <= 1e-12);
    CHECK(std::abs(correlate(xs, neg) + 1.0) <= 1e-12);
    // Closed form for (1,2,3)/(2,1,4) is 3/sqrt(6 * 14/3) = sqrt(3/7).
    const double r = correlate({1, 2, 3}, {2, 1, 4});
    CHECK(std::abs(r - std::sqrt(3.0 / 7.0)) <= 1e-12);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    for (int t = 0; t < 50; ++t) {
      std::vector<double> a(10), b(10);
      for (int i = 0; i < 10; ++i) {
        a[i] = g(rng);
        b[i] = a[i] * 0.3 + g(rng);
      }
      CHECK(std::abs(correlate(a, b) - oracle::pearson(a, b)) <= 1e-12);
    }
    CHECK_THROWS_AS(correlate({1, 1, 1}, {1, 2, 3}), Error);
    CHECK_THROWS_AS(correlate({1, 2}, {1, 2, 3}), Error);
  }

  TEST_CASE("log io and validation") {
    testing_support::TempDir dir;
    append_record(dir / "log.jsonl", match("a", "b", Outcome::kB));
    append_record(dir / "log.jsonl", match("b", "c", Outcome::kTie));
    const auto log = load_log(dir / "log.jsonl");
    REQUIRE(log.size() == 2);
    CHECK(log[0] == match("a", "b", Outcome::kB));
    CHECK_THROWS_AS(match("a", "a", Outcome::kA).validate(), Error);
    CHECK_THROWS_AS(parse_outcome("draw"), Error);
    testing_support::write_file(dir / "bad.jsonl", "{\"model_a\": 1}\n");
    CHECK_THROWS_AS(load_log(dir / "bad.jsonl"), Error);
  }
}
