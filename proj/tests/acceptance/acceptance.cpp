// Acceptance suite: one PASS/FAIL line per criterion. With a criterion name as
// the only argument, runs just that criterion. Exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "capeval/bench.hpp"
#include "capeval/elo.hpp"
#include "capeval/llmclient.hpp"
#include "capeval/rule_mock.hpp"
#include "capeval/textmetrics.hpp"
#include "capeval/tokmerge.hpp"
#include "capeval/vdcscore.hpp"
#include "cli_runs.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace capeval;
namespace ts = testing_support;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  /// Records the first failed check; later ones are ignored.
  void check(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail.str("");
      detail << what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(12);
  s << v;
  return s.str();
}

tokmerge::TokenMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return tokmerge::TokenMatrix(rows.size(), rows.front().size(), std::move(flat));
}

// Criteria ------------------------------------------------------------------

void vdcscore_self_consistency(Verdict& v) {
  const auto t0 = Clock::now();
  const std::size_t net_before = llm::HttpBackend::network_attempts();
  const auto entries = bench::load(ts::data_dir() / "bench20.jsonl");
  v.check(entries.size() == 20, "fixture corpus does not hold 20 items");
  llm::LlmClient client(mock::make_rule_backend(), 4);
  std::vector<vdc::TripletResult> all;
  for (const auto& e : entries) {
    const auto& gt = e.captions.detailed;
    const auto qa = vdc::extract_qa(gt, vdc::Category::kDetailed, client).pairs;
    const auto r = vdc::evaluate(gt, qa, client);
    v.check(r.accuracy == 100.0 && r.score == 5.0,
            e.video_id + ": accuracy " + fmt(r.accuracy) + ", score " + fmt(r.score));
    all.insert(all.end(), r.per_triplet.begin(), r.per_triplet.end());
  }
  const auto overall = vdc::VDCResult::aggregate(all, "");
  const double secs = seconds_since(t0);
  v.check(overall.accuracy == 100.0 && overall.score == 5.0,
          "corpus accuracy " + fmt(overall.accuracy) + ", score " + fmt(overall.score));
  v.check(llm::HttpBackend::network_attempts() == net_before, "network was used");
  v.check(secs < 5.0, "took " + fmt(secs) + " s");
  if (v.pass) {
    v.detail << "20 items, " << all.size() << " triplets, accuracy 100, score 5, "
             << fmt(secs) << " s, 0 network attempts";
  }
}

void tokmerge_conservation(Verdict& v) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240917);
  std::normal_distribution<double> g(0.0, 1.0);
  std::size_t checked_rows = 0;
  for (int c = 0; c < 1000 && v.pass; ++c) {
    const std::size_t n0 = std::uniform_int_distribution<std::size_t>(2, 512)(rng);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    const std::size_t layers = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    std::vector<std::vector<double>> rows(n0, std::vector<double>(d));
    for (auto& r : rows) {
      for (double& x : r) x = g(rng);
    }
    tokmerge::SizeVector sizes(n0);
    for (auto& s : sizes) s = std::uniform_int_distribution<int>(1, 4)(rng);

    tokmerge::MergeSchedule sched;
    sched.layers = layers;
    sched.initial_tokens = n0;
    std::size_t n = n0;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t cap = std::min((n + 1) / 2, n - 1);
      const std::size_t r = std::uniform_int_distribution<std::size_t>(0, cap)(rng);
      sched.per_layer_r.push_back(r);
      n -= r;
    }
    const auto run = tokmerge::run_layers(to_matrix(rows), sizes, tokmerge::self_keys(), sched);

    const auto total = [](const tokmerge::SizeVector& s) {
      return std::accumulate(s.begin(), s.end(), std::int64_t{0});
    };
    const std::string where = "case " + std::to_string(c) + " (n=" + std::to_string(n0) +
                              ", d=" + std::to_string(d) + ")";
    v.check(total(run.sizes) == total(sizes), where + ": size sum changed");
    v.check(run.tokens.rows() == n0 - sched.total() && run.trace.final_count == n0 - sched.total(),
            where + ": count law broken");
    const auto means = oracle::cluster_means(rows, sizes, run.trace.source_map,
                                             run.tokens.rows());
    for (std::size_t k = 0; k < run.tokens.rows() && v.pass; ++k) {
      for (std::size_t j = 0; j < d; ++j) {
        const double want = means[k][j];
        const double got = run.tokens(k, j);
        if (std::abs(got - want) > 1e-6 * std::max(1.0, std::abs(want))) {
          v.check(false, where + ": row " + std::to_string(k) + " is " + fmt(got) +
                             ", oracle " + fmt(want));
          break;
        }
      }
      ++checked_rows;
    }
  }
  const double secs = seconds_since(t0);
  v.check(secs < 30.0, "took " + fmt(secs) + " s");
  if (v.pass) {
    v.detail << "1000 cases, " << checked_rows << " merged rows within 1e-6, "
             << fmt(secs) << " s";
  }
}

void matching_oracle(Verdict& v) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> small(-1, 1);
  std::size_t plans = 0;
  for (std::size_t n = 1; n <= 10 && v.pass; ++n) {
    for (int set = 0; set < 200 && v.pass; ++set) {
      const std::size_t d = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
      std::vector<std::vector<double>> rows(n, std::vector<double>(d));
      for (auto& r : rows) {
        bool nonzero = false;
        while (!nonzero) {
          for (double& x : r) x = set % 2 ? small(rng) : g(rng);
          nonzero = std::any_of(r.begin(), r.end(), [](double x) { return x != 0.0; });
        }
      }
      const auto keys = to_matrix(rows);
      const std::size_t max_r = n < 2 ? 0 : (n + 1) / 2;
      for (std::size_t r = 0; r <= max_r; ++r) {
        const auto plan = tokmerge::bipartite_soft_match(keys, r);
        const auto want = oracle::brute_force_match(rows, r);
        bool same = plan.pairs.size() == want.size();
        for (std::size_t i = 0; same && i < want.size(); ++i) {
          same = plan.pairs[i].a == want[i].a && plan.pairs[i].b == want[i].b &&
                 plan.pairs[i].similarity == want[i].sim;
        }
        v.check(same, "n=" + std::to_string(n) + ", set " + std::to_string(set) +
                          ", r=" + std::to_string(r) + ": plan differs from oracle");
        ++plans;
      }
    }
  }
  const double secs = seconds_since(t0);
  v.check(secs < 10.0, "took " + fmt(secs) + " s");
  if (v.pass) v.detail << plans << " plans identical to the oracle, " << fmt(secs) << " s";
}

void proportional_attention(Verdict& v) {
  using tokmerge::proportional_attention;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 2.0);
  double worst_softmax = 0, worst_ratio = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t cols = 2 + t % 15;
    std::vector<std::vector<double>> logits(3, std::vector<double>(cols));
    for (auto& r : logits) {
      for (double& x : r) x = g(rng);
    }
    const auto m = to_matrix(logits);
    const auto unit = proportional_attention(m, tokmerge::SizeVector(cols, 1));
    tokmerge::SizeVector sizes(cols);
    for (auto& s : sizes) s = std::uniform_int_distribution<int>(1, 9)(rng);
    const auto base = proportional_attention(m, sizes);
    const std::size_t k = t % cols;
    auto doubled_sizes = sizes;
    doubled_sizes[k] *= 2;
    const auto doubled = proportional_attention(m, doubled_sizes);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto ref = oracle::softmax(logits[i]);
      for (std::size_t j = 0; j < cols; ++j) {
        worst_softmax = std::max(worst_softmax, std::abs(unit(i, j) - ref[j]));
      }
      // Unnormalized weight of column k doubles: its odds against any other
      // column double exactly.
      const std::size_t other = (k + 1) % cols;
      const double before = base(i, k) / base(i, other);
      const double after = doubled(i, k) / doubled(i, other);
      worst_ratio = std::max(worst_ratio, std::abs(after / before - 2.0));
    }
  }
  const auto ex1 = proportional_attention(to_matrix({{0.7, 0.7}}), {2, 1});
  const auto ex2 = proportional_attention(to_matrix({{-1, -1, -1}}), {1, 1, 2});
  v.check(worst_softmax <= 1e-9, "unit sizes deviate from softmax by " + fmt(worst_softmax));
  v.check(worst_ratio <= 1e-9, "size-doubling ratio off by " + fmt(worst_ratio));
  v.check(std::abs(ex1(0, 0) - 2.0 / 3) <= 1e-9 && std::abs(ex1(0, 1) - 1.0 / 3) <= 1e-9,
          "(2,1) example gives " + fmt(ex1(0, 0)) + ", " + fmt(ex1(0, 1)));
  v.check(std::abs(ex2(0, 0) - 0.25) <= 1e-9 && std::abs(ex2(0, 2) - 0.5) <= 1e-9,
          "(1,1,2) example gives " + fmt(ex2(0, 0)) + ", " + fmt(ex2(0, 2)));
  if (v.pass) {
    v.detail << "softmax deviation " << worst_softmax << ", doubling deviation "
             << worst_ratio;
  }
}

void rule_metric_oracles(Verdict& v) {
  using namespace metrics;
  const auto within = [](double got, double want) { return std::abs(got - want) <= 1e-6; };
  const Tokens ref3{"the", "cat", "sat"};
  const double b = bleu({"the", "cat"}, {ref3}, 1).value;
  v.check(within(b, std::exp(1.0 - 1.5)) && std::abs(b - 0.6065) < 5e-5,
          "BLEU brevity fixture " + fmt(b));
  const double rl = rouge_l({"a", "b", "c", "d"}, {"a", "c", "d", "e"});
  v.check(within(rl, 0.75), "ROUGE-L fixture " + fmt(rl));
  const double m3 = meteor_lite({"a", "b", "c"}, {"a", "b", "c"});
  v.check(within(m3, 1.0 - 0.5 / 27.0) && std::abs(m3 - 0.9815) < 5e-5,
          "METEOR identity fixture " + fmt(m3));
  const double m2 = meteor_lite({"a", "b"}, {"b", "a"});
  v.check(within(m2, 0.5), "METEOR swap fixture " + fmt(m2));
  CorpusIdf one;
  one.add_document({ref3});
  const double c1 = cider(ref3, {ref3}, one);
  v.check(within(c1, 10.0), "CIDEr identity fixture " + fmt(c1));

  std::mt19937_64 rng(100);
  const std::vector<std::string> vocab = {"a", "man", "rides", "a", "red", "bike",
                                          "down", "the", "hill", "camera", "follows",
                                          "him", "slowly", "sky", "is", "grey"};
  std::vector<Tokens> texts;
  for (int i = 0; i < 100; ++i) {
    Tokens t(std::uniform_int_distribution<std::size_t>(1, 40)(rng));
    for (auto& w : t) w = vocab[std::uniform_int_distribution<std::size_t>(0, vocab.size() - 1)(rng)];
    texts.push_back(t);
  }
  CorpusIdf idf;
  for (const auto& t : texts) idf.add_document({t});
  for (std::size_t i = 0; i < texts.size() && v.pass; ++i) {
    const auto& t = texts[i];
    const double m = static_cast<double>(t.size());
    const std::string where = "identical pair " + std::to_string(i) + ": ";
    v.check(within(bleu(t, {t}, 1).value, 1.0), where + "BLEU@1");
    v.check(within(bleu(t, {t}, 4).value, 1.0), where + "BLEU@4");
    v.check(within(rouge_l(t, t), 1.0), where + "ROUGE-L");
    v.check(within(meteor_lite(t, t), 1.0 - 0.5 / (m * m * m)), where + "METEOR");
    v.check(within(cider(t, {t}, idf), 10.0), where + "CIDEr " + fmt(cider(t, {t}, idf)));
  }
  if (v.pass) v.detail << "5 fixtures and 100 identical pairs within 1e-6";
}

void elo_arithmetic(Verdict& v) {
  using namespace elo;
  const EloConfig cfg;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 3000.0);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng), b = u(rng);
    worst = std::max(worst, std::abs(expected_score(a, b, cfg) + expected_score(b, a, cfg) - 1.0));
  }
  v.check(worst <= 1e-12, "symmetry deviation " + fmt(worst));
  const auto win = update(1000, 1000, Outcome::kA, cfg);
  v.check(win.first == 1016.0 && win.second == 984.0,
          "1000 vs 1000 gives " + fmt(win.first) + "/" + fmt(win.second));
  const auto clamp = update(706, 706, Outcome::kB, cfg);
  v.check(clamp.first == 700.0, "706 loss gives " + fmt(clamp.first));

  std::vector<std::string> models;
  for (int i = 0; i < 8; ++i) models.push_back("model_" + std::to_string(i));
  const auto log = simulate_matches(models, 2778, cfg, 17);
  const auto t10a = replay(log, cfg, {10, 17, 1000});
  const auto t10b = replay(log, cfg, {10, 17, 1000});
  v.check(t10a.to_json() == t10b.to_json(), "replay differs under a fixed seed");
  const auto t100 = replay(log, cfg, {100, 17, 1000});
  double widest_ratio = 0;
  for (const auto& [name, r10] : t10a.models) {
    const auto& r100 = t100.models.at(name);
    const double w10 = r10.upper - r10.lower;
    const double w100 = r100.upper - r100.lower;
    widest_ratio = std::max(widest_ratio, w100 / w10);
    v.check(w100 <= w10, name + ": width " + fmt(w100) + " at 100 shuffles vs " +
                             fmt(w10) + " at 10");
    v.check(r100.rating >= 700.0, name + " below the floor");
  }
  if (v.pass) {
    v.detail << "symmetry " << worst << ", updates exact, 2778 matches: max width ratio "
             << fmt(widest_ratio);
  }
}

void pearson(Verdict& v) {
  std::vector<double> xs{1, 2, 3, 4, 5, 6.5};
  std::vector<double> up, down;
  for (double x : xs) {
    up.push_back(2 * x + 1);
    down.push_back(-x);
  }
  const double r_up = elo::correlate(xs, up);
  const double r_down = elo::correlate(xs, down);
  v.check(std::abs(r_up - 1.0) <= 1e-12, "affine case gives " + fmt(r_up));
  v.check(std::abs(r_down + 1.0) <= 1e-12, "negated case gives " + fmt(r_down));
  const double r = elo::correlate({1, 2, 3}, {2, 1, 4});
  const double independent = oracle::pearson({1, 2, 3}, {2, 1, 4});
  v.check(std::abs(r - 0.5) <= 1e-12,
          "(1,2,3)/(2,1,4) gives " + fmt(r) + " (two-pass oracle " + fmt(independent) +
              ", closed form sqrt(3/7)); expected 0.5");
  if (v.pass) v.detail << "affine +1/-1 and fixture 0.5 within 1e-12";
}

void corpus_stats(Verdict& v) {
  const auto es = bench::load(ts::data_dir() / "stats3.jsonl");
  const auto s = bench::stats(es);
  v.check(s.n_videos == 3 && s.n_captions == 15, "entry or caption count");
  v.check(s.total_words == 44, "total words " + std::to_string(s.total_words) + " != 44");
  v.check(s.vocab_size == 24, "vocab " + std::to_string(s.vocab_size) + " != 24");
  v.check(s.avg_caption_length == 44.0 / 15.0, "avg " + fmt(s.avg_caption_length));
  v.check(s.per_source.at("panda70m").videos == 2 && s.per_source.at("pexels").videos == 1,
          "per-source counts");
  double sum = 0;
  for (const auto& [_, share] : s.per_source) sum += share.proportion;
  v.check(std::abs(sum - 1.0) <= 1e-9, "proportions sum to " + fmt(sum));

  std::vector<bench::BenchmarkEntry> two(2);
  two[0].captions.short_caption = "the dog runs";
  two[1].captions.short_caption = "the dog sees a cat";
  two[0].video_id = "a";
  two[1].video_id = "b";
  const auto s2 = bench::stats(two, {vdc::Category::kShort});
  v.check(s2.total_words == 8 && s2.vocab_size == 6 && s2.avg_caption_length == 4.0,
          "3+5 word fixture");
  if (v.pass) v.detail << "44 words, vocab 24, avg 44/15; 3+5 fixture 8/6/4.0";
}

void determinism(Verdict& v) {
  ts::TempDir dir;
  const auto outcomes = ts::check_determinism(dir.path());
  for (const auto& o : outcomes) v.check(o.ok, o.name + ": " + o.detail);
  if (v.pass) v.detail << outcomes.size() << " commands byte-identical across reruns";
}

const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> kCriteria = {
    {"vdcscore_self_consistency", vdcscore_self_consistency},
    {"tokmerge_conservation", tokmerge_conservation},
    {"matching_oracle", matching_oracle},
    {"proportional_attention", proportional_attention},
    {"rule_metric_oracles", rule_metric_oracles},
    {"elo_arithmetic", elo_arithmetic},
    {"pearson", pearson},
    {"corpus_stats", corpus_stats},
    {"determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  if (only == "--list") {
    for (const auto& [name, _] : kCriteria) std::cout << name << "\n";
    return 0;
  }
  int failed = 0, ran = 0;
  for (const auto& [name, fn] : kCriteria) {
    if (!only.empty() && only != name) continue;
    ++ran;
    Verdict v;
    try {
      fn(v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail.str() << "\n";
    failed += v.pass ? 0 : 1;
  }
  if (ran == 0) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
