#pragma once

// Rule-based caption metrics sharing a single tokenizer: BLEU-1/4, ROUGE-L,
// CIDEr and an exact-match METEOR variant.

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace capeval::metrics {

using Tokens = std::vector<std::string>;

/// Lowercases ASCII, turns ASCII punctuation and whitespace into separators.
/// Bytes >= 0x80 are kept as word characters.
Tokens tokenize(std::string_view text);

constexpr std::size_t kMaxOrder = 4;

/// n-gram multiplicities for n = 1..4, keyed by space-joined grams.
struct NGramProfile {
  std::array<std::map<std::string, int>, kMaxOrder> counts;

  static NGramProfile of(const Tokens& tokens);
  const std::map<std::string, int>& order(std::size_t n) const {
    return counts[n - 1];
  }
};

/// Document frequencies over a corpus whose documents are the reference sets
/// of the evaluation run.
class CorpusIdf {
 public:
  void add_document(const std::vector<Tokens>& references);

  std::size_t corpus_size() const noexcept { return docs_; }
  bool empty() const noexcept { return docs_ == 0; }
  /// log(|corpus| / df); grams never seen use df = 1.
  double idf(std::size_t n, const std::string& gram) const;
  /// Same weighting scaled by `factor`; used to check scale invariance.
  CorpusIdf scaled(double factor) const;

 private:
  std::array<std::map<std::string, int>, kMaxOrder> df_;
  std::size_t docs_ = 0;
  double scale_ = 1.0;
};

struct BleuScore {
  double value = 0.0;
  bool empty_candidate = false;
};

/// Sentence BLEU with clipped precisions and closest-reference brevity
/// penalty. Orders longer than the candidate are left out of the geometric
/// mean.
BleuScore bleu(const Tokens& candidate, const std::vector<Tokens>& references,
               std::size_t max_n);

std::size_t lcs_length(const Tokens& x, const Tokens& y);

/// LCS-based F1.
double rouge_l(const Tokens& candidate, const Tokens& reference);

/// CIDEr with Gaussian length penalty (sigma = 6), scaled by 10.
double cider(const Tokens& candidate, const std::vector<Tokens>& references,
             const CorpusIdf& idf);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Greedy one-to-one left-to-right exact unigram alignment.
MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference);

/// F_mean = 10PR/(R+9P), penalty 0.5 * (chunks/matches)^3.
double meteor_lite(const Tokens& candidate, const Tokens& reference);

enum class Metric { kBleu1, kBleu4, kCider, kMeteor, kRougeL };

std::string_view metric_name(Metric m);
/// Throws a configuration error for unknown names.
Metric parse_metric(std::string_view name);
std::vector<Metric> all_metrics();

struct CaptionPair {
  std::string id;
  std::string candidate;
  std::vector<std::string> references;
};

struct ItemScores {
  std::string id;
  std::map<std::string, double> scores;
  std::vector<std::string> warnings;
};

struct MetricReport {
  std::vector<ItemScores> items;
  std::map<std::string, double> means;

  nlohmann::json to_json() const;
};

/// Scores every pair; the CIDEr idf is built once over all references.
MetricReport score_corpus(const std::vector<CaptionPair>& pairs,
                          const std::vector<Metric>& metrics,
                          std::size_t workers = 1);

}  // namespace capeval::metrics
