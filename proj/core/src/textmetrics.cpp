#include "capeval/textmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "capeval/error.hpp"
#include "capeval/parallel.hpp"

namespace capeval::metrics {

namespace {

constexpr double kCiderSigma = 6.0;
constexpr double kCiderScale = 10.0;

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c >= 0x80;
}

using Vec = std::map<std::string, double>;

double norm_of(const Vec& v) {
  double s = 0.0;
  for (const auto& [_, x] : v) s += x * x;
  return std::sqrt(s);
}

double dot_of(const Vec& x, const Vec& y) {
  const Vec& small = x.size() <= y.size() ? x : y;
  const Vec& large = x.size() <= y.size() ? y : x;
  double s = 0.0;
  for (const auto& [g, v] : small) {
    if (auto it = large.find(g); it != large.end()) s += v * it->second;
  }
  return s;
}

Vec weighted(const std::map<std::string, int>& counts, const CorpusIdf& idf,
             std::size_t n) {
  Vec v;
  for (const auto& [g, c] : counts) v.emplace(g, c * idf.idf(n, g));
  return v;
}

Vec raw(const std::map<std::string, int>& counts) {
  Vec v;
  for (const auto& [g, c] : counts) v.emplace(g, static_cast<double>(c));
  return v;
}

double cosine(const Vec& x, const Vec& y) {
  const double nx = norm_of(x);
  const double ny = norm_of(y);
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return dot_of(x, y) / (nx * ny);
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                             : static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

NGramProfile NGramProfile::of(const Tokens& tokens) {
  NGramProfile p;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (std::size_t k = 1; k < n; ++k) {
        g.push_back(' ');
        g += tokens[i + k];
      }
      ++p.counts[n - 1][g];
    }
  }
  return p;
}

void CorpusIdf::add_document(const std::vector<Tokens>& references) {
  std::array<std::set<std::string>, kMaxOrder> seen;
  for (const auto& ref : references) {
    const auto prof = NGramProfile::of(ref);
    for (std::size_t n = 0; n < kMaxOrder; ++n) {
      for (const auto& [g, _] : prof.counts[n]) seen[n].insert(g);
    }
  }
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    for (const auto& g : seen[n]) ++df_[n][g];
  }
  ++docs_;
}

double CorpusIdf::idf(std::size_t n, const std::string& gram) const {
  const auto& table = df_[n - 1];
  const auto it = table.find(gram);
  const double df = it == table.end() ? 1.0 : static_cast<double>(it->second);
  return scale_ * std::log(static_cast<double>(docs_) / df);
}

CorpusIdf CorpusIdf::scaled(double factor) const {
  CorpusIdf c = *this;
  c.scale_ *= factor;
  return c;
}

BleuScore bleu(const Tokens& candidate, const std::vector<Tokens>& references,
               std::size_t max_n) {
  if (references.empty()) {
    throw Error(Errc::kConfiguration, "bleu needs at least one reference");
  }
  if (max_n < 1 || max_n > kMaxOrder) {
    throw Error(Errc::kConfiguration, "bleu order must lie in 1..4");
  }
  if (candidate.empty()) return {0.0, true};

  const auto cand = NGramProfile::of(candidate);
  std::vector<NGramProfile> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(NGramProfile::of(r));

  const std::size_t orders = std::min(max_n, candidate.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    int clipped = 0;
    int total = 0;
    for (const auto& [g, c] : cand.order(n)) {
      int max_ref = 0;
      for (const auto& r : refs) {
        const auto& m = r.order(n);
        if (auto it = m.find(g); it != m.end()) {
          max_ref = std::max(max_ref, it->second);
        }
      }
      clipped += std::min(c, max_ref);
      total += c;
    }
    if (clipped == 0) return {0.0, false};
    log_sum += std::log(static_cast<double>(clipped) / total);
  }

  // Closest reference length; ties go to the shorter reference.
  const auto c = static_cast<double>(candidate.size());
  double best_len = 0.0;
  double best_diff = INFINITY;
  for (const auto& r : references) {
    const auto len = static_cast<double>(r.size());
    const double diff = std::abs(len - c);
    if (diff < best_diff || (diff == best_diff && len < best_len)) {
      best_diff = diff;
      best_len = len;
    }
  }
  const double bp = c < best_len ? std::exp(1.0 - best_len / c) : 1.0;
  return {bp * std::exp(log_sum / static_cast<double>(orders)), false};
}

std::size_t lcs_length(const Tokens& x, const Tokens& y) {
  std::vector<std::size_t> prev(y.size() + 1, 0);
  std::vector<std::size_t> cur(y.size() + 1, 0);
  for (std::size_t i = 1; i <= x.size(); ++i) {
    for (std::size_t j = 1; j <= y.size(); ++j) {
      cur[j] = x[i - 1] == y[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  const std::size_t lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / candidate.size();
  const double r = static_cast<double>(lcs) / reference.size();
  return 2.0 * p * r / (p + r);
}

double cider(const Tokens& candidate, const std::vector<Tokens>& references,
             const CorpusIdf& idf) {
  if (idf.empty()) {
    throw Error(Errc::kConfiguration, "cider needs a non-empty idf table");
  }
  if (references.empty()) {
    throw Error(Errc::kConfiguration, "cider needs at least one reference");
  }
  const auto cand = NGramProfile::of(candidate);
  std::array<Vec, kMaxOrder> cand_w;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    cand_w[n - 1] = weighted(cand.order(n), idf, n);
  }

  double total = 0.0;
  for (const auto& ref_tokens : references) {
    const auto ref = NGramProfile::of(ref_tokens);
    double sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      if (cand.order(n).empty() && ref.order(n).empty()) continue;
      ++orders;
      const Vec ref_w = weighted(ref.order(n), idf, n);
      if (norm_of(cand_w[n - 1]) == 0.0 && norm_of(ref_w) == 0.0) {
        // idf is zero on every gram of both sides: it carries no information,
        // so compare raw term frequencies instead.
        sum += cosine(raw(cand.order(n)), raw(ref.order(n)));
      } else {
        sum += cosine(cand_w[n - 1], ref_w);
      }
    }
    if (orders == 0) continue;
    const double delta = static_cast<double>(candidate.size()) -
                         static_cast<double>(ref_tokens.size());
    const double penalty =
        std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
    total += penalty * sum / static_cast<double>(orders);
  }
  return kCiderScale * total / static_cast<double>(references.size());
}

MeteorAlignment meteor_align(const Tokens& candidate,
                             const Tokens& reference) {
  MeteorAlignment a;
  std::vector<bool> used(reference.size(), false);
  bool in_chunk = false;
  std::size_t last_ref = 0;
  for (const auto& tok : candidate) {
    std::size_t hit = reference.size();
    for (std::size_t j = 0; j < reference.size(); ++j) {
      if (!used[j] && reference[j] == tok) {
        hit = j;
        break;
      }
    }
    if (hit == reference.size()) {
      in_chunk = false;
      continue;
    }
    used[hit] = true;
    ++a.matches;
    if (!in_chunk || hit != last_ref + 1) ++a.chunks;
    in_chunk = true;
    last_ref = hit;
  }
  return a;
}

double meteor_lite(const Tokens& candidate, const Tokens& reference) {
  const auto a = meteor_align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / candidate.size();
  const double r = m / reference.size();
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::kBleu1: return "bleu1";
    case Metric::kBleu4: return "bleu4";
    case Metric::kCider: return "cider";
    case Metric::kMeteor: return "meteor";
    case Metric::kRougeL: return "rouge_l";
  }
  return "";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : all_metrics()) {
    if (metric_name(m) == name) return m;
  }
  throw Error(Errc::kConfiguration, "unknown metric '" + std::string(name) +
                                        "' (expected bleu1, bleu4, cider, "
                                        "meteor or rouge_l)");
}

std::vector<Metric> all_metrics() {
  return {Metric::kBleu1, Metric::kBleu4, Metric::kCider, Metric::kMeteor,
          Metric::kRougeL};
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json items_json = nlohmann::json::array();
  for (const auto& it : items) {
    nlohmann::json j{{"id", it.id}, {"scores", it.scores}};
    if (!it.warnings.empty()) j["warnings"] = it.warnings;
    items_json.push_back(std::move(j));
  }
  return {{"items", std::move(items_json)}, {"means", means}};
}

MetricReport score_corpus(const std::vector<CaptionPair>& pairs,
                          const std::vector<Metric>& metrics,
                          std::size_t workers) {
  if (pairs.empty()) {
    throw Error(Errc::kConfiguration, "score_corpus needs at least one pair");
  }
  if (metrics.empty()) {
    throw Error(Errc::kConfiguration, "no metrics selected");
  }
  struct Prepared {
    Tokens cand;
    std::vector<Tokens> refs;
  };
  std::vector<Prepared> prep(pairs.size());
  CorpusIdf idf;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].references.empty()) {
      throw Error(Errc::kConfiguration,
                  "item '" + pairs[i].id + "' has no reference");
    }
    prep[i].cand = tokenize(pairs[i].candidate);
    for (const auto& r : pairs[i].references) {
      prep[i].refs.push_back(tokenize(r));
    }
    idf.add_document(prep[i].refs);
  }

  MetricReport report;
  report.items.resize(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    const auto& [cand, refs] = prep[i];
    ItemScores& out = report.items[i];
    out.id = pairs[i].id;
    for (Metric m : metrics) {
      double v = 0.0;
      switch (m) {
        case Metric::kBleu1:
        case Metric::kBleu4: {
          const auto b = bleu(cand, refs, m == Metric::kBleu1 ? 1 : 4);
          if (b.empty_candidate &&
              std::find(out.warnings.begin(), out.warnings.end(),
                        "empty candidate") == out.warnings.end()) {
            out.warnings.emplace_back("empty candidate");
          }
          v = b.value;
          break;
        }
        case Metric::kCider:
          v = cider(cand, refs, idf);
          break;
        case Metric::kMeteor:
          for (const auto& r : refs) v = std::max(v, meteor_lite(cand, r));
          break;
        case Metric::kRougeL:
          for (const auto& r : refs) v = std::max(v, rouge_l(cand, r));
          break;
      }
      out.scores[std::string(metric_name(m))] = v;
    }
  });

  // Sorted summation keeps the means bit-identical under input permutation.
  for (Metric m : metrics) {
    const std::string key(metric_name(m));
    std::vector<double> vals;
    vals.reserve(report.items.size());
    for (const auto& it : report.items) vals.push_back(it.scores.at(key));
    std::sort(vals.begin(), vals.end());
    long double s = 0.0L;
    for (double v : vals) s += v;
    report.means[key] =
        static_cast<double>(s / static_cast<long double>(vals.size()));
  }
  return report;
}

}  // namespace capeval::metrics
