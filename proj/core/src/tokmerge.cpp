#include "capeval/tokmerge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "capeval/error.hpp"

namespace capeval::tokmerge {

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

std::size_t ceil_half(std::size_t n) { return (n + 1) / 2; }

}  // namespace

TokenMatrix::TokenMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

TokenMatrix::TokenMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(Errc::kDimension,
                "token matrix: expected " + std::to_string(rows_ * cols_) +
                    " entries, got " + std::to_string(data_.size()));
  }
  for (double x : data_) {
    if (!std::isfinite(x)) {
      throw Error(Errc::kRange, "token matrix: non-finite entry");
    }
  }
}

std::size_t MergeSchedule::total() const {
  return std::accumulate(per_layer_r.begin(), per_layer_r.end(),
                         std::size_t{0});
}

MergeTrace MergeTrace::identity(std::size_t n) {
  MergeTrace t;
  t.source_map.resize(n);
  std::iota(t.source_map.begin(), t.source_map.end(), std::size_t{0});
  t.final_count = n;
  return t;
}

void MergeTrace::compose(std::span<const std::size_t> delta,
                         std::size_t new_count) {
  if (delta.size() != final_count) {
    throw Error(Errc::kDimension, "trace delta does not match token count");
  }
  for (auto& idx : source_map) idx = delta[idx];
  final_count = new_count;
}

MergeSchedule compute_schedule(std::size_t width, std::size_t height,
                               std::size_t patch, std::size_t layers,
                               double keep_ratio) {
  if (patch == 0 || width == 0 || height == 0 || width % patch != 0 ||
      height % patch != 0) {
    throw Error(Errc::kDimension,
                "image " + std::to_string(width) + "x" +
                    std::to_string(height) + " is not divisible by patch " +
                    std::to_string(patch));
  }
  if (layers == 0) throw Error(Errc::kRange, "layers must be >= 1");
  if (!(keep_ratio >= 0.0 && keep_ratio <= 1.0)) {
    throw Error(Errc::kRange, "keep ratio must lie in [0, 1]");
  }
  const std::size_t n0 = (width / patch) * (height / patch);
  // The epsilon absorbs representation error in (1 - ratio), e.g. 1 - 0.9.
  const double raw = (1.0 - keep_ratio) * static_cast<double>(n0) /
                     static_cast<double>(layers);
  auto r = static_cast<std::size_t>(std::floor(raw + 1e-9));

  auto feasible = [&](std::size_t rr) {
    std::size_t n = n0;
    for (std::size_t l = 0; l < layers; ++l) {
      if (rr > ceil_half(n) || rr >= n) return false;
      n -= rr;
    }
    return n >= 1;
  };
  while (r > 0 && !feasible(r)) --r;

  MergeSchedule s;
  s.per_layer_r.assign(layers, r);
  s.keep_ratio = keep_ratio;
  s.layers = layers;
  s.initial_tokens = n0;
  return s;
}

Partition partition_alternating(std::size_t n) {
  if (n < 2) {
    throw Error(Errc::kTooFewTokens,
                "partition needs at least 2 tokens, got " + std::to_string(n));
  }
  Partition p;
  p.a.reserve(ceil_half(n));
  p.b.reserve(n / 2);
  for (std::size_t i = 0; i < n; ++i) (i % 2 == 0 ? p.a : p.b).push_back(i);
  return p;
}

MergePlan bipartite_soft_match(const TokenMatrix& keys, std::size_t r) {
  if (r == 0) return {};
  const Partition part = partition_alternating(keys.rows());
  if (r > part.a.size()) {
    throw Error(Errc::kRange, "r = " + std::to_string(r) + " exceeds |A| = " +
                                  std::to_string(part.a.size()));
  }
  std::vector<double> norms(keys.rows());
  for (std::size_t i = 0; i < keys.rows(); ++i) {
    norms[i] = std::sqrt(squared_norm(keys.row(i)));
    if (norms[i] == 0.0) {
      throw Error(Errc::kDegenerateKey,
                  "key row " + std::to_string(i) + " has zero norm");
    }
  }

  std::vector<MergePair> proposals;
  proposals.reserve(part.a.size());
  for (std::size_t a : part.a) {
    MergePair best{a, part.b.front(), -2.0};
    for (std::size_t b : part.b) {
      const double sim = dot(keys.row(a), keys.row(b)) / (norms[a] * norms[b]);
      if (sim > best.similarity) best = {a, b, sim};
    }
    proposals.push_back(best);
  }
  // Proposals are generated in ascending A order, so a stable sort on
  // similarity alone realizes the (lower A, lower B) tie-break.
  std::stable_sort(proposals.begin(), proposals.end(),
                   [](const MergePair& x, const MergePair& y) {
                     return x.similarity > y.similarity;
                   });
  proposals.resize(r);
  return {std::move(proposals)};
}

MergeStep apply_merge(const TokenMatrix& tokens, const SizeVector& sizes,
                      const MergePlan& plan) {
  const std::size_t n = tokens.rows();
  const std::size_t d = tokens.cols();
  if (sizes.size() != n) {
    throw Error(Errc::kDimension, "sizes length does not match token count");
  }
  std::vector<std::size_t> dest(n);
  std::iota(dest.begin(), dest.end(), std::size_t{0});
  std::vector<bool> is_source(n, false);
  std::vector<bool> is_dest(n, false);
  for (const auto& p : plan.pairs) {
    if (p.a >= n || p.b >= n || p.a == p.b) {
      throw Error(Errc::kRange, "merge plan index out of range");
    }
    if (is_source[p.a]) {
      throw Error(Errc::kRange,
                  "token " + std::to_string(p.a) + " merged more than once");
    }
    is_source[p.a] = true;
    is_dest[p.b] = true;
    dest[p.a] = p.b;
  }
  for (const auto& p : plan.pairs) {
    if (is_source[p.b]) {
      throw Error(Errc::kRange, "merge destination " + std::to_string(p.b) +
                                    " is itself merged away");
    }
  }

  // Accumulate size-weighted sums at destinations.
  std::vector<double> acc(tokens.data());
  std::vector<std::int64_t> acc_size(sizes);
  for (std::size_t i = 0; i < n; ++i) {
    if (is_dest[i]) {
      const auto w = static_cast<double>(sizes[i]);
      for (std::size_t j = 0; j < d; ++j) acc[i * d + j] *= w;
    }
  }
  for (const auto& p : plan.pairs) {
    const auto w = static_cast<double>(sizes[p.a]);
    for (std::size_t j = 0; j < d; ++j) acc[p.b * d + j] += w * tokens(p.a, j);
    acc_size[p.b] += sizes[p.a];
  }

  MergeStep out;
  out.delta.assign(n, 0);
  std::vector<double> data;
  data.reserve((n - plan.pairs.size()) * d);
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_source[i]) continue;
    out.delta[i] = next++;
    const double inv =
        is_dest[i] ? 1.0 / static_cast<double>(acc_size[i]) : 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      data.push_back(is_dest[i] ? acc[i * d + j] * inv : tokens(i, j));
    }
    out.sizes.push_back(acc_size[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (is_source[i]) out.delta[i] = out.delta[dest[i]];
  }
  out.tokens = TokenMatrix(next, d, std::move(data));
  return out;
}

TokenMatrix proportional_attention(const TokenMatrix& logits,
                                   const SizeVector& sizes) {
  if (sizes.size() != logits.cols()) {
    throw Error(Errc::kDimension,
                "sizes length must equal the number of attended tokens");
  }
  std::vector<double> log_s(sizes.size());
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    if (sizes[j] <= 0) {
      throw Error(Errc::kDomain,
                  "token size must be positive at index " + std::to_string(j));
    }
    log_s[j] = std::log(static_cast<double>(sizes[j]));
  }
  TokenMatrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto src = logits.row(i);
    auto dst = out.row(i);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < src.size(); ++j) {
      dst[j] = src[j] + log_s[j];
      mx = std::max(mx, dst[j]);
    }
    double z = 0.0;
    for (double& v : dst) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : dst) v /= z;
  }
  return out;
}

void validate_schedule(const MergeSchedule& schedule, std::size_t n0) {
  std::size_t n = n0;
  for (std::size_t l = 0; l < schedule.per_layer_r.size(); ++l) {
    const std::size_t r = schedule.per_layer_r[l];
    if (r == 0) continue;
    if (n < 2 || r > ceil_half(n) || r >= n) {
      throw Error(Errc::kRange, "layer " + std::to_string(l) + ": r = " +
                                    std::to_string(r) + " is infeasible for " +
                                    std::to_string(n) + " tokens");
    }
    n -= r;
  }
}

MergeRun run_layers(TokenMatrix tokens, SizeVector sizes,
                    const KeyProvider& keys_per_layer,
                    const MergeSchedule& schedule) {
  if (sizes.size() != tokens.rows()) {
    throw Error(Errc::kDimension, "sizes length does not match token count");
  }
  validate_schedule(schedule, tokens.rows());
  MergeRun run{std::move(tokens), std::move(sizes),
               MergeTrace::identity(0)};
  run.trace = MergeTrace::identity(run.tokens.rows());
  for (std::size_t l = 0; l < schedule.per_layer_r.size(); ++l) {
    const std::size_t r = schedule.per_layer_r[l];
    if (r == 0) continue;
    const TokenMatrix keys = keys_per_layer(l, run.tokens);
    if (keys.rows() != run.tokens.rows()) {
      throw Error(Errc::kDimension, "key provider returned " +
                                        std::to_string(keys.rows()) +
                                        " rows at layer " + std::to_string(l));
    }
    const MergePlan plan = bipartite_soft_match(keys, r);
    MergeStep step = apply_merge(run.tokens, run.sizes, plan);
    run.trace.compose(step.delta, step.tokens.rows());
    run.tokens = std::move(step.tokens);
    run.sizes = std::move(step.sizes);
  }
  return run;
}

KeyProvider self_keys() {
  return [](std::size_t, const TokenMatrix& tokens) { return tokens; };
}

std::vector<std::size_t> trace_to_grid(const MergeTrace& trace,
                                       std::size_t grid_w,
                                       std::size_t grid_h) {
  if (grid_w * grid_h != trace.source_map.size()) {
    throw Error(Errc::kDimension,
                "grid " + std::to_string(grid_w) + "x" +
                    std::to_string(grid_h) + " does not cover " +
                    std::to_string(trace.source_map.size()) + " tokens");
  }
  return trace.source_map;
}

std::string render_grid(std::span<const std::size_t> grid,
                        std::size_t grid_w) {
  static constexpr std::string_view kGlyphs =
      "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
  std::string out;
  if (grid_w == 0) return out;
  out.reserve(grid.size() + grid.size() / grid_w);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.push_back(kGlyphs[grid[i] % kGlyphs.size()]);
    if ((i + 1) % grid_w == 0) out.push_back('\n');
  }
  return out;
}

TokenFile parse_token_file(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kValidation, std::string("token file: ") + e.what());
  }
  try {
    const auto n = j.at("n").get<std::size_t>();
    const auto d = j.at("d").get<std::size_t>();
    if (n < 1 || d < 1) {
      throw Error(Errc::kValidation, "token file: n and d must be >= 1");
    }
    TokenFile f{TokenMatrix(n, d, j.at("data").get<std::vector<double>>()),
                SizeVector(n, 1)};
    if (j.contains("sizes")) {
      f.sizes = j["sizes"].get<SizeVector>();
      if (f.sizes.size() != n) {
        throw Error(Errc::kValidation, "token file: sizes length != n");
      }
      for (auto s : f.sizes) {
        if (s < 1) throw Error(Errc::kValidation, "token file: size < 1");
      }
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kValidation, std::string("token file: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::kValidation) throw;
    throw Error(Errc::kValidation, e.what());
  }
}

std::string dump_token_file(const TokenMatrix& tokens,
                            const SizeVector& sizes) {
  nlohmann::json j;
  j["n"] = tokens.rows();
  j["d"] = tokens.cols();
  j["data"] = tokens.data();
  j["sizes"] = sizes;
  return j.dump();
}

}  // namespace capeval::tokmerge
