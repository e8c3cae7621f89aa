#pragma once

// Per-layer token reduction by bipartite soft matching, with size-tracked
// weighted merging and proportional attention.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace capeval::tokmerge {

/// Dense row-major n x d matrix of finite reals.
class TokenMatrix {
 public:
  TokenMatrix() = default;
  TokenMatrix(std::size_t rows, std::size_t cols);
  /// Takes ownership of `data`; throws a dimension error if the extent does
  /// not match or a range error on a non-finite entry.
  TokenMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) {
    return {data_.data() + i * cols_, cols_};
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }
  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }

  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const TokenMatrix&, const TokenMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Number of original patches each token stands for. Entries are >= 1.
using SizeVector = std::vector<std::int64_t>;

struct MergeSchedule {
  std::vector<std::size_t> per_layer_r;
  double keep_ratio = 1.0;
  std::size_t layers = 0;
  std::size_t initial_tokens = 0;

  std::size_t total() const;
};

struct MergePair {
  std::size_t a = 0;  // source, drawn from partition A
  std::size_t b = 0;  // destination, drawn from partition B
  double similarity = 0.0;

  friend bool operator==(const MergePair&, const MergePair&) = default;
};

struct MergePlan {
  std::vector<MergePair> pairs;

  friend bool operator==(const MergePlan&, const MergePlan&) = default;
};

/// source_map[i] is the index, in the final token set, of the token that
/// original token i was folded into.
struct MergeTrace {
  std::vector<std::size_t> source_map;
  std::size_t final_count = 0;

  static MergeTrace identity(std::size_t n);
  /// Follows this trace with a per-step old->new index map.
  void compose(std::span<const std::size_t> delta, std::size_t new_count);

  friend bool operator==(const MergeTrace&, const MergeTrace&) = default;
};

struct Partition {
  std::vector<std::size_t> a;
  std::vector<std::size_t> b;
};

struct MergeStep {
  TokenMatrix tokens;
  SizeVector sizes;
  std::vector<std::size_t> delta;  // old index -> new index
};

struct MergeRun {
  TokenMatrix tokens;
  SizeVector sizes;
  MergeTrace trace;
};

/// Keys used for matching at a given layer, computed from the tokens that
/// enter that layer.
using KeyProvider =
    std::function<TokenMatrix(std::size_t layer, const TokenMatrix& tokens)>;

/// Constant per-layer merge count r = floor((1 - keep_ratio) * (W*H/P^2) / L).
/// When that r would remove the last token or exceed a layer's A-partition,
/// it is lowered to the largest feasible constant value.
MergeSchedule compute_schedule(std::size_t width, std::size_t height,
                               std::size_t patch, std::size_t layers,
                               double keep_ratio);

/// Even indices go to A, odd indices to B.
Partition partition_alternating(std::size_t n);

/// Each A token proposes its most cosine-similar B token; the r strongest
/// proposals are kept. Ties go to the lower A index, then the lower B index.
MergePlan bipartite_soft_match(const TokenMatrix& keys, std::size_t r);

/// Folds each planned source into its destination as a size-weighted mean and
/// drops the sources. Survivors keep their original relative order.
MergeStep apply_merge(const TokenMatrix& tokens, const SizeVector& sizes,
                      const MergePlan& plan);

/// Row-wise softmax(logits + log s), with s broadcast across columns.
TokenMatrix proportional_attention(const TokenMatrix& logits,
                                   const SizeVector& sizes);

/// Checks that every layer's r fits the A partition of the tokens entering it
/// and that at least one token survives.
void validate_schedule(const MergeSchedule& schedule, std::size_t n0);

MergeRun run_layers(TokenMatrix tokens, SizeVector sizes,
                    const KeyProvider& keys_per_layer,
                    const MergeSchedule& schedule);

/// Uses the tokens themselves as matching keys.
KeyProvider self_keys();

/// Row-major grid_h x grid_w cluster ids; cells sharing a survivor share an id.
std::vector<std::size_t> trace_to_grid(const MergeTrace& trace,
                                       std::size_t grid_w, std::size_t grid_h);

/// One character per cell, one line per grid row.
std::string render_grid(std::span<const std::size_t> grid, std::size_t grid_w);

// JSON token file: {"n": int, "d": int, "data": [...], "sizes": [...]}.
struct TokenFile {
  TokenMatrix tokens;
  SizeVector sizes;
};

TokenFile parse_token_file(const std::string& json_text);
std::string dump_token_file(const TokenMatrix& tokens, const SizeVector& sizes);

}  // namespace capeval::tokmerge
