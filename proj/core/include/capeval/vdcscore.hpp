#pragma once

// Divide-and-conquer caption scoring: ground-truth captions are decomposed
// into short question-answer pairs once; each prediction is then interrogated
// with those questions and every <question, correct, predicted> triplet is
// judged for correctness and quality. Also hosts the whole-caption judge
// baseline.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "capeval/error.hpp"
#include "capeval/llmclient.hpp"
#include "capeval/prompts.hpp"

namespace capeval::vdc {

enum class Category { kShort, kDetailed, kMainObject, kBackground, kCamera };

std::string_view category_name(Category c);
/// Accepts "main_object", "main object" and similar spellings.
Category parse_category(std::string_view name);
const std::vector<Category>& all_categories();

inline constexpr std::string_view kNoAnswer = "no answer provided";
inline constexpr std::size_t kTargetPairs = 20;

struct QAPair {
  std::string question;
  std::string answer;
  Category category = Category::kDetailed;

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

struct Triplet {
  std::string question;
  std::string correct_answer;
  std::string predicted_answer;
};

struct JudgeVerdict {
  bool correct = false;
  int quality = 0;  // 0..5

  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

struct TripletResult {
  Triplet triplet;
  Category category = Category::kDetailed;
  JudgeVerdict verdict;
};

struct CategoryScore {
  std::size_t count = 0;
  double accuracy = 0.0;
  double score = 0.0;
};

struct VDCResult {
  double accuracy = 0.0;  // percent correct
  double score = 0.0;     // mean quality
  std::vector<TripletResult> per_triplet;
  std::map<std::string, CategoryScore> per_category;
  std::string template_version;
  std::vector<std::string> warnings;

  /// Recomputes accuracy, score and the per-category breakdown from
  /// `triplets`.
  static VDCResult aggregate(std::vector<TripletResult> triplets,
                             std::string template_version);
  nlohmann::json to_json(bool include_triplets = true) const;
};

/// Raised by evaluate(); `partial` aggregates the triplets that completed.
class EvaluationError : public Error {
 public:
  EvaluationError(Errc code, const std::string& message, VDCResult partial)
      : Error(code, message), partial_(std::move(partial)) {}
  const VDCResult& partial() const noexcept { return partial_; }

 private:
  VDCResult partial_;
};

/// Carries the raw model text that could not be parsed.
class ExtractionError : public Error {
 public:
  ExtractionError(const std::string& message, std::string raw)
      : Error(Errc::kExtraction, message), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

struct QAExtraction {
  std::vector<QAPair> pairs;
  std::vector<std::string> warnings;
};

struct ParsedVerdict {
  JudgeVerdict verdict;
  std::optional<std::string> warning;  // set when quality was clamped
};

// Request builders, exposed so fixtures and mocks can address the exact
// requests the pipeline sends.
llm::ChatRequest qa_request(std::string_view gt_caption,
                            const prompts::PromptTemplates& t);
llm::ChatRequest answer_request(std::string_view pred_caption,
                                std::string_view question,
                                const prompts::PromptTemplates& t);
llm::ChatRequest judge_request(const Triplet& triplet,
                               const prompts::PromptTemplates& t);
llm::ChatRequest vdd_request(std::string_view pred_caption,
                             std::string_view gt_caption,
                             const prompts::PromptTemplates& t);
/// Original request plus the failed reply and a follow-up instruction.
llm::ChatRequest with_reprompt(llm::ChatRequest request, std::string reply,
                               std::string_view follow_up);

/// Recovers a list of (question, answer) tuples or {"question", "answer"}
/// dicts from free text via a bracket-balanced scan. Returns nullopt when no
/// usable pair is found.
std::optional<std::vector<QAPair>> parse_qa_response(std::string_view text,
                                                     Category category);

/// Accepts {'pred': 'yes', 'score': 4}-style dicts and "pred: yes, score: 4"
/// keyword text. Scores outside 0..5 are clamped with a warning.
std::optional<ParsedVerdict> parse_verdict(std::string_view text);

/// Lowercased, trimmed, trailing punctuation removed; the sentinel maps to
/// itself. Empty answers become the sentinel.
std::string normalize_answer(std::string_view answer);

QAExtraction extract_qa(std::string_view gt_caption, Category category,
                        llm::LlmClient& client,
                        const prompts::PromptTemplates& t =
                            prompts::PromptTemplates::defaults());

std::string answer_from_caption(std::string_view pred_caption,
                                std::string_view question,
                                llm::LlmClient& client,
                                const prompts::PromptTemplates& t =
                                    prompts::PromptTemplates::defaults());

ParsedVerdict judge_triplet(const Triplet& triplet, llm::LlmClient& client,
                            const prompts::PromptTemplates& t =
                                prompts::PromptTemplates::defaults());

/// Scores one prediction against a pre-generated question set. Calls fan out
/// up to the client's concurrency cap; results stay in qa_set order.
VDCResult evaluate(std::string_view pred_caption,
                   const std::vector<QAPair>& qa_set, llm::LlmClient& client,
                   const prompts::PromptTemplates& t =
                       prompts::PromptTemplates::defaults());

ParsedVerdict vdd_judge(std::string_view pred_caption,
                        std::string_view gt_caption, llm::LlmClient& client,
                        const prompts::PromptTemplates& t =
                            prompts::PromptTemplates::defaults());

struct VddItem {
  std::string id;
  std::string prediction;
  std::string reference;
};

struct VddResult {
  double accuracy = 0.0;
  double score = 0.0;
  std::vector<std::string> ids;
  std::vector<JudgeVerdict> verdicts;
  std::string template_version;

  nlohmann::json to_json() const;
};

VddResult vdd_batch(const std::vector<VddItem>& items, llm::LlmClient& client,
                    const prompts::PromptTemplates& t =
                        prompts::PromptTemplates::defaults());

// qa JSONL line: {"video_id", "category", "pairs": [{"question","answer"}]}.
struct QARecord {
  std::string video_id;
  Category category = Category::kDetailed;
  std::vector<QAPair> pairs;

  nlohmann::json to_json() const;
  static QARecord from_json(const nlohmann::json& j);
};

std::vector<QARecord> load_qa_file(const std::filesystem::path& path);

}  // namespace capeval::vdc
