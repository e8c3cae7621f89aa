#pragma once

// Benchmark corpus: JSONL schema, validation, Table-style statistics, the
// two-round structured caption construction and question-answer export.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "capeval/llmclient.hpp"
#include "capeval/prompts.hpp"
#include "capeval/vdcscore.hpp"

namespace capeval::bench {

using vdc::Category;

enum class Source { kPanda70m, kEgo4d, kMixkit, kPixabay, kPexels, kOther };

std::string_view source_name(Source s);
Source parse_source(std::string_view name);

struct StructuredCaptionSet {
  std::string short_caption;
  std::string detailed;
  std::string main_object;
  std::string background;
  std::string camera;

  const std::string& get(Category c) const;
  std::string& get(Category c);

  friend bool operator==(const StructuredCaptionSet&,
                         const StructuredCaptionSet&) = default;
};

struct BenchmarkEntry {
  std::string video_id;
  Source source = Source::kOther;
  double duration = 0.0;  // seconds
  std::vector<std::string> keyframes;
  StructuredCaptionSet captions;
  std::map<Category, std::vector<vdc::QAPair>> qa;

  nlohmann::json to_json() const;

  friend bool operator==(const BenchmarkEntry&,
                         const BenchmarkEntry&) = default;
};

/// Parses and validates JSONL; `origin` prefixes error messages. Errors name
/// the 1-based line and the offending field.
std::vector<BenchmarkEntry> parse_entries(std::istream& in,
                                          std::string_view origin);
std::vector<BenchmarkEntry> load(const std::filesystem::path& path);
void save(const std::filesystem::path& path,
          const std::vector<BenchmarkEntry>& entries);

struct LengthStats {
  std::size_t count = 0;
  std::size_t total_words = 0;
  double mean = 0.0;
  std::size_t min = 0;
  std::size_t max = 0;
};

struct SourceShare {
  std::size_t videos = 0;
  double proportion = 0.0;
};

struct CorpusStats {
  std::size_t n_videos = 0;
  std::size_t n_captions = 0;
  std::size_t total_words = 0;
  std::size_t vocab_size = 0;
  double avg_caption_length = 0.0;
  std::map<std::string, SourceShare> per_source;
  std::map<std::string, LengthStats> per_category;

  nlohmann::json to_json() const;
};

/// Words are counted with the shared metric tokenizer.
CorpusStats stats(const std::vector<BenchmarkEntry>& entries,
                  const std::vector<Category>& categories =
                      vdc::all_categories());

/// Canonical key -> caption text, for whatever keys were recognised. Accepts
/// a Python dict string or "Short Caption: ..." labelled sections. Canonical
/// keys: "short caption", "background caption", "main object caption",
/// "camera caption", "reference caption".
std::map<std::string, std::string> parse_structured_captions(
    std::string_view text);

struct ConstructionResult {
  StructuredCaptionSet captions;
  std::vector<std::string> warnings;
};

llm::ChatRequest construction_round1(const std::vector<std::string>& keyframes,
                                     const prompts::PromptTemplates& t);
llm::ChatRequest construction_round2(llm::ChatRequest round1,
                                     std::string round1_reply,
                                     const std::map<std::string, std::string>&
                                         round1_captions,
                                     const prompts::PromptTemplates& t);

/// Round one yields all five captions; round two rewrites the detailed
/// caption from them.
ConstructionResult construct_captions(const std::vector<std::string>& keyframes,
                                      llm::LlmClient& client,
                                      const prompts::PromptTemplates& t =
                                          prompts::PromptTemplates::defaults());

struct Failure {
  std::string video_id;
  std::string stage;
  std::string message;

  nlohmann::json to_json() const;
};

struct QAExport {
  std::vector<vdc::QARecord> records;
  std::vector<Failure> failures;
  std::vector<std::string> warnings;
};

/// One extraction per entry and category, in entry-then-category order.
/// Failures are collected and the run continues.
QAExport export_qa(const std::vector<BenchmarkEntry>& entries,
                   llm::LlmClient& client,
                   const prompts::PromptTemplates& t =
                       prompts::PromptTemplates::defaults(),
                   const std::vector<Category>& categories =
                       vdc::all_categories());

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<nlohmann::json>& rows);

/// Editable sidecar for manual review: one JSON line per entry holding
/// video_id and the five captions.
void write_review_sidecar(const std::filesystem::path& path,
                          const std::vector<BenchmarkEntry>& entries);
/// Applies edited captions from a sidecar; unknown ids are a validation error.
void apply_review(std::vector<BenchmarkEntry>& entries,
                  const std::filesystem::path& sidecar);

}  // namespace capeval::bench
