#pragma once

// Deterministic rule-based stand-in for a chat model. It recognises every
// request the toolkit sends by its system prompt and answers from the text of
// the request alone, so whole pipelines run offline and reproducibly.
//
//   qa:        each sentence "X is Y" yields ("What is X?", "Y"); other
//              sentences of four or more words yield
//              ("What follows "<first three words>"?", "<rest>").
//   answer:    inverts those two question shapes against the caption, or
//              replies with the no-answer sentinel.
//   judge:     normalized equality -> yes/5; otherwise no with a word-overlap
//              score capped at 4.
//   vdd:       word-set Jaccard j -> pred = j >= 0.5, score = round(5 j).
//   construct: round one describes the keyframe file names; round two returns
//              the reference caption extended by the main object caption.

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "capeval/llmclient.hpp"
#include "capeval/prompts.hpp"

namespace capeval::mock {

/// Question-answer pairs the qa rule derives from a caption.
std::vector<std::pair<std::string, std::string>> rule_pairs(
    std::string_view caption);

/// The answer rule; returns the sentinel when the question does not resolve.
std::string rule_answer(std::string_view caption, std::string_view question);

class RuleResponder {
 public:
  explicit RuleResponder(prompts::PromptTemplates templates =
                             prompts::PromptTemplates::defaults());

  std::optional<std::string> operator()(const llm::ChatRequest& request) const;

 private:
  prompts::PromptTemplates t_;
};

/// Mock backend answering from optional digest fixtures first, then the rules.
std::shared_ptr<llm::MockBackend> make_rule_backend(
    const prompts::PromptTemplates& templates =
        prompts::PromptTemplates::defaults());

}  // namespace capeval::mock
