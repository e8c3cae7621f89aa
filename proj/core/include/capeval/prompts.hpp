#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capeval::prompts {

/// Every prompt the toolkit sends. Placeholders are written {name}.
/// Scores are always reported together with `version`.
struct PromptTemplates {
  std::string version;

  // Question-answer extraction from a ground-truth caption: {caption}.
  std::string qa_system;
  std::string qa_user;
  // Answering a question from a predicted caption: {caption}, {question}.
  std::string answer_system;
  std::string answer_user;
  // Triplet judging: {question}, {answer}, {prediction}.
  std::string judge_system;
  std::string judge_user;
  // Whole-caption comparison: {reference}, {prediction}.
  std::string vdd_system;
  std::string vdd_user;
  // Structured caption construction. Round one is followed by keyframes;
  // round two takes {short}, {background}, {main_object}, {camera},
  // {reference}.
  std::string construct_system;
  std::string construct_round1;
  std::string construct_round2;

  // Follow-up turn sent once after an unparseable reply.
  std::string reprompt_qa;
  std::string reprompt_verdict;
  std::string reprompt_construct;

  static const PromptTemplates& defaults();
  /// Reads <field>.txt files from `dir`, falling back to defaults for
  /// missing files; `VERSION` holds the version string.
  static PromptTemplates load(const std::filesystem::path& dir);
  /// Writes every field to <field>.txt plus VERSION.
  void save(const std::filesystem::path& dir) const;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Substitutes each {name} that has a binding; unknown placeholders are kept.
std::string render(std::string_view tmpl, const Bindings& bindings);

/// Inverse of render: recovers placeholder values from a rendered text, or
/// nullopt when the literal segments do not line up.
std::optional<Bindings> match(std::string_view tmpl, std::string_view text);

}  // namespace capeval::prompts
