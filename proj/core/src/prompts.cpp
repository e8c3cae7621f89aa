#include "capeval/prompts.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <utility>

#include "capeval/error.hpp"

namespace capeval::prompts {

namespace {

constexpr std::string_view kQaSystem =
    R"(You are an intelligent chatbot designed for generating 20 question-answer pairs given a detailed description of a video or image. You are describing the video.
Here's how you can accomplish the task:
INSTRUCTIONS:
- Cover the main objects and actions in the video or image.
- The questions should be open-ended and start with 'What', 'Who', 'Where', 'When', 'Why', 'How', etc.
- The answer should be a short sentence or phrase.
- Generate 20 question-answer pairs.)";

constexpr std::string_view kQaUser =
    R"(Please generate 20 question-answer pairs given a detailed description of a video or image: detailed description: {caption}
Please generate the response in the form of a Python list of tuple with the question and the corresponding answer. DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION. Only provide the Python list of tuple. For example, your response should look like this: [(the question 1, the answer 1), (the question 2, the answer 2), …].)";

constexpr std::string_view kAnswerSystem =
    R"(You are an intelligent chatbot that answers questions about a video using only a written description of that video.
INSTRUCTIONS:
- Use only information stated in the description. Do not guess or add outside knowledge.
- Answer with a short sentence or phrase.
- If the description does not contain the information needed, answer exactly: no answer provided)";

constexpr std::string_view kAnswerUser =
    R"(Video description: {caption}
Question: {question}
Reply with the answer only. DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION.)";

constexpr std::string_view kJudgeSystem =
    R"(You are an intelligent chatbot designed for evaluating the correctness of generative outputs for question-answer pairs. Your task is to compare the predicted answer with the correct answer and determine if they match meaningfully.
INSTRUCTIONS:
- Focus on the meaningful match between the predicted answer and the correct answer.
- Consider synonyms or paraphrases as valid matches.
- Evaluate the correctness of the prediction compared to the answer.
- The predicted answer "no answer provided" is never correct.)";

constexpr std::string_view kJudgeUser =
    R"(Please evaluate the following video-based question-answer pair:
Question: {question}
Correct Answer: {answer}
Predicted Answer: {prediction}
Provide your evaluation only as a yes/no and score where the score is an integer value between 0 and 5, with 5 indicating the highest meaningful match. Please generate the response in the form of a Python dictionary string with keys 'pred' and 'score', where value of 'pred' is a string of 'yes' or 'no' and value of 'score' is in INTEGER, not STRING. DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION. Only provide the Python dictionary string. For example, your response should look like this: {'pred': 'yes', 'score': 4}.)";

constexpr std::string_view kVddSystem =
    R"(You are an intelligent chatbot designed for evaluating detailed video descriptions. Your task is to compare a predicted description with a reference description of the same video and judge whether the prediction is accurate and how well it covers the reference.
INSTRUCTIONS:
- Penalize details in the prediction that contradict the reference.
- Reward coverage of the objects, actions, background and camera work in the reference.
- Consider synonyms or paraphrases as valid matches.)";

constexpr std::string_view kVddUser =
    R"(Please evaluate the following video descriptions:
Reference Description: {reference}
Predicted Description: {prediction}
Provide your evaluation only as a yes/no and score where the score is an integer value between 0 and 5, with 5 indicating the highest meaningful match. Please generate the response in the form of a Python dictionary string with keys 'pred' and 'score', where value of 'pred' is a string of 'yes' or 'no' and value of 'score' is in INTEGER, not STRING. DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION. Only provide the Python dictionary string. For example, your response should look like this: {'pred': 'yes', 'score': 4}.)";

constexpr std::string_view kConstructSystem =
    R"(You are describing the video. Please provide detailed captions of the video from different aspects.)";

constexpr std::string_view kConstructRound1 =
    R"(Please provide detailed and comprehensive captions for the following content:
1. Short Caption: Summarize the video in one detailed sentence, capturing key actions and the overall mood.
2. Background Caption: Provide a detailed description of the background, including objects, location, weather, time, and any dynamic elements such as movements in the environment.
3. Main Object Caption: Give a thorough description of the main subject's actions, attributes, interactions, and movements throughout the video frames, including changes in posture, expression, or speed.
4. Camera Caption: Describe the camera work in detail, including shot types, angles, movements, transitions, and any special effects used to enhance the video.
5. Reference Caption: Generate a detailed dense caption for the video that is at least 300 words long. The caption should capture all visible actions, environmental details, and the overall emotional atmosphere in depth. Describe in detail the interactions between the main subjects and their environment, including subtle nuances of their movements or expressions. Elaborate on the sounds, textures, and other sensory experiences depicted in the video. Discuss the camera techniques used extensively, including shot types, angles, movements, and transitions. Highlight the mood and tone of the video throughout, creating a rich narrative that connects viewers emotionally to the scene. Include comprehensive descriptions of background elements that add context and depth, such as weather conditions, time of day, and cultural or historical settings. Make sure to provide a vivid portrayal that is engaging, informative, and rich enough for AI to re-generate the video content.

No need to provide summary content. Do not describe each frame individually. Avoid using phrases like 'first frame'. The description should be rich enough for AI to re-generate the video. Please generate the response as a Python dictionary string with keys like 'short caption'. DO NOT PROVIDE ANY OTHER OUTPUT TEXT OR EXPLANATION. Only provide the Python dictionary string.

These are the frames from the video:)";

constexpr std::string_view kConstructRound2 =
    R"(The video has been describe from the following aspects:1. short caption: {short}, 2. background caption: {background}, 3. main object caption: {main_object}, 4. camera caption: {camera}, 5.Reference Caption: {reference} Please generate a detailed dense caption for the video that is pretty long. You should expand the reference caption upon the information provided in the short caption, background caption, main object caption, and camera caption. Ensure that the detailed caption does not introduce any new entities or relationships that were not mentioned in the previous captions. Make sure to provide a vivid portrayal that is engaging, informative, and rich enough for AI to re-generate the video content. "Avoid using phrases like 'first frame', 'short caption', 'background caption', 'main object caption', and 'camera caption'. The description should be rich enough for AI to re-generate the video.)";

constexpr std::string_view kRepromptQa =
    R"(Your previous response could not be parsed. Reply again with only the Python list of tuple, for example: [("the question 1", "the answer 1"), ("the question 2", "the answer 2")].)";

constexpr std::string_view kRepromptVerdict =
    R"(Your previous response could not be parsed. Reply again with only the Python dictionary string, for example: {'pred': 'yes', 'score': 4}.)";

constexpr std::string_view kRepromptConstruct =
    R"(Your previous response could not be parsed or missed a required key. Reply again with only the Python dictionary string with the keys 'short caption', 'background caption', 'main object caption', 'camera caption' and 'reference caption'.)";

using Field = std::string PromptTemplates::*;

const std::vector<std::pair<std::string_view, Field>>& fields() {
  static const std::vector<std::pair<std::string_view, Field>> kFields = {
      {"qa_system", &PromptTemplates::qa_system},
      {"qa_user", &PromptTemplates::qa_user},
      {"answer_system", &PromptTemplates::answer_system},
      {"answer_user", &PromptTemplates::answer_user},
      {"judge_system", &PromptTemplates::judge_system},
      {"judge_user", &PromptTemplates::judge_user},
      {"vdd_system", &PromptTemplates::vdd_system},
      {"vdd_user", &PromptTemplates::vdd_user},
      {"construct_system", &PromptTemplates::construct_system},
      {"construct_round1", &PromptTemplates::construct_round1},
      {"construct_round2", &PromptTemplates::construct_round2},
      {"reprompt_qa", &PromptTemplates::reprompt_qa},
      {"reprompt_verdict", &PromptTemplates::reprompt_verdict},
      {"reprompt_construct", &PromptTemplates::reprompt_construct},
  };
  return kFields;
}

bool is_name_char(char c) {
  return std::islower(static_cast<unsigned char>(c)) || c == '_';
}

// Splits a template into literal segments around {name} placeholders.
struct Parsed {
  std::vector<std::string_view> literals;  // size = names.size() + 1
  std::vector<std::string_view> names;
};

Parsed split_template(std::string_view tmpl) {
  Parsed p;
  std::size_t lit_start = 0;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && is_name_char(tmpl[j])) ++j;
      if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
        p.literals.push_back(tmpl.substr(lit_start, i - lit_start));
        p.names.push_back(tmpl.substr(i + 1, j - i - 1));
        i = j + 1;
        lit_start = i;
        continue;
      }
    }
    ++i;
  }
  p.literals.push_back(tmpl.substr(lit_start));
  return p;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const PromptTemplates& PromptTemplates::defaults() {
  static const PromptTemplates kDefaults = [] {
    PromptTemplates t;
    t.version = "capeval-prompts-v1";
    t.qa_system = kQaSystem;
    t.qa_user = kQaUser;
    t.answer_system = kAnswerSystem;
    t.answer_user = kAnswerUser;
    t.judge_system = kJudgeSystem;
    t.judge_user = kJudgeUser;
    t.vdd_system = kVddSystem;
    t.vdd_user = kVddUser;
    t.construct_system = kConstructSystem;
    t.construct_round1 = kConstructRound1;
    t.construct_round2 = kConstructRound2;
    t.reprompt_qa = kRepromptQa;
    t.reprompt_verdict = kRepromptVerdict;
    t.reprompt_construct = kRepromptConstruct;
    return t;
  }();
  return kDefaults;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(Errc::kConfiguration,
                "prompt template directory not found: " + dir.string());
  }
  PromptTemplates t = defaults();
  for (const auto& [name, field] : fields()) {
    const auto path = dir / (std::string(name) + ".txt");
    if (std::filesystem::exists(path)) t.*field = read_file(path);
  }
  const auto version_path = dir / "VERSION";
  if (!std::filesystem::exists(version_path)) {
    throw Error(Errc::kConfiguration,
                "prompt template directory lacks a VERSION file: " +
                    dir.string());
  }
  t.version = read_file(version_path);
  while (!t.version.empty() &&
         std::isspace(static_cast<unsigned char>(t.version.back()))) {
    t.version.pop_back();
  }
  return t;
}

void PromptTemplates::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [name, field] : fields()) {
    std::ofstream(dir / (std::string(name) + ".txt"), std::ios::binary)
        << this->*field;
  }
  std::ofstream(dir / "VERSION") << version << '\n';
}

std::string render(std::string_view tmpl, const Bindings& bindings) {
  const Parsed p = split_template(tmpl);
  std::string out(p.literals[0]);
  for (std::size_t i = 0; i < p.names.size(); ++i) {
    if (auto it = bindings.find(p.names[i]); it != bindings.end()) {
      out += it->second;
    } else {
      out += '{';
      out += p.names[i];
      out += '}';
    }
    out += p.literals[i + 1];
  }
  return out;
}

std::optional<Bindings> match(std::string_view tmpl, std::string_view text) {
  const Parsed p = split_template(tmpl);
  if (!text.starts_with(p.literals[0])) return std::nullopt;
  if (p.names.empty()) {
    return text == p.literals[0] ? std::optional<Bindings>(Bindings{})
                                 : std::nullopt;
  }
  const std::string_view tail = p.literals.back();
  if (!text.ends_with(tail) ||
      text.size() < p.literals[0].size() + tail.size()) {
    return std::nullopt;
  }
  std::string_view rest = text.substr(
      p.literals[0].size(), text.size() - p.literals[0].size() - tail.size());
  Bindings out;
  for (std::size_t i = 0; i < p.names.size(); ++i) {
    const bool last = i + 1 == p.names.size();
    if (last) {
      out.insert_or_assign(std::string(p.names[i]), std::string(rest));
      break;
    }
    const std::string_view lit = p.literals[i + 1];
    const std::size_t at = lit.empty() ? 0 : rest.find(lit);
    if (at == std::string_view::npos) return std::nullopt;
    out.insert_or_assign(std::string(p.names[i]),
                         std::string(rest.substr(0, at)));
    rest.remove_prefix(at + lit.size());
  }
  return out;
}

}  // namespace capeval::prompts
