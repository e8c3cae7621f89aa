#include "capeval/vdcscore.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>

#include "capeval/parallel.hpp"
#include "capeval/pyliteral.hpp"

namespace capeval::vdc {

namespace {

using pyliteral::Value;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<QAPair> pair_from(const Value& v, Category category) {
  std::string q;
  std::string a;
  if (v.is_sequence() && v.items.size() >= 2 &&
      v.items[0].kind == Value::Kind::kString &&
      v.items[1].kind == Value::Kind::kString) {
    q = v.items[0].str;
    a = v.items[1].str;
  } else if (v.kind == Value::Kind::kDict) {
    const Value* qv = v.find("question");
    const Value* av = v.find("answer");
    if (qv == nullptr || av == nullptr || qv->kind != Value::Kind::kString ||
        av->kind != Value::Kind::kString) {
      return std::nullopt;
    }
    q = qv->str;
    a = av->str;
  } else {
    return std::nullopt;
  }
  q = trim(q);
  a = trim(a);
  if (q.empty() || a.empty()) return std::nullopt;
  if (q.back() != '?') {
    while (!q.empty() && (q.back() == '.' || q.back() == ' ')) q.pop_back();
    q.push_back('?');
  }
  return QAPair{std::move(q), std::move(a), category};
}

std::optional<bool> yes_no(const Value& v) {
  if (v.kind == Value::Kind::kBool) return v.boolean;
  if (v.kind != Value::Kind::kString) return std::nullopt;
  const std::string s = lower(trim(v.str));
  if (s == "yes" || s == "true" || s == "correct") return true;
  if (s == "no" || s == "false" || s == "incorrect") return false;
  return std::nullopt;
}

std::optional<double> numeric(const Value& v) {
  if (v.kind == Value::Kind::kNumber) return v.number;
  if (v.kind == Value::Kind::kString) {
    try {
      std::size_t used = 0;
      const std::string s = trim(v.str);
      const double d = std::stod(s, &used);
      if (used == s.size()) return d;
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

ParsedVerdict make_verdict(bool correct, double raw_score) {
  ParsedVerdict out;
  const double rounded = std::round(raw_score);
  const double clamped = std::clamp(rounded, 0.0, 5.0);
  if (clamped != raw_score) {
    out.warning = "quality " + std::to_string(raw_score) +
                  " adjusted to " + std::to_string(static_cast<int>(clamped));
  }
  out.verdict = {correct, static_cast<int>(clamped)};
  return out;
}

std::optional<ParsedVerdict> verdict_from_dict(const Value& d) {
  const Value* pred = d.find("pred");
  if (pred == nullptr) pred = d.find("correct");
  if (pred == nullptr) pred = d.find("correctness");
  const Value* score = d.find("score");
  if (score == nullptr) score = d.find("quality");
  if (pred == nullptr || score == nullptr) return std::nullopt;
  const auto yn = yes_no(*pred);
  const auto sc = numeric(*score);
  if (!yn || !sc) return std::nullopt;
  return make_verdict(*yn, *sc);
}

template <typename T, typename Fn>
std::vector<std::optional<T>> gather(std::size_t n, std::size_t workers,
                                     Fn&& fn,
                                     std::optional<Error>& first_error) {
  std::vector<std::optional<T>> out(n);
  std::vector<std::optional<Error>> errors(n);
  parallel_for(n, workers, [&](std::size_t i) {
    try {
      out[i] = fn(i);
    } catch (const Error& e) {
      errors[i] = e;
    }
  });
  for (auto& e : errors) {
    if (e) {
      first_error = std::move(e);
      break;
    }
  }
  return out;
}

}  // namespace

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kShort: return "short";
    case Category::kDetailed: return "detailed";
    case Category::kMainObject: return "main_object";
    case Category::kBackground: return "background";
    case Category::kCamera: return "camera";
  }
  return "";
}

Category parse_category(std::string_view name) {
  std::string key = lower(trim(name));
  std::replace(key.begin(), key.end(), ' ', '_');
  std::replace(key.begin(), key.end(), '-', '_');
  if (key.ends_with("_caption")) key.resize(key.size() - 8);
  if (key == "reference") key = "detailed";
  for (Category c : all_categories()) {
    if (category_name(c) == key) return c;
  }
  throw Error(Errc::kValidation, "unknown caption category '" +
                                     std::string(name) + "'");
}

const std::vector<Category>& all_categories() {
  static const std::vector<Category> kAll = {
      Category::kShort, Category::kDetailed, Category::kMainObject,
      Category::kBackground, Category::kCamera};
  return kAll;
}

VDCResult VDCResult::aggregate(std::vector<TripletResult> triplets,
                               std::string template_version) {
  VDCResult r;
  r.template_version = std::move(template_version);
  r.per_triplet = std::move(triplets);
  struct Acc {
    std::size_t n = 0;
    std::size_t correct = 0;
    long long quality = 0;
  };
  Acc all;
  std::map<std::string, Acc> by_cat;
  for (const auto& t : r.per_triplet) {
    for (Acc* a : {&all, &by_cat[std::string(category_name(t.category))]}) {
      ++a->n;
      a->correct += t.verdict.correct ? 1 : 0;
      a->quality += t.verdict.quality;
    }
  }
  auto finish = [](const Acc& a, double& acc, double& score) {
    acc = a.n == 0 ? 0.0 : 100.0 * static_cast<double>(a.correct) / a.n;
    score = a.n == 0 ? 0.0 : static_cast<double>(a.quality) / a.n;
  };
  finish(all, r.accuracy, r.score);
  for (const auto& [name, a] : by_cat) {
    CategoryScore cs;
    cs.count = a.n;
    finish(a, cs.accuracy, cs.score);
    r.per_category.emplace(name, cs);
  }
  return r;
}

nlohmann::json VDCResult::to_json(bool include_triplets) const {
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [name, c] : per_category) {
    cats[name] = {{"count", c.count}, {"accuracy", c.accuracy},
                  {"score", c.score}};
  }
  nlohmann::json j{{"accuracy", accuracy},
                   {"score", score},
                   {"count", per_triplet.size()},
                   {"per_category", std::move(cats)},
                   {"template_version", template_version}};
  if (!warnings.empty()) j["warnings"] = warnings;
  if (include_triplets) {
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : per_triplet) {
      ts.push_back({{"category", category_name(t.category)},
                    {"question", t.triplet.question},
                    {"correct_answer", t.triplet.correct_answer},
                    {"predicted_answer", t.triplet.predicted_answer},
                    {"correct", t.verdict.correct},
                    {"quality", t.verdict.quality}});
    }
    j["triplets"] = std::move(ts);
  }
  return j;
}

llm::ChatRequest qa_request(std::string_view gt_caption,
                            const prompts::PromptTemplates& t) {
  llm::ChatRequest r;
  r.system = t.qa_system;
  r.turns.push_back(llm::ChatTurn::user(
      prompts::render(t.qa_user, {{"caption", std::string(gt_caption)}})));
  return r;
}

llm::ChatRequest answer_request(std::string_view pred_caption,
                                std::string_view question,
                                const prompts::PromptTemplates& t) {
  llm::ChatRequest r;
  r.system = t.answer_system;
  r.turns.push_back(llm::ChatTurn::user(prompts::render(
      t.answer_user, {{"caption", std::string(pred_caption)},
                      {"question", std::string(question)}})));
  return r;
}

llm::ChatRequest judge_request(const Triplet& triplet,
                               const prompts::PromptTemplates& t) {
  llm::ChatRequest r;
  r.system = t.judge_system;
  r.turns.push_back(llm::ChatTurn::user(
      prompts::render(t.judge_user, {{"question", triplet.question},
                                     {"answer", triplet.correct_answer},
                                     {"prediction", triplet.predicted_answer}})));
  return r;
}

llm::ChatRequest vdd_request(std::string_view pred_caption,
                             std::string_view gt_caption,
                             const prompts::PromptTemplates& t) {
  llm::ChatRequest r;
  r.system = t.vdd_system;
  r.turns.push_back(llm::ChatTurn::user(prompts::render(
      t.vdd_user, {{"reference", std::string(gt_caption)},
                   {"prediction", std::string(pred_caption)}})));
  return r;
}

llm::ChatRequest with_reprompt(llm::ChatRequest request, std::string reply,
                               std::string_view follow_up) {
  request.turns.push_back(llm::ChatTurn::assistant(std::move(reply)));
  request.turns.push_back(llm::ChatTurn::user(std::string(follow_up)));
  return request;
}

std::optional<std::vector<QAPair>> parse_qa_response(std::string_view text,
                                                     Category category) {
  for (std::size_t from = 0; from < text.size();) {
    const auto span = pyliteral::find_balanced(text.substr(from), '[', ']');
    if (!span) return std::nullopt;
    from = static_cast<std::size_t>(span->data() - text.data()) + 1;
    Value list;
    try {
      list = pyliteral::parse(*span);
    } catch (const Error&) {
      continue;
    }
    std::vector<QAPair> pairs;
    for (const auto& item : list.items) {
      if (auto p = pair_from(item, category)) pairs.push_back(std::move(*p));
    }
    if (!pairs.empty()) return pairs;
  }
  return std::nullopt;
}

std::optional<ParsedVerdict> parse_verdict(std::string_view text) {
  for (std::size_t from = 0; from < text.size();) {
    const auto span = pyliteral::find_balanced(text.substr(from), '{', '}');
    if (!span) break;
    from = static_cast<std::size_t>(span->data() - text.data()) + 1;
    try {
      if (auto v = verdict_from_dict(pyliteral::parse(*span))) return v;
    } catch (const Error&) {
    }
  }
  static const std::regex kPred(
      R"((?:pred|correct(?:ness)?)\W{0,3}\s*[:=]\s*['"]?\s*(yes|no|true|false))",
      std::regex::icase);
  static const std::regex kScore(
      R"((?:score|quality)\W{0,3}\s*[:=]\s*['"]?\s*(-?\d+(?:\.\d+)?))",
      std::regex::icase);
  const std::string s(text);
  std::smatch pm;
  std::smatch sm;
  if (std::regex_search(s, pm, kPred) && std::regex_search(s, sm, kScore)) {
    const std::string yn = lower(pm[1].str());
    return make_verdict(yn == "yes" || yn == "true", std::stod(sm[1].str()));
  }
  return std::nullopt;
}

std::string normalize_answer(std::string_view answer) {
  std::string s = lower(trim(answer));
  while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == ' ')) {
    s.pop_back();
  }
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') &&
      s.back() == s.front()) {
    s = trim(s.substr(1, s.size() - 2));
  }
  if (s.empty()) return std::string(kNoAnswer);
  return s;
}

QAExtraction extract_qa(std::string_view gt_caption, Category category,
                        llm::LlmClient& client,
                        const prompts::PromptTemplates& t) {
  if (trim(gt_caption).empty()) {
    throw Error(Errc::kExtraction, "ground-truth caption is empty");
  }
  const llm::ChatRequest first = qa_request(gt_caption, t);
  std::string raw = client.complete(first);
  auto pairs = parse_qa_response(raw, category);
  if (!pairs) {
    raw = client.complete(with_reprompt(first, raw, t.reprompt_qa));
    pairs = parse_qa_response(raw, category);
  }
  if (!pairs) {
    throw ExtractionError("could not parse question-answer pairs", raw);
  }
  QAExtraction out;
  out.pairs = std::move(*pairs);
  if (out.pairs.size() > kTargetPairs) out.pairs.resize(kTargetPairs);
  if (out.pairs.size() < kTargetPairs) {
    out.warnings.push_back("short count: " + std::to_string(out.pairs.size()) +
                           " of " + std::to_string(kTargetPairs) + " pairs");
  }
  return out;
}

std::string answer_from_caption(std::string_view pred_caption,
                                std::string_view question,
                                llm::LlmClient& client,
                                const prompts::PromptTemplates& t) {
  if (trim(pred_caption).empty() || trim(question).empty()) {
    throw Error(Errc::kRequest, "caption and question must be non-empty");
  }
  const std::string raw =
      client.complete(answer_request(pred_caption, question, t));
  const std::string answer = trim(raw);
  if (normalize_answer(answer) == kNoAnswer) return std::string(kNoAnswer);
  return answer;
}

ParsedVerdict judge_triplet(const Triplet& triplet, llm::LlmClient& client,
                            const prompts::PromptTemplates& t) {
  if (trim(triplet.question).empty() || trim(triplet.correct_answer).empty() ||
      trim(triplet.predicted_answer).empty()) {
    throw Error(Errc::kJudging, "triplet fields must be non-empty");
  }
  // The sentinel is never correct; skipping the call keeps that guaranteed.
  if (normalize_answer(triplet.predicted_answer) == kNoAnswer) {
    return {{false, 0}, std::nullopt};
  }
  const llm::ChatRequest first = judge_request(triplet, t);
  std::string raw = client.complete(first);
  auto v = parse_verdict(raw);
  if (!v) {
    raw = client.complete(with_reprompt(first, raw, t.reprompt_verdict));
    v = parse_verdict(raw);
  }
  if (!v) throw Error(Errc::kJudging, "unparseable verdict: " + raw);
  return *v;
}

VDCResult evaluate(std::string_view pred_caption,
                   const std::vector<QAPair>& qa_set, llm::LlmClient& client,
                   const prompts::PromptTemplates& t) {
  if (qa_set.empty()) {
    throw Error(Errc::kConfiguration, "evaluate needs a non-empty qa set");
  }
  const std::size_t n = qa_set.size();
  const std::size_t workers = client.max_concurrency();

  std::optional<Error> failure;
  auto answers = gather<std::string>(
      n, workers,
      [&](std::size_t i) {
        return answer_from_caption(pred_caption, qa_set[i].question, client, t);
      },
      failure);

  std::vector<std::optional<ParsedVerdict>> verdicts(n);
  if (!failure) {
    verdicts = gather<ParsedVerdict>(
        n, workers,
        [&](std::size_t i) {
          return judge_triplet(
              {qa_set[i].question, qa_set[i].answer, *answers[i]}, client, t);
        },
        failure);
  }

  std::vector<TripletResult> done;
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < n; ++i) {
    if (!answers[i] || !verdicts[i]) continue;
    done.push_back({{qa_set[i].question, qa_set[i].answer, *answers[i]},
                    qa_set[i].category,
                    verdicts[i]->verdict});
    if (verdicts[i]->warning) {
      warnings.push_back("triplet " + std::to_string(i) + ": " +
                         *verdicts[i]->warning);
    }
  }
  VDCResult result = VDCResult::aggregate(std::move(done), t.version);
  result.warnings = std::move(warnings);
  if (failure) {
    throw EvaluationError(failure->code(), failure->what(), std::move(result));
  }
  return result;
}

ParsedVerdict vdd_judge(std::string_view pred_caption,
                        std::string_view gt_caption, llm::LlmClient& client,
                        const prompts::PromptTemplates& t) {
  if (trim(pred_caption).empty() || trim(gt_caption).empty()) {
    throw Error(Errc::kJudging, "captions must be non-empty");
  }
  const llm::ChatRequest first = vdd_request(pred_caption, gt_caption, t);
  std::string raw = client.complete(first);
  auto v = parse_verdict(raw);
  if (!v) {
    raw = client.complete(with_reprompt(first, raw, t.reprompt_verdict));
    v = parse_verdict(raw);
  }
  if (!v) throw Error(Errc::kJudging, "unparseable verdict: " + raw);
  return *v;
}

nlohmann::json VddResult::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    items.push_back({{"id", ids[i]},
                     {"correct", verdicts[i].correct},
                     {"score", verdicts[i].quality}});
  }
  return {{"accuracy", accuracy},
          {"score", score},
          {"items", std::move(items)},
          {"template_version", template_version}};
}

VddResult vdd_batch(const std::vector<VddItem>& items, llm::LlmClient& client,
                    const prompts::PromptTemplates& t) {
  std::optional<Error> failure;
  auto got = gather<ParsedVerdict>(
      items.size(), client.max_concurrency(),
      [&](std::size_t i) {
        return vdd_judge(items[i].prediction, items[i].reference, client, t);
      },
      failure);
  if (failure) throw *failure;
  VddResult r;
  r.template_version = t.version;
  std::size_t correct = 0;
  long long quality = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    r.ids.push_back(items[i].id);
    r.verdicts.push_back(got[i]->verdict);
    correct += got[i]->verdict.correct ? 1 : 0;
    quality += got[i]->verdict.quality;
  }
  if (!items.empty()) {
    r.accuracy = 100.0 * static_cast<double>(correct) / items.size();
    r.score = static_cast<double>(quality) / items.size();
  }
  return r;
}

nlohmann::json QARecord::to_json() const {
  nlohmann::json ps = nlohmann::json::array();
  for (const auto& p : pairs) {
    ps.push_back({{"question", p.question}, {"answer", p.answer}});
  }
  return {{"video_id", video_id},
          {"category", category_name(category)},
          {"pairs", std::move(ps)}};
}

QARecord QARecord::from_json(const nlohmann::json& j) {
  QARecord r;
  r.video_id = j.at("video_id").get<std::string>();
  r.category = parse_category(j.at("category").get<std::string>());
  for (const auto& p : j.at("pairs")) {
    r.pairs.push_back({p.at("question").get<std::string>(),
                       p.at("answer").get<std::string>(), r.category});
  }
  return r;
}

std::vector<QARecord> load_qa_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open qa file " + path.string());
  std::vector<QARecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(QARecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kValidation, path.string() + ":" +
                                         std::to_string(lineno) + ": " +
                                         e.what());
    } catch (const Error& e) {
      throw Error(Errc::kValidation, path.string() + ":" +
                                         std::to_string(lineno) + ": " +
                                         e.what());
    }
  }
  return out;
}

}  // namespace capeval::vdc
