#include "capeval/bench.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_set>

#include "capeval/error.hpp"
#include "capeval/parallel.hpp"
#include "capeval/pyliteral.hpp"
#include "capeval/textmetrics.hpp"

namespace capeval::bench {

namespace {

constexpr std::string_view kRequiredKeys[] = {
    "short caption", "background caption", "main object caption",
    "camera caption", "reference caption"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string canonical_key(std::string_view raw) {
  std::string k;
  for (char c : raw) {
    if (c == '_' || c == '-') c = ' ';
    k.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  k = trim(k);
  while (!k.empty() && k.back() == ':') k.pop_back();
  if (k == "detailed caption" || k == "reference") k = "reference caption";
  if (k == "short" || k == "background" || k == "camera" ||
      k == "main object") {
    k += " caption";
  }
  return k;
}

[[noreturn]] void field_error(std::string_view origin, std::size_t line,
                              std::string_view field, std::string_view what) {
  throw Error(Errc::kValidation, std::string(origin) + ": line " +
                                     std::to_string(line) + ": field '" +
                                     std::string(field) + "': " +
                                     std::string(what));
}

std::string required_string(const nlohmann::json& obj, std::string_view key,
                            std::string_view field, std::string_view origin,
                            std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) field_error(origin, line, field, "missing");
  if (!it->is_string()) field_error(origin, line, field, "must be a string");
  std::string s = it->get<std::string>();
  if (trim(s).empty()) field_error(origin, line, field, "must be non-empty");
  return s;
}

std::size_t word_count(std::string_view text) {
  return metrics::tokenize(text).size();
}

}  // namespace

std::string_view source_name(Source s) {
  switch (s) {
    case Source::kPanda70m: return "panda70m";
    case Source::kEgo4d: return "ego4d";
    case Source::kMixkit: return "mixkit";
    case Source::kPixabay: return "pixabay";
    case Source::kPexels: return "pexels";
    case Source::kOther: return "other";
  }
  return "";
}

Source parse_source(std::string_view name) {
  for (Source s : {Source::kPanda70m, Source::kEgo4d, Source::kMixkit,
                   Source::kPixabay, Source::kPexels, Source::kOther}) {
    if (source_name(s) == name) return s;
  }
  throw Error(Errc::kValidation, "unknown source '" + std::string(name) + "'");
}

const std::string& StructuredCaptionSet::get(Category c) const {
  switch (c) {
    case Category::kShort: return short_caption;
    case Category::kDetailed: return detailed;
    case Category::kMainObject: return main_object;
    case Category::kBackground: return background;
    case Category::kCamera: return camera;
  }
  return detailed;
}

std::string& StructuredCaptionSet::get(Category c) {
  return const_cast<std::string&>(std::as_const(*this).get(c));
}

nlohmann::json BenchmarkEntry::to_json() const {
  nlohmann::json caps = nlohmann::json::object();
  for (Category c : vdc::all_categories()) {
    caps[std::string(vdc::category_name(c))] = captions.get(c);
  }
  nlohmann::json j{{"video_id", video_id},
                   {"source", source_name(source)},
                   {"duration", duration},
                   {"keyframes", keyframes},
                   {"captions", std::move(caps)}};
  if (!qa.empty()) {
    nlohmann::json q = nlohmann::json::object();
    for (const auto& [cat, pairs] : qa) {
      nlohmann::json ps = nlohmann::json::array();
      for (const auto& p : pairs) {
        ps.push_back({{"question", p.question}, {"answer", p.answer}});
      }
      q[std::string(vdc::category_name(cat))] = std::move(ps);
    }
    j["qa"] = std::move(q);
  }
  return j;
}

std::vector<BenchmarkEntry> parse_entries(std::istream& in,
                                          std::string_view origin) {
  std::vector<BenchmarkEntry> out;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      field_error(origin, line, "<line>", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) field_error(origin, line, "<line>", "not an object");

    BenchmarkEntry e;
    e.video_id = required_string(j, "video_id", "video_id", origin, line);
    if (!seen.insert(e.video_id).second) {
      field_error(origin, line, "video_id",
                  "duplicate id '" + e.video_id + "'");
    }
    try {
      e.source = parse_source(
          required_string(j, "source", "source", origin, line));
    } catch (const Error& err) {
      if (std::string_view(err.what()).starts_with(origin)) throw;
      field_error(origin, line, "source", err.what());
    }
    const auto dur = j.find("duration");
    if (dur == j.end()) field_error(origin, line, "duration", "missing");
    if (!dur->is_number()) field_error(origin, line, "duration", "must be a number");
    e.duration = dur->get<double>();
    if (!(e.duration > 0.0) || !std::isfinite(e.duration)) {
      field_error(origin, line, "duration", "must be > 0");
    }
    const auto kf = j.find("keyframes");
    if (kf == j.end()) field_error(origin, line, "keyframes", "missing");
    if (!kf->is_array() || kf->empty()) {
      field_error(origin, line, "keyframes", "must be a non-empty array");
    }
    for (const auto& k : *kf) {
      if (!k.is_string() || k.get<std::string>().empty()) {
        field_error(origin, line, "keyframes", "entries must be non-empty strings");
      }
      e.keyframes.push_back(k.get<std::string>());
    }
    const auto caps = j.find("captions");
    if (caps == j.end()) field_error(origin, line, "captions", "missing");
    if (!caps->is_object()) field_error(origin, line, "captions", "must be an object");
    for (Category c : vdc::all_categories()) {
      const std::string name(vdc::category_name(c));
      e.captions.get(c) =
          required_string(*caps, name, "captions." + name, origin, line);
    }
    if (const auto qa = j.find("qa"); qa != j.end() && !qa->is_null()) {
      if (!qa->is_object()) field_error(origin, line, "qa", "must be an object");
      for (const auto& [key, pairs] : qa->items()) {
        Category cat{};
        try {
          cat = vdc::parse_category(key);
        } catch (const Error&) {
          field_error(origin, line, "qa." + key, "unknown category");
        }
        if (!pairs.is_array()) field_error(origin, line, "qa." + key, "must be an array");
        auto& dst = e.qa[cat];
        for (const auto& p : pairs) {
          if (!p.is_object()) field_error(origin, line, "qa." + key, "pairs must be objects");
          dst.push_back({required_string(p, "question", "qa." + key + ".question",
                                         origin, line),
                         required_string(p, "answer", "qa." + key + ".answer",
                                         origin, line),
                         cat});
        }
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<BenchmarkEntry> load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open bench file " + path.string());
  return parse_entries(in, path.string());
}

void save(const std::filesystem::path& path,
          const std::vector<BenchmarkEntry>& entries) {
  std::vector<nlohmann::json> rows;
  rows.reserve(entries.size());
  for (const auto& e : entries) rows.push_back(e.to_json());
  write_jsonl(path, rows);
}

nlohmann::json CorpusStats::to_json() const {
  nlohmann::json src = nlohmann::json::object();
  for (const auto& [name, s] : per_source) {
    src[name] = {{"videos", s.videos}, {"proportion", s.proportion}};
  }
  nlohmann::json cat = nlohmann::json::object();
  for (const auto& [name, l] : per_category) {
    cat[name] = {{"count", l.count},     {"total_words", l.total_words},
                 {"mean", l.mean},       {"min", l.min},
                 {"max", l.max}};
  }
  return {{"n_videos", n_videos},
          {"n_captions", n_captions},
          {"total_words", total_words},
          {"vocab_size", vocab_size},
          {"avg_caption_length", avg_caption_length},
          {"per_source", std::move(src)},
          {"per_category", std::move(cat)}};
}

CorpusStats stats(const std::vector<BenchmarkEntry>& entries,
                  const std::vector<Category>& categories) {
  if (entries.empty()) throw Error(Errc::kNoData, "corpus is empty");
  if (categories.empty()) {
    throw Error(Errc::kConfiguration, "no caption categories selected");
  }
  CorpusStats s;
  s.n_videos = entries.size();
  std::set<std::string> vocab;
  std::map<std::string, std::size_t> source_counts;
  for (const auto& e : entries) {
    ++source_counts[std::string(source_name(e.source))];
    for (Category c : categories) {
      const auto tokens = metrics::tokenize(e.captions.get(c));
      vocab.insert(tokens.begin(), tokens.end());
      auto& l = s.per_category[std::string(vdc::category_name(c))];
      l.min = l.count == 0 ? tokens.size() : std::min(l.min, tokens.size());
      l.max = std::max(l.max, tokens.size());
      ++l.count;
      l.total_words += tokens.size();
      ++s.n_captions;
      s.total_words += tokens.size();
    }
  }
  for (auto& [_, l] : s.per_category) {
    l.mean = static_cast<double>(l.total_words) / static_cast<double>(l.count);
  }
  s.vocab_size = vocab.size();
  s.avg_caption_length =
      static_cast<double>(s.total_words) / static_cast<double>(s.n_captions);
  for (const auto& [name, n] : source_counts) {
    s.per_source[name] = {
        n, static_cast<double>(n) / static_cast<double>(s.n_videos)};
  }
  return s;
}

std::map<std::string, std::string> parse_structured_captions(
    std::string_view text) {
  std::map<std::string, std::string> out;
  // Dictionary form first.
  for (std::size_t from = 0; from < text.size();) {
    const auto span = pyliteral::find_balanced(text.substr(from), '{', '}');
    if (!span) break;
    from = static_cast<std::size_t>(span->data() - text.data()) + 1;
    try {
      const auto v = pyliteral::parse(*span);
      for (std::size_t i = 0; i < v.keys.size(); ++i) {
        if (v.keys[i].kind == pyliteral::Value::Kind::kString &&
            v.items[i].kind == pyliteral::Value::Kind::kString &&
            !trim(v.items[i].str).empty()) {
          out[canonical_key(v.keys[i].str)] = trim(v.items[i].str);
        }
      }
      if (!out.empty()) return out;
    } catch (const Error&) {
    }
  }
  // "Label: text" sections.
  static const std::regex kLabel(
      R"((?:^|\n)[ \t*#]*(?:\d+\.\s*)?(short caption|background caption|main object caption|camera caption|reference caption|detailed caption)\**\s*:)",
      std::regex::icase);
  const std::string s(text);
  std::vector<std::pair<std::string, std::size_t>> marks;  // key, body start
  std::vector<std::size_t> starts;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kLabel);
       it != std::sregex_iterator(); ++it) {
    marks.emplace_back(canonical_key((*it)[1].str()),
                       static_cast<std::size_t>(it->position() + it->length()));
    starts.push_back(static_cast<std::size_t>(it->position()));
  }
  for (std::size_t i = 0; i < marks.size(); ++i) {
    const std::size_t end = i + 1 < marks.size() ? starts[i + 1] : s.size();
    std::string body = trim(s.substr(marks[i].second, end - marks[i].second));
    if (!body.empty()) out[marks[i].first] = std::move(body);
  }
  return out;
}

llm::ChatRequest construction_round1(const std::vector<std::string>& keyframes,
                                     const prompts::PromptTemplates& t) {
  llm::ChatRequest r;
  r.system = t.construct_system;
  llm::ChatTurn turn;
  turn.role = llm::Role::kUser;
  turn.parts.push_back(llm::ContentPart::text(t.construct_round1));
  for (const auto& k : keyframes) turn.parts.push_back(llm::ContentPart::image(k));
  r.turns.push_back(std::move(turn));
  return r;
}

llm::ChatRequest construction_round2(
    llm::ChatRequest round1, std::string round1_reply,
    const std::map<std::string, std::string>& caps,
    const prompts::PromptTemplates& t) {
  round1.turns.push_back(llm::ChatTurn::assistant(std::move(round1_reply)));
  round1.turns.push_back(llm::ChatTurn::user(prompts::render(
      t.construct_round2, {{"short", caps.at("short caption")},
                           {"background", caps.at("background caption")},
                           {"main_object", caps.at("main object caption")},
                           {"camera", caps.at("camera caption")},
                           {"reference", caps.at("reference caption")}})));
  return round1;
}

ConstructionResult construct_captions(const std::vector<std::string>& keyframes,
                                      llm::LlmClient& client,
                                      const prompts::PromptTemplates& t) {
  if (keyframes.empty()) {
    throw Error(Errc::kConstruction, "caption construction needs a keyframe");
  }
  auto missing_key = [](const std::map<std::string, std::string>& caps)
      -> std::optional<std::string> {
    for (auto k : kRequiredKeys) {
      if (!caps.contains(std::string(k))) return std::string(k);
    }
    return std::nullopt;
  };

  const llm::ChatRequest first = construction_round1(keyframes, t);
  std::string reply = client.complete(first);
  auto caps = parse_structured_captions(reply);
  if (missing_key(caps)) {
    reply = client.complete(
        vdc::with_reprompt(first, reply, t.reprompt_construct));
    caps = parse_structured_captions(reply);
  }
  if (auto k = missing_key(caps)) {
    throw Error(Errc::kConstruction,
                "round-one reply lacks required key '" + *k + "'");
  }

  std::string detailed =
      client.complete(construction_round2(first, reply, caps, t));
  auto labelled = parse_structured_captions(detailed);
  if (auto it = labelled.find("reference caption"); it != labelled.end()) {
    detailed = it->second;
  }
  detailed = trim(detailed);
  if (detailed.empty()) {
    throw Error(Errc::kConstruction, "round-two reply is empty");
  }

  ConstructionResult out;
  out.captions.short_caption = caps.at("short caption");
  out.captions.background = caps.at("background caption");
  out.captions.main_object = caps.at("main object caption");
  out.captions.camera = caps.at("camera caption");
  out.captions.detailed = detailed;
  const std::size_t before = word_count(caps.at("reference caption"));
  const std::size_t after = word_count(detailed);
  if (after < before) {
    out.warnings.push_back("detailed caption shrank in round two (" +
                           std::to_string(after) + " < " +
                           std::to_string(before) + " words)");
  }
  return out;
}

nlohmann::json Failure::to_json() const {
  return {{"video_id", video_id}, {"stage", stage}, {"message", message}};
}

QAExport export_qa(const std::vector<BenchmarkEntry>& entries,
                   llm::LlmClient& client, const prompts::PromptTemplates& t,
                   const std::vector<Category>& categories) {
  struct Job {
    const BenchmarkEntry* entry;
    Category category;
  };
  std::vector<Job> jobs;
  for (const auto& e : entries) {
    for (Category c : categories) jobs.push_back({&e, c});
  }
  std::vector<std::optional<vdc::QAExtraction>> done(jobs.size());
  std::vector<std::optional<Failure>> failed(jobs.size());
  parallel_for(jobs.size(), client.max_concurrency(), [&](std::size_t i) {
    const auto& job = jobs[i];
    try {
      done[i] = vdc::extract_qa(job.entry->captions.get(job.category),
                                job.category, client, t);
    } catch (const Error& err) {
      failed[i] = Failure{job.entry->video_id,
                          "extract_qa:" +
                              std::string(vdc::category_name(job.category)),
                          err.what()};
    }
  });
  QAExport out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (failed[i]) {
      out.failures.push_back(std::move(*failed[i]));
      continue;
    }
    for (const auto& w : done[i]->warnings) {
      out.warnings.push_back(jobs[i].entry->video_id + "/" +
                             std::string(vdc::category_name(jobs[i].category)) +
                             ": " + w);
    }
    out.records.push_back({jobs[i].entry->video_id, jobs[i].category,
                           std::move(done[i]->pairs)});
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<nlohmann::json>& rows) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kEnvironment, "cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
  if (!out) throw Error(Errc::kEnvironment, "write failed on " + path.string());
}

void write_review_sidecar(const std::filesystem::path& path,
                          const std::vector<BenchmarkEntry>& entries) {
  std::vector<nlohmann::json> rows;
  for (const auto& e : entries) {
    nlohmann::json caps = nlohmann::json::object();
    for (Category c : vdc::all_categories()) {
      caps[std::string(vdc::category_name(c))] = e.captions.get(c);
    }
    rows.push_back({{"video_id", e.video_id}, {"captions", std::move(caps)}});
  }
  write_jsonl(path, rows);
}

void apply_review(std::vector<BenchmarkEntry>& entries,
                  const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw Error(Errc::kIo, "cannot open review file " + sidecar.string());
  std::map<std::string, BenchmarkEntry*> by_id;
  for (auto& e : entries) by_id[e.video_id] = &e;
  std::string text;
  std::size_t line = 0;
  const std::string origin = sidecar.string();
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      field_error(origin, line, "<line>", e.what());
    }
    const std::string id = required_string(j, "video_id", "video_id", origin, line);
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      field_error(origin, line, "video_id", "unknown id '" + id + "'");
    }
    const auto caps = j.find("captions");
    if (caps == j.end() || !caps->is_object()) {
      field_error(origin, line, "captions", "missing");
    }
    for (Category c : vdc::all_categories()) {
      const std::string name(vdc::category_name(c));
      it->second->captions.get(c) =
          required_string(*caps, name, "captions." + name, origin, line);
    }
  }
}

}  // namespace capeval::bench
