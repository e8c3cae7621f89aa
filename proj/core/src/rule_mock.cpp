#include "capeval/rule_mock.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <regex>
#include <set>
#include <sstream>

#include "capeval/textmetrics.hpp"
#include "capeval/vdcscore.hpp"

namespace capeval::mock {

namespace {

using Words = std::vector<std::string>;

std::vector<std::string> sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur.push_back(text[i]);
    const char c = text[i];
    const bool end = (c == '.' || c == '!' || c == '?') &&
                     (i + 1 == text.size() ||
                      std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (end) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (cur.find_first_not_of(" \t\r\n") != std::string::npos) {
    out.push_back(std::move(cur));
  }
  return out;
}

Words words(std::string_view s) {
  Words w;
  std::istringstream in{std::string(s)};
  for (std::string x; in >> x;) w.push_back(std::move(x));
  if (!w.empty()) {
    auto& last = w.back();
    while (!last.empty() && std::ispunct(static_cast<unsigned char>(last.back())) &&
           last.back() != '"' && last.back() != '\'' && last.back() != ')') {
      last.pop_back();
    }
    if (last.empty()) w.pop_back();
  }
  return w;
}

std::string join(Words::const_iterator b, Words::const_iterator e) {
  std::string s;
  for (auto it = b; it != e; ++it) {
    if (!s.empty()) s.push_back(' ');
    s += *it;
  }
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct Copula {
  std::string subject;  // lowercased
  std::string verb;     // "is" / "are"
  std::string rest;
  std::string subject_raw;
};

std::optional<Copula> copula_of(const Words& w) {
  for (std::size_t i = 1; i + 1 < w.size(); ++i) {
    const std::string v = lower(w[i]);
    if (v == "is" || v == "are") {
      const std::string subj = join(w.begin(), w.begin() + static_cast<long>(i));
      return Copula{lower(subj), v, join(w.begin() + static_cast<long>(i) + 1, w.end()),
                    subj};
    }
  }
  return std::nullopt;
}

std::string key_of(const Words& w) {
  return lower(join(w.begin(), w.begin() + std::min<long>(3, static_cast<long>(w.size()))));
}

std::string py_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\\' || c == '\'') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

std::string verdict(bool yes, int score) {
  return std::string("{'pred': '") + (yes ? "yes" : "no") +
         "', 'score': " + std::to_string(score) + "}";
}

double jaccard(std::string_view a, std::string_view b) {
  const auto ta = metrics::tokenize(a);
  const auto tb = metrics::tokenize(b);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : sa) inter += sb.count(x);
  return static_cast<double>(inter) /
         static_cast<double>(sa.size() + sb.size() - inter);
}

std::string user_text(const llm::ChatRequest& r) {
  return r.turns.empty() ? std::string() : r.turns.front().text();
}

std::string stem_words(const std::string& path) {
  std::string s = std::filesystem::path(path).stem().string();
  for (char& c : s) {
    if (c == '_' || c == '-') c = ' ';
  }
  return s;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> rule_pairs(
    std::string_view caption) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::pair<std::string, std::string>> copulas;
  std::set<std::string> keys;
  for (const auto& s : sentences(caption)) {
    const Words w = words(s);
    if (w.empty()) continue;
    if (auto c = copula_of(w)) {
      if (copulas.insert({c->subject, c->verb}).second) {
        out.emplace_back("What " + c->verb + " " + c->subject_raw + "?", c->rest);
      }
    } else if (w.size() >= 4 && !keys.contains(key_of(w))) {
      out.emplace_back("What follows \"" +
                           join(w.begin(), w.begin() + 3) + "\"?",
                       join(w.begin() + 3, w.end()));
    }
    keys.insert(key_of(w));
  }
  return out;
}

std::string rule_answer(std::string_view caption, std::string_view question) {
  static const std::regex kCopulaQ(R"(^What (is|are) (.+)\?$)");
  static const std::regex kFollowsQ(R"re(^What follows "(.+)"\?$)re");
  const std::string q(question);
  std::smatch m;
  const auto all = sentences(caption);
  if (std::regex_match(q, m, kFollowsQ)) {
    const std::string key = lower(m[1].str());
    for (const auto& s : all) {
      const Words w = words(s);
      if (w.size() >= 4 && key_of(w) == key) {
        return join(w.begin() + 3, w.end());
      }
    }
  } else if (std::regex_match(q, m, kCopulaQ)) {
    const std::string verb = m[1].str();
    const std::string subject = lower(m[2].str());
    for (const auto& s : all) {
      const auto c = copula_of(words(s));
      if (c && c->verb == verb && c->subject == subject) return c->rest;
    }
  }
  return std::string(vdc::kNoAnswer);
}

RuleResponder::RuleResponder(prompts::PromptTemplates templates)
    : t_(std::move(templates)) {}

std::optional<std::string> RuleResponder::operator()(
    const llm::ChatRequest& request) const {
  const std::string first = user_text(request);

  if (request.system == t_.qa_system) {
    const auto b = prompts::match(t_.qa_user, first);
    if (!b) return std::nullopt;
    std::string out = "[";
    for (const auto& [q, a] : rule_pairs(b->at("caption"))) {
      if (out.size() > 1) out += ", ";
      out += "(" + py_quote(q) + ", " + py_quote(a) + ")";
    }
    return out + "]";
  }

  if (request.system == t_.answer_system) {
    const auto b = prompts::match(t_.answer_user, first);
    if (!b) return std::nullopt;
    return rule_answer(b->at("caption"), b->at("question"));
  }

  if (request.system == t_.judge_system) {
    const auto b = prompts::match(t_.judge_user, first);
    if (!b) return std::nullopt;
    const std::string& answer = b->at("answer");
    const std::string& pred = b->at("prediction");
    if (vdc::normalize_answer(answer) == vdc::normalize_answer(pred)) {
      return verdict(true, 5);
    }
    return verdict(false,
                   static_cast<int>(std::lround(4.0 * jaccard(answer, pred))));
  }

  if (request.system == t_.vdd_system) {
    const auto b = prompts::match(t_.vdd_user, first);
    if (!b) return std::nullopt;
    const double j = jaccard(b->at("reference"), b->at("prediction"));
    return verdict(j >= 0.5, static_cast<int>(std::lround(5.0 * j)));
  }

  if (request.system == t_.construct_system) {
    if (request.turns.size() >= 3) {
      const auto b = prompts::match(t_.construct_round2,
                                    request.turns[2].text());
      if (b) {
        return "Detailed Caption: " + b->at("reference") + " " +
               b->at("main_object");
      }
    }
    std::vector<std::string> frames;
    for (const auto& part : request.turns.front().parts) {
      if (part.kind == llm::ContentPart::Kind::kImage) {
        frames.push_back(stem_words(part.value));
      }
    }
    if (frames.empty()) return std::nullopt;
    std::string listing;
    for (const auto& f : frames) listing += (listing.empty() ? "" : ", ") + f;
    const std::string subject = frames.front();
    return "{'short caption': " + py_quote("A clip of " + subject + ".") +
           ", 'background caption': " +
           py_quote("The background is seen across " +
                    std::to_string(frames.size()) + " frames.") +
           ", 'main object caption': " +
           py_quote("The main object is " + subject + ".") +
           ", 'camera caption': " + py_quote("The camera is steady.") +
           ", 'reference caption': " +
           py_quote("The video shows " + subject + ". The frames are " +
                    listing + ".") +
           "}";
  }
  return std::nullopt;
}

std::shared_ptr<llm::MockBackend> make_rule_backend(
    const prompts::PromptTemplates& templates) {
  return std::make_shared<llm::MockBackend>(RuleResponder(templates));
}

}  // namespace capeval::mock
