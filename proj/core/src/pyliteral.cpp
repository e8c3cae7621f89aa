#include "capeval/pyliteral.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>

#include "capeval/error.hpp"

namespace capeval::pyliteral {

namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  Value parse_all() {
    Value v = value();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::kProtocol,
                "literal parse error at offset " + std::to_string(pos_) +
                    ": " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() &&
           std::isspace(static_cast<unsigned char>(s_[pos_]))) {
      ++pos_;
    }
  }

  char peek() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    return s_[pos_];
  }

  Value value() {
    const char c = peek();
    if (c == '[') return sequence('[', ']', Value::Kind::kList);
    if (c == '(') return sequence('(', ')', Value::Kind::kTuple);
    if (c == '{') return dict();
    if (c == '"' || c == '\'') return string();
    if (c == '-' || c == '+' || c == '.' ||
        std::isdigit(static_cast<unsigned char>(c))) {
      return number();
    }
    return keyword();
  }

  Value sequence(char open, char close, Value::Kind kind) {
    Value v;
    v.kind = kind;
    ++pos_;  // open
    (void)open;
    for (;;) {
      if (peek() == close) {
        ++pos_;
        return v;
      }
      v.items.push_back(value());
      const char c = peek();
      if (c == ',') {
        ++pos_;
      } else if (c != close) {
        fail(std::string("expected ',' or '") + close + "'");
      }
    }
  }

  Value dict() {
    Value v;
    v.kind = Value::Kind::kDict;
    ++pos_;
    for (;;) {
      if (peek() == '}') {
        ++pos_;
        return v;
      }
      v.keys.push_back(value());
      if (peek() != ':') fail("expected ':'");
      ++pos_;
      v.items.push_back(value());
      const char c = peek();
      if (c == ',') {
        ++pos_;
      } else if (c != '}') {
        fail("expected ',' or '}'");
      }
    }
  }

  Value string() {
    const char quote = s_[pos_++];
    Value v;
    v.kind = Value::Kind::kString;
    while (pos_ < s_.size()) {
      const char c = s_[pos_++];
      if (c == quote) return v;
      if (c != '\\') {
        v.str.push_back(c);
        continue;
      }
      if (pos_ >= s_.size()) break;
      const char e = s_[pos_++];
      switch (e) {
        case 'n': v.str.push_back('\n'); break;
        case 't': v.str.push_back('\t'); break;
        case 'r': v.str.push_back('\r'); break;
        case 'u': {
          if (pos_ + 4 > s_.size()) fail("short \\u escape");
          std::uint32_t cp = 0;
          const auto res = std::from_chars(s_.data() + pos_,
                                           s_.data() + pos_ + 4, cp, 16);
          if (res.ec != std::errc{} || res.ptr != s_.data() + pos_ + 4) {
            fail("bad \\u escape");
          }
          pos_ += 4;
          append_utf8(v.str, cp);
          break;
        }
        default: v.str.push_back(e); break;
      }
    }
    fail("unterminated string");
  }

  Value number() {
    const std::size_t start = pos_;
    if (s_[pos_] == '+' || s_[pos_] == '-') ++pos_;
    while (pos_ < s_.size() &&
           (std::isdigit(static_cast<unsigned char>(s_[pos_])) ||
            s_[pos_] == '.' || s_[pos_] == 'e' || s_[pos_] == 'E' ||
            ((s_[pos_] == '-' || s_[pos_] == '+') &&
             (s_[pos_ - 1] == 'e' || s_[pos_ - 1] == 'E')))) {
      ++pos_;
    }
    Value v;
    v.kind = Value::Kind::kNumber;
    std::string tok(s_.substr(start, pos_ - start));
    if (!tok.empty() && tok[0] == '+') tok.erase(0, 1);
    const auto res =
        std::from_chars(tok.data(), tok.data() + tok.size(), v.number);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
      fail("bad number '" + tok + "'");
    }
    return v;
  }

  Value keyword() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() &&
           std::isalpha(static_cast<unsigned char>(s_[pos_]))) {
      ++pos_;
    }
    const std::string_view word = s_.substr(start, pos_ - start);
    Value v;
    if (word == "True" || word == "true") {
      v.kind = Value::Kind::kBool;
      v.boolean = true;
    } else if (word == "False" || word == "false") {
      v.kind = Value::Kind::kBool;
    } else if (word == "None" || word == "null") {
      v.kind = Value::Kind::kNone;
    } else {
      pos_ = start;
      fail("unexpected token");
    }
    return v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

const Value* Value::find(std::string_view key) const {
  if (kind != Kind::kDict) return nullptr;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].kind == Kind::kString && iequals(keys[i].str, key)) {
      return &items[i];
    }
  }
  return nullptr;
}

Value parse(std::string_view text) { return Parser(text).parse_all(); }

std::optional<std::string_view> find_balanced(std::string_view text, char open,
                                              char close) {
  for (std::size_t start = text.find(open); start != std::string_view::npos;
       start = text.find(open, start + 1)) {
    int depth = 0;
    char quote = 0;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (quote != 0) {
        if (c == '\\') {
          ++i;
        } else if (c == quote) {
          quote = 0;
        }
        continue;
      }
      if (c == '"' || c == '\'') {
        quote = c;
      } else if (c == open) {
        ++depth;
      } else if (c == close && --depth == 0) {
        return text.substr(start, i - start + 1);
      }
    }
  }
  return std::nullopt;
}

}  // namespace capeval::pyliteral
