#pragma once

// Parser for the Python/JSON literal subset that chat models emit when asked
// for "a Python list of tuple" or "a Python dictionary string".

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capeval::pyliteral {

struct Value {
  enum class Kind { kString, kNumber, kBool, kNone, kList, kTuple, kDict };

  Kind kind = Kind::kNone;
  std::string str;
  double number = 0.0;
  bool boolean = false;
  std::vector<Value> items;  // list/tuple elements, or dict values
  std::vector<Value> keys;   // dict keys, parallel to items

  bool is_sequence() const {
    return kind == Kind::kList || kind == Kind::kTuple;
  }
  /// Dict lookup by string key, case-insensitive.
  const Value* find(std::string_view key) const;
};

/// Parses one complete literal; throws a protocol error on malformed input or
/// trailing garbage.
Value parse(std::string_view text);

/// Locates the first balanced open...close span starting at an `open` byte,
/// skipping over quoted strings inside the span. Text before and after the
/// span is ignored.
std::optional<std::string_view> find_balanced(std::string_view text, char open,
                                              char close);

}  // namespace capeval::pyliteral
