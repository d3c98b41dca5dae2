#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cnm {

// Unrecoverable input error: parse failure, schema violation, capacity
// violation, unsupported construct. Message carries position where known.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-throwing validation result entry. `where` is free-form context
// (instruction index, map id, config key).
struct Diagnostic {
  std::string where;
  std::string message;
  bool operator==(const Diagnostic&) const = default;
};

inline std::string strprintf(const char* fmt, ...) {
  va_list ap;
  va_start(ap, fmt);
  va_list ap2;
  va_copy(ap2, ap);
  int n = std::vsnprintf(nullptr, 0, fmt, ap);
  va_end(ap);
  std::string out(static_cast<size_t>(n), '\0');
  std::vsnprintf(out.data(), out.size() + 1, fmt, ap2);
  va_end(ap2);
  return out;
}

inline std::string_view trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) i++;
    size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') i++;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

inline std::vector<std::string_view> split_char(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    size_t p = s.find(sep, start);
    if (p == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, p - start));
    start = p + 1;
  }
  return out;
}

// Strict unsigned parse; `what` names the field for the error message.
inline uint64_t parse_u64(std::string_view tok, std::string_view what) {
  if (tok.empty()) throw Error(strprintf("%.*s: empty integer", (int)what.size(), what.data()));
  uint64_t v = 0;
  for (char c : tok) {
    if (c < '0' || c > '9')
      throw Error(strprintf("%.*s: bad integer '%.*s'", (int)what.size(), what.data(),
                            (int)tok.size(), tok.data()));
    uint64_t nv = v * 10 + static_cast<uint64_t>(c - '0');
    if (nv < v) throw Error(strprintf("%.*s: integer overflow", (int)what.size(), what.data()));
    v = nv;
  }
  return v;
}

inline double parse_f64(std::string_view tok, std::string_view what) {
  std::string t(tok);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() || *end != '\0')
    throw Error(strprintf("%.*s: bad number '%s'", (int)what.size(), what.data(), t.c_str()));
  return v;
}

// a*b with overflow check.
inline uint64_t mul_checked(uint64_t a, uint64_t b, const char* what) {
  uint64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw Error(strprintf("%s: overflow", what));
  return r;
}

inline uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

// Line-oriented scanner used by the text-format parsers. Keeps 1-based line
// numbers for error reporting; strips comments starting with `comment_char`.
class LineScanner {
 public:
  LineScanner(std::string_view text, char comment_char)
      : text_(text), comment_(comment_char) {}

  // Next non-empty line after comment stripping; false at end of input.
  bool next(std::string_view& line, int& lineno) {
    while (pos_ < text_.size()) {
      size_t eol = text_.find('\n', pos_);
      std::string_view raw;
      if (eol == std::string_view::npos) {
        raw = text_.substr(pos_);
        pos_ = text_.size();
      } else {
        raw = text_.substr(pos_, eol - pos_);
        pos_ = eol + 1;
      }
      lineno_++;
      size_t c = raw.find(comment_);
      if (c != std::string_view::npos) raw = raw.substr(0, c);
      raw = trim(raw);
      if (!raw.empty()) {
        line = raw;
        lineno = lineno_;
        return true;
      }
    }
    return false;
  }

 private:
  std::string_view text_;
  char comment_;
  size_t pos_ = 0;
  int lineno_ = 0;
};

}  // namespace cnm
