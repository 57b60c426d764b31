#pragma once

// Utterance normalization and word/phrase matching helpers.

#include <algorithm>
#include <cctype>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace narraguide::text {

/// Lowercases, drops apostrophes ("what's" -> "whats"), turns every other
/// non-alphanumeric byte into a separator and collapses runs of spaces.
inline std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (c == '\'') continue;
    if (std::isalnum(c) || c >= 0x80) {
      if (pending_space && !out.empty()) out += ' ';
      pending_space = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending_space = true;
    }
  }
  return out;
}

inline std::vector<std::string> split(std::string_view normalized) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < normalized.size()) {
    std::size_t j = normalized.find(' ', i);
    if (j == std::string_view::npos) j = normalized.size();
    if (j > i) out.emplace_back(normalized.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

inline std::vector<std::string> tokens(std::string_view s) { return split(normalize(s)); }

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// True when `phrase` (normalized words) occurs as a whole-word sequence.
inline bool has_phrase(const std::vector<std::string>& toks, std::string_view phrase) {
  const auto words = split(normalize(phrase));
  if (words.empty() || words.size() > toks.size()) return false;
  for (std::size_t i = 0; i + words.size() <= toks.size(); ++i) {
    if (std::equal(words.begin(), words.end(), toks.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  }
  return false;
}

inline bool has_any(const std::vector<std::string>& toks, std::initializer_list<std::string_view> phrases) {
  return std::any_of(phrases.begin(), phrases.end(), [&](std::string_view p) { return has_phrase(toks, p); });
}

inline bool has_word(const std::vector<std::string>& toks, std::string_view w) {
  return std::find(toks.begin(), toks.end(), w) != toks.end();
}

/// Parses "13" or small English number words ("four", "twenty one").
inline std::optional<int> number_at(const std::vector<std::string>& toks, std::size_t i, std::size_t* consumed = nullptr) {
  if (i >= toks.size()) return std::nullopt;
  const std::string& t = toks[i];
  if (!t.empty() && std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
    if (t.size() > 6) return std::nullopt;
    if (consumed) *consumed = 1;
    return std::stoi(t);
  }
  static constexpr std::string_view kUnits[] = {"zero", "one", "two", "three", "four", "five", "six",
                                                "seven", "eight", "nine", "ten", "eleven", "twelve",
                                                "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
                                                "eighteen", "nineteen"};
  static constexpr std::string_view kTens[] = {"twenty", "thirty", "forty", "fifty", "sixty", "seventy",
                                               "eighty", "ninety"};
  for (int u = 0; u < 20; ++u) {
    if (t == kUnits[u]) {
      if (consumed) *consumed = 1;
      return u;
    }
  }
  for (int k = 0; k < 8; ++k) {
    if (t == kTens[k]) {
      int value = 20 + 10 * k;
      std::size_t used = 1;
      if (i + 1 < toks.size()) {
        for (int u = 1; u < 10; ++u) {
          if (toks[i + 1] == kUnits[u]) {
            value += u;
            used = 2;
            break;
          }
        }
      }
      if (consumed) *consumed = used;
      return value;
    }
  }
  return std::nullopt;
}

}  // namespace narraguide::text
