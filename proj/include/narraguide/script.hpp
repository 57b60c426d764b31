#pragma once

// Headless tour scripts:
//   at <t> say "<utterance>"
//   at <t> press <forward|backward|turn_left|turn_right|stop>
// Blank lines and lines starting with '#' are ignored.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "narraguide/error.hpp"
#include "narraguide/navsim.hpp"
#include "narraguide/session.hpp"

namespace narraguide {

struct ScriptStep {
  std::size_t line = 0;
  double t = 0.0;
  std::variant<std::string, LowLevelCommand> action;  // utterance or button
};

namespace detail {

inline std::string_view next_word(std::string_view& s) {
  std::size_t b = 0;
  while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  std::size_t e = b;
  while (e < s.size() && !std::isspace(static_cast<unsigned char>(s[e]))) ++e;
  std::string_view w = s.substr(b, e - b);
  s.remove_prefix(e);
  return w;
}

inline std::string_view skip_space(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline std::vector<ScriptStep> parse_script(std::string_view source) {
  std::vector<ScriptStep> steps;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < source.size()) {
    auto end = source.find('\n', pos);
    if (end == std::string_view::npos) end = source.size();
    ++line_no;
    std::string_view line = detail::skip_space(source.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;

    std::string_view rest = line;
    if (detail::next_word(rest) != "at") throw ParseError("expected 'at <t> ...'", line_no);
    const std::string time_text(detail::next_word(rest));
    ScriptStep step;
    step.line = line_no;
    try {
      std::size_t used = 0;
      step.t = std::stod(time_text, &used);
      if (used != time_text.size() || !(step.t >= 0.0) || !std::isfinite(step.t)) throw std::invalid_argument("t");
    } catch (const std::exception&) {
      throw ParseError("invalid time '" + time_text + "'", line_no);
    }
    if (!steps.empty() && step.t < steps.back().t) throw ParseError("times must be non-decreasing", line_no);

    const std::string_view verb = detail::next_word(rest);
    rest = detail::skip_space(rest);
    if (verb == "say") {
      if (rest.size() < 2 || rest.front() != '"' || rest.back() != '"') {
        throw ParseError("say needs a double-quoted utterance", line_no);
      }
      std::string text;
      for (std::size_t i = 1; i + 1 < rest.size(); ++i) {
        if (rest[i] == '\\' && i + 2 < rest.size()) {
          text += rest[++i];
        } else if (rest[i] == '"') {
          throw ParseError("unescaped quote inside utterance", line_no);
        } else {
          text += rest[i];
        }
      }
      if (text::trim(text).empty()) throw ParseError("empty utterance", line_no);
      step.action = std::move(text);
    } else if (verb == "press") {
      auto cmd = parse_low_level_command(rest);
      if (!cmd) throw ParseError("unknown command '" + std::string(rest) + "'", line_no);
      step.action = *cmd;
    } else {
      throw ParseError("unknown action '" + std::string(verb) + "' (expected say or press)", line_no);
    }
    steps.push_back(std::move(step));
  }
  return steps;
}

struct RunOptions {
  std::optional<double> duration;  // run at least this long
  double settle_limit = 600.0;     // max extra time to let the robot finish
};

/// Plays a script on the session's virtual clock. Without a duration the run
/// continues until the robot is idle and silent.
inline void run_script(Session& session, const std::vector<ScriptStep>& steps, const RunOptions& opts = {}) {
  for (const auto& step : steps) {
    if (step.t > session.now()) session.advance_until(step.t);
    if (const auto* text = std::get_if<std::string>(&step.action)) {
      session.submit_utterance(*text);
    } else {
      session.press(std::get<LowLevelCommand>(step.action));
    }
  }
  if (opts.duration) {
    if (*opts.duration > session.now()) session.advance_until(*opts.duration);
    return;
  }
  const double limit = session.now() + opts.settle_limit;
  while (session.now() < limit &&
         (session.robot().mode == Mode::autonomous || session.speaking() || session.queued_utterance())) {
    session.advance(std::min(1.0, limit - session.now()));
  }
}

}  // namespace narraguide
