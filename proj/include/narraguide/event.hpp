#pragma once

// Transcript events and the newline-delimited log format.

#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "narraguide/dialogue.hpp"
#include "narraguide/error.hpp"

namespace narraguide {

enum class EventKind { user_utterance, robot_speech, nav_command, arrived, suggestion, error };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::user_utterance: return "user_utterance";
    case EventKind::robot_speech: return "robot_speech";
    case EventKind::nav_command: return "nav_command";
    case EventKind::arrived: return "arrived";
    case EventKind::suggestion: return "suggestion";
    case EventKind::error: return "error";
  }
  return "error";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (auto k : {EventKind::user_utterance, EventKind::robot_speech, EventKind::nav_command, EventKind::arrived,
                 EventKind::suggestion, EventKind::error}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

enum class Politeness { polite, direct };

inline std::string_view to_string(Politeness p) { return p == Politeness::polite ? "polite" : "direct"; }

inline std::optional<Politeness> parse_politeness(std::string_view s) {
  if (s == "polite") return Politeness::polite;
  if (s == "direct") return Politeness::direct;
  return std::nullopt;
}

/// One transcript record. Payload fields by kind:
///   user_utterance {text, channel?}   robot_speech {text, source}
///   nav_command {command, origin, exhibit?, blocked?}   arrived {exhibit}
///   suggestion {exhibit}   error {message, source}
struct Event {
  double t = 0.0;
  EventKind kind = EventKind::error;
  nlohmann::json payload = nlohmann::json::object();
  std::optional<Intent> intent;
  std::optional<Politeness> politeness;

  friend bool operator==(const Event&, const Event&) = default;
};

namespace detail {

inline void check_payload(const Event& e) {
  auto need = [&](const char* key, bool (nlohmann::json::*pred)() const noexcept) {
    if (!e.payload.contains(key) || !(e.payload.at(key).*pred)()) {
      throw ParseError(std::string(to_string(e.kind)) + " event needs payload field '" + key + "'");
    }
  };
  if (!e.payload.is_object()) throw ParseError("event payload must be an object");
  switch (e.kind) {
    case EventKind::user_utterance: need("text", &nlohmann::json::is_string); break;
    case EventKind::robot_speech: need("text", &nlohmann::json::is_string); break;
    case EventKind::nav_command: need("command", &nlohmann::json::is_string); break;
    case EventKind::arrived: need("exhibit", &nlohmann::json::is_number_integer); break;
    case EventKind::suggestion: need("exhibit", &nlohmann::json::is_number_integer); break;
    case EventKind::error: need("message", &nlohmann::json::is_string); break;
  }
}

}  // namespace detail

inline nlohmann::json event_to_json(const Event& e) {
  nlohmann::json j;
  j["t"] = e.t;
  j["kind"] = to_string(e.kind);
  if (e.intent) j["intent"] = to_string(*e.intent);
  if (e.politeness) j["politeness"] = to_string(*e.politeness);
  j["payload"] = e.payload;
  return j;
}

/// One log line, without the trailing newline.
inline std::string event_to_line(const Event& e) { return event_to_json(e).dump(); }

inline Event event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("event record must be an object");
  Event e;
  if (!j.contains("t") || !j.at("t").is_number()) throw ParseError("event record needs numeric 't'");
  e.t = j.at("t").get<double>();
  if (!j.contains("kind") || !j.at("kind").is_string()) throw ParseError("event record needs 'kind'");
  auto kind = parse_event_kind(j.at("kind").get<std::string>());
  if (!kind) throw ParseError("unknown event kind '" + j.at("kind").get<std::string>() + "'");
  e.kind = *kind;
  if (j.contains("intent")) {
    auto intent = j.at("intent").is_string() ? parse_intent(j.at("intent").get<std::string>()) : std::nullopt;
    if (!intent) throw ParseError("unknown intent in event record");
    e.intent = intent;
  }
  if (j.contains("politeness")) {
    auto p = j.at("politeness").is_string() ? parse_politeness(j.at("politeness").get<std::string>()) : std::nullopt;
    if (!p) throw ParseError("unknown politeness tag in event record");
    e.politeness = p;
  }
  if (!j.contains("payload")) throw ParseError("event record needs 'payload'");
  e.payload = j.at("payload");
  detail::check_payload(e);
  return e;
}

inline void persist(const std::vector<Event>& events, std::ostream& sink) {
  for (const auto& e : events) sink << event_to_line(e) << '\n';
  if (!sink) throw IoError("failed to write transcript");
}

inline std::string persist(const std::vector<Event>& events) {
  std::ostringstream out;
  persist(events, out);
  return out.str();
}

/// Parses a newline-delimited log. Blank lines are skipped; errors carry the
/// 1-based line number.
inline std::vector<Event> load_log(std::string_view bytes) {
  std::vector<Event> events;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto end = bytes.find('\n', pos);
    if (end == std::string_view::npos) end = bytes.size();
    ++line_no;
    std::string_view line = bytes.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("malformed JSON record", line_no);
    try {
      Event e = event_from_json(j);
      if (!events.empty() && e.t < events.back().t) throw ParseError("timestamps must be non-decreasing");
      events.push_back(std::move(e));
    } catch (const ParseError& err) {
      throw ParseError(err.what(), line_no);
    }
  }
  return events;
}

}  // namespace narraguide
