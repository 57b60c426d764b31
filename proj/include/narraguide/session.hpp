#pragma once

// One guided tour: virtual clock, utterance handling, robot ticking,
// silence-triggered chat and the append-only transcript.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "narraguide/analysis.hpp"
#include "narraguide/dialogue.hpp"
#include "narraguide/error.hpp"
#include "narraguide/event.hpp"
#include "narraguide/navsim.hpp"
#include "narraguide/worldmap.hpp"

namespace narraguide {

struct SessionConfig {
  double silence_threshold = 45.0;  // seconds
  bool auto_guide = false;          // navigate to robot suggestions without waiting for acceptance
  bool barge_in = false;            // let utterances interrupt robot speech
  MotionConfig motion;
  double speech_rate = 15.0;  // characters per second of simulated speech
  double tick = 0.1;          // longest simulation step, seconds

  void validate() const {
    if (!(silence_threshold > 0.0)) throw ValidationError("silence_threshold must be > 0");
    if (!(speech_rate > 0.0)) throw ValidationError("speech_rate must be > 0");
    if (!(tick > 0.0)) throw ValidationError("tick must be > 0");
    motion.validate();
  }
};

struct Snapshot {
  std::string session_id;
  double t = 0.0;
  Pose pose;
  Mode mode = Mode::idle;
  std::optional<int> goal_exhibit;
  bool speaking = false;
  std::vector<int> visited;
  std::optional<int> pending_suggestion;
  std::vector<Point> remaining_path;
  std::size_t event_count = 0;
  std::vector<Event> last_events;
  bool closed = false;

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

inline nlohmann::json snapshot_to_json(const Snapshot& s) {
  nlohmann::json path = nlohmann::json::array();
  for (const auto& p : s.remaining_path) path.push_back({p.x, p.y});
  nlohmann::json last = nlohmann::json::array();
  for (const auto& e : s.last_events) last.push_back(event_to_json(e));
  return {{"session_id", s.session_id},
          {"t", s.t},
          {"pose", {{"x", s.pose.x}, {"y", s.pose.y}, {"theta", s.pose.theta}}},
          {"mode", to_string(s.mode)},
          {"goal_exhibit", s.goal_exhibit ? nlohmann::json(*s.goal_exhibit) : nlohmann::json(nullptr)},
          {"speaking", s.speaking},
          {"visited", s.visited},
          {"pending_suggestion", s.pending_suggestion ? nlohmann::json(*s.pending_suggestion) : nlohmann::json(nullptr)},
          {"path", path},
          {"event_count", s.event_count},
          {"last_events", last},
          {"closed", s.closed}};
}

/// Single-threaded state machine; callers serialize access.
class Session {
 public:
  static constexpr std::size_t kSnapshotEvents = 10;

  Session(std::string id, DialogueSystem dialogue, SessionConfig cfg = {})
      : id_(std::move(id)), dialogue_(std::move(dialogue)), cfg_(cfg) {
    cfg_.validate();
    robot_.pose = dialogue_.map().start_pose();
  }

  const std::string& id() const { return id_; }
  double now() const { return clock_; }
  bool closed() const { return closed_; }
  const SessionConfig& config() const { return cfg_; }
  const RobotState& robot() const { return robot_; }
  const SuggestionState& suggestion() const { return suggestion_; }
  const std::vector<Event>& transcript() const { return transcript_; }
  bool speaking() const { return clock_ < speaking_until_; }
  std::optional<int> pending_suggestion() const { return pending_; }
  const std::optional<std::string>& queued_utterance() const { return queued_; }

  /// Latest of: last utterance received, end of the last robot speech.
  double last_activity() const { return std::max(last_user_activity_, speaking_until_); }

  void close() {
    if (closed_) throw SessionClosed();
    closed_ = true;
  }

  std::vector<Event> submit_utterance(std::string_view utterance) {
    ensure_open();
    if (text::trim(utterance).empty()) throw EmptyUtterance();
    const std::size_t first = transcript_.size();
    last_user_activity_ = std::max(last_user_activity_, clock_);
    if (speaking()) {
      if (!cfg_.barge_in) {
        queued_ = std::string(utterance);
        return {};
      }
      speaking_until_ = clock_;
    }
    process_utterance(std::string(utterance));
    return since(first);
  }

  /// Console directional button; bypasses classification.
  std::vector<Event> press(LowLevelCommand cmd) {
    ensure_open();
    const std::size_t first = transcript_.size();
    last_user_activity_ = std::max(last_user_activity_, clock_);
    pending_.reset();
    apply_command(cmd, "console");
    return since(first);
  }

  /// Console accept/decline of the pending suggestion.
  std::vector<Event> respond_suggestion(bool accept) {
    ensure_open();
    const std::size_t first = transcript_.size();
    last_user_activity_ = std::max(last_user_activity_, clock_);
    const std::string text = accept ? "yes" : "no";
    Event e{clock_, EventKind::user_utterance, {{"text", text}, {"channel", "button"}}, std::nullopt,
            code_politeness(text)};
    e.intent = Intent::free_chat;
    emit(std::move(e));
    if (!pending_) {
      emit_error("no pending suggestion to respond to", "suggestion");
    } else if (accept) {
      accept_suggestion();
    } else {
      reject_suggestion();
    }
    return since(first);
  }

  std::vector<Event> advance(double dt) {
    if (!(dt >= 0.0)) throw ValidationError("advance requires dt >= 0");
    return advance_until(clock_ + dt);
  }

  /// Runs the virtual clock up to the absolute time `target`.
  std::vector<Event> advance_until(double target) {
    ensure_open();
    if (!std::isfinite(target)) throw ValidationError("advance target must be finite");
    const std::size_t first = transcript_.size();
    while (true) {
      settle();
      if (clock_ >= target) break;
      double next = std::min(target, clock_ + cfg_.tick);
      if (queued_ && speaking_until_ > clock_) next = std::min(next, speaking_until_);
      if (const double due = proactive_time(); due > clock_) next = std::min(next, due);
      step_robot(next - clock_, next);
      clock_ = next;
    }
    return since(first);
  }

  Snapshot snapshot() const {
    Snapshot s;
    s.session_id = id_;
    s.t = clock_;
    s.pose = robot_.pose;
    s.mode = robot_.mode;
    s.goal_exhibit = robot_.goal_exhibit;
    s.speaking = speaking();
    s.visited = suggestion_.visited;
    s.pending_suggestion = pending_;
    if (robot_.active_plan) {
      const auto targets = robot_.active_plan->targets();
      for (std::size_t i = robot_.next_target; i < targets.size(); ++i) s.remaining_path.push_back(targets[i]);
    }
    s.event_count = transcript_.size();
    const std::size_t from = transcript_.size() > kSnapshotEvents ? transcript_.size() - kSnapshotEvents : 0;
    s.last_events.assign(transcript_.begin() + static_cast<std::ptrdiff_t>(from), transcript_.end());
    s.closed = closed_;
    return s;
  }

 private:
  void ensure_open() const {
    if (closed_) throw SessionClosed();
  }

  std::vector<Event> since(std::size_t first) const {
    return {transcript_.begin() + static_cast<std::ptrdiff_t>(first), transcript_.end()};
  }

  void emit(Event e) {
    e.t = std::max(e.t, transcript_.empty() ? e.t : transcript_.back().t);
    transcript_.push_back(std::move(e));
  }

  void emit_error(const std::string& message, std::string_view source) {
    emit({clock_, EventKind::error, {{"message", message}, {"source", source}}, std::nullopt, std::nullopt});
  }

  void speak(const std::string& text, std::string_view source) {
    emit({clock_, EventKind::robot_speech, {{"text", text}, {"source", source}}, std::nullopt, std::nullopt});
    const double start = std::max(clock_, speaking_until_);
    speaking_until_ = start + static_cast<double>(text.size()) / cfg_.speech_rate;
  }

  double proactive_time() const {
    if (speaking()) return std::numeric_limits<double>::infinity();
    return last_activity() + cfg_.silence_threshold;
  }

  // Work due at the current instant: a queued utterance whose speech window
  // ended, then silence-triggered chat.
  void settle() {
    if (queued_ && !speaking()) {
      std::string text = std::move(*queued_);
      queued_.reset();
      process_utterance(std::move(text));
    }
    if (proactive_due(clock_, last_activity(), cfg_.silence_threshold, speaking())) fire_proactive();
  }

  void process_utterance(std::string text) {
    std::optional<Intent> intent;
    std::string classify_error;
    try {
      intent = dialogue_.classify(text);
    } catch (const BackendError& e) {
      classify_error = e.what();
    }
    emit({clock_, EventKind::user_utterance, {{"text", text}}, intent, code_politeness(text)});
    if (!intent) {
      emit_error(classify_error, "classifier");
      speak(std::string(kFallbackSpeech), "fallback");
      return;
    }

    if (pending_ && *intent != Intent::high_level_control && *intent != Intent::low_level_control) {
      switch (interpret_suggestion_response(text, *pending_, &dialogue_.map())) {
        case SuggestionResponse::accept: accept_suggestion(); return;
        case SuggestionResponse::reject: reject_suggestion(); return;
        case SuggestionResponse::none: break;
      }
    }

    Action action = dialogue_.handle(*intent, text, robot_, suggestion_);
    if (action.navigate) pending_.reset();
    execute(action, "utterance");
  }

  void execute(const Action& action, std::string_view origin) {
    if (action.navigate) {
      if (action.navigate->kind == NavGoal::Kind::directional) {
        apply_command(action.navigate->command, origin);
      } else if (!start_navigation(action.navigate->exhibit, origin)) {
        return;
      }
    }
    if (action.speech) speak(*action.speech, action.navigate ? "navigation" : "handler");
    if (action.error) emit_error(*action.error, "dialogue");
  }

  void apply_command(LowLevelCommand cmd, std::string_view origin) {
    const LowLevelResult r = apply_low_level(robot_, cmd, cfg_.motion, dialogue_.map());
    robot_ = r.state;
    emit({clock_, EventKind::nav_command,
          {{"command", to_string(cmd)}, {"origin", origin}, {"blocked", r.blocked}}, std::nullopt, std::nullopt});
  }

  bool start_navigation(int exhibit, std::string_view origin) {
    try {
      Plan plan = plan_path(dialogue_.map(), robot_.pose, exhibit);
      const double seconds = eta(plan, cfg_.motion);
      robot_ = begin_autonomous(robot_, std::move(plan));
      emit({clock_, EventKind::nav_command,
            {{"command", "goto"}, {"exhibit", exhibit}, {"origin", origin}, {"eta", seconds}}, std::nullopt,
            std::nullopt});
      return true;
    } catch (const NoPath& e) {
      speak("I'm sorry, I can't find a way to exhibit " + std::to_string(exhibit) + " from here.", "navigation");
      emit_error(e.what(), "planner");
    } catch (const Error& e) {
      speak("I'm sorry, I can't get to exhibit " + std::to_string(exhibit) + " right now.", "navigation");
      emit_error(e.what(), "planner");
    }
    return false;
  }

  void accept_suggestion() {
    const int id = *pending_;
    pending_.reset();
    if (start_navigation(id, "suggestion")) {
      speak("Great, follow me to " + exhibit_label(dialogue_.map().exhibit(id)) + ".", "navigation");
    }
  }

  void reject_suggestion() {
    pending_.reset();
    speak("No problem. Just tell me where you'd like to go, or ask me about anything you see.", "handler");
  }

  void fire_proactive() {
    std::string error;
    std::string text = dialogue_.proactive(robot_, suggestion_, &error);
    if (!error.empty()) emit_error(error, "proactive");
    std::optional<int> suggested;
    if (robot_.mode != Mode::autonomous) {
      suggested = suggest_next(suggestion_, dialogue_.map().tour_order());
      if (suggested) {
        text += " Would you like to visit " + exhibit_label(dialogue_.map().exhibit(*suggested)) + " next?";
      }
    }
    speak(text, "proactive");
    if (suggested) {
      emit({clock_, EventKind::suggestion, {{"exhibit", *suggested}}, std::nullopt, std::nullopt});
      pending_ = suggested;
      if (cfg_.auto_guide) {
        pending_.reset();
        start_navigation(*suggested, "suggestion");
      }
    }
  }

  void step_robot(double dt, double step_end) {
    TickResult r = tick(robot_, dt, cfg_.motion);
    robot_ = std::move(r.state);
    if (!r.arrived) return;
    const double saved = clock_;
    clock_ = std::min(saved + r.arrived_after, step_end);
    const int id = *r.arrived;
    emit({clock_, EventKind::arrived, {{"exhibit", id}}, std::nullopt, std::nullopt});
    suggestion_.mark_visited(id);
    const Exhibit& e = dialogue_.map().exhibit(id);
    speak("Here we are at " + exhibit_label(e) + ". " + e.intro, "arrival");
    clock_ = saved;
  }

  std::string id_;
  DialogueSystem dialogue_;
  SessionConfig cfg_;
  RobotState robot_;
  SuggestionState suggestion_;
  std::vector<Event> transcript_;
  double clock_ = 0.0;
  double last_user_activity_ = 0.0;
  double speaking_until_ = 0.0;
  std::optional<std::string> queued_;
  std::optional<int> pending_;
  bool closed_ = false;
};

}  // namespace narraguide
