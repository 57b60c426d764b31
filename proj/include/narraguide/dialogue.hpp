#pragma once

// Location-aware dialogue: intent classification, navigation-goal
// extraction, tour suggestions, prompt assembly and intent handlers.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "narraguide/error.hpp"
#include "narraguide/llm_gateway.hpp"
#include "narraguide/navsim.hpp"
#include "narraguide/text.hpp"
#include "narraguide/worldmap.hpp"

namespace narraguide {

enum class Intent { inquiry_about_museum, comment, free_chat, low_level_control, high_level_control };

inline constexpr std::array<Intent, 5> kAllIntents = {Intent::inquiry_about_museum, Intent::comment, Intent::free_chat,
                                                      Intent::low_level_control, Intent::high_level_control};

inline std::string_view to_string(Intent i) {
  switch (i) {
    case Intent::inquiry_about_museum: return "inquiry_about_museum";
    case Intent::comment: return "comment";
    case Intent::free_chat: return "free_chat";
    case Intent::low_level_control: return "low_level_control";
    case Intent::high_level_control: return "high_level_control";
  }
  return "free_chat";
}

inline std::optional<Intent> parse_intent(std::string_view s) {
  for (Intent i : kAllIntents) {
    if (to_string(i) == s) return i;
  }
  return std::nullopt;
}

inline bool is_conversational(Intent i) {
  return i == Intent::inquiry_about_museum || i == Intent::comment || i == Intent::free_chat;
}

// ---------------------------------------------------------------------------
// Lexicon

namespace lexicon {

/// Directional command named in the utterance, if any.
inline std::optional<LowLevelCommand> directional(const std::vector<std::string>& toks) {
  using text::has_any;
  if (has_any(toks, {"stop", "halt", "freeze"})) return LowLevelCommand::stop;
  const bool steer = has_any(toks, {"turn", "rotate", "go", "move", "look", "spin", "veer"});
  if (steer && text::has_word(toks, "left")) return LowLevelCommand::turn_left;
  if (steer && text::has_word(toks, "right")) return LowLevelCommand::turn_right;
  if (has_any(toks, {"backward", "backwards", "back up", "move back", "go back", "reverse"})) {
    return LowLevelCommand::backward;
  }
  if (has_any(toks, {"forward", "forwards", "closer", "straight ahead"})) return LowLevelCommand::forward;
  return std::nullopt;
}

inline bool motion_verb(const std::vector<std::string>& toks) {
  return text::has_any(toks, {"go", "take", "show", "bring", "move on", "navigate", "lead", "guide", "head",
                              "visit", "walk"});
}

/// Exhibit number mentioned as digits anywhere, or as a number word after
/// "exhibit"/"number"/"case".
inline std::optional<int> exhibit_number(const std::vector<std::string>& toks) {
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::string& t = toks[i];
    if (!t.empty() && std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
      return text::number_at(toks, i);
    }
    if ((t == "exhibit" || t == "number" || t == "case") && i + 1 < toks.size()) {
      if (auto n = text::number_at(toks, i + 1)) return n;
    }
  }
  return std::nullopt;
}

inline bool interrogative(std::string_view raw, const std::vector<std::string>& toks) {
  if (raw.find('?') != std::string_view::npos) return true;
  static const std::set<std::string, std::less<>> kLeading = {
      "what", "whats", "where", "wheres", "when", "why", "how", "hows", "who", "whos", "whose", "which",
      "is", "are", "was", "were", "does", "do", "did", "can", "could", "would", "will", "should",
      "tell", "explain", "describe"};
  if (!toks.empty() && kLeading.contains(toks.front())) return true;
  return text::has_any(toks, {"tell me", "explain", "describe", "i wonder"});
}

inline bool affirmative(const std::vector<std::string>& toks) {
  return text::has_any(toks, {"yes", "yeah", "yep", "sure", "ok", "okay", "sounds good", "lets go", "go ahead",
                              "alright", "all right", "of course", "definitely", "why not", "take me there"});
}

inline bool negative(const std::vector<std::string>& toks) {
  return text::has_any(toks, {"no", "nope", "not now", "no thanks", "maybe later", "skip", "rather not",
                              "not really", "dont", "later"});
}

inline const std::set<std::string, std::less<>>& museum_words() {
  static const std::set<std::string, std::less<>> kWords = {
      "exhibit", "exhibits", "museum", "mineral", "minerals", "rock", "rocks", "fossil", "fossils", "fossilized",
      "crystal", "crystals", "stone", "stones", "geology", "geologic", "geological", "geologist", "igneous",
      "sedimentary", "metamorphic", "magma", "lava", "ore", "ores", "specimen", "specimens", "granite", "quartz",
      "galena", "pyrite", "calcite", "sulfur", "dinosaur", "dinosaurs", "meteorite", "meteorites", "glacier",
      "glaciers", "glacial", "sandstone", "limestone", "shale", "erosion", "volcano", "volcanic", "layer", "layers",
      "display", "gallery", "collection", "mining", "miners", "mined", "iron", "lead", "gold", "trilobite",
      "trilobites", "mastodon", "mammoth", "crinoid", "crinoids", "bones", "teeth", "ancient", "million", "billion",
      "formed", "formation", "ice", "age", "animal", "animals", "track", "tracks", "trace", "traces",
      "footprint", "footprints", "tooth", "shell", "shells", "extinct", "boulder", "boulders"};
  return kWords;
}

}  // namespace lexicon

// ---------------------------------------------------------------------------
// Classification

class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual Intent classify(std::string_view utterance) = 0;
};

/// Deterministic keyword classifier. Precedence: low-level control,
/// high-level control, inquiry, comment, free chat.
class RuleBasedClassifier : public ClassifierBackend {
 public:
  RuleBasedClassifier() = default;
  explicit RuleBasedClassifier(const AnnotatedMap& map) {
    static const std::set<std::string, std::less<>> kSkip = {"the", "and", "with", "from", "this", "that", "tooth"};
    auto add_name = [&](const std::string& name) {
      const std::string n = text::normalize(name);
      if (!n.empty()) place_names_.push_back(n);
      for (const auto& w : text::split(n)) {
        if (w.size() >= 4 && !kSkip.contains(w)) vocabulary_.insert(w);
      }
    };
    for (const auto& e : map.exhibits()) add_name(e.name);
    for (const auto& a : map.areas()) add_name(a.name);
  }

  Intent classify(std::string_view utterance) override {
    if (text::trim(utterance).empty()) throw EmptyUtterance();
    const auto toks = text::tokens(utterance);
    if (toks.empty()) return Intent::free_chat;

    const bool place = place_reference(toks);
    if (!place && lexicon::directional(toks)) return Intent::low_level_control;
    if (lexicon::motion_verb(toks) && (place || text::has_any(toks, {"next", "around"}))) {
      return Intent::high_level_control;
    }
    if (bare_next(toks)) return Intent::high_level_control;
    const bool museum = museum_vocabulary(toks);
    if (museum && lexicon::interrogative(utterance, toks)) return Intent::inquiry_about_museum;
    if (museum) return Intent::comment;
    return Intent::free_chat;
  }

  bool place_reference(const std::vector<std::string>& toks) const {
    if (text::has_any(toks, {"exhibit", "exhibits"}) || lexicon::exhibit_number(toks)) return true;
    return std::any_of(place_names_.begin(), place_names_.end(),
                       [&](const std::string& n) { return text::has_phrase(toks, n); });
  }

  bool museum_vocabulary(const std::vector<std::string>& toks) const {
    return std::any_of(toks.begin(), toks.end(), [&](const std::string& t) {
      return lexicon::museum_words().contains(t) || vocabulary_.contains(t);
    });
  }

 private:
  // "next", "next one", "the next exhibit please", ...
  static bool bare_next(const std::vector<std::string>& toks) {
    static const std::set<std::string, std::less<>> kFiller = {"the", "please", "ok", "okay", "one", "exhibit", "now"};
    if (!text::has_word(toks, "next")) return false;
    return std::all_of(toks.begin(), toks.end(), [](const std::string& t) { return t == "next" || kFiller.contains(t); });
  }

  std::set<std::string, std::less<>> vocabulary_;
  std::vector<std::string> place_names_;
};

/// Classification by a language model that must answer with one label.
class LlmClassifier : public ClassifierBackend {
 public:
  explicit LlmClassifier(std::shared_ptr<LlmBackend> backend, RetryPolicy policy = {})
      : backend_(std::move(backend)), policy_(std::move(policy)) {}

  Intent classify(std::string_view utterance) override {
    if (text::trim(utterance).empty()) throw EmptyUtterance();
    GatewayRequest req;
    req.purpose = "classify";
    req.temperature = kExtractionTemperature;
    req.max_tokens = 8;
    req.system_text =
        "Classify the museum visitor's message into exactly one label and reply with the label only.\n"
        "Labels: inquiry_about_museum, comment, free_chat, low_level_control, high_level_control.\n"
        "low_level_control: directional driving such as turn left, move forward, stop.\n"
        "high_level_control: going to an exhibit or being guided, such as go to exhibit 10, show me around.\n"
        "inquiry_about_museum: questions about exhibits, rocks, minerals or fossils.\n"
        "comment: statements about the exhibits. free_chat: anything else.";
    req.user_text = std::string(utterance);
    return detail::with_retry(policy_, [&] {
      const std::string reply = text::trim(backend_->complete_once(req));
      if (auto intent = parse_intent(reply)) return *intent;
      throw BackendError("classifier returned an invalid label: '" + reply + "'");
    });
  }

 private:
  std::shared_ptr<LlmBackend> backend_;
  RetryPolicy policy_;
};

// ---------------------------------------------------------------------------
// Goals and suggestions

struct NavGoal {
  enum class Kind { specific_exhibit, next, show_around, directional };
  Kind kind = Kind::show_around;
  int exhibit = 0;
  LowLevelCommand command = LowLevelCommand::stop;

  static NavGoal specific(int id) { return {Kind::specific_exhibit, id, LowLevelCommand::stop}; }
  static NavGoal next_exhibit() { return {Kind::next, 0, LowLevelCommand::stop}; }
  static NavGoal around() { return {Kind::show_around, 0, LowLevelCommand::stop}; }
  static NavGoal direction(LowLevelCommand c) { return {Kind::directional, 0, c}; }
  friend bool operator==(const NavGoal&, const NavGoal&) = default;
};

struct SuggestionState {
  std::vector<int> visited;  // arrival order, no duplicates
  std::optional<int> last_suggested;

  bool is_visited(int id) const { return std::find(visited.begin(), visited.end(), id) != visited.end(); }
  /// Returns false when the exhibit was already visited.
  bool mark_visited(int id) {
    if (is_visited(id)) return false;
    visited.push_back(id);
    return true;
  }
};

/// First tour-order exhibit not yet visited, or nullopt once the tour is
/// complete. Records the suggestion.
inline std::optional<int> suggest_next(SuggestionState& state, const std::vector<int>& tour_order) {
  for (int id : tour_order) {
    if (!state.is_visited(id)) {
      state.last_suggested = id;
      return id;
    }
  }
  return std::nullopt;
}

namespace detail {

/// Exhibits whose full name occurs as a whole-word phrase in the utterance.
inline std::vector<int> name_matches(const AnnotatedMap& map, const std::vector<std::string>& toks) {
  std::vector<int> ids;
  for (const auto& e : map.exhibits()) {
    if (text::has_phrase(toks, e.name)) ids.push_back(e.id);
  }
  return ids;
}

/// Explicit exhibit reference by number or unique name.
inline std::optional<int> referenced_exhibit(const AnnotatedMap& map, const std::vector<std::string>& toks) {
  if (auto n = lexicon::exhibit_number(toks)) return n;
  auto ids = name_matches(map, toks);
  if (ids.size() == 1) return ids.front();
  return std::nullopt;
}

}  // namespace detail

class GoalExtractor {
 public:
  virtual ~GoalExtractor() = default;
  /// Goal for a high-level control utterance.
  virtual NavGoal extract_high_level(std::string_view utterance, const SuggestionState& suggestion) = 0;
};

/// Exhibit numbers and names are matched against the map; area names pick
/// the first unvisited exhibit of that area in tour order.
class RuleBasedGoalExtractor : public GoalExtractor {
 public:
  explicit RuleBasedGoalExtractor(std::shared_ptr<const AnnotatedMap> map) : map_(std::move(map)) {}

  NavGoal extract_high_level(std::string_view utterance, const SuggestionState& suggestion) override {
    const auto toks = text::tokens(utterance);
    if (auto n = lexicon::exhibit_number(toks)) {
      if (map_->find_exhibit(*n) == nullptr) throw UnknownExhibit(*n);
      return NavGoal::specific(*n);
    }
    const auto ids = detail::name_matches(*map_, toks);
    if (ids.size() > 1) throw AmbiguousGoal(ids);
    if (ids.size() == 1) return NavGoal::specific(ids.front());
    for (const auto& area : map_->areas()) {
      if (!text::has_phrase(toks, area.name)) continue;
      std::optional<int> first;
      for (int id : map_->tour_order()) {
        if (map_->exhibit(id).area_id != area.id) continue;
        if (!first) first = id;
        if (!suggestion.is_visited(id)) return NavGoal::specific(id);
      }
      if (first) return NavGoal::specific(*first);
    }
    if (text::has_word(toks, "next")) return NavGoal::next_exhibit();
    return NavGoal::around();
  }

 private:
  std::shared_ptr<const AnnotatedMap> map_;
};

/// Goal extraction through the backend's structured-output call.
class LlmGoalExtractor : public GoalExtractor {
 public:
  LlmGoalExtractor(std::shared_ptr<const AnnotatedMap> map, std::shared_ptr<LlmBackend> backend, RetryPolicy policy = {})
      : map_(std::move(map)), backend_(std::move(backend)), policy_(std::move(policy)) {}

  static const std::vector<FieldDescriptor>& schema() {
    static const std::vector<FieldDescriptor> kSchema = {
        {"goal_kind", FieldType::string, "one of: exhibit, next, around"},
        {"exhibit_number", FieldType::integer, "exhibit number when goal_kind is exhibit, otherwise 0"}};
    return kSchema;
  }

  NavGoal extract_high_level(std::string_view utterance, const SuggestionState&) override {
    GatewayRequest req;
    req.purpose = "extract";
    req.temperature = kExtractionTemperature;
    req.system_text =
        "Identify where the museum visitor wants the robot to go. Use goal_kind 'exhibit' with the exhibit "
        "number for a specific exhibit, 'next' for the next exhibit, and 'around' for open-ended guidance.";
    req.user_text = std::string(utterance);
    const FieldMap fields = extract_structured(req, schema(), *backend_, policy_);
    const auto kind = fields.at("goal_kind").get<std::string>();
    if (kind == "exhibit") {
      const int n = fields.at("exhibit_number").get<int>();
      if (map_->find_exhibit(n) == nullptr) throw UnknownExhibit(n);
      return NavGoal::specific(n);
    }
    if (kind == "next") return NavGoal::next_exhibit();
    return NavGoal::around();
  }

 private:
  std::shared_ptr<const AnnotatedMap> map_;
  std::shared_ptr<LlmBackend> backend_;
  RetryPolicy policy_;
};

/// Goal for a navigational utterance. Low-level goals never consult a backend.
inline NavGoal extract_goal(std::string_view utterance, Intent intent, const SuggestionState& suggestion,
                            GoalExtractor& extractor) {
  if (intent == Intent::low_level_control) {
    const auto cmd = lexicon::directional(text::tokens(utterance));
    return NavGoal::direction(cmd.value_or(LowLevelCommand::stop));
  }
  return extractor.extract_high_level(utterance, suggestion);
}

enum class SuggestionResponse { accept, reject, none };

/// Reads an utterance as a response to a pending suggestion of `suggested`.
inline SuggestionResponse interpret_suggestion_response(std::string_view utterance, int suggested,
                                                        const AnnotatedMap* map = nullptr) {
  const auto toks = text::tokens(utterance);
  if (auto n = lexicon::exhibit_number(toks)) {
    return *n == suggested ? SuggestionResponse::accept : SuggestionResponse::reject;
  }
  if (map != nullptr) {
    const auto ids = detail::name_matches(*map, toks);
    if (!ids.empty()) {
      return std::find(ids.begin(), ids.end(), suggested) != ids.end() ? SuggestionResponse::accept
                                                                        : SuggestionResponse::reject;
    }
  }
  if (lexicon::negative(toks)) return SuggestionResponse::reject;
  if (lexicon::affirmative(toks)) return SuggestionResponse::accept;
  if (text::has_word(toks, "next") || text::has_phrase(toks, "show me around")) return SuggestionResponse::accept;
  if (lexicon::directional(toks)) return SuggestionResponse::reject;
  return SuggestionResponse::none;
}

// ---------------------------------------------------------------------------
// Prompts

/// Template with {{name}} placeholders and {{#name}}...{{/name}} blocks that
/// render only when `name` is non-empty.
class PromptTemplate {
 public:
  static inline const std::vector<std::string> kPlaceholders = {
      "preamble", "current_exhibit_intro", "sample_dialogue", "area_text", "nearby_intros", "visit_history",
      "user_utterance"};

  explicit PromptTemplate(std::string source) : source_(std::move(source)) { parse(); }

  static const PromptTemplate& standard() {
    static const PromptTemplate kStandard(
        "{{preamble}}\n"
        "{{#current_exhibit_intro}}\n"
        "The visitor is looking at, or heading to, this exhibit:\n"
        "{{current_exhibit_intro}}\n"
        "{{/current_exhibit_intro}}"
        "{{#sample_dialogue}}\n"
        "A sample conversation about this exhibit between a guide and a visitor:\n"
        "{{sample_dialogue}}\n"
        "{{/sample_dialogue}}"
        "{{#area_text}}\n"
        "The area the visitor is in:\n"
        "{{area_text}}\n"
        "{{/area_text}}"
        "{{#nearby_intros}}\n"
        "Other exhibits nearby:\n"
        "{{nearby_intros}}\n"
        "{{/nearby_intros}}"
        "{{#visit_history}}\n"
        "Exhibits already visited: {{visit_history}}\n"
        "{{/visit_history}}"
        "{{#user_utterance}}\n"
        "The visitor says: {{user_utterance}}\n"
        "{{/user_utterance}}");
    return kStandard;
  }

  std::string render(const std::map<std::string, std::string>& values) const {
    std::string out;
    render_nodes(nodes_, values, out);
    return out;
  }

  const std::string& source() const { return source_; }

 private:
  struct Node {
    enum class Kind { literal, value, block } kind = Kind::literal;
    std::string text;  // literal text or placeholder name
    std::vector<Node> children;
  };

  void parse() {
    std::vector<std::vector<Node>*> stack{&nodes_};
    std::vector<std::string> open;
    std::size_t pos = 0;
    while (pos < source_.size()) {
      const auto start = source_.find("{{", pos);
      if (start == std::string::npos) {
        stack.back()->push_back({Node::Kind::literal, source_.substr(pos), {}});
        break;
      }
      if (start > pos) stack.back()->push_back({Node::Kind::literal, source_.substr(pos, start - pos), {}});
      const auto end = source_.find("}}", start);
      if (end == std::string::npos) throw ParseError("prompt template: unterminated placeholder");
      std::string tag = text::trim(source_.substr(start + 2, end - start - 2));
      pos = end + 2;
      if (!tag.empty() && (tag[0] == '#' || tag[0] == '/')) {
        const std::string name = text::trim(tag.substr(1));
        check_name(name);
        if (tag[0] == '#') {
          stack.back()->push_back({Node::Kind::block, name, {}});
          stack.push_back(&stack.back()->back().children);
          open.push_back(name);
        } else {
          if (open.empty() || open.back() != name) throw ParseError("prompt template: mismatched {{/" + name + "}}");
          open.pop_back();
          stack.pop_back();
        }
      } else {
        check_name(tag);
        stack.back()->push_back({Node::Kind::value, tag, {}});
      }
    }
    if (!open.empty()) throw ParseError("prompt template: unclosed {{#" + open.back() + "}}");
  }

  static void check_name(const std::string& name) {
    if (std::find(kPlaceholders.begin(), kPlaceholders.end(), name) == kPlaceholders.end()) {
      throw ParseError("prompt template: unknown placeholder '" + name + "'");
    }
  }

  static void render_nodes(const std::vector<Node>& nodes, const std::map<std::string, std::string>& values,
                           std::string& out) {
    for (const auto& n : nodes) {
      switch (n.kind) {
        case Node::Kind::literal: out += n.text; break;
        case Node::Kind::value: {
          auto it = values.find(n.text);
          if (it != values.end()) out += it->second;
          break;
        }
        case Node::Kind::block: {
          auto it = values.find(n.text);
          if (it != values.end() && !it->second.empty()) render_nodes(n.children, values, out);
          break;
        }
      }
    }
  }

  std::string source_;
  std::vector<Node> nodes_;
};

struct PromptBundle {
  std::string preamble;
  std::string current_exhibit_intro;
  std::string sample_dialogue;
  std::string area_text;
  std::vector<std::string> nearby_intros;
  std::vector<int> visit_history;
  std::string user_utterance;

  std::map<std::string, std::string> values() const {
    std::string nearby;
    for (const auto& s : nearby_intros) nearby += (nearby.empty() ? "" : "\n") + s;
    std::string history;
    for (int id : visit_history) history += (history.empty() ? "" : ", ") + std::to_string(id);
    return {{"preamble", preamble},
            {"current_exhibit_intro", current_exhibit_intro},
            {"sample_dialogue", sample_dialogue},
            {"area_text", area_text},
            {"nearby_intros", nearby},
            {"visit_history", history},
            {"user_utterance", user_utterance}};
  }

  std::string render(const PromptTemplate& tmpl = PromptTemplate::standard()) const { return tmpl.render(values()); }
};

inline std::string_view preamble_for(Intent intent) {
  switch (intent) {
    case Intent::inquiry_about_museum:
      return "You are a friendly tour guide in a geology museum, talking with a remote visitor who explores "
             "through a mobile robot. Answer the visitor's question using the exhibit information below, keep it "
             "to a few sentences, and then ask about their own experience with geology.";
    case Intent::comment:
      return "You are a friendly tour guide in a geology museum, talking with a remote visitor who explores "
             "through a mobile robot. Respond to the visitor's remark using the exhibit information below, "
             "confirm or gently correct it, and add one interesting fact.";
    default:
      return "You are a friendly tour guide in a geology museum, talking with a remote visitor who explores "
             "through a mobile robot. Chat naturally and briefly, and when it fits, connect the conversation "
             "back to the exhibits described below.";
  }
}

inline constexpr std::string_view kProactivePreamble =
    "You are a friendly tour guide in a geology museum. The remote visitor has been quiet for a while. Start a "
    "short, warm social chat: ask about their interest in geology or pose a question about the exhibit below.";

inline constexpr std::string_view kFallbackSpeech = "Sorry, I didn't catch that. Could you say it again?";

inline std::string exhibit_label(const Exhibit& e) { return "exhibit " + std::to_string(e.id) + ", " + e.name; }

inline std::string render_dialogue(const std::vector<DialogueTurn>& turns) {
  std::string out;
  for (const auto& t : turns) {
    if (!out.empty()) out += '\n';
    out += (t.speaker == Speaker::guide ? "Tour Guide: " : "Visitor: ") + t.text;
  }
  return out;
}

struct DialogueConfig {
  double docking_radius = 1.0;  // meters from a viewing pose that counts as "at" the exhibit
};

/// Exhibit the conversation is about: one named in the utterance, else the
/// navigation goal, else the closest exhibit within the docking radius.
inline const Exhibit* focus_exhibit(const AnnotatedMap& map, std::string_view utterance, const RobotState& robot,
                                    const DialogueConfig& cfg = {}) {
  if (auto id = detail::referenced_exhibit(map, text::tokens(utterance))) {
    if (const Exhibit* e = map.find_exhibit(*id)) return e;
  }
  if (robot.goal_exhibit) {
    if (const Exhibit* e = map.find_exhibit(*robot.goal_exhibit)) return e;
  }
  const Exhibit* best = nullptr;
  double best_d = 0.0;
  for (const auto& e : map.exhibits()) {
    const double d = distance(robot.pose.position(), e.viewing_pose.position());
    if (d > cfg.docking_radius) continue;
    if (best == nullptr || d < best_d || (d == best_d && e.id < best->id)) {
      best = &e;
      best_d = d;
    }
  }
  return best;
}

inline PromptBundle assemble_bundle(std::string_view preamble, const Exhibit* current, std::string_view utterance,
                                    const AnnotatedMap& map, const RobotState& robot, const SuggestionState& suggestion) {
  PromptBundle b;
  b.preamble = std::string(preamble);
  if (current != nullptr) {
    b.current_exhibit_intro = "Exhibit " + std::to_string(current->id) + " (" + current->name + "): " + current->intro;
    b.sample_dialogue = render_dialogue(current->sample_dialogue);
  }
  const Area& area = map.area_of(robot.pose);
  b.area_text = area.description.empty() ? area.name : area.name + ". " + area.description;
  for (const Exhibit* e : map.nearby_exhibits(robot.pose)) {
    if (current != nullptr && e->id == current->id) continue;
    b.nearby_intros.push_back("Exhibit " + std::to_string(e->id) + " (" + e->name + "): " + e->intro);
  }
  b.visit_history = suggestion.visited;
  b.user_utterance = std::string(utterance);
  return b;
}

/// Prompt for a conversational intent, grounded in the robot's location.
inline PromptBundle build_prompt(Intent intent, std::string_view utterance, const AnnotatedMap& map,
                                 const RobotState& robot, const SuggestionState& suggestion,
                                 const DialogueConfig& cfg = {}) {
  if (!is_conversational(intent)) throw ValidationError("build_prompt requires a conversational intent");
  return assemble_bundle(preamble_for(intent), focus_exhibit(map, utterance, robot, cfg), utterance, map, robot,
                         suggestion);
}

/// True once the silence since the last activity reaches `threshold`, unless
/// the robot is talking.
inline bool proactive_due(double now, double last_activity, double threshold, bool speaking = false,
                          bool transit_narration = false) {
  if (speaking || transit_narration) return false;
  return now >= last_activity + threshold;
}

// ---------------------------------------------------------------------------
// Handlers

struct Action {
  std::optional<std::string> speech;
  std::optional<NavGoal> navigate;  // specific_exhibit or directional after handling
  std::optional<std::string> error;
};

/// Classifies and answers utterances. Holds no per-session state.
class DialogueSystem {
 public:
  DialogueSystem(std::shared_ptr<const AnnotatedMap> map, std::shared_ptr<ClassifierBackend> classifier,
                 std::shared_ptr<GoalExtractor> extractor, std::shared_ptr<LlmBackend> gateway,
                 PromptTemplate tmpl = PromptTemplate::standard(), RetryPolicy policy = {}, DialogueConfig cfg = {})
      : map_(std::move(map)), classifier_(std::move(classifier)), extractor_(std::move(extractor)),
        gateway_(std::move(gateway)), template_(std::move(tmpl)), policy_(std::move(policy)), cfg_(cfg) {}

  /// Offline default: rule-based classifier and extractor over `gateway`.
  static DialogueSystem with_rules(std::shared_ptr<const AnnotatedMap> map, std::shared_ptr<LlmBackend> gateway,
                                   PromptTemplate tmpl = PromptTemplate::standard(), RetryPolicy policy = {}) {
    auto classifier = std::make_shared<RuleBasedClassifier>(*map);
    auto extractor = std::make_shared<RuleBasedGoalExtractor>(map);
    return DialogueSystem(map, classifier, extractor, std::move(gateway), std::move(tmpl), std::move(policy));
  }

  const AnnotatedMap& map() const { return *map_; }
  const std::shared_ptr<const AnnotatedMap>& map_ptr() const { return map_; }

  Intent classify(std::string_view utterance) { return classifier_->classify(utterance); }

  Action handle(Intent intent, std::string_view utterance, const RobotState& robot, SuggestionState& suggestion) {
    Action a;
    if (intent == Intent::low_level_control) {
      a.navigate = extract_goal(utterance, intent, suggestion, *extractor_);
      return a;
    }
    if (intent == Intent::high_level_control) {
      try {
        return navigate_to(extract_goal(utterance, intent, suggestion, *extractor_), suggestion);
      } catch (const UnknownExhibit& e) {
        a.speech = "I'm sorry, I couldn't find exhibit " + std::to_string(e.id()) + " on this tour.";
        a.error = e.what();
      } catch (const AmbiguousGoal& e) {
        std::string names;
        for (int id : e.candidates()) {
          names += (names.empty() ? "" : " or ") + exhibit_label(map_->exhibit(id));
        }
        a.speech = "Did you mean " + names + "?";
        a.error = e.what();
      } catch (const BackendError& e) {
        a.speech = std::string(kFallbackSpeech);
        a.error = e.what();
      }
      return a;
    }
    const PromptBundle bundle = build_prompt(intent, utterance, *map_, robot, suggestion, cfg_);
    GatewayRequest req;
    req.purpose = std::string(to_string(intent));
    req.temperature = kHandlerTemperature;
    req.system_text = bundle.render(template_);
    req.user_text = std::string(utterance);
    try {
      a.speech = complete(req, *gateway_, policy_);
    } catch (const BackendError& e) {
      a.speech = std::string(kFallbackSpeech);
      a.error = e.what();
    }
    return a;
  }

  /// Resolves next/show-around through the tour order.
  Action navigate_to(NavGoal goal, SuggestionState& suggestion) {
    Action a;
    if (goal.kind == NavGoal::Kind::next || goal.kind == NavGoal::Kind::show_around) {
      auto id = suggest_next(suggestion, map_->tour_order());
      if (!id) {
        a.speech = "We have seen every exhibit on the tour. Is there anything you'd like to revisit?";
        return a;
      }
      const Exhibit& e = map_->exhibit(*id);
      a.speech = suggestion.visited.empty() ? "Let's start with " + exhibit_label(e) + ". Follow me!"
                                            : "Let's head to " + exhibit_label(e) + " next. Follow me!";
      a.navigate = NavGoal::specific(*id);
      return a;
    }
    const Exhibit& e = map_->exhibit(goal.exhibit);
    a.speech = "Sure, let's go to " + exhibit_label(e) + ".";
    a.navigate = goal;
    return a;
  }

  /// Robot-initiated social chat seeded with the nearest unvisited exhibit.
  std::string proactive(const RobotState& robot, const SuggestionState& suggestion, std::string* error = nullptr) {
    const Exhibit* seed = nullptr;
    double best = 0.0;
    for (const auto& e : map_->exhibits()) {
      if (suggestion.is_visited(e.id)) continue;
      const double d = distance(robot.pose.position(), e.viewing_pose.position());
      if (seed == nullptr || d < best || (d == best && e.id < seed->id)) {
        seed = &e;
        best = d;
      }
    }
    const PromptBundle bundle =
        assemble_bundle(kProactivePreamble, seed, "", *map_, robot, suggestion);
    GatewayRequest req;
    req.purpose = "proactive";
    req.temperature = kHandlerTemperature;
    req.system_text = bundle.render(template_);
    req.user_text = "(The visitor has been quiet for a while.)";
    try {
      return complete(req, *gateway_, policy_);
    } catch (const BackendError& e) {
      if (error != nullptr) *error = e.what();
      return "Are you enjoying the museum so far? Have you ever collected rocks or fossils yourself?";
    }
  }

 private:
  std::shared_ptr<const AnnotatedMap> map_;
  std::shared_ptr<ClassifierBackend> classifier_;
  std::shared_ptr<GoalExtractor> extractor_;
  std::shared_ptr<LlmBackend> gateway_;
  PromptTemplate template_;
  RetryPolicy policy_;
  DialogueConfig cfg_;
};

}  // namespace narraguide
