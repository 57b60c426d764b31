#pragma once

// Interaction-log coding and statistics: politeness and category tags,
// responses to suggestions, per-session counts and paired t-tests.

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "narraguide/dialogue.hpp"
#include "narraguide/error.hpp"
#include "narraguide/event.hpp"
#include "narraguide/text.hpp"

namespace narraguide {

/// Polite when any softening marker is present, otherwise direct.
inline Politeness code_politeness(std::string_view utterance) {
  const auto toks = text::tokens(utterance);
  const bool polite = text::has_any(toks, {"could you", "can you", "would you", "will you", "please", "may i",
                                           "shall we", "would it be possible"});
  return polite ? Politeness::polite : Politeness::direct;
}

enum class Category { museum_inquiry, robot_control_low, robot_control_high, other };

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::museum_inquiry: return "museum_inquiry";
    case Category::robot_control_low: return "robot_control_low";
    case Category::robot_control_high: return "robot_control_high";
    case Category::other: return "other";
  }
  return "other";
}

inline Category code_category(Intent intent) {
  switch (intent) {
    case Intent::low_level_control: return Category::robot_control_low;
    case Intent::high_level_control: return Category::robot_control_high;
    case Intent::inquiry_about_museum: return Category::museum_inquiry;
    case Intent::comment:
    case Intent::free_chat: return Category::other;
  }
  return Category::other;
}

inline Category code_category(std::string_view /*utterance*/, Intent intent) { return code_category(intent); }

enum class ResponseCode { accept, reject, ignored };

inline std::string_view to_string(ResponseCode r) {
  switch (r) {
    case ResponseCode::accept: return "accept";
    case ResponseCode::reject: return "reject";
    case ResponseCode::ignored: return "ignored";
  }
  return "ignored";
}

struct SuggestionOutcome {
  double t = 0.0;  // time of the suggestion
  int exhibit = 0;
  ResponseCode response = ResponseCode::ignored;
  std::optional<std::size_t> response_event;  // index of the responding utterance
};

/// Codes the first user utterance after each suggestion (and before the next
/// one) as accept or reject; suggestions without a usable reply are ignored.
inline std::vector<SuggestionOutcome> code_suggestion_responses(const std::vector<Event>& events,
                                                                const AnnotatedMap* map = nullptr) {
  std::vector<SuggestionOutcome> out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].kind != EventKind::suggestion) continue;
    SuggestionOutcome o;
    o.t = events[i].t;
    o.exhibit = events[i].payload.at("exhibit").get<int>();
    for (std::size_t j = i + 1; j < events.size(); ++j) {
      if (events[j].kind == EventKind::suggestion) break;
      if (events[j].kind != EventKind::user_utterance) continue;
      const auto r = interpret_suggestion_response(events[j].payload.at("text").get<std::string>(), o.exhibit, map);
      if (r != SuggestionResponse::none) {
        o.response = r == SuggestionResponse::accept ? ResponseCode::accept : ResponseCode::reject;
        o.response_event = j;
      }
      break;
    }
    out.push_back(o);
  }
  return out;
}

struct CodedUtterance {
  double t = 0.0;
  std::string text;
  Category category = Category::other;
  Politeness politeness = Politeness::direct;
  std::optional<ResponseCode> suggestion_response;
};

/// Codes every user utterance in a transcript. Utterances logged without an
/// intent are classified with the rule-based classifier.
inline std::vector<CodedUtterance> code_utterances(const std::vector<Event>& events, const AnnotatedMap* map = nullptr) {
  RuleBasedClassifier fallback = map != nullptr ? RuleBasedClassifier(*map) : RuleBasedClassifier();
  const auto outcomes = code_suggestion_responses(events, map);
  std::vector<CodedUtterance> out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.kind != EventKind::user_utterance) continue;
    CodedUtterance c;
    c.t = e.t;
    c.text = e.payload.at("text").get<std::string>();
    Intent intent = Intent::free_chat;
    if (e.intent) intent = *e.intent;
    else if (!text::trim(c.text).empty()) intent = fallback.classify(c.text);
    c.category = code_category(c.text, intent);
    c.politeness = code_politeness(c.text);
    for (const auto& o : outcomes) {
      if (o.response_event == i) c.suggestion_response = o.response;
    }
    out.push_back(std::move(c));
  }
  return out;
}

struct SessionStats {
  int n_accept = 0;
  int n_reject = 0;
  int n_ignored = 0;
  int n_inquiry = 0;
  int n_control = 0;
  int n_low = 0;
  int n_high = 0;
  int n_polite = 0;
  int n_direct = 0;
};

inline SessionStats session_stats(const std::vector<CodedUtterance>& coded,
                                  const std::vector<SuggestionOutcome>& outcomes) {
  SessionStats s;
  for (const auto& c : coded) {
    switch (c.category) {
      case Category::museum_inquiry: ++s.n_inquiry; break;
      case Category::robot_control_low: ++s.n_low; break;
      case Category::robot_control_high: ++s.n_high; break;
      case Category::other: break;
    }
    (c.politeness == Politeness::polite ? s.n_polite : s.n_direct)++;
  }
  s.n_control = s.n_low + s.n_high;
  for (const auto& o : outcomes) {
    switch (o.response) {
      case ResponseCode::accept: ++s.n_accept; break;
      case ResponseCode::reject: ++s.n_reject; break;
      case ResponseCode::ignored: ++s.n_ignored; break;
    }
  }
  return s;
}

inline nlohmann::json stats_to_json(const SessionStats& s) {
  return {{"n_accept", s.n_accept}, {"n_reject", s.n_reject}, {"n_ignored", s.n_ignored},
          {"n_inquiry", s.n_inquiry}, {"n_control", s.n_control}, {"n_low", s.n_low},
          {"n_high", s.n_high}, {"n_polite", s.n_polite}, {"n_direct", s.n_direct}};
}

// ---------------------------------------------------------------------------
// Paired t-test

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t_distribution<double> dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

struct PairedTTest {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  double t_stat = 0.0;
  std::size_t df = 0;
  double p_two_sided = 1.0;
};

inline PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw LengthMismatch("paired samples differ in length (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
  const std::size_t n = a.size();
  if (n < 2) throw DegenerateSample("paired t-test needs at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw DegenerateSample("differences have zero variance");

  PairedTTest r;
  r.n = n;
  r.mean_diff = mean;
  r.sd_diff = sd;
  r.t_stat = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.df = n - 1;
  r.p_two_sided = student_t_two_sided_p(r.t_stat, static_cast<double>(r.df));
  return r;
}

inline nlohmann::json ttest_to_json(const PairedTTest& r) {
  return {{"n", r.n}, {"mean_diff", r.mean_diff}, {"sd_diff", r.sd_diff},
          {"t", r.t_stat}, {"df", r.df}, {"p", r.p_two_sided}};
}

// ---------------------------------------------------------------------------
// Timeline

enum class CategoryGroup { navigational, conversational, other };

inline std::string_view to_string(CategoryGroup g) {
  switch (g) {
    case CategoryGroup::navigational: return "navigational";
    case CategoryGroup::conversational: return "conversational";
    case CategoryGroup::other: return "other";
  }
  return "other";
}

inline CategoryGroup category_group(Category c) {
  switch (c) {
    case Category::robot_control_low:
    case Category::robot_control_high: return CategoryGroup::navigational;
    case Category::museum_inquiry: return CategoryGroup::conversational;
    case Category::other: return CategoryGroup::other;
  }
  return CategoryGroup::other;
}

/// Timeline rows {t, category_group, category, politeness}, sorted by t.
inline nlohmann::json export_timeline(std::vector<CodedUtterance> coded) {
  std::stable_sort(coded.begin(), coded.end(), [](const auto& x, const auto& y) { return x.t < y.t; });
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : coded) {
    rows.push_back({{"t", c.t},
                    {"category_group", to_string(category_group(c.category))},
                    {"category", to_string(c.category)},
                    {"politeness", to_string(c.politeness)}});
  }
  return rows;
}

}  // namespace narraguide
