#pragma once

// Uniform access to language-model backends, plus the deterministic
// scripted backend used for tests and offline runs.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "narraguide/error.hpp"

namespace narraguide {

struct GatewayRequest {
  std::string system_text;
  std::string user_text;
  int max_tokens = 256;
  double temperature = 0.2;
  double deadline = 20.0;  // seconds, per attempt
  /// Free-form tag ("inquiry", "classify", ...) that scripted rules may filter on.
  std::string purpose;

  void validate() const {
    if (system_text.empty() || user_text.empty()) throw ValidationError("gateway request texts must be non-empty");
    if (!(deadline > 0.0)) throw ValidationError("gateway request deadline must be > 0");
    if (!(temperature >= 0.0 && temperature <= 2.0)) throw ValidationError("temperature must lie in [0, 2]");
    if (max_tokens <= 0) throw ValidationError("max_tokens must be > 0");
  }
};

inline constexpr double kHandlerTemperature = 0.2;
inline constexpr double kExtractionTemperature = 0.0;

enum class FieldType { integer, number, string, boolean };

struct FieldDescriptor {
  std::string name;
  FieldType type = FieldType::string;
  std::string description;
};

using FieldMap = std::map<std::string, nlohmann::json>;

/// Count of outbound HTTP requests made by any transport in this process.
inline std::atomic<long>& network_request_counter() {
  static std::atomic<long> counter{0};
  return counter;
}

/// One attempt per call; retries live in complete() / extract_structured().
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete_once(const GatewayRequest& req) = 0;
  virtual FieldMap extract_once(const GatewayRequest& req, std::span<const FieldDescriptor> schema) = 0;
};

struct RetryPolicy {
  int max_attempts = 2;
  double base_backoff = 0.25;  // seconds
  double backoff_cap = 1.0;    // seconds
  std::uint32_t seed = 0;
  std::function<void(double)> sleep = [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };

  /// Jittered delay before attempt `attempt` (2-based), never above backoff_cap.
  double backoff(int attempt, std::mt19937& rng) const {
    std::uniform_real_distribution<double> jitter(0.0, 1.0);
    const double d = base_backoff * (attempt - 1) * (1.0 + jitter(rng));
    return std::min(d, backoff_cap);
  }
};

namespace detail {

template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) {
  std::mt19937 rng(policy.seed);
  const int attempts = std::clamp(policy.max_attempts, 1, 2);
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const BackendError&) {
      if (attempt >= attempts) throw;
      if (policy.sleep) policy.sleep(policy.backoff(attempt + 1, rng));
    }
  }
}

/// Validates a field map against a schema; throws ParseFailure naming every
/// missing or mistyped field.
inline FieldMap check_fields(const nlohmann::json& values, std::span<const FieldDescriptor> schema) {
  FieldMap out;
  std::vector<std::string> missing;
  for (const auto& f : schema) {
    if (!values.is_object() || !values.contains(f.name)) {
      missing.push_back(f.name);
      continue;
    }
    const auto& v = values.at(f.name);
    bool ok = false;
    switch (f.type) {
      case FieldType::integer: ok = v.is_number_integer(); break;
      case FieldType::number: ok = v.is_number(); break;
      case FieldType::string: ok = v.is_string(); break;
      case FieldType::boolean: ok = v.is_boolean(); break;
    }
    if (!ok) missing.push_back(f.name);
    else out[f.name] = v;
  }
  if (!missing.empty()) throw ParseFailure(std::move(missing));
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace detail

/// Text completion with at most two attempts and jittered backoff.
inline std::string complete(const GatewayRequest& req, LlmBackend& backend, const RetryPolicy& policy = {}) {
  req.validate();
  return detail::with_retry(policy, [&] {
    std::string text = backend.complete_once(req);
    if (text.empty()) throw BackendError("backend returned an empty completion");
    return text;
  });
}

/// Structured extraction ("function calling"); every schema field is returned
/// or ParseFailure names the missing ones.
inline FieldMap extract_structured(const GatewayRequest& req, std::span<const FieldDescriptor> schema,
                                   LlmBackend& backend, const RetryPolicy& policy = {}) {
  if (schema.empty()) throw ValidationError("extraction schema must not be empty");
  req.validate();
  return detail::with_retry(policy, [&] { return backend.extract_once(req, schema); });
}

// ---------------------------------------------------------------------------

struct ScriptRule {
  std::string match;
  bool regex = false;
  std::string purpose;  // empty matches any purpose
  std::string response;
  std::optional<nlohmann::json> fields;
};

/// Canned responses: the first rule whose pattern occurs in the user text
/// (case-insensitive) wins; otherwise the default response applies.
class ScriptedBackend : public LlmBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptRule> rules = {},
                           std::string default_response = "That's a great question. Let's keep exploring together.")
      : rules_(std::move(rules)), default_(std::move(default_response)) {
    if (default_.empty()) throw ValidationError("scripted backend default response must not be empty");
    for (const auto& r : rules_) {
      if (r.response.empty() && !r.fields) throw ValidationError("scripted rule '" + r.match + "' has no response");
      compiled_.emplace_back(r.regex ? std::optional<std::regex>(std::regex(r.match, std::regex::ECMAScript | std::regex::icase))
                                     : std::nullopt);
    }
  }

  /// Rules document: {"default": text, "rules": [{match, regex?, purpose?, response, fields?}]}.
  static ScriptedBackend from_json(std::string_view document) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("scripted backend file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("scripted backend file must be an object");
    std::vector<ScriptRule> rules;
    try {
      for (const auto& r : doc.value("rules", nlohmann::json::array())) {
        ScriptRule rule;
        rule.match = r.at("match").get<std::string>();
        rule.regex = r.value("regex", false);
        rule.purpose = r.value("purpose", "");
        rule.response = r.value("response", "");
        if (r.contains("fields")) rule.fields = r.at("fields");
        rules.push_back(std::move(rule));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("scripted backend rule: ") + e.what());
    } catch (const std::regex_error& e) {
      throw ParseError(std::string("scripted backend rule regex: ") + e.what());
    }
    std::string def = doc.value("default", std::string("That's a great question. Let's keep exploring together."));
    try {
      return ScriptedBackend(std::move(rules), std::move(def));
    } catch (const std::regex_error& e) {
      throw ParseError(std::string("scripted backend rule regex: ") + e.what());
    }
  }

  const ScriptRule* find(const GatewayRequest& req) const {
    const std::string text = detail::lower(req.user_text);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const ScriptRule& r = rules_[i];
      if (!r.purpose.empty() && r.purpose != req.purpose) continue;
      const bool hit = compiled_[i] ? std::regex_search(req.user_text, *compiled_[i])
                                    : text.find(detail::lower(r.match)) != std::string::npos;
      if (hit) return &r;
    }
    return nullptr;
  }

  std::string complete_once(const GatewayRequest& req) override {
    ++calls_;
    const ScriptRule* r = find(req);
    if (r != nullptr && !r->response.empty()) return r->response;
    return default_;
  }

  FieldMap extract_once(const GatewayRequest& req, std::span<const FieldDescriptor> schema) override {
    ++calls_;
    const ScriptRule* r = find(req);
    nlohmann::json values = nlohmann::json::object();
    if (r != nullptr) {
      if (r->fields) {
        values = *r->fields;
      } else {
        values = nlohmann::json::parse(r->response, nullptr, false);
      }
    }
    return detail::check_fields(values, schema);
  }

  ScriptedBackend(const ScriptedBackend& other)
      : rules_(other.rules_), compiled_(other.compiled_), default_(other.default_), calls_(other.calls_.load()) {}

  long calls() const { return calls_.load(); }

 private:
  std::vector<ScriptRule> rules_;
  std::vector<std::optional<std::regex>> compiled_;
  std::string default_;
  std::atomic<long> calls_{0};
};

}  // namespace narraguide
