#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace narraguide {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  /// 1-based line number, or 0 when the error is not line oriented.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class OutOfBounds : public Error {
 public:
  using Error::Error;
};

class OccupiedCell : public Error {
 public:
  using Error::Error;
};

class NoPath : public Error {
 public:
  using Error::Error;
};

class UnknownExhibit : public Error {
 public:
  explicit UnknownExhibit(int id)
      : Error("unknown exhibit " + std::to_string(id)), id_(id) {}
  int id() const noexcept { return id_; }

 private:
  int id_;
};

class AmbiguousGoal : public Error {
 public:
  explicit AmbiguousGoal(std::vector<int> candidates)
      : Error(describe(candidates)), candidates_(std::move(candidates)) {}
  const std::vector<int>& candidates() const noexcept { return candidates_; }

 private:
  static std::string describe(const std::vector<int>& ids) {
    std::string s = "ambiguous goal, candidates:";
    for (int id : ids) s += " " + std::to_string(id);
    return s;
  }
  std::vector<int> candidates_;
};

class EmptyUtterance : public Error {
 public:
  EmptyUtterance() : Error("empty utterance") {}
};

class BackendError : public Error {
 public:
  using Error::Error;
};

/// The per-call deadline elapsed or the endpoint could not be reached.
class Timeout : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The endpoint answered with a non-success status.
class RemoteError : public BackendError {
 public:
  RemoteError(int status, std::string body)
      : BackendError("remote error " + std::to_string(status) + ": " + body),
        status_(status), body_(std::move(body)) {}
  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

class ParseFailure : public BackendError {
 public:
  explicit ParseFailure(std::vector<std::string> missing)
      : BackendError(describe(missing)), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing_fields() const noexcept { return missing_; }

 private:
  static std::string describe(const std::vector<std::string>& fields) {
    std::string s = "structured response missing fields:";
    for (const auto& f : fields) s += " " + f;
    return s;
  }
  std::vector<std::string> missing_;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class DegenerateSample : public Error {
 public:
  using Error::Error;
};

class SessionClosed : public Error {
 public:
  SessionClosed() : Error("session closed") {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace narraguide
